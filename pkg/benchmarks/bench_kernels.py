"""Compare the compiled and numpy MLP kernels on the training hot loop.

Usage: python benchmarks/bench_kernels.py [--repeat N]
"""

import argparse
import timeit

import numpy as np

from gls_lab import _pykernels
from gls_lab.losses import LossSpec, loss_targets
from gls_lab.trainer import MlpModel

try:
    from gls_lab import _ckernels
except ImportError:
    _ckernels = None

EPS = 1e-7


def cases():
    for dims, batch in (((2, 16, 16, 2), 128), ((2, 16, 16, 2), 1024), ((20, 64, 64, 10), 128)):
        rng = np.random.default_rng(0)
        model = MlpModel.init(dims, 0)
        X = rng.normal(size=(batch, dims[0]))
        y = rng.integers(0, dims[-1], batch)
        W, M = loss_targets(LossSpec.gls(-2.0), y, dims[-1])
        yield dims, batch, model.params, np.asarray(dims), X, W, M


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--number", type=int, default=200)
    a = ap.parse_args(argv)
    backends = [("numpy", _pykernels)] + ([("cython", _ckernels)] if _ckernels else [])
    print(f"{'network':<18}{'batch':>7}{'backend':>9}{'grad us':>11}{'predict us':>12}{'speedup':>9}")
    for dims, batch, params, d, X, W, M in cases():
        base = None
        for name, mod in backends:
            grad = min(timeit.repeat(lambda: mod.batch_loss_grad(params, d, X, W, M, EPS),
                                     repeat=a.repeat, number=a.number)) / a.number * 1e6
            pred = min(timeit.repeat(lambda: mod.predict_probs(params, d, X, EPS),
                                     repeat=a.repeat, number=a.number)) / a.number * 1e6
            base = base or grad
            print(f"{'-'.join(map(str, dims)):<18}{batch:>7}{name:>9}{grad:>11.1f}{pred:>12.1f}{base / grad:>8.2f}x")
    if _ckernels is None:
        print("compiled core not built; only the numpy backend was timed")


if __name__ == "__main__":
    main()
