"""Small ReLU MLP with a softmax head, analytic gradients and a deterministic training loop."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import kernels
from .core_types import EPS_CLAMP, LabeledDataset
from .errors import DivergedTrainingError, GLSError
from .losses import LossSpec, loss_targets

CHECKPOINT_FORMAT = "gls-lab-mlp"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class MlpModel:
    """Layer widths plus one flat parameter vector (see ``_pykernels`` for the layout)."""

    layer_dims: tuple[int, ...]
    params: np.ndarray
    epsilon_clamp: float = EPS_CLAMP
    seed: int | None = None

    def __post_init__(self):
        dims = tuple(int(d) for d in self.layer_dims)
        if len(dims) < 2 or min(dims) < 1 or dims[-1] < 2:
            raise GLSError(f"invalid layer dims {dims}")
        p = np.array(self.params, dtype=np.float64, copy=True)
        if p.shape != (n_params(dims),):
            raise GLSError(f"expected {n_params(dims)} parameters for {dims}, got {p.shape}")
        p.setflags(write=False)
        object.__setattr__(self, "layer_dims", dims)
        object.__setattr__(self, "params", p)

    @classmethod
    def init(cls, layer_dims, seed: int, epsilon_clamp: float = EPS_CLAMP) -> "MlpModel":
        """He-uniform weights ``U(-sqrt(6/fan_in), sqrt(6/fan_in))``, zero biases."""
        dims = tuple(int(d) for d in layer_dims)
        rng = np.random.default_rng(seed)
        chunks = []
        for n_in, n_out in zip(dims[:-1], dims[1:]):
            bound = math.sqrt(6.0 / n_in)
            chunks.append(rng.uniform(-bound, bound, size=n_in * n_out))
            chunks.append(np.zeros(n_out))
        return cls(dims, np.concatenate(chunks), epsilon_clamp, seed)

    @property
    def num_classes(self) -> int:
        return self.layer_dims[-1]

    def layers(self, flat: np.ndarray | None = None) -> list[tuple[np.ndarray, np.ndarray]]:
        """(W, b) views per layer of ``flat`` (defaults to the model's own parameters)."""
        flat = self.params if flat is None else flat
        out, off = [], 0
        for n_in, n_out in zip(self.layer_dims[:-1], self.layer_dims[1:]):
            W = flat[off : off + n_in * n_out].reshape(n_in, n_out)
            off += n_in * n_out
            out.append((W, flat[off : off + n_out]))
            off += n_out
        return out

    def with_params(self, params) -> "MlpModel":
        return replace(self, params=params)

    def predict_proba(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[1] != self.layer_dims[0]:
            raise GLSError(f"input has {X.shape[1]} features, model expects {self.layer_dims[0]}")
        return kernels.predict_probs(self.params, np.asarray(self.layer_dims), X, self.epsilon_clamp)


def n_params(dims) -> int:
    return sum(a * b + b for a, b in zip(dims[:-1], dims[1:]))


def forward(model: MlpModel, x) -> np.ndarray:
    """Prediction for one feature vector: clamped, renormalized softmax."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise GLSError("forward takes a single feature vector; use MlpModel.predict_proba for batches")
    return model.predict_proba(x[None, :])[0]


# --------------------------------------------------------------------------- losses


def _penalty_targets(spec: LossSpec) -> tuple[np.ndarray, np.ndarray] | None:
    if spec.kind != "gls_c":
        return None
    pos = spec.clean_subset.labels == 1
    X = np.asarray(spec.clean_subset.features[pos])
    c = (spec.e1_hat - spec.e0_hat) * (1.0 - spec.r)
    # c * (ce(p,1) - ce(p,0)) == -sum_k w_k log p_k with w = c * (onehot(1) - onehot(0))
    W = np.tile(np.array([-c, c]), (X.shape[0], 1))
    return X, W


def loss_and_grad(model: MlpModel, X, y, spec: LossSpec, prior=None, rng=None):
    """Batch-mean loss under ``spec`` and its exact gradient (flat, same layout as ``params``).

    The GLS-C penalty, when present, is added on the full clean positive subset.
    """
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    y = np.asarray(y, dtype=np.int64)
    if X.shape[0] == 0:
        raise GLSError("empty batch")
    K = model.num_classes
    W, M = loss_targets(spec, y, K, prior=prior, rng=rng)
    dims = np.asarray(model.layer_dims)
    loss, grad = kernels.batch_loss_grad(model.params, dims, X, W, M, model.epsilon_clamp)
    pen = _penalty_targets(spec)
    if pen is not None:
        pl, pg = kernels.batch_loss_grad(model.params, dims, pen[0], pen[1], None, model.epsilon_clamp)
        loss += pl
        grad = grad + pg
    return loss, grad


# --------------------------------------------------------------------------- training


@dataclass(frozen=True)
class OptimizerSpec:
    kind: str = "adam"
    lr: float = 0.1
    beta1: float = 0.9
    beta2: float = 0.999
    eps_adam: float = 1e-8
    momentum: float = 0.9
    nesterov: bool = True
    weight_decay: float = 0.0

    def __post_init__(self):
        if self.kind not in ("adam", "sgd"):
            raise GLSError(f"unknown optimizer {self.kind!r}")
        if not self.lr > 0:
            raise GLSError("learning rate must be positive")

    @classmethod
    def sgd(cls, lr: float = 0.1, momentum: float = 0.9, weight_decay: float = 1e-4, nesterov: bool = True):
        return cls("sgd", lr=lr, momentum=momentum, weight_decay=weight_decay, nesterov=nesterov)


@dataclass(frozen=True)
class TrainConfig:
    """Training recipe. Defaults follow the synthetic-data setting: Adam, lr 0.1 decayed
    by 0.1 every 40 epochs, 200 epochs, batch size 128, two hidden ReLU layers."""

    loss: LossSpec = field(default_factory=LossSpec)
    epochs: int = 200
    batch_size: int = 128
    optimizer: OptimizerSpec = field(default_factory=OptimizerSpec)
    lr_decay_every: int = 40
    lr_decay_factor: float = 0.1
    seed: int = 0
    hidden: tuple[int, ...] = (16, 16)
    warmup: str | None = None
    track_metrics: bool = True

    def __post_init__(self):
        if self.epochs < 1:
            raise GLSError("epochs must be >= 1")
        if self.batch_size < 1:
            raise GLSError("batch_size must be >= 1")

    def lr_at(self, epoch: int) -> float:
        if self.lr_decay_every <= 0:
            return self.optimizer.lr
        return self.optimizer.lr * self.lr_decay_factor ** (epoch // self.lr_decay_every)


@dataclass
class TrainReport:
    train_loss: list[float]
    train_accuracy: list[float]
    test_accuracy: list[float]
    expected_mc: list[float]
    model: MlpModel

    @property
    def final_test_accuracy(self) -> float:
        return self.test_accuracy[-1]


class _Adam:
    def __init__(self, n, opt: OptimizerSpec):
        self.o = opt
        self.m = np.zeros(n)
        self.v = np.zeros(n)
        self.t = 0

    def step(self, w, g, lr):
        o = self.o
        if o.weight_decay:
            g = g + o.weight_decay * w
        self.t += 1
        self.m = o.beta1 * self.m + (1 - o.beta1) * g
        self.v = o.beta2 * self.v + (1 - o.beta2) * g * g
        mhat = self.m / (1 - o.beta1**self.t)
        vhat = self.v / (1 - o.beta2**self.t)
        return w - lr * mhat / (np.sqrt(vhat) + o.eps_adam)


class _Sgd:
    def __init__(self, n, opt: OptimizerSpec):
        self.o = opt
        self.buf = np.zeros(n)

    def step(self, w, g, lr):
        o = self.o
        if o.weight_decay:
            g = g + o.weight_decay * w
        self.buf = o.momentum * self.buf + g
        d = g + o.momentum * self.buf if o.nesterov else self.buf
        return w - lr * d


def _epoch_rng(seed: int, epoch: int, stream: int) -> np.random.Generator:
    return np.random.default_rng([int(seed), int(epoch), int(stream)])


def _noisy_prior(labels, K) -> np.ndarray:
    return np.bincount(labels, minlength=K) / len(labels)


def _accuracy(P, labels) -> float:
    return float(np.mean(np.argmax(P, axis=1) == labels))


def _mean_confidence(P, labels) -> float:
    K = P.shape[1]
    n = np.arange(len(labels))
    py = P[n, labels]
    return float(np.mean(py - (1.0 - py) / (K - 1)))


def train(ds_train: LabeledDataset, ds_test: LabeledDataset | None, cfg: TrainConfig) -> TrainReport:
    """Train from the config seed. Same config and data give the same report on a given backend.

    Test accuracy and expected model confidence are measured against the test
    set's clean labels when it carries them.
    """
    if len(ds_train) == 0:
        raise GLSError("empty training set")
    K = ds_train.num_classes
    if ds_test is not None and (ds_test.dim != ds_train.dim or ds_test.num_classes != K):
        raise GLSError("train and test sets disagree on feature dimension or class count")
    dims = (ds_train.dim, *cfg.hidden, K)
    if cfg.warmup:
        model = load_checkpoint(cfg.warmup)
        if model.layer_dims != dims:
            raise GLSError(f"warm-up checkpoint has dims {model.layer_dims}, expected {dims}")
    else:
        model = MlpModel.init(dims, cfg.seed)

    X = np.asarray(ds_train.features)
    y = np.asarray(ds_train.labels)
    prior = None
    if cfg.loss.kind == "peer" and cfg.loss.peer_form == "expected" and cfg.loss.prior is None:
        prior = _noisy_prior(y, K)
    opt = (_Adam if cfg.optimizer.kind == "adam" else _Sgd)(model.params.size, cfg.optimizer)
    w = np.array(model.params)
    N, B = len(y), cfg.batch_size
    eps = model.epsilon_clamp
    dims_arr = np.asarray(dims)
    if ds_test is not None:
        test_labels = ds_test.clean_labels if ds_test.clean_labels is not None else ds_test.labels
        Xt = np.asarray(ds_test.features)

    penalty = _penalty_targets(cfg.loss)
    rep = TrainReport([], [], [], [], model)
    for epoch in range(cfg.epochs):
        lr = cfg.lr_at(epoch)
        order = _epoch_rng(cfg.seed, epoch, 0).permutation(N)
        peer_rng = _epoch_rng(cfg.seed, epoch, 1)
        total = 0.0
        for start in range(0, N, B):
            idx = order[start : start + B]
            Wt, M = loss_targets(cfg.loss, y[idx], K, prior=prior, rng=peer_rng)
            loss, g = kernels.batch_loss_grad(w, dims_arr, X[idx], Wt, M, eps)
            if penalty is not None:
                pl, pg = kernels.batch_loss_grad(w, dims_arr, penalty[0], penalty[1], None, eps)
                loss += pl
                g = g + pg
            if not math.isfinite(loss) or not np.all(np.isfinite(g)):
                raise DivergedTrainingError(epoch, loss)
            total += loss * len(idx)
            w = opt.step(w, g, lr)
        rep.train_loss.append(total / N)
        if cfg.track_metrics or epoch == cfg.epochs - 1:
            Ptr = kernels.predict_probs(w, dims_arr, X, eps)
            rep.train_accuracy.append(_accuracy(Ptr, y))
            if ds_test is not None:
                Pte = kernels.predict_probs(w, dims_arr, Xt, eps)
                rep.test_accuracy.append(_accuracy(Pte, test_labels))
                rep.expected_mc.append(_mean_confidence(Pte, test_labels))
            else:
                rep.test_accuracy.append(float("nan"))
                rep.expected_mc.append(float("nan"))
        else:
            for seq in (rep.train_accuracy, rep.test_accuracy, rep.expected_mc):
                seq.append(float("nan"))
    rep.model = MlpModel(dims, w, eps, cfg.seed)
    return rep


def predict_and_accuracy(model: MlpModel, ds: LabeledDataset, use_clean: bool = True):
    """Argmax predictions (ties go to the lowest class index) and accuracy.

    Accuracy is measured against ``ds.clean_labels`` when present and
    ``use_clean`` is set, otherwise against ``ds.labels``.
    """
    if len(ds) == 0:
        raise GLSError("empty dataset")
    P = model.predict_proba(ds.features)
    pred = np.argmax(P, axis=1)
    ref = ds.clean_labels if (use_clean and ds.clean_labels is not None) else ds.labels
    return pred, float(np.mean(pred == ref))


# --------------------------------------------------------------------------- checkpoints


def save_checkpoint(model: MlpModel, path) -> None:
    """JSON record; Python float repr round-trips float64 exactly."""
    rec = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "layer_dims": list(model.layer_dims),
        "epsilon_clamp": model.epsilon_clamp,
        "seed": model.seed,
        "params": [float(v) for v in model.params],
    }
    Path(path).write_text(json.dumps(rec))


def load_checkpoint(path) -> MlpModel:
    rec = json.loads(Path(path).read_text())
    if rec.get("format") != CHECKPOINT_FORMAT:
        raise GLSError(f"{path} is not a {CHECKPOINT_FORMAT} checkpoint")
    if rec.get("version") != CHECKPOINT_VERSION:
        raise GLSError(f"unsupported checkpoint version {rec.get('version')!r}")
    return MlpModel(tuple(rec["layer_dims"]), np.array(rec["params"], dtype=np.float64), rec["epsilon_clamp"], rec["seed"])
