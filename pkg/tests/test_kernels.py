import numpy as np
import pytest

from gls_lab import _pykernels, kernels
from gls_lab.core_types import NoiseSpec, build_transition
from gls_lab.losses import LossSpec, loss_targets, per_sample_loss
from gls_lab.trainer import MlpModel, loss_and_grad

try:
    from gls_lab import _ckernels
except ImportError:  # pragma: no cover
    _ckernels = None

needs_compiled = pytest.mark.skipif(_ckernels is None, reason="compiled core not built")

H = 1e-5
REL_TOL = 1e-5
EPS = 1e-7
T_ASYM = build_transition(NoiseSpec.binary_asym(0.1, 0.3), 2)
PRIOR = (0.4, 0.6)

FD_SPECS = [
    LossSpec.gls(-2.0),
    LossSpec.gls(0.0),
    LossSpec.gls(0.6),
    LossSpec("backward", transition=T_ASYM),
    LossSpec("forward", transition=T_ASYM),
    LossSpec("complementary"),
    LossSpec("peer", prior=PRIOR),
]


def _problem(dims=(2, 8, 2), n=16, seed=0):
    rng = np.random.default_rng(seed)
    model = MlpModel.init(dims, seed)
    X = rng.normal(size=(n, dims[0]))
    y = rng.integers(0, dims[-1], n)
    return model, X, y


def _oracle_loss(spec, params, dims, X, y):
    """Mean of the scalar reference losses on the numpy forward pass."""
    P = _pykernels.predict_probs(params, dims, X, EPS)
    return float(np.mean([per_sample_loss(spec, p, int(t), prior=PRIOR) for p, t in zip(P, y)]))


def _pattern(params, dims, X):
    # ReLU on/off pattern plus which softmax entries sit below the clamp.
    layers = _pykernels._unpack(params, dims)
    _, pre, s, _, _ = _pykernels._forward(layers, X, EPS)
    return np.concatenate([(z > 0).ravel() for z in pre[:-1]] + [(s < EPS).ravel()])


def fd_max_rel_error(spec, dims=(2, 8, 2), n_checks=50, seed=0):
    """Largest relative error over ``n_checks`` (network, coordinate) draws.

    Draws walk the coordinates of successive independently seeded networks, so
    small networks still yield ``n_checks`` checks.
    """
    worst, checked, net = 0.0, 0, seed
    while checked < n_checks:
        model, X, y = _problem(dims, seed=net)
        dims_a = np.asarray(model.layer_dims)
        loss, g = loss_and_grad(model, X, y, spec, prior=PRIOR)
        # Roundoff of a central difference is about eps * |L| / h; below that scale an
        # exact-zero gradient has no meaningful relative error, so the denominator is floored.
        floor = 10 * np.finfo(float).eps * max(1.0, abs(loss)) / H / REL_TOL
        base = np.array(model.params)
        ref = _pattern(base, dims_a, X)
        for i in np.random.default_rng(net + 100).permutation(base.size):
            plus, minus = base.copy(), base.copy()
            plus[i] += H
            minus[i] -= H
            # Skip coordinates whose stencil straddles a ReLU kink or the clamp boundary.
            if not all(np.array_equal(ref, _pattern(q, dims_a, X)) for q in (plus, minus)):
                continue
            fd = (_oracle_loss(spec, plus, dims_a, X, y) - _oracle_loss(spec, minus, dims_a, X, y)) / (2 * H)
            denom = max(abs(fd), abs(g[i]), floor)
            worst = max(worst, abs(fd - g[i]) / denom)
            checked += 1
            if checked == n_checks:
                break
        net += 1
    return worst, checked


class TestFiniteDifference:
    @pytest.mark.parametrize("spec", FD_SPECS, ids=lambda s: s.describe())
    def test_two_eight_two(self, spec):
        err, checked = fd_max_rel_error(spec)
        assert checked == 50
        assert err <= REL_TOL

    @pytest.mark.parametrize("spec", [LossSpec.gls(-2.0), LossSpec("forward", transition=T_ASYM)],
                             ids=lambda s: s.describe())
    def test_deeper_network(self, spec):
        err, checked = fd_max_rel_error(spec, dims=(2, 16, 16, 2), n_checks=40, seed=3)
        assert checked == 40
        assert err <= REL_TOL

    def test_peer_onehot_prior_is_ce_difference(self):
        model, X, y = _problem(n=1)
        c = 1 - int(y[0])
        _, g_peer = loss_and_grad(model, X, y, LossSpec("peer", prior=tuple(np.eye(2)[c])))
        _, g_y = loss_and_grad(model, X, y, LossSpec.gls(0.0))
        _, g_c = loss_and_grad(model, X, np.array([c]), LossSpec.gls(0.0))
        np.testing.assert_allclose(g_peer, g_y - g_c, rtol=1e-10, atol=1e-14)


class TestBackends:
    @needs_compiled
    @pytest.mark.parametrize("dims", [(2, 2), (2, 8, 2), (5, 16, 16, 3)])
    def test_predict_agree(self, dims):
        model, X, _ = _problem(dims, n=64, seed=2)
        a = _pykernels.predict_probs(model.params, np.asarray(dims), X, EPS)
        b = _ckernels.predict_probs(model.params, np.asarray(dims), X, EPS)
        np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-15)

    @needs_compiled
    @pytest.mark.parametrize("spec", FD_SPECS, ids=lambda s: s.describe())
    def test_loss_grad_agree(self, spec):
        dims = (2, 16, 16, 2)
        model, X, y = _problem(dims, n=128, seed=5)
        W, M = loss_targets(spec, y, 2, prior=PRIOR)
        la, ga = _pykernels.batch_loss_grad(model.params, np.asarray(dims), X, W, M, EPS)
        lb, gb = _ckernels.batch_loss_grad(model.params, np.asarray(dims), X, W, M, EPS)
        assert lb == pytest.approx(la, rel=1e-12, abs=1e-14)
        np.testing.assert_allclose(gb, ga, rtol=1e-10, atol=1e-13)

    @needs_compiled
    def test_clamped_region_agree(self):
        # Large weights saturate the softmax so the clamp is active.
        dims = (2, 4, 2)
        model, X, y = _problem(dims, n=32, seed=6)
        params = np.array(model.params) * 40
        W, M = loss_targets(LossSpec.gls(-2.0), y, 2)
        la, ga = _pykernels.batch_loss_grad(params, np.asarray(dims), X, W, M, EPS)
        lb, gb = _ckernels.batch_loss_grad(params, np.asarray(dims), X, W, M, EPS)
        assert lb == pytest.approx(la, rel=1e-12)
        np.testing.assert_allclose(gb, ga, rtol=1e-10, atol=1e-12)

    def test_selected_backend_is_known(self):
        assert kernels.BACKEND in ("cython", "numpy")

    def test_softmax_shift_invariance(self):
        # Adding a constant to the output bias shifts every logit equally.
        model, X, _ = _problem((2, 8, 3), n=10, seed=1)
        p = np.array(model.params)
        p[-3:] += 123.0
        np.testing.assert_allclose(model.with_params(p).predict_proba(X), model.predict_proba(X), atol=1e-12)

    def test_forward_mixing_rejects_nonpositive(self):
        model, X, y = _problem(n=4)
        M = np.array([[1.0, 0.0], [1.0, 0.0]])
        with pytest.raises(ValueError):
            _pykernels.batch_loss_grad(model.params, np.asarray((2, 8, 2)), X, np.eye(2)[np.ones(4, int)], M, EPS)
