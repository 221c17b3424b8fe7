"""Numerical certification of the smoothing identities.

Each check evaluates one side through the library's loss functions and the
other side through independent closed-form algebra on a matrix of
cross-entropies, then reports the largest absolute residual.  Risk-level
checks use exact expectations over the transition matrix (no label sampling),
so their tolerances are pure floating-point bounds.

Expectation conventions on a finite context with sample weights ``w_i``:

* clean risk ``E[g] = sum_i w_i g(x_i, y_i)``
* noisy risk ``E[g] = sum_i w_i sum_j T[y_i, j] g(x_i, j)``
* sub-population ``E_{X,Y=c}[g] = sum_i w_i 1{y_i = c} g(x_i)`` (prior weight included)
* noisy sub-population ``E_{X,noisy=c}[g] = sum_i w_i T[y_i, c] g(x_i)``
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import losses as L
from .core_types import EPS_CLAMP, NoiseSpec, TransitionMatrix, build_transition, make_gls_label
from .errors import GLSError
from .noise_math import (
    correction_rate_r_lc,
    decomposition_coeffs_binary,
    decomposition_coeffs_multiclass,
    multiclass_constants,
    peer_rate_r_pl,
    r_opt_binary,
    r_opt_multiclass,
)

EXACT_TOL = 1e-10
PROB_FLOOR = 1e-3


@dataclass(frozen=True)
class IdentityReport:
    name: str
    max_abs_residual: float
    trials: int
    tolerance: float
    details: dict = field(default_factory=dict, compare=False)

    @property
    def passed(self) -> bool:
        return bool(self.max_abs_residual <= self.tolerance)

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{self.name:<48} residual={self.max_abs_residual:.3e} tol={self.tolerance:.1e} {status}"


def random_probs(rng: np.random.Generator, n: int, K: int, floor: float = PROB_FLOOR) -> np.ndarray:
    """Random rows of the simplex with every entry at least ``floor`` (clear of the clamp)."""
    return floor + (1.0 - K * floor) * rng.dirichlet(np.ones(K), size=n)


@dataclass(frozen=True)
class AnalyticRiskContext:
    """Fixed predictions on a finite weighted sample with clean labels and a transition matrix."""

    probs: np.ndarray
    labels: np.ndarray
    transition: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        P = np.atleast_2d(np.asarray(self.probs, dtype=float))
        y = np.asarray(self.labels, dtype=np.int64)
        T = np.asarray(self.transition.entries if isinstance(self.transition, TransitionMatrix) else self.transition, dtype=float)
        w = np.asarray(self.weights, dtype=float)
        N, K = P.shape
        if y.shape != (N,) or T.shape != (K, K) or w.shape != (N,):
            raise GLSError("context shapes disagree")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
            raise GLSError("sample weights must be nonnegative and sum to 1")
        for name, v in (("probs", P), ("labels", y), ("transition", T), ("weights", w)):
            v = v.copy()
            v.setflags(write=False)
            object.__setattr__(self, name, v)

    @classmethod
    def random(cls, n: int, K: int, transition, seed) -> "AnalyticRiskContext":
        rng = np.random.default_rng(seed)
        P = random_probs(rng, n, K)
        y = rng.integers(0, K, n)
        # Make sure every class is present so every sub-population is nonempty.
        y[:K] = np.arange(K)
        return cls(P, y, transition, np.full(n, 1.0 / n))

    @property
    def n(self) -> int:
        return self.labels.shape[0]

    @property
    def num_classes(self) -> int:
        return self.probs.shape[1]

    def with_transition(self, T) -> "AnalyticRiskContext":
        return AnalyticRiskContext(self.probs, self.labels, T, self.weights)

    def ce_matrix(self) -> np.ndarray:
        """``C[i, j] = -log p_i[j]`` (same clamp as the losses)."""
        return -np.log(np.clip(self.probs, EPS_CLAMP, 1.0))

    def clean_mean(self, g) -> float:
        return float(np.dot(self.weights, g))

    def noisy_mean(self, G) -> float:
        """``G[i, j]`` is the per-sample value when the observed label is ``j``."""
        return float(np.dot(self.weights, (self.transition[self.labels] * G).sum(axis=1)))

    def clean_sub(self, c: int, g) -> float:
        return float(np.dot(self.weights * (self.labels == c), g))

    def noisy_sub(self, c: int, g) -> float:
        return float(np.dot(self.weights * self.transition[self.labels, c], g))

    def noisy_prior(self) -> np.ndarray:
        return self.weights @ self.transition[self.labels]

    def reweighted_for_noisy_prior(self, prior) -> "AnalyticRiskContext":
        """Rescale the weights per clean class so the noisy label marginal equals ``prior``."""
        prior = np.asarray(prior, dtype=float)
        clean = np.linalg.solve(self.transition.T, prior)
        if np.any(clean < -1e-12):
            raise GLSError(f"noisy prior {prior} is unreachable under this transition matrix")
        clean = np.maximum(clean, 0.0)
        w = np.zeros(self.n)
        for c in range(self.num_classes):
            m = self.labels == c
            if clean[c] > 0:
                if not m.any():
                    raise GLSError(f"class {c} has no samples to carry prior mass")
                w[m] = self.weights[m] / self.weights[m].sum() * clean[c]
        return AnalyticRiskContext(self.probs, self.labels, self.transition, w / w.sum())


def _per_pair(ctx: AnalyticRiskContext, fn: Callable[[np.ndarray, int], float]) -> np.ndarray:
    """Evaluate ``fn(p_i, j)`` for every sample and every candidate label."""
    K = ctx.num_classes
    return np.array([[fn(p, j) for j in range(K)] for p in ctx.probs])


def _per_sample(ctx: AnalyticRiskContext, fn) -> np.ndarray:
    return np.array([fn(p, int(y)) for p, y in zip(ctx.probs, ctx.labels)])


def _binary_T(e0: float, e1: float) -> np.ndarray:
    return np.array([[1.0 - e0, e0], [e1, 1.0 - e1]])


# --------------------------------------------------------------------------- pointwise


def check_negative_reflection(trials: int = 10_000, seed=0, tol: float = EXACT_TOL) -> IdentityReport:
    """Negative smoothing as a reflection: ``gls(-r) = 2 ce - gls(r)`` for r in [0, 1]."""
    if trials < 1:
        raise GLSError("trials must be >= 1")
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(trials):
        K = int(rng.integers(2, 11))
        p = random_probs(rng, 1, K)[0]
        y = int(rng.integers(0, K))
        r = float(rng.random())
        lhs = L.gls_loss(p, y, -r)
        rhs = 2.0 * L.ce(p, y) - L.gls_loss(p, y, r)
        worst = max(worst, abs(lhs - rhs))
    return IdentityReport("negative_reflection", worst, trials, tol)


def check_binary_linearity(trials: int = 2_000, seed=0, tol: float = EXACT_TOL) -> IdentityReport:
    """Soft-label cross-entropy against the smoothed label equals the two-term binary form
    and the general linear form ``(1-r) ce(y) + (r/K) sum_j ce(j)``."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(trials):
        p = random_probs(rng, 1, 2)[0]
        y = int(rng.integers(0, 2))
        r = float(rng.uniform(-10.0, 1.0))
        soft = L.ce_soft(p, make_gls_label(y, r, 2))
        logs = np.log(p)
        linear = -(1 - r) * logs[y] - (r / 2) * logs.sum()
        worst = max(worst, abs(soft - L.gls_loss_binary_pair(p, y, r)), abs(soft - linear))
    return IdentityReport("binary_linearity", worst, trials, tol)


def check_backward_symmetric(e: float, trials: int = 500, seed=0, tol: float = EXACT_TOL) -> IdentityReport:
    """Symmetric noise: backward correction equals smoothing at the loss-correction rate, pointwise."""
    T = build_transition(NoiseSpec.symmetric(e), 2)
    r_lc, _ = correction_rate_r_lc(e)
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(trials):
        p = random_probs(rng, 1, 2)[0]
        y = int(rng.integers(0, 2))
        worst = max(worst, abs(L.backward_loss(p, y, T) - L.gls_loss(p, y, r_lc)))
    return IdentityReport(f"backward_symmetric_pointwise[e={e:g}]", worst, trials, tol, {"r_lc": r_lc})


# --------------------------------------------------------------------------- loss correction


def check_loss_correction(e0: float, e1: float, ctx: AnalyticRiskContext, tol: float = EXACT_TOL) -> IdentityReport:
    """Risk-level link between backward correction and smoothing at ``r_LC``, as stated.

    Certifies ``E_noisy[backward] = E_noisy[gls(r_LC)] + lambda_LC * E_{X,Y=1}[ce(1) - ce(0)]``.
    ``details`` also carries the residuals of the companion identities
    (backward correction is unbiased; the bias term taken on ``Y=0``), which
    :func:`loss_correction_reports` reports separately.
    """
    if not e0 + e1 < 1:
        raise GLSError("need e0 + e1 < 1")
    if ctx.num_classes != 2:
        raise GLSError("loss-correction identity is binary")
    T = build_transition(NoiseSpec.binary_asym(e0, e1), 2)
    ctx = ctx.with_transition(T.entries)
    r_lc, factor = correction_rate_r_lc(e1)
    lam = (e1 - e0) * factor
    C = ctx.ce_matrix()

    backward = ctx.noisy_mean(_per_pair(ctx, lambda p, j: L.backward_loss(p, j, T)))
    gls_noisy = ctx.noisy_mean(_per_pair(ctx, lambda p, j: L.gls_loss(p, j, r_lc)))
    clean_ce = ctx.clean_mean(C[np.arange(ctx.n), ctx.labels])
    diff10 = C[:, 1] - C[:, 0]
    bias_y1 = ctx.clean_sub(1, diff10)
    bias_y0 = ctx.clean_sub(0, diff10)

    literal = abs(backward - (gls_noisy + lam * bias_y1))
    details = {
        "r_lc": r_lc,
        "lambda_lc": lam,
        "backward_minus_clean_ce": backward - clean_ce,
        "bias_on_y0_residual": abs(backward - (gls_noisy + lam * bias_y0)),
        "literal_residual": literal,
    }
    return IdentityReport(f"loss_correction_as_stated[e0={e0:g},e1={e1:g}]", literal, ctx.n, tol, details)


def loss_correction_reports(e0: float, e1: float, ctx: AnalyticRiskContext, tol: float = EXACT_TOL):
    """The stated identity plus the two companion identities that hold exactly."""
    rep = check_loss_correction(e0, e1, ctx, tol)
    d = rep.details
    tag = f"[e0={e0:g},e1={e1:g}]"
    return [
        rep,
        IdentityReport(f"backward_unbiased{tag}", abs(d["backward_minus_clean_ce"]), ctx.n, tol, d),
        IdentityReport(f"loss_correction_bias_on_y0{tag}", d["bias_on_y0_residual"], ctx.n, tol, d),
    ]


# --------------------------------------------------------------------------- complementary limit


def complementary_residuals(p_samples, labels, r_sequence) -> np.ndarray:
    """Per r: max over samples of ``|gls(p, y, r) / (1 - r/2) - (ce(y) - ce(1-y))|``."""
    out = []
    for r in r_sequence:
        worst = 0.0
        for p, y in zip(p_samples, labels):
            normalized = L.gls_loss(p, int(y), r) / (1.0 - r / 2.0)
            worst = max(worst, abs(normalized - L.complementary_loss(p, int(y))))
        out.append(worst)
    return np.array(out)


def check_complementary_limit(p_samples, r_sequence, labels=None, tol: float | None = None) -> IdentityReport:
    """Normalized smoothing converges to the complementary-label loss as r -> -inf.

    The exact residual is ``2 ce(p, 1-y) / (2 - r)``, so it is bounded by
    ``4 logRange / |r|`` with ``logRange = max |log p|`` and shrinks
    monotonically along a decreasing ``r_sequence``. The report passes when
    both hold; ``max_abs_residual`` is the worst ratio of residual to bound,
    so the tolerance is 1 unless ``tol`` is given, in which case it applies
    to the raw residual at the last (most negative) rate.
    """
    P = np.atleast_2d(np.asarray(p_samples, dtype=float))
    r_seq = np.asarray(r_sequence, dtype=float)
    if np.any(np.diff(r_seq) >= 0) or np.any(r_seq > -10):
        raise GLSError("r_sequence must be strictly decreasing and <= -10")
    y = np.zeros(len(P), dtype=np.int64) if labels is None else np.asarray(labels, dtype=np.int64)
    res = complementary_residuals(P, y, r_seq)
    log_range = float(np.max(np.abs(np.log(np.clip(P, EPS_CLAMP, 1.0)))))
    bounds = 4.0 * max(log_range, 1e-300) / np.abs(r_seq)
    monotone = bool(np.all(np.diff(res) <= 0))
    details = {"residuals": res.tolist(), "bounds": bounds.tolist(), "monotone": monotone}
    if tol is not None:
        worst = float(res[-1]) if monotone else math.inf
        return IdentityReport(f"complementary_limit[r={r_seq[-1]:g}]", worst, len(P), tol, details)
    ratio = float(np.max(res / bounds)) if monotone else math.inf
    return IdentityReport("complementary_rate_bound", ratio, len(P) * len(r_seq), 1.0, details)


# --------------------------------------------------------------------------- peer loss


def check_peer(ctx: AnalyticRiskContext, noisy_prior=None, tol: float = EXACT_TOL) -> IdentityReport:
    """Peer loss (peer label integrated out) versus smoothing at ``r_PL = 2 P(noisy = 1)``.

    Certifies ``E[peer] = E[ce(noisy) - gls(noisy, r_PL)] + lambda_PL * E_{X,noisy=1}[ce(1) - ce(0)]``
    and, when the noisy prior is 1/2, ``E[peer] = E[(ce(noisy) - ce(1 - noisy)) / 2]``.
    ``noisy_prior`` (probability of label 1), if given, reweights the context to reach it.
    """
    if ctx.num_classes != 2:
        raise GLSError("peer identity is binary")
    if noisy_prior is not None:
        ctx = ctx.reweighted_for_noisy_prior([1.0 - noisy_prior, noisy_prior])
    prior = ctx.noisy_prior()
    r_pl, lam = peer_rate_r_pl(float(prior[1]))
    C = ctx.ce_matrix()

    peer = ctx.noisy_mean(_per_pair(ctx, lambda p, j: L.peer_loss_expected(p, j, prior)))
    # r_PL exceeds 1 when the noisy prior of class 1 is above 1/2; the smoothed
    # target then has a negative entry, so evaluate it as a raw soft target.
    def smoothed(p, j):
        return L.ce_soft(p, (1.0 - r_pl) * np.eye(2)[j] + r_pl / 2.0)

    gls_part = ctx.noisy_mean(C - _per_pair(ctx, smoothed))
    bias = ctx.noisy_sub(1, C[:, 1] - C[:, 0])
    main = abs(peer - (gls_part + lam * bias))
    details = {"noisy_prior_1": float(prior[1]), "r_pl": r_pl, "lambda_pl": lam, "bias_pl": bias}
    worst = main
    if abs(prior[1] - 0.5) <= 1e-12:
        half_cl = ctx.noisy_mean(_per_pair(ctx, lambda p, j: 0.5 * L.complementary_loss(p, j)))
        details["half_complementary_residual"] = abs(peer - half_cl)
        worst = max(worst, details["half_complementary_residual"])
    return IdentityReport(f"peer_identity[prior={float(prior[1]):.3g}]", worst, ctx.n, tol, details)


# --------------------------------------------------------------------------- decompositions


def check_decomposition_binary(ctx: AnalyticRiskContext, e0: float, e1: float, r: float, r_star: float,
                               tol: float = EXACT_TOL) -> IdentityReport:
    """Noisy smoothing risk = TrueRisk(r*) + lambda1 * M-Inc1 + lambda2 * M-Inc2.

    Both candidate ``lambda1`` forms are evaluated. The report passes when the
    winning form's residual is within tolerance and, for asymmetric rates, the
    other form fails (exactly one valid form). ``details['selected_form']``
    names the winner.
    """
    if ctx.num_classes != 2:
        raise GLSError("binary decomposition needs K = 2")
    ctx = ctx.with_transition(_binary_T(e0, e1))
    C = ctx.ce_matrix()
    idx = np.arange(ctx.n)
    ce_y, ce_other = C[idx, ctx.labels], C[idx, 1 - ctx.labels]

    lhs = ctx.noisy_mean(_per_pair(ctx, lambda p, j: L.gls_loss(p, j, r)))
    true_risk = ctx.clean_mean((1 - r_star / 2) * ce_y + (r_star / 2) * ce_other)
    minc1 = ctx.clean_mean(ce_other - ce_y)
    minc2 = ctx.clean_sub(1, C[:, 0] - C[:, 1])
    co = decomposition_coeffs_binary(e0, e1, r, r_star)
    res = {
        "e0_form": abs(lhs - (true_risk + co.lambda1_e0_form * minc1 + co.lambda2 * minc2)),
        "e1_form": abs(lhs - (true_risk + co.lambda1_e1_form * minc1 + co.lambda2 * minc2)),
    }
    passing = sorted(k for k, v in res.items() if v <= tol)
    selected = min(res, key=res.get)
    details = {"residuals": res, "passing_forms": passing, "selected_form": selected,
               "lambda1": co.lambda1, "lambda2": co.lambda2, "lhs": lhs, "true_risk": true_risk}
    worst = res[selected]
    if e0 != e1 and len(passing) != 1:
        worst = math.inf  # "exactly one form" violated
    if e0 == e1 and 0 <= e0 < 0.5:
        r_opt = r_opt_binary(r_star, e0)
        co_opt = decomposition_coeffs_binary(e0, e1, r_opt, r_star)
        lhs_opt = ctx.noisy_mean(_per_pair(ctx, lambda p, j: L.gls_loss(p, j, r_opt)))
        details.update(r_opt=r_opt, lambda1_at_r_opt=co_opt.lambda1, r_opt_residual=abs(lhs_opt - true_risk))
        worst = max(worst, abs(co_opt.lambda1), abs(lhs_opt - true_risk))
    name = f"binary_decomposition[e0={e0:g},e1={e1:g},r={r:g},r*={r_star:g}]"
    return IdentityReport(name, worst, ctx.n, tol, details)


def check_decomposition_multiclass(ctx: AnalyticRiskContext, epsilon: float, r: float, r_star: float, K: int,
                                   tol: float = EXACT_TOL) -> IdentityReport:
    """Symmetric K-class noise: noisy smoothing risk is an affine mix of the clean risk
    against the ``r*``-smoothed label and ``E_X[sum_j ce(j)]``; at ``r_opt`` the second
    coefficient vanishes and the ratio to the clean risk is the constant ``c3 / (1 - r*)``."""
    if ctx.num_classes != K:
        raise GLSError(f"context has K={ctx.num_classes}, expected {K}")
    T = build_transition(NoiseSpec.symmetric(epsilon), K)
    ctx = ctx.with_transition(T.entries)
    C = ctx.ce_matrix()
    idx = np.arange(ctx.n)
    sum_ce = C.sum(axis=1)

    def parts(rate):
        lhs = ctx.noisy_mean(_per_pair(ctx, lambda p, j: L.gls_loss(p, j, rate)))
        clean_star = ctx.clean_mean((1 - r_star) * C[idx, ctx.labels] + (r_star / K) * sum_ce)
        co = decomposition_coeffs_multiclass(epsilon, rate, r_star, K)
        rhs = co.true_risk_scale * clean_star + co.minc1_scale * ctx.clean_mean(sum_ce)
        return lhs, rhs, clean_star, co

    lhs, rhs, _, co = parts(r)
    worst = abs(lhs - rhs)
    r_opt = r_opt_multiclass(r_star, epsilon, K)
    lhs_o, rhs_o, clean_o, co_o = parts(r_opt)
    _, c3, _ = multiclass_constants(epsilon, r_opt, K)
    ratio_res = abs(lhs_o / clean_o - c3 / (1 - r_star))
    details = {"residual": worst, "r_opt": r_opt, "minc1_scale_at_r_opt": co_o.minc1_scale,
               "ratio_residual_at_r_opt": ratio_res, "true_risk_scale": co.true_risk_scale,
               "minc1_scale": co.minc1_scale}
    worst = max(worst, abs(lhs_o - rhs_o), abs(co_o.minc1_scale), ratio_res)
    return IdentityReport(f"multiclass_decomposition[K={K},eps={epsilon:g},r={r:g},r*={r_star:g}]", worst, ctx.n, tol, details)


def check_clean_decomposition(ctx: AnalyticRiskContext, r: float, tol: float = EXACT_TOL) -> IdentityReport:
    """Clean binary risk: ``E[gls(r)] = E[ce] + (r/2) E[ce(1-Y) - ce(Y)]``."""
    if ctx.num_classes != 2:
        raise GLSError("clean decomposition is binary")
    C = ctx.ce_matrix()
    idx = np.arange(ctx.n)
    lhs = ctx.clean_mean(_per_sample(ctx, lambda p, y: L.gls_loss(p, y, r)))
    rhs = ctx.clean_mean(C[idx, ctx.labels]) + (r / 2) * ctx.clean_mean(C[idx, 1 - ctx.labels] - C[idx, ctx.labels])
    return IdentityReport(f"clean_decomposition[r={r:g}]", abs(lhs - rhs), ctx.n, tol)


# --------------------------------------------------------------------------- suite


def run_all(seed=0) -> list[IdentityReport]:
    """The full identity suite with the settings of the acceptance checklist."""
    reports = [check_negative_reflection(10_000, seed), check_binary_linearity(2_000, seed)]
    reports += [check_backward_symmetric(e, seed=seed) for e in (0.1, 0.25, 0.4)]
    ctx2 = AnalyticRiskContext.random(64, 2, np.eye(2), seed)
    for e0, e1 in ((0.1, 0.3), (0.0, 0.4)):
        reports += loss_correction_reports(e0, e1, ctx2)
    ctx_peer = AnalyticRiskContext.random(32, 2, _binary_T(0.1, 0.3), seed)
    reports += [check_peer(ctx_peer, 0.5), check_peer(ctx_peer, 0.7), check_peer(ctx_peer)]
    reports += [check_clean_decomposition(ctx2, r) for r in (0.0, -2.0, 0.6)]
    for e0, e1, r, rs in ((0.1, 0.3, 0.0, 0.0), (0.0, 0.4, -0.5, 0.2), (0.2, 0.2, -1.0 / 3.0, 0.2), (0.1, 0.3, 0.4, 0.1)):
        reports.append(check_decomposition_binary(ctx2, e0, e1, r, rs))
    for K, eps, r, rs in ((2, 0.2, -0.5, 0.2), (3, 0.3, 0.2, 0.1), (10, 0.4, -0.8, 0.0)):
        ctxK = AnalyticRiskContext.random(64, K, np.eye(K), seed + K)
        reports.append(check_decomposition_multiclass(ctxK, eps, r, rs, K))
    uniform = np.full((1, 2), 0.5)
    reports.append(check_complementary_limit(uniform, [-10.0, -1e3], tol=2e-3))
    reports.append(check_complementary_limit(uniform, [-10.0, -1e3, -1e6], tol=2e-6))
    rng = np.random.default_rng(seed)
    reports.append(check_complementary_limit(random_probs(rng, 64, 2), [-10.0, -1e2, -1e3, -1e4, -1e6],
                                             labels=rng.integers(0, 2, 64)))
    return reports


def main_lines(seed=0) -> tuple[list[str], bool]:
    t0 = time.perf_counter()
    reps = run_all(seed)
    lines = [r.line() for r in reps]
    for r in reps:
        if "selected_form" in r.details:
            lines.append(f"  {r.name}: selected lambda1 form = {r.details['selected_form']}")
    lines.append(f"{len(reps)} identities, {sum(r.passed for r in reps)} passed, {time.perf_counter() - t0:.2f}s")
    return lines, all(r.passed for r in reps)
