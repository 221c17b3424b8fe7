"""Closed-form smooth rates, decomposition coefficients and label-noise injection."""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .core_types import LabeledDataset, TransitionMatrix
from .errors import GLSError, InvalidRateError


def _dec(x: float) -> Fraction:
    # Rational value of the shortest decimal repr, so 0.3 means 3/10 rather than
    # its binary neighbour; the closed forms below then round only once.
    return Fraction(repr(float(x)))


def r_opt_binary(r_star: float, e: float) -> float:
    """Smooth rate that cancels the global confidence bias under symmetric binary noise ``e``.

    ``(r* - 2e) / (1 - 2e)``, evaluated exactly on the decimal inputs and rounded once.
    """
    if not 0.0 <= e < 0.5:
        raise InvalidRateError(f"r_opt is defined for e in [0, 0.5), got e={e}")
    rs, ee = _dec(r_star), _dec(e)
    return float((rs - 2 * ee) / (1 - 2 * ee))


def r_opt_multiclass(r_star: float, epsilon: float, K: int) -> float:
    """K-class analogue for symmetric noise ``epsilon < (K-1)/K``; equals r_opt_binary at K=2."""
    if K < 2:
        raise GLSError("K must be at least 2")
    if not 0.0 <= epsilon or not K * epsilon < K - 1:
        raise InvalidRateError(f"r_opt needs 0 <= epsilon < (K-1)/K, got epsilon={epsilon}, K={K}")
    rs, eps = _dec(r_star), _dec(epsilon)
    return float(((K - 1) * rs - K * eps) / ((K - 1) - K * eps))


def correction_rate_r_lc(e1: float) -> tuple[float, float]:
    """Return ``(r_LC, factor)`` where ``r_LC = 2 e1 / (2 e1 - 1)`` and ``lambda_LC = e_delta * factor``."""
    if not 0.0 <= e1 < 0.5:
        raise InvalidRateError(f"loss-correction rate needs e1 in [0, 0.5), got {e1}")
    e = _dec(e1)
    return float(2 * e / (2 * e - 1)), float(1 / (1 - 2 * e))


def peer_rate_r_pl(noisy_prior_1: float) -> tuple[float, float]:
    """Return ``(r_PL, lambda_PL) = (2 P(noisy=1), 1 - r_PL)``."""
    if not 0.0 <= noisy_prior_1 <= 1.0:
        raise InvalidRateError(f"prior must lie in [0, 1], got {noisy_prior_1}")
    r_pl = 2.0 * noisy_prior_1
    return r_pl, 1.0 - r_pl


@dataclass(frozen=True)
class DecompositionCoeffs:
    """Coefficients of the noisy-risk decomposition.

    Binary: ``noisy GLS risk = TrueRisk(r*) + lambda1 * M-Inc1 + lambda2 * M-Inc2``
    with ``M-Inc1 = E[ce(1-Y) - ce(Y)]`` and ``M-Inc2 = E_{X,Y=1}[ce(0) - ce(1)]``
    (sub-population expectation).  Two candidate ``lambda1`` forms are kept: the
    one built from ``e1`` and the one built from ``e0``.  Only the ``e0`` form
    makes the decomposition an exact identity when ``e0 != e1`` (see
    ``verify.check_decomposition_binary``); :attr:`lambda1` returns it.

    Multi-class symmetric: ``true_risk_scale = c3 / (1 - r*)`` and
    ``minc1_scale = c4 - c3 r* / ((1 - r*) K)`` multiply ``E[ce(Y*)]`` and
    ``E_X[sum_j ce(j)]`` respectively.
    """

    lambda1_e1_form: float
    lambda1_e0_form: float
    lambda2: float
    true_risk_scale: float = 1.0
    minc1_scale: float = 0.0

    @property
    def lambda1(self) -> float:
        return self.lambda1_e0_form


def decomposition_coeffs_binary(e0: float, e1: float, r: float, r_star: float) -> DecompositionCoeffs:
    for name, v in (("e0", e0), ("e1", e1)):
        if not 0.0 <= v <= 1.0:
            raise InvalidRateError(f"{name} must lie in [0, 1], got {v}")
    if r > 1 or r_star > 1:
        raise InvalidRateError("smooth rates must be <= 1")
    lam_e1 = (e1 - r_star / 2) + (1 - 2 * e1) * r / 2
    lam_e0 = (e0 - r_star / 2) + (1 - 2 * e0) * r / 2
    return DecompositionCoeffs(lam_e1, lam_e0, (e1 - e0) * (1 - r))


def multiclass_constants(epsilon: float, r: float, K: int) -> tuple[float, float, float]:
    """``(eps', c3, c4)`` for symmetric noise: ``eps' = K eps / (K-1)``, ``c3 = (1-r)(1-eps')``,
    ``c4 = ((1-r) eps' + r) / K``."""
    eps_p = K * epsilon / (K - 1)
    c3 = (1 - r) * (1 - eps_p)
    c4 = ((1 - r) * eps_p + r) / K
    return eps_p, c3, c4


def decomposition_coeffs_multiclass(epsilon: float, r: float, r_star: float, K: int) -> DecompositionCoeffs:
    if r_star >= 1:
        raise InvalidRateError("the multi-class decomposition needs r* < 1")
    _, c3, c4 = multiclass_constants(epsilon, r, K)
    true_scale = c3 / (1 - r_star)
    minc1 = c4 - c3 * r_star / ((1 - r_star) * K)
    # Binary-form lambdas are only meaningful at K=2; kept for cross-checking.
    lam = (epsilon - r_star / 2) + (1 - 2 * epsilon) * r / 2 if K == 2 else float("nan")
    return DecompositionCoeffs(lam, lam, 0.0, true_risk_scale=true_scale, minc1_scale=minc1)


def inject_noise(ds: LabeledDataset, T: TransitionMatrix, seed) -> LabeledDataset:
    """Resample each label from row ``T[y]`` by inverse CDF with one uniform draw per sample."""
    if ds.clean_labels is not None:
        raise GLSError("dataset already carries clean labels; noise was injected before")
    if T.num_classes != ds.num_classes:
        raise GLSError(f"transition matrix is {T.num_classes}-class, dataset has K={ds.num_classes}")
    rng = np.random.default_rng(seed)
    u = rng.random(len(ds))
    cdf = np.cumsum(T.entries, axis=1)
    cdf[:, -1] = 1.0
    rows = cdf[ds.labels]
    noisy = (u[:, None] >= rows).sum(axis=1)
    return LabeledDataset(ds.features, noisy, ds.num_classes, clean_labels=ds.labels)
