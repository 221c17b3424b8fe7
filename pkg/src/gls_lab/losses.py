"""Per-sample losses on probability vectors.

Every loss except forward correction is linear in ``log p``: it can be written
as ``-sum_k w_k log p_k`` for a target weight vector ``w`` that may be negative
or not sum to one.  :func:`loss_targets` exposes that representation so the
trainer can use a single fused kernel for all of them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core_types import (
    EPS_CLAMP,
    LabeledDataset,
    SoftLabel,
    TransitionMatrix,
    _check_label,
    _check_rate,
    make_gls_label,
    normalized_extreme_label,
)
from .errors import EmptySubsetError, GLSError, InvalidRateError, LossDomainError

LOSS_KINDS = ("gls", "backward", "forward", "complementary", "peer", "gls_c")


def _log_clamped(p) -> np.ndarray:
    return np.log(np.clip(np.asarray(p, dtype=float), EPS_CLAMP, 1.0))


def ce(p, y: int) -> float:
    """Hard-label cross-entropy ``-log p_y`` with the shared clamp."""
    p = np.asarray(p, dtype=float)
    y = _check_label(y, p.shape[0])
    return float(-math.log(min(max(p[y], EPS_CLAMP), 1.0)))


def ce_soft(p, q) -> float:
    """Cross-entropy against an arbitrary target vector ``q`` (SoftLabel or raw array).

    Linear in ``q``; negative target entries give a loss that can be negative.
    """
    p = np.asarray(p, dtype=float)
    q = np.asarray(q.weights if isinstance(q, SoftLabel) else q, dtype=float)
    if p.shape != q.shape:
        raise ValueError(f"length mismatch: prediction {p.shape} vs target {q.shape}")
    return float(-np.dot(q, _log_clamped(p)))


def gls_loss(p, y: int, r: float, K: int | None = None) -> float:
    """``(1 - r) ce(p, y) + (r / K) sum_j ce(p, j)``."""
    p = np.asarray(p, dtype=float)
    K = p.shape[0] if K is None else K
    if K != p.shape[0]:
        raise ValueError(f"K={K} does not match prediction length {p.shape[0]}")
    y = _check_label(y, K)
    r = _check_rate(r)
    if math.isinf(r):
        raise InvalidRateError("use normalized_extreme_loss for r = -inf")
    logs = _log_clamped(p)
    return float(-(1.0 - r) * logs[y] - (r / K) * logs.sum())


def gls_loss_binary_pair(p, y: int, r: float) -> float:
    """Binary two-term form ``(1 - r/2) ce(p, y) + (r/2) ce(p, 1 - y)``."""
    if len(p) != 2:
        raise GLSError("two-term form is binary only")
    r = _check_rate(r)
    return (1.0 - r / 2) * ce(p, y) + (r / 2) * ce(p, 1 - y)


def normalized_extreme_loss(p, y: int) -> float:
    """Loss against ``onehot(y) - 1/K``, the r -> -inf limit of ``gls_loss / (1 - r)``."""
    p = np.asarray(p, dtype=float)
    return ce_soft(p, normalized_extreme_label(y, p.shape[0]))


def backward_loss(p, y_tilde: int, T: TransitionMatrix) -> float:
    """``sum_j (T^-1)[y_tilde, j] ce(p, j)``."""
    p = np.asarray(p, dtype=float)
    y_tilde = _check_label(y_tilde, p.shape[0])
    Tinv = T.inverse()
    return float(-np.dot(Tinv[y_tilde], _log_clamped(p)))


def forward_loss(p, y_tilde: int, T: TransitionMatrix) -> float:
    """``-log((p T)[y_tilde])``."""
    p = np.asarray(p, dtype=float)
    y_tilde = _check_label(y_tilde, p.shape[0])
    q = float(np.dot(np.clip(p, EPS_CLAMP, 1.0), T.entries[:, y_tilde]))
    if not q > 0:
        raise LossDomainError(f"noise-mixed probability for class {y_tilde} is {q}")
    return -math.log(q)


def complementary_loss(p, y_tilde: int) -> float:
    """``ce(p, y) - ce(p, 1 - y)``; binary only."""
    if len(p) != 2:
        raise GLSError(f"complementary loss is defined for K = 2, got K = {len(p)}")
    return ce(p, y_tilde) - ce(p, 1 - y_tilde)


def _check_prior(prior, K: int) -> np.ndarray:
    prior = np.asarray(prior, dtype=float)
    if prior.shape != (K,):
        raise ValueError(f"prior must have length {K}")
    if abs(prior.sum() - 1.0) > 1e-9 or np.any(prior < 0):
        raise GLSError(f"noisy prior must be a probability vector (sum={prior.sum()!r})")
    return prior


def peer_loss_expected(p, y_tilde: int, noisy_prior) -> float:
    """Peer loss with the peer label integrated out: ``ce(p, y) - sum_k prior_k ce(p, k)``."""
    p = np.asarray(p, dtype=float)
    prior = _check_prior(noisy_prior, p.shape[0])
    return ce(p, y_tilde) - float(-np.dot(prior, _log_clamped(p)))


def peer_permutations(n: int, rng_seed) -> tuple[np.ndarray, np.ndarray]:
    """The two independent pairing permutations used by :func:`peer_loss_sampled`."""
    rng = np.random.default_rng(rng_seed)
    return rng.permutation(n), rng.permutation(n)


def peer_loss_sampled(batch_p: Sequence, batch_y: Sequence[int], rng_seed) -> float:
    """Literal peer loss: mean of ``ce(p_i, y_i) - ce(p_pi1(i), y_pi2(i))``."""
    P = np.asarray(batch_p, dtype=float)
    y = np.asarray(batch_y, dtype=np.int64)
    n = len(y)
    if n < 2 or P.shape[0] != n:
        raise GLSError("peer loss needs a batch of at least 2 matched (p, y) pairs")
    pi1, pi2 = peer_permutations(n, rng_seed)
    logs = _log_clamped(P)
    rows = np.arange(n)
    return float(np.mean(-logs[rows, y] + logs[pi1, y[pi2]]))


def gls_c_penalty(clean_probs, clean_labels, r: float, e0_hat: float, e1_hat: float) -> float:
    """Confidence-correction term ``(e1 - e0)(1 - r) mean_{clean y=1}[ce(p,1) - ce(p,0)]``."""
    P = np.atleast_2d(np.asarray(clean_probs, dtype=float))
    y = np.asarray(clean_labels, dtype=np.int64)
    if P.shape[1] != 2:
        raise GLSError("GLS-C penalty is defined for binary tasks")
    pos = P[y == 1]
    if pos.shape[0] == 0:
        raise EmptySubsetError("clean subset has no samples with label 1")
    r = _check_rate(r)
    logs = _log_clamped(pos)
    return float((e1_hat - e0_hat) * (1.0 - r) * np.mean(logs[:, 0] - logs[:, 1]))


# --------------------------------------------------------------------------- specs


@dataclass(frozen=True)
class LossSpec:
    """Which training loss to use and its parameters.

    ``r = -inf`` with kind ``gls`` selects the normalized extreme target
    ``onehot(y) - 1/K``.  For ``peer`` a ``prior`` of None means "use the
    empirical noisy label frequency of the training set".
    """

    kind: str = "gls"
    r: float = 0.0
    transition: TransitionMatrix | None = None
    prior: tuple[float, ...] | None = None
    peer_form: str = "expected"
    e0_hat: float = 0.0
    e1_hat: float = 0.0
    clean_subset: LabeledDataset | None = None

    def __post_init__(self):
        if self.kind not in LOSS_KINDS:
            raise GLSError(f"unknown loss kind {self.kind!r}")
        if self.kind in ("gls", "gls_c"):
            _check_rate(self.r)
        if self.kind in ("backward", "forward") and self.transition is None:
            raise GLSError(f"{self.kind} correction needs a transition matrix")
        if self.kind == "backward":
            self.transition.inverse()  # fail early on singular T
        if self.kind == "peer" and self.peer_form not in ("expected", "sampled"):
            raise GLSError(f"peer_form must be 'expected' or 'sampled', got {self.peer_form!r}")
        if self.kind == "gls_c":
            if self.clean_subset is None:
                raise GLSError("gls_c needs a clean subset")
            if not np.any(self.clean_subset.labels == 1):
                raise EmptySubsetError("clean subset has no samples with label 1")

    @classmethod
    def gls(cls, r: float) -> "LossSpec":
        return cls("gls", r=float(r))

    def describe(self) -> str:
        if self.kind == "gls":
            return f"gls(r={self.r:g})"
        if self.kind == "gls_c":
            return f"gls_c(r={self.r:g}, e0={self.e0_hat:g}, e1={self.e1_hat:g})"
        if self.kind == "peer":
            return f"peer({self.peer_form})"
        return self.kind


def gls_targets(labels, r: float, K: int) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64)
    onehot = np.eye(K)[labels]
    if math.isinf(r) and r < 0:
        return onehot - 1.0 / K
    return (1.0 - r) * onehot + r / K


def loss_targets(spec: LossSpec, labels, K: int, prior=None, rng: np.random.Generator | None = None):
    """Per-sample target weights ``W`` (N x K) and optional mixing matrix ``M``.

    The per-sample loss is ``-sum_k W[n, k] log((p_n M)_k)`` with ``M = I`` when
    None is returned.
    """
    labels = np.asarray(labels, dtype=np.int64)
    eye = np.eye(K)
    if spec.kind in ("gls", "gls_c"):
        return gls_targets(labels, spec.r, K), None
    if spec.kind == "backward":
        return spec.transition.inverse()[labels], None
    if spec.kind == "forward":
        return eye[labels], np.asarray(spec.transition.entries)
    if spec.kind == "complementary":
        if K != 2:
            raise GLSError("complementary loss is defined for K = 2")
        return eye[labels] - eye[1 - labels], None
    if spec.kind == "peer":
        if spec.peer_form == "expected":
            pr = _check_prior(prior if prior is not None else spec.prior, K)
            return eye[labels] - pr, None
        n = labels.shape[0]
        if n < 2:
            raise GLSError("sampled peer loss needs a batch of at least 2")
        if rng is None:
            raise GLSError("sampled peer loss needs an rng")
        pi1, pi2 = rng.permutation(n), rng.permutation(n)
        W = eye[labels].copy()
        # Sample pi1[i] is paired with label y[pi2[i]]; pi1 is a bijection.
        W[pi1] -= eye[labels[pi2]]
        return W, None
    raise GLSError(f"unknown loss kind {spec.kind!r}")


def per_sample_loss(spec: LossSpec, p, y: int, prior=None) -> float:
    """Scalar reference loss for one sample (sampled peer loss is batch-level only)."""
    if spec.kind in ("gls", "gls_c"):
        if math.isinf(spec.r):
            return normalized_extreme_loss(p, y)
        return gls_loss(p, y, spec.r)
    if spec.kind == "backward":
        return backward_loss(p, y, spec.transition)
    if spec.kind == "forward":
        return forward_loss(p, y, spec.transition)
    if spec.kind == "complementary":
        return complementary_loss(p, y)
    if spec.kind == "peer" and spec.peer_form == "expected":
        return peer_loss_expected(p, y, prior if prior is not None else spec.prior)
    raise GLSError(f"no per-sample form for {spec.describe()}")


__all__ = [
    "LossSpec",
    "ce",
    "ce_soft",
    "gls_loss",
    "gls_loss_binary_pair",
    "normalized_extreme_loss",
    "backward_loss",
    "forward_loss",
    "complementary_loss",
    "peer_loss_expected",
    "peer_loss_sampled",
    "peer_permutations",
    "gls_c_penalty",
    "gls_targets",
    "loss_targets",
    "per_sample_loss",
    "make_gls_label",
]
