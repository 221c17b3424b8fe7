"""Model confidence, the positive/non-positive confidence partition, and prediction bias/variance."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core_types import EPS_CLAMP, LabeledDataset, _check_label
from .errors import GLSError


def model_confidence(p, y: int, K: int | None = None) -> float:
    """``p_y - mean_{i != y} p_i``; for two classes this is ``p_y - p_{1-y}``."""
    p = np.asarray(p, dtype=float)
    K = p.shape[0] if K is None else K
    if K != p.shape[0] or K < 2:
        raise GLSError(f"K={K} does not match prediction length {p.shape[0]}")
    y = _check_label(y, K)
    return float(p[y] - (p.sum() - p[y]) / (K - 1))


def confidence_array(P, labels) -> np.ndarray:
    """Vectorized :func:`model_confidence` over rows of ``P``."""
    P = np.atleast_2d(np.asarray(P, dtype=float))
    labels = np.asarray(labels, dtype=np.int64)
    py = P[np.arange(len(labels)), labels]
    return py - (P.sum(axis=1) - py) / (P.shape[1] - 1)


def loss_confidence(p, y: int) -> float:
    """Log-odds ``log(p_y / p_{1-y})``, i.e. ``ce(p, 1-y) - ce(p, y)``."""
    p = np.asarray(p, dtype=float)
    if p.shape[0] != 2:
        raise GLSError("loss-based confidence is defined for K = 2")
    y = _check_label(y, 2)
    q = np.clip(p, EPS_CLAMP, 1.0)
    return float(math.log(q[y]) - math.log(q[1 - y]))


@dataclass(frozen=True)
class ConfidenceReport:
    mc: np.ndarray
    expected_mc: float
    mc_correct_mean: float
    mc_wrong_mean: float
    n_plus: int
    n_minus: int

    @classmethod
    def from_predictions(cls, P, labels) -> "ConfidenceReport":
        mc = confidence_array(P, labels)
        plus = mc > 0
        mc.setflags(write=False)
        return cls(
            mc,
            float(mc.mean()) if mc.size else float("nan"),
            float(mc[plus].mean()) if plus.any() else float("nan"),
            float(mc[~plus].mean()) if (~plus).any() else float("nan"),
            int(plus.sum()),
            int((~plus).sum()),
        )


def _eval_labels(ds: LabeledDataset) -> np.ndarray:
    return ds.clean_labels if ds.clean_labels is not None else ds.labels


def confidence_report(model, ds: LabeledDataset) -> ConfidenceReport:
    """Confidence of ``model`` (anything with ``predict_proba``) against the clean labels when present."""
    return ConfidenceReport.from_predictions(model.predict_proba(ds.features), _eval_labels(ds))


def partition_by_confidence(model, ds: LabeledDataset) -> tuple[np.ndarray, np.ndarray]:
    """Indices with confidence > 0 and with confidence <= 0 (zero goes to the second set)."""
    if len(ds) == 0:
        raise GLSError("empty dataset")
    mc = confidence_array(model.predict_proba(ds.features), _eval_labels(ds))
    return np.flatnonzero(mc > 0), np.flatnonzero(mc <= 0)


@dataclass(frozen=True)
class BiasVarianceReport:
    bias: float
    variance: float
    num_replicates: int


def bias_variance_from_predictions(preds: Sequence, labels, eps: float = EPS_CLAMP) -> BiasVarianceReport:
    """Bias/variance from stacked replicate predictions of shape ``(R, N, K)``.

    The center is the per-sample normalized geometric mean of the replicates.
    Bias is the KL from the one-hot label to the center, which reduces to
    ``-log center_y``. Variance is the KL from the center to each replicate,
    averaged over replicates and samples.
    """
    F = np.asarray(preds, dtype=float)
    if F.ndim != 3:
        raise GLSError("predictions must have shape (replicates, samples, classes)")
    R = F.shape[0]
    if R < 2:
        raise GLSError(f"need at least 2 replicates, got {R}")
    labels = np.asarray(labels, dtype=np.int64)
    logF = np.log(np.maximum(F, eps))
    mlog = logF.mean(axis=0)
    mlog = mlog - mlog.max(axis=1, keepdims=True)
    logZ = np.log(np.exp(mlog).sum(axis=1, keepdims=True))
    log_center = mlog - logZ
    center = np.exp(log_center)
    bias = float(np.mean(-log_center[np.arange(len(labels)), labels]))
    kl = (center[None] * (log_center[None] - logF)).sum(axis=2)
    # Where every replicate agrees the center is that prediction and KL is exactly 0;
    # the log/exp round trip would otherwise leave ~1e-17 residue.
    kl[:, np.all(F == F[:1], axis=(0, 2))] = 0.0
    variance = float(np.maximum(kl, 0.0).mean())
    return BiasVarianceReport(max(bias, 0.0), variance, R)


def bias_variance(replicate_models: Sequence, eval_ds: LabeledDataset) -> BiasVarianceReport:
    if len(replicate_models) < 2:
        raise GLSError(f"need at least 2 replicates, got {len(replicate_models)}")
    X = eval_ds.features
    preds = [m.predict_proba(X) for m in replicate_models]
    eps = getattr(replicate_models[0], "epsilon_clamp", EPS_CLAMP)
    return bias_variance_from_predictions(preds, _eval_labels(eval_ds), eps)


def bootstrap_indices(n: int, seed) -> np.ndarray:
    """Resample ``n`` indices with replacement; the replicate scheme for bias/variance studies."""
    return np.random.default_rng(seed).integers(0, n, n)
