"""Labels, smoothed labels, noise transition matrices and datasets.

Labels are 0-indexed: class ``k`` of a K-class problem is ``k in range(K)``.
All containers are immutable after construction (their arrays are flagged
read-only) so they can be shared across sweep workers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

from .errors import InvalidLabelError, InvalidNoiseSpecError, InvalidRateError, SingularMatrixError

ROW_TOL = 1e-12
SINGULAR_DET = 1e-9
# Prediction floor applied before every log (trainer and losses share it).
EPS_CLAMP = 1e-7


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


def _check_label(y: int, K: int) -> int:
    if K < 2:
        raise InvalidLabelError(f"need at least 2 classes, got K={K}")
    if isinstance(y, (bool, np.bool_)) or int(y) != y:
        raise InvalidLabelError(f"label must be an integer, got {y!r}")
    y = int(y)
    if not 0 <= y < K:
        raise InvalidLabelError(f"label {y} outside [0, {K})")
    return y


def _check_rate(r: float) -> float:
    r = float(r)
    if math.isnan(r) or r > 1.0:
        raise InvalidRateError(f"smooth rate must be <= 1, got {r}")
    return r


@dataclass(frozen=True)
class SoftLabel:
    """A smoothed label vector ``(1 - r) * onehot(source_class) + r / K``.

    Entries sum to one but may be negative when ``rate < 0``.
    """

    weights: np.ndarray
    rate: float
    source_class: int

    def __post_init__(self):
        object.__setattr__(self, "weights", _frozen(np.asarray(self.weights, dtype=float)))

    @property
    def num_classes(self) -> int:
        return self.weights.shape[0]

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.weights, dtype=dtype)


def make_onehot(y: int, K: int) -> SoftLabel:
    y = _check_label(y, K)
    w = np.zeros(K)
    w[y] = 1.0
    return SoftLabel(w, 0.0, y)


def make_gls_label(y: int, r: float, K: int) -> SoftLabel:
    y = _check_label(y, K)
    r = _check_rate(r)
    if math.isinf(r):
        raise InvalidRateError("r = -inf has no finite label; use normalized_extreme_label")
    # Off-target entries are exactly r/K; the target entry 1 - r(K-1)/K.
    w = np.full(K, r / K)
    w[y] = (1.0 - r) + r / K
    return SoftLabel(w, r, y)


def normalized_extreme_label(y: int, K: int) -> np.ndarray:
    """Limit of ``make_gls_label(y, r, K) / (1 - r)`` as r -> -inf, i.e. ``onehot(y) - 1/K``."""
    y = _check_label(y, K)
    w = np.full(K, -1.0 / K)
    w[y] += 1.0
    return w


def as_probs(p: Sequence[float] | np.ndarray) -> np.ndarray:
    """Validate a prediction vector: finite, non-negative, sums to one within 1e-9."""
    p = np.asarray(p, dtype=float)
    if p.ndim != 1 or p.shape[0] < 2:
        raise ValueError(f"probability vector must be 1-D with K >= 2 entries, got shape {p.shape}")
    if not np.all(np.isfinite(p)) or np.any(p < 0):
        raise ValueError("probability vector has negative or non-finite entries")
    if abs(p.sum() - 1.0) > 1e-9:
        raise ValueError(f"probability vector sums to {p.sum()!r}, not 1")
    return p


# --------------------------------------------------------------------------- noise


@dataclass(frozen=True)
class NoiseSpec:
    """Declarative description of a class-conditional noise model.

    kind is one of ``binary_asym`` (e0, e1), ``symmetric`` (epsilon),
    ``sparse`` (pairs, e0, e1) or ``custom`` (matrix).
    """

    kind: str
    e0: float = 0.0
    e1: float = 0.0
    epsilon: float = 0.0
    pairs: tuple[tuple[int, int], ...] = ()
    matrix: tuple[tuple[float, ...], ...] | None = None

    @classmethod
    def binary_asym(cls, e0: float, e1: float) -> "NoiseSpec":
        return cls("binary_asym", e0=float(e0), e1=float(e1))

    @classmethod
    def symmetric(cls, epsilon: float) -> "NoiseSpec":
        return cls("symmetric", epsilon=float(epsilon))

    @classmethod
    def sparse(cls, pairs: Sequence[Sequence[int]], e0: float, e1: float) -> "NoiseSpec":
        return cls("sparse", e0=float(e0), e1=float(e1), pairs=tuple((int(i), int(j)) for i, j in pairs))

    @classmethod
    def custom(cls, matrix) -> "NoiseSpec":
        m = np.asarray(matrix, dtype=float)
        return cls("custom", matrix=tuple(tuple(float(v) for v in row) for row in m))

    @property
    def is_clean(self) -> bool:
        if self.kind == "custom":
            m = np.asarray(self.matrix)
            return bool(np.array_equal(m, np.eye(m.shape[0])))
        return self.e0 == 0 and self.e1 == 0 and self.epsilon == 0

    def key(self) -> str:
        """Stable short string used to index sweep records and report columns."""
        if self.kind == "symmetric":
            return f"sym:{self.epsilon:g}"
        if self.kind == "binary_asym":
            return f"asym:{self.e0:g},{self.e1:g}"
        if self.kind == "sparse":
            pairs = ";".join(f"{i}-{j}" for i, j in self.pairs)
            return f"sparse:{self.e0:g},{self.e1:g}[{pairs}]"
        return "custom:" + ";".join(",".join(f"{v:g}" for v in row) for row in self.matrix)

    def to_json(self) -> dict[str, Any]:
        if self.kind == "symmetric":
            return {"kind": "symmetric", "epsilon": self.epsilon}
        if self.kind == "binary_asym":
            return {"kind": "binary_asym", "e0": self.e0, "e1": self.e1}
        if self.kind == "sparse":
            return {"kind": "sparse", "e0": self.e0, "e1": self.e1, "pairs": [list(p) for p in self.pairs]}
        return {"kind": "custom", "matrix": [list(r) for r in self.matrix]}

    @classmethod
    def from_json(cls, obj: Any) -> "NoiseSpec":
        # A bare number is shorthand for symmetric noise.
        if isinstance(obj, (int, float)):
            return cls.symmetric(obj)
        kind = obj.get("kind")
        if kind == "symmetric":
            return cls.symmetric(obj["epsilon"])
        if kind == "binary_asym":
            return cls.binary_asym(obj["e0"], obj["e1"])
        if kind == "sparse":
            return cls.sparse(obj["pairs"], obj["e0"], obj["e1"])
        if kind == "custom":
            return cls.custom(obj["matrix"])
        raise InvalidNoiseSpecError(f"unknown noise kind {kind!r}")


@dataclass(frozen=True)
class TransitionMatrix:
    """Row-stochastic ``T`` with ``T[i, j] = P(noisy = j | clean = i)``."""

    entries: np.ndarray
    spec: NoiseSpec

    def __post_init__(self):
        T = np.asarray(self.entries, dtype=float)
        if T.ndim != 2 or T.shape[0] != T.shape[1]:
            raise InvalidNoiseSpecError(f"transition matrix must be square, got {T.shape}")
        if np.any(T < 0) or np.any(T > 1):
            raise InvalidNoiseSpecError("transition entries must lie in [0, 1]")
        if np.max(np.abs(T.sum(axis=1) - 1.0)) > ROW_TOL:
            raise InvalidNoiseSpecError("transition rows must sum to 1")
        object.__setattr__(self, "entries", _frozen(T))

    @property
    def kind(self) -> str:
        return self.spec.kind

    @property
    def num_classes(self) -> int:
        return self.entries.shape[0]

    @property
    def e0(self) -> float:
        self._need_binary()
        return float(self.entries[0, 1])

    @property
    def e1(self) -> float:
        self._need_binary()
        return float(self.entries[1, 0])

    @property
    def e_delta(self) -> float:
        return self.e1 - self.e0

    def _need_binary(self):
        if self.num_classes != 2:
            raise InvalidNoiseSpecError("e0/e1 are defined for K = 2 only")

    def det(self) -> float:
        T = self.entries
        if T.shape[0] == 2:
            return float(T[0, 0] * T[1, 1] - T[0, 1] * T[1, 0])
        return float(np.linalg.det(T))

    def inverse(self) -> np.ndarray:
        d = self.det()
        if abs(d) <= SINGULAR_DET:
            raise SingularMatrixError(f"transition matrix is singular (det={d:.3g})")
        T = self.entries
        if T.shape[0] == 2:
            return np.array([[T[1, 1], -T[0, 1]], [-T[1, 0], T[0, 0]]]) / d
        # LAPACK getrf/getri: LU with partial pivoting.
        return np.linalg.inv(T)


def _check_unit(name: str, v: float):
    if not 0.0 <= v <= 1.0 or math.isnan(v):
        raise InvalidNoiseSpecError(f"{name} must lie in [0, 1], got {v}")


def build_transition(spec: NoiseSpec, K: int) -> TransitionMatrix:
    if spec.kind == "binary_asym":
        if K != 2:
            raise InvalidNoiseSpecError(f"binary_asym noise requires K = 2, got {K}")
        _check_unit("e0", spec.e0)
        _check_unit("e1", spec.e1)
        if spec.e1 < spec.e0:
            raise InvalidNoiseSpecError(
                f"binary_asym expects e1 >= e0 (got e0={spec.e0}, e1={spec.e1}); swap the class indices"
            )
        T = np.array([[1 - spec.e0, spec.e0], [spec.e1, 1 - spec.e1]])
    elif spec.kind == "symmetric":
        _check_unit("epsilon", spec.epsilon)
        T = np.full((K, K), spec.epsilon / (K - 1))
        np.fill_diagonal(T, 1.0 - spec.epsilon)
    elif spec.kind == "sparse":
        if K % 2:
            raise InvalidNoiseSpecError(f"sparse noise requires an even number of classes, got K={K}")
        _check_unit("e0", spec.e0)
        _check_unit("e1", spec.e1)
        if spec.e0 + spec.e1 >= 1:
            raise InvalidNoiseSpecError("sparse noise requires e0 + e1 < 1")
        if len(spec.pairs) != K // 2:
            raise InvalidNoiseSpecError(f"sparse noise needs K/2 = {K // 2} pairs, got {len(spec.pairs)}")
        seen: set[int] = set()
        T = np.eye(K)
        for i, j in spec.pairs:
            if not (0 <= i < j < K):
                raise InvalidNoiseSpecError(f"pair ({i}, {j}) must satisfy 0 <= i < j < K")
            if i in seen or j in seen:
                raise InvalidNoiseSpecError(f"pair ({i}, {j}) overlaps another pair")
            seen.update((i, j))
            T[i, j], T[i, i] = spec.e0, 1 - spec.e0
            T[j, i], T[j, j] = spec.e1, 1 - spec.e1
    elif spec.kind == "custom":
        T = np.asarray(spec.matrix, dtype=float)
        if T.shape != (K, K):
            raise InvalidNoiseSpecError(f"custom matrix has shape {T.shape}, expected ({K}, {K})")
    else:
        raise InvalidNoiseSpecError(f"unknown noise kind {spec.kind!r}")
    return TransitionMatrix(T, spec)


# --------------------------------------------------------------------------- data


@dataclass(frozen=True)
class LabeledDataset:
    features: np.ndarray
    labels: np.ndarray
    num_classes: int
    clean_labels: np.ndarray | None = field(default=None)

    def __post_init__(self):
        X = np.asarray(self.features, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        y = np.asarray(self.labels)
        if y.ndim != 1 or y.shape[0] != X.shape[0]:
            raise ValueError(f"labels shape {y.shape} does not match {X.shape[0]} feature rows")
        if y.size and (not np.issubdtype(y.dtype, np.integer)):
            if not np.all(np.mod(y, 1) == 0):
                raise InvalidLabelError("labels must be integers")
        y = y.astype(np.int64)
        K = int(self.num_classes)
        if y.size and (y.min() < 0 or y.max() >= K):
            raise InvalidLabelError(f"labels must lie in [0, {K})")
        object.__setattr__(self, "features", _frozen(X))
        object.__setattr__(self, "labels", _frozen(y))
        object.__setattr__(self, "num_classes", K)
        if self.clean_labels is not None:
            c = np.asarray(self.clean_labels).astype(np.int64)
            if c.shape != y.shape:
                raise ValueError("clean_labels must have the same length as labels")
            if c.size and (c.min() < 0 or c.max() >= K):
                raise InvalidLabelError(f"clean labels must lie in [0, {K})")
            object.__setattr__(self, "clean_labels", _frozen(c))

    def __len__(self) -> int:
        return self.labels.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def subset(self, idx) -> "LabeledDataset":
        idx = np.asarray(idx)
        clean = None if self.clean_labels is None else self.clean_labels[idx]
        return LabeledDataset(self.features[idx], self.labels[idx], self.num_classes, clean)

    def with_labels(self, labels, clean_labels=None) -> "LabeledDataset":
        return LabeledDataset(self.features, labels, self.num_classes, clean_labels)
