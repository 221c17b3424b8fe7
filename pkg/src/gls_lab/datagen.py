"""Synthetic 2-D disk/annulus data, tabular CSV ingestion and stratified splits."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core_types import LabeledDataset
from .errors import GLSError

STD_FLOOR = 1e-12


@dataclass(frozen=True)
class SyntheticSpec:
    """Two concentric regions: label 1 in the inner disk, label 0 in the outer annulus.

    ``type2`` additionally relabels points whose radius falls in the band
    ``[band_inner, band_outer]``: each is selected with probability
    ``select_prob`` and a selected point gets a fair-coin label
    (``flip_mode="coin"``) or the opposite label (``flip_mode="other"``).
    """

    kind: str = "type1"
    n_per_class: int = 500
    seed: int = 0
    disk_radius: float = 0.25
    annulus_inner: float = 0.28
    annulus_outer: float = 0.45
    band_inner: float = 0.22
    band_outer: float = 0.31
    select_prob: float = 0.5
    flip_mode: str = "coin"

    def __post_init__(self):
        if self.kind not in ("type1", "type2"):
            raise GLSError(f"unknown synthetic kind {self.kind!r}")
        if self.n_per_class < 1:
            raise GLSError("n_per_class must be >= 1")
        if not 0 < self.disk_radius < self.annulus_inner < self.annulus_outer:
            raise GLSError("radii must satisfy 0 < disk < annulus inner < annulus outer")
        if not 0 <= self.band_inner < self.band_outer:
            raise GLSError("flip band must satisfy 0 <= inner < outer")
        if self.flip_mode not in ("coin", "other"):
            raise GLSError(f"flip_mode must be 'coin' or 'other', got {self.flip_mode!r}")
        if not 0 <= self.select_prob <= 1:
            raise GLSError("select_prob must lie in [0, 1]")


def _ring(rng, n, r0, r1):
    # Inverse radius CDF of the uniform distribution on an annulus.
    u = rng.random(n)
    rad = np.sqrt(u * (r1 * r1 - r0 * r0) + r0 * r0)
    theta = rng.random(n) * 2.0 * np.pi
    return np.column_stack([rad * np.cos(theta), rad * np.sin(theta)])


def gen_synthetic(spec: SyntheticSpec) -> LabeledDataset:
    """Pure function of ``spec`` (including its seed). Rows are class 1 first, then class 0."""
    rng = np.random.default_rng(spec.seed)
    n = spec.n_per_class
    inner = _ring(rng, n, 0.0, spec.disk_radius)
    outer = _ring(rng, n, spec.annulus_inner, spec.annulus_outer)
    X = np.vstack([inner, outer])
    y = np.concatenate([np.ones(n, dtype=np.int64), np.zeros(n, dtype=np.int64)])
    if spec.kind == "type2":
        rad = np.hypot(X[:, 0], X[:, 1])
        in_band = (rad >= spec.band_inner) & (rad <= spec.band_outer)
        chosen = in_band & (rng.random(len(y)) < spec.select_prob)
        coin = rng.integers(0, 2, len(y))
        new = coin if spec.flip_mode == "coin" else 1 - y
        y = np.where(chosen, new, y)
    return LabeledDataset(X, y, 2)


# --------------------------------------------------------------------------- CSV


CLEAN_COLUMN = "clean_label"


def write_csv(ds: LabeledDataset, path) -> None:
    """Header ``f0..f{d-1},label`` plus ``clean_label`` when the dataset carries clean labels.

    Floats are written with repr so they round-trip exactly.
    """
    has_clean = ds.clean_labels is not None
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow([f"f{i}" for i in range(ds.dim)] + ["label"] + ([CLEAN_COLUMN] if has_clean else []))
        for n, (x, lab) in enumerate(zip(np.asarray(ds.features), np.asarray(ds.labels))):
            extra = [int(ds.clean_labels[n])] if has_clean else []
            w.writerow([repr(float(v)) for v in x] + [int(lab)] + extra)


def load_csv(path, label_column: str | int = "label", delimiter: str = ",", standardize: bool = False):
    """Read a numeric table; labels are re-indexed densely to ``0..K-1`` in sorted order.

    A ``clean_label`` column, if present, is read as the clean labels (same
    re-indexing). With ``standardize`` the whole file is standardized; to fit
    the statistics on a training split only, load raw and use
    :func:`standardize_splits`.
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such file: {path}")
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh, delimiter=delimiter))
    if len(rows) < 2:
        raise GLSError(f"{path} has no data rows")
    header = [h.strip() for h in rows[0]]
    if isinstance(label_column, int):
        li = label_column
    else:
        if label_column not in header:
            raise GLSError(f"label column {label_column!r} not in header {header}")
        li = header.index(label_column)
    ci = header.index(CLEAN_COLUMN) if CLEAN_COLUMN in header and li != header.index(CLEAN_COLUMN) else None
    skip = {li} if ci is None else {li, ci}
    feats, raw_labels, raw_clean = [], [], []
    for ln, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != len(header):
            raise GLSError(f"{path}:{ln}: expected {len(header)} cells, got {len(row)}")
        try:
            feats.append([float(c) for i, c in enumerate(row) if i not in skip])
        except ValueError as exc:
            raise GLSError(f"{path}:{ln}: non-numeric feature cell ({exc})") from None
        raw_labels.append(row[li].strip())
        if ci is not None:
            raw_clean.append(row[ci].strip())
    classes = sorted(set(raw_labels) | set(raw_clean), key=_label_sort_key)
    if len(classes) < 2:
        raise GLSError(f"{path} contains a single class")
    index = {c: k for k, c in enumerate(classes)}
    X = np.array(feats, dtype=np.float64)
    if standardize:
        X = _apply_standardization(X, *fit_standardization(X))
    y = np.array([index[c] for c in raw_labels], dtype=np.int64)
    clean = np.array([index[c] for c in raw_clean], dtype=np.int64) if ci is not None else None
    return LabeledDataset(X, y, len(classes), clean)


def _label_sort_key(s: str):
    try:
        return (0, float(s), s)
    except ValueError:
        return (1, 0.0, s)


def fit_standardization(X) -> tuple[np.ndarray, np.ndarray]:
    """Per-column mean and (population) standard deviation."""
    X = np.asarray(X, dtype=np.float64)
    return X.mean(axis=0), X.std(axis=0)


def _apply_standardization(X, mu, sd):
    const = sd < STD_FLOOR
    Z = (np.asarray(X, dtype=np.float64) - mu) / np.where(const, 1.0, sd)
    # Constant columns map to exactly zero.
    Z[:, const] = 0.0
    return Z


def standardize_splits(train: LabeledDataset, *others: LabeledDataset):
    """Standardize every dataset with mean/std fitted on ``train`` only."""
    mu, sd = fit_standardization(train.features)
    return tuple(
        LabeledDataset(_apply_standardization(d.features, mu, sd), d.labels, d.num_classes, d.clean_labels)
        for d in (train, *others)
    )


# --------------------------------------------------------------------------- splitting


def _allocate(class_sizes, split_sizes) -> np.ndarray:
    """Integer (class x split) counts within one of ``n_c * m_s / N`` with exact margins.

    Each count starts at the floor of its exact share; the leftover units of
    each split go to the classes with the most units still unassigned (ties to
    the larger fractional part). This greedy fill always meets both margins.
    """
    n = np.asarray(class_sizes, dtype=np.int64)
    m = np.asarray(split_sizes, dtype=np.int64)
    exact = np.outer(n, m) / n.sum()
    counts = np.floor(exact).astype(np.int64)
    frac = exact - counts
    row_left = n - counts.sum(axis=1)
    for s in range(len(m)):
        extra = int(m[s] - counts[:, s].sum())
        order = np.lexsort((-frac[:, s], -row_left))[:extra]
        counts[order, s] += 1
        row_left[order] -= 1
    return counts


def split(ds: LabeledDataset, fractions=(0.7, 0.1, 0.2), seed=0):
    """Class-stratified seeded split into ``len(fractions)`` parts (usually train/val/test).

    Part sizes are the differences of ``rint(cumsum(fractions) * N)``. Within
    every part each class count is within one sample of its global share of
    that part. Members of each class are assigned to parts in a seeded random
    order.
    """
    fr = np.asarray(fractions, dtype=np.float64)
    if fr.ndim != 1 or len(fr) < 1 or np.any(fr <= 0) or abs(fr.sum() - 1.0) > 1e-9:
        raise GLSError(f"fractions must be positive and sum to 1, got {fractions}")
    N = len(ds)
    cuts = np.rint(np.cumsum(fr) * N).astype(np.int64)
    cuts[-1] = N
    sizes = np.diff(np.concatenate([[0], cuts]))
    if np.any(sizes <= 0):
        s = int(np.flatnonzero(sizes <= 0)[0])
        raise GLSError(f"split {s} would be empty for N={N}, fractions={tuple(fractions)}")
    labels = np.asarray(ds.labels)
    members = [np.flatnonzero(labels == c) for c in range(ds.num_classes)]
    counts = _allocate([len(idx) for idx in members], sizes)
    rng = np.random.default_rng(seed)
    parts = [[] for _ in sizes]
    for c, idx in enumerate(members):
        idx = idx[rng.permutation(len(idx))]
        bounds = np.concatenate([[0], np.cumsum(counts[c])])
        for s in range(len(sizes)):
            parts[s].append(idx[bounds[s] : bounds[s + 1]])
    return tuple(ds.subset(np.sort(np.concatenate(p))) for p in parts)
