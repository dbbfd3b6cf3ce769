"""Datasets: synthesis, long-tail downsampling, splits, and CSV interchange.

A dataset is a feature matrix with integer class labels and optional
subgroup ids. When no subgroup ids are given, each class is its own
subgroup. All operations are pure: given the same inputs and seed they
return bit-identical results.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = [
    "Dataset",
    "LabelDistribution",
    "LongTailSpec",
    "SplitSpec",
    "synth_gaussian_mixture",
    "longtail_downsample",
    "split",
    "load_csv",
    "save_csv",
    "empirical_label_dist",
]


def _as_float_matrix(x) -> np.ndarray:
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"features must be a 2-D matrix, got shape {arr.shape}")
    return arr


def _as_id_vector(x, name: str) -> np.ndarray:
    arr = np.asarray(x, dtype=np.int64)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be a 1-D sequence, got shape {arr.shape}")
    return arr


@dataclass(frozen=True)
class Dataset:
    """Feature matrix with class labels and optional subgroup ids.

    When ``subgroup_ids`` is None, subgroups default to the class labels
    themselves and ``num_subgroups == num_classes``.
    """

    features: np.ndarray
    labels: np.ndarray
    num_classes: int
    subgroup_ids: np.ndarray | None = None
    num_subgroups: int = field(default=0)

    def __post_init__(self):
        feats = _as_float_matrix(self.features)
        labels = _as_id_vector(self.labels, "labels")
        if feats.shape[0] != labels.shape[0]:
            raise ValueError(
                f"features has {feats.shape[0]} rows but labels has {labels.shape[0]}"
            )
        if self.num_classes < 1:
            raise ValueError("num_classes must be positive")
        if labels.size and (labels.min() < 0 or labels.max() >= self.num_classes):
            raise ValueError("labels must lie in [0, num_classes)")
        subgroups = self.subgroup_ids
        if subgroups is not None:
            subgroups = _as_id_vector(subgroups, "subgroup_ids")
            if subgroups.shape[0] != labels.shape[0]:
                raise ValueError("subgroup_ids length must match labels")
            n_sub = self.num_subgroups if self.num_subgroups > 0 else int(subgroups.max()) + 1
            if subgroups.size and (subgroups.min() < 0 or subgroups.max() >= n_sub):
                raise ValueError("subgroup ids must lie in [0, num_subgroups)")
        else:
            n_sub = self.num_classes
        for name, arr in (("features", feats), ("labels", labels), ("subgroup_ids", subgroups)):
            if arr is not None:
                arr.setflags(write=False)
                object.__setattr__(self, name, arr)
        object.__setattr__(self, "num_subgroups", n_sub)

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def subgroups(self) -> np.ndarray:
        """Effective subgroup id per sample (class label when none given)."""
        return self.subgroup_ids if self.subgroup_ids is not None else self.labels

    def subset(self, indices) -> "Dataset":
        idx = np.asarray(indices, dtype=np.int64)
        return Dataset(
            features=self.features[idx],
            labels=self.labels[idx],
            num_classes=self.num_classes,
            subgroup_ids=None if self.subgroup_ids is None else self.subgroup_ids[idx],
            num_subgroups=self.num_subgroups if self.subgroup_ids is not None else 0,
        )

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.num_classes)


@dataclass(frozen=True)
class LabelDistribution:
    """Per-class probabilities; nonnegative, summing to one."""

    probabilities: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.probabilities, dtype=np.float64)
        if p.ndim != 1:
            raise ValueError("probabilities must be a vector")
        if np.any(p < 0):
            raise ValueError("probabilities must be nonnegative")
        if abs(float(p.sum()) - 1.0) > 1e-9:
            raise ValueError(f"probabilities must sum to 1, got {p.sum()!r}")
        p.setflags(write=False)
        object.__setattr__(self, "probabilities", p)


@dataclass(frozen=True)
class LongTailSpec:
    """Geometric label-frequency decay with a fixed head-to-tail count ratio."""

    imbalance_ratio: float

    def __post_init__(self):
        if self.imbalance_ratio < 1:
            raise ValueError("imbalance_ratio must be >= 1")

    def decay(self, num_classes: int) -> float:
        """Per-class decay factor mu such that mu**(L-1) == imbalance_ratio."""
        if num_classes < 2:
            raise ValueError("decay requires at least 2 classes")
        return float(self.imbalance_ratio) ** (1.0 / (num_classes - 1))


@dataclass(frozen=True)
class SplitSpec:
    """Train/holdout/test fractions plus stratification and shuffling seed."""

    train_fraction: float
    holdout_fraction: float
    test_fraction: float
    stratified: bool = True
    seed: int = 0

    def __post_init__(self):
        fracs = (self.train_fraction, self.holdout_fraction, self.test_fraction)
        if not all(0 < f < 1 for f in fracs):
            raise ValueError("all fractions must lie in (0, 1)")
        if abs(sum(fracs) - 1.0) > 1e-9:
            raise ValueError(f"fractions must sum to 1, got {sum(fracs)!r}")
        if self.seed < 0:
            raise ValueError("seed must be nonnegative")


def _class_means(num_classes: int, dim: int, separation: float, seed: int) -> np.ndarray:
    """Deterministic class-mean placement scaled by ``separation``.

    Means sit on a line (dim 1) or a circle of diameter ``separation`` in a
    2-D plane, then get rotated by a seed-derived orthogonal matrix so
    different seeds explore different orientations of the same geometry.
    """
    rng = np.random.default_rng([seed, 7])
    if dim == 1:
        base = separation * (np.arange(num_classes, dtype=np.float64) - (num_classes - 1) / 2.0)
        sign = 1.0 if rng.random() < 0.5 else -1.0
        return (sign * base)[:, None]
    theta = 2.0 * np.pi * np.arange(num_classes, dtype=np.float64) / num_classes
    base = np.zeros((num_classes, dim), dtype=np.float64)
    base[:, 0] = 0.5 * separation * np.cos(theta)
    base[:, 1] = 0.5 * separation * np.sin(theta)
    q, r = np.linalg.qr(rng.standard_normal((dim, dim)))
    q = q * np.sign(np.diag(r))  # fix the sign convention so Q is unique
    return base @ q.T


def synth_gaussian_mixture(
    num_classes: int,
    dim: int,
    samples_per_class: int,
    separation: float,
    seed: int,
) -> Dataset:
    """Sample a balanced Gaussian-mixture classification set.

    Each class draws ``samples_per_class`` points from a unit-covariance
    Gaussian around a deterministically placed mean; labels are exact by
    construction. Larger ``separation`` spreads the means further apart.
    """
    if num_classes < 2:
        raise ValueError("num_classes must be >= 2")
    if dim < 1:
        raise ValueError("dim must be >= 1")
    if samples_per_class < 1:
        raise ValueError("samples_per_class must be >= 1")
    if separation <= 0:
        raise ValueError("separation must be positive")
    means = _class_means(num_classes, dim, separation, seed)
    rng = np.random.default_rng([seed, 11])
    feats = np.empty((num_classes * samples_per_class, dim), dtype=np.float64)
    labels = np.empty(num_classes * samples_per_class, dtype=np.int64)
    for c in range(num_classes):
        lo = c * samples_per_class
        hi = lo + samples_per_class
        feats[lo:hi] = means[c] + rng.standard_normal((samples_per_class, dim))
        labels[lo:hi] = c
    return Dataset(features=feats, labels=labels, num_classes=num_classes)


def _round_half_up(x: float) -> int:
    return int(np.floor(x + 0.5))


def longtail_downsample(ds: Dataset, spec: LongTailSpec, seed: int) -> Dataset:
    """Downsample so class i keeps round(n0 / mu**i) samples.

    n0 is the class-0 count and mu the decay factor implied by the spec's
    head-to-tail ratio. Samples are kept uniformly at random under
    ``seed``; a class whose target count rounds to zero is an error.
    """
    counts = ds.class_counts()
    if np.any(counts == 0):
        raise ValueError("every class must be present before downsampling")
    if spec.imbalance_ratio == 1.0:
        targets = [int(counts[0])] * ds.num_classes
    else:
        mu = spec.decay(ds.num_classes)
        targets = [_round_half_up(counts[0] * mu ** (-i)) for i in range(ds.num_classes)]
    rng = np.random.default_rng([seed, 13])
    keep: list[np.ndarray] = []
    for c, target in enumerate(targets):
        if target < 1:
            raise ValueError(
                f"class {c} would retain 0 samples at ratio {spec.imbalance_ratio}"
            )
        idx = np.flatnonzero(ds.labels == c)
        if idx.size < target:
            raise ValueError(
                f"class {c} has {idx.size} samples but needs {target} after downsampling"
            )
        keep.append(rng.choice(idx, size=target, replace=False))
    order = np.sort(np.concatenate(keep))
    return ds.subset(order)


def _allocate(n: int, fractions: tuple[float, float, float]) -> list[int]:
    """Split n into integer parts proportional to fractions (largest remainder)."""
    raw = [n * f for f in fractions]
    parts = [int(np.floor(r)) for r in raw]
    remainder = n - sum(parts)
    by_frac = sorted(range(len(raw)), key=lambda i: (-(raw[i] - parts[i]), i))
    for i in by_frac[:remainder]:
        parts[i] += 1
    return parts


def split(ds: Dataset, spec: SplitSpec) -> tuple[Dataset, Dataset, Dataset]:
    """Partition into disjoint train/holdout/test subsets.

    Stratified mode shuffles and allocates within each class so per-class
    proportions are preserved up to rounding; every stratified cell must
    receive at least one sample.
    """
    fracs = (spec.train_fraction, spec.holdout_fraction, spec.test_fraction)
    rng = np.random.default_rng([spec.seed, 17])
    buckets: list[list[np.ndarray]] = [[], [], []]
    if spec.stratified:
        for c in range(ds.num_classes):
            idx = np.flatnonzero(ds.labels == c)
            rng.shuffle(idx)
            parts = _allocate(idx.size, fracs)
            if min(parts) < 1:
                raise ValueError(
                    f"class {c} has {idx.size} samples: too few for a stratified "
                    f"split with fractions {fracs}"
                )
            lo = 0
            for b, size in enumerate(parts):
                buckets[b].append(idx[lo : lo + size])
                lo += size
    else:
        idx = np.arange(ds.n)
        rng.shuffle(idx)
        parts = _allocate(ds.n, fracs)
        lo = 0
        for b, size in enumerate(parts):
            buckets[b].append(idx[lo : lo + size])
            lo += size
    out = []
    for b in range(3):
        merged = np.sort(np.concatenate(buckets[b])) if buckets[b] else np.empty(0, np.int64)
        out.append(ds.subset(merged))
    return out[0], out[1], out[2]


def empirical_label_dist(ds: Dataset) -> LabelDistribution:
    """Observed per-class label frequencies."""
    if ds.n == 0:
        raise ValueError("dataset is empty")
    return LabelDistribution(ds.class_counts() / ds.n)


_FLOAT_FMT = "%.17g"  # round-trips float64 exactly


def save_csv(ds: Dataset, path: str | Path) -> None:
    """Write one sample per row: f0..f{D-1},label[,subgroup]."""
    path = Path(path)
    cols = [f"f{j}" for j in range(ds.dim)] + ["label"]
    has_subgroups = ds.subgroup_ids is not None
    if has_subgroups:
        cols.append("subgroup")
    lines = [",".join(cols)]
    for i in range(ds.n):
        cells = [_FLOAT_FMT % v for v in ds.features[i]]
        cells.append(str(int(ds.labels[i])))
        if has_subgroups:
            cells.append(str(int(ds.subgroup_ids[i])))
        lines.append(",".join(cells))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")


def load_csv(
    path: str | Path,
    num_classes: int | None = None,
    num_subgroups: int | None = None,
) -> Dataset:
    """Read a dataset written by :func:`save_csv` (or shaped like one).

    The header must name the feature columns, contain a ``label`` column,
    and may contain a ``subgroup`` column. Class/subgroup counts default
    to max id + 1 unless given explicitly.
    """
    path = Path(path)
    lines = path.read_text(encoding="utf-8").splitlines()
    if not lines:
        raise ValueError(f"{path}: empty file")
    header = lines[0].split(",")
    if "label" not in header:
        raise ValueError(f"{path}: missing 'label' column")
    label_col = header.index("label")
    sub_col = header.index("subgroup") if "subgroup" in header else None
    feat_cols = [j for j, name in enumerate(header) if j not in (label_col, sub_col)]
    feats, labels, subgroups = [], [], []
    for ln, line in enumerate(lines[1:], start=2):
        cells = line.split(",")
        if len(cells) != len(header):
            raise ValueError(f"{path}:{ln}: expected {len(header)} cells, got {len(cells)}")
        try:
            feats.append([float(cells[j]) for j in feat_cols])
            labels.append(int(cells[label_col]))
            if sub_col is not None:
                subgroups.append(int(cells[sub_col]))
        except ValueError as exc:
            raise ValueError(f"{path}:{ln}: non-numeric cell ({exc})") from None
    labels_arr = np.asarray(labels, dtype=np.int64)
    return Dataset(
        features=np.asarray(feats, dtype=np.float64),
        labels=labels_arr,
        num_classes=num_classes if num_classes is not None else int(labels_arr.max()) + 1,
        subgroup_ids=np.asarray(subgroups, dtype=np.int64) if sub_col is not None else None,
        num_subgroups=(num_subgroups or 0) if sub_col is not None else 0,
    )
