"""Adaptive quantities estimated from teacher behaviour on a holdout set.

From the teacher's predictions we derive, per class: the average
probability margin, a mixing weight (how much the student should trust
the teacher for that class), a pairwise margin matrix built from weight
ratios, and a temperature. All estimates must come from data disjoint
from the student's training set; an overfit teacher is near-perfect on
its own training samples, which would make every statistic vacuous.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .losses import MarginMatrix, MixWeights, TeacherOutputs
from .model import softmax_with_temperature

__all__ = [
    "GammaVector",
    "TemperatureVector",
    "AdaptiveParams",
    "avg_margin_per_class",
    "mix_weights",
    "rho_matrix",
    "temperatures_from_variances",
    "per_class_temperatures",
    "fit_adaptive",
    "save_adaptive",
    "load_adaptive",
]


@dataclass(frozen=True)
class GammaVector:
    """Per-class average teacher margin; each entry lies in [-1, 1]."""

    gamma: np.ndarray

    def __post_init__(self):
        g = np.asarray(self.gamma, dtype=np.float64)
        if g.ndim != 1:
            raise ValueError("gamma must be a vector")
        if np.any(g < -1 - 1e-12) or np.any(g > 1 + 1e-12):
            raise ValueError("gamma entries must lie in [-1, 1]")
        g.setflags(write=False)
        object.__setattr__(self, "gamma", g)


@dataclass(frozen=True)
class TemperatureVector:
    """Strictly positive per-class temperatures with mean equal to ``base``."""

    temps: np.ndarray
    base: float = 1.0

    def __post_init__(self):
        t = np.asarray(self.temps, dtype=np.float64)
        if t.ndim != 1 or np.any(t <= 0):
            raise ValueError("temperatures must form a strictly positive vector")
        if self.base <= 0:
            raise ValueError("base temperature must be positive")
        if abs(float(t.mean()) - self.base) > 1e-9:
            raise ValueError("temperature vector mean must equal the base")
        t.setflags(write=False)
        object.__setattr__(self, "temps", t)


def _class_counts(labels: np.ndarray, num_classes: int, min_class_count: int) -> np.ndarray:
    counts = np.bincount(labels, minlength=num_classes)
    missing = np.flatnonzero(counts < min_class_count)
    if missing.size:
        raise ValueError(
            f"classes {missing.tolist()} have fewer than {min_class_count} holdout samples"
        )
    small = np.flatnonzero(counts < 5)
    if small.size:
        warnings.warn(
            f"classes {small.tolist()} have fewer than 5 holdout samples; "
            "adaptive estimates will be noisy",
            stacklevel=3,
        )
    return counts


def avg_margin_per_class(
    teacher: TeacherOutputs,
    labels,
    use_raw_probs: bool = False,
    min_class_count: int = 1,
) -> GammaVector:
    """Average, per class, of p_y - mean_{y' != y} p_{y'} under the teacher.

    Uses the teacher probabilities at their recorded (distillation)
    temperature; ``use_raw_probs`` switches to unit-temperature
    probabilities recomputed from the logits.
    """
    labels = np.asarray(labels, dtype=np.int64)
    probs = (
        softmax_with_temperature(teacher.logits, 1.0) if use_raw_probs else teacher.probs
    )
    n, num_classes = probs.shape
    if num_classes < 2:
        raise ValueError("margins need at least 2 classes")
    if labels.shape[0] != n:
        raise ValueError("labels must align with teacher outputs")
    counts = _class_counts(labels, num_classes, min_class_count)
    p_true = probs[np.arange(n), labels]
    others_mean = (probs.sum(axis=1) - p_true) / (num_classes - 1)
    per_sample = p_true - others_mean
    sums = np.bincount(labels, weights=per_sample, minlength=num_classes)
    return GammaVector(sums / counts)


def mix_weights(gamma: GammaVector) -> MixWeights:
    """Clamp average margins at zero: trust the teacher only where it is
    confidently correct on average."""
    return MixWeights(np.maximum(gamma.gamma, 0.0))


def rho_matrix(mix: MixWeights, epsilon: float = 0.05) -> MarginMatrix:
    """Pairwise margins rho[y, y'] = (alpha_{y'} + eps) / (alpha_y + eps).

    Confusing a low-weight (hard) class y with a high-weight (easy) class
    y' is penalised by their ratio. The additive floor keeps the ratio
    finite when some weights are zero; it must be positive in that case.
    """
    if epsilon < 0:
        raise ValueError("epsilon must be nonnegative")
    a = mix.alpha + epsilon
    if np.any(a == 0):
        raise ValueError("epsilon must be positive when any mixing weight is 0")
    rho = a[None, :] / a[:, None]
    return MarginMatrix(rho)


def temperatures_from_variances(
    v, base: float = 1.0, floor: float = 0.25
) -> TemperatureVector:
    """Temperatures proportional to sqrt(v), floored and mean-normalised.

    The raw estimates are only defined up to a proportionality constant,
    so they are first normalised by the mean of their positive part;
    entries below floor**2 on that scale (including all non-positive
    ones) are clamped. If no estimate is positive the vector is uniform.
    Finally the vector is rescaled so its mean equals ``base``.
    """
    if base <= 0 or floor <= 0:
        raise ValueError("base and floor must be positive")
    v = np.asarray(v, dtype=np.float64)
    positive = np.maximum(v, 0.0)
    denom = float(positive.mean())
    if denom == 0.0:
        return TemperatureVector(np.full(v.shape[0], float(base)), base=float(base))
    scaled = np.maximum(v / denom, floor * floor)
    temps = np.sqrt(scaled)
    temps = temps * (base / temps.mean())
    return TemperatureVector(temps, base=float(base))


def per_class_temperatures(
    teacher: TeacherOutputs,
    labels,
    base: float = 1.0,
    floor: float = 0.25,
    min_class_count: int = 1,
) -> TemperatureVector:
    """Per-class temperatures from second moments of the teacher logits.

    For each class y the raw estimate is the average, over samples with
    label y, of f_y(x)^2 - mean_{y' != y} f_{y'}(x)^2. Classes the
    teacher separates strongly get larger estimates and hence more
    smoothing.
    """
    labels = np.asarray(labels, dtype=np.int64)
    logits = teacher.logits
    n, num_classes = logits.shape
    if num_classes < 2:
        raise ValueError("temperatures need at least 2 classes")
    if labels.shape[0] != n:
        raise ValueError("labels must align with teacher outputs")
    counts = _class_counts(labels, num_classes, min_class_count)
    sq = logits * logits
    sq_true = sq[np.arange(n), labels]
    others_mean = (sq.sum(axis=1) - sq_true) / (num_classes - 1)
    per_sample = sq_true - others_mean
    sums = np.bincount(labels, weights=per_sample, minlength=num_classes)
    return temperatures_from_variances(sums / counts, base=base, floor=floor)


@dataclass(frozen=True)
class AdaptiveParams:
    """Bundle of holdout-estimated quantities driving the adaptive modes."""

    mix: MixWeights
    rho: MarginMatrix
    temps: TemperatureVector
    holdout_size: int = 0
    teacher_id: str = ""


def fit_adaptive(
    teacher: TeacherOutputs,
    labels,
    rho_epsilon: float = 0.05,
    temp_base: float = 1.0,
    temp_floor: float = 0.25,
    use_raw_probs: bool = False,
    min_class_count: int = 1,
    teacher_id: str = "",
) -> AdaptiveParams:
    """Estimate mixing weights, margin matrix and temperatures in one pass.

    ``teacher`` must hold predictions on data disjoint from the student's
    training set (a holdout split).
    """
    labels = np.asarray(labels, dtype=np.int64)
    gamma = avg_margin_per_class(
        teacher, labels, use_raw_probs=use_raw_probs, min_class_count=min_class_count
    )
    mix = mix_weights(gamma)
    return AdaptiveParams(
        mix=mix,
        rho=rho_matrix(mix, rho_epsilon),
        temps=per_class_temperatures(
            teacher, labels, base=temp_base, floor=temp_floor, min_class_count=min_class_count
        ),
        holdout_size=int(labels.shape[0]),
        teacher_id=teacher_id,
    )


_FLOAT_FMT = "%.17g"


def save_adaptive(params: AdaptiveParams, path: str | Path) -> None:
    """Write the structured-text form: vectors, matrix, provenance."""
    lines = [
        "adaptive-params v1",
        f"holdout_size {params.holdout_size}",
        f"teacher_id {params.teacher_id or '-'}",
        "alpha " + " ".join(_FLOAT_FMT % v for v in params.mix.alpha),
        "temps " + " ".join(_FLOAT_FMT % v for v in params.temps.temps),
        "temp_base " + (_FLOAT_FMT % params.temps.base),
    ]
    for i, row in enumerate(params.rho.rho):
        lines.append(f"rho{i} " + " ".join(_FLOAT_FMT % v for v in row))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")


def load_adaptive(path: str | Path) -> AdaptiveParams:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines or lines[0] != "adaptive-params v1":
        raise ValueError(f"{path}: not an adaptive-params file")
    fields: dict[str, list[str]] = {}
    for line in lines[1:]:
        key, *cells = line.split()
        fields[key] = cells
    alpha = np.asarray([float(v) for v in fields["alpha"]], dtype=np.float64)
    temps = np.asarray([float(v) for v in fields["temps"]], dtype=np.float64)
    base = float(fields["temp_base"][0])
    rho = np.asarray(
        [[float(v) for v in fields[f"rho{i}"]] for i in range(alpha.shape[0])],
        dtype=np.float64,
    )
    teacher_id = fields["teacher_id"][0]
    return AdaptiveParams(
        mix=MixWeights(alpha),
        rho=MarginMatrix(rho),
        temps=TemperatureVector(temps, base=base),
        holdout_size=int(fields["holdout_size"][0]),
        teacher_id="" if teacher_id == "-" else teacher_id,
    )
