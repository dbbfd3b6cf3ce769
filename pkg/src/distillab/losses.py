"""Classification losses: cross-entropy, teacher-mixed variants, pairwise margins.

Every operation returns both the loss value and its exact gradient with
respect to the logits. Per-sample functions take a logit vector; the
batched entry point averages over a logit matrix and shares one code
path for all soft-target variants so that degenerate parameter choices
(alpha = 0, constant alpha vector, rho = 1) reduce to each other
bit-for-bit.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .model import softmax_with_temperature, softmax_per_class_temperature

__all__ = [
    "TeacherOutputs",
    "MixWeights",
    "MarginMatrix",
    "LossSpec",
    "ce_loss",
    "distill_loss",
    "adamix_loss",
    "margin_loss",
    "batch_loss",
]


@dataclass(frozen=True)
class TeacherOutputs:
    """Frozen teacher predictions: probabilities, raw logits, temperature.

    ``temperature`` is a scalar, or a per-class vector in which case
    ``labels`` records which temperature each row was softened with.
    Probabilities must be reproducible from the logits at the recorded
    temperature.
    """

    probs: np.ndarray
    logits: np.ndarray
    temperature: float | np.ndarray
    labels: np.ndarray | None = None

    def __post_init__(self):
        probs = np.asarray(self.probs, dtype=np.float64)
        logits = np.asarray(self.logits, dtype=np.float64)
        if probs.shape != logits.shape or probs.ndim != 2:
            raise ValueError("probs and logits must be matrices of equal shape")
        rows = probs.sum(axis=1)
        if np.any(probs < 0) or np.any(np.abs(rows - 1.0) > 1e-9):
            raise ValueError("teacher probability rows must be normalised")
        if np.ndim(self.temperature) == 0:
            if self.temperature <= 0:
                raise ValueError("temperature must be positive")
            expected = softmax_with_temperature(logits, float(self.temperature))
        else:
            temps = np.asarray(self.temperature, dtype=np.float64)
            if self.labels is None:
                raise ValueError("per-class temperatures require the row labels")
            expected = softmax_per_class_temperature(logits, self.labels, temps)
        if np.max(np.abs(expected - probs)) > 1e-9:
            raise ValueError("probs are inconsistent with logits at the recorded temperature")
        for name, arr in (("probs", probs), ("logits", logits)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @classmethod
    def from_logits(cls, logits, temperature, labels=None) -> "TeacherOutputs":
        logits = np.asarray(logits, dtype=np.float64)
        if np.ndim(temperature) == 0:
            probs = softmax_with_temperature(logits, float(temperature))
        else:
            probs = softmax_per_class_temperature(logits, labels, temperature)
        return cls(probs=probs, logits=logits, temperature=temperature, labels=labels)

    @property
    def n(self) -> int:
        return self.probs.shape[0]


@dataclass(frozen=True)
class MixWeights:
    """Per-class teacher mixing weights, each in [0, 1]."""

    alpha: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.alpha, dtype=np.float64)
        if a.ndim != 1:
            raise ValueError("alpha must be a vector")
        if np.any(a < 0) or np.any(a > 1):
            raise ValueError("alpha entries must lie in [0, 1]")
        a.setflags(write=False)
        object.__setattr__(self, "alpha", a)

    @classmethod
    def constant(cls, alpha: float, num_classes: int) -> "MixWeights":
        return cls(np.full(num_classes, float(alpha)))


@dataclass(frozen=True)
class MarginMatrix:
    """Pairwise penalty multipliers rho[y, y'] for predicting y' over true y.

    Off-diagonal entries must be strictly positive; the diagonal is unused
    and stored as 1.
    """

    rho: np.ndarray

    def __post_init__(self):
        r = np.asarray(self.rho, dtype=np.float64)
        if r.ndim != 2 or r.shape[0] != r.shape[1]:
            raise ValueError("rho must be a square matrix")
        off = ~np.eye(r.shape[0], dtype=bool)
        if np.any(r[off] <= 0) or not np.all(np.isfinite(r[off])):
            raise ValueError("off-diagonal rho entries must be strictly positive and finite")
        r = r.copy()
        np.fill_diagonal(r, 1.0)
        r.setflags(write=False)
        object.__setattr__(self, "rho", r)

    @classmethod
    def ones(cls, num_classes: int) -> "MarginMatrix":
        return cls(np.ones((num_classes, num_classes)))


def _check_label(label: int, num_classes: int) -> int:
    label = int(label)
    if not 0 <= label < num_classes:
        raise ValueError(f"label {label} out of range for {num_classes} classes")
    return label


def _check_teacher_row(teacher_row) -> np.ndarray:
    t = np.asarray(teacher_row, dtype=np.float64)
    if abs(float(t.sum()) - 1.0) > 1e-6 or np.any(t < 0):
        raise ValueError("teacher row must be a normalised probability vector")
    return t


def ce_loss(logits, label: int) -> tuple[float, np.ndarray]:
    """Softmax cross-entropy: -f_y + logsumexp(f); grad = softmax(f) - onehot(y)."""
    f = np.asarray(logits, dtype=np.float64)
    y = _check_label(label, f.shape[0])
    m = f.max()
    lse = m + np.log(np.exp(f - m).sum())
    grad = np.exp(f - lse)
    grad[y] -= 1.0
    return float(lse - f[y]), grad


def distill_loss(
    logits, label: int, teacher_row, alpha: float
) -> tuple[float, np.ndarray]:
    """Teacher-smoothed cross-entropy.

    value = (1-alpha) * ce(y, f) + alpha * sum_j t_j * ce(j, f)
    grad  = softmax(f) - [(1-alpha) * onehot(y) + alpha * t]
    """
    if not 0.0 <= alpha <= 1.0:
        raise ValueError("alpha must lie in [0, 1]")
    f = np.asarray(logits, dtype=np.float64)
    y = _check_label(label, f.shape[0])
    t = _check_teacher_row(teacher_row)
    m = f.max()
    lse = m + np.log(np.exp(f - m).sum())
    p = np.exp(f - lse)
    ce_val = lse - f[y]
    teacher_val = lse - float(t @ f)
    target = alpha * t
    target[y] += 1.0 - alpha
    return float((1.0 - alpha) * ce_val + alpha * teacher_val), p - target


def adamix_loss(
    logits, label: int, teacher_row, mix: MixWeights
) -> tuple[float, np.ndarray]:
    """Distillation with the mixing weight selected by the sample's label."""
    y = _check_label(label, mix.alpha.shape[0])
    return distill_loss(logits, y, teacher_row, float(mix.alpha[y]))


def margin_loss(logits, label: int, rho: MarginMatrix) -> tuple[float, np.ndarray]:
    """Pairwise-margin softmax loss.

    value = log[1 + sum_{j != y} rho[y, j] * exp(f_j - f_y)], computed by
    shifting with the max of {0} and {log rho[y, j] + f_j - f_y}. With
    w_j the normalised exponential weights, grad_j = w_j for j != y and
    grad_y = -sum_{j != y} w_j.
    """
    f = np.asarray(logits, dtype=np.float64)
    y = _check_label(label, f.shape[0])
    if rho.rho.shape[0] != f.shape[0]:
        raise ValueError("rho size must match the number of classes")
    # The implicit "+1" is the j = y term: log rho[y,y] + f_y - f_y = 0.
    z = np.log(rho.rho[y]) + f - f[y]
    z[y] = 0.0
    m = z.max()
    e = np.exp(z - m)
    denom = e.sum()
    value = m + np.log(denom)
    w = e / denom
    others = float(w.sum() - w[y])
    grad = w.copy()
    grad[y] = -others
    return float(value), grad


@dataclass(frozen=True)
class LossSpec:
    """Selects the per-sample loss used by :func:`batch_loss` and the trainer.

    kinds: "ce" (one-hot), "distill" (scalar alpha), "adamix" (per-class
    alpha), "margin" (pairwise margins only), "margin_mix" (margins on
    the one-hot term, teacher term weighted by per-class alpha).
    """

    kind: str
    alpha: float | None = None
    mix: MixWeights | None = None
    rho: MarginMatrix | None = None

    _KINDS = ("ce", "distill", "adamix", "margin", "margin_mix")

    def __post_init__(self):
        if self.kind not in self._KINDS:
            raise ValueError(f"unknown loss kind {self.kind!r}; expected one of {self._KINDS}")
        if self.kind == "distill" and self.alpha is None:
            raise ValueError("distill loss requires alpha")
        if self.kind in ("adamix", "margin_mix") and self.mix is None:
            raise ValueError(f"{self.kind} loss requires mix weights")
        if self.kind in ("margin", "margin_mix") and self.rho is None:
            raise ValueError(f"{self.kind} loss requires a margin matrix")

    @property
    def needs_teacher(self) -> bool:
        return self.kind in ("distill", "adamix", "margin_mix")


def _row_softmax_lse(logits: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    m = logits.max(axis=1, keepdims=True)
    e = np.exp(logits - m)
    s = e.sum(axis=1, keepdims=True)
    lse = (m + np.log(s)).ravel()
    return e / s, lse


def _soft_target_batch(logits, targets):
    """Mean loss and grad for value_n = lse(f_n) - targets_n . f_n."""
    probs, lse = _row_softmax_lse(logits)
    values = lse - np.einsum("nl,nl->n", targets, logits)
    n = logits.shape[0]
    return float(values.sum() / n), (probs - targets) / n


def _margin_batch(logits, labels, rho: MarginMatrix):
    n = logits.shape[0]
    f_true = logits[np.arange(n), labels]
    z = np.log(rho.rho[labels]) + logits - f_true[:, None]
    z[np.arange(n), labels] = 0.0
    m = z.max(axis=1, keepdims=True)
    e = np.exp(z - m)
    denom = e.sum(axis=1)
    values = (m.ravel() + np.log(denom))
    w = e / denom[:, None]
    others = w.sum(axis=1) - w[np.arange(n), labels]
    grad = w.copy()
    grad[np.arange(n), labels] = -others
    return values, grad


def batch_loss(
    spec: LossSpec,
    logits,
    labels,
    teacher: TeacherOutputs | None = None,
) -> tuple[float, np.ndarray]:
    """Mean per-sample loss over a batch and the gradient of that mean."""
    logits = np.asarray(logits, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    n, num_classes = logits.shape
    if labels.shape[0] != n:
        raise ValueError("labels length must match the batch size")
    if spec.needs_teacher:
        if teacher is None:
            raise ValueError(f"loss kind {spec.kind!r} requires teacher outputs")
        if teacher.probs.shape != logits.shape:
            raise ValueError("teacher outputs are not aligned with the batch")
    rows = np.arange(n)
    onehot = np.zeros_like(logits)
    onehot[rows, labels] = 1.0

    if spec.kind == "ce":
        return _soft_target_batch(logits, onehot)
    if spec.kind in ("distill", "adamix"):
        a = (
            np.full(n, float(spec.alpha))
            if spec.kind == "distill"
            else spec.mix.alpha[labels]
        )
        targets = (1.0 - a)[:, None] * onehot + a[:, None] * teacher.probs
        return _soft_target_batch(logits, targets)
    if spec.kind == "margin":
        values, grads = _margin_batch(logits, labels, spec.rho)
        return float(values.sum() / n), grads / n
    # margin_mix: margins on the one-hot term, plain teacher cross-entropy term
    a = spec.mix.alpha[labels]
    margin_values, margin_grads = _margin_batch(logits, labels, spec.rho)
    probs, lse = _row_softmax_lse(logits)
    teacher_values = lse - np.einsum("nl,nl->n", teacher.probs, logits)
    values = (1.0 - a) * margin_values + a * teacher_values
    grads = (1.0 - a)[:, None] * margin_grads + a[:, None] * (probs - teacher.probs)
    return float(values.sum() / n), grads / n
