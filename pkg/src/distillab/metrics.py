"""Subgroup performance metrics and logit diagnostics.

Errors are reported per subgroup together with the weighted average,
the unweighted (balanced) average, the worst subgroup, and the mean of
the k worst subgroups. Diagnostics cover per-sample probability
statistics, teacher-sorted class buckets, accuracy gain curves, and
samples where the student outscores the teacher on the true label.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "SubgroupReport",
    "BucketStats",
    "GainCurve",
    "per_subgroup_errors",
    "summarize",
    "gain_curve",
    "logit_stats",
    "per_class_accuracy",
    "teacher_accuracy_buckets",
    "bucket_stats",
    "regularisation_samples",
    "rank_correlation",
]


@dataclass(frozen=True)
class SubgroupReport:
    """Per-subgroup errors plus their weighted/balanced/worst/top-k summaries."""

    per_subgroup_error: np.ndarray
    avg_error: float
    balanced_error: float
    worst_error: float
    topk_error: dict[int, float]
    n_per_subgroup: np.ndarray

    def to_dict(self) -> dict:
        return {
            "per_subgroup_error": [float(e) for e in self.per_subgroup_error],
            "avg_error": self.avg_error,
            "balanced_error": self.balanced_error,
            "worst_error": self.worst_error,
            "topk_error": {str(k): v for k, v in sorted(self.topk_error.items())},
            "n_per_subgroup": [int(n) for n in self.n_per_subgroup],
        }


@dataclass(frozen=True)
class GainCurve:
    """gains[k-1]: mean accuracy difference (b - a) over the k worst classes."""

    gains: np.ndarray


@dataclass(frozen=True)
class BucketStats:
    """Per-bucket sample means of accuracy/log-loss/margin for several models.

    Classes are sorted by descending teacher accuracy and partitioned
    into contiguous buckets whose sizes differ by at most one; every
    model is evaluated on that same assignment.
    """

    bucket_assignment: np.ndarray
    n_per_bucket: np.ndarray
    model_names: tuple[str, ...]
    accuracy: np.ndarray  # [num_models x num_buckets]
    log_loss: np.ndarray
    margin: np.ndarray

    def to_dict(self) -> dict:
        return {
            "bucket_assignment": [int(b) for b in self.bucket_assignment],
            "n_per_bucket": [int(n) for n in self.n_per_bucket],
            "models": {
                name: {
                    "accuracy": [float(v) for v in self.accuracy[i]],
                    "log_loss": [float(v) for v in self.log_loss[i]],
                    "margin": [float(v) for v in self.margin[i]],
                }
                for i, name in enumerate(self.model_names)
            },
        }


def per_subgroup_errors(
    predictions, labels, subgroups, num_subgroups: int
) -> tuple[np.ndarray, np.ndarray]:
    """Misclassification rate and sample count per subgroup."""
    predictions = np.asarray(predictions, dtype=np.int64)
    labels = np.asarray(labels, dtype=np.int64)
    subgroups = np.asarray(subgroups, dtype=np.int64)
    if not (predictions.shape == labels.shape == subgroups.shape):
        raise ValueError("predictions, labels and subgroups must have equal length")
    if subgroups.size and (subgroups.min() < 0 or subgroups.max() >= num_subgroups):
        raise ValueError("subgroup ids out of range")
    counts = np.bincount(subgroups, minlength=num_subgroups)
    if np.any(counts == 0):
        empty = np.flatnonzero(counts == 0).tolist()
        raise ValueError(f"subgroups {empty} have no samples")
    wrong = np.bincount(
        subgroups, weights=(predictions != labels).astype(np.float64), minlength=num_subgroups
    )
    return wrong / counts, counts


def summarize(err, counts, k_list) -> SubgroupReport:
    """Weighted, balanced, worst and top-k error summaries of a subgroup profile."""
    err = np.asarray(err, dtype=np.float64)
    counts = np.asarray(counts, dtype=np.int64)
    if err.shape != counts.shape or err.ndim != 1:
        raise ValueError("err and counts must be equal-length vectors")
    if np.any(err < 0) or np.any(err > 1):
        raise ValueError("errors must lie in [0, 1]")
    num_groups = err.shape[0]
    total = int(counts.sum())
    avg = 0.0
    for g in range(num_groups):
        avg += (counts[g] / total) * err[g]
    balanced = 0.0
    for g in range(num_groups):
        balanced += err[g]
    balanced /= num_groups
    desc = np.sort(err)[::-1]
    topk: dict[int, float] = {}
    for k in k_list:
        k = int(k)
        if not 1 <= k <= num_groups:
            raise ValueError(f"k={k} outside 1..{num_groups}")
        acc = 0.0
        for i in range(k):
            acc += desc[i]
        topk[k] = acc / k
    return SubgroupReport(
        per_subgroup_error=err,
        avg_error=float(avg),
        balanced_error=float(balanced),
        worst_error=float(desc[0]),
        topk_error=topk,
        n_per_subgroup=counts,
    )


def gain_curve(
    per_class_acc_a, per_class_acc_b, sort_by: str = "model_a", reference=None
) -> GainCurve:
    """Cumulative accuracy gain of model b over model a on the k worst classes.

    Classes are sorted ascending by the sort key's accuracy (ties by
    class index); gains[k-1] is the mean of (acc_b - acc_a) over the
    first k.
    """
    acc_a = np.asarray(per_class_acc_a, dtype=np.float64)
    acc_b = np.asarray(per_class_acc_b, dtype=np.float64)
    if acc_a.shape != acc_b.shape or acc_a.ndim != 1:
        raise ValueError("accuracy vectors must have equal length")
    if sort_by == "model_a":
        key = acc_a
    elif sort_by == "reference":
        if reference is None:
            raise ValueError("sort_by='reference' requires a reference accuracy vector")
        key = np.asarray(reference, dtype=np.float64)
        if key.shape != acc_a.shape:
            raise ValueError("reference length must match the accuracy vectors")
    else:
        raise ValueError(f"unknown sort_by {sort_by!r}")
    order = np.argsort(key, kind="stable")
    diffs = (acc_b - acc_a)[order]
    gains = np.empty_like(diffs)
    acc = 0.0
    for k in range(diffs.shape[0]):
        acc += diffs[k]
        gains[k] = acc / (k + 1)
    return GainCurve(gains=gains)


def logit_stats(
    probs, labels, log_loss_cap: float = 50.0
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-sample (correct, log-loss, margin) from predicted probabilities.

    margin = p_y - max_{y' != y} p_{y'}; negative when mispredicted.
    Log-loss is clipped at ``log_loss_cap`` so vanishing probabilities
    keep bucket means finite.
    """
    probs = np.asarray(probs, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    n = probs.shape[0]
    rows = np.arange(n)
    correct = np.argmax(probs, axis=1) == labels
    p_true = probs[rows, labels]
    with np.errstate(divide="ignore"):
        log_loss = np.minimum(-np.log(p_true), log_loss_cap)
    masked = probs.copy()
    masked[rows, labels] = -np.inf
    margin = p_true - masked.max(axis=1)
    return correct, log_loss, margin


def per_class_accuracy(probs, labels, num_classes: int) -> np.ndarray:
    """Accuracy of argmax predictions per true class (every class must appear)."""
    probs = np.asarray(probs, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    counts = np.bincount(labels, minlength=num_classes)
    if np.any(counts == 0):
        raise ValueError(
            f"classes {np.flatnonzero(counts == 0).tolist()} have no evaluation samples"
        )
    correct = np.argmax(probs, axis=1) == labels
    hits = np.bincount(labels, weights=correct.astype(np.float64), minlength=num_classes)
    return hits / counts


def teacher_accuracy_buckets(
    teacher_probs, labels, num_buckets: int
) -> tuple[np.ndarray, np.ndarray]:
    """Class-to-bucket assignment by descending teacher accuracy.

    Ties break toward the smaller class index; contiguous buckets differ
    in size by at most one. Returns (assignment[class] -> bucket,
    class order used).
    """
    probs = np.asarray(teacher_probs, dtype=np.float64)
    num_classes = probs.shape[1]
    if not 1 <= num_buckets <= num_classes:
        raise ValueError(f"num_buckets must lie in 1..{num_classes}")
    acc = per_class_accuracy(probs, labels, num_classes)
    order = sorted(range(num_classes), key=lambda c: (-acc[c], c))
    base, extra = divmod(num_classes, num_buckets)
    assignment = np.empty(num_classes, dtype=np.int64)
    pos = 0
    for b in range(num_buckets):
        size = base + (1 if b < extra else 0)
        for c in order[pos : pos + size]:
            assignment[c] = b
        pos += size
    return assignment, np.asarray(order, dtype=np.int64)


def bucket_stats(
    teacher_probs,
    model_probs_list,
    labels,
    num_buckets: int,
    model_names=None,
    class_weighted: bool = False,
    log_loss_cap: float = 50.0,
) -> BucketStats:
    """Mean accuracy/log-loss/margin per teacher-sorted class bucket.

    The teacher is always the first reported model; every model under
    comparison reuses the teacher-derived bucket assignment. Means are
    sample-weighted by default, per-class means of class means with
    ``class_weighted``.
    """
    labels = np.asarray(labels, dtype=np.int64)
    assignment, _ = teacher_accuracy_buckets(teacher_probs, labels, num_buckets)
    all_probs = [np.asarray(teacher_probs, dtype=np.float64)] + [
        np.asarray(p, dtype=np.float64) for p in model_probs_list
    ]
    if model_names is None:
        names = ["teacher"] + [f"model_{i}" for i in range(len(model_probs_list))]
    else:
        names = ["teacher"] + list(model_names)
    sample_bucket = assignment[labels]
    n_per_bucket = np.bincount(sample_bucket, minlength=num_buckets)
    accuracy = np.empty((len(all_probs), num_buckets))
    log_loss = np.empty_like(accuracy)
    margin = np.empty_like(accuracy)
    for i, probs in enumerate(all_probs):
        correct, ll, marg = logit_stats(probs, labels, log_loss_cap=log_loss_cap)
        correct = correct.astype(np.float64)
        for b in range(num_buckets):
            if class_weighted:
                classes = np.flatnonzero(assignment == b)
                accuracy[i, b] = np.mean(
                    [correct[labels == c].mean() for c in classes]
                )
                log_loss[i, b] = np.mean([ll[labels == c].mean() for c in classes])
                margin[i, b] = np.mean([marg[labels == c].mean() for c in classes])
            else:
                in_bucket = sample_bucket == b
                accuracy[i, b] = correct[in_bucket].mean()
                log_loss[i, b] = ll[in_bucket].mean()
                margin[i, b] = marg[in_bucket].mean()
    return BucketStats(
        bucket_assignment=assignment,
        n_per_bucket=n_per_bucket,
        model_names=tuple(names),
        accuracy=accuracy,
        log_loss=log_loss,
        margin=margin,
    )


def regularisation_samples(
    teacher_probs,
    student_probs,
    labels,
    bucket_assignment=None,
    num_buckets: int | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Samples where the student outscores the teacher on the true label.

    mask[n] is True when the teacher's probability on label y_n is
    strictly below the student's. Fractions are aggregated per class
    bucket; with no assignment given, one is derived from the teacher's
    accuracy using ``num_buckets`` (default: one bucket per class,
    capped at 10).
    """
    t = np.asarray(teacher_probs, dtype=np.float64)
    s = np.asarray(student_probs, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if t.shape != s.shape or t.shape[0] != labels.shape[0]:
        raise ValueError("teacher and student outputs must align with labels")
    rows = np.arange(t.shape[0])
    mask = t[rows, labels] < s[rows, labels]
    if bucket_assignment is None:
        if num_buckets is None:
            num_buckets = min(10, t.shape[1])
        bucket_assignment, _ = teacher_accuracy_buckets(t, labels, num_buckets)
    else:
        bucket_assignment = np.asarray(bucket_assignment, dtype=np.int64)
        num_buckets = int(bucket_assignment.max()) + 1
    sample_bucket = bucket_assignment[labels]
    fractions = np.empty(num_buckets)
    for b in range(num_buckets):
        in_bucket = sample_bucket == b
        if not np.any(in_bucket):
            raise ValueError(f"bucket {b} has no samples")
        fractions[b] = mask[in_bucket].astype(np.float64).mean()
    return mask, fractions


def rank_correlation(x, y) -> float:
    """Spearman correlation: Pearson correlation of average ranks."""

    def ranks(v: np.ndarray) -> np.ndarray:
        order = np.argsort(v, kind="stable")
        r = np.empty(v.shape[0], dtype=np.float64)
        r[order] = np.arange(1, v.shape[0] + 1, dtype=np.float64)
        # average ranks across ties
        for value in np.unique(v):
            tied = v == value
            if tied.sum() > 1:
                r[tied] = r[tied].mean()
        return r

    rx = ranks(np.asarray(x, dtype=np.float64))
    ry = ranks(np.asarray(y, dtype=np.float64))
    rx -= rx.mean()
    ry -= ry.mean()
    denom = np.sqrt((rx * rx).sum() * (ry * ry).sum())
    if denom == 0:
        return 0.0
    return float((rx * ry).sum() / denom)
