"""Top-n recommendation and Precision@n / Recall@n, overall and per user
activity group."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping, Sequence

import numpy as np
import scipy.sparse as sp

from .core import FactorModel, InteractionMatrix
from .errors import ParameterError

DEFAULT_N = (5, 10, 20, 50, 100)

# training-interaction count boundaries; medium is inclusive on both ends
GROUPS = ("low", "medium", "high")
LOW_BELOW = 20
HIGH_ABOVE = 100


def activity_group(n_train_items: int) -> str:
    if n_train_items < LOW_BELOW:
        return "low"
    if n_train_items <= HIGH_ABOVE:
        return "medium"
    return "high"


def _top_n(scores: np.ndarray, excluded: np.ndarray, n: int) -> np.ndarray:
    """Indices of the n largest scores, ties to the lower index.

    Bounded selection: a partition finds the n-th best score, then only
    candidates at or above it get sorted.
    """
    eligible = np.ones(scores.shape[0], dtype=bool)
    eligible[excluded] = False
    idx = np.flatnonzero(eligible)
    if idx.size == 0:
        return idx
    s = scores[idx]
    if n < idx.size:
        kth = np.partition(s, idx.size - n)[idx.size - n]
        keep = s >= kth
        idx, s = idx[keep], s[keep]
    # lexsort: last key is primary; idx is already ascending for tie-break
    order = np.lexsort((idx, -s))
    return idx[order[:n]]


def _exclusions(train: InteractionMatrix, extra: InteractionMatrix | None) -> sp.csr_matrix:
    if extra is None:
        return train.csr
    if extra.shape != train.shape:
        raise ParameterError("exclusion matrix shape differs from train")
    return (train.csr + extra.csr).tocsr()


def recommend_top_n(
    model: FactorModel,
    train: InteractionMatrix,
    u: int,
    n: int,
    exclude: InteractionMatrix | None = None,
) -> np.ndarray:
    """Rank the n best-scoring items for user ``u`` that are not in the
    user's training interactions (nor in ``exclude``, e.g. validation).

    Returns fewer than n items when fewer are eligible.
    """
    if not 0 <= u < train.n_users:
        raise ParameterError(f"user {u} out of range")
    if n < 1:
        raise ParameterError("n must be >= 1")
    excl = _exclusions(train, exclude)
    seen = excl.indices[excl.indptr[u] : excl.indptr[u + 1]]
    return _top_n(model.scores(u), seen, n)


def recommend_all(
    model: FactorModel,
    train: InteractionMatrix,
    n: int,
    users: Iterable[int] | None = None,
    exclude: InteractionMatrix | None = None,
    chunk: int = 1024,
) -> dict[int, np.ndarray]:
    """Top-n lists for many users, scoring in blocks of ``chunk`` users."""
    if n < 1:
        raise ParameterError("n must be >= 1")
    excl = _exclusions(train, exclude)
    users = np.arange(train.n_users) if users is None else np.asarray(list(users), dtype=np.int64)
    out = {}
    for start in range(0, len(users), chunk):
        block = users[start : start + chunk]
        scores = model.X[:, block].T @ model.Y
        for row, u in zip(scores, block.tolist()):
            seen = excl.indices[excl.indptr[u] : excl.indptr[u + 1]]
            out[u] = _top_n(row, seen, n)
    return out


@dataclass
class MetricSet:
    n_users: int
    precision: dict[int, float | None] = field(default_factory=dict)
    recall: dict[int, float | None] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "n_users": self.n_users,
            "precision": {str(k): v for k, v in self.precision.items()},
            "recall": {str(k): v for k, v in self.recall.items()},
        }


@dataclass
class EvalReport:
    n_values: tuple[int, ...]
    overall: MetricSet
    groups: dict[str, MetricSet]
    n_evaluated: int
    n_skipped: int
    meta: dict = field(default_factory=dict)

    @property
    def precision(self) -> dict[int, float | None]:
        return self.overall.precision

    @property
    def recall(self) -> dict[int, float | None]:
        return self.overall.recall

    def to_dict(self) -> dict:
        return {
            "n_values": list(self.n_values),
            "n_evaluated": self.n_evaluated,
            "n_skipped": self.n_skipped,
            "overall": self.overall.to_dict(),
            "groups": {g: m.to_dict() for g, m in self.groups.items()},
            "meta": self.meta,
        }

    def rows(self) -> list[tuple[str, int, str, float | None, int]]:
        """(group, n, metric, value, n_users) rows; overall is group "all"."""
        out = []
        for name, ms in [("all", self.overall), *self.groups.items()]:
            for n in self.n_values:
                out.append((name, n, "precision", ms.precision[n], ms.n_users))
                out.append((name, n, "recall", ms.recall[n], ms.n_users))
        return out

    def write_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["group", "n", "metric", "value", "n_users"])
            for g, n, metric, value, users in self.rows():
                w.writerow([g, n, metric, "" if value is None else f"{value:.10g}", users])


def _hits_per_user(recs, truth: sp.csr_matrix, users, n_values):
    """(|V_u|, hits at each n) for every user."""
    sizes = np.empty(len(users), dtype=np.int64)
    hits = np.zeros((len(users), len(n_values)), dtype=np.int64)
    for row, u in enumerate(users):
        v = truth.indices[truth.indptr[u] : truth.indptr[u + 1]]
        sizes[row] = len(v)
        ranked = np.asarray(recs.get(u, ()), dtype=np.int64)
        hit = np.isin(ranked, v)
        csum = np.concatenate([[0], np.cumsum(hit)])
        for col, n in enumerate(n_values):
            hits[row, col] = csum[min(n, len(ranked))]
    return sizes, hits


def _metrics(sizes, hits, n_values) -> MetricSet:
    """Means are formed as exact rationals and rounded once, so the result
    does not depend on user order."""
    users = int(len(sizes))
    m = MetricSet(users)
    distinct = np.unique(sizes)
    for col, n in enumerate(n_values):
        if users == 0:
            m.precision[n] = None
            m.recall[n] = None
            continue
        h = hits[:, col]
        m.precision[n] = float(Fraction(int(h.sum()), n * users))
        total = sum(
            (Fraction(int(h[sizes == s].sum()), int(s)) for s in distinct), Fraction(0)
        )
        m.recall[n] = float(total / users)
    return m


def _check_n(n_values) -> tuple[int, ...]:
    n_values = tuple(int(n) for n in n_values)
    if not n_values or min(n_values) < 1:
        raise ParameterError("n values must be positive")
    return n_values


def precision_recall_at_n(
    recs: Mapping[int, Sequence[int]], test: InteractionMatrix, n_values: Iterable[int] = DEFAULT_N
) -> EvalReport:
    """Mean Precision@n and Recall@n over users with a nonempty test set.

    ``recs`` maps user index to a ranked list at least ``max(n_values)``
    long (shorter lists are evaluated as-is). Users without test items are
    skipped and counted. No activity grouping; see ``group_report``.
    """
    n_values = _check_n(n_values)
    truth = test.csr
    users = np.flatnonzero(np.diff(truth.indptr) > 0)
    sizes, hits = _hits_per_user(recs, truth, users, n_values)
    overall = _metrics(sizes, hits, n_values)
    return EvalReport(n_values, overall, {}, len(users), test.n_users - len(users))


def group_report(
    recs: Mapping[int, Sequence[int]],
    train: InteractionMatrix,
    test: InteractionMatrix,
    n: int | Iterable[int] = DEFAULT_N,
) -> EvalReport:
    """Overall metrics plus low / medium / high activity breakdown.

    Groups are by training interaction count: low < 20, medium 20..100,
    high > 100. Empty groups report ``None`` metrics.
    """
    n_values = _check_n([n] if isinstance(n, (int, np.integer)) else n)
    if train.shape != test.shape:
        raise ParameterError("train and test shapes differ")
    truth = test.csr
    users = np.flatnonzero(np.diff(truth.indptr) > 0)
    sizes, hits = _hits_per_user(recs, truth, users, n_values)
    activity = train.items_per_user()[users]
    labels = np.array([activity_group(int(a)) for a in activity], dtype=object)
    groups = {}
    for g in GROUPS:
        mask = labels == g if len(labels) else np.zeros(0, dtype=bool)
        groups[g] = _metrics(sizes[mask], hits[mask], n_values)
    return EvalReport(
        n_values,
        _metrics(sizes, hits, n_values),
        groups,
        len(users),
        test.n_users - len(users),
    )


def evaluate(
    model: FactorModel,
    train: InteractionMatrix,
    test: InteractionMatrix,
    n_values: Iterable[int] = DEFAULT_N,
    exclude: InteractionMatrix | None = None,
) -> EvalReport:
    """Recommend for every user with test items and build the grouped report."""
    n_values = _check_n(n_values)
    users = np.flatnonzero(np.diff(test.csr.indptr) > 0)
    recs = recommend_all(model, train, max(n_values), users, exclude=exclude)
    return group_report(recs, train, test, n_values)


def is_valid_metric(x) -> bool:
    return x is None or (not math.isnan(x) and 0.0 <= x <= 1.0)
