"""Dataset loaders, activity filtering and per-user train/validation/test
splitting."""

from __future__ import annotations

import csv
import logging
import math
import os
from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from .core import InteractionMatrix, write_triplets
from .errors import EmptyDatasetError, ParameterError, ParseError

_log = logging.getLogger(__name__)

SourceKind = Literal["ratings", "play_counts", "transactions"]


@dataclass
class RawEvents:
    """Keyed interaction records before indexing.

    ``users``/``items`` hold string keys, ``values`` the event magnitude.
    ``rejected`` tallies records a loader dropped as invalid.
    """

    users: list[str]
    items: list[str]
    values: np.ndarray
    kind: SourceKind
    timestamps: list | None = None
    rejected: int = 0

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if not (len(self.users) == len(self.items) == len(self.values)):
            raise ParameterError("record fields differ in length")
        if len(self.values) and self.values.min() < 0:
            raise ParameterError("event values must be nonnegative")

    def __len__(self):
        return len(self.values)

    def subset(self, mask: np.ndarray) -> "RawEvents":
        idx = np.flatnonzero(mask)
        ts = None if self.timestamps is None else [self.timestamps[k] for k in idx]
        return RawEvents(
            [self.users[k] for k in idx],
            [self.items[k] for k in idx],
            self.values[idx],
            self.kind,
            ts,
            self.rejected,
        )


@dataclass
class SplitDataset:
    train: InteractionMatrix
    validation: InteractionMatrix
    test: InteractionMatrix
    user_ids: list[str]
    item_ids: list[str]
    params: dict = field(default_factory=dict)

    def stats(self) -> dict:
        t = self.train
        return {
            "n_users": t.n_users,
            "n_items": t.n_items,
            "nnz_train": t.nnz,
            "nnz_validation": self.validation.nnz,
            "nnz_test": self.test.nnz,
            "sparsity_train_pct": t.sparsity(),
        }


def _require_nonempty(n, path):
    if n == 0:
        raise EmptyDatasetError(f"no usable records in {path}")


def _looks_like_header(fields) -> bool:
    try:
        float(fields[2])
    except (IndexError, ValueError):
        return True
    return False


def load_movielens(path, rating_threshold: float = 4.0) -> RawEvents:
    """Read ``userId,movieId,rating,timestamp`` and keep ratings at or above
    the threshold, each as a single event of value 1."""
    users, items, ts = [], [], []
    with open(path, encoding="utf-8", newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row:
                continue
            if lineno == 1 and _looks_like_header(row):
                continue
            if len(row) < 3:
                raise ParseError("expected userId,movieId,rating[,timestamp]", path, lineno)
            try:
                rating = float(row[2])
            except ValueError:
                raise ParseError(f"bad rating {row[2]!r}", path, lineno) from None
            if rating >= rating_threshold:
                users.append(row[0].strip())
                items.append(row[1].strip())
                ts.append(row[3].strip() if len(row) > 3 else None)
    _require_nonempty(len(users), path)
    return RawEvents(users, items, np.ones(len(users)), "ratings", ts)


def load_play_counts(path) -> RawEvents:
    """Read ``user<TAB>song<TAB>count`` triplets. Nonpositive counts are
    rejected and tallied in ``rejected``."""
    users, items, values = [], [], []
    rejected = 0
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            parts = line.rstrip("\r\n").split("\t")
            if len(parts) != 3:
                raise ParseError("expected user<TAB>song<TAB>count", path, lineno)
            try:
                count = float(parts[2])
            except ValueError:
                raise ParseError(f"bad count {parts[2]!r}", path, lineno) from None
            if not count > 0:
                rejected += 1
                continue
            users.append(parts[0])
            items.append(parts[1])
            values.append(count)
    if rejected:
        _log.warning("%s: rejected %d records with nonpositive counts", path, rejected)
    _require_nonempty(len(users), path)
    return RawEvents(users, items, values, "play_counts", rejected=rejected)


_RETAIL_COLUMNS = ("InvoiceNo", "StockCode", "Quantity", "CustomerID")


def _normalize_customer(raw: str) -> str:
    raw = raw.strip()
    # spreadsheet exports often render the id as a float
    if raw.endswith(".0") and raw[:-2].isdigit():
        return raw[:-2]
    return raw


def load_transactions(path) -> RawEvents:
    """Read invoice lines (CSV with a header naming at least InvoiceNo,
    StockCode, Quantity, CustomerID).

    Output value per (customer, stock code) is the number of distinct
    invoices containing the pair. Lines without a customer or with
    Quantity <= 0 are dropped.
    """
    invoices: dict[tuple[str, str], set] = {}
    dropped = 0
    with open(path, encoding="utf-8-sig", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise EmptyDatasetError(f"no usable records in {path}") from None
        missing = [c for c in _RETAIL_COLUMNS if c not in header]
        if missing:
            raise ParseError(f"missing columns {missing}", path, 1)
        col = {c: header.index(c) for c in _RETAIL_COLUMNS}
        width = max(col.values()) + 1
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) < width:
                raise ParseError("too few fields", path, lineno)
            try:
                qty = float(row[col["Quantity"]])
            except ValueError:
                raise ParseError(f"bad Quantity {row[col['Quantity']]!r}", path, lineno) from None
            customer = _normalize_customer(row[col["CustomerID"]])
            if not customer or qty <= 0:
                dropped += 1
                continue
            key = (customer, row[col["StockCode"]].strip())
            invoices.setdefault(key, set()).add(row[col["InvoiceNo"]].strip())
    _require_nonempty(len(invoices), path)
    users = [k[0] for k in invoices]
    items = [k[1] for k in invoices]
    values = [len(v) for v in invoices.values()]
    return RawEvents(users, items, values, "transactions", rejected=dropped)


LOADERS = {
    "movielens": "ratings",
    "tasteprofile": "play_counts",
    "onlineretail": "transactions",
}


def load_dataset(kind: str, path, rating_threshold: float = 4.0) -> RawEvents:
    if kind == "movielens":
        return load_movielens(path, rating_threshold)
    if kind == "tasteprofile":
        return load_play_counts(path)
    if kind == "onlineretail":
        return load_transactions(path)
    raise ParameterError(f"unknown dataset {kind!r}; expected one of {sorted(LOADERS)}")


def _distinct_counts(keys: list[str], partners: list[str], mask: np.ndarray) -> dict[str, int]:
    seen: dict[str, set] = {}
    for k, p, keep in zip(keys, partners, mask):
        if keep:
            seen.setdefault(k, set()).add(p)
    return {k: len(v) for k, v in seen.items()}


def filter_activity(
    events: RawEvents, min_users_per_item: int = 0, min_items_per_user: int = 0, binarize: bool = False
) -> RawEvents:
    """Drop items with too few distinct users, then users with too few
    distinct items. One pass each, in that order; the user step can push
    some items back under their threshold."""
    if min_users_per_item < 0 or min_items_per_user < 0:
        raise ParameterError("activity thresholds must be >= 0")
    mask = np.ones(len(events), dtype=bool)
    if min_users_per_item > 0:
        per_item = _distinct_counts(events.items, events.users, mask)
        mask &= np.array([per_item[i] >= min_users_per_item for i in events.items], dtype=bool)
    if min_items_per_user > 0:
        per_user = _distinct_counts(events.users, events.items, mask)
        mask &= np.array(
            [per_user.get(u, 0) >= min_items_per_user for u in events.users], dtype=bool
        )
    if not mask.any():
        raise EmptyDatasetError("activity filtering removed every record")
    out = events.subset(mask)
    if binarize:
        out.values = np.ones(len(out))
    return out


def _index(keys: list[str]) -> tuple[np.ndarray, list[str]]:
    ids: dict[str, int] = {}
    idx = np.fromiter((ids.setdefault(k, len(ids)) for k in keys), dtype=np.int64, count=len(keys))
    return idx, list(ids)


def split_per_user(
    events: RawEvents, test_frac: float = 0.2, val_frac: float = 0.1, seed: int = 0
) -> SplitDataset:
    """Per user, hold out ``ceil(test_frac * |I_u|)`` items for test, then
    ``round(val_frac * rest)`` of the remainder for validation.

    Dense ids follow first-seen order. Duplicate (user, item) records are
    summed first. A user that would end with no training items keeps
    everything in train.
    """
    if not 0 < test_frac < 1:
        raise ParameterError("test_frac must be in (0, 1)")
    if not 0 <= val_frac < 1:
        raise ParameterError("val_frac must be in [0, 1)")
    if len(events) == 0:
        raise EmptyDatasetError("nothing to split")
    u_idx, user_ids = _index(events.users)
    i_idx, item_ids = _index(events.items)
    n, m = len(user_ids), len(item_ids)

    # merge duplicates, then order by (user, first appearance)
    keys = u_idx * m + i_idx
    uniq, first, inverse = np.unique(keys, return_index=True, return_inverse=True)
    vals = np.bincount(inverse, weights=events.values)
    order = np.lexsort((first, uniq // m))
    uniq, vals = uniq[order], vals[order]
    users, items = uniq // m, uniq % m

    bounds = np.searchsorted(users, np.arange(n + 1))
    part = np.zeros(len(users), dtype=np.int8)  # 0 train, 1 val, 2 test
    rng = np.random.default_rng(seed)
    for u in range(n):
        lo, hi = bounds[u], bounds[u + 1]
        size = hi - lo
        n_test = math.ceil(test_frac * size)
        rest = size - n_test
        if rest < 1:
            continue
        n_val = min(int(math.floor(val_frac * rest + 0.5)), rest - 1)
        perm = rng.permutation(size)
        part[lo + perm[:n_test]] = 2
        part[lo + perm[n_test : n_test + n_val]] = 1

    def build(which):
        sel = part == which
        return InteractionMatrix.from_triplets(users[sel], items[sel], vals[sel], n, m)

    params = {"test_frac": test_frac, "val_frac": val_frac, "seed": seed}
    return SplitDataset(build(0), build(1), build(2), user_ids, item_ids, params)


def write_split(split: SplitDataset, out_dir, manifest: dict | None = None) -> dict:
    """Write train/val/test triplet files, id maps and ``manifest.json``."""
    from .io import dump_json

    os.makedirs(out_dir, exist_ok=True)
    write_triplets(split.train, os.path.join(out_dir, "train.tsv"))
    write_triplets(split.validation, os.path.join(out_dir, "val.tsv"))
    write_triplets(split.test, os.path.join(out_dir, "test.tsv"))
    for name, ids in (("users.map", split.user_ids), ("items.map", split.item_ids)):
        with open(os.path.join(out_dir, name), "w", encoding="utf-8") as fh:
            fh.writelines(f"{k}\t{key}\n" for k, key in enumerate(ids))
    info = dict(manifest or {})
    info["split"] = split.params
    info["stats"] = split.stats()
    dump_json(info, os.path.join(out_dir, "manifest.json"))
    return info


def read_id_map(path) -> list[str]:
    ids = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.rstrip("\n").split("\t", 1)
            if len(parts) != 2 or parts[0] != str(len(ids)):
                raise ParseError("expected '<index><TAB><key>' in order", path, lineno)
            ids.append(parts[1])
    return ids
