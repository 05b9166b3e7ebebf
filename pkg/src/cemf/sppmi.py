"""Item co-occurrence counting and the shifted positive PMI matrix."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .core import InteractionMatrix
from .errors import ParameterError, ParseError


@dataclass(frozen=True)
class CooccurrenceStats:
    """Pair counts ``#(i,j)``, item counts ``#(i)`` and the pair total ``|D|``.

    ``pairs`` is the strict upper triangle (i < j) as a CSR matrix so every
    unordered pair is stored once.
    """

    pairs: sp.csr_matrix
    item_counts: np.ndarray
    total: int

    @property
    def n_items(self) -> int:
        return self.pairs.shape[0]

    def pair_count(self, i: int, j: int) -> int:
        if i == j:
            return 0
        a, b = (i, j) if i < j else (j, i)
        return int(self.pairs[a, b])

    def as_dict(self) -> dict[tuple[int, int], int]:
        coo = self.pairs.tocoo()
        return {(int(a), int(b)): int(c) for a, b, c in zip(coo.row, coo.col, coo.data)}


class SppmiMatrix:
    """Symmetric sparse item x item matrix of strictly positive SPPMI values.

    The full symmetric pattern (both triangles, empty diagonal) is kept in
    ``csr`` since the solver needs row-wise neighbor lookups.
    """

    def __init__(self, csr: sp.csr_matrix, k: int = 1, log_base: str = "e"):
        csr = sp.csr_matrix(csr, dtype=np.float64)
        csr.sort_indices()
        self.csr = csr
        self.k = k
        self.log_base = log_base

    @classmethod
    def from_upper(cls, rows, cols, values, n_items: int, k: int = 1) -> "SppmiMatrix":
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        values = np.asarray(values, dtype=np.float64)
        if len(rows) and (np.any(rows >= cols) or values.min() <= 0):
            raise ParameterError("upper-triangle entries need i < j and s_ij > 0")
        upper = sp.coo_matrix((values, (rows, cols)), shape=(n_items, n_items))
        return cls((upper + upper.T).tocsr(), k)

    @classmethod
    def empty(cls, n_items: int) -> "SppmiMatrix":
        return cls(sp.csr_matrix((n_items, n_items), dtype=np.float64))

    @property
    def n_items(self) -> int:
        return self.csr.shape[0]

    @property
    def n_pairs(self) -> int:
        """Number of stored unordered pairs."""
        return self.csr.nnz // 2

    def upper(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        up = sp.triu(self.csr, k=1).tocoo()
        order = np.lexsort((up.col, up.row))
        return up.row[order].astype(np.int64), up.col[order].astype(np.int64), up.data[order]

    def neighbors(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        s = self.csr
        sl = slice(s.indptr[i], s.indptr[i + 1])
        return s.indices[sl], s.data[sl]

    def write(self, path) -> None:
        """``N NNZ_PAIRS`` header, then ``i<TAB>j<TAB>s_ij`` with i < j."""
        r, c, v = self.upper()
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(f"{self.n_items} {len(r)}\n")
            fh.writelines(
                f"{a}\t{b}\t{x!r}\n" for a, b, x in zip(r.tolist(), c.tolist(), v.tolist())
            )

    @classmethod
    def read(cls, path) -> "SppmiMatrix":
        with open(path, encoding="utf-8") as fh:
            header = fh.readline().split()
            try:
                n_items, nnz = int(header[0]), int(header[1])
            except (IndexError, ValueError):
                raise ParseError("expected header 'M NNZ'", path, 1) from None
            rows, cols, vals = [], [], []
            for lineno, line in enumerate(fh, start=2):
                if not line.strip():
                    continue
                parts = line.split("\t")
                try:
                    a, b, x = int(parts[0]), int(parts[1]), float(parts[2])
                except (IndexError, ValueError):
                    raise ParseError("malformed SPPMI triplet", path, lineno) from None
                if not (0 <= a < b < n_items) or not x > 0:
                    raise ParseError("entry violates i < j < M, s_ij > 0", path, lineno)
                rows.append(a)
                cols.append(b)
                vals.append(x)
        if len(rows) != nnz:
            raise ParseError(f"header declares {nnz} pairs, found {len(rows)}", path)
        return cls.from_upper(rows, cols, vals, n_items)

    def __repr__(self):
        return f"SppmiMatrix(n_items={self.n_items}, pairs={self.n_pairs})"


def _cap_rows(binary: sp.csr_matrix, pair_cap: int, seed: int) -> sp.csr_matrix:
    rng = np.random.default_rng(seed)
    indptr = [0]
    indices = []
    for u in range(binary.shape[0]):
        row = binary.indices[binary.indptr[u] : binary.indptr[u + 1]]
        if len(row) > pair_cap:
            row = np.sort(rng.choice(row, size=pair_cap, replace=False))
        indices.append(row)
        indptr.append(indptr[-1] + len(row))
    idx = np.concatenate(indices) if indices else np.empty(0, dtype=np.int64)
    return sp.csr_matrix((np.ones(len(idx)), idx, indptr), shape=binary.shape)


def count_cooccurrences(
    train: InteractionMatrix, pair_cap: int | None = None, seed: int = 0
) -> CooccurrenceStats:
    """Count unordered item pairs that share a user's interaction list.

    Each user contributes every 2-subset of their item set once, so
    ``#(i,j)`` is the number of users holding both items. With ``pair_cap``
    set, users above the cap are subsampled to ``pair_cap`` items (seeded).
    """
    if train.nnz == 0:
        raise ParameterError("cannot count co-occurrences of an empty matrix")
    binary = train.preference()
    if pair_cap is not None:
        if pair_cap < 2:
            raise ParameterError("pair_cap must be >= 2")
        binary = _cap_rows(binary, pair_cap, seed)
    binary = binary.astype(np.int64)
    co = (binary.T @ binary).tocsr()
    upper = sp.triu(co, k=1).tocsr()
    upper.eliminate_zeros()
    upper.sort_indices()
    item_counts = np.asarray(upper.sum(axis=0)).ravel() + np.asarray(upper.sum(axis=1)).ravel()
    sizes = np.diff(binary.indptr).astype(np.int64)
    total = int((sizes * (sizes - 1) // 2).sum())
    return CooccurrenceStats(upper, item_counts.astype(np.int64), total)


def build_sppmi(stats: CooccurrenceStats, k: int = 1) -> SppmiMatrix:
    """Shifted positive PMI with natural logarithm.

    ``s_ij = ln(#(i,j) |D| / (#(i) #(j))) - ln k``, stored only where
    positive.
    """
    if int(k) != k or k < 1:
        raise ParameterError(f"k must be a positive integer, got {k!r}")
    if stats.total <= 0:
        raise ParameterError("co-occurrence total |D| is zero; no pairs to embed")
    coo = stats.pairs.tocoo()
    counts = coo.data.astype(np.float64)
    ci = stats.item_counts[coo.row].astype(np.float64)
    cj = stats.item_counts[coo.col].astype(np.float64)
    values = np.log(counts * float(stats.total) / (ci * cj)) - math.log(k)
    keep = values > 0
    return SppmiMatrix.from_upper(coo.row[keep], coo.col[keep], values[keep], stats.n_items, k)


def sppmi_sparsity(S: SppmiMatrix) -> float:
    """Percentage of empty off-diagonal cells."""
    m = S.n_items
    if m < 2:
        raise ParameterError("sparsity is undefined for fewer than 2 items")
    return 100.0 * (1.0 - 2.0 * S.n_pairs / (m * (m - 1)))
