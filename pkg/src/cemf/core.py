"""Shared containers: the sparse interaction matrix, hyperparameters and the
dense factor model."""

from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np
import scipy.sparse as sp

from .errors import ParameterError, ParseError


def confidence(r_ui, alpha: float):
    """Confidence weight ``1 + alpha * r_ui``.

    Works elementwise on arrays as well as on scalars.
    """
    return 1.0 + alpha * r_ui


@dataclass(frozen=True)
class Hyperparams:
    """Model and training hyperparameters.

    ``lam`` is the L2 regularization weight (``lambda`` in serialized form).
    """

    d: int = 30
    alpha: float = 1.0
    lam: float = 0.01
    k: int = 1
    n_iterations: int = 20
    init_scale: float = 0.01
    seed: int = 0

    def __post_init__(self):
        if int(self.d) != self.d or self.d < 1:
            raise ParameterError(f"d must be a positive integer, got {self.d!r}")
        if int(self.k) != self.k or self.k < 1:
            raise ParameterError(f"k must be a positive integer, got {self.k!r}")
        if int(self.n_iterations) != self.n_iterations or self.n_iterations < 1:
            raise ParameterError(f"n_iterations must be >= 1, got {self.n_iterations!r}")
        if not self.alpha >= 0:
            raise ParameterError(f"alpha must be >= 0, got {self.alpha!r}")
        if not self.lam >= 0:
            raise ParameterError(f"lambda must be >= 0, got {self.lam!r}")
        # zero is allowed: it yields an all-zero starting model
        if not self.init_scale >= 0:
            raise ParameterError(f"init_scale must be >= 0, got {self.init_scale!r}")

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["lambda"] = d.pop("lam")
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Hyperparams":
        d = dict(d)
        if "lambda" in d:
            d["lam"] = d.pop("lambda")
        names = {f.name for f in dataclasses.fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in names})


class InteractionMatrix:
    """Sparse N x M matrix of positive interaction counts ``r_ui``.

    Rows (users) are held in CSR and columns (items) in CSC so both access
    patterns are cheap. Instances are treated as immutable.
    """

    __slots__ = ("_csr", "_csc")

    def __init__(self, matrix: sp.spmatrix | sp.sparray):
        csr = sp.csr_matrix(matrix, dtype=np.float64, copy=True)
        csr.sum_duplicates()
        csr.eliminate_zeros()
        csr.sort_indices()
        if csr.nnz and csr.data.min() <= 0:
            raise ParameterError("interaction counts must be positive")
        if not np.all(np.isfinite(csr.data)):
            raise ParameterError("interaction counts must be finite")
        self._csr = csr
        self._csc = csr.tocsc()
        self._csc.sort_indices()

    @classmethod
    def from_triplets(
        cls,
        users: Iterable[int],
        items: Iterable[int],
        values: Iterable[float],
        n_users: int,
        n_items: int,
    ) -> "InteractionMatrix":
        """Build from parallel index/value sequences.

        Raises ParameterError on duplicate pairs, out-of-range indices, or
        nonpositive values.
        """
        u = np.asarray(list(users) if not isinstance(users, np.ndarray) else users, dtype=np.int64)
        i = np.asarray(list(items) if not isinstance(items, np.ndarray) else items, dtype=np.int64)
        v = np.asarray(list(values) if not isinstance(values, np.ndarray) else values, dtype=np.float64)
        if not (len(u) == len(i) == len(v)):
            raise ParameterError("triplet arrays differ in length")
        if n_users < 0 or n_items < 0:
            raise ParameterError("dimensions must be nonnegative")
        if len(u):
            if u.min() < 0 or u.max() >= n_users or i.min() < 0 or i.max() >= n_items:
                raise ParameterError("index out of range")
            if v.min() <= 0:
                raise ParameterError("interaction counts must be positive")
            keys = u * n_items + i
            if len(np.unique(keys)) != len(keys):
                raise ParameterError("duplicate (user, item) entry")
        mat = sp.csr_matrix((v, (u, i)), shape=(n_users, n_items))
        return cls(mat)

    @classmethod
    def empty(cls, n_users: int, n_items: int) -> "InteractionMatrix":
        return cls(sp.csr_matrix((n_users, n_items), dtype=np.float64))

    @property
    def n_users(self) -> int:
        return self._csr.shape[0]

    @property
    def n_items(self) -> int:
        return self._csr.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self._csr.shape

    @property
    def nnz(self) -> int:
        return self._csr.nnz

    @property
    def csr(self) -> sp.csr_matrix:
        return self._csr

    @property
    def csc(self) -> sp.csc_matrix:
        return self._csc

    def preference(self) -> sp.csr_matrix:
        """Binary view ``p_ui``."""
        p = self._csr.copy()
        p.data[:] = 1.0
        return p

    def user_items(self, u: int) -> np.ndarray:
        s = self._csr
        return s.indices[s.indptr[u] : s.indptr[u + 1]]

    def user_counts(self, u: int) -> np.ndarray:
        s = self._csr
        return s.data[s.indptr[u] : s.indptr[u + 1]]

    def item_users(self, i: int) -> np.ndarray:
        s = self._csc
        return s.indices[s.indptr[i] : s.indptr[i + 1]]

    def item_counts(self, i: int) -> np.ndarray:
        s = self._csc
        return s.data[s.indptr[i] : s.indptr[i + 1]]

    def items_per_user(self) -> np.ndarray:
        return np.diff(self._csr.indptr)

    def users_per_item(self) -> np.ndarray:
        return np.diff(self._csc.indptr)

    def triplets(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        coo = self._csr.tocoo()
        return coo.row.astype(np.int64), coo.col.astype(np.int64), coo.data.copy()

    def transpose(self) -> "InteractionMatrix":
        return InteractionMatrix(self._csr.T)

    def sparsity(self) -> float:
        """Percentage of unobserved cells."""
        cells = self.n_users * self.n_items
        if cells == 0:
            return 100.0
        return 100.0 * (1.0 - self.nnz / cells)

    def __eq__(self, other):
        if not isinstance(other, InteractionMatrix):
            return NotImplemented
        if self.shape != other.shape or self.nnz != other.nnz:
            return False
        a, b = self._csr, other._csr
        return (
            np.array_equal(a.indptr, b.indptr)
            and np.array_equal(a.indices, b.indices)
            and np.array_equal(a.data, b.data)
        )

    __hash__ = None

    def __repr__(self):
        return f"InteractionMatrix(n_users={self.n_users}, n_items={self.n_items}, nnz={self.nnz})"

    def write(self, path) -> None:
        write_triplets(self, path)

    @classmethod
    def read(cls, path) -> "InteractionMatrix":
        return read_triplets(path)


def _fmt(v: float) -> str:
    # %.17g is shortest-safe for round-tripping and prints integers bare
    return f"{v:.17g}"


def write_triplets(matrix: InteractionMatrix, path) -> None:
    """Write ``N M NNZ`` then one ``user<TAB>item<TAB>count`` line per entry."""
    u, i, v = matrix.triplets()
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{matrix.n_users} {matrix.n_items} {matrix.nnz}\n")
        fh.writelines(f"{a}\t{b}\t{_fmt(c)}\n" for a, b, c in zip(u.tolist(), i.tolist(), v.tolist()))


def read_triplets(path) -> InteractionMatrix:
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().split()
        if len(header) != 3:
            raise ParseError("expected header 'N M NNZ'", path, 1)
        try:
            n, m, nnz = (int(x) for x in header)
        except ValueError:
            raise ParseError("non-integer header field", path, 1) from None
        users = np.empty(nnz, dtype=np.int64)
        items = np.empty(nnz, dtype=np.int64)
        vals = np.empty(nnz, dtype=np.float64)
        k = 0
        for lineno, line in enumerate(fh, start=2):
            if not line.strip():
                continue
            parts = line.rstrip("\n").split("\t")
            if len(parts) != 3:
                raise ParseError("expected 3 tab-separated fields", path, lineno)
            if k >= nnz:
                raise ParseError(f"more entries than header NNZ={nnz}", path, lineno)
            try:
                users[k], items[k], vals[k] = int(parts[0]), int(parts[1]), float(parts[2])
            except ValueError:
                raise ParseError("malformed triplet", path, lineno) from None
            k += 1
    if k != nnz:
        raise ParseError(f"header declares {nnz} entries, found {k}", path)
    try:
        return InteractionMatrix.from_triplets(users, items, vals, n, m)
    except ParameterError as exc:
        raise ParseError(str(exc), path) from None


@dataclass
class FactorModel:
    """Dense latent factors: ``X`` is d x N (user columns), ``Y`` is d x M."""

    X: np.ndarray
    Y: np.ndarray
    hyperparams: Hyperparams = field(default_factory=Hyperparams)
    loss_trace: list = field(default_factory=list)
    mode: str = "wmf"

    def __post_init__(self):
        # Fortran order keeps each factor vector contiguous
        self.X = np.asfortranarray(self.X, dtype=np.float64)
        self.Y = np.asfortranarray(self.Y, dtype=np.float64)
        if self.X.ndim != 2 or self.Y.ndim != 2 or self.X.shape[0] != self.Y.shape[0]:
            raise ParameterError(
                f"factor shapes incompatible: X{self.X.shape}, Y{self.Y.shape}"
            )

    @property
    def d(self) -> int:
        return self.X.shape[0]

    @property
    def n_users(self) -> int:
        return self.X.shape[1]

    @property
    def n_items(self) -> int:
        return self.Y.shape[1]

    def is_finite(self) -> bool:
        return bool(np.isfinite(self.X).all() and np.isfinite(self.Y).all())

    def scores(self, u: int) -> np.ndarray:
        return self.X[:, u] @ self.Y

    def copy(self) -> "FactorModel":
        return FactorModel(
            self.X.copy(), self.Y.copy(), self.hyperparams, list(self.loss_trace), self.mode
        )

    def save(self, directory) -> None:
        from .io import save_model

        save_model(self, directory)

    @classmethod
    def load(cls, directory) -> "FactorModel":
        from .io import load_model

        return load_model(directory)


def check_dims(model: FactorModel, train: InteractionMatrix) -> None:
    if model.n_users != train.n_users or model.n_items != train.n_items:
        raise ParameterError(
            f"model is {model.n_users}x{model.n_items} but data is "
            f"{train.n_users}x{train.n_items}"
        )


def ensure_dir(path) -> str:
    os.makedirs(path, exist_ok=True)
    return str(path)
