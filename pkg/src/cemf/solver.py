"""Alternating least squares for WMF and CEMF.

Both models share the user half-sweep. The item half-sweep differs: WMF
solves the transposed user problem, CEMF adds the symmetric SPPMI
embedding term and updates items in place in ascending index order
(Gauss-Seidel), so each single update is an exact block minimization and
the objective never increases.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field
from typing import Callable, Literal, Sequence

import numpy as np
from numba import config as _numba_config
from numba import njit, prange

from .core import FactorModel, Hyperparams, InteractionMatrix, check_dims, confidence
from .errors import ParameterError, SolverError
from .sppmi import SppmiMatrix

_log = logging.getLogger(__name__)

# the bundled TBB is often too old; skip it rather than warn on every run
_numba_config.THREADING_LAYER_PRIORITY = ["omp", "workqueue", "tbb"]

Mode = Literal["wmf", "cemf"]
ItemSweep = Literal["gauss-seidel", "jacobi"]


@dataclass(frozen=True)
class TrainConfig:
    hyperparams: Hyperparams = field(default_factory=Hyperparams)
    mode: Mode = "cemf"
    item_sweep: ItemSweep = "gauss-seidel"
    tol: float | None = None

    def __post_init__(self):
        if self.mode not in ("wmf", "cemf"):
            raise ParameterError(f"unknown mode {self.mode!r}")
        if self.item_sweep not in ("gauss-seidel", "jacobi"):
            raise ParameterError(f"unknown item sweep {self.item_sweep!r}")
        if self.tol is not None and not self.tol >= 0:
            raise ParameterError("tol must be nonnegative")


@dataclass(frozen=True)
class LossBreakdown:
    interaction_term: float
    embedding_term: float
    regularization_term: float

    @property
    def total(self) -> float:
        return self.interaction_term + self.embedding_term + self.regularization_term

    def to_dict(self) -> dict:
        d = asdict(self)
        d["total"] = self.total
        return d


# --------------------------------------------------------------------------
# numba kernels; factor matrices are passed row-major, one row per vector


@njit(cache=True)
def _cholesky_solve(A, b):
    """Solve A x = b for SPD A in place. Returns (x, ok)."""
    n = A.shape[0]
    for j in range(n):
        s = A[j, j]
        for k in range(j):
            s -= A[j, k] * A[j, k]
        if not s > 0.0:
            return b, False
        ljj = np.sqrt(s)
        A[j, j] = ljj
        for i in range(j + 1, n):
            t = A[i, j]
            for k in range(j):
                t -= A[i, k] * A[j, k]
            A[i, j] = t / ljj
    for i in range(n):
        t = b[i]
        for k in range(i):
            t -= A[i, k] * b[k]
        b[i] = t / A[i, i]
    for i in range(n - 1, -1, -1):
        t = b[i]
        for k in range(i + 1, n):
            t -= A[k, i] * b[k]
        b[i] = t / A[i, i]
    return b, True


@njit(cache=True)
def _normal_system(r, indptr, indices, conf, other, gram, lam):
    d = other.shape[1]
    A = gram.copy()
    b = np.zeros(d)
    for a in range(d):
        A[a, a] += lam
    for p in range(indptr[r], indptr[r + 1]):
        v = other[indices[p]]
        c = conf[p]
        w = c - 1.0
        for a in range(d):
            b[a] += c * v[a]
            wa = w * v[a]
            for q in range(d):
                A[a, q] += wa * v[q]
    return A, b


@njit(cache=True, parallel=True)
def _solve_rows(rows, indptr, indices, conf, other, gram, lam, out, status):
    for t in prange(rows.shape[0]):
        r = rows[t]
        A, b = _normal_system(r, indptr, indices, conf, other, gram, lam)
        x, ok = _cholesky_solve(A, b)
        if ok:
            out[r, :] = x
        else:
            status[t] = 1


@njit(cache=True)
def _item_system(i, indptr, indices, conf, X, gram, lam, s_indptr, s_indices, s_data, Ynb):
    A, b = _normal_system(i, indptr, indices, conf, X, gram, lam)
    d = X.shape[1]
    for p in range(s_indptr[i], s_indptr[i + 1]):
        y = Ynb[s_indices[p]]
        s = s_data[p]
        for a in range(d):
            b[a] += s * y[a]
            for q in range(d):
                A[a, q] += y[a] * y[q]
    return A, b


@njit(cache=True)
def _solve_items_gauss_seidel(
    order, indptr, indices, conf, X, gram, lam, s_indptr, s_indices, s_data, Y, status
):
    for t in range(order.shape[0]):
        i = order[t]
        A, b = _item_system(i, indptr, indices, conf, X, gram, lam, s_indptr, s_indices, s_data, Y)
        x, ok = _cholesky_solve(A, b)
        if not ok:
            status[t] = 1
            return
        Y[i, :] = x


@njit(cache=True, parallel=True)
def _solve_items_jacobi(
    order, indptr, indices, conf, X, gram, lam, s_indptr, s_indices, s_data, Yold, Y, status
):
    for t in prange(order.shape[0]):
        i = order[t]
        A, b = _item_system(
            i, indptr, indices, conf, X, gram, lam, s_indptr, s_indices, s_data, Yold
        )
        x, ok = _cholesky_solve(A, b)
        if ok:
            Y[i, :] = x
        else:
            status[t] = 1


@njit(cache=True, parallel=True)
def _observed_residuals(indptr, indices, conf, X, Y):
    # sum over observed cells of c (1 - s)^2 - s^2
    n = indptr.shape[0] - 1
    acc = np.zeros(n)
    d = X.shape[1]
    for u in prange(n):
        t = 0.0
        for p in range(indptr[u], indptr[u + 1]):
            y = Y[indices[p]]
            s = 0.0
            for a in range(d):
                s += X[u, a] * y[a]
            t += conf[p] * (1.0 - s) * (1.0 - s) - s * s
        acc[u] = t
    return acc.sum()


@njit(cache=True)
def _embedding_residuals(rows, cols, vals, Y):
    t = 0.0
    d = Y.shape[1]
    for p in range(rows.shape[0]):
        s = 0.0
        for a in range(d):
            s += Y[rows[p], a] * Y[cols[p], a]
        e = vals[p] - s
        t += e * e
    return t


# --------------------------------------------------------------------------


def init_model(n_users: int, n_items: int, hyperparams: Hyperparams, mode: str = "wmf") -> FactorModel:
    """Gaussian(0, init_scale^2) factors from ``hyperparams.seed``."""
    if n_users < 1 or n_items < 1:
        raise ParameterError("need at least one user and one item")
    rng = np.random.default_rng(hyperparams.seed)
    d = hyperparams.d
    X = rng.normal(0.0, 1.0, size=(n_users, d)) * hyperparams.init_scale
    Y = rng.normal(0.0, 1.0, size=(n_items, d)) * hyperparams.init_scale
    return FactorModel(X.T, Y.T, hyperparams, mode=mode)


def _rows(model: FactorModel, which: str) -> np.ndarray:
    """Row-major (n, d) view that writes through to the model."""
    mat = model.X if which == "X" else model.Y
    if not mat.flags.f_contiguous:
        mat = np.asfortranarray(mat)
        setattr(model, which, mat)
    return mat.T


def _conf_data(matrix, alpha: float) -> np.ndarray:
    return np.ascontiguousarray(confidence(matrix.data, alpha), dtype=np.float64)


def _as_index(sel, n) -> np.ndarray:
    if sel is None:
        return np.arange(n, dtype=np.int64)
    out = np.asarray(sel, dtype=np.int64).ravel()
    if out.size and (out.min() < 0 or out.max() >= n):
        raise ParameterError("index out of range")
    return out


def _raise_singular(status, order, what):
    bad = np.flatnonzero(status)
    if bad.size:
        first = int(order[bad[0]])
        raise SolverError(
            f"normal equations for {what} {first} are not positive definite "
            f"({bad.size} failing); use lambda > 0"
        )


def _half_sweep(rows_out, other, matrix, alpha, lam, sel, what):
    gram = other.T @ other
    order = _as_index(sel, rows_out.shape[0])
    status = np.zeros(order.shape[0], dtype=np.int8)
    _solve_rows(
        order,
        matrix.indptr.astype(np.int64),
        matrix.indices.astype(np.int64),
        _conf_data(matrix, alpha),
        np.ascontiguousarray(other),
        gram,
        float(lam),
        rows_out,
        status,
    )
    _raise_singular(status, order, what)


def update_users(
    model: FactorModel, train: InteractionMatrix, hp: Hyperparams, users: Sequence[int] | None = None
) -> None:
    """Exact least-squares solve for every user vector, Y fixed.

    Uses ``sum_i c_ui y_i y_i^T = Y Y^T + sum_{i in I_u} (c_ui - 1) y_i y_i^T``
    so only observed items are visited.
    """
    check_dims(model, train)
    _half_sweep(_rows(model, "X"), _rows(model, "Y"), train.csr, hp.alpha, hp.lam, users, "user")


def update_items_wmf(
    model: FactorModel, train: InteractionMatrix, hp: Hyperparams, items: Sequence[int] | None = None
) -> None:
    """Plain WMF item update: the user update applied to the transpose."""
    check_dims(model, train)
    csc = train.csc
    _half_sweep(_rows(model, "Y"), _rows(model, "X"), csc, hp.alpha, hp.lam, items, "item")


def update_items(
    model: FactorModel,
    train: InteractionMatrix,
    S: SppmiMatrix | None,
    hp: Hyperparams,
    items: Sequence[int] | None = None,
    sweep: ItemSweep = "gauss-seidel",
) -> None:
    """CEMF item update.

    Items are visited in the order given by ``items`` (default: ascending
    index). With ``sweep="gauss-seidel"`` each solve sees the neighbor
    vectors already updated earlier in the sweep; ``"jacobi"`` reads a
    snapshot taken before the sweep and can run in parallel, but gives up
    the per-update descent guarantee.
    """
    check_dims(model, train)
    if S is None:
        S = SppmiMatrix.empty(train.n_items)
    if S.n_items != train.n_items:
        raise ParameterError(f"SPPMI has {S.n_items} items, data has {train.n_items}")
    X = np.ascontiguousarray(_rows(model, "X"))
    Y = _rows(model, "Y")
    csc = train.csc
    order = _as_index(items, train.n_items)
    status = np.zeros(order.shape[0], dtype=np.int8)
    args = (
        order,
        csc.indptr.astype(np.int64),
        csc.indices.astype(np.int64),
        _conf_data(csc, hp.alpha),
        X,
        X.T @ X,
        float(hp.lam),
        S.csr.indptr.astype(np.int64),
        S.csr.indices.astype(np.int64),
        S.csr.data,
    )
    if sweep == "gauss-seidel":
        _solve_items_gauss_seidel(*args, Y, status)
    elif sweep == "jacobi":
        _solve_items_jacobi(*args, Y.copy(), Y, status)
    else:
        raise ParameterError(f"unknown item sweep {sweep!r}")
    _raise_singular(status, order, "item")


def loss(
    model: FactorModel, train: InteractionMatrix, S: SppmiMatrix | None, hp: Hyperparams
) -> LossBreakdown:
    """Joint objective, without materializing the dense N x M prediction.

    The interaction term is ``sum_{all u,i} (x_u^T y_i)^2`` (from the two
    Gram matrices) plus a correction over observed cells.
    """
    check_dims(model, train)
    Xr = np.ascontiguousarray(_rows(model, "X"))
    Yr = np.ascontiguousarray(_rows(model, "Y"))
    all_pairs = float(np.sum((Xr.T @ Xr) * (Yr.T @ Yr)))
    csr = train.csr
    observed = _observed_residuals(
        csr.indptr.astype(np.int64), csr.indices.astype(np.int64), _conf_data(csr, hp.alpha), Xr, Yr
    )
    embedding = 0.0
    if S is not None and S.n_pairs:
        r, c, v = S.upper()
        embedding = _embedding_residuals(r, c, np.ascontiguousarray(v), Yr)
    reg = hp.lam * (float(np.sum(Xr * Xr)) + float(np.sum(Yr * Yr)))
    return LossBreakdown(all_pairs + observed, float(embedding), reg)


def fit(
    train: InteractionMatrix,
    S: SppmiMatrix | None,
    config: TrainConfig,
    callback: Callable[[int, FactorModel], None] | None = None,
) -> tuple[FactorModel, list[LossBreakdown]]:
    """Run ALS sweeps (users, then items) from a seeded Gaussian start.

    Returns the trained model and the loss after each sweep. ``callback`` is
    invoked with ``(sweep, model)`` after each sweep.
    """
    hp = config.hyperparams
    if config.mode == "cemf" and S is None:
        raise ParameterError("cemf mode needs an SPPMI matrix")
    if config.mode == "wmf":
        S = None
    model = init_model(train.n_users, train.n_items, hp, mode=config.mode)
    trace: list[LossBreakdown] = []
    for sweep in range(1, hp.n_iterations + 1):
        update_users(model, train, hp)
        if config.mode == "wmf":
            update_items_wmf(model, train, hp)
        else:
            update_items(model, train, S, hp, sweep=config.item_sweep)
        if not model.is_finite():
            raise SolverError(f"non-finite factor values after sweep {sweep}")
        current = loss(model, train, S, hp)
        trace.append(current)
        _log.info("sweep %d: loss %.6g", sweep, current.total)
        if callback is not None:
            callback(sweep, model)
        if config.tol is not None and len(trace) > 1:
            prev = trace[-2].total
            if prev > 0 and (prev - current.total) / prev < config.tol:
                _log.info("converged after %d sweeps", sweep)
                break
    model.loss_trace = [t.to_dict() for t in trace]
    return model, trace
