"""Rank-one residual iteration NMF (RRI-NMF).

The model approximates a nonnegative ``n x d`` matrix ``X`` by ``W @ T`` with
``W >= 0`` (``n x k``) and ``T >= 0`` (``k x d``), minimizing

    0.5 ||X - W T||_F^2 + alpha ||T||_1 + beta/2 ||T||_F^2
                        + gamma ||W||_1 + delta/2 ||W||_F^2.

One sweep visits the topics in order.  For topic ``t`` the residual
``R_t = X - sum_{l != t} W_{:l} T_{l:}`` has a closed-form nonnegative
least-squares fit for the column ``W_{:t}`` and then for the row ``T_{t:}``,
after which the row is optionally projected onto the probability simplex.

The row update only needs ``W_{:t}^T R_t`` and ``||W_{:t}||^2``; both are sums
over documents, which is what lets :mod:`privdist.pd_nmf` reuse
:func:`sweep` with a secure-sum hook in place of the identity.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.optimize import nnls

from .matrix import SeededRng, ShapeError, as_matrix, frobenius_norm, matmul

EPS_GUARD = 1e-12


class DomainError(ValueError):
    """Input outside the domain of the factorization (e.g. negative data)."""


class RankError(ValueError):
    """Requested rank exceeds what the data supports."""


@dataclass(frozen=True)
class NmfParams:
    k: int
    alpha: float = 0.0
    beta: float = 0.0
    gamma: float = 0.0
    delta: float = 0.0
    max_iters: int = 200
    tol: float = 1e-6
    project_simplex: bool = True

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be at least 1")
        if min(self.alpha, self.beta, self.gamma, self.delta) < 0:
            raise ValueError("regularization weights must be nonnegative")
        if self.max_iters < 0 or self.tol < 0:
            raise ValueError("max_iters and tol must be nonnegative")


@dataclass
class NmfModel:
    W: np.ndarray
    T: np.ndarray
    n_iter: int = 0
    converged: bool = False


def _dot(a: np.ndarray, b: np.ndarray) -> float:
    """Inner product accumulated left to right."""
    prod = a * b
    return float(np.cumsum(prod)[-1]) if prod.size else 0.0


def objective(X, W, T, params: NmfParams) -> float:
    X, W, T = as_matrix(X, name="X"), as_matrix(W, name="W"), as_matrix(T, name="T")
    if W.shape != (X.shape[0], T.shape[0]) or T.shape[1] != X.shape[1]:
        raise ShapeError(f"shapes X{X.shape}, W{W.shape}, T{T.shape} do not conform")
    fit = 0.5 * frobenius_norm(X - matmul(W, T)) ** 2
    reg = (
        params.alpha * np.abs(T).sum()
        + 0.5 * params.beta * frobenius_norm(T) ** 2
        + params.gamma * np.abs(W).sum()
        + 0.5 * params.delta * frobenius_norm(W) ** 2
    )
    return float(fit + reg)


def residual(X, W, T, t: int, form: str = "exclude") -> np.ndarray:
    """Residual of topic ``t`` (0-based).

    ``form="exclude"`` sums every other topic; ``form="add-back"`` computes
    ``X - W T + W_{:t} T_{t:}``.  The two agree up to rounding.
    """
    X, W, T = np.asarray(X, float), np.asarray(W, float), np.asarray(T, float)
    if W.shape != (X.shape[0], T.shape[0]) or T.shape[1] != X.shape[1]:
        raise ShapeError("shapes do not conform")
    if not 0 <= t < T.shape[0]:
        raise IndexError(f"topic {t} out of range")
    if form == "exclude":
        R = X.copy()
        for l in range(T.shape[0]):
            if l != t:
                R -= np.outer(W[:, l], T[l])
        return R
    if form == "add-back":
        return X - matmul(W, T) + np.outer(W[:, t], T[t])
    raise ValueError(f"unknown residual form {form!r}")


def _guarded(den: float) -> float:
    return den if den > 0 else EPS_GUARD


def row_from_sums(num, den: float, alpha: float, beta: float) -> np.ndarray:
    """``[num - alpha]_+ / (den + beta)``: the topic row from aggregated sums."""
    return np.maximum(np.asarray(num, float) - alpha, 0.0) / _guarded(den + beta)


def update_w_column(R, T_row, gamma: float, delta: float) -> np.ndarray:
    T_row = np.asarray(T_row, float)
    num = matmul(R, T_row)
    return np.maximum(num - gamma, 0.0) / _guarded(_dot(T_row, T_row) + delta)


def update_t_row(W_col, R, alpha: float, beta: float) -> np.ndarray:
    W_col = np.asarray(W_col, float)
    return row_from_sums(matmul(W_col, R), _dot(W_col, W_col), alpha, beta)


def simplex_project(v) -> np.ndarray:
    """Euclidean projection onto ``{x >= 0, sum(x) = 1}``.

    Uses the active-set fixed point: repeatedly set the threshold so the
    active entries sum to one and drop entries that fall below it.  The set
    only shrinks, so this ends after at most ``len(v)`` passes.
    """
    v = np.asarray(v, dtype=np.float64)
    if v.ndim != 1 or v.size == 0:
        raise ShapeError("simplex_project expects a nonempty vector")
    active = np.ones(v.size, dtype=bool)
    while True:
        tau = (v[active].sum() - 1.0) / active.sum()
        keep = active & (v > tau)
        if np.array_equal(keep, active):
            break
        active = keep
    x = np.maximum(v - tau, 0.0)
    # remove the last rounding residue so the sum is 1 to machine precision
    return x / x.sum()


def normalize_rows(T) -> np.ndarray:
    """Scale rows to sum to one; all-zero rows become uniform."""
    T = np.array(T, dtype=np.float64)
    for i, row in enumerate(T):
        s = row.sum()
        T[i] = row / s if s > 0 else 1.0 / T.shape[1]
    return T


def random_init(k: int, d: int, rng: SeededRng) -> np.ndarray:
    """I.i.d. U[0,1] entries, rows normalized to sum to one."""
    return normalize_rows(rng.uniform((k, d)))


def nnsvd_init(X, k: int) -> np.ndarray:
    """Nonnegative SVD initialization of the topic rows.

    The leading singular pair gives ``|v_1|``.  Each later pair keeps the
    positive or negative parts of ``(u_j, v_j)``, whichever has the larger
    product of norms.  Rows are then normalized to sum to one.
    """
    X = as_matrix(X, name="X")
    if np.any(X < 0):
        raise DomainError("nnsvd_init needs nonnegative data")
    if k > min(X.shape):
        raise RankError(f"k={k} exceeds min{X.shape}")
    U, S, Vt = np.linalg.svd(X, full_matrices=False)
    T = np.zeros((k, X.shape[1]))
    T[0] = np.sqrt(S[0]) * np.abs(Vt[0])
    for j in range(1, k):
        x, y = U[:, j], Vt[j]
        xp, xn = np.maximum(x, 0), np.maximum(-x, 0)
        yp, yn = np.maximum(y, 0), np.maximum(-y, 0)
        mp = np.linalg.norm(xp) * np.linalg.norm(yp)
        mn = np.linalg.norm(xn) * np.linalg.norm(yn)
        if mp >= mn:
            part, size = yp, mp
        else:
            part, size = yn, mn
        norm = np.linalg.norm(part)
        if norm > 0:
            T[j] = np.sqrt(S[j] * size) * part / norm
    return normalize_rows(T)


def init_w(X, T) -> np.ndarray:
    """Row-wise nonnegative least squares ``min_{w >= 0} ||x_i - w T||``."""
    X, T = np.asarray(X, float), np.asarray(T, float)
    W = np.zeros((X.shape[0], T.shape[0]))
    A = np.ascontiguousarray(T.T)
    for i, row in enumerate(X):
        W[i], _ = nnls(A, row)
    return W


Aggregate = Callable[[int, np.ndarray, float], "tuple[np.ndarray, float]"]


def _identity_aggregate(t, num, den):
    return num, den


def sweep(
    X,
    W: np.ndarray,
    T: np.ndarray,
    E: np.ndarray,
    params: NmfParams,
    aggregate: Aggregate = _identity_aggregate,
    callback: Callable | None = None,
) -> None:
    """One pass over all topics, updating ``W``, ``T`` and ``E = X - W T`` in place.

    ``aggregate(t, num, den)`` turns this holder's ``W_{:t}^T R_t`` and
    ``||W_{:t}||^2`` into the values used for the row update.
    """
    for t in range(params.k):
        R = E + np.outer(W[:, t], T[t])
        W[:, t] = update_w_column(R, T[t], params.gamma, params.delta)
        if callback is not None:
            callback("w", t, W, T, R)
        num, den = aggregate(t, matmul(W[:, t], R), _dot(W[:, t], W[:, t]))
        row = row_from_sums(num, den, params.alpha, params.beta)
        T[t] = simplex_project(row) if params.project_simplex else row
        E[...] = R - np.outer(W[:, t], T[t])
        if callback is not None:
            callback("t", t, W, T, R)


def relative_change(T_new, T_old) -> float:
    base = frobenius_norm(T_old)
    diff = frobenius_norm(np.asarray(T_new) - np.asarray(T_old))
    return diff / base if base > 0 else diff


def check_nonnegative(X, name: str = "X") -> np.ndarray:
    X = as_matrix(X, name=name)
    if np.any(X < 0):
        raise DomainError(f"{name} has negative entries")
    return X


def rri_nmf(X, params: NmfParams, T0, callback: Callable | None = None) -> NmfModel:
    """Centralized RRI-NMF from the initial topics ``T0``.

    ``W`` starts at the nonnegative least-squares fit to ``T0``.  Sweeps stop
    when the relative Frobenius change of ``T`` drops below ``tol`` or after
    ``max_iters`` sweeps.  ``callback(event, t, W, T, R)`` fires after every
    column (``"w"``) and row (``"t"``) update.
    """
    X = check_nonnegative(X)
    T = check_nonnegative(T0, "T0").copy()
    if T.shape != (params.k, X.shape[1]):
        raise ShapeError(f"T0 must be {(params.k, X.shape[1])}, got {T.shape}")
    W = init_w(X, T)
    E = X - matmul(W, T)
    converged = False
    it = 0
    while it < params.max_iters:
        old = T.copy()
        sweep(X, W, T, E, params, callback=callback)
        it += 1
        if relative_change(T, old) < params.tol:
            converged = True
            break
    return NmfModel(W, T, it, converged)


def nnls_objective(Y, Z) -> float:
    """``min_{W >= 0} 0.5 ||Y - W Z||_F^2`` solved row by row."""
    Y, Z = np.asarray(Y, float), np.asarray(Z, float)
    A = np.ascontiguousarray(Z.T)
    total = 0.0
    for row in Y:
        _, rnorm = nnls(A, row)
        total += 0.5 * rnorm**2
    return total
