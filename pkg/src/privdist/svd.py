"""Block power iteration, its private distributed form, and PCA on top of it.

The right singular vectors of the stacked data ``X`` are the top eigenvectors
of ``S = X^T X = sum_m X_m^T X_m``.  In the distributed iteration every party
multiplies its own ``S_m`` with the shared iterate and NormedSecSum returns
only the normalized column sums, so no party learns the singular values.
Before iterating the parties scale ``S_m`` by a public upper bound on
``||S||_2`` so that every column sum has norm at most one, which the
fixed-point circuit requires.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .matrix import SeededRng, as_matrix, frobenius_norm, gaussian_matrix, gram, matmul
from .net import Party
from .normed import NssBackend, TripleStore, float_normalize, normed_secsum
from .secsum import SecSumConfig, aggregate, float_sum

SIGN_TOL = 1e-6


class DegeneracyError(ValueError):
    """Rank-deficient iterate or all-zero data."""


class DomainError(ValueError):
    """Input matrix is not symmetric."""


def orthonormalize(V, tol: float = 1e-10) -> np.ndarray:
    """Modified Gram-Schmidt with one reorthogonalization pass.

    Each column is then multiplied by the sign of its first component whose
    magnitude exceeds ``SIGN_TOL`` so that results are comparable across runs.
    """
    V = np.array(V, dtype=np.float64)
    if V.ndim != 2:
        raise ValueError("orthonormalize expects a matrix")
    d, k = V.shape
    Q = np.zeros((d, k))
    for j in range(k):
        v = V[:, j].copy()
        scale = frobenius_norm(v)
        for _ in range(2):
            for i in range(j):
                v = v - np.dot(Q[:, i], v) * Q[:, i]
        norm = frobenius_norm(v)
        if scale == 0 or norm <= tol * max(scale, 1.0):
            raise DegeneracyError(f"column {j} is linearly dependent on the previous ones")
        v = v / norm
        big = np.flatnonzero(np.abs(v) > SIGN_TOL)
        if big.size and v[big[0]] < 0:
            v = -v
        Q[:, j] = v
    return Q


def check_symmetric(S, tol: float = 1e-8) -> np.ndarray:
    S = as_matrix(S, name="S")
    if S.shape[0] != S.shape[1]:
        raise DomainError(f"S must be square, got {S.shape}")
    scale = max(1.0, float(np.max(np.abs(S)))) if S.size else 1.0
    if S.size and np.max(np.abs(S - S.T)) > tol * scale:
        raise DomainError("S is not symmetric")
    return S


def _power_step(product: np.ndarray) -> np.ndarray:
    cols = [float_normalize(product[:, i]) for i in range(product.shape[1])]
    return orthonormalize(np.column_stack(cols))


def block_power_iteration(S, k: int, tau: int, rng: SeededRng | None = None, V0=None, callback=None) -> np.ndarray:
    """Top-``k`` eigenvectors of a symmetric ``S`` by ``tau`` power steps.

    The start is ``N(0, 1/d)`` entries (standard deviation ``1/d``) drawn from
    ``rng``, unless ``V0`` is given.  Each step multiplies by ``S``, scales the
    columns to unit length and orthonormalizes.
    """
    S = check_symmetric(S)
    d = S.shape[0]
    if not 1 <= k <= d:
        raise ValueError(f"k must be in [1, {d}]")
    if tau < 1:
        raise ValueError("tau must be at least 1")
    if V0 is None:
        if rng is None:
            raise ValueError("need rng or V0")
        V0 = gaussian_matrix(d, k, 1.0 / d, rng)
    V = np.array(V0, dtype=np.float64)
    for it in range(tau):
        V = _power_step(matmul(S, V))
        if callback is not None:
            callback(it, V)
    return V


def party_start(seed: int, party_id: int, n_parties: int, d: int, k: int) -> np.ndarray:
    """One party's share of the random start, ``N(0, 1/(sqrt(M) d))``."""
    return gaussian_matrix(d, k, 1.0 / (math.sqrt(n_parties) * d), SeededRng(seed, party_id))


def distributed_start(seed: int, n_parties: int, d: int, k: int) -> np.ndarray:
    """The summed start of all parties, as the distributed iteration sees it."""
    return float_sum([party_start(seed, m, n_parties, d, k) for m in range(n_parties)])


@dataclass(frozen=True)
class SvdConfig:
    k: int
    tau: int = 100
    backend: NssBackend = field(default_factory=lambda: NssBackend("float"))
    secsum: SecSumConfig = field(default_factory=SecSumConfig)
    data_bound: float = 1e6  # magnitude bound for counts, column sums and norms

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be at least 1")
        if self.tau < 1:
            raise ValueError("tau must be at least 1")


def scale_bound(party: Party, S_m, cfg: SvdConfig | None = None, label: str = "scale") -> float:
    """Secure sum of local Frobenius norms, an upper bound on ``||S||_2``."""
    cfg = cfg or SvdConfig(1)
    s = float(aggregate(party, [frobenius_norm(S_m)], cfg.secsum, label=label, bound=cfg.data_bound)[0])
    if s <= 0:
        raise DegeneracyError("all parties hold zero data")
    return s


def pd_svd(
    party: Party,
    X_m,
    cfg: SvdConfig,
    seed: int = 0,
    store: TripleStore | None = None,
    callback=None,
) -> np.ndarray:
    """Private distributed block power iteration on ``S = sum_m X_m^T X_m``.

    Trace labels: ``scale``, ``V0``, ``V/<iteration>/<column>`` (the
    normalized column sums) and ``V_final``.
    """
    X_m = as_matrix(X_m, name="X_m")
    d = X_m.shape[1]
    if not cfg.k <= d:
        raise ValueError(f"k={cfg.k} exceeds d={d}")
    S_m = gram(X_m)
    s = scale_bound(party, S_m, cfg)
    S_m = S_m / s
    start = party_start(seed, party.id, party.n_parties, d, cfg.k)
    V = aggregate(party, start, cfg.secsum, label="V0")
    for it in range(cfg.tau):
        cols = [
            normed_secsum(party, matmul(S_m, V[:, i]), cfg.backend, store, label=f"V/{it}/{i}")
            for i in range(cfg.k)
        ]
        V = orthonormalize(np.column_stack(cols))
        if callback is not None:
            callback(it, V)
    party.trace.record("V_final", V)
    return V


def centering_shift(party: Party, X_m, cfg: SvdConfig, mode: str = "global") -> np.ndarray:
    """Row vector each party subtracts from its rows before the SVD.

    ``global`` subtracts the exact mean of the stacked data.  ``literal``
    subtracts ``(n_m / n)`` times the local column sums, which does not
    center the data in general and is kept only for comparison.
    """
    X_m = as_matrix(X_m, name="X_m")
    n = float(aggregate(party, [X_m.shape[0]], cfg.secsum, label="n", bound=cfg.data_bound)[0])
    if n <= 0:
        raise DegeneracyError("no rows")
    colsum = X_m.sum(axis=0)
    if mode == "global":
        return aggregate(party, colsum, cfg.secsum, label="column_sums", bound=cfg.data_bound) / n
    if mode == "literal":
        return (X_m.shape[0] / n) * colsum
    raise ValueError(f"unknown centering mode {mode!r}")


def pd_pca(
    party: Party,
    X_m,
    cfg: SvdConfig,
    seed: int = 0,
    store: TripleStore | None = None,
    centering: str = "global",
) -> np.ndarray:
    """Principal directions of the stacked data via centering then :func:`pd_svd`."""
    X_m = as_matrix(X_m, name="X_m")
    mu = centering_shift(party, X_m, cfg, centering)
    return pd_svd(party, X_m - mu, cfg, seed, store)


def lra_error(X, V) -> float:
    """``||X - X V V^T||_F``."""
    X, V = np.asarray(X, float), np.asarray(V, float)
    return frobenius_norm(X - matmul(matmul(X, V), V.T))


RIDGE = 1e-10


def pcr_fit(X, y, V) -> np.ndarray:
    """Least squares of the centered targets on the projected data ``X V``.

    Falls back to a ``1e-10`` ridge when ``X V`` is rank deficient.
    """
    Xh = matmul(np.asarray(X, float), np.asarray(V, float))
    y = np.asarray(y, float).ravel()
    y0 = y - y.mean()
    if np.linalg.matrix_rank(Xh) < Xh.shape[1]:
        G = Xh.T @ Xh + RIDGE * np.eye(Xh.shape[1])
        return np.linalg.solve(G, Xh.T @ y0)
    beta, *_ = np.linalg.lstsq(Xh, y0, rcond=None)
    return beta


def pcr_predict(X, V, beta, offset: float = 0.0) -> np.ndarray:
    return matmul(matmul(np.asarray(X, float), np.asarray(V, float)), np.asarray(beta, float)) + offset
