"""Kolmogorov-Smirnov distributional privacy (KSDP) measurement.

A mechanism is run on ``t`` sub-databases that contain a document ``x`` and a
simulator on ``t`` that do not.  For each statistic of the outputs the two
samples are compared with a two-sample KS test; the reported ``pi`` is the
smallest p-value over the statistics.  A large ``pi`` means no statistic in
the family tells the two worlds apart.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .matrix import SeededRng

MIN_SAMPLES = 8

Mechanism = Callable[[np.ndarray, SeededRng], object]
Statistic = Callable[[object, np.ndarray], float]


class DomainError(ValueError):
    pass


class Ecdf:
    """Empirical CDF ``F(x) = #{samples <= x} / n``."""

    def __init__(self, samples):
        s = np.sort(np.asarray(samples, dtype=np.float64).ravel())
        if s.size == 0:
            raise DomainError("an ECDF needs at least one sample")
        if not np.all(np.isfinite(s)):
            raise DomainError("samples must be finite")
        self.samples = s

    @property
    def n(self) -> int:
        return self.samples.size

    def __call__(self, x):
        return np.searchsorted(self.samples, x, side="right") / self.n


def _as_ecdf(a) -> Ecdf:
    return a if isinstance(a, Ecdf) else Ecdf(a)


def ks_statistic(F, G) -> float:
    """``sup_x |F(x) - G(x)|`` over the merged sample grid."""
    F, G = _as_ecdf(F), _as_ecdf(G)
    grid = np.concatenate([F.samples, G.samples])
    return float(np.max(np.abs(F(grid) - G(grid))))


def kolmogorov_q(lam: float) -> float:
    """``Q_KS(lam) = 2 sum_{j>=1} (-1)^(j-1) exp(-2 j^2 lam^2)``.

    For small ``lam`` the alternating series converges slowly, so the
    equivalent theta-function form ``1 - sqrt(2 pi)/lam sum exp(-(2j-1)^2 pi^2 / (8 lam^2))``
    is used there instead.
    """
    if lam < 0.1:  # 1 - Q(0.1) is far below double precision
        return 1.0
    if lam < 1.18:
        y = math.exp(-math.pi**2 / (8 * lam * lam))
        s = sum(y ** ((2 * j - 1) ** 2) for j in range(1, 6))
        return max(0.0, min(1.0, 1.0 - math.sqrt(2 * math.pi) / lam * s))
    total = 0.0
    for j in range(1, 101):
        term = math.exp(-2.0 * j * j * lam * lam)
        total += term if j % 2 else -term
        if term < 1e-17:
            break
    return max(0.0, min(1.0, 2.0 * total))


def ks_2sample_pvalue(a, b) -> float:
    """Asymptotic two-sample KS p-value with the small-sample correction."""
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.size < MIN_SAMPLES or b.size < MIN_SAMPLES:
        raise DomainError(f"need at least {MIN_SAMPLES} samples per side, got {a.size} and {b.size}")
    D = ks_statistic(a, b)
    ne = a.size * b.size / (a.size + b.size)
    root = math.sqrt(ne)
    return kolmogorov_q((root + 0.12 + 0.11 / root) * D)


# -- database sampling ---------------------------------------------------------


@dataclass
class SubSample:
    rows: np.ndarray  # indices into X, or None for synthesized data
    data: np.ndarray


def sample_with(X, x_index: int, n_sub: int, rng: SeededRng) -> SubSample:
    """``n_sub - 1`` distinct rows of ``X`` other than ``x`` plus ``x``, shuffled."""
    X = np.asarray(X)
    _check_n_sub(X, n_sub)
    others = np.delete(np.arange(X.shape[0]), x_index)
    idx = np.append(others[rng.choice(others.size, n_sub - 1)], x_index)
    idx = idx[rng.permutation(idx.size)]
    return SubSample(idx, X[idx])


def sample_without(X, x_index: int, n_sub: int, rng: SeededRng) -> SubSample:
    """``n_sub`` distinct rows of ``X`` other than ``x``."""
    X = np.asarray(X)
    _check_n_sub(X, n_sub)
    others = np.delete(np.arange(X.shape[0]), x_index)
    idx = others[rng.choice(others.size, n_sub)]
    return SubSample(idx, X[idx])


def _check_n_sub(X, n_sub):
    if not 1 <= n_sub <= X.shape[0] - 1:
        raise DomainError(f"n_sub={n_sub} must be in [1, {X.shape[0] - 1}]")


def subsample_simulator(X, x_index: int, n_sub: int, rng: SeededRng) -> tuple[SubSample, SubSample]:
    """One with-``x`` and one without-``x`` sub-database."""
    return sample_with(X, x_index, n_sub, rng.child("with")), sample_without(X, x_index, n_sub, rng.child("without"))


def random_db_simulator(shape, rng: SeededRng, sampler: Callable | None = None) -> SubSample:
    """A synthesized database of i.i.d. rows (U[0,1] entries by default)."""
    data = sampler(shape, rng) if sampler is not None else rng.uniform(shape)
    return SubSample(None, np.asarray(data, dtype=np.float64))


def default_n_sub(n_rows: int) -> int:
    return min(n_rows - 1, math.ceil(0.8 * n_rows))


# -- sample cache --------------------------------------------------------------


class SampleCache:
    """Statistic values of mechanism runs, keyed by side and seed.

    The file form is JSON lines: a header object describing the statistics,
    then one ``{"side", "seed", "values"}`` record per run.
    """

    FORMAT = "privdist-ksdp-samples/1"

    def __init__(self, statistics: Sequence[str], meta: dict | None = None):
        self.statistics = list(statistics)
        self.meta = dict(meta or {})
        self.records: dict[tuple[str, int], list[float]] = {}

    def get(self, side: str, seed: int):
        return self.records.get((side, seed))

    def put(self, side: str, seed: int, values) -> None:
        self.records[(side, seed)] = [float(v) for v in values]

    def save(self, path) -> None:
        with open(path, "w") as fh:
            header = {"format": self.FORMAT, "statistics": self.statistics, "meta": self.meta}
            fh.write(json.dumps(header) + "\n")
            for (side, seed), values in sorted(self.records.items()):
                fh.write(json.dumps({"side": side, "seed": seed, "values": values}) + "\n")

    @classmethod
    def load(cls, path) -> "SampleCache":
        lines = Path(path).read_text().splitlines()
        header = json.loads(lines[0])
        if header.get("format") != cls.FORMAT:
            raise ValueError(f"{path} is not a KSDP sample cache")
        cache = cls(header["statistics"], header.get("meta"))
        for line in lines[1:]:
            if line.strip():
                rec = json.loads(line)
                cache.put(rec["side"], rec["seed"], rec["values"])
        return cache


# -- the measurement -------------------------------------------------------------


@dataclass
class KsdpResult:
    pi: float
    pvalues: list[float]
    with_values: np.ndarray  # t x n_statistics
    without_values: np.ndarray
    statistics: list[str] = field(default_factory=list)


def _name(stat) -> str:
    return getattr(stat, "__name__", repr(stat))


def measure_ksdp(
    mech: Mechanism,
    sim: Mechanism,
    stats: Sequence[Statistic],
    X,
    x_index: int,
    t: int,
    rng: SeededRng,
    n_sub: int | None = None,
    without: str = "subsample",
    sampler: Callable | None = None,
    cache: SampleCache | None = None,
) -> KsdpResult:
    """Estimate ``pi``: the minimum KS p-value over ``stats``.

    ``mech`` runs on ``t`` sub-databases containing row ``x_index`` and
    ``sim`` on ``t`` sub-databases without it; ``without="random-db"``
    replaces the latter with synthesized databases of the same shape.
    Every run is evaluated under all statistics once; with a ``cache`` the
    values are stored and reused.
    """
    X = np.asarray(X, dtype=np.float64)
    if t < MIN_SAMPLES:
        raise DomainError(f"t must be at least {MIN_SAMPLES}")
    if without not in ("subsample", "random-db"):
        raise ValueError(f"unknown simulator {without!r}")
    n_sub = default_n_sub(X.shape[0]) if n_sub is None else n_sub
    x = X[x_index]
    names = [_name(s) for s in stats]
    if cache is not None and cache.statistics != names:
        raise ValueError("cache was built for different statistics")

    def run(side: str, j: int):
        seed = j
        if cache is not None and (hit := cache.get(side, seed)) is not None:
            return hit
        r = rng.child(side, j)
        if side == "with":
            db = sample_with(X, x_index, n_sub, r.child("db")).data
            out = mech(db, r.child("mech"))
        else:
            if without == "subsample":
                db = sample_without(X, x_index, n_sub, r.child("db")).data
            else:
                db = random_db_simulator((n_sub, X.shape[1]), r.child("db"), sampler).data
            out = sim(db, r.child("mech"))
        values = [float(s(out, x)) for s in stats]
        if cache is not None:
            cache.put(side, seed, values)
        return values

    with_vals = np.array([run("with", j) for j in range(t)])
    without_vals = np.array([run("without", j) for j in range(t)])
    pvalues = [ks_2sample_pvalue(with_vals[:, i], without_vals[:, i]) for i in range(len(stats))]
    return KsdpResult(min(pvalues), pvalues, with_vals, without_vals, names)


# -- adversary statistics --------------------------------------------------------


def box_least_squares(x, T, tol: float = 1e-8, max_iters: int = 500) -> np.ndarray:
    """``argmin_{u in [0,1]^k} ||x - u T||^2`` by projected gradient, step ``1/||T T^T||_2``."""
    x = np.asarray(x, float).ravel()
    T = np.asarray(T, float)
    G = T @ T.T
    L = float(np.linalg.norm(G, 2))
    u = np.zeros(T.shape[0])
    if L == 0:
        return u
    b = T @ x
    for _ in range(max_iters):
        nxt = np.clip(u - (G @ u - b) / L, 0.0, 1.0)
        if np.max(np.abs(nxt - u)) < tol:
            u = nxt
            break
        u = nxt
    return u


def nmf_statistic(T, w, x) -> float:
    """Topic coefficients of ``x`` weighted by squared topic weights: ``a . w^2``."""
    a = box_least_squares(x, T)
    w = np.asarray(w, float).ravel()
    return float(np.dot(a, w * w))


def nmf_trace_statistic(trace, x) -> float:
    """:func:`nmf_statistic` with ``T`` and the last sweep's denominators read from a trace."""
    T = None
    dens: dict[int, float] = {}
    for label, values in trace.entries:
        if label == "T_final":
            T = values
        elif label.startswith("den/"):
            _, _, topic = label.split("/")
            dens[int(topic)] = float(values[0])
    if T is None or not dens:
        raise DomainError("trace lacks T_final or denominators")
    k = len(dens)
    return nmf_statistic(T.reshape(k, -1), [dens[t] for t in range(k)], x)


@dataclass(frozen=True)
class SigmaSource:
    """Squared singular values available to the adversary."""

    sigma_sq: np.ndarray

    @classmethod
    def revealed(cls, sigma) -> "SigmaSource":
        s = np.asarray(sigma, float)
        return cls(s * s)

    @classmethod
    def estimated(cls, n_v: int, n_a: int, sigma_a) -> "SigmaSource":
        """Scale the adversary's own spectrum by ``(n_v + n_a) / n_a``."""
        if n_a <= 0 or n_v < 0:
            raise DomainError("need n_a > 0 and n_v >= 0")
        s = np.asarray(sigma_a, float)
        return cls((n_v + n_a) / n_a * s * s)


SVD_STATISTIC_NAMES = ("corr_max", "corr_sum", "corr_sumsq", "diff_max", "diff_sum", "diff_sumsq")


def svd_statistics(V_k, source: SigmaSource, x, families: Sequence[int] = (1, 2)) -> np.ndarray:
    """Reductions (max, sum, sum of squares) of ``|S_hat o x x^T|`` and of
    ``|S_hat / ||S_hat||_F - x x^T / ||x|||`` with ``S_hat = V diag(sigma^2) V^T``."""
    V = np.asarray(V_k, float)
    if V.ndim == 1:
        V = V[:, None]
    x = np.asarray(x, float).ravel()
    S_hat = (V * source.sigma_sq[None, :]) @ V.T
    xx = np.outer(x, x)
    out = []
    if 1 in families:
        W = np.abs(S_hat * xx)
        out += [W.max(), W.sum(), (W * W).sum()]
    if 2 in families:
        nx = np.linalg.norm(x)
        if nx == 0:
            raise DomainError("the difference statistics need a nonzero x")
        nS = np.linalg.norm(S_hat)
        D = np.abs((S_hat / nS if nS > 0 else S_hat) - xx / nx)
        out += [D.max(), D.sum(), (D * D).sum()]
    return np.array(out, dtype=np.float64)
