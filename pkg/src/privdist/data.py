"""Data ingestion, party partitioning and synthetic corpora."""

from __future__ import annotations

import csv
import math
from pathlib import Path

import numpy as np

from .matrix import SeededRng


class DataError(ValueError):
    """Malformed or unusable input data."""


class ConfigError(ValueError):
    """Infeasible or invalid experiment settings."""


def _parse_float(text: str, line: int, col: int) -> float:
    try:
        v = float(text)
    except ValueError:
        raise DataError(f"line {line}, column {col}: cannot parse {text.strip()!r} as a number") from None
    if math.isnan(v):
        raise DataError(f"line {line}, column {col}: NaN entries are not allowed")
    if math.isinf(v):
        raise DataError(f"line {line}, column {col}: infinite entries are not allowed")
    return v


def _load_csv(path: Path) -> np.ndarray:
    rows = []
    with open(path, newline="") as fh:
        for i, rec in enumerate(csv.reader(fh), start=1):
            if not rec or all(not c.strip() for c in rec):
                continue
            rows.append([_parse_float(c, i, j) for j, c in enumerate(rec, start=1)])
            if len(rows[-1]) != len(rows[0]):
                raise DataError(f"line {i}: expected {len(rows[0])} columns, found {len(rows[-1])}")
    if not rows:
        raise DataError(f"{path}: no data")
    return np.array(rows, dtype=np.float64)


def _load_matrix_market(path: Path) -> np.ndarray:
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines or not lines[0].lower().startswith("%%matrixmarket"):
        raise DataError("line 1: missing %%MatrixMarket header")
    header = lines[0].lower().split()
    if len(header) < 5 or header[1] != "matrix":
        raise DataError("line 1: unsupported MatrixMarket object")
    layout, field, symmetry = header[2], header[3], header[4]
    if field not in ("real", "integer", "pattern", "double"):
        raise DataError(f"line 1: unsupported field {field!r}")
    if symmetry not in ("general", "symmetric", "skew-symmetric"):
        raise DataError(f"line 1: unsupported symmetry {symmetry!r}")
    body = [(i, ln) for i, ln in enumerate(lines[1:], start=2) if ln.strip() and not ln.lstrip().startswith("%")]
    if not body:
        raise DataError("missing size line")
    size_line, size = body[0]
    dims = size.split()
    try:
        dims = [int(v) for v in dims]
    except ValueError:
        raise DataError(f"line {size_line}: malformed size line") from None
    entries = body[1:]
    if layout == "array":
        if len(dims) != 2 or field == "pattern":
            raise DataError(f"line {size_line}: malformed array header")
        n, d = dims
        values = [_parse_float(ln.split()[0], i, 1) for i, ln in entries]
        if symmetry != "general":
            raise DataError("symmetric array layout is not supported")
        if len(values) != n * d:
            raise DataError(f"expected {n * d} values, found {len(values)}")
        return np.array(values, dtype=np.float64).reshape(d, n).T  # column-major
    if layout != "coordinate" or len(dims) != 3:
        raise DataError(f"line {size_line}: malformed coordinate header")
    n, d, nnz = dims
    if len(entries) != nnz:
        raise DataError(f"expected {nnz} entries, found {len(entries)}")
    X = np.zeros((n, d))
    for line_no, ln in entries:
        parts = ln.split()
        need = 2 if field == "pattern" else 3
        if len(parts) < need:
            raise DataError(f"line {line_no}: expected {need} fields")
        try:
            r, c = int(parts[0]), int(parts[1])
        except ValueError:
            raise DataError(f"line {line_no}: bad index") from None
        if not (1 <= r <= n and 1 <= c <= d):
            raise DataError(f"line {line_no}: index ({r}, {c}) out of range")
        v = 1.0 if field == "pattern" else _parse_float(parts[2], line_no, 3)
        X[r - 1, c - 1] += v
        if symmetry != "general" and r != c:
            X[c - 1, r - 1] += -v if symmetry == "skew-symmetric" else v
    return X


def load_matrix(path, fmt: str | None = None, nonnegative: bool = False) -> np.ndarray:
    """Read a dense matrix from CSV or MatrixMarket (coordinate or array)."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"{path}: no such file")
    if fmt is None:
        fmt = "matrix-market" if path.suffix.lower() in (".mtx", ".mm") else "csv"
    if fmt == "csv":
        X = _load_csv(path)
    elif fmt == "matrix-market":
        X = _load_matrix_market(path)
    else:
        raise DataError(f"unknown format {fmt!r}")
    if nonnegative and np.any(X < 0):
        r, c = np.argwhere(X < 0)[0]
        raise DataError(f"row {r + 1}, column {c + 1}: negative entry not allowed here")
    return X


def party_size(n: int, fraction: float) -> int:
    if not 0 < fraction <= 1:
        raise ConfigError("party fraction must be in (0, 1]")
    return math.ceil(fraction * n - 1e-9)


def partition(X, M: int, fraction: float | None, rng: SeededRng, mode: str = "disjoint"):
    """Row blocks for ``M`` parties, each of ``ceil(fraction * n)`` distinct rows.

    ``disjoint`` mode never gives a row to two parties; ``independent`` mode
    samples each party separately, so parties may overlap.  With
    ``fraction=None`` the rows are shuffled and split as evenly as possible.
    Returns ``(indices, blocks)``.
    """
    X = np.asarray(X)
    n = X.shape[0]
    if M < 1:
        raise ConfigError("need at least one party")
    if fraction is None:
        if M > n:
            raise ConfigError(f"{M} parties but only {n} rows")
        perm = rng.permutation(n)
        idx = [np.sort(b) for b in np.array_split(perm, M)]
        return idx, [X[i] for i in idx]
    size = party_size(n, fraction)
    if mode == "disjoint":
        if M * size > n:
            raise ConfigError(f"{M} disjoint parties of {size} rows need {M * size} rows, have {n}")
        perm = rng.permutation(n)
        idx = [np.sort(perm[m * size : (m + 1) * size]) for m in range(M)]
    elif mode == "independent":
        idx = [np.sort(rng.child("party", m).choice(n, size)) for m in range(M)]
    else:
        raise ConfigError(f"unknown partition mode {mode!r}")
    return idx, [X[i] for i in idx]


def tfidf(counts, idf: np.ndarray | None = None, normalize: bool = True):
    """TF-IDF weighting with smoothed IDF computed from ``counts`` unless given.

    Each party calls this on its own rows, so the IDF weights are local.
    Returns ``(weighted, idf)``.
    """
    C = np.asarray(counts, dtype=np.float64)
    if np.any(C < 0):
        raise DataError("term counts must be nonnegative")
    if idf is None:
        df = np.count_nonzero(C > 0, axis=0)
        idf = np.log((1.0 + C.shape[0]) / (1.0 + df)) + 1.0
    Y = C * idf[None, :]
    if normalize:
        norms = np.linalg.norm(Y, axis=1, keepdims=True)
        Y = np.divide(Y, norms, out=np.zeros_like(Y), where=norms > 0)
    return Y, idf


# -- synthetic data ------------------------------------------------------------


def topic_corpus(
    n: int, d: int, k: int, rng: SeededRng, noise: float = 0.05, sparsity: float = 0.6, topics=None
):
    """Nonnegative documents mixing ``k`` sparse topics, plus absolute noise.

    Pass the same ``topics`` to draw several samples of one population.
    Returns ``(X, W, T)``.
    """
    if topics is None:
        T = rng.uniform((k, d)) * (rng.uniform((k, d)) > sparsity)
        T = T / np.maximum(T.sum(axis=1, keepdims=True), 1e-12)
    else:
        T = np.asarray(topics, dtype=np.float64)
    W = rng.uniform((n, k)) ** 3
    X = W @ T * d + noise * np.abs(rng.normal((n, d)))
    return X, W, T


def subspace_corpus(n: int, d: int, r: int, rng: SeededRng, spectrum=None, noise: float = 1.0, basis=None):
    """Rows ``z B^T + noise`` around a shared ``r``-dimensional subspace ``B``.

    Pass the same ``basis`` to draw several samples of one population.
    Returns ``(X, B)``.
    """
    if basis is None:
        basis, _ = np.linalg.qr(rng.normal((d, r)))
    spectrum = np.linspace(3.0, 1.5, r) if spectrum is None else np.asarray(spectrum, float)
    Z = rng.normal((n, r)) * spectrum[None, :]
    return Z @ basis.T + noise * rng.normal((n, d)), basis


def heavy_tailed(X, rng: SeededRng, spread: float = 1.0) -> np.ndarray:
    """Scale each row by ``exp(N(0, spread))`` to mimic varying document lengths."""
    X = np.asarray(X, dtype=np.float64)
    return X * np.exp(rng.normal((X.shape[0], 1), spread))


def orthogonal_topics_corpus(docs_per_topic: int, topics_per_party, width: int, rng: SeededRng):
    """Parties whose documents are positive multiples of one of several disjoint topics.

    ``topics_per_party`` lists, per party, the topic ids it draws from.  Topic
    ``t`` is uniform on columns ``[t * width, (t + 1) * width)``.  Returns
    ``(parts, T)``.
    """
    n_topics = 1 + max(max(ts) for ts in topics_per_party)
    T = np.zeros((n_topics, n_topics * width))
    for t in range(n_topics):
        T[t, t * width : (t + 1) * width] = 1.0 / width
    parts = []
    for m, ts in enumerate(topics_per_party):
        r = rng.child("party", m)
        rows = [c * T[t] for t in ts for c in r.uniform(docs_per_topic, 0.5, 2.0)]
        parts.append(np.array(rows)[r.permutation(len(rows))])
    return parts, T
