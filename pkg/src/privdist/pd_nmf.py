"""Private distributed RRI-NMF.

Each party holds a block of rows ``X_m`` of the corpus and keeps its document
weights ``W_m`` to itself.  The topic matrix ``T`` is replicated: for every
topic, the row update needs only ``sum_m W_m[:, t]^T R_t^(m)`` and
``sum_m ||W_m[:, t]||^2``, which the parties obtain by secure summation.
The sweep itself is :func:`privdist.nmf.sweep`, so a single party reproduces
the centralized algorithm exactly.

Initialization merges local models: every party factors its own rows, turns
its topics into a small pseudo-corpus weighted by how much its documents use
each topic, and the parties factor the union of pseudo-corpora from a jointly
sampled random start.
"""

from __future__ import annotations

import hashlib
import math

import numpy as np

from .matrix import SeededRng, matmul
from .net import Party, ProtocolError
from .nmf import (
    NmfParams,
    check_nonnegative,
    init_w,
    nnsvd_init,
    normalize_rows,
    relative_change,
    rri_nmf,
    sweep,
)
from .secsum import SecSumConfig, aggregate
from .topics import Topic


def feature_digest(d: int, features=None) -> bytes:
    h = hashlib.sha256()
    h.update(str(d).encode())
    for name in features or ():
        h.update(b"\0" + str(name).encode())
    return h.digest()


def check_features(party: Party, d: int, features=None) -> None:
    """Abort unless every party declares the same ordered features."""
    rnd = party.next_round()
    mine = feature_digest(d, features)
    party.broadcast(rnd, Topic.FEATURES, mine)
    for sender, theirs in enumerate(party.gather(rnd, Topic.FEATURES)):
        if theirs != mine:
            raise ProtocolError(f"party {party.id}: feature list differs from party {sender}")


def gaussian_sigma(epsilon: float, delta: float, sensitivity: float) -> float:
    """Noise scale of the Gaussian mechanism."""
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    if not 0 < delta < 1:
        raise ValueError("delta must be in (0, 1)")
    if not sensitivity > 0:
        raise ValueError("sensitivity must be positive")
    return sensitivity * math.sqrt(2.0 * math.log(1.25 / delta)) / epsilon


DEAD_TOPIC_SIGMAS = 3.0


class _Aggregator:
    """Secure-sum hook for :func:`sweep` that labels what it reveals."""

    def __init__(self, party: Party, cfg: SecSumConfig, prefix: str, noise_sigma: float | None):
        self.party = party
        self.cfg = cfg
        self.prefix = prefix
        self.sweep = 0
        self.noise = None
        self.sigma = noise_sigma
        if noise_sigma is not None:
            self.noise = (party.rng.child("dp-noise", prefix), noise_sigma / math.sqrt(party.n_parties))

    def _perturb(self, v):
        if self.noise is None:
            return v
        rng, scale = self.noise
        return v + rng.normal(np.shape(v), scale)

    def __call__(self, t, num, den):
        where = f"{self.sweep}/{t}"
        num = aggregate(self.party, self._perturb(num), self.cfg, label=f"{self.prefix}num/{where}")
        den = aggregate(self.party, self._perturb(np.array([den])), self.cfg, label=f"{self.prefix}den/{where}")
        den = float(den[0])
        if self.noise is not None and den <= DEAD_TOPIC_SIGMAS * self.sigma:
            # Indistinguishable from an unused topic.  Dividing the noisy
            # numerator by a near-zero denominator would blow the noise up.
            return np.zeros_like(num), 0.0
        return num, den


def pd_nmf_iter(
    party: Party,
    X_m,
    T0,
    params: NmfParams,
    cfg: SecSumConfig = SecSumConfig(),
    features=None,
    prefix: str = "",
    noise_sigma: float | None = None,
    return_w: bool = False,
):
    """Distributed RRI-NMF sweeps from the shared start ``T0``.

    The trace receives ``T0``, the secure sums ``num/<sweep>/<t>`` and
    ``den/<sweep>/<t>``, and ``T_final`` (all with ``prefix``).
    """
    X_m = check_nonnegative(X_m, "X_m")
    T = np.array(T0, dtype=np.float64)
    if T.shape != (params.k, X_m.shape[1]):
        raise ProtocolError(f"party {party.id}: T0 shape {T.shape} does not match k={params.k}, d={X_m.shape[1]}")
    check_features(party, X_m.shape[1], features)
    party.trace.record(f"{prefix}T0", T)
    W = init_w(X_m, T)
    E = X_m - matmul(W, T)
    agg = _Aggregator(party, cfg, prefix, noise_sigma)
    for it in range(params.max_iters):
        old = T.copy()
        agg.sweep = it
        sweep(X_m, W, T, E, params, aggregate=agg)
        if relative_change(T, old) < params.tol:
            break
    party.trace.record(f"{prefix}T_final", T)
    return (T, W) if return_w else T


def local_start(seed: int, party_id: int, k: int, d: int) -> np.ndarray:
    """A party's contribution to the shared random start: U[0,1] entries."""
    return SeededRng(seed, party_id).child("init-start").uniform((k, d))


def pseudo_corpus(X_m, params: NmfParams) -> np.ndarray:
    """Local model's topics, each row scaled by the norm of its weight column."""
    X_m = check_nonnegative(X_m, "X_m")
    model = rri_nmf(X_m, params, nnsvd_init(X_m, params.k))
    v = np.sqrt(np.cumsum(model.W * model.W, axis=0)[-1])
    return v[:, None] * model.T


def init_params(params: NmfParams, max_iters: int = 200, tol: float = 1e-6) -> NmfParams:
    return NmfParams(
        params.k, params.alpha, params.beta, params.gamma, params.delta, max_iters, tol, params.project_simplex
    )


def pd_nmf_init(
    party: Party,
    X_m,
    params: NmfParams,
    cfg: SecSumConfig = SecSumConfig(),
    seed: int = 0,
    features=None,
    inner_max_iters: int = 200,
    noise_sigma: float | None = None,
):
    """Merged local topics as a starting point for :func:`pd_nmf_iter`."""
    X_m = check_nonnegative(X_m, "X_m")
    d = X_m.shape[1]
    T_hat = pseudo_corpus(X_m, params)
    start = local_start(seed, party.id, params.k, d) / party.n_parties
    T0 = normalize_rows(aggregate(party, start, cfg, label="init/start"))
    return pd_nmf_iter(
        party,
        T_hat,
        T0,
        init_params(params, inner_max_iters),
        cfg,
        features,
        prefix="init/",
        noise_sigma=noise_sigma,
    )


def pd_nmf(
    party: Party,
    X_m,
    params: NmfParams,
    cfg: SecSumConfig = SecSumConfig(),
    seed: int = 0,
    features=None,
    inner_max_iters: int = 200,
    noise_sigma: float | None = None,
    return_w: bool = False,
):
    """Initialization by merging followed by sweeps on the real corpus."""
    T_init = pd_nmf_init(party, X_m, params, cfg, seed, features, inner_max_iters, noise_sigma)
    return pd_nmf_iter(party, X_m, T_init, params, cfg, features, noise_sigma=noise_sigma, return_w=return_w)


def dp_noised_pd_nmf(
    party: Party,
    X_m,
    params: NmfParams,
    epsilon: float,
    delta: float,
    sensitivity: float,
    cfg: SecSumConfig = SecSumConfig(),
    seed: int = 0,
    features=None,
    inner_max_iters: int = 200,
):
    """:func:`pd_nmf` with Gaussian noise on every data-dependent secure sum.

    Each party adds ``N(0, sigma^2 / M)`` before summing, so each revealed
    sum carries noise of total standard deviation ``sigma``.  A topic whose
    noisy ``den`` is at most ``3 sigma`` is treated as unused (post-processing
    of the revealed sums, so the privacy guarantee is unaffected).
    """
    sigma = gaussian_sigma(epsilon, delta, sensitivity)
    return pd_nmf(party, X_m, params, cfg, seed, features, inner_max_iters, noise_sigma=sigma)


# -- centralized references --------------------------------------------------


def merged_start(seed: int, n_parties: int, k: int, d: int) -> np.ndarray:
    """The shared random start the parties compute, evaluated centrally."""
    acc = np.zeros((k, d))
    for m in range(n_parties):
        acc = acc + local_start(seed, m, k, d) / n_parties
    return normalize_rows(acc)


def centralized_init(parts, params: NmfParams, seed: int = 0, inner_max_iters: int = 200) -> np.ndarray:
    """Merge initialization on the stacked pseudo-corpora."""
    d = parts[0].shape[1]
    T_hat = np.vstack([pseudo_corpus(X_m, params) for X_m in parts])
    T0 = merged_start(seed, len(parts), params.k, d)
    return rri_nmf(T_hat, init_params(params, inner_max_iters), T0).T


def centralized_pipeline(parts, params: NmfParams, seed: int = 0, inner_max_iters: int = 200):
    """Merge initialization then RRI-NMF on the stacked corpus."""
    T_init = centralized_init(parts, params, seed, inner_max_iters)
    return rri_nmf(np.vstack(parts), params, T_init)
