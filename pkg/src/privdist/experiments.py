"""Experiment drivers: equivalence, learning uplift, measured privacy, DP baseline.

Every driver takes an :class:`ExperimentConfig` and returns a :class:`Report`
that embeds the config, so any report can be re-run.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data import (
    ConfigError,
    heavy_tailed,
    load_matrix,
    partition,
    subspace_corpus,
    tfidf,
    topic_corpus,
)
from .ksdp import SVD_STATISTIC_NAMES, SigmaSource, default_n_sub, measure_ksdp, nmf_trace_statistic, svd_statistics
from .matrix import SeededRng, frobenius_norm, gram
from .net import SimNetwork
from .nmf import NmfParams, nnls_objective, random_init, rri_nmf
from .normed import MAX_F, MIN_F, NssBackend, dealer_offline, normed_secsum
from .pd_nmf import centralized_pipeline, dp_noised_pd_nmf, gaussian_sigma, pd_nmf, pd_nmf_iter
from .secsum import SecSumConfig, aggregate
from .svd import (
    SvdConfig,
    block_power_iteration,
    distributed_start,
    lra_error,
    party_start,
    pcr_fit,
    pcr_predict,
    pd_pca,
    pd_svd,
)

EXPERIMENTS = ("equivalence", "uplift", "privacy", "dp-baseline")
ALGORITHMS = ("nmf", "svd", "pca")
MECHANISMS = ("secsum", "leaky", "pd-svd", "pd-nmf")


@dataclass
class ExperimentConfig:
    """All knobs of one experiment run; validated before anything executes."""

    experiment: str = "equivalence"
    algorithm: str = "nmf"
    parties: int = 3
    party_fraction: float | None = None
    partition_mode: str = "disjoint"
    k: int = 5
    iters: int = 50  # NMF sweeps or power iterations
    alpha: float = 0.0
    beta: float = 0.0
    gamma: float = 0.0
    delta: float = 0.0
    project_simplex: bool = True
    f_bits: int = 31
    secsum_mode: str = "float"
    backend: str = "float"  # NormedSecSum backend for the SVD
    transport: str = "memory"
    seed: int = 0
    dataset: str | None = None
    dataset_format: str | None = None
    use_tfidf: bool = False
    rows: int = 200
    cols: int = 50
    data_bound: float = 1e6
    tolerance: float = 1e-6
    # uplift
    party_sizes: list[int] = field(default_factory=lambda: [10, 40, 160])
    holdout_rows: int = 500
    trials: int = 3
    noise: float = 1.0
    metric: str = "lra"  # lra | pcr | frobenius
    # privacy
    mechanism: str = "secsum"
    documents: int = 20
    samples: int = 100
    database_sizes: list[int] = field(default_factory=lambda: [500])
    universe_rows: int = 2000
    adversary_rows: int = 20
    # DP baseline
    epsilon: float = 0.25
    dp_delta: float = 0.01
    sensitivity: float = 1.0
    output: str | None = None

    def validate(self) -> "ExperimentConfig":
        def need(cond, msg):
            if not cond:
                raise ConfigError(msg)

        need(self.experiment in EXPERIMENTS, f"experiment must be one of {EXPERIMENTS}")
        need(self.algorithm in ALGORITHMS, f"algorithm must be one of {ALGORITHMS}")
        need(self.parties >= 1, "parties must be at least 1")
        need(self.party_fraction is None or 0 < self.party_fraction <= 1, "party_fraction must be in (0, 1]")
        need(self.partition_mode in ("disjoint", "independent"), "partition_mode must be disjoint or independent")
        need(self.k >= 1, "k must be at least 1")
        need(self.iters >= 1, "iters must be at least 1")
        need(min(self.alpha, self.beta, self.gamma, self.delta) >= 0, "regularization must be nonnegative")
        need(MIN_F <= self.f_bits <= MAX_F, f"f_bits must be in [{MIN_F}, {MAX_F}]")
        need(self.secsum_mode in ("float", "fixed", "prf"), "secsum_mode must be float, fixed or prf")
        need(self.backend in ("float", "ideal", "shared-circuit"), "backend must be float, ideal or shared-circuit")
        need(self.transport in ("memory", "tcp"), "transport must be memory or tcp")
        need(self.rows >= 1 and self.cols >= 1, "rows and cols must be positive")
        need(self.k <= self.cols, "k cannot exceed the number of columns")
        need(self.tolerance > 0, "tolerance must be positive")
        need(len(self.party_sizes) >= 1 and min(self.party_sizes) >= self.k, "party sizes must be at least k")
        need(self.trials >= 1 and self.holdout_rows >= 1, "trials and holdout_rows must be positive")
        need(self.metric in ("lra", "pcr", "frobenius"), "metric must be lra, pcr or frobenius")
        need(self.mechanism in MECHANISMS, f"mechanism must be one of {MECHANISMS}")
        need(self.documents >= 1 and self.samples >= 8, "need documents >= 1 and samples >= 8")
        need(len(self.database_sizes) >= 1 and min(self.database_sizes) >= 2, "database sizes must be >= 2")
        need(self.epsilon > 0 and 0 < self.dp_delta < 1 and self.sensitivity > 0, "invalid DP parameters")
        need(self.documents <= self.universe_rows, "documents cannot exceed universe_rows")
        if self.experiment == "privacy" and self.mechanism in ("secsum", "leaky"):
            need(max(self.database_sizes) < self.universe_rows, "database sizes must be below universe_rows")
        return self

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, values: dict) -> "ExperimentConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(values) - names
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**values).validate()

    def nmf_params(self, max_iters: int | None = None, tol: float = 1e-6) -> NmfParams:
        return NmfParams(
            self.k,
            self.alpha,
            self.beta,
            self.gamma,
            self.delta,
            max_iters=self.iters if max_iters is None else max_iters,
            tol=tol,
            project_simplex=self.project_simplex,
        )

    def secsum_config(self) -> SecSumConfig:
        return SecSumConfig(self.secsum_mode, self.f_bits, self.data_bound)

    def svd_config(self) -> SvdConfig:
        return SvdConfig(
            self.k,
            self.iters,
            NssBackend(self.backend, self.f_bits),
            self.secsum_config(),
            self.data_bound,
        )


@dataclass
class Report:
    """Outcome of one experiment: config echo, metrics, digests and timings."""

    experiment: str
    config: dict
    per_party: list[dict] = field(default_factory=list)
    global_metrics: dict = field(default_factory=dict)
    digests: dict = field(default_factory=dict)
    timing: dict = field(default_factory=dict)
    passed: bool | None = None

    FORMAT = "privdist-report/1"

    def to_json(self) -> str:
        doc = {"format": self.FORMAT, **dataclasses.asdict(self)}
        return json.dumps(_plain(doc), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "Report":
        doc = json.loads(text)
        if doc.pop("format", None) != cls.FORMAT:
            raise ValueError("not a privdist report")
        return cls(**doc)

    def write(self, directory) -> tuple[Path, Path]:
        """Write ``<experiment>.json`` and a flat ``<experiment>.csv`` of per-party rows."""
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        stem = self.experiment.replace("-", "_")
        jpath, cpath = directory / f"{stem}.json", directory / f"{stem}.csv"
        jpath.write_text(self.to_json() + "\n")
        columns: list[str] = []
        for row in self.per_party:
            columns += [c for c in row if c not in columns]
        with open(cpath, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=columns)
            writer.writeheader()
            for row in self.per_party:
                writer.writerow(_plain(row))
        return jpath, cpath

    @classmethod
    def read(cls, path) -> "Report":
        return cls.from_json(Path(path).read_text())

    def rerun(self) -> "Report":
        return run(ExperimentConfig.from_dict(self.config))


def _plain(value):
    """JSON-friendly copy: numpy scalars and arrays become Python objects."""
    if isinstance(value, dict):
        return {k: _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, np.ndarray):
        return _plain(value.tolist())
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, float) and not math.isfinite(value):
        return repr(value)
    return value


# -- helpers -------------------------------------------------------------------------


def _network(cfg: ExperimentConfig, n_parties: int, seed: int) -> SimNetwork:
    return SimNetwork(n_parties, transport=cfg.transport, seed=seed)


def _trace_digests(net: SimNetwork) -> dict:
    digests = [p.trace.digest() for p in net.parties]
    return {"trace": digests[0], "parties_agree": len(set(digests)) == 1}


def load_dataset(cfg: ExperimentConfig, rng: SeededRng, nonnegative: bool) -> np.ndarray:
    """The configured dataset, or a synthetic one of ``rows x cols``."""
    if cfg.dataset is not None:
        return load_matrix(cfg.dataset, cfg.dataset_format, nonnegative=nonnegative)
    if nonnegative:
        return rng.uniform((cfg.rows, cfg.cols))
    return rng.normal((cfg.rows, cfg.cols))


def split_parties(cfg: ExperimentConfig, X, rng: SeededRng) -> list[np.ndarray]:
    _, parts = partition(X, cfg.parties, cfg.party_fraction, rng, cfg.partition_mode)
    if cfg.use_tfidf:
        parts = [tfidf(P)[0] for P in parts]  # local IDF per party
    return parts


def dealer_stores(backend: NssBackend, d: int, invocations: int, n_parties: int, rng: SeededRng):
    """Per-party dealer material for ``invocations`` NormedSecSum calls, or ``None``."""
    if backend.mode != "shared-circuit":
        return [None] * n_parties
    return dealer_offline(backend.budget(d) * invocations, backend.f, n_parties, rng)


# -- equivalence -------------------------------------------------------------------


def run_equivalence(cfg: ExperimentConfig) -> Report:
    """Distributed and centralized pipelines from one seed; max deviation vs tolerance."""
    cfg.validate()
    rng = SeededRng(cfg.seed)
    X = load_dataset(cfg, rng.child("data"), nonnegative=cfg.algorithm == "nmf")
    parts = split_parties(cfg, X, rng.child("partition"))
    d = parts[0].shape[1]
    timing = {}
    net = _network(cfg, cfg.parties, cfg.seed)
    with net:
        if cfg.algorithm == "nmf":
            params = cfg.nmf_params(tol=0.0)
            T0 = random_init(cfg.k, d, rng.child("T0"))
            t0 = time.perf_counter()
            out = net.run(
                lambda p, Xm: pd_nmf_iter(p, Xm, T0, params, cfg.secsum_config(), return_w=True),
                parts,
            )
            timing["distributed_s"] = time.perf_counter() - t0
            t0 = time.perf_counter()
            central = rri_nmf(np.vstack(parts), params, T0)
            timing["centralized_s"] = time.perf_counter() - t0
            dist = out[0][0]
            W_dist = np.vstack([w for _, w in out])
            metrics = {
                "max_abs_deviation": float(np.max(np.abs(dist - central.T))),
                "max_abs_deviation_W": float(np.max(np.abs(W_dist - central.W))),
                "parties_agree_on_model": all(np.array_equal(o[0], dist) for o in out),
            }
        else:
            scfg = cfg.svd_config()
            stores = dealer_stores(scfg.backend, d, cfg.k * cfg.iters, cfg.parties, rng.child("dealer"))
            data = parts
            if cfg.algorithm == "pca":
                stacked = np.vstack(parts)
                data = [P - stacked.mean(axis=0) for P in parts]
                fn = lambda p, Xm, st: pd_pca(p, Xm, scfg, cfg.seed, st)  # noqa: E731
            else:
                fn = lambda p, Xm, st: pd_svd(p, Xm, scfg, cfg.seed, st)  # noqa: E731
            t0 = time.perf_counter()
            out = net.run(fn, parts, stores)
            timing["distributed_s"] = time.perf_counter() - t0
            t0 = time.perf_counter()
            S_parts = [gram(P) for P in data]
            s = float(sum(frobenius_norm(S) for S in S_parts))
            S = np.zeros((d, d))
            for Sm in S_parts:
                S = S + Sm / s
            V0 = distributed_start(cfg.seed, cfg.parties, d, cfg.k)
            central = block_power_iteration(S, cfg.k, cfg.iters, V0=V0)
            timing["centralized_s"] = time.perf_counter() - t0
            metrics = {
                "max_abs_deviation": float(np.max(np.abs(out[0] - central))),
                "parties_agree_on_model": all(np.array_equal(o, out[0]) for o in out),
            }
        digests = _trace_digests(net)
        metrics["messages"] = net.message_count
    metrics["tolerance"] = cfg.tolerance
    passed = metrics["max_abs_deviation"] <= cfg.tolerance and metrics["parties_agree_on_model"]
    per_party = [{"party": m, "rows": int(P.shape[0])} for m, P in enumerate(parts)]
    return Report("equivalence", cfg.to_dict(), per_party, metrics, digests, timing, passed)


# -- uplift ------------------------------------------------------------------------


def _local_svd(X_m, cfg: ExperimentConfig, party: int) -> np.ndarray:
    """Local-only model: the same iteration a single-party network would run."""
    S = gram(X_m)
    V0 = party_start(cfg.seed, party, 1, S.shape[0], cfg.k)
    return block_power_iteration(S / frobenius_norm(S), cfg.k, cfg.iters, V0=V0)


def _pcr_rmse(V, X_train, y_train, X_test, y_test) -> float:
    beta = pcr_fit(X_train, y_train, V)
    pred = pcr_predict(X_test, V, beta, float(np.mean(y_train)))
    return float(np.sqrt(np.mean((pred - y_test) ** 2)))


def _uplift(local: float, glob: float) -> float:
    if local == 0:
        return 0.0
    return 100.0 * (local - glob) / local


def run_uplift(cfg: ExperimentConfig) -> Report:
    """Per-party percent improvement of the global model over the local one.

    For each party size, ``parties`` parties of that many rows are drawn
    from one synthetic population (a shared subspace for the SVD, shared
    topics for NMF) and both models are scored on a common held-out sample.
    """
    cfg.validate()
    rows = []
    timing = {"total_s": 0.0}
    t_start = time.perf_counter()
    for size in cfg.party_sizes:
        for trial in range(cfg.trials):
            rng = SeededRng(cfg.seed).child("uplift", size, trial)
            if cfg.algorithm == "nmf":
                rows += _uplift_nmf(cfg, size, trial, rng)
            else:
                rows += _uplift_svd(cfg, size, trial, rng)
    timing["total_s"] = time.perf_counter() - t_start
    by_size = {}
    for size in cfg.party_sizes:
        ups = [r["uplift_pct"] for r in rows if r["party_size"] == size]
        by_size[str(size)] = float(np.mean(ups))
    means = [by_size[str(s)] for s in cfg.party_sizes]
    order = np.argsort(cfg.party_sizes)
    sorted_means = [means[i] for i in order]
    metrics = {
        "mean_uplift_by_size": by_size,
        "min_uplift": float(min(r["uplift_pct"] for r in rows)),
        "all_nonnegative": all(r["uplift_pct"] >= 0 for r in rows),
        "nonincreasing_in_size": all(a >= b for a, b in zip(sorted_means, sorted_means[1:])),
    }
    passed = metrics["all_nonnegative"] and metrics["nonincreasing_in_size"]
    return Report("uplift", cfg.to_dict(), rows, metrics, {}, timing, passed)


def _uplift_svd(cfg: ExperimentConfig, size: int, trial: int, rng: SeededRng) -> list[dict]:
    d, k = cfg.cols, cfg.k
    basis = None
    parts = []
    for m in range(cfg.parties):
        X_m, basis = subspace_corpus(size, d, k, rng.child("party", m), noise=cfg.noise, basis=basis)
        parts.append(X_m)
    test, _ = subspace_corpus(cfg.holdout_rows, d, k, rng.child("holdout"), noise=cfg.noise, basis=basis)
    scfg = cfg.svd_config()
    if cfg.metric == "pcr":
        w = basis @ rng.child("coef").normal(k)
        target = lambda Z, r: Z @ w + 0.5 * r.normal(Z.shape[0])  # noqa: E731
        ys = [target(P, rng.child("y", m)) for m, P in enumerate(parts)]
        y_test = target(test, rng.child("y-test"))
    stores = dealer_stores(scfg.backend, d, k * cfg.iters, cfg.parties, rng.child("dealer"))
    with _network(cfg, cfg.parties, cfg.seed) as net:
        V_global = net.run(lambda p, Xm, st: pd_svd(p, Xm, scfg, cfg.seed, st), parts, stores)[0]
    out = []
    for m, X_m in enumerate(parts):
        V_local = _local_svd(X_m, cfg, m)
        if cfg.metric == "pcr":
            stacked, y_all = np.vstack(parts), np.concatenate(ys)
            local = _pcr_rmse(V_local, X_m, ys[m], test, y_test)
            glob = _pcr_rmse(V_global, stacked, y_all, test, y_test)
        else:
            local = lra_error(test, V_local) ** 2
            glob = lra_error(test, V_global) ** 2
        out.append(_uplift_row(size, trial, m, local, glob))
    return out


def _uplift_nmf(cfg: ExperimentConfig, size: int, trial: int, rng: SeededRng) -> list[dict]:
    d, k = cfg.cols, cfg.k
    topics = None
    parts = []
    for m in range(cfg.parties):
        X_m, _, topics = topic_corpus(size, d, k, rng.child("party", m), topics=topics)
        parts.append(X_m)
    test, _, _ = topic_corpus(cfg.holdout_rows, d, k, rng.child("holdout"), topics=topics)
    params = cfg.nmf_params()
    with _network(cfg, cfg.parties, cfg.seed) as net:
        T_global = net.run(lambda p, Xm: pd_nmf(p, Xm, params, cfg.secsum_config(), cfg.seed), parts)[0]
    out = []
    for m, X_m in enumerate(parts):
        T_local = centralized_pipeline([X_m], params, cfg.seed).T
        out.append(_uplift_row(size, trial, m, nnls_objective(test, T_local), nnls_objective(test, T_global)))
    return out


def _uplift_row(size, trial, party, local, glob) -> dict:
    return {
        "party_size": size,
        "trial": trial,
        "party": party,
        "local_error": float(local),
        "global_error": float(glob),
        "uplift_pct": _uplift(local, glob),
    }


# -- privacy -----------------------------------------------------------------------


def inner_product_statistic(out, x) -> float:
    """``<sum, x>``: how well a revealed column sum aligns with the document."""
    return float(np.dot(np.asarray(out, float).ravel(), np.asarray(x, float).ravel()))


def contains_statistic(db, x) -> float:
    """1 when the database (leaked in full) contains ``x`` exactly."""
    return float(np.any(np.all(np.asarray(db) == np.asarray(x)[None, :], axis=1)))


def leaky_mechanism(db, rng):
    """Planted leak: publishes the whole database."""
    return np.asarray(db)


def secsum_mechanism(cfg: ExperimentConfig):
    """Column sums of the database rows, held by ``parties`` parties, via fixed-point SecSum."""
    scfg = SecSumConfig("fixed" if cfg.secsum_mode == "float" else cfg.secsum_mode, cfg.f_bits)

    def mech(db, rng):
        blocks = np.array_split(db, cfg.parties)
        bound = max(1.0, float(np.max(np.abs(db))) * max(b.shape[0] for b in blocks))
        seed = int(rng.uint64(1)[0] >> np.uint64(1))
        with SimNetwork(cfg.parties, seed=seed, log_envelopes=False) as net:
            return net.run(lambda p, B: aggregate(p, B.sum(axis=0), scfg, bound=bound), blocks)[0]

    return mech


def svd_privacy_setup(cfg: ExperimentConfig, rng: SeededRng):
    """Victim universe, adversary rows and the mechanism for the SVD privacy experiment.

    Rows follow a shared subspace with heavy-tailed lengths.  The mechanism
    stacks a victim database with the adversary's fixed rows and returns the
    top-``k`` right singular vectors (the observable) with the true singular
    values (what a singular-value-revealing protocol would add).
    """
    d, k = cfg.cols, cfg.k
    universe, basis = subspace_corpus(cfg.universe_rows, d, k, rng.child("victim"), noise=cfg.noise)
    universe = heavy_tailed(universe, rng.child("victim-lengths"))
    adversary, _ = subspace_corpus(cfg.adversary_rows, d, k, rng.child("adversary"), noise=cfg.noise, basis=basis)
    adversary = heavy_tailed(adversary, rng.child("adversary-lengths"))
    sigma_a = np.linalg.svd(adversary, compute_uv=False)[:k]

    def mech(db, r):
        Z = np.vstack([db, adversary])
        S = gram(Z)
        V = block_power_iteration(S / frobenius_norm(S), k, cfg.iters, r)
        return V, np.linalg.svd(Z, compute_uv=False)[:k]

    return universe, adversary, sigma_a, mech


def _svd_stat(i: int, source):
    def stat(out, x):
        V, sigma = out
        src = SigmaSource.revealed(sigma) if source is None else source
        return svd_statistics(V, src, x)[i]

    stat.__name__ = f"{'revealed' if source is None else 'estimated'}_{SVD_STATISTIC_NAMES[i]}"
    return stat


def _summary(values) -> dict:
    v = np.asarray(values, float)
    return {"median": float(np.median(v)), "mean": float(np.mean(v)), "std": float(np.std(v))}


def run_privacy(cfg: ExperimentConfig) -> Report:
    """Measured privacy (pi) for a set of documents, per database size.

    ``secsum`` and ``leaky`` draw databases from an i.i.d. U[0,1] universe;
    ``pd-svd`` compares revealed and estimated singular values; ``pd-nmf``
    uses the final topics and denominators of the distributed protocol.
    """
    cfg.validate()
    rng = SeededRng(cfg.seed)
    rows = []
    metrics: dict = {}
    t_start = time.perf_counter()
    if cfg.mechanism in ("secsum", "leaky"):
        X = rng.child("universe").uniform((cfg.universe_rows, cfg.cols))
        if cfg.mechanism == "secsum":
            mech, stats = secsum_mechanism(cfg), [inner_product_statistic]
        else:
            mech, stats = leaky_mechanism, [contains_statistic]
        by_size = {}
        for size in cfg.database_sizes:
            pis = []
            for doc in range(cfg.documents):
                res = measure_ksdp(mech, mech, stats, X, doc, cfg.samples, rng.child("doc", size, doc), n_sub=size)
                pis.append(res.pi)
                rows.append({"database_size": size, "document": doc, "pi": res.pi})
            by_size[str(size)] = _summary(pis)
        medians = [by_size[str(s)]["median"] for s in sorted(cfg.database_sizes)]
        metrics["pi_by_size"] = by_size
        metrics["median_pi"] = by_size[str(max(cfg.database_sizes))]["median"]
        metrics["nondecreasing_in_size"] = all(a <= b for a, b in zip(medians, medians[1:]))
    elif cfg.mechanism == "pd-svd":
        universe, adversary, sigma_a, mech = svd_privacy_setup(cfg, rng.child("setup"))
        n_v = default_n_sub(universe.shape[0])
        est = SigmaSource.estimated(n_v, adversary.shape[0], sigma_a)
        stats = [_svd_stat(i, None) for i in range(6)] + [_svd_stat(i, est) for i in range(6)]
        rev, hid = [], []
        for doc in range(cfg.documents):
            res = measure_ksdp(mech, mech, stats, universe, doc, cfg.samples, rng.child("doc", doc), n_sub=n_v)
            rev.append(min(res.pvalues[:6]))
            hid.append(min(res.pvalues[6:]))
            rows.append({"document": doc, "pi_revealed": rev[-1], "pi_estimated": hid[-1]})
        metrics["pi_revealed"] = _summary(rev)
        metrics["pi_estimated"] = _summary(hid)
        metrics["hiding_helps"] = metrics["pi_estimated"]["median"] >= metrics["pi_revealed"]["median"]
        metrics["median_pi"] = metrics["pi_estimated"]["median"]
    else:
        rows, metrics = _privacy_nmf(cfg, rng)
    timing = {"total_s": time.perf_counter() - t_start}
    return Report("privacy", cfg.to_dict(), rows, metrics, {}, timing, None)


def _privacy_nmf(cfg: ExperimentConfig, rng: SeededRng):
    """Victim's party database against a fixed second party, observing the protocol trace."""
    X, _, topics = topic_corpus(cfg.universe_rows, cfg.cols, cfg.k, rng.child("victim"))
    other, _, _ = topic_corpus(cfg.adversary_rows, cfg.cols, cfg.k, rng.child("other"), topics=topics)
    params = cfg.nmf_params()
    T0 = random_init(cfg.k, cfg.cols, rng.child("T0"))

    def mech(db, r):
        with SimNetwork(2, seed=cfg.seed, log_envelopes=False) as net:
            net.run(lambda p, Xm: pd_nmf_iter(p, Xm, T0, params, cfg.secsum_config()), [db, other])
            return net.parties[1].trace

    pis, rows = [], []
    for doc in range(cfg.documents):
        res = measure_ksdp(mech, mech, [nmf_trace_statistic], X, doc, cfg.samples, rng.child("doc", doc))
        pis.append(res.pi)
        rows.append({"document": doc, "pi": res.pi})
    return rows, {"pi": _summary(pis), "median_pi": float(np.median(pis))}


# -- DP baseline -------------------------------------------------------------------


def run_dp_baseline(cfg: ExperimentConfig) -> Report:
    """Noiseless distributed NMF against its Gaussian-mechanism counterpart.

    The learning outcome is the NNLS reconstruction error of the stacked
    corpus under the final topics; ``gap`` is noised minus noiseless.
    """
    cfg.validate()
    rng = SeededRng(cfg.seed)
    if cfg.dataset is not None:
        X = load_matrix(cfg.dataset, cfg.dataset_format, nonnegative=True)
    else:
        X, _, _ = topic_corpus(cfg.rows, cfg.cols, cfg.k, rng.child("data"))
    parts = split_parties(cfg, X, rng.child("partition"))
    params = cfg.nmf_params()
    sigma = gaussian_sigma(cfg.epsilon, cfg.dp_delta, cfg.sensitivity)
    timing = {}
    t0 = time.perf_counter()
    with _network(cfg, cfg.parties, cfg.seed) as net:
        T_clean = net.run(lambda p, Xm: pd_nmf(p, Xm, params, cfg.secsum_config(), cfg.seed), parts)[0]
    timing["noiseless_s"] = time.perf_counter() - t0
    t0 = time.perf_counter()
    with _network(cfg, cfg.parties, cfg.seed) as net:
        T_noisy = net.run(
            lambda p, Xm: dp_noised_pd_nmf(
                p, Xm, params, cfg.epsilon, cfg.dp_delta, cfg.sensitivity, cfg.secsum_config(), cfg.seed
            ),
            parts,
        )[0]
    timing["noised_s"] = time.perf_counter() - t0
    stacked = np.vstack(parts)
    clean, noisy = nnls_objective(stacked, T_clean), nnls_objective(stacked, T_noisy)
    metrics = {
        "sigma": sigma,
        "objective_noiseless": clean,
        "objective_noised": noisy,
        "gap": noisy - clean,
        "relative_gap": (noisy - clean) / clean if clean > 0 else 0.0,
    }
    per_party = [
        {
            "party": m,
            "rows": int(P.shape[0]),
            "objective_noiseless": nnls_objective(P, T_clean),
            "objective_noised": nnls_objective(P, T_noisy),
        }
        for m, P in enumerate(parts)
    ]
    return Report("dp-baseline", cfg.to_dict(), per_party, metrics, {}, timing, None)


# -- benchmarks ----------------------------------------------------------------------


def secsum_bench(d: int, n_parties: int, mode: str = "fixed", repeats: int = 5, transport: str = "memory", seed: int = 0):
    """Seconds and messages per SecSum invocation on a ``d``-vector."""
    cfg = SecSumConfig(mode)
    x = [SeededRng(seed, m).uniform(d, -1, 1) for m in range(n_parties)]
    with SimNetwork(n_parties, transport=transport, seed=seed) as net:
        if mode == "prf":
            net.run(lambda p, v: aggregate(p, v, cfg), x)  # key exchange excluded from timing
        before = net.message_count
        t0 = time.perf_counter()
        for _ in range(repeats):
            net.run(lambda p, v: aggregate(p, v, cfg), x)
        elapsed = time.perf_counter() - t0
        messages = net.message_count - before
    return {
        "d": d,
        "parties": n_parties,
        "mode": mode,
        "transport": transport,
        "seconds_per_invocation": elapsed / repeats,
        "messages_per_invocation": messages / repeats,
    }


def nss_bench(
    d: int, n_parties: int, backend: str = "shared-circuit", f: int = 31, repeats: int = 1, transport: str = "memory", seed: int = 0
):
    """Dealer and online seconds per NormedSecSum invocation on a ``d``-vector."""
    be = NssBackend(backend, f)
    rng = SeededRng(seed)
    x = [rng.child("input", m).uniform(d, -1, 1) / (n_parties * math.sqrt(d)) for m in range(n_parties)]
    t0 = time.perf_counter()
    stores = dealer_stores(be, d, repeats, n_parties, rng.child("dealer"))
    dealer_s = time.perf_counter() - t0
    with SimNetwork(n_parties, transport=transport, seed=seed, log_envelopes=False) as net:
        t0 = time.perf_counter()
        for _ in range(repeats):
            net.run(lambda p, v, st: normed_secsum(p, v, be, st), x, stores)
        online = (time.perf_counter() - t0) / repeats
        messages = net.message_count / repeats
    return {
        "d": d,
        "parties": n_parties,
        "backend": backend,
        "f": f,
        "transport": transport,
        "dealer_seconds": dealer_s,
        "seconds_per_invocation": online,
        "messages_per_invocation": messages,
    }


DRIVERS = {
    "equivalence": run_equivalence,
    "uplift": run_uplift,
    "privacy": run_privacy,
    "dp-baseline": run_dp_baseline,
}


def run(cfg: ExperimentConfig) -> Report:
    return DRIVERS[cfg.validate().experiment](cfg)
