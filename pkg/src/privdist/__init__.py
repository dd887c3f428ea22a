"""Private distributed NMF and SVD over secret-shared sums."""

from .data import ConfigError, DataError, load_matrix, partition, tfidf
from .experiments import (
    ExperimentConfig,
    Report,
    run,
    run_dp_baseline,
    run_equivalence,
    run_privacy,
    run_uplift,
)
from .ksdp import ks_2sample_pvalue, measure_ksdp
from .matrix import SeededRng
from .net import ObservableTrace, ProtocolError, SimNetwork, TransportError, create_network
from .nmf import NmfModel, NmfParams, rri_nmf
from .normed import NssBackend, dealer_offline, fixed_sqrt, normed_secsum
from .pd_nmf import dp_noised_pd_nmf, pd_nmf, pd_nmf_init, pd_nmf_iter
from .secsum import SecSumConfig, aggregate, secsum
from .svd import SvdConfig, block_power_iteration, pd_pca, pd_svd

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "DataError",
    "ExperimentConfig",
    "NmfModel",
    "NmfParams",
    "NssBackend",
    "ObservableTrace",
    "ProtocolError",
    "Report",
    "SecSumConfig",
    "SeededRng",
    "SimNetwork",
    "SvdConfig",
    "TransportError",
    "aggregate",
    "block_power_iteration",
    "create_network",
    "dealer_offline",
    "dp_noised_pd_nmf",
    "fixed_sqrt",
    "ks_2sample_pvalue",
    "load_matrix",
    "measure_ksdp",
    "normed_secsum",
    "partition",
    "pd_nmf",
    "pd_nmf_init",
    "pd_nmf_iter",
    "pd_pca",
    "pd_svd",
    "rri_nmf",
    "run",
    "run_dp_baseline",
    "run_equivalence",
    "run_privacy",
    "run_uplift",
    "secsum",
    "tfidf",
]
