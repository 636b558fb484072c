"""Proxy-based remote calibration for hierarchical air-quality networks."""
from .drift import FrameworkConfig, FrameworkState, run_framework
from .kernels import NUMBA_ENABLED
from .model import HourlySeries, NetworkDataset, ProxyAssignment, SiteRecord, validate_dataset
from .proxy import select_knn, select_min_kl, select_nearest_geo
from .stats import HistogramConfig, kl_divergence, ks_two_sample

__version__ = "0.1.0"

__all__ = [
    "FrameworkConfig", "FrameworkState", "HistogramConfig", "HourlySeries", "NUMBA_ENABLED",
    "NetworkDataset", "ProxyAssignment", "SiteRecord", "kl_divergence", "ks_two_sample",
    "run_framework", "select_knn", "select_min_kl", "select_nearest_geo", "validate_dataset",
]
