"""Proxy selection: land-use kNN, geographic proximity and minimum KL divergence."""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .model import NetworkDataset, ProxyAssignment, SiteRecord
from .stats import HistogramConfig, build_histogram, kl_divergence

EARTH_RADIUS_KM = 6371.0
SCALINGS = ("minmax", "zscore", "mean")


class InsufficientDataWarning(UserWarning):
    pass


@dataclass(frozen=True)
class FeatureScaler:
    """Per-feature affine map fitted over a site set.

    ``minmax`` maps the observed range of each feature onto [0, 1] (constant
    features map to 0); ``zscore`` centres and divides by the sample standard
    deviation; ``mean`` divides by the feature mean.
    """

    mins: np.ndarray
    maxs: np.ndarray
    method: str = "minmax"
    centre: np.ndarray | None = None
    scale: np.ndarray | None = None

    @classmethod
    def fit(cls, matrix: np.ndarray, method: str = "minmax") -> "FeatureScaler":
        if method not in SCALINGS:
            raise ValueError(f"unknown scaling {method!r}; choose from {SCALINGS}")
        mins, maxs = matrix.min(axis=0), matrix.max(axis=0)
        if method == "minmax":
            centre, scale = mins, maxs - mins
        elif method == "zscore":
            centre, scale = matrix.mean(axis=0), matrix.std(axis=0, ddof=1)
        else:
            centre, scale = np.zeros(matrix.shape[1]), matrix.mean(axis=0)
        return cls(mins, maxs, method, centre, scale)

    def transform(self, matrix: np.ndarray) -> np.ndarray:
        safe = np.where(self.scale > 0, self.scale, 1.0)
        out = (matrix - self.centre) / safe
        out[:, self.scale <= 0] = 0.0
        return out


def _feature_matrix(sites: list[SiteRecord]) -> np.ndarray:
    return np.array([s.features.as_array() for s in sites], dtype=np.float64)


def _sorted_sites(sites) -> list[SiteRecord]:
    ordered = sorted(sites, key=lambda s: s.site_id)
    if len(ordered) < 2:
        raise ValueError(f"proxy selection needs at least 2 sites, got {len(ordered)}")
    return ordered


def scale_features(sites, method: str = "minmax") -> tuple[FeatureScaler, dict[str, np.ndarray]]:
    ordered = _sorted_sites(sites)
    matrix = _feature_matrix(ordered)
    scaler = FeatureScaler.fit(matrix, method)
    scaled = scaler.transform(matrix)
    return scaler, {s.site_id: scaled[i] for i, s in enumerate(ordered)}


def _argmin_excluding_self(dist: np.ndarray) -> np.ndarray:
    # rows/cols are in site_id order, so argmin's first-hit rule is the tie-break
    d = dist.copy()
    np.fill_diagonal(d, np.inf)
    return d.argmin(axis=1)


def select_knn(sites, scaling: str = "minmax") -> list[ProxyAssignment]:
    """Nearest other site in scaled land-use feature space (Euclidean).

    Counting the site itself as its own first neighbour, this is the k = 2
    neighbour.  Ties go to the lexicographically smaller site_id.
    """
    ordered = _sorted_sites(sites)
    _, scaled = scale_features(ordered, scaling)
    x = np.array([scaled[s.site_id] for s in ordered])
    dist = np.sqrt(((x[:, None, :] - x[None, :, :]) ** 2).sum(axis=2))
    best = _argmin_excluding_self(dist)
    return [
        ProxyAssignment(s.site_id, ordered[j].site_id, "knn_landuse", float(dist[i, j]))
        for i, (s, j) in enumerate(zip(ordered, best))
    ]


def haversine_km(lat1, lon1, lat2, lon2):
    """Great-circle distance in km on a sphere of radius 6371 km."""
    lat1, lon1, lat2, lon2 = map(np.radians, (lat1, lon1, lat2, lon2))
    a = (np.sin((lat2 - lat1) / 2.0) ** 2
         + np.cos(lat1) * np.cos(lat2) * np.sin((lon2 - lon1) / 2.0) ** 2)
    return 2.0 * EARTH_RADIUS_KM * np.arcsin(np.sqrt(np.clip(a, 0.0, 1.0)))


def select_nearest_geo(sites) -> list[ProxyAssignment]:
    ordered = _sorted_sites(sites)
    lat = np.array([s.latitude for s in ordered])
    lon = np.array([s.longitude for s in ordered])
    dist = haversine_km(lat[:, None], lon[:, None], lat[None, :], lon[None, :])
    best = _argmin_excluding_self(dist)
    return [
        ProxyAssignment(s.site_id, ordered[j].site_id, "nearest_geo", float(dist[i, j]))
        for i, (s, j) in enumerate(zip(ordered, best))
    ]


def kl_matrix(data: NetworkDataset, site_ids: list[str], hist_cfg: HistogramConfig) -> np.ndarray:
    """Pairwise D(hist_i || hist_j) over the full period (direction per config)."""
    hists = [build_histogram(data.series[s].values, hist_cfg.bin_width, hist_cfg.origin)
             for s in site_ids]
    n = len(site_ids)
    out = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            if i != j:
                p, q = (hists[i], hists[j]) if hist_cfg.kl_direction == "site_proxy" else (hists[j], hists[i])
                out[i, j] = kl_divergence(p, q)
    return out


def select_min_kl(data: NetworkDataset, bin_width: float = 1.0, *, origin: float = 0.0,
                  kl_direction: str = "site_proxy", min_present: int = 100) -> list[ProxyAssignment]:
    """Proxy = the other site with the smallest KL divergence of full-period histograms.

    Sites with fewer than ``min_present`` values are skipped (with an
    :class:`InsufficientDataWarning`) both as targets and as candidates.
    """
    cfg = HistogramConfig(bin_width=bin_width, origin=origin, kl_direction=kl_direction)
    usable = []
    for sid in data.site_ids:
        s = data.series.get(sid)
        n = 0 if s is None else int(np.sum(~np.isnan(s.values)))
        if n < min_present:
            warnings.warn(f"{sid}: {n} present values, need {min_present}; no min_kl proxy",
                          InsufficientDataWarning, stacklevel=2)
        else:
            usable.append(sid)
    if len(usable) < 2:
        return []
    d = kl_matrix(data, usable, cfg)
    best = _argmin_excluding_self(d)
    return [ProxyAssignment(s, usable[j], "min_kl", float(d[i, j]))
            for i, (s, j) in enumerate(zip(usable, best))]


@dataclass(frozen=True)
class AgreementReport:
    rows: tuple[tuple[str, str, str, bool], ...]  # (site_id, proxy in a, proxy in b, match)

    @property
    def matched(self) -> int:
        return sum(r[3] for r in self.rows)

    @property
    def total(self) -> int:
        return len(self.rows)

    @property
    def agreement(self) -> float:
        return self.matched / self.total if self.rows else 1.0


def compare_assignments(a, b) -> AgreementReport:
    ma = {x.site_id: x.proxy_id for x in a}
    mb = {x.site_id: x.proxy_id for x in b}
    if set(ma) != set(mb):
        raise ValueError(f"site sets differ: only in a {sorted(set(ma) - set(mb))}, "
                         f"only in b {sorted(set(mb) - set(ma))}")
    return AgreementReport(tuple((s, ma[s], mb[s], ma[s] == mb[s]) for s in sorted(ma)))
