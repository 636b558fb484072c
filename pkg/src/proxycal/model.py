"""Domain types shared across the package, and dataset validation."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from datetime import datetime, timedelta, timezone

import numpy as np

EPOCH = datetime(1970, 1, 1, tzinfo=timezone.utc)

PROXY_METHODS = ("knn_landuse", "nearest_geo", "min_kl")


class SubHourlyTimestamp(ValueError):
    pass


def parse_timestamp(text: str) -> int:
    """Parse an ISO-8601 UTC timestamp into integer hours since 1970-01-01."""
    s = text.strip()
    if s.endswith("Z") or s.endswith("z"):
        s = s[:-1] + "+00:00"
    dt = datetime.fromisoformat(s)
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    seconds = (dt - EPOCH) // timedelta(seconds=1)
    if seconds % 3600 or dt.microsecond:
        raise SubHourlyTimestamp(f"sub-hourly timestamp {text!r}")
    return int(seconds // 3600)


def format_timestamp(hour: int) -> str:
    return (EPOCH + timedelta(hours=int(hour))).strftime("%Y-%m-%dT%H:%M:%SZ")


@dataclass(frozen=True)
class LandUseFeatures:
    dist_to_motorway: float  # m
    elevation: float  # m above sea level
    road_length_1km: float  # m of freeway + primary road within 1 km

    def as_array(self) -> np.ndarray:
        return np.array([self.dist_to_motorway, self.elevation, self.road_length_1km])


@dataclass(frozen=True)
class SiteRecord:
    site_id: str
    name: str
    latitude: float
    longitude: float
    features: LandUseFeatures


def _frozen_array(values, dtype) -> np.ndarray:
    arr = np.array(values, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class HourlySeries:
    """Hourly observations for one site.

    ``hours`` are integer UTC hours since the Unix epoch.  Missing values are
    NaN in ``values``, ``wind_speed`` (m/s) and ``wind_dir`` (degrees); a
    series without wind data carries all-NaN wind arrays.
    """

    site_id: str
    hours: np.ndarray
    values: np.ndarray
    wind_speed: np.ndarray | None = None
    wind_dir: np.ndarray | None = None

    def __post_init__(self):
        hours = _frozen_array(self.hours, np.int64)
        n = len(hours)
        nan = np.full(n, np.nan)
        values = _frozen_array(self.values, np.float64)
        speed = _frozen_array(nan if self.wind_speed is None else self.wind_speed, np.float64)
        direction = _frozen_array(nan if self.wind_dir is None else self.wind_dir, np.float64)
        for name, arr in (("values", values), ("wind_speed", speed), ("wind_dir", direction)):
            if arr.shape != (n,):
                raise ValueError(f"{self.site_id}: {name} has shape {arr.shape}, expected ({n},)")
        object.__setattr__(self, "hours", hours)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "wind_speed", speed)
        object.__setattr__(self, "wind_dir", direction)

    def __len__(self) -> int:
        return len(self.hours)

    def __eq__(self, other):
        if not isinstance(other, HourlySeries):
            return NotImplemented
        return (
            self.site_id == other.site_id
            and np.array_equal(self.hours, other.hours)
            and np.array_equal(self.values, other.values, equal_nan=True)
            and np.array_equal(self.wind_speed, other.wind_speed, equal_nan=True)
            and np.array_equal(self.wind_dir, other.wind_dir, equal_nan=True)
        )

    __hash__ = None

    @property
    def has_wind(self) -> bool:
        return bool(np.any(~np.isnan(self.wind_speed) & ~np.isnan(self.wind_dir)))

    @property
    def completeness(self) -> float:
        return float(np.mean(~np.isnan(self.values))) if len(self) else 0.0

    def with_values(self, values) -> "HourlySeries":
        return replace(self, values=values)


@dataclass(frozen=True)
class NetworkDataset:
    sites: tuple[SiteRecord, ...] = ()
    series: dict[str, HourlySeries] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "sites", tuple(self.sites))

    def site(self, site_id: str) -> SiteRecord:
        for s in self.sites:
            if s.site_id == site_id:
                return s
        raise KeyError(site_id)

    @property
    def site_ids(self) -> list[str]:
        return sorted(s.site_id for s in self.sites)

    @property
    def epoch(self) -> tuple[int, int] | None:
        """(first hour, last hour) of the common epoch, or None when empty."""
        for s in self.series.values():
            if len(s):
                return int(s.hours[0]), int(s.hours[-1])
        return None


@dataclass(frozen=True)
class ProxyAssignment:
    site_id: str
    proxy_id: str
    method: str
    score: float

    def __post_init__(self):
        if self.proxy_id == self.site_id:
            raise ValueError(f"site {self.site_id} cannot be its own proxy")
        if self.method not in PROXY_METHODS:
            raise ValueError(f"unknown proxy method {self.method!r}")


@dataclass(frozen=True)
class Violation:
    site_id: str
    field: str
    reason: str

    def __str__(self):
        return f"{self.site_id or '<dataset>'}.{self.field}: {self.reason}"


class DatasetValidationError(ValueError):
    """Raised by :func:`validate_dataset`; ``violations`` lists every problem."""

    def __init__(self, violations: list[Violation]):
        self.violations = list(violations)
        lines = "\n  ".join(str(v) for v in self.violations)
        super().__init__(f"{len(self.violations)} violation(s):\n  {lines}")


def _site_violations(site: SiteRecord) -> list[Violation]:
    out = []
    sid = site.site_id
    if not sid:
        out.append(Violation(sid, "site_id", "empty site_id"))
    if not (isinstance(site.latitude, (int, float)) and -90 <= site.latitude <= 90):
        out.append(Violation(sid, "latitude", f"{site.latitude} outside [-90, 90]"))
    if not (isinstance(site.longitude, (int, float)) and -180 <= site.longitude <= 180):
        out.append(Violation(sid, "longitude", f"{site.longitude} outside [-180, 180]"))
    f = site.features
    for name in ("dist_to_motorway", "elevation", "road_length_1km"):
        v = getattr(f, name)
        if not math.isfinite(v):
            out.append(Violation(sid, name, f"non-finite value {v}"))
        elif name != "elevation" and v < 0:
            out.append(Violation(sid, name, f"negative value {v}"))
    return out


def _series_violations(key: str, s: HourlySeries, clamp_negative: bool) -> list[Violation]:
    out = []
    if s.site_id != key:
        out.append(Violation(key, "site_id", f"series keyed {key!r} carries site_id {s.site_id!r}"))
    steps = np.diff(s.hours)
    for i in np.flatnonzero(steps <= 0):
        out.append(Violation(key, "timestamp",
                             f"non-monotone timestamp {format_timestamp(s.hours[i + 1])}"))
    for i in np.flatnonzero(steps > 1):
        out.append(Violation(key, "timestamp",
                             f"gap after {format_timestamp(s.hours[i])} (missing hours must be explicit)"))
    v = s.values
    for i in np.flatnonzero(np.isinf(v)):
        out.append(Violation(key, "value", f"non-finite value at {format_timestamp(s.hours[i])}"))
    if not clamp_negative:
        for i in np.flatnonzero(v < 0):
            out.append(Violation(key, "value",
                                 f"negative concentration {v[i]} ppb at {format_timestamp(s.hours[i])}"))
    ws, wd = s.wind_speed, s.wind_dir
    for i in np.flatnonzero(~np.isnan(ws) & ~((ws >= 0) & np.isfinite(ws))):
        out.append(Violation(key, "wind_speed", f"invalid wind speed {ws[i]} at {format_timestamp(s.hours[i])}"))
    for i in np.flatnonzero(~np.isnan(wd) & ~((wd >= 0) & (wd < 360))):
        out.append(Violation(key, "wind_dir", f"wind direction {wd[i]} outside [0, 360) at {format_timestamp(s.hours[i])}"))
    return out


def validate_dataset(raw: NetworkDataset, clamp_negative: bool = False) -> NetworkDataset:
    """Check every dataset invariant and return the dataset.

    All violations are collected before raising :class:`DatasetValidationError`.
    With ``clamp_negative`` negative concentrations are set to 0 instead of
    being reported.
    """
    violations: list[Violation] = []
    seen: set[str] = set()
    for site in raw.sites:
        if site.site_id in seen:
            violations.append(Violation(site.site_id, "site_id", "duplicate site_id"))
        seen.add(site.site_id)
        violations.extend(_site_violations(site))

    bounds = None
    for key in sorted(raw.series):
        s = raw.series[key]
        if key not in seen:
            violations.append(Violation(key, "series", "orphan series: no matching site record"))
        violations.extend(_series_violations(key, s, clamp_negative))
        b = (int(s.hours[0]), int(s.hours[-1])) if len(s) else None
        if bounds is None:
            bounds = b
        elif b != bounds:
            violations.append(Violation(key, "epoch", f"epoch bounds {b} differ from {bounds}"))

    if violations:
        raise DatasetValidationError(violations)
    if clamp_negative and any(np.any(s.values < 0) for s in raw.series.values()):
        series = {k: s.with_values(np.where(s.values < 0, 0.0, s.values)) for k, s in raw.series.items()}
        return NetworkDataset(raw.sites, series)
    return raw
