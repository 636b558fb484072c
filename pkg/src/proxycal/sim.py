"""Synthetic hierarchical network with controllable similarity and drift.

Sites in the same group share a regional signal (an exponentiated AR(1)
process times a seasonal decline) shaped by two diurnal traffic peaks.  Each
site adds its own short-memory local variation, sparse local spikes and
instrument noise.  Drift events distort what the instrument reports, never
the true concentration, so the returned ground truth can score detection.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.signal import lfilter
from scipy.stats import binomtest

from .drift import TESTS, FrameworkState
from .model import HourlySeries, LandUseFeatures, NetworkDataset, SiteRecord, parse_timestamp

DRIFT_KINDS = ("gain_ramp", "offset_step")
DEFAULT_START = parse_timestamp("2018-01-01T00:00:00Z")


@dataclass(frozen=True)
class SiteSpec:
    site_id: str
    group: str = "g1"
    baseline_ppb: float = 15.0
    diurnal_amp_ppb: float = 10.0
    morning_peak_h: float = 7.0
    evening_peak_h: float = 19.0
    seasonal_drop: float = 0.4  # fractional decline of the regional level over the epoch
    spike_rate: float = 0.005  # per hour
    spike_ppb: float = 5.0  # mean spike size (exponential)
    local_sd_ppb: float = 1.0  # short-memory site-local variation
    noise_sd_ppb: float = 1.0  # instrument noise
    missing_rate: float = 0.0
    latitude: float | None = None
    longitude: float | None = None
    features: LandUseFeatures | None = None


@dataclass(frozen=True)
class DriftEvent:
    site: str
    onset_hour: int  # hours from the start of the epoch
    kind: str
    magnitude: float  # final gain for gain_ramp, ppb for offset_step
    ramp_hours: int = 0

    def factors(self, n_hours: int) -> tuple[np.ndarray, np.ndarray]:
        """Per-hour (gain, offset) applied to the true series."""
        t = np.arange(n_hours, dtype=np.float64)
        frac = np.clip((t - self.onset_hour + 1) / self.ramp_hours, 0.0, 1.0) if self.ramp_hours > 0 \
            else (t >= self.onset_hour).astype(np.float64)
        frac[t < self.onset_hour] = 0.0
        if self.kind == "gain_ramp":
            return 1.0 + (self.magnitude - 1.0) * frac, np.zeros(n_hours)
        return np.ones(n_hours), self.magnitude * frac


@dataclass(frozen=True)
class CalmSource:
    """Extra local concentration at a site while the wind is below a speed."""

    site: str
    magnitude_ppb: float
    below_ms: float = 5.0


@dataclass(frozen=True)
class WindSpec:
    """Two-regime wind: calm and windy spells with geometric dwell times."""

    calm_dwell_h: float = 36.0
    windy_dwell_h: float = 72.0
    calm_speed: tuple[float, float] = (0.3, 4.7)
    windy_speed: tuple[float, float] = (5.3, 11.0)
    prevailing_dir_deg: float = 250.0
    dir_sd_deg: float = 50.0


@dataclass(frozen=True)
class ScenarioSpec:
    sites: tuple[SiteSpec, ...]
    hours: int = 4000
    seed: int = 0
    start_hour: int = DEFAULT_START
    drifts: tuple[DriftEvent, ...] = ()
    calm_sources: tuple[CalmSource, ...] = ()
    wind: WindSpec = field(default_factory=WindSpec)
    regional_phi: float = 0.97  # hourly AR(1) coefficient of the log regional level
    regional_sd: float = 0.45  # stationary sd of the log regional level

    def __post_init__(self):
        object.__setattr__(self, "sites", tuple(self.sites))
        object.__setattr__(self, "drifts", tuple(self.drifts))
        object.__setattr__(self, "calm_sources", tuple(self.calm_sources))
        problems = []
        ids = [s.site_id for s in self.sites]
        if not ids:
            problems.append("scenario needs at least one site")
        if len(set(ids)) != len(ids):
            problems.append("duplicate site ids")
        if self.hours < 1:
            problems.append("hours must be positive")
        if not 0 <= self.regional_phi < 1:
            problems.append("regional_phi must lie in [0, 1)")
        for s in self.sites:
            for name in ("baseline_ppb", "diurnal_amp_ppb", "spike_rate", "spike_ppb",
                         "local_sd_ppb", "noise_sd_ppb", "missing_rate", "seasonal_drop"):
                v = getattr(s, name)
                if not (math.isfinite(v) and v >= 0):
                    problems.append(f"{s.site_id}.{name} must be finite and >= 0")
            if s.spike_rate > 1 or s.missing_rate >= 1 or s.seasonal_drop >= 1:
                problems.append(f"{s.site_id}: spike_rate <= 1, missing_rate < 1, seasonal_drop < 1")
        for d in self.drifts:
            if d.site not in ids:
                problems.append(f"drift on unknown site {d.site}")
            if d.kind not in DRIFT_KINDS:
                problems.append(f"drift kind must be one of {DRIFT_KINDS}, not {d.kind!r}")
            if not 0 <= d.onset_hour < self.hours:
                problems.append(f"drift onset {d.onset_hour} outside the epoch")
            if not math.isfinite(d.magnitude) or d.ramp_hours < 0:
                problems.append("drift magnitude must be finite and ramp_hours >= 0")
            if d.kind == "gain_ramp" and d.magnitude <= 0:
                problems.append("gain_ramp magnitude must be positive")
        for c in self.calm_sources:
            if c.site not in ids:
                problems.append(f"calm source on unknown site {c.site}")
        if problems:
            raise ValueError("invalid scenario: " + "; ".join(problems))

    @property
    def n_sites(self) -> int:
        return len(self.sites)

    @property
    def groups(self) -> list[str]:
        return sorted({s.group for s in self.sites})


@dataclass(frozen=True, eq=False)
class GroundTruth:
    hours: np.ndarray
    true: dict[str, np.ndarray]
    gain: dict[str, np.ndarray]
    offset: dict[str, np.ndarray]
    drifts: tuple[DriftEvent, ...]


def _ar1(rng, n, phi, sd):
    e = rng.standard_normal(n) * sd * math.sqrt(1.0 - phi * phi)
    x0 = rng.standard_normal() * sd
    y, _ = lfilter([1.0], [1.0, -phi], e, zi=[phi * x0])
    return y


def _bump(hour_of_day, peak, width=2.5):
    d = np.abs(hour_of_day - peak)
    d = np.minimum(d, 24.0 - d)
    return np.exp(-0.5 * (d / width) ** 2)


def _wind(rng, n, spec: WindSpec):
    calm = np.empty(n, dtype=bool)
    state = rng.random() < spec.calm_dwell_h / (spec.calm_dwell_h + spec.windy_dwell_h)
    u = rng.random(n)
    for t in range(n):
        calm[t] = state
        leave = 1.0 / (spec.calm_dwell_h if state else spec.windy_dwell_h)
        if u[t] < leave:
            state = not state
    wobble = np.tanh(_ar1(rng, n, 0.9, 1.0))  # in (-1, 1)
    lo = np.where(calm, spec.calm_speed[0], spec.windy_speed[0])
    hi = np.where(calm, spec.calm_speed[1], spec.windy_speed[1])
    speed = lo + (hi - lo) * 0.5 * (wobble + 1.0)
    direction = (spec.prevailing_dir_deg + _ar1(rng, n, 0.95, spec.dir_sd_deg)) % 360.0
    direction[direction >= 360.0] = 0.0  # -tiny % 360 rounds up to 360
    return speed, direction


def _site_record(spec: SiteSpec, group_index: int, rng) -> SiteRecord:
    lat = spec.latitude if spec.latitude is not None else 34.0 + 0.3 * group_index + rng.normal(0, 0.02)
    lon = spec.longitude if spec.longitude is not None else -118.0 + 0.3 * group_index + rng.normal(0, 0.02)
    feats = spec.features or LandUseFeatures(
        dist_to_motorway=float(max(0.0, 600 + 1500 * group_index + rng.normal(0, 40))),
        elevation=float(20 + 140 * group_index + rng.normal(0, 4)),
        road_length_1km=float(max(0.0, 6500 - 2500 * group_index + rng.normal(0, 80))),
    )
    return SiteRecord(spec.site_id, spec.site_id, float(lat), float(lon), feats)


def generate(spec: ScenarioSpec) -> tuple[NetworkDataset, GroundTruth]:
    """Observed dataset plus ground truth for a scenario; fully seed-determined."""
    n = spec.hours
    groups = spec.groups
    streams = np.random.SeedSequence(spec.seed).spawn(2 + len(groups) + spec.n_sites)
    rng_wind = np.random.default_rng(streams[0])
    rng_meta = np.random.default_rng(streams[1])
    group_rng = {g: np.random.default_rng(streams[2 + i]) for i, g in enumerate(groups)}

    hours = spec.start_hour + np.arange(n, dtype=np.int64)
    hod = (hours % 24).astype(np.float64)
    t = np.arange(n, dtype=np.float64)
    speed, direction = _wind(rng_wind, n, spec.wind)
    regional = {g: np.exp(_ar1(group_rng[g], n, spec.regional_phi, spec.regional_sd)
                          - 0.5 * spec.regional_sd ** 2) for g in groups}

    sites, series, true, gains, offsets = [], {}, {}, {}, {}
    for i, s in enumerate(spec.sites):
        rng = np.random.default_rng(streams[2 + len(groups) + i])
        season = 1.0 - s.seasonal_drop * t / max(n - 1, 1)
        shape = s.baseline_ppb + s.diurnal_amp_ppb * (_bump(hod, s.morning_peak_h) + _bump(hod, s.evening_peak_h, 3.0))
        x = season * regional[s.group] * shape
        x = x + _ar1(rng, n, 0.6, s.local_sd_ppb) if s.local_sd_ppb > 0 else x
        if s.spike_rate > 0:
            x = x + (rng.random(n) < s.spike_rate) * rng.exponential(s.spike_ppb, n)
        for c in spec.calm_sources:
            if c.site == s.site_id:
                x = x + c.magnitude_ppb * (speed < c.below_ms)
        x = np.maximum(x, 0.0)

        gain, offset = np.ones(n), np.zeros(n)
        for d in spec.drifts:
            if d.site == s.site_id:
                g, o = d.factors(n)
                gain, offset = gain * g, offset * g + o
        noise = rng.standard_normal(n) * s.noise_sd_ppb if s.noise_sd_ppb > 0 else np.zeros(n)
        y = np.maximum(gain * x + offset + noise, 0.0)
        if s.missing_rate > 0:
            y[rng.random(n) < s.missing_rate] = np.nan

        sites.append(_site_record(s, groups.index(s.group), rng_meta))
        series[s.site_id] = HourlySeries(s.site_id, hours, y, speed, direction)
        true[s.site_id], gains[s.site_id], offsets[s.site_id] = x, gain, offset
    truth = GroundTruth(hours, true, gains, offsets, spec.drifts)
    return NetworkDataset(tuple(sites), series), truth


# ---------------------------------------------------------------------------
# ready-made scenarios

_GROUP_TEMPLATES = {
    "urban": dict(baseline_ppb=20.0, diurnal_amp_ppb=14.0),
    "suburban": dict(baseline_ppb=12.0, diurnal_amp_ppb=8.0),
    "inland": dict(baseline_ppb=16.0, diurnal_amp_ppb=5.0, morning_peak_h=8.0, evening_peak_h=20.0),
}


def default_scenario(seed: int = 0, hours: int = 5088) -> ScenarioSpec:
    """Nine sites in three land-use groups over a Jan-Jul length epoch."""
    sites = []
    for gi, (group, params) in enumerate(_GROUP_TEMPLATES.items()):
        for k in range(3):
            sites.append(SiteSpec(site_id=f"S{3 * gi + k + 1:02d}", group=group, **params))
    return ScenarioSpec(tuple(sites), hours=hours, seed=seed)


def pair_scenario(seed: int = 0, hours: int = 4000, drifts=(), calm_sources=(), **site_kw) -> ScenarioSpec:
    """Two same-group sites, A (the monitored site) and B (its proxy)."""
    sites = (SiteSpec("A", **site_kw), SiteSpec("B", **site_kw))
    return ScenarioSpec(sites, hours=hours, seed=seed, drifts=tuple(drifts),
                        calm_sources=tuple(calm_sources))


def wind_mismatch_scenario(seed: int = 0, hours: int = 4000, magnitude_ppb: float = 15.0,
                           below_ms: float = 5.0, dwell_h: float = 240.0) -> ScenarioSpec:
    """Pair scenario where site A picks up a local source only in light wind.

    Calm and windy spells last ``dwell_h`` on average, several times the
    72 h test window, so most windows sit inside one regime.
    """
    spec = pair_scenario(seed=seed, hours=hours, calm_sources=[CalmSource("A", magnitude_ppb, below_ms)])
    return replace(spec, wind=WindSpec(calm_dwell_h=dwell_h, windy_dwell_h=dwell_h))


# ---------------------------------------------------------------------------
# scoring


@dataclass(frozen=True)
class EventScore:
    event: DriftEvent
    onset: int  # absolute epoch hour
    latency_h: float | None  # first failure span of any test opening at/after onset
    latency_by_test: dict[str, float | None]

    @property
    def detected(self) -> bool:
        return self.latency_h is not None


@dataclass(frozen=True)
class DetectionScore:
    false_alarm_rate: float
    n_clean: int
    events: tuple[EventScore, ...]

    @property
    def missed(self) -> tuple[EventScore, ...]:
        return tuple(e for e in self.events if not e.detected)


def score_detection(state: FrameworkState, truth: GroundTruth) -> DetectionScore:
    """False-alarm rate on drift-free windows and detection latency per event.

    Events at either the site or its proxy count: both make the pair diverge.
    A window is clean when it ends before the earliest such onset.
    """
    tr = state.trail
    if len(tr) and not np.isin(tr.hours, truth.hours).all():
        raise ValueError("state and ground truth cover different epochs")
    start = int(truth.hours[0])
    events = [d for d in truth.drifts if d.site in (state.site_id, state.proxy_id)]
    first_onset = min((start + d.onset_hour for d in events), default=None)
    clean = tr.evaluable.copy()
    if first_onset is not None:
        clean &= tr.hours < first_onset
    n_clean = int(clean.sum())
    far = float(tr.alarms[clean].any(axis=1).sum() / n_clean) if n_clean else 0.0

    scores = []
    for d in events:
        onset = start + d.onset_hour
        by_test = {}
        for test in TESTS:
            starts = [s for s, _ in state.failure_spans.get(test, []) if s >= onset]
            by_test[test] = float(min(starts) - onset) if starts else None
        found = [v for v in by_test.values() if v is not None]
        scores.append(EventScore(d, onset, min(found) if found else None, by_test))
    return DetectionScore(far, n_clean, tuple(scores))


def detection_fraction_ci(successes: int, trials: int, level: float = 0.95) -> tuple[float, float, float]:
    """Detection fraction with a Wilson score interval."""
    ci = binomtest(successes, trials).proportion_ci(confidence_level=level, method="wilson")
    return successes / trials, float(ci.low), float(ci.high)
