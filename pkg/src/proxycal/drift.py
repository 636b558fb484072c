"""Rolling-window three-test framework (KS, slope, intercept) against a proxy.

An *alarm* is a per-test threshold breach on the trailing window ending at an
hour.  A *failure* opens once a test's alarm has held for ``failure_hours``
of consecutive evaluations and closes at the first evaluation without alarm.
Correction is active while at least ``correction_trigger`` tests are failed.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .model import HourlySeries, format_timestamp
from .stats import EXACT_KS_MAX_N, kolmogorov_sf, ks_pvalue

TESTS = ("ks", "slope", "intercept")


@dataclass(frozen=True)
class FrameworkConfig:
    window_hours: int = 72
    failure_hours: int = 120
    p_ks_threshold: float = 0.05
    slope_band: tuple[float, float] = (0.75, 1.25)
    intercept_band_ppb: tuple[float, float] = (-5.0, 5.0)
    min_completeness: float = 0.75
    correction_trigger: int = 2
    stride: int = 1

    def __post_init__(self):
        object.__setattr__(self, "slope_band", tuple(float(v) for v in self.slope_band))
        object.__setattr__(self, "intercept_band_ppb", tuple(float(v) for v in self.intercept_band_ppb))
        problems = []
        if self.window_hours < 24:
            problems.append("window_hours must be >= 24")
        if self.failure_hours < self.window_hours:
            problems.append("failure_hours must be >= window_hours")
        if not 0 < self.p_ks_threshold < 1:
            problems.append("p_ks_threshold must lie in (0, 1)")
        lo, hi = self.slope_band
        if not lo <= 1 <= hi:
            problems.append("slope_band must contain 1")
        lo, hi = self.intercept_band_ppb
        if not lo <= 0 <= hi:
            problems.append("intercept_band_ppb must contain 0")
        if not 0 < self.min_completeness <= 1:
            problems.append("min_completeness must lie in (0, 1]")
        if self.correction_trigger not in (1, 2, 3):
            problems.append("correction_trigger must be 1, 2 or 3")
        if self.stride < 1:
            problems.append("stride must be >= 1")
        if problems:
            raise ValueError("; ".join(problems))

    @property
    def failure_steps(self) -> int:
        """Consecutive alarmed evaluations needed to open a failure span."""
        return math.ceil(self.failure_hours / self.stride)


@dataclass(frozen=True)
class TestVector:
    __test__ = False  # not a pytest class

    at: int | None
    ks_p: float
    slope: float
    intercept: float
    alarms: tuple[bool, bool, bool]
    completeness: float
    degenerate: bool = False


@dataclass(frozen=True, eq=False)
class Trail:
    """Column-oriented sequence of TestVectors; NaN marks an indeterminate statistic."""

    hours: np.ndarray
    ks_p: np.ndarray
    slope: np.ndarray
    intercept: np.ndarray
    alarms: np.ndarray  # (n, 3) bool, columns in TESTS order
    completeness: np.ndarray
    degenerate: np.ndarray

    def __len__(self):
        return len(self.hours)

    def __getitem__(self, i) -> TestVector:
        return TestVector(
            at=int(self.hours[i]), ks_p=float(self.ks_p[i]), slope=float(self.slope[i]),
            intercept=float(self.intercept[i]), alarms=tuple(bool(a) for a in self.alarms[i]),
            completeness=float(self.completeness[i]), degenerate=bool(self.degenerate[i]),
        )

    def __eq__(self, other):
        if not isinstance(other, Trail):
            return NotImplemented
        return all(
            np.array_equal(getattr(self, f), getattr(other, f), equal_nan=True)
            for f in ("hours", "ks_p", "slope", "intercept", "alarms", "completeness", "degenerate")
        )

    __hash__ = None

    @property
    def evaluable(self) -> np.ndarray:
        return ~np.isnan(self.ks_p)


@dataclass(frozen=True, eq=False)
class FrameworkState:
    site_id: str
    proxy_id: str
    cfg: FrameworkConfig
    trail: Trail
    failing: np.ndarray  # (n, 3) bool: test is inside a failure span at that evaluation
    failure_spans: dict[str, list[tuple[int, int]]] = field(default_factory=dict)
    correction_active_spans: list[tuple[int, int]] = field(default_factory=list)

    @property
    def n_failing(self) -> np.ndarray:
        return self.failing.sum(axis=1)

    @property
    def correction_active(self) -> np.ndarray:
        return self.n_failing >= self.cfg.correction_trigger

    def __eq__(self, other):
        if not isinstance(other, FrameworkState):
            return NotImplemented
        return (self.site_id == other.site_id and self.proxy_id == other.proxy_id
                and self.cfg == other.cfg and self.trail == other.trail
                and np.array_equal(self.failing, other.failing)
                and self.failure_spans == other.failure_spans
                and self.correction_active_spans == other.correction_active_spans)

    __hash__ = None


def _statistics(y, z, cfg: FrameworkConfig, window: int, stride: int):
    """Vectorised statistics for every trailing window of y (site) and z (proxy)."""
    ny, my, vy, nz, mz, vz = kernels.window_moments(y, z, window, stride)
    dint, n1, n2 = kernels.window_ks(y, z, window, stride)
    completeness = np.minimum(ny, nz) / window
    ok = completeness >= cfg.min_completeness - 1e-12
    ok &= (ny >= 1) & (nz >= 1)

    ks_p = np.full(len(ok), np.nan)
    big = ok & (n1 + n2 > EXACT_KS_MAX_N)
    if big.any():
        en = n1[big] * n2[big] / (n1[big] + n2[big])
        d = dint[big] / (n1[big] * n2[big])
        ks_p[big] = np.where(d == 0, 1.0, kolmogorov_sf(np.sqrt(en) * d))
    ends = np.arange(window - 1, len(y), stride)
    for k in np.flatnonzero(ok & ~big):
        sl = slice(ends[k] - window + 1, ends[k] + 1)
        pooled = np.sort(np.concatenate([y[sl], z[sl]]))
        pooled = pooled[~np.isnan(pooled)]
        ks_p[k] = ks_pvalue(int(dint[k]), int(n1[k]), int(n2[k]), pooled)

    slope = np.full(len(ok), np.nan)
    both_var = ok & (vy > 0) & (vz > 0)
    slope[both_var] = np.sqrt(vz[both_var] / vy[both_var])
    both_const = ok & (vy == 0) & (vz == 0)
    slope[both_const] = 1.0
    degenerate = ok & ~both_var & ~both_const
    intercept = mz - slope * my

    lo, hi = cfg.slope_band
    ilo, ihi = cfg.intercept_band_ppb
    with np.errstate(invalid="ignore"):
        alarms = np.stack([
            ks_p < cfg.p_ks_threshold,
            (slope < lo) | (slope > hi),
            (intercept < ilo) | (intercept > ihi),
        ], axis=1)
    alarms &= ok[:, None]
    return ks_p, slope, intercept, alarms, completeness, degenerate


def evaluate_window(site_window, proxy_window, cfg: FrameworkConfig | None = None,
                    at: int | None = None) -> TestVector:
    """Run the three tests on one pair of equal-length windows."""
    cfg = cfg or FrameworkConfig()
    y = np.asarray(site_window, dtype=np.float64)
    z = np.asarray(proxy_window, dtype=np.float64)
    if y.shape != z.shape or y.ndim != 1 or len(y) == 0:
        raise ValueError("site and proxy windows must be 1-D and of equal length")
    ks_p, slope, intercept, alarms, comp, degen = _statistics(y, z, cfg, len(y), 1)
    return TestVector(at=at, ks_p=float(ks_p[0]), slope=float(slope[0]),
                      intercept=float(intercept[0]), alarms=tuple(bool(a) for a in alarms[0]),
                      completeness=float(comp[0]), degenerate=bool(degen[0]))


def failure_mask(alarm: np.ndarray, steps: int) -> np.ndarray:
    """True where an alarm run has lasted ``steps`` evaluations, until it ends."""
    run = np.zeros(len(alarm), dtype=np.int64)
    count = 0
    for i, a in enumerate(alarm):
        count = count + 1 if a else 0
        run[i] = count
    return run >= steps


def mask_spans(mask: np.ndarray, hours: np.ndarray, stride: int) -> list[tuple[int, int]]:
    """Half-open ``[start_hour, end_hour)`` intervals covering the True runs."""
    spans = []
    padded = np.concatenate([[False], mask, [False]])
    edges = np.flatnonzero(padded[1:] != padded[:-1])
    for start, stop in zip(edges[::2], edges[1::2]):
        end = hours[stop] if stop < len(hours) else hours[-1] + stride
        spans.append((int(hours[start]), int(end)))
    return spans


def state_from_trail(site_id: str, proxy_id: str, cfg: FrameworkConfig, trail: Trail) -> FrameworkState:
    failing = np.stack([failure_mask(trail.alarms[:, k], cfg.failure_steps) for k in range(3)], axis=1) \
        if len(trail) else np.zeros((0, 3), dtype=bool)
    spans = {t: mask_spans(failing[:, k], trail.hours, cfg.stride) for k, t in enumerate(TESTS)}
    active = failing.sum(axis=1) >= cfg.correction_trigger
    return FrameworkState(site_id, proxy_id, cfg, trail, failing, spans,
                          mask_spans(active, trail.hours, cfg.stride))


def run_framework(site: HourlySeries, proxy: HourlySeries, cfg: FrameworkConfig | None = None) -> FrameworkState:
    """Evaluate every trailing window from the first full one onward."""
    cfg = cfg or FrameworkConfig()
    if not np.array_equal(site.hours, proxy.hours):
        raise ValueError(f"epoch mismatch between {site.site_id} and {proxy.site_id}")
    if len(site) < cfg.window_hours:
        raise ValueError(f"series of {len(site)} hours is shorter than the {cfg.window_hours} h window")
    y, z = site.values, proxy.values
    ks_p, slope, intercept, alarms, comp, degen = _statistics(y, z, cfg, cfg.window_hours, cfg.stride)
    ends = np.arange(cfg.window_hours - 1, len(y), cfg.stride)
    trail = Trail(site.hours[ends], ks_p, slope, intercept, alarms, comp, degen)
    return state_from_trail(site.site_id, proxy.site_id, cfg, trail)


@dataclass(frozen=True)
class AlarmSummary:
    site_id: str
    proxy_id: str
    n_evaluations: int
    n_evaluable: int
    alarm_counts: dict[str, int]
    alarm_fractions: dict[str, float]
    any_alarm_fraction: float
    failure_span_counts: dict[str, int]
    failure_hours: dict[str, int]

    def rows(self):
        for t in TESTS:
            yield (self.site_id, self.proxy_id, t, self.n_evaluable, self.alarm_counts[t],
                   self.alarm_fractions[t], self.failure_span_counts[t], self.failure_hours[t])


def alarm_summary(state: FrameworkState) -> AlarmSummary:
    """Alarm counts per test over the evaluable (non-indeterminate) evaluations."""
    tr = state.trail
    ev = tr.evaluable
    n_ev = int(ev.sum())
    counts = {t: int(tr.alarms[ev, k].sum()) for k, t in enumerate(TESTS)}
    frac = {t: (counts[t] / n_ev if n_ev else 0.0) for t in TESTS}
    any_frac = float(tr.alarms[ev].any(axis=1).sum() / n_ev) if n_ev else 0.0
    spans = state.failure_spans
    return AlarmSummary(
        site_id=state.site_id, proxy_id=state.proxy_id, n_evaluations=len(tr), n_evaluable=n_ev,
        alarm_counts=counts, alarm_fractions=frac, any_alarm_fraction=any_frac,
        failure_span_counts={t: len(spans.get(t, [])) for t in TESTS},
        failure_hours={t: sum(e - s for s, e in spans.get(t, [])) for t in TESTS},
    )


def describe_spans(spans: list[tuple[int, int]]) -> str:
    return ", ".join(f"[{format_timestamp(s)}, {format_timestamp(e)})" for s, e in spans) or "none"
