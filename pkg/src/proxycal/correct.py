"""Moment-matched affine correction of a site series against its proxy."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .drift import FrameworkConfig, FrameworkState
from .model import HourlySeries
from .stats import InsufficientDataError, mean_var


def fit_parameters(site_window, proxy_window) -> tuple[float, float]:
    """Offset a0 and gain a1 that give a0 + a1*site the proxy's mean and variance.

    a1 = sqrt(var(proxy) / var(site)), a0 = mean(proxy) - a1 * mean(site).
    Returns (nan, nan) when the site window is constant or the proxy window
    is constant (a1 would be 0 or undefined).
    """
    my, vy = mean_var(site_window)
    mz, vz = mean_var(proxy_window)
    if vy == 0 and vz == 0:
        return mz - my, 1.0
    if vy <= 0 or vz <= 0:
        return float("nan"), float("nan")
    a1 = float(np.sqrt(vz / vy))
    return mz - a1 * my, a1


def apply_affine(values, a0: float, a1: float) -> np.ndarray:
    return a0 + a1 * np.asarray(values, dtype=np.float64)


@dataclass(frozen=True, eq=False)
class CorrectionResult:
    site_id: str
    raw: HourlySeries
    corrected: HourlySeries
    a0: np.ndarray  # NaN outside correction-active hours
    a1: np.ndarray
    active: np.ndarray
    clamped: np.ndarray  # corrected value was negative and set to 0

    @property
    def parameter_trail(self) -> list[tuple[int, float, float]]:
        idx = np.flatnonzero(self.active & ~np.isnan(self.a1))
        return [(int(self.raw.hours[i]), float(self.a0[i]), float(self.a1[i])) for i in idx]

    def __eq__(self, other):
        if not isinstance(other, CorrectionResult):
            return NotImplemented
        return (self.site_id == other.site_id and self.raw == other.raw
                and self.corrected == other.corrected
                and np.array_equal(self.a0, other.a0, equal_nan=True)
                and np.array_equal(self.a1, other.a1, equal_nan=True)
                and np.array_equal(self.active, other.active)
                and np.array_equal(self.clamped, other.clamped))

    __hash__ = None


def active_hours_mask(state: FrameworkState, hours: np.ndarray) -> np.ndarray:
    mask = np.zeros(len(hours), dtype=bool)
    for start, end in state.correction_active_spans:
        mask |= (hours >= start) & (hours < end)
    return mask


def apply_correction(site: HourlySeries, state: FrameworkState, proxy: HourlySeries,
                     cfg: FrameworkConfig | None = None) -> CorrectionResult:
    """Correct the site series inside the state's correction-active spans.

    Each active hour is mapped through a0 + a1*y with parameters refitted on
    the trailing window ending at that hour; other hours pass through
    unchanged.  Negative corrected values are clamped to 0 and flagged.
    """
    cfg = cfg or state.cfg
    if state.site_id != site.site_id or state.proxy_id != proxy.site_id:
        raise ValueError(f"state is for {state.site_id}->{state.proxy_id}, "
                         f"series are {site.site_id}->{proxy.site_id}")
    if not np.array_equal(site.hours, proxy.hours):
        raise ValueError("site and proxy epochs differ")
    if len(state.trail) and not np.isin(state.trail.hours, site.hours).all():
        raise ValueError("state trail does not align with the site series")

    w = cfg.window_hours
    y, z = site.values, proxy.values
    active = active_hours_mask(state, site.hours)
    active[: w - 1] = False
    a0 = np.full(len(y), np.nan)
    a1 = np.full(len(y), np.nan)
    if active.any():
        ny, my, vy, nz, mz, vz = kernels.window_moments(y, z, w, 1)
        k = np.flatnonzero(active) - (w - 1)
        vyk, vzk = vy[k], vz[k]
        fit = (vyk > 0) & (vzk > 0)
        const = (vyk == 0) & (vzk == 0)
        g = np.full(len(k), np.nan)
        g[fit] = np.sqrt(vzk[fit] / vyk[fit])
        g[const] = 1.0
        a1[k + w - 1] = g
        a0[k + w - 1] = mz[k] - g * my[k]
    use = active & ~np.isnan(a1)
    out = y.copy()
    out[use] = a0[use] + a1[use] * y[use]
    with np.errstate(invalid="ignore"):
        clamped = use & (out < 0)
    out[clamped] = 0.0
    return CorrectionResult(site.site_id, site, site.with_values(out), a0, a1, active, clamped)


def window_fit_error(site_window, proxy_window) -> tuple[float, float]:
    """Relative mean and variance mismatch after correcting the site window."""
    a0, a1 = fit_parameters(site_window, proxy_window)
    if np.isnan(a1):
        raise InsufficientDataError("window cannot be fitted")
    mc, vc = mean_var(apply_affine(site_window, a0, a1))
    mz, vz = mean_var(proxy_window)
    return abs(mc - mz) / max(abs(mz), 1e-300), abs(vc - vz) / max(vz, 1e-300)
