"""Alarm occurrence binned by wind speed and direction (polar heat-map data)."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .drift import FrameworkState
from .model import HourlySeries


class MissingWindError(ValueError):
    pass


@dataclass(frozen=True)
class PolarBinGrid:
    """``cells`` maps (direction sector, speed bin) to (n_hours, mean alarm sum).

    Sector i is centred on ``i * dir_bin_deg`` and spans half a sector either
    side, so sector 0 covers [-dir_bin/2, dir_bin/2).  Speed bin j covers
    [j * speed_bin_ms, (j + 1) * speed_bin_ms).
    """

    dir_bin_deg: float = 22.5
    speed_bin_ms: float = 1.0
    cells: dict[tuple[int, int], tuple[int, float]] = field(default_factory=dict)
    n_missing_wind: int = 0

    @property
    def n_sectors(self) -> int:
        return int(round(360.0 / self.dir_bin_deg))

    def rows(self):
        """(dir_center_deg, speed_bin_low, n_hours, mean_alarm_sum), sorted."""
        for (d, s), (n, mean) in sorted(self.cells.items()):
            yield d * self.dir_bin_deg, s * self.speed_bin_ms, n, mean

    def speed_profile(self) -> dict[float, tuple[int, float]]:
        """Hours and mean alarm sum per speed bin, pooled over direction."""
        acc: dict[int, list[float]] = {}
        for (_, s), (n, mean) in self.cells.items():
            tot = acc.setdefault(s, [0, 0.0])
            tot[0] += n
            tot[1] += n * mean
        return {s * self.speed_bin_ms: (int(n), t / n) for s, (n, t) in sorted(acc.items())}


def direction_sector(direction_deg, dir_bin_deg: float = 22.5):
    n = int(round(360.0 / dir_bin_deg))
    d = np.asarray(direction_deg, dtype=np.float64)
    return (np.floor(((d + dir_bin_deg / 2.0) % 360.0) / dir_bin_deg).astype(np.int64)) % n


def bin_alarms_by_wind(state: FrameworkState, series: HourlySeries,
                       dir_bin_deg: float = 22.5, speed_bin_ms: float = 1.0) -> PolarBinGrid:
    """Mean of the per-hour alarm sum (0-3) in each wind direction/speed cell.

    Only evaluable hours count; hours without wind are tallied in
    ``n_missing_wind`` instead.
    """
    if not (dir_bin_deg > 0 and abs(360.0 / dir_bin_deg - round(360.0 / dir_bin_deg)) < 1e-9):
        raise ValueError("dir_bin_deg must divide 360")
    if not speed_bin_ms > 0:
        raise ValueError("speed_bin_ms must be positive")
    if not series.has_wind:
        raise MissingWindError(f"{series.site_id}: no wind data; wind_speed_ms and wind_dir_deg "
                               "are required for wind conditioning")
    trail = state.trail
    idx = np.searchsorted(series.hours, trail.hours)
    if np.any(idx >= len(series)) or not np.array_equal(series.hours[np.minimum(idx, len(series) - 1)], trail.hours):
        raise ValueError("state trail does not align with the series epoch")

    ev = trail.evaluable
    speed = series.wind_speed[idx]
    direction = series.wind_dir[idx]
    has_wind = ~np.isnan(speed) & ~np.isnan(direction)
    use = ev & has_wind
    alarm_sum = trail.alarms.sum(axis=1)[use]
    d_idx = direction_sector(direction[use], dir_bin_deg)
    s_idx = np.floor(speed[use] / speed_bin_ms).astype(np.int64)

    cells = {}
    keys = np.stack([d_idx, s_idx], axis=1)
    if len(keys):
        uniq, inv = np.unique(keys, axis=0, return_inverse=True)
        inv = inv.ravel()
        n = np.bincount(inv)
        total = np.bincount(inv, weights=alarm_sum)
        for (d, s), c, t in zip(uniq, n, total):
            cells[(int(d), int(s))] = (int(c), float(t / c))
    return PolarBinGrid(dir_bin_deg, speed_bin_ms, cells, int((ev & ~has_wind).sum()))
