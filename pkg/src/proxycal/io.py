"""CSV ingestion and emission, configuration and scenario files.

Every writer is byte-deterministic: fixed column order, LF line endings,
floats as 17 significant digits, missing values as empty fields and
timestamps as ISO-8601 UTC.
"""
from __future__ import annotations

import configparser
import csv
import math
from dataclasses import dataclass, field, fields
from functools import singledispatch
from pathlib import Path

import numpy as np

from .correct import CorrectionResult
from .drift import FrameworkConfig, FrameworkState, Trail, state_from_trail
from .met import PolarBinGrid
from .model import (
    HourlySeries,
    LandUseFeatures,
    NetworkDataset,
    ProxyAssignment,
    SiteRecord,
    SubHourlyTimestamp,
    format_timestamp,
    parse_timestamp,
)
from .sim import CalmSource, DriftEvent, GroundTruth, ScenarioSpec, SiteSpec, WindSpec
from .stats import HistogramConfig

OBS_HEADER = ["timestamp_utc", "site_id", "no2_ppb", "wind_speed_ms", "wind_dir_deg"]
SITES_HEADER = ["site_id", "name", "lat", "lon", "dist_motorway_m", "elevation_m", "road_length_1km_m"]
ASSIGNMENT_HEADER = ["site_id", "proxy_id", "method", "score"]
TRAIL_HEADER = ["timestamp", "ks_p", "slope", "intercept", "ks_alarm", "slope_alarm",
                "int_alarm", "n_failing", "correction_active"]
CORRECTED_HEADER = ["timestamp", "raw_ppb", "corrected_ppb", "a0", "a1", "active_flag"]
POLAR_HEADER = ["dir_center_deg", "speed_bin_low", "n_hours", "mean_alarm_sum"]
REPORT_HEADER = ["kind", "site_id", "line", "value", "detail"]
TRUTH_HEADER = ["timestamp_utc", "site_id", "true_ppb", "gain", "offset_ppb"]
DRIFT_HEADER = ["site_id", "onset_hour", "onset_utc", "kind", "magnitude", "ramp_hours"]

MISSING_TOKENS = {"", "na", "nan", "null", "none"}


class SchemaError(ValueError):
    pass


def fmt(x) -> str:
    if x is None:
        return ""
    x = float(x)
    return "" if math.isnan(x) else format(x, ".17g")


def _num(text: str) -> float:
    return float("nan") if text.strip().lower() in MISSING_TOKENS else float(text)


def _writer(fh):
    return csv.writer(fh, lineterminator="\n")


def _open_write(path):
    path = Path(path)
    return open(path, "w", newline="", encoding="utf-8")


def _read_rows(path, header):
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise SchemaError(f"{path}: empty file")
    if [h.strip() for h in rows[0]] != header:
        raise SchemaError(f"{path}: header {rows[0]} does not match {header}")
    return rows[1:]


# ---------------------------------------------------------------------------
# observations


@dataclass
class IngestReport:
    rows_read: int = 0
    rows_accepted: int = 0
    rejected: list[tuple[int, str]] = field(default_factory=list)  # (line number, reason)
    completeness: dict[str, float] = field(default_factory=dict)
    epoch: tuple[int, int] | None = None

    @property
    def rows_rejected(self) -> int:
        return len(self.rejected)


def read_observations(path) -> tuple[dict[str, HourlySeries], IngestReport]:
    """Parse an observations CSV into gap-free per-site series.

    Bad rows are rejected with their line number instead of aborting.
    All series are padded with missing values to the common epoch.
    """
    rows = _read_rows(path, OBS_HEADER)
    report = IngestReport()
    per_site: dict[str, dict[int, tuple[float, float, float]]] = {}
    for lineno, row in enumerate(rows, start=2):
        report.rows_read += 1
        if len(row) != len(OBS_HEADER):
            report.rejected.append((lineno, f"expected {len(OBS_HEADER)} fields, got {len(row)}"))
            continue
        ts, sid, no2, ws, wd = (c.strip() for c in row)
        if not sid:
            report.rejected.append((lineno, "empty site_id"))
            continue
        try:
            hour = parse_timestamp(ts)
        except SubHourlyTimestamp:
            report.rejected.append((lineno, "sub-hourly timestamp"))
            continue
        except ValueError:
            report.rejected.append((lineno, f"unparseable timestamp {ts!r}"))
            continue
        try:
            values = (_num(no2), _num(ws), _num(wd))
        except ValueError:
            report.rejected.append((lineno, "unparseable numeric field"))
            continue
        site = per_site.setdefault(sid, {})
        if hour in site:
            report.rejected.append((lineno, f"duplicate timestamp {ts} for site {sid}"))
            continue
        site[hour] = values
        report.rows_accepted += 1

    series: dict[str, HourlySeries] = {}
    if per_site:
        lo = min(min(s) for s in per_site.values())
        hi = max(max(s) for s in per_site.values())
        hours = np.arange(lo, hi + 1, dtype=np.int64)
        report.epoch = (int(lo), int(hi))
        for sid in sorted(per_site):
            arr = np.full((len(hours), 3), np.nan)
            for h, vals in per_site[sid].items():
                arr[h - lo] = vals
            series[sid] = HourlySeries(sid, hours, arr[:, 0], arr[:, 1], arr[:, 2])
            report.completeness[sid] = series[sid].completeness
    return series, report


def write_observations(data, path) -> None:
    series = data.series if isinstance(data, NetworkDataset) else data
    with _open_write(path) as fh:
        w = _writer(fh)
        w.writerow(OBS_HEADER)
        for sid in sorted(series):
            s = series[sid]
            for i in range(len(s)):
                w.writerow([format_timestamp(s.hours[i]), sid, fmt(s.values[i]),
                            fmt(s.wind_speed[i]), fmt(s.wind_dir[i])])


# ---------------------------------------------------------------------------
# sites


def read_sites(path) -> list[SiteRecord]:
    """Site metadata, one record per row, in file order."""
    rows = _read_rows(path, SITES_HEADER)
    sites, seen = [], set()
    for lineno, row in enumerate(rows, start=2):
        if len(row) != len(SITES_HEADER) or any(not c.strip() for c in row[:1] + row[2:]):
            raise SchemaError(f"{path}:{lineno}: missing required field")
        sid = row[0].strip()
        if sid in seen:
            raise SchemaError(f"{path}:{lineno}: duplicate site_id {sid}")
        seen.add(sid)
        try:
            lat, lon, dist, elev, road = (float(c) for c in row[2:])
        except ValueError as exc:
            raise SchemaError(f"{path}:{lineno}: {exc}") from None
        sites.append(SiteRecord(sid, row[1].strip(), lat, lon, LandUseFeatures(dist, elev, road)))
    return sites


def write_sites(sites, path) -> None:
    with _open_write(path) as fh:
        w = _writer(fh)
        w.writerow(SITES_HEADER)
        for s in sorted(sites, key=lambda s: s.site_id):
            f = s.features
            w.writerow([s.site_id, s.name, fmt(s.latitude), fmt(s.longitude),
                        fmt(f.dist_to_motorway), fmt(f.elevation), fmt(f.road_length_1km)])


def load_network(sites_path, obs_path) -> tuple[NetworkDataset, IngestReport]:
    series, report = read_observations(obs_path)
    return NetworkDataset(tuple(read_sites(sites_path)), series), report


# ---------------------------------------------------------------------------
# artifacts


def write_assignments(assignments, path) -> None:
    with _open_write(path) as fh:
        w = _writer(fh)
        w.writerow(ASSIGNMENT_HEADER)
        for a in assignments:
            w.writerow([a.site_id, a.proxy_id, a.method, fmt(a.score)])


def read_assignments(path) -> list[ProxyAssignment]:
    return [ProxyAssignment(r[0], r[1], r[2], _num(r[3])) for r in _read_rows(path, ASSIGNMENT_HEADER)]


def write_trail(state: FrameworkState, path) -> None:
    tr = state.trail
    n_failing = state.n_failing
    active = state.correction_active
    with _open_write(path) as fh:
        w = _writer(fh)
        w.writerow(TRAIL_HEADER)
        for i in range(len(tr)):
            w.writerow([format_timestamp(tr.hours[i]), fmt(tr.ks_p[i]), fmt(tr.slope[i]),
                        fmt(tr.intercept[i]), *(int(a) for a in tr.alarms[i]),
                        int(n_failing[i]), int(active[i])])


def read_trail(path, site_id: str, proxy_id: str, cfg: FrameworkConfig | None = None) -> FrameworkState:
    """Rebuild a FrameworkState from its CSV; failure spans are recomputed
    from the alarm columns and checked against the stored n_failing.
    Completeness is not part of the schema and comes back as NaN."""
    cfg = cfg or FrameworkConfig()
    rows = _read_rows(path, TRAIL_HEADER)
    n = len(rows)
    hours = np.array([parse_timestamp(r[0]) for r in rows], dtype=np.int64)
    cols = [np.array([_num(r[k]) for r in rows]) for k in (1, 2, 3)]
    alarms = np.array([[r[k] == "1" for k in (4, 5, 6)] for r in rows], dtype=bool).reshape(n, 3)
    trail = Trail(hours, cols[0], cols[1], cols[2], alarms, np.full(n, np.nan), np.zeros(n, dtype=bool))
    state = state_from_trail(site_id, proxy_id, cfg, trail)
    stored = np.array([int(r[7]) for r in rows], dtype=np.int64)
    if not np.array_equal(stored, state.n_failing):
        raise SchemaError(f"{path}: n_failing column disagrees with failure_hours={cfg.failure_hours}")
    return state


def write_corrected(result: CorrectionResult, path) -> None:
    raw, cor = result.raw, result.corrected
    with _open_write(path) as fh:
        w = _writer(fh)
        w.writerow(CORRECTED_HEADER)
        for i in range(len(raw)):
            w.writerow([format_timestamp(raw.hours[i]), fmt(raw.values[i]), fmt(cor.values[i]),
                        fmt(result.a0[i]), fmt(result.a1[i]), int(result.active[i])])


def read_corrected(path, site_id: str) -> CorrectionResult:
    rows = _read_rows(path, CORRECTED_HEADER)
    hours = np.array([parse_timestamp(r[0]) for r in rows], dtype=np.int64)
    raw, cor, a0, a1 = (np.array([_num(r[k]) for r in rows]) for k in (1, 2, 3, 4))
    active = np.array([r[5] == "1" for r in rows], dtype=bool)
    with np.errstate(invalid="ignore"):
        clamped = active & ~np.isnan(a1) & (a0 + a1 * raw < 0)
    rs = HourlySeries(site_id, hours, raw)
    return CorrectionResult(site_id, rs, rs.with_values(cor), a0, a1, active, clamped)


def write_polar_grid(grid: PolarBinGrid, path) -> None:
    with _open_write(path) as fh:
        w = _writer(fh)
        w.writerow(POLAR_HEADER)
        for d, s, n, mean in grid.rows():
            w.writerow([fmt(d), fmt(s), n, fmt(mean)])


def read_polar_grid(path, dir_bin_deg: float = 22.5, speed_bin_ms: float = 1.0,
                    n_missing_wind: int = 0) -> PolarBinGrid:
    cells = {}
    for r in _read_rows(path, POLAR_HEADER):
        key = (int(round(float(r[0]) / dir_bin_deg)), int(round(float(r[1]) / speed_bin_ms)))
        cells[key] = (int(r[2]), float(r[3]))
    return PolarBinGrid(dir_bin_deg, speed_bin_ms, cells, n_missing_wind)


def write_ingest_report(report: IngestReport, path) -> None:
    with _open_write(path) as fh:
        w = _writer(fh)
        w.writerow(REPORT_HEADER)
        w.writerow(["rows_read", "", "", report.rows_read, ""])
        w.writerow(["rows_accepted", "", "", report.rows_accepted, ""])
        if report.epoch is not None:
            w.writerow(["epoch", "", "", report.epoch[0], format_timestamp(report.epoch[0])])
            w.writerow(["epoch", "", "", report.epoch[1], format_timestamp(report.epoch[1])])
        for sid in sorted(report.completeness):
            w.writerow(["completeness", sid, "", fmt(report.completeness[sid]), ""])
        for line, reason in report.rejected:
            w.writerow(["rejected", "", line, "", reason])


def read_ingest_report(path) -> IngestReport:
    rep = IngestReport()
    epoch = []
    for kind, sid, line, value, detail in _read_rows(path, REPORT_HEADER):
        if kind == "rows_read":
            rep.rows_read = int(value)
        elif kind == "rows_accepted":
            rep.rows_accepted = int(value)
        elif kind == "epoch":
            epoch.append(int(value))
        elif kind == "completeness":
            rep.completeness[sid] = float(value)
        elif kind == "rejected":
            rep.rejected.append((int(line), detail))
    rep.epoch = tuple(epoch) if epoch else None
    return rep


def write_truth(truth: GroundTruth, path) -> None:
    with _open_write(path) as fh:
        w = _writer(fh)
        w.writerow(TRUTH_HEADER)
        for sid in sorted(truth.true):
            for i, h in enumerate(truth.hours):
                w.writerow([format_timestamp(h), sid, fmt(truth.true[sid][i]),
                            fmt(truth.gain[sid][i]), fmt(truth.offset[sid][i])])


def write_drift_schedule(truth: GroundTruth, path) -> None:
    with _open_write(path) as fh:
        w = _writer(fh)
        w.writerow(DRIFT_HEADER)
        for d in truth.drifts:
            w.writerow([d.site, d.onset_hour, format_timestamp(truth.hours[0] + d.onset_hour),
                        d.kind, fmt(d.magnitude), d.ramp_hours])


@singledispatch
def write_csv(artifact, path) -> None:
    """Write any supported artifact to ``path`` in its documented schema."""
    if isinstance(artifact, (list, tuple)) and all(isinstance(a, ProxyAssignment) for a in artifact):
        write_assignments(artifact, path)
        return
    raise TypeError(f"no CSV schema for {type(artifact).__name__}")


write_csv.register(FrameworkState, write_trail)
write_csv.register(CorrectionResult, write_corrected)
write_csv.register(PolarBinGrid, write_polar_grid)
write_csv.register(IngestReport, write_ingest_report)
write_csv.register(NetworkDataset, write_observations)
write_csv.register(GroundTruth, write_truth)


# ---------------------------------------------------------------------------
# key-value configuration


def _pair(text: str) -> tuple[float, float]:
    lo, hi = (float(v) for v in text.split(","))
    return lo, hi


def _parse_fields(section, cls, converters=None):
    converters = converters or {}
    known = {f.name: f for f in fields(cls)}
    kwargs = {}
    for key, raw in section.items():
        if key not in known:
            raise SchemaError(f"unknown key {key!r} in [{section.name}]")
        conv = converters.get(key)
        if conv is None:
            typ = str(known[key].type)
            conv = int if typ.startswith("int") else float if typ.startswith("float") else str
        kwargs[key] = conv(raw.strip())
    return kwargs


def _parser(path) -> configparser.ConfigParser:
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    with open(path, encoding="utf-8") as fh:
        cp.read_file(fh)
    return cp


def load_config(path=None, **overrides) -> tuple[FrameworkConfig, HistogramConfig]:
    """Framework and histogram settings from ``[framework]`` / ``[histogram]``.

    Keyword overrides (e.g. from CLI flags) win over the file when not None.
    """
    fw, hist = {}, {}
    if path is not None:
        cp = _parser(path)
        if cp.has_section("framework"):
            fw = _parse_fields(cp["framework"], FrameworkConfig,
                               {"slope_band": _pair, "intercept_band_ppb": _pair})
        if cp.has_section("histogram"):
            hist = _parse_fields(cp["histogram"], HistogramConfig)
    fw_names = {f.name for f in fields(FrameworkConfig)}
    for key, value in overrides.items():
        if value is None:
            continue
        (fw if key in fw_names else hist)[key] = value
    return FrameworkConfig(**fw), HistogramConfig(**hist)


def write_config(path, cfg: FrameworkConfig, hist: HistogramConfig) -> None:
    with _open_write(path) as fh:
        fh.write("[framework]\n")
        for f in fields(FrameworkConfig):
            v = getattr(cfg, f.name)
            fh.write(f"{f.name} = {', '.join(fmt(x) for x in v) if isinstance(v, tuple) else v}\n")
        fh.write("\n[histogram]\n")
        for f in fields(HistogramConfig):
            fh.write(f"{f.name} = {getattr(hist, f.name)}\n")


def read_scenario(path) -> ScenarioSpec:
    """Scenario from a key-value file.

    Sections: ``[scenario]`` (hours, seed, start, regional_phi, regional_sd),
    ``[wind]``, ``[site_defaults]``, one ``[site <id>]`` per site,
    ``[drift <name>]`` and ``[calm_source <name>]`` entries.  Without site
    sections the nine-site default network is used.
    """
    from .sim import default_scenario

    cp = _parser(path)
    top = dict(cp["scenario"]) if cp.has_section("scenario") else {}
    seed = int(top.pop("seed", 0))
    hours = int(top.pop("hours", 5088))
    start = parse_timestamp(top.pop("start")) if "start" in top else None
    extra = {}
    for key in ("regional_phi", "regional_sd"):
        if key in top:
            extra[key] = float(top.pop(key))
    if top:
        raise SchemaError(f"unknown keys in [scenario]: {sorted(top)}")

    site_conv = {"site_id": str, "group": str}
    defaults = _parse_fields(cp["site_defaults"], SiteSpec, site_conv) if cp.has_section("site_defaults") else {}
    sites, drifts, calm = [], [], []
    for name in cp.sections():
        head, _, label = name.partition(" ")
        if head == "site":
            kw = dict(defaults)
            kw.update(_parse_fields(cp[name], SiteSpec, site_conv))
            sites.append(SiteSpec(site_id=label.strip(), **kw))
        elif head == "drift":
            drifts.append(DriftEvent(**_parse_fields(cp[name], DriftEvent, {"site": str, "kind": str})))
        elif head == "calm_source":
            calm.append(CalmSource(**_parse_fields(cp[name], CalmSource, {"site": str})))
    wind = WindSpec(**_parse_fields(cp["wind"], WindSpec, {"calm_speed": _pair, "windy_speed": _pair})) \
        if cp.has_section("wind") else WindSpec()
    if not sites:
        base = default_scenario(seed=seed, hours=hours)
        sites = [SiteSpec(**{**{f.name: getattr(s, f.name) for f in fields(SiteSpec)}, **defaults}) for s in base.sites]
    kwargs = dict(hours=hours, seed=seed, drifts=tuple(drifts), calm_sources=tuple(calm), wind=wind, **extra)
    if start is not None:
        kwargs["start_hour"] = start
    return ScenarioSpec(tuple(sites), **kwargs)
