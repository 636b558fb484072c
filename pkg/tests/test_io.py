from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from proxycal import io
from proxycal.correct import apply_correction
from proxycal.data import load_sites, sites_path
from proxycal.drift import FrameworkConfig, run_framework
from proxycal.met import bin_alarms_by_wind
from proxycal.model import HourlySeries, NetworkDataset
from proxycal.proxy import select_knn, select_nearest_geo
from proxycal.sim import DriftEvent, generate, pair_scenario
from proxycal.stats import HistogramConfig

HEADER = "timestamp_utc,site_id,no2_ppb,wind_speed_ms,wind_dir_deg\n"


def _write(path, body):
    path.write_text(HEADER + body)
    return path


def test_three_row_file(tmp_path):
    p = _write(tmp_path / "o.csv", "2018-01-01T00:00:00Z,A,1.5,2,90\n"
                                   "2018-01-01T01:00:00Z,A,2.5,,\n"
                                   "2018-01-01T02:00:00Z,A,3.5,1,180\n")
    series, rep = io.read_observations(p)
    assert (rep.rows_read, rep.rows_accepted, rep.rows_rejected) == (3, 3, 0)
    assert list(series["A"].values) == [1.5, 2.5, 3.5]
    assert np.isnan(series["A"].wind_speed[1])


def test_na_value_accepted_as_missing(tmp_path):
    p = _write(tmp_path / "o.csv", "2018-01-01T00:00:00Z,A,NA,,\n2018-01-01T01:00:00Z,A,4,,\n")
    series, rep = io.read_observations(p)
    assert rep.rows_accepted == 2 and np.isnan(series["A"].values[0])


def test_sub_hourly_timestamp_rejected(tmp_path):
    p = _write(tmp_path / "o.csv", "2018-01-01T00:00:00Z,A,1,,\n2018-01-01T00:30:00Z,A,2,,\n")
    _, rep = io.read_observations(p)
    assert rep.rejected == [(3, "sub-hourly timestamp")]


def test_no_row_silently_dropped(tmp_path):
    p = _write(tmp_path / "o.csv", "2018-01-01T00:00:00Z,A,1,,\n"
                                   "garbage\n"
                                   "2018-01-01T01:00:00Z,A,abc,,\n"
                                   "2018-01-01T01:00:00Z,,3,,\n"
                                   "2018-01-01T00:00:00Z,A,9,,\n"
                                   "yesterday,A,9,,\n"
                                   "2018-01-01T03:00:00Z,B,2,,\n")
    series, rep = io.read_observations(p)
    assert rep.rows_read == rep.rows_accepted + rep.rows_rejected == 7
    assert [line for line, _ in rep.rejected] == [3, 4, 5, 6, 7]
    # both series padded to the common epoch 00:00 .. 03:00
    assert len(series["A"]) == len(series["B"]) == 4
    assert rep.completeness == {"A": 0.25, "B": 0.25}


def test_malformed_and_empty_files(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("time,site,value\n")
    with pytest.raises(io.SchemaError):
        io.read_observations(bad)
    empty = tmp_path / "empty.csv"
    empty.write_text("")
    with pytest.raises(io.SchemaError):
        io.read_observations(empty)


def test_read_sites_fixture():
    sites = {s.site_id: s for s in io.read_sites(sites_path())}
    assert len(sites) == 9
    f = sites["FONT"].features
    assert (f.dist_to_motorway, f.elevation, f.road_length_1km) == (3210, 363, 5889)


def test_read_sites_empty_and_duplicate(tmp_path):
    p = tmp_path / "s.csv"
    p.write_text(",".join(io.SITES_HEADER) + "\n")
    assert io.read_sites(p) == []
    p.write_text(",".join(io.SITES_HEADER) + "\nX,x,1,1,1,1,1\nX,y,2,2,2,2,2\n")
    with pytest.raises(ValueError, match="X"):
        io.read_sites(p)
    p.write_text(",".join(io.SITES_HEADER) + "\nX,x,1,,1,1,1\n")
    with pytest.raises(ValueError):
        io.read_sites(p)


def _network(seed=0, hours=400):
    data, _ = generate(pair_scenario(seed=seed, hours=hours, missing_rate=0.05,
                                     drifts=[DriftEvent("A", 150, "offset_step", 12.0)]))
    return data


def test_dataset_round_trip(tmp_path):
    data = _network()
    io.write_sites(data.sites, tmp_path / "s.csv")
    io.write_observations(data, tmp_path / "o.csv")
    back, rep = io.load_network(tmp_path / "s.csv", tmp_path / "o.csv")
    assert back == data and rep.rows_rejected == 0


@settings(max_examples=30, deadline=None)
@given(st.lists(st.one_of(st.none(), st.floats(0, 1e6, allow_nan=False)), min_size=1, max_size=30))
def test_observation_values_round_trip_exactly(tmp_path_factory, values):
    vals = np.array([np.nan if v is None else v for v in values])
    s = HourlySeries("A", 425000 + np.arange(len(vals)), vals)
    path = tmp_path_factory.mktemp("rt") / "o.csv"
    io.write_observations({"A": s}, path)
    back, _ = io.read_observations(path)
    assert back["A"] == s


def test_assignments_round_trip(tmp_path):
    a = select_knn(load_sites()) + select_nearest_geo(load_sites())
    io.write_csv(a, tmp_path / "a.csv")
    assert io.read_assignments(tmp_path / "a.csv") == a


def _state_and_correction():
    data = _network(hours=600)
    cfg = FrameworkConfig(correction_trigger=1)
    state = run_framework(data.series["A"], data.series["B"], cfg)
    res = apply_correction(data.series["A"], state, data.series["B"], cfg)
    return data, cfg, state, res


def test_trail_round_trip(tmp_path):
    _, cfg, state, _ = _state_and_correction()
    assert state.failure_spans["intercept"]
    io.write_csv(state, tmp_path / "t.csv")
    back = io.read_trail(tmp_path / "t.csv", "A", "B", cfg)
    for name in ("hours", "ks_p", "slope", "intercept", "alarms"):
        assert np.array_equal(getattr(back.trail, name), getattr(state.trail, name), equal_nan=True)
    assert back.failure_spans == state.failure_spans
    assert back.correction_active_spans == state.correction_active_spans


def test_trail_with_wrong_config_detected(tmp_path):
    _, cfg, state, _ = _state_and_correction()
    io.write_trail(state, tmp_path / "t.csv")
    with pytest.raises(io.SchemaError):
        io.read_trail(tmp_path / "t.csv", "A", "B", FrameworkConfig(failure_hours=96))


def test_corrected_round_trip_and_header(tmp_path):
    _, _, _, res = _state_and_correction()
    assert res.active.any()
    io.write_csv(res, tmp_path / "c.csv")
    assert (tmp_path / "c.csv").read_text().splitlines()[0] == \
        "timestamp,raw_ppb,corrected_ppb,a0,a1,active_flag"
    # the schema carries no wind, so compare against the result without it
    bare = HourlySeries("A", res.raw.hours, res.raw.values)
    expected = replace(res, raw=bare, corrected=bare.with_values(res.corrected.values))
    assert io.read_corrected(tmp_path / "c.csv", "A") == expected


def test_polar_grid_round_trip(tmp_path):
    data, cfg, state, _ = _state_and_correction()
    grid = bin_alarms_by_wind(state, data.series["A"])
    io.write_csv(grid, tmp_path / "p.csv")
    back = io.read_polar_grid(tmp_path / "p.csv", n_missing_wind=grid.n_missing_wind)
    assert back == grid


def test_ingest_report_round_trip(tmp_path):
    p = _write(tmp_path / "o.csv", "2018-01-01T00:00:00Z,A,1,,\nbad,A,1,,\n2018-01-01T02:00:00Z,A,1,,\n")
    _, rep = io.read_observations(p)
    io.write_csv(rep, tmp_path / "r.csv")
    assert io.read_ingest_report(tmp_path / "r.csv") == rep


def test_writes_are_byte_deterministic(tmp_path):
    data, _, state, res = _state_and_correction()
    for name, artifact in (("o", data), ("t", state), ("c", res)):
        io.write_csv(artifact, tmp_path / f"{name}1.csv")
        io.write_csv(artifact, tmp_path / f"{name}2.csv")
        b1 = (tmp_path / f"{name}1.csv").read_bytes()
        assert b1 == (tmp_path / f"{name}2.csv").read_bytes()
        assert b"\r" not in b1


def test_write_csv_unknown_type(tmp_path):
    with pytest.raises(TypeError):
        io.write_csv(object(), tmp_path / "x.csv")


def test_config_round_trip_and_overrides(tmp_path):
    cfg = FrameworkConfig(window_hours=48, failure_hours=96, slope_band=(0.8, 1.2), stride=2)
    hist = HistogramConfig(bin_width=0.5, kl_direction="proxy_site")
    path = tmp_path / "c.ini"
    io.write_config(path, cfg, hist)
    assert io.load_config(path) == (cfg, hist)
    c2, h2 = io.load_config(path, stride=None, bin_width=2.0)
    assert c2.stride == 2 and h2.bin_width == 2.0
    assert io.load_config() == (FrameworkConfig(), HistogramConfig())


def test_config_unknown_key(tmp_path):
    p = tmp_path / "c.ini"
    p.write_text("[framework]\nwindow = 3\n")
    with pytest.raises(io.SchemaError):
        io.load_config(p)


def test_empty_dataset_writes_header_only(tmp_path):
    io.write_observations(NetworkDataset(), tmp_path / "o.csv")
    assert (tmp_path / "o.csv").read_text() == HEADER
