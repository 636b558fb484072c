import json

import pytest

from proxycal.cli import build_parser, main
from proxycal.data import sites_path


@pytest.fixture(scope="module")
def sim_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("sim")
    cfg = out / "scenario.ini"
    cfg.write_text("""
[scenario]
hours = 900
seed = 3

[site A]
group = g1
[site B]
group = g1
[site C]
group = g2
baseline_ppb = 30

[drift d1]
site = A
onset_hour = 400
kind = offset_step
magnitude = 12
""")
    assert main(["simulate", "--config", str(cfg), "--out-dir", str(out), "--score"]) == 0
    return out


def _args(sim_dir, cmd, out, *extra):
    return [cmd, "--sites", str(sim_dir / "sites.csv"), "--obs", str(sim_dir / "observations.csv"),
            "--assignments", str(sim_dir / "assignments.csv"), "--out-dir", str(out), *extra]


def test_simulate_writes_everything(sim_dir):
    for name in ("sites.csv", "observations.csv", "truth.csv", "drift_schedule.csv",
                 "assignments.csv", "score.csv"):
        assert (sim_dir / name).exists()
    score = (sim_dir / "score.csv").read_text().splitlines()
    assert score[0].startswith("site_id,proxy_id,false_alarm_rate")
    a_row = [r for r in score[1:] if r.startswith("A,")][0]
    assert a_row.endswith(",1")  # the offset step on A was detected


def test_select_proxy_fixture(tmp_path, capsys):
    rc = main(["select-proxy", "--sites", str(sites_path()), "--method", "nearest", "--out-dir", str(tmp_path)])
    assert rc == 0 and "PICO" in capsys.readouterr().out
    rc = main(["select-proxy", "--sites", str(sites_path()), "--method", "knn", "--out-dir", str(tmp_path)])
    assert rc == 0
    lines = (tmp_path / "assignments.csv").read_text().splitlines()
    assert lines[0] == "site_id,proxy_id,method,score" and len(lines) == 10
    assert [line.split(",")[0] for line in lines[1:]] == sorted(line.split(",")[0] for line in lines[1:])


def test_select_proxy_min_kl_requires_obs(tmp_path, capsys):
    rc = main(["select-proxy", "--sites", str(sites_path()), "--method", "min_kl", "--out-dir", str(tmp_path)])
    assert rc != 0
    err = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert err["error"] == "usage"


def test_select_proxy_all_with_obs(sim_dir, tmp_path, capsys):
    rc = main(["select-proxy", "--sites", str(sim_dir / "sites.csv"), "--obs", str(sim_dir / "observations.csv"),
               "--method", "all", "--bin-width", "2", "--out-dir", str(tmp_path)])
    assert rc == 0
    cmp = (tmp_path / "comparison.csv").read_text().splitlines()
    assert cmp[0] == "site_id,nearest_geo,knn_landuse,min_kl"
    assert "agreement" in capsys.readouterr().out


@pytest.mark.parametrize("cmd", ["detect", "correct", "wind-bins"])
def test_pair_commands_deterministic_across_jobs(sim_dir, tmp_path, cmd):
    out1, out2 = tmp_path / "j1", tmp_path / "j2"
    assert main(_args(sim_dir, cmd, out1)) == 0
    assert main(_args(sim_dir, cmd, out2, "--jobs", "2")) == 0
    files = sorted(p.name for p in out1.iterdir())
    assert files and files == sorted(p.name for p in out2.iterdir())
    for name in files:
        assert (out1 / name).read_bytes() == (out2 / name).read_bytes()


def test_detect_outputs(sim_dir, tmp_path):
    assert main(_args(sim_dir, "detect", tmp_path, "--stride", "3")) == 0
    assert (tmp_path / "trail_A.csv").exists()
    summary = (tmp_path / "alarm_summary.csv").read_text().splitlines()
    assert summary[0].startswith("site_id,proxy_id,test")
    assert len(summary) == 1 + 3 * 3


def test_report_compare_and_trail(sim_dir, tmp_path, capsys):
    assert main(["report", "--assignments", str(sim_dir / "assignments.csv"),
                 "--against", str(sim_dir / "assignments.csv")]) == 0
    assert "agreement: 3/3" in capsys.readouterr().out
    main(_args(sim_dir, "detect", tmp_path))
    capsys.readouterr()
    assert main(["report", "--trail", str(tmp_path / "trail_A.csv")]) == 0
    assert capsys.readouterr().out.startswith("site_id,proxy_id,test")


def test_errors_are_json_lines(tmp_path, capsys):
    rc = main(["detect", "--sites", str(tmp_path / "nope.csv"), "--obs", "x", "--assignments", "y"])
    assert rc != 0
    err = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert set(err) == {"error", "message"}
    rc = main(["detect"])
    assert rc == 2
    assert json.loads(capsys.readouterr().err.strip())["error"] == "usage"


def test_unknown_site_in_assignments(sim_dir, tmp_path, capsys):
    bad = tmp_path / "a.csv"
    bad.write_text("site_id,proxy_id,method,score\nA,ZZ,knn_landuse,0\n")
    rc = main(["detect", "--sites", str(sim_dir / "sites.csv"), "--obs", str(sim_dir / "observations.csv"),
               "--assignments", str(bad), "--out-dir", str(tmp_path)])
    assert rc == 1
    assert json.loads(capsys.readouterr().err.strip())["error"] == "unknown_site"


def test_negative_values_rejected_unless_clamped(sim_dir, tmp_path, capsys):
    obs = (sim_dir / "observations.csv").read_text().splitlines()
    parts = obs[5].split(",")
    parts[2] = "-2"
    obs[5] = ",".join(parts)
    neg = tmp_path / "neg.csv"
    neg.write_text("\n".join(obs) + "\n")
    args = ["detect", "--sites", str(sim_dir / "sites.csv"), "--obs", str(neg),
            "--assignments", str(sim_dir / "assignments.csv"), "--out-dir", str(tmp_path)]
    assert main(args) == 1
    assert json.loads(capsys.readouterr().err.strip().splitlines()[-1])["error"] == "validation"
    assert main(args + ["--clamp-negative"]) == 0


def test_help_documents_every_flag():
    parser = build_parser()
    sub = next(a for a in parser._actions if a.choices and "detect" in a.choices)
    for name, sp in sub.choices.items():
        text = sp.format_help()
        for action in sp._actions:
            for opt in action.option_strings:
                assert opt in text
            if action.option_strings and action.dest != "help":
                assert action.help, f"{name} {action.option_strings} lacks help"
