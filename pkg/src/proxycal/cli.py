"""Command-line front end: select-proxy, detect, correct, wind-bins, simulate, report.

Failures exit non-zero after printing one JSON line to stderr:
``{"error": <kind>, "message": <text>}``.
"""
from __future__ import annotations

import argparse
import json
import sys
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

from . import io, proxy
from .correct import apply_correction
from .drift import TESTS, alarm_summary, run_framework
from .met import bin_alarms_by_wind
from .model import DatasetValidationError, NetworkDataset, format_timestamp, validate_dataset
from .sim import default_scenario, generate, score_detection

METHOD_FLAGS = {"knn": "knn_landuse", "nearest": "nearest_geo", "min_kl": "min_kl"}


class CliError(Exception):
    def __init__(self, kind: str, message: str, code: int = 1):
        super().__init__(message)
        self.kind, self.code = kind, code


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError("usage", f"{self.prog}: {message}", 2)


def _out_dir(args) -> Path:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _configs(args):
    return io.load_config(args.config, stride=getattr(args, "stride", None),
                          bin_width=getattr(args, "bin_width", None))


def _load_dataset(args) -> NetworkDataset:
    if not args.obs:
        raise CliError("usage", "--obs is required for this command", 2)
    data, report = io.load_network(args.sites, args.obs)
    for line, reason in report.rejected:
        print(f"rejected line {line}: {reason}", file=sys.stderr)
    try:
        return validate_dataset(data, clamp_negative=args.clamp_negative)
    except DatasetValidationError as exc:
        raise CliError("validation", str(exc)) from None


def _pairs(args, data: NetworkDataset):
    assignments = _one_method(io.read_assignments(args.assignments), args.method, args.assignments)
    known = set(data.series)
    pairs = []
    for a in sorted(assignments, key=lambda a: a.site_id):
        for sid in (a.site_id, a.proxy_id):
            if sid not in known:
                raise CliError("unknown_site", f"assignment {a.site_id}->{a.proxy_id}: no series for {sid}")
        pairs.append((a.site_id, a.proxy_id))
    return pairs


def _run_pair(job):
    data, site_id, proxy_id, cfg = job
    return run_framework(data.series[site_id], data.series[proxy_id], cfg)


def _run_all(args, data, pairs, cfg):
    jobs = [(data, s, p, cfg) for s, p in pairs]
    if args.jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(args.jobs) as pool:
            return list(pool.map(_run_pair, jobs))
    return [_run_pair(j) for j in jobs]


# ---------------------------------------------------------------------------
# commands


def cmd_select_proxy(args) -> int:
    sites = io.read_sites(args.sites)
    _, hist = _configs(args)
    methods = list(METHOD_FLAGS.values()) if args.method == "all" else [METHOD_FLAGS[args.method]]
    if "min_kl" in methods and not args.obs:
        raise CliError("usage", "--method min_kl needs --obs", 2)
    results = {}
    for m in methods:
        if m == "knn_landuse":
            results[m] = proxy.select_knn(sites, scaling=args.scaling)
        elif m == "nearest_geo":
            results[m] = proxy.select_nearest_geo(sites)
        else:
            data = _load_dataset(args)
            with warnings.catch_warnings(record=True) as caught:
                warnings.simplefilter("always")
                results[m] = proxy.select_min_kl(data, hist.bin_width, origin=hist.origin,
                                                 kl_direction=hist.kl_direction)
            for w in caught:
                print(f"warning: {w.message}", file=sys.stderr)
    out = _out_dir(args)
    io.write_assignments([a for m in methods for a in results[m]], out / "assignments.csv")
    ids = sorted(s.site_id for s in sites)
    lookup = {m: {a.site_id: a.proxy_id for a in results[m]} for m in methods}
    cols = [m for m in ("nearest_geo", "knn_landuse", "min_kl") if m in methods]
    lines = [["site_id", *cols]] + [[sid, *(lookup[m].get(sid, "") for m in cols)] for sid in ids]
    with open(out / "comparison.csv", "w", newline="", encoding="utf-8") as fh:
        fh.writelines(",".join(r) + "\n" for r in lines)
    for r in lines:
        print("  ".join(f"{c:<12}" for c in r).rstrip())
    for i, a in enumerate(cols):
        for b in cols[i + 1:]:
            rep = proxy.compare_assignments(results[a], results[b]) \
                if {x.site_id for x in results[a]} == {x.site_id for x in results[b]} else None
            if rep is not None:
                print(f"agreement {a} vs {b}: {rep.matched}/{rep.total}")
    return 0


def _summary_lines(summaries):
    yield "site_id,proxy_id,test,n_evaluable,alarm_hours,alarm_fraction,failure_spans,failure_hours"
    for s in summaries:
        for row in s.rows():
            yield ",".join(io.fmt(v) if isinstance(v, float) else str(v) for v in row)


def cmd_detect(args) -> int:
    data = _load_dataset(args)
    cfg, _ = _configs(args)
    out = _out_dir(args)
    states = _run_all(args, data, _pairs(args, data), cfg)
    summaries = []
    for st in states:
        io.write_trail(st, out / f"trail_{st.site_id}.csv")
        summaries.append(alarm_summary(st))
    lines = list(_summary_lines(summaries))
    (out / "alarm_summary.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    for s in summaries:
        fr = " ".join(f"{t}={s.alarm_fractions[t]:.4%}" for t in TESTS)
        spans = " ".join(f"{t}:{s.failure_span_counts[t]}" for t in TESTS)
        print(f"{s.site_id}->{s.proxy_id}: evaluable={s.n_evaluable} {fr} failure_spans {spans}")
    return 0


def cmd_correct(args) -> int:
    data = _load_dataset(args)
    cfg, _ = _configs(args)
    out = _out_dir(args)
    for st in _run_all(args, data, _pairs(args, data), cfg):
        res = apply_correction(data.series[st.site_id], st, data.series[st.proxy_id], cfg)
        io.write_corrected(res, out / f"corrected_{st.site_id}.csv")
        print(f"{st.site_id}->{st.proxy_id}: corrected {int(res.active.sum())} h, "
              f"clamped {int(res.clamped.sum())} h")
    return 0


def cmd_wind_bins(args) -> int:
    data = _load_dataset(args)
    cfg, _ = _configs(args)
    out = _out_dir(args)
    for st in _run_all(args, data, _pairs(args, data), cfg):
        try:
            grid = bin_alarms_by_wind(st, data.series[st.site_id], args.dir_bin, args.speed_bin)
        except ValueError as exc:
            raise CliError("wind", str(exc)) from None
        io.write_polar_grid(grid, out / f"polar_{st.site_id}.csv")
        prof = ", ".join(f"{lo:g}:{m:.2f}" for lo, (_, m) in grid.speed_profile().items())
        print(f"{st.site_id}->{st.proxy_id}: mean alarm sum by speed bin {{{prof}}} "
              f"(missing wind {grid.n_missing_wind} h)")
    return 0


def cmd_simulate(args) -> int:
    try:
        spec = io.read_scenario(args.config) if args.config else default_scenario()
    except (ValueError, KeyError) as exc:
        raise CliError("scenario", str(exc)) from None
    if args.seed is not None:
        spec = replace(spec, seed=args.seed)
    data, truth = generate(spec)
    out = _out_dir(args)
    io.write_sites(data.sites, out / "sites.csv")
    io.write_observations(data, out / "observations.csv")
    io.write_truth(truth, out / "truth.csv")
    io.write_drift_schedule(truth, out / "drift_schedule.csv")
    print(f"simulated {spec.n_sites} sites x {spec.hours} h (seed {spec.seed}) -> {out}")
    if args.score:
        cfg, _ = io.load_config(args.config, stride=args.stride)
        assignments = proxy.select_knn(data.sites)
        io.write_assignments(assignments, out / "assignments.csv")
        lines = ["site_id,proxy_id,false_alarm_rate,n_clean,event_kind,onset_utc,latency_h,detected"]
        for a in assignments:
            st = run_framework(data.series[a.site_id], data.series[a.proxy_id], cfg)
            sc = score_detection(st, truth)
            base = f"{a.site_id},{a.proxy_id},{io.fmt(sc.false_alarm_rate)},{sc.n_clean}"
            if not sc.events:
                lines.append(base + ",,,,")
            for e in sc.events:
                lines.append(f"{base},{e.event.kind},{format_timestamp(e.onset)},"
                             f"{io.fmt(e.latency_h)},{int(e.detected)}")
            print(f"{a.site_id}->{a.proxy_id}: false alarm rate {sc.false_alarm_rate:.4%}"
                  + "".join(f"; {e.event.kind} latency {e.latency_h} h" for e in sc.events))
        (out / "score.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    return 0


def _one_method(assignments, method, path):
    if method is not None:
        assignments = [a for a in assignments if a.method == METHOD_FLAGS[method]]
    methods = sorted({a.method for a in assignments})
    if len(methods) != 1:
        raise CliError("usage", f"{path}: expected one method, found {methods or 'none'}; use --method", 2)
    return assignments


def cmd_report(args) -> int:
    if args.assignments and args.against:
        a = _one_method(io.read_assignments(args.assignments), args.method, args.assignments)
        b = _one_method(io.read_assignments(args.against), args.method, args.against)
        rep = proxy.compare_assignments(a, b)
        for sid, pa, pb, ok in rep.rows:
            print(f"{sid:<8} {pa:<8} {pb:<8} {'match' if ok else 'differ'}")
        print(f"agreement: {rep.matched}/{rep.total} = {rep.agreement:.3f}")
    elif args.trail:
        cfg, _ = _configs(args)
        summaries = []
        for path in args.trail:
            stem = Path(path).stem.removeprefix("trail_")
            st = io.read_trail(path, stem, args.proxy or "proxy", cfg)
            summaries.append(alarm_summary(st))
        print("\n".join(_summary_lines(summaries)))
    else:
        raise CliError("usage", "report needs --assignments with --against, or --trail", 2)
    return 0


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="proxycal", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, obs_required=False, pairs=False):
        sp.add_argument("--sites", required=True, help="site metadata CSV")
        sp.add_argument("--obs", required=obs_required, help="hourly observations CSV")
        sp.add_argument("--config", help="key-value config file ([framework], [histogram]); "
                                         "built-in defaults when omitted")
        sp.add_argument("--out-dir", default=".", help="output directory (default: current)")
        sp.add_argument("--clamp-negative", action="store_true",
                        help="set negative concentrations to 0 instead of rejecting the dataset")
        if pairs:
            sp.add_argument("--assignments", required=True, help="assignments CSV (site_id,proxy_id,method,score)")
            sp.add_argument("--stride", type=int, help="evaluate every N hours (config default 1)")
            sp.add_argument("--jobs", type=int, default=1, help="parallel worker processes (default 1)")
            sp.add_argument("--method", choices=list(METHOD_FLAGS),
                            help="which method's rows to use when the assignments file holds several")

    sp = sub.add_parser("select-proxy", help="choose a proxy for every site")
    common(sp)
    sp.add_argument("--method", choices=["knn", "nearest", "min_kl", "all"], default="knn",
                    help="selection method (default knn); all emits the three-column comparison")
    sp.add_argument("--scaling", choices=proxy.SCALINGS, default="minmax",
                    help="land-use feature scaling for knn (default minmax)")
    sp.add_argument("--bin-width", type=float, help="histogram bin width in ppb for min_kl (config default 1)")
    sp.set_defaults(func=cmd_select_proxy)

    sp = sub.add_parser("detect", help="run the rolling three-test framework per site/proxy pair")
    common(sp, obs_required=True, pairs=True)
    sp.set_defaults(func=cmd_detect)

    sp = sub.add_parser("correct", help="correct sites where enough tests have failed")
    common(sp, obs_required=True, pairs=True)
    sp.set_defaults(func=cmd_correct)

    sp = sub.add_parser("wind-bins", help="mean alarm sum by wind direction and speed")
    common(sp, obs_required=True, pairs=True)
    sp.add_argument("--dir-bin", type=float, default=22.5, help="direction sector width in degrees (default 22.5)")
    sp.add_argument("--speed-bin", type=float, default=1.0, help="speed bin width in m/s (default 1)")
    sp.set_defaults(func=cmd_wind_bins)

    sp = sub.add_parser("simulate", help="generate a synthetic network with ground truth")
    sp.add_argument("--config", help="scenario file; the nine-site default scenario when omitted")
    sp.add_argument("--seed", type=int, help="override the scenario seed (default: file value or 0)")
    sp.add_argument("--out-dir", default=".", help="output directory (default: current)")
    sp.add_argument("--score", action="store_true",
                    help="also select knn proxies, run detection and write score.csv")
    sp.add_argument("--stride", type=int, help="evaluation stride for --score (config default 1)")
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("report", help="compare assignment files or summarise trail files")
    sp.add_argument("--assignments", help="assignments CSV")
    sp.add_argument("--against", help="second assignments CSV to compare with --assignments")
    sp.add_argument("--method", choices=list(METHOD_FLAGS),
                    help="restrict assignment files holding several methods to one")
    sp.add_argument("--trail", nargs="+", help="trail CSV files written by detect")
    sp.add_argument("--proxy", help="proxy id label for --trail summaries")
    sp.add_argument("--config", help="config file used when the trails were produced")
    sp.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return args.func(args)
    except CliError as exc:
        print(json.dumps({"error": exc.kind, "message": str(exc)}), file=sys.stderr)
        return exc.code
    except (OSError, ValueError) as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
