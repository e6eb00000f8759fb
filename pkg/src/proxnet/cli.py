"""Command-line interface: one subcommand per analysis, outputs as CSV/JSON.

Exit codes: 0 success, 1 validation or usage error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import sys
from typing import Sequence

import numpy as np

from proxnet import btnet, comms, mobility, netstats, surveys, synth, wifiprox
from proxnet.core import DEFAULT_TZ, EmptyInputError, FormatError, InsufficientDataError, InvalidParameterError
from proxnet.ingest import FILENAMES, ROSTER_FILENAME, CHANNELS, load_dataset

log = logging.getLogger("proxnet")

EXIT_OK, EXIT_VALIDATION, EXIT_RUNTIME = 0, 1, 2
WEEK_S = 7 * 86400

DEFAULTS = {
    "data": ".",
    "bin_width_s": btnet.DEFAULT_BIN_S,
    "tz": DEFAULT_TZ,
    "measure": None,
    "thresholds": None,
    "stop_d_m": mobility.DEFAULT_STOP_D_M,
    "stop_t_s": mobility.DEFAULT_STOP_T_S,
    "accuracy_max_m": mobility.DEFAULT_ACCURACY_MAX_M,
    "min_weight": None,
    "seed": 0,
    "out": None,
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _csv(rows, header) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n"


class Run:
    """Resolved settings (flags over config file over defaults) plus output helpers."""

    def __init__(self, args, config: dict):
        self.args = args
        self.config = config
        out = self.get("out") or os.environ.get("PROXNET_OUT") or "out"
        self.out = out
        self.written: list[str] = []

    def get(self, name):
        v = getattr(self.args, name, None)
        if v is not None:
            return v
        for key in (name, name.replace("_", "-")):
            if key in self.config:
                return self.config[key]
        return DEFAULTS.get(name)

    def write(self, name: str, text: str) -> str:
        os.makedirs(self.out, exist_ok=True)
        path = os.path.join(self.out, name)
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        self.written.append(path)
        return path

    def channel_paths(self, kinds: Sequence[str]) -> dict[str, str]:
        data = self.get("data")
        paths = {}
        for kind in kinds:
            explicit = getattr(self.args, kind, None) or self.config.get(kind)
            path = explicit or os.path.join(data, FILENAMES[kind])
            if explicit and not os.path.exists(path):
                raise FileNotFoundError(f"{kind} file not found: {path}")
            if os.path.exists(path):
                paths[kind] = path
        if not paths:
            raise FileNotFoundError(f"none of the {', '.join(kinds)} files found under {data!r}")
        return paths

    def roster(self) -> str | None:
        explicit = getattr(self.args, "roster", None) or self.config.get("roster")
        path = explicit or os.path.join(self.get("data"), ROSTER_FILENAME)
        if explicit and not os.path.exists(path):
            raise FileNotFoundError(f"roster not found: {path}")
        return path if os.path.exists(path) else None

    def dataset(self, kinds: Sequence[str]):
        return load_dataset(self.channel_paths(kinds), self.roster())


def cmd_ingest(run: Run) -> int:
    ds = run.dataset(CHANNELS)
    report = {
        "channels": {k: r.to_dict() for k, r in sorted(ds.reports.items())},
        "participants": len(ds.participants),
        "bluetooth_unique_devices": ds.unique_devices(),
        "bluetooth_external_devices": len(ds.external_devices()),
    }
    run.write("validation_report.json", _json(report))
    for k, r in sorted(ds.reports.items()):
        print(f"{k}: {r.accepted} accepted, {r.rejected} rejected of {r.total_rows}")
    return EXIT_OK


def _parse_int_list(text) -> list[int]:
    if isinstance(text, list):
        return [int(x) for x in text]
    return [int(x) for x in str(text).split(",") if x.strip()]


def cmd_btnet(run: Run) -> int:
    width = int(run.get("bin_width_s"))
    ds = run.dataset(["bluetooth"])
    nets = btnet.build_networks(ds.bluetooth, ds.device_owner, width)
    window = tuple(run.args.window) if run.args.window else None
    if window is not None:
        nets = [n for n in nets if window[0] <= n.bin.index < window[1]]
    weighted = btnet.aggregate(nets, window, width, 0)
    activity = btnet.bin_activity_stats(nets, window)

    run.write("bt_edges.csv", btnet.edge_list_csv(nets))
    run.write("bt_weighted.csv", btnet.edge_list_csv(weighted))
    run.write(
        "bt_bin_activity.csv",
        _csv(
            [(i * width, n, e) for i, n, e in zip(activity.bins, activity.node_counts, activity.edge_counts)],
            ["bin_start_s", "nodes", "edges"],
        ),
    )
    summary = {
        "bin_width_s": width,
        "window": list(weighted.window),
        "active_bins": len(nets),
        "mean_nodes_per_active_bin": activity.mean_nodes,
        "mean_edges_per_active_bin": activity.mean_edges,
        "unique_links": btnet.unique_links(nets),
        "scans": len(ds.bluetooth),
        "unique_devices": ds.unique_devices(),
        "external_devices": len(ds.external_devices()),
        "resolutions": {},
    }
    for agg_s in _parse_int_list(run.args.aggregate_s or [width, 3600, 86400]):
        if agg_s % width:
            raise InvalidParameterError(f"aggregation window {agg_s} s is not a multiple of the bin width {width} s")
        windows = btnet.aggregate_windows(nets, agg_s // width)
        deg = netstats.pooled_degree_distribution(windows)
        wts = netstats.pooled_weight_distribution(windows)
        run.write(f"degree_{agg_s}s.csv", deg.to_csv())
        run.write(f"degree_cum_{agg_s}s.csv", deg.to_cumulative().to_csv())
        run.write(f"weight_{agg_s}s.csv", wts.to_csv())
        run.write(f"weight_cum_{agg_s}s.csv", wts.to_cumulative().to_csv())
        entry = {"windows": len(windows)}
        if len(deg.x):
            run.write(f"degree_rescaled_{agg_s}s.csv", netstats.rescale(deg).to_csv())
            run.write(f"weight_rescaled_{agg_s}s.csv", netstats.rescale(wts).to_csv())
            entry.update(mean_degree=deg.mean(), mean_weight=wts.mean())
        summary["resolutions"][str(agg_s)] = entry
    run.write("bt_summary.json", _json(summary))
    print(f"{len(nets)} active bins, {len(weighted.weights)} weighted edges")
    return EXIT_OK


def _thresholds(text, kind):
    if text is None:
        return None
    vals = []
    for tok in str(text).split(","):
        tok = tok.strip()
        if not tok:
            continue
        if kind == wifiprox.STRONGEST_AP:
            vals.append(True)
        elif kind == wifiprox.OVERLAP_COUNT:
            vals.append(int(tok))
        else:
            vals.append(float(tok))
    return vals


def cmd_wifieval(run: Run) -> int:
    measures = run.get("measure") or list(wifiprox.MEASURES)
    if isinstance(measures, str):
        measures = measures.split(",")
    for m in measures:
        if m not in wifiprox.MEASURES:
            raise InvalidParameterError(f"unknown measure {m!r}; choose from {', '.join(wifiprox.MEASURES)}")
    thresholds = run.get("thresholds")
    if thresholds is not None and len(measures) != 1:
        raise InvalidParameterError("--thresholds needs exactly one --measure")
    ds = run.dataset(["bluetooth", "wifi"])
    width = wifiprox.WIFI_BIN_S
    grouped = wifiprox.group_scans(ds.wifi, width)
    bt_nets = btnet.build_networks(ds.bluetooth, ds.device_owner, width)
    reports = []
    for m in measures:
        ths = _thresholds(thresholds, m) if thresholds is not None else None
        reports.append(wifiprox.evaluate_measure(grouped, bt_nets, m, ths, width))
    run.write("wifi_eval.json", _json([r.to_dict() for r in reports]))
    run.write("wifi_eval.csv", "".join(r.to_csv(header=(i == 0)) for i, r in enumerate(reports)))
    for r in reports:
        best = max(r.rows, key=lambda row: row.recall or 0.0)
        print(f"{r.measure}: {len(r.rows)} thresholds, best recall {best.recall} at {best.threshold}")
    return EXIT_OK


def cmd_mobility(run: Run) -> int:
    ds = run.dataset(["location"])
    if not ds.location:
        raise EmptyInputError("no location fixes")
    d_m = float(run.get("stop_d_m"))
    t_s = float(run.get("stop_t_s"))
    acc_max = run.get("accuracy_max_m")
    acc_max = None if acc_max is None or float(acc_max) <= 0 else float(acc_max)

    cdf = mobility.accuracy_cdf(ds.location)
    run.write("accuracy_cdf.csv", _csv(zip(cdf.thresholds.tolist(), cdf.fractions.tolist()), ["accuracy_m", "fraction"]))

    users = mobility.by_user(mobility.filter_accuracy(ds.location, acc_max))
    rg_rows = [(u, mobility.radius_of_gyration(f), len(f)) for u, f in users.items() if f]
    run.write("rg.csv", _csv(rg_rows, ["user", "rg_km", "n_fixes"]))

    kde_info = {"log_space": not run.args.kde_linear, "n_users": len(rg_rows), "accuracy_le_40m": cdf.at(40.0)}
    rgs = [r[1] for r in rg_rows]
    try:
        density, bw = mobility.rg_density(rgs, log_space=not run.args.kde_linear)
    except InsufficientDataError as exc:
        kde_info["skipped"] = str(exc)
    else:
        lo, hi = float(density.values.min()), float(density.values.max())
        pad = 3 * bw
        xs = np.linspace(lo - pad, hi + pad, 200)
        run.write("rg_kde.csv", _csv(zip(xs.tolist(), density(xs).tolist()), ["x", "density"]))
        kde_info["bandwidth"] = bw
    run.write("mobility_summary.json", _json(kde_info))

    stops = []
    for u, fixes in users.items():
        stops.extend(mobility.extract_stops(fixes, d_m, t_s))
    run.write(
        "stops.csv",
        _csv(
            [(s.user, s.centroid.lat, s.centroid.lon, s.start, s.end, s.member_count) for s in stops],
            ["user", "lat", "lon", "start_s", "end_s", "n"],
        ),
    )
    graph = mobility.transition_graph(stops, float(run.args.merge_radius_m))
    c = graph.centroids
    run.write(
        "transitions.csv",
        _csv(
            [(a, b, w, c[a].lat, c[a].lon, c[b].lat, c[b].lon) for (a, b), w in graph.weights.items()],
            ["from", "to", "weight", "from_lat", "from_lon", "to_lat", "to_lon"],
        ),
    )
    cells = mobility.hexbin(ds.location, float(run.args.hex_size_m))
    run.write("hexbin.csv", _csv([(q, r, n) for (q, r), n in cells.items()], ["q", "r", "count"]))
    print(f"{len(rg_rows)} users, {len(stops)} stops, {len(graph.weights)} transition edges")
    return EXIT_OK


def _weekly_csv(profile: comms.WeeklyProfile) -> str:
    means = profile.means
    return _csv(((d, h, float(means[d, h])) for d in range(7) for h in range(24)), ["dow", "hour", "mean_count"])


def cmd_comms(run: Run) -> int:
    ds = run.dataset(["comm"])
    events = list(ds.comm)
    tz = run.get("tz")
    users = sorted({e.user for e in events})
    if run.args.n_weeks:
        n_weeks = int(run.args.n_weeks)
    elif events:
        ts = [e.t for e in events]
        n_weeks = max(1, math.ceil((max(ts) - min(ts) + 1) / WEEK_S))
    else:
        n_weeks = 1
    n_users = max(1, len(users))
    summary = comms.summary(events, run.args.missed_as_incoming)
    summary.update(n_users=n_users, n_weeks=n_weeks, tz=tz)
    run.write("comms_summary.json", _json(summary))
    for name, channel in (("all", None), ("call", "call"), ("sms", "sms")):
        prof = comms.weekly_profile(events, tz, n_users, n_weeks, channel)
        run.write(f"weekly_{name}.csv", _weekly_csv(prof))
    profiles = comms.contact_sets(events)
    run.write(
        "contacts.csv",
        _csv(
            [
                (u, len(p.call_peers), len(p.text_peers), "" if (s := comms.channel_similarity(p)) is None else s)
                for u, p in profiles.items()
            ],
            ["user", "n_call", "n_text", "sigma"],
        ),
    )
    print(f"{len(events)} events from {len(users)} users over {n_weeks} week(s)")
    return EXIT_OK


def cmd_netstats(run: Run) -> int:
    paths = run.args.net or run.config.get("net") or []
    if not paths:
        raise InvalidParameterError("give at least one --net edge list")
    min_weight = run.get("min_weight")
    nets = []
    for path in paths:
        with open(path, encoding="utf-8") as fh:
            nets.append(btnet.read_edge_list(fh.read()))
    result = {"networks": []}
    for path, weights in zip(paths, nets):
        entry = {"path": os.path.basename(path), "summary": None}
        if weights:
            entry["summary"] = netstats.summarize(weights).to_dict()
            entry["traffic_share_80_min_weight"] = netstats.traffic_share_threshold(weights, 0.8)
        if min_weight is not None:
            kept = netstats.threshold_weak_links(weights, int(min_weight))
            entry["min_weight"] = int(min_weight)
            entry["thresholded"] = netstats.summarize(kept).to_dict() if kept.weights else None
        result["networks"].append(entry)
    if len(nets) >= 2:
        a, b = nets[0], nets[1]
        if min_weight is not None:
            a = netstats.threshold_weak_links(a, int(min_weight)).weights
            b = netstats.threshold_weak_links(b, int(min_weight)).weights
        diff = netstats.edge_set_diff(a.keys(), b.keys())
        result["diff"] = diff.counts()
        run.write("edge_diff.csv", diff.to_csv())
    run.write("netstats_summary.json", _json(result))
    print(_json(result).strip() if run.args.verbose else f"{len(nets)} network(s) summarized")
    return EXIT_OK


def cmd_survey(run: Run) -> int:
    ds = run.dataset(["survey"])
    key_path = run.args.key or run.config.get("key") or os.path.join(run.get("data"), "key.csv")
    with open(key_path, encoding="utf-8") as fh:
        key = surveys.read_key(fh)
    scores = {r.user: surveys.score_big_five(r, key) for r in surveys.responses(ds.survey)}
    run.write(
        "survey_scores.csv",
        _csv(
            [(u, *("" if s[t] is None else s[t] for t in surveys.TRAITS)) for u, s in sorted(scores.items())],
            ["user", *surveys.TRAITS],
        ),
    )
    summary = surveys.trait_summary(scores)
    run.write(
        "survey_summary.json",
        _json({surveys.TRAIT_NAMES[t]: {"mean": m, "std": s} for t, (m, s) in summary.items()}),
    )
    print(f"{len(scores)} responses scored")
    return EXIT_OK


def cmd_synth(run: Run) -> int:
    params = dict(run.config.get("synth", {}))
    if run.args.seed is not None or "seed" in run.config:
        params["seed"] = int(run.get("seed"))
    for name in ("n_users", "n_days"):
        v = getattr(run.args, name, None)
        if v is not None:
            params[name] = v
    cfg = synth.SynthConfig.from_dict(params)
    out = synth.generate(cfg)
    for name in out.write(run.out).values():
        run.written.append(name)
    print(f"wrote {len(out.files)} files to {run.out}: " + ", ".join(f"{k}={v}" for k, v in out.manifest["counts"].items()))
    return EXIT_OK


def _add_data_args(p, kinds):
    p.add_argument("--data", help="directory holding the standard channel files")
    p.add_argument("--roster", help="roster.csv path (default: DATA/roster.csv)")
    for kind in kinds:
        p.add_argument(f"--{kind}", help=f"{kind}.csv path (default: DATA/{kind}.csv)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="proxnet", description=__doc__.splitlines()[0])
    parser.add_argument("--config", help="JSON config file; same keys as the flags")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def command(name, func, help, kinds=()):
        p = sub.add_parser(name, help=help)
        p.set_defaults(func=func)
        p.add_argument("--out", help="output directory (default: $PROXNET_OUT or ./out)")
        p.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS)
        if kinds:
            _add_data_args(p, kinds)
        return p

    command("ingest", cmd_ingest, "validate all channel files", CHANNELS)

    p = command("btnet", cmd_btnet, "Bluetooth proximity networks and distributions", ["bluetooth"])
    p.add_argument("--bin-width-s", type=int)
    p.add_argument("--window", type=int, nargs=2, metavar=("START_BIN", "END_BIN"))
    p.add_argument("--aggregate-s", help="comma-separated aggregation windows in seconds")

    p = command("wifieval", cmd_wifieval, "WiFi similarity vs Bluetooth precision/recall", ["bluetooth", "wifi"])
    p.add_argument("--measure", action="append", choices=wifiprox.MEASURES)
    p.add_argument("--thresholds", help="comma-separated threshold sweep (one measure only)")

    p = command("mobility", cmd_mobility, "accuracy, radius of gyration, stops, transitions, hexbins", ["location"])
    p.add_argument("--stop-d-m", type=float)
    p.add_argument("--stop-t-s", type=float)
    p.add_argument("--accuracy-max-m", type=float, help="drop fixes less accurate than this (<= 0 disables)")
    p.add_argument("--merge-radius-m", type=float, default=mobility.DEFAULT_MERGE_RADIUS_M)
    p.add_argument("--hex-size-m", type=float, default=250.0)
    p.add_argument("--kde-linear", action="store_true", help="estimate the r_g density in km, not log10(km)")

    p = command("comms", cmd_comms, "call/SMS statistics and weekly profiles", ["comm"])
    p.add_argument("--tz")
    p.add_argument("--n-weeks", type=int)
    p.add_argument("--missed-as-incoming", action="store_true")

    p = command("netstats", cmd_netstats, "network summaries, weak-link filtering and edge diffs")
    p.add_argument("--net", action="append", help="edge-list CSV (repeatable; first two are diffed)")
    p.add_argument("--min-weight", type=int)

    p = command("survey", cmd_survey, "Big Five trait scores", ["survey"])
    p.add_argument("--key", help="scoring key CSV (default: DATA/key.csv)")

    p = command("synth", cmd_synth, "generate a synthetic dataset with ground truth")
    p.add_argument("--seed", type=int)
    p.add_argument("--n-users", type=int)
    p.add_argument("--n-days", type=int)
    return parser


def _load_config(path) -> dict:
    if path is None:
        return {}
    with open(path, encoding="utf-8") as fh:
        try:
            cfg = json.load(fh)
        except json.JSONDecodeError as exc:
            raise FormatError(f"config {path}: {exc}") from None
    if not isinstance(cfg, dict):
        raise FormatError(f"config {path}: top level must be an object")
    return cfg


def main(argv: Sequence[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        run = Run(args, _load_config(args.config))
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
        return args.func(run)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (OSError, ValueError, KeyError) as exc:
        # InvalidParameterError, FormatError, EmptyInputError, SynthConfigError, ... are ValueErrors
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except Exception as exc:  # noqa: BLE001
        log.exception("runtime failure")
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
