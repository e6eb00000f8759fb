"""Acceptance suite.

Every test tags itself with a criterion number; the conftest hook prints one
PASS/FAIL line per criterion in the terminal summary.
"""

import datetime as dt
import filecmp
import io
import itertools
import math
import os
import time
from collections import Counter, defaultdict
from fractions import Fraction
from zoneinfo import ZoneInfo

import networkx as nx
import numpy as np
import pytest
from scipy import integrate

from proxnet import btnet, cli, comms, mobility, netstats, wifiprox
from proxnet.core import TimeBin, haversine_deg
from proxnet.ingest import CommEvent, LocationFix, parse_channel

CRITERIA = {
    1: "mean degree arithmetic (157/155 -> 1.98, 307/3217 -> 20.96), < 1 s",
    2: "WiFi evaluate() equals brute-force TP/FP/FN recount for all measures, < 60 s",
    3: "zero-noise recall 1.0 and monotone threshold sweeps, < 60 s",
    4: "Bluetooth aggregate conserves planted co-presence; symmetrize on 1000 instances",
    5: "radius of gyration, two-fix case, planted stop recovery, hexbin conservation",
    6: "KDE non-negative, integrates to 1, bandwidth within x2 of Silverman",
    7: "Krings rescaling invariant under x -> 10x, rescaled mean 1",
    8: "contact similarity, Pearson r and weekly profile against exact oracles",
    9: "full synthetic CLI pipeline byte-identical across same-seed runs, < 5 min",
    10: "50 malformed rows give 50 report entries and no bad record accepted",
}


@pytest.fixture
def criterion(record_property):
    def tag(n):
        record_property("criterion", str(n))
        record_property("title", CRITERIA[n])

    return tag


def _line(n, ok=True):
    print(f"[{'PASS' if ok else 'FAIL'}] criterion {n}: {CRITERIA[n]}")


# 1 ------------------------------------------------------------------------


def test_c1_mean_degree_arithmetic(criterion):
    criterion(1)
    t0 = time.perf_counter()
    for n, e, target in ((157, 155, 1.98), (307, 3217, 20.96)):
        g = nx.gnm_random_graph(n, e, seed=n)
        s = netstats.summarize(g)
        assert (s.n_nodes, s.n_edges) == (n, e)
        assert abs(s.avg_degree - target) <= 0.01
    assert time.perf_counter() - t0 < 1.0
    _line(1)


# 2 ------------------------------------------------------------------------


def _bf_scans(readings):
    scans = defaultdict(dict)
    for r in readings:
        aps = scans[(r.user, r.t)]
        aps[r.ap] = max(aps.get(r.ap, -999), r.rssi)
    return scans


def _strongest(x):
    return sorted(x.items(), key=lambda kv: (-kv[1], kv[0]))[0][0]


def _bf_features(x, y):
    """Raw per-scan-pair quantities: shared count, smaller scan size, mean |dRSSI|, strongest match."""
    shared = set(x) & set(y)
    manhattan = sum(abs(x[a] - y[a]) for a in shared) / len(shared) if shared else None
    return len(shared), min(len(x), len(y)), manhattan, _strongest(x) == _strongest(y)


def _bf_passes(kind, th, feat):
    n_shared, n_min, manhattan, same_strongest = feat
    if kind == "overlap_count":
        return n_shared >= th
    if kind == "overlap_coefficient":
        return n_shared / n_min >= th
    if kind == "mean_manhattan":
        return manhattan is not None and manhattan <= th
    return same_strongest


def brute_force_tables(ds, width=600):
    """Features of every scan pair per (bin, user pair), and the Bluetooth events, straight from records."""
    per_bin = defaultdict(lambda: defaultdict(list))
    for (u, t), aps in _bf_scans(ds.wifi).items():
        per_bin[t // width][u].append(aps)
    pairs = {}
    for b, users in per_bin.items():
        for u, v in itertools.combinations(sorted(users), 2):
            pairs[(b, (u, v))] = [_bf_features(x, y) for x in users[u] for y in users[v]]
    truth = set()
    for s in ds.bluetooth:
        owner = ds.device_owner.get(s.seen)
        if owner is not None and owner != s.observer:
            truth.add((s.t // width, tuple(sorted((s.observer, owner)))))
    return pairs, truth


def brute_force_confusion(tables, kind, th):
    pairs, truth = tables
    tp = fp = universe_truth = 0
    for event, feats in pairs.items():
        positive = any(_bf_passes(kind, th, f) for f in feats)
        real = event in truth
        universe_truth += real
        tp += positive and real
        fp += positive and not real
    return tp, fp, universe_truth - tp


def test_c2_wifi_bruteforce_equivalence(criterion, noisy_world):
    criterion(2)
    _, ds, _ = noisy_world
    assert len(ds.participants) <= 50
    t0 = time.perf_counter()
    grouped = wifiprox.group_scans(ds.wifi)
    bt = btnet.build_networks(ds.bluetooth, ds.device_owner, wifiprox.WIFI_BIN_S)
    reports = {kind: wifiprox.evaluate_measure(grouped, bt, kind) for kind in wifiprox.MEASURES}
    elapsed = time.perf_counter() - t0
    tables = brute_force_tables(ds)
    checked = 0
    for kind, report in reports.items():
        assert [r.threshold for r in report.rows] == sorted(wifiprox.DEFAULT_SWEEPS[kind])
        for row in report.rows:
            assert (row.tp, row.fp, row.fn) == brute_force_confusion(tables, kind, row.threshold), (kind, row)
            checked += 1
    assert checked == sum(len(v) for v in wifiprox.DEFAULT_SWEEPS.values())
    assert elapsed < 60
    assert time.perf_counter() - t0 < 60
    _line(2)


# 3 ------------------------------------------------------------------------


def _recalls(report):
    return [r.recall for r in report.rows]


def test_c3_zero_noise_recall_and_monotone_sweeps(criterion, clean_world, noisy_world):
    criterion(3)
    t0 = time.perf_counter()
    for world, clean in ((clean_world, True), (noisy_world, False)):
        _, ds, _ = world
        grouped = wifiprox.group_scans(ds.wifi)
        bt = btnet.build_networks(ds.bluetooth, ds.device_owner, wifiprox.WIFI_BIN_S)
        reports = {k: wifiprox.evaluate_measure(grouped, bt, k) for k in wifiprox.MEASURES}
        assert all(r.tp + r.fn > 0 for rep in reports.values() for r in rep.rows)
        if clean:
            assert reports["strongest_ap"].rows[0].recall == 1.0
            k1 = [r for r in reports["overlap_count"].rows if r.threshold == 1][0]
            assert k1.recall == 1.0
        for kind in ("overlap_count", "overlap_coefficient"):
            rec = _recalls(reports[kind])
            assert all(a >= b for a, b in zip(rec, rec[1:])), (kind, rec)
        rec = _recalls(reports["mean_manhattan"])
        assert all(a <= b for a, b in zip(rec, rec[1:])), rec
    assert time.perf_counter() - t0 < 60
    _line(3)


# 4 ------------------------------------------------------------------------


def test_c4_bluetooth_conservation_and_symmetrize(criterion, clean_world, noisy_world):
    criterion(4)
    for world in (clean_world, noisy_world):
        out, ds, _ = world
        assert out.ground_truth is not None
        planted = Counter()
        start_bin = out.ground_truth.start_s // out.ground_truth.bin_s
        for b, _, users in out.ground_truth.copresence:
            for a, c in itertools.combinations(sorted(users), 2):
                planted[(a, c)] += 1
        nets = btnet.build_networks(ds.bluetooth, ds.device_owner, out.ground_truth.bin_s)
        weighted = btnet.aggregate(nets)
        assert dict(weighted.weights) == dict(planted)
        assert min(n.bin.index for n in nets) >= start_bin

    rng = np.random.default_rng(2024)
    for _ in range(1000):
        n_users = int(rng.integers(1, 9))
        users = [f"p{i}" for i in range(n_users)]
        m = int(rng.integers(0, 25))
        pairs = [(users[rng.integers(n_users)], users[rng.integers(n_users)]) for _ in range(m)]
        b = TimeBin(int(rng.integers(0, 1000)), 300)
        net = btnet.symmetrize(pairs, b)
        assert btnet.symmetrize(net.edges, b) == net
        assert btnet.symmetrize([(y, x) for x, y in pairs], b) == net
        for x, y in net.edges:
            assert x < y
        expected = {tuple(sorted(p)) for p in pairs if p[0] != p[1]}
        assert set(net.edges) == expected
    _line(4)


# 5 ------------------------------------------------------------------------

R = 6_371_000.0


def _direct_rg_km(lat, lon):
    lat = np.asarray(lat, dtype=float)
    lon = np.asarray(lon, dtype=float)
    lat_c, lon_c = np.radians(lat.mean()), np.radians(lon.mean())
    p, lmb = np.radians(lat), np.radians(lon)
    h = np.sin((p - lat_c) / 2) ** 2 + np.cos(p) * np.cos(lat_c) * np.sin((lmb - lon_c) / 2) ** 2
    d = 2 * R * np.arcsin(np.sqrt(h))
    return float(np.sqrt(np.mean(d**2))) / 1000


def test_c5_mobility_oracles(criterion, clean_world):
    criterion(5)
    rng = np.random.default_rng(7)
    for i in range(100):
        n = int(rng.integers(1, 200))
        lat0, lon0 = rng.uniform(-60, 60), rng.uniform(-170, 170)
        spread = 10 ** rng.uniform(-4, 0)
        lat = lat0 + rng.normal(0, spread, n)
        lon = lon0 + rng.normal(0, spread, n)
        fixes = [LocationFix("u", j, float(a), float(b), 10.0) for j, (a, b) in enumerate(zip(lat, lon))]
        got = mobility.radius_of_gyration(fixes)
        want = _direct_rg_km(lat, lon)
        assert got == pytest.approx(want, rel=1e-9, abs=1e-15)

    for lat0, lon0, d in ((55.78, 12.52, 0.01), (0.0, 0.0, 0.5), (-33.9, 151.2, 0.002)):
        for a, b in (((lat0 - d, lon0), (lat0 + d, lon0)), ((lat0, lon0 - d), (lat0, lon0 + d))):
            fixes = [LocationFix("u", 0, *a, 5.0), LocationFix("u", 1, *b, 5.0)]
            sep_km = haversine_deg(*a, *b) / 1000
            assert mobility.radius_of_gyration(fixes) == pytest.approx(sep_km / 2, rel=1e-3)

    out, ds, _ = clean_world
    users = mobility.by_user(ds.location)
    n_planted = 0
    for u, stays in out.ground_truth.stays.items():
        planted = [
            (s.first_fix_t, s.last_fix_t)
            for s in stays
            if s.first_fix_t is not None and s.last_fix_t - s.first_fix_t >= mobility.DEFAULT_STOP_T_S
        ]
        found = [(s.start, s.end) for s in mobility.extract_stops(users[u])]
        assert found == planted, u
        n_planted += len(planted)
    assert n_planted > 0

    lat = rng.uniform(55.6, 55.9, 10_000)
    lon = rng.uniform(12.3, 12.7, 10_000)
    fixes = [LocationFix("u", i, float(a), float(b), 5.0) for i, (a, b) in enumerate(zip(lat, lon))]
    for size in (50.0, 250.0, 1000.0):
        cells = mobility.hexbin(fixes, size)
        assert sum(cells.values()) == 10_000
    _line(5)


# 6 ------------------------------------------------------------------------


def test_c6_kde_properties(criterion):
    criterion(6)
    rng = np.random.default_rng(42)
    x = rng.normal(3.0, 2.0, 500)
    density, bw = mobility.kde(x)
    grid = np.linspace(x.min() - 10 * bw, x.max() + 10 * bw, 20_001)
    assert np.all(density(grid) >= 0)
    total, _ = integrate.quad(lambda t: float(density(t)[0]), -np.inf, np.inf, limit=500)
    assert abs(total - 1) <= 1e-3
    assert abs(integrate.trapezoid(density(grid), grid) - 1) <= 1e-3
    ratio = bw / mobility.silverman_bandwidth(x)
    assert 0.5 <= ratio <= 2.0, ratio
    _line(6)


# 7 ------------------------------------------------------------------------


def test_c7_krings_scale_invariance(criterion):
    criterion(7)
    rng = np.random.default_rng(3)
    for _ in range(50):
        values = rng.geometric(rng.uniform(0.05, 0.6), int(rng.integers(5, 400)))
        base = netstats.Distribution.from_values(values.tolist())
        tenfold = netstats.Distribution.from_values((10 * values).tolist(), unit=10.0)
        for other in (tenfold, base.scaled(10.0)):
            a, b = netstats.rescale(base), netstats.rescale(other)
            np.testing.assert_allclose(b.x, a.x, rtol=1e-12, atol=0)
            np.testing.assert_allclose(b.p, a.p, rtol=1e-12, atol=0)
            np.testing.assert_allclose(b.mass, a.mass, rtol=1e-12, atol=0)
        r = netstats.rescale(base)
        assert abs(r.mean() - 1) <= 1e-12
        assert abs(float(np.sum(r.mass)) - 1) <= 1e-12
    _line(7)


# 8 ------------------------------------------------------------------------


def _frac_pearson(xs, ys):
    n = len(xs)
    mx, my = Fraction(sum(xs), n), Fraction(sum(ys), n)
    sxy = sum((x - mx) * (y - my) for x, y in zip(xs, ys))
    sxx = sum((x - mx) ** 2 for x in xs)
    syy = sum((y - my) ** 2 for y in ys)
    r2 = sxy * sxy / (sxx * syy)
    return math.copysign(math.sqrt(r2), sxy)


def test_c8_comms_formulas(criterion):
    criterion(8)
    rng = np.random.default_rng(8)
    peers = [f"h{i:03d}" for i in range(60)]
    events = []
    for i in range(200):
        u = f"u{i:03d}"
        for _ in range(int(rng.integers(1, 40))):
            ch = "call" if rng.random() < 0.5 else "sms"
            direction = ["incoming", "outgoing", "missed"][int(rng.integers(0, 3 if ch == "call" else 2))]
            dur = int(rng.integers(0, 600)) if ch == "call" and direction != "missed" else 0
            t = int(1_380_000_000 + rng.integers(0, 28 * 86400))
            events.append(CommEvent(u, t, peers[int(rng.integers(0, 60))], ch, direction, dur))
    profiles = comms.contact_sets(events)
    assert len(profiles) == 200

    calls, texts = defaultdict(set), defaultdict(set)
    for e in events:
        (calls if e.channel == "call" else texts)[e.user].add(e.peer)
    sims = []
    for u, p in profiles.items():
        union = calls[u] | texts[u]
        exact = Fraction(len(calls[u] & texts[u]), len(union))
        assert comms.channel_similarity(p) == float(exact)
        sims.append(exact)
    assert comms.mean_similarity(profiles.values()) == pytest.approx(float(sum(sims) / len(sims)), rel=1e-12)

    xs = [len(calls[u]) for u in sorted(profiles)]
    ys = [len(texts[u]) for u in sorted(profiles)]
    assert comms.diversity_correlation(profiles.values()) == pytest.approx(_frac_pearson(xs, ys), rel=1e-12)

    n_users, n_weeks = 200, 4
    for channel in (None, "call", "sms"):
        prof = comms.weekly_profile(events, "Europe/Copenhagen", n_users, n_weeks, channel)
        selected = [e for e in events if channel is None or e.channel == channel]
        assert prof.total == len(selected)
        assert sum(itertools.chain.from_iterable(prof.exact_means())) == Fraction(len(selected), n_users * n_weeks)
        grid = Counter()
        zone = ZoneInfo("Europe/Copenhagen")
        for e in selected:
            local = dt.datetime.fromtimestamp(e.t, dt.timezone.utc).astimezone(zone)
            grid[(local.weekday(), local.hour)] += 1
        for (d, h), c in grid.items():
            assert prof.exact_means()[d][h] == Fraction(c, n_users * n_weeks)
    _line(8)


# 9 ------------------------------------------------------------------------


def _pipeline(root):
    data, out = os.path.join(root, "data"), os.path.join(root, "out")
    steps = [
        ["synth", "--seed", "17", "--n-users", "20", "--n-days", "7", "--out", data],
        ["ingest", "--data", data, "--out", out],
        ["btnet", "--data", data, "--out", out],
        ["wifieval", "--data", data, "--out", out],
        ["mobility", "--data", data, "--out", out],
        ["comms", "--data", data, "--out", out],
        ["survey", "--data", data, "--out", out],
        [
            "netstats", "--net", os.path.join(out, "bt_weighted.csv"),
            "--net", os.path.join(out, "bt_edges.csv"), "--min-weight", "2", "--out", out,
        ],
    ]
    for argv in steps:
        assert cli.main(argv) == 0, argv
    return data, out


def _tree(d):
    return sorted(os.path.relpath(os.path.join(r, f), d) for r, _, fs in os.walk(d) for f in fs)


def test_c9_pipeline_determinism(criterion, tmp_path):
    criterion(9)
    t0 = time.perf_counter()
    a = _pipeline(str(tmp_path / "a"))
    b = _pipeline(str(tmp_path / "b"))
    for da, db in zip(a, b):
        files = _tree(da)
        assert files == _tree(db)
        assert len(files) > 5
        match, mismatch, errors = filecmp.cmpfiles(da, db, files, shallow=False)
        assert not mismatch and not errors, mismatch
    with open(os.path.join(a[1], "bt_weighted.csv")) as fh:
        assert len(fh.read().splitlines()) > 1
    assert time.perf_counter() - t0 < 300
    _line(9)


# 10 -----------------------------------------------------------------------


def test_c10_ingest_robustness(criterion):
    criterion(10)
    loc = ["user_id,timestamp_s,lat_deg,lon_deg,accuracy_m"]
    good_loc = []
    for i in range(20):
        loc.append(f"u{i},{1000 + i},{91 + i},12.5,10")  # latitude out of range
    for i in range(5):
        loc.append(f"u{i},{2000 + i},abc,12.5,10")  # latitude not a number
    for i in range(10):
        loc.append(f"u{i},{3000 + i},55.7")  # truncated
    for i in range(5):
        row = f"u{i},{4000 + i},55.{i},12.5,8"
        loc.append(row)
        good_loc.append(row)

    comm = ["user_id,timestamp_s,peer_hash,channel,direction,duration_s"]
    good_comm = []
    for i in range(10):
        comm.append(f"u{i},{5000 + i},p{i},call,outgoing,-{i + 1}")  # negative duration
    for i in range(5):
        comm.append(f"u{i},{6000 + i},p{i},call")  # truncated
    for i in range(3):
        row = f"u{i},{7000 + i},p{i},call,incoming,{30 + i}"
        comm.append(row)
        good_comm.append(row)

    total_bad = 0
    total_accepted_bad = 0
    for kind, lines, good in (("location", loc, good_loc), ("comm", comm, good_comm)):
        recs, report = parse_channel(("\n".join(lines) + "\n").encode(), kind)
        n_bad = len(lines) - 1 - len(good)
        assert report.rejected == n_bad
        assert report.accepted == len(good) == len(recs)
        assert report.total_rows == len(lines) - 1
        accepted_keys = {(r.user, r.t) for r in recs}
        good_keys = {(ln.split(",")[0], int(ln.split(",")[1])) for ln in good}
        assert accepted_keys == good_keys
        total_bad += report.rejected
        total_accepted_bad += len(accepted_keys - good_keys)
        assert all(e.line >= 2 for e in report.errors)
    assert total_bad == 50
    assert total_accepted_bad == 0

    # the same 50 rows alone: 50 entries, nothing accepted
    bad_loc = [ln for ln in loc[1:] if ln not in good_loc]
    bad_comm = [ln for ln in comm[1:] if ln not in good_comm]
    n = 0
    for kind, header, rows in (("location", loc[0], bad_loc), ("comm", comm[0], bad_comm)):
        recs, report = parse_channel(io.BytesIO(("\n".join([header, *rows]) + "\n").encode()), kind)
        assert recs == [] and report.accepted == 0
        n += len(report.errors)
    assert n == 50
    _line(10)
