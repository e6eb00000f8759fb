import os

import pytest
from hypothesis import HealthCheck, settings

from proxnet.ingest import ROSTER_FILENAME, channel_paths, load_dataset
from proxnet.synth import SynthConfig, generate

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def _materialize(tmp_path_factory, name, cfg):
    out = generate(cfg)
    d = tmp_path_factory.mktemp(name)
    out.write(d)
    ds = load_dataset(channel_paths(d), os.path.join(d, ROSTER_FILENAME))
    return out, ds, str(d)


@pytest.fixture(scope="session")
def noisy_world(tmp_path_factory):
    """Default generator settings (RSSI noise, seat jitter, coarse fixes)."""
    return _materialize(tmp_path_factory, "noisy", SynthConfig(n_users=24, seed=11))


@pytest.fixture(scope="session")
def clean_world(tmp_path_factory):
    """Zero RSSI noise, zero jitter, no coarse fixes: everything co-located is identical."""
    cfg = SynthConfig(n_users=20, seed=5, rssi_noise_db=0.0, seat_jitter_m=0.0, coarse_fix_prob=0.0)
    return _materialize(tmp_path_factory, "clean", cfg)


# acceptance criteria report: one line per criterion at the end of the run

_CRITERIA: dict[str, tuple[str, str]] = {}


def pytest_runtest_logreport(report):
    props = dict(report.user_properties)
    if "criterion" not in props:
        return
    key = props["criterion"]
    if report.when == "call" or report.failed:
        status = "PASS" if report.passed else "FAIL"
        prev = _CRITERIA.get(key)
        if prev is None or prev[0] == "PASS":
            _CRITERIA[key] = (status, props.get("title", ""))


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(_CRITERIA, key=int):
        status, title = _CRITERIA[key]
        terminalreporter.write_line(f"[{status}] criterion {key}: {title}")
