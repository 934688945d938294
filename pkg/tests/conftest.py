import pytest

from avt.canbus import DecodeTable, SignalSpec
from avt.sim import SimScenario, simulate
from avt.trip import DacmanConfig
from avt.recorder import run_recorder


@pytest.fixture
def decode_table():
    return DecodeTable(
        [
            SignalSpec("speed", 0x155, 0, 16, "little", False, 0.01, 0.0, "m/s"),
            SignalSpec("autopilot", 0x280, 0, 1, "little", False, 1.0, 0.0, ""),
        ]
    )


@pytest.fixture
def make_scenario(decode_table):
    def _make(seed=1, duration_s=60.0, speed=15.0, **kwargs):
        defaults = dict(
            seed=seed,
            duration_s=duration_s,
            speed_profile=[(0.0, 0.0), (5.0, speed)],
            signal_defs=decode_table,
        )
        defaults.update(kwargs)
        return SimScenario(**defaults)

    return _make


@pytest.fixture
def dacman_config():
    return DacmanConfig(
        rider_id=20,
        subject_id=7,
        vehicle_id=3,
        study_id=1,
        cameras=[("face", 0), ("dash", 1), ("front", 2)],
        lighthouse_interval_s=60.0,
    )


@pytest.fixture
def recorded_trip(tmp_path, make_scenario, dacman_config):
    """A freshly recorded 60 s three-camera trip."""
    streams = simulate(make_scenario())
    layout = run_recorder(dacman_config, streams, tmp_path / "raw")
    return layout


def pytest_terminal_summary(terminalreporter):
    """Echo the acceptance gate's one-line-per-criterion results."""
    try:
        from test_acceptance import ACCEPTANCE_LINES
    except ImportError:
        return
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
