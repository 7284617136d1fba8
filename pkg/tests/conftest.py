import hypothesis
import pytest

from avmtbf.perception import ObjectObservation, PerceptionLog
from avmtbf.units import SpeedRangePartition, kmh_to_ms

hypothesis.settings.register_profile("ci", deadline=None)
hypothesis.settings.load_profile("ci")


def make_miss_log(runs=(6, 6, 5), total_frames=25200, frame_rate=5.0, ego_kmh=36.0, d_real=10.0):
    """Log with one perception miss run per entry of ``runs`` (lengths in frames)."""
    ego = kmh_to_ms(ego_kmh)
    obs = []
    start = 100
    for k, n in enumerate(runs):
        for f in range(start, start + n):
            obs.append(ObjectObservation(f, f"car{k}", d_real, None, 0.0, None, ego))
            # a correctly perceived neighbour in the same frame
            obs.append(ObjectObservation(f, f"ok{k}", 40.0, 40.02, 5.0, 5.0, ego))
        start += n + 1000
    return PerceptionLog(
        frame_rate=frame_rate,
        total_frames=total_frames,
        observations=obs,
        ego_speed_by_frame={f: ego for f in range(total_frames)},
        road_max_speed=kmh_to_ms(130.0),
    )


@pytest.fixture
def miss_log():
    return make_miss_log()


@pytest.fixture
def wide_partition():
    return SpeedRangePartition.from_kmh([0, 250])


@pytest.fixture
def highway_partition():
    return SpeedRangePartition.from_kmh([80, 100, 130, 180])


# --- acceptance summary: one PASS/FAIL line per criterion ---------------------------------

_criteria: dict[str, tuple[str, str]] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    if item.module.__name__.endswith("test_acceptance") and item.function.__doc__:
        title = item.function.__doc__.strip().splitlines()[0]
        if report.when == "call" or report.failed:
            prev = _criteria.get(item.name, ("PASS", title))[0]
            state = "FAIL" if report.failed or prev == "FAIL" else "PASS"
            _criteria[item.name] = (state, title)


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(_criteria):
        state, title = _criteria[name]
        terminalreporter.write_line(f"{state}  {title}")
