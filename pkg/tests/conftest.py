import pytest

from ifsca.catalog import build_example
from ifsca.ifs import AffinePieces, IfsSystem
from ifsca.space import SpaceSpec


@pytest.fixture(scope="session")
def edalat():
    return build_example("edalat_logca").system


@pytest.fixture(scope="session")
def drift():
    return build_example("drift_example").system


@pytest.fixture(scope="session")
def circle():
    return build_example("circle_ns_rotation").system


@pytest.fixture(scope="session")
def rotations():
    return build_example("all_rotations").system


@pytest.fixture(scope="session")
def uniform():
    return build_example("uniform_contraction").system


@pytest.fixture(scope="session")
def two_arcs():
    return build_example("circle_two_arcs")


@pytest.fixture
def half_map():
    """Degenerate single-map test double f(x) = x/2 with p = (1)."""
    return IfsSystem(SpaceSpec.interval(0.0, 1.0), (AffinePieces((0.0,), (0.5,), (0.0,)),), (1.0,),
                     allow_degenerate=True)


# ---------------------------------------------------------------------------
# acceptance summary: one line per criterion at the end of the run

_CRITERIA = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


def _entry(marker):
    return _CRITERIA.setdefault(marker.args[0], {"title": marker.args[1], "passed": True, "seconds": 0.0,
                                                 "notes": []})


@pytest.fixture
def acceptance_note(request):
    marker = request.node.get_closest_marker("criterion")
    if marker is None:
        yield lambda msg: None
    else:
        yield _entry(marker)["notes"].append


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or rep.skipped:
        return
    e = _entry(marker)
    e["passed"] = e["passed"] and rep.passed
    e["seconds"] += rep.duration


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(_CRITERIA):
        e = _CRITERIA[num]
        status = "PASS" if e["passed"] else "FAIL"
        secs = e["seconds"]
        notes = "; ".join(e["notes"])
        terminalreporter.write_line(f"criterion {num} [{status}] {e['title']} ({secs:.1f}s) {notes}".rstrip())
