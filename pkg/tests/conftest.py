import numpy as np
import pytest

from freqiqa import distort

_ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for num, name, status, detail in sorted(_ACCEPTANCE, key=lambda r: (r[0], r[1])):
        terminalreporter.write_line(f"[{status}] {num:>2}. {name}: {detail}")


@pytest.fixture
def criterion():
    """Record an acceptance result for the summary, then assert it."""

    def check(num, name, ok, detail=""):
        _ACCEPTANCE.append((num, name, "PASS" if ok else "FAIL", detail))
        assert ok, f"criterion {num} ({name}) failed: {detail}"

    def skip(num, name, reason):
        _ACCEPTANCE.append((num, name, "SKIP", reason))
        pytest.skip(reason)

    check.skip = skip
    return check


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def scenes():
    """Ten synthetic natural-like contents, 128x128."""
    return [distort.dead_leaves(1000 + i, (128, 128)) for i in range(10)]


@pytest.fixture(scope="session")
def blur_ladder(tmp_path_factory):
    """Small on-disk ladder: 10 contents x 5 blur levels, 96x96."""
    out = tmp_path_factory.mktemp("ladder")
    contents = [distort.dead_leaves(500 + i, (96, 96)) for i in range(10)]
    specs = [distort.DistortionSpec(distort.GBLUR, s) for s in (0.5, 1.0, 2.0, 3.0, 5.0)]
    return distort.build_ladder(contents, specs, out)
