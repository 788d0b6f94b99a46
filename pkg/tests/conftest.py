import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from synthwords.glyph_synth import SynthConfig, synth_pool  # noqa: E402

_ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def small_pool():
    return synth_pool(SynthConfig(rng_seed=11), 16)


@pytest.fixture
def frame_glyph():
    """32x32 glyph whose ink touches all four edges at full intensity."""
    g = np.zeros((32, 32), dtype=np.uint8)
    g[:3, :] = 255
    g[-3:, :] = 255
    g[:, :3] = 255
    g[:, -3:] = 255
    g[14:18, :20] = 255
    return g


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(label): acceptance criterion this test checks")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or rep.when != "call" and not (rep.when == "setup" and rep.failed):
        return
    status = "PASS" if rep.passed else ("SKIP" if rep.skipped else "FAIL")
    _ACCEPTANCE_LINES.append(f"{status}  {marker.args[0]}")


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
