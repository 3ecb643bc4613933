import numpy as np
import pytest

from riskmap.index_engine import build_feature_matrix, standardize
from riskmap.synth_data import planted_labels, province_config, synth_panel


@pytest.fixture(scope="session")
def province_panel():
    cfg = province_config(seed=0)
    return cfg, synth_panel(cfg)


@pytest.fixture(scope="session")
def province_features(province_panel):
    cfg, ds = province_panel
    fm = standardize(build_feature_matrix(ds, "provinces"))
    truth = planted_labels(cfg)
    return fm, np.array([truth[r] for r in fm.region_ids])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES = []


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or rep.when != "call" and not (rep.when == "setup" and rep.failed):
        return
    number, title = marker.args
    status = "PASS" if rep.passed else "FAIL"
    line = f"{status}  criterion {number:>2}: {title}"
    ACCEPTANCE_LINES.append((number, line))
    print(f"\n{line}")


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
