import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from msgait.synthesis import GaitParams, synthesize_cohort, synthesize_trial

settings.register_profile(
    "default", deadline=None, suppress_health_check=[HealthCheck.too_slow], print_blob=True
)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)


@pytest.fixture(scope="session")
def clean_trial():
    return synthesize_trial(GaitParams(n_cycles=2))


@pytest.fixture(scope="session")
def synthetic_cohort(tmp_path_factory):
    """A 10 + 10 subject, 5-trial cohort on disk with mild noise."""
    root = tmp_path_factory.mktemp("cohort")
    manifest, truth = synthesize_cohort(root, noise_sd=0.002, trial_sd=0.02, seed=11)
    return root, manifest, truth


# -- acceptance summary ----------------------------------------------------------------

_ACCEPTANCE = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(number, title): numbered acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    if rep.when == "call" or rep.failed:
        number, title = marker.args
        prev = _ACCEPTANCE.get(number, (title, True))[1]
        _ACCEPTANCE[number] = (title, prev and rep.passed)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        title, ok = _ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {title}")
