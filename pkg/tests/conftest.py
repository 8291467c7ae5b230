import os

import numpy as np
import pytest
from hypothesis import settings

from rawjpeg import synth_raw

settings.register_profile("default", deadline=None, max_examples=40, derandomize=True)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

CORPUS_SEEDS = tuple(range(10))
CORPUS_SIZE = 512


@pytest.fixture(scope="session")
def corpus():
    """The seed-fixed synthetic evaluation corpus: 10 images, 512x512."""
    return [synth_raw(s, CORPUS_SIZE, CORPUS_SIZE) for s in CORPUS_SEEDS]


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def criterion(request):
    """Record one pass/fail line per acceptance criterion; call with the detail text."""
    details = []
    yield details.append
    failed = request.node.rep_call.failed if hasattr(request.node, "rep_call") else True
    line = f"[{'FAIL' if failed else 'PASS'}] {request.node.name}: {' '.join(details)}"
    ACCEPTANCE_LINES.append(line)
    print(line)


@pytest.hookimpl(hookwrapper=True, tryfirst=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    if rep.when == "call":
        item.rep_call = rep


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
