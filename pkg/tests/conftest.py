import os
import sys

from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

# the CLI reads this; keep tests independent of the caller's environment
os.environ.pop("DRIFTBENCH_SEED", None)
sys.setrecursionlimit(max(sys.getrecursionlimit(), 3000))


import contextlib

import pytest

_ACCEPTANCE = pytest.StashKey[dict]()


@pytest.fixture
def criterion(request, capsys):
    """Record one acceptance line: PASS only if the body finishes without error."""
    results = request.config.stash.setdefault(_ACCEPTANCE, {})

    @contextlib.contextmanager
    def run(key, title):
        details = []
        ok = False
        try:
            yield details
            ok = True
        finally:
            line = f"[{'PASS' if ok else 'FAIL'}] {key} {title}" + (f": {'; '.join(details)}" if details else "")
            results[key] = line
            with capsys.disabled():
                print("\n" + line)
    return run


def pytest_terminal_summary(terminalreporter, config):
    results = config.stash.get(_ACCEPTANCE, {})
    if results:
        terminalreporter.section("acceptance criteria")
        for key in sorted(results):
            terminalreporter.write_line(results[key])
