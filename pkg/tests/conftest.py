import time

import pytest

from flatrack.cli import run_scenario
from flatrack.scenario import load_scenario

PENDULUM_SCENARIOS = [f"pendulum_T{t}_{s}" for t in ("03", "06", "10") for s in ("a", "b")]
BICYCLE_SCENARIOS = ["bicycle_T05", "bicycle_T5", "bicycle_T10"]

_session_start = time.perf_counter()


class ScenarioCache:
    """Run each bundled scenario at most once per session, timing the run."""

    def __init__(self):
        self.results = {}

    def get(self, name):
        if name not in self.results:
            scenario = load_scenario(name)
            t0 = time.process_time()
            trace, metrics = run_scenario(scenario)
            self.results[name] = (scenario, trace, metrics, time.process_time() - t0)
        return self.results[name]


@pytest.fixture(scope="session")
def scenarios():
    return ScenarioCache()


_criterion_lines = []


@pytest.fixture
def report():
    """Record a one-line verdict for an acceptance criterion."""

    def emit(number, ok, detail):
        line = f"[criterion {number}] {'PASS' if ok else 'FAIL'}: {detail}"
        _criterion_lines.append(line)
        print(line)
        return ok

    return emit


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    elapsed = time.perf_counter() - _session_start
    for line in _criterion_lines:
        terminalreporter.write_line(line)
    verdict = "PASS" if elapsed < 60.0 else "FAIL"
    terminalreporter.write_line(f"[criterion 9 runtime] {verdict}: full suite took {elapsed:.1f} s (limit 60 s)")
