import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)


def rel_err(a, b):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(b), np.linalg.norm(a), 1e-300))


# acceptance lines collected during the session, echoed in the terminal summary
ACCEPTANCE_LINES: list = []


class CriterionRecorder:
    def __init__(self, number: int, title: str):
        self.number = number
        self.title = title
        self.done = False

    def report(self, ok: bool, detail: str) -> None:
        line = f"{'PASS' if ok else 'FAIL'} criterion {self.number:>2} ({self.title}): {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        self.done = True
        assert ok, line


@pytest.fixture
def criterion(request):
    marker = request.node.get_closest_marker("criterion")
    rec = CriterionRecorder(*marker.args)
    yield rec
    if not rec.done:
        ACCEPTANCE_LINES.append(f"FAIL criterion {rec.number:>2} ({rec.title}): did not complete")


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion test")


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2])):
            terminalreporter.write_line(line)
