import time
from contextlib import contextmanager

import numpy as np
import pytest

from facekit import boost, synth


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def scene_cascade():
    """Face cascade trained on windows cut from synthetic scenes (about 5 s)."""
    pos, neg = synth.scene_windows(400, 2000, np.random.default_rng(7))
    targets = boost.CascadeTrainTargets(d_min=0.995, f_max=0.5, f_overall=1e-3, max_stages=10)
    cascade, _ = boost.train_cascade(pos, neg, targets, max_features=2500, seed=0)
    return cascade


@pytest.fixture(scope="session")
def eye_cascade():
    rng = np.random.default_rng(11)
    pos = synth.eye_windows(300, rng)
    neg = synth.eye_negatives(1200, rng)
    targets = boost.CascadeTrainTargets(d_min=0.995, f_max=0.5, f_overall=1e-3, max_stages=8)
    cascade, _ = boost.train_cascade(pos, neg, targets, max_features=3000, seed=0)
    return cascade


def pytest_configure(config):
    config.acceptance_lines = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = getattr(config, "acceptance_lines", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)


@pytest.fixture
def gate(request):
    """Records one PASS/FAIL line per acceptance criterion, with its runtime limit."""
    return Gate(request.config.acceptance_lines)


class Gate:
    def __init__(self, sink):
        self.sink = sink

    @contextmanager
    def criterion(self, number: int, title: str, limit_s: float | None):
        info = {}
        t0 = time.perf_counter()
        try:
            yield info
        except BaseException as exc:
            self._emit("FAIL", number, title, time.perf_counter() - t0, limit_s,
                       f"{type(exc).__name__}: {exc}".splitlines()[0])
            raise
        elapsed = time.perf_counter() - t0
        detail = ", ".join(f"{k}={v}" for k, v in info.items())
        if limit_s is not None and elapsed >= limit_s:
            self._emit("FAIL", number, title, elapsed, limit_s, f"too slow; {detail}")
            pytest.fail(f"criterion {number} took {elapsed:.1f}s, limit {limit_s}s")
        self._emit("PASS", number, title, elapsed, limit_s, detail)

    def _emit(self, status, number, title, elapsed, limit_s, detail):
        limit = f" < {limit_s:g}s" if limit_s is not None else ""
        line = f"{status} [{number:2d}] {title} ({elapsed:.1f}s{limit}) {detail}"
        self.sink.append(line)
        print(line, flush=True)
