import contextlib
import random
import time

import pytest

from emoxplain.corpus import filter_clear_agreement, split_corpus
from emoxplain.synthetic import make_corpus


@pytest.fixture(scope="session")
def toy_items():
    return make_corpus(120, seed=7)


@pytest.fixture(scope="session")
def toy_split(toy_items):
    return split_corpus(filter_clear_agreement(toy_items, 5), seed=0)


@pytest.fixture
def rng():
    return random.Random(1234)


_ACCEPTANCE_KEY = pytest.StashKey[list]()


@pytest.fixture
def criterion(request):
    """Context manager recording one PASS/FAIL line per acceptance criterion."""
    lines = request.config.stash.setdefault(_ACCEPTANCE_KEY, [])

    @contextlib.contextmanager
    def check(number, title: str, budget_s: float | None = None):
        start = time.perf_counter()
        try:
            yield
        except BaseException as exc:
            if isinstance(exc, pytest.skip.Exception):
                lines.append(f"SKIP criterion {number}: {title} ({exc.msg})")
            else:
                lines.append(f"FAIL criterion {number}: {title} ({type(exc).__name__})")
            print(lines[-1])
            raise
        elapsed = time.perf_counter() - start
        if budget_s is not None and elapsed >= budget_s:
            lines.append(f"FAIL criterion {number}: {title} ({elapsed:.2f}s, budget {budget_s:g}s)")
            print(lines[-1])
            raise AssertionError(lines[-1])
        lines.append(f"PASS criterion {number}: {title} ({elapsed:.2f}s)")
        print(lines[-1])

    return check


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE_KEY, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: s.split("criterion ")[1]):
            terminalreporter.write_line(line)
