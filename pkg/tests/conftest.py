import numpy as np
import pytest

from fxprofile.forge import synth_stream

FS = 44100.0


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def short_stream():
    """Five seconds of catalog audio, shared read-only across tests."""
    x = synth_stream(np.random.default_rng(7), 5.0, FS)
    x.setflags(write=False)
    return x


# ---------------------------------------------------------------------------
# acceptance report: one pass/fail line per criterion, printed after the run
# ---------------------------------------------------------------------------

_ACCEPTANCE_KEY = pytest.StashKey[dict]()


@pytest.fixture
def acceptance(request):
    """``acceptance(n, ok, detail)`` records the verdict for criterion ``n``."""
    store = request.config.stash.setdefault(_ACCEPTANCE_KEY, {})

    def record(n, ok, detail):
        store[n] = (bool(ok), detail)
        return ok

    return record


def pytest_terminal_summary(terminalreporter, config):
    store = config.stash.get(_ACCEPTANCE_KEY, {})
    if not store:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(store):
        ok, detail = store[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
