import numpy as np
import pytest
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from rpredict.probkit import FiniteJoint, Kernel, Pmf

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


_ACCEPTANCE = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    m = item.get_closest_marker("acceptance")
    if m is None or rep.when != "call" and not (rep.when == "setup" and rep.failed):
        return
    num, text = m.args
    _ACCEPTANCE[num] = (rep.passed, text, rep.duration)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(_ACCEPTANCE):
        ok, text, dur = _ACCEPTANCE[num]
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] {num:2d}. {text} ({dur:.2f}s)")


# --- strategies ------------------------------------------------------------------

def _simplex(draw, n, allow_zero=True):
    w = draw(arrays(np.float64, n, elements=st.floats(0.0 if allow_zero else 0.05, 1.0)))
    if w.sum() <= 0:
        w[0] = 1.0
    return w / w.sum()


@st.composite
def pmfs(draw, n=None, max_n=6, allow_zero=True):
    n = n or draw(st.integers(1, max_n))
    return Pmf(_simplex(draw, n, allow_zero))


@st.composite
def kernels(draw, nin=None, nout=None, max_n=5, allow_zero=True):
    nin = nin or draw(st.integers(1, max_n))
    nout = nout or draw(st.integers(1, max_n))
    return Kernel(np.stack([_simplex(draw, nout, allow_zero) for _ in range(nin)]))


@st.composite
def joints(draw, nx=None, ny=None, max_n=5, allow_zero=True):
    nx = nx or draw(st.integers(1, max_n))
    ny = ny or draw(st.integers(1, max_n))
    return FiniteJoint(_simplex(draw, nx * ny, allow_zero).reshape(nx, ny))


def random_joint(rng, nx, ny, conc=1.0):
    return FiniteJoint(rng.dirichlet(np.full(nx * ny, conc)).reshape(nx, ny))
