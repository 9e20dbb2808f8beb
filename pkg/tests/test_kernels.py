import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import BACKENDS
from evtr import kernels

pytestmark = pytest.mark.skipif(len(BACKENDS) < 2, reason="compiled extension not built")
py, cy = dict(BACKENDS)["python"], dict(BACKENDS).get("cython")


def test_backend_reported():
    assert kernels.BACKEND in ("python", "cython")


@settings(max_examples=80, deadline=None)
@given(w=st.integers(1, 70), h=st.integers(1, 9), n=st.integers(0, 300),
       seed=st.integers(0, 2**32 - 1), t0=st.integers(-50, 500), tau=st.integers(1, 600))
def test_accumulate_and_window_agree(w, h, n, seed, t0, tau):
    rng = np.random.default_rng(seed)
    t = np.sort(rng.integers(0, 1000, n))
    u, v = rng.integers(0, w, n), rng.integers(0, h, n)
    a = py.accumulate_packed(t, u, v, t0, t0 + tau, w, h)
    assert np.array_equal(a, cy.accumulate_packed(t, u, v, t0, t0 + tau, w, h))
    lp = np.full((h, w), -(1 << 61), dtype=np.int64)
    lc = lp.copy()
    py.stamp_events(lp, t, u, v)
    cy.stamp_events(lc, t, u, v)
    assert np.array_equal(lp, lc)
    wp = py.window_packed(lp, t0, t0 + tau)
    assert np.array_equal(wp, cy.window_packed(lc, t0, t0 + tau))
    # latest-stamp windows equal batch frames once nothing later than the window was stamped
    early = t < t0 + tau
    assert np.array_equal(py.window_packed(_stamped(t[early], u[early], v[early], h, w), t0, t0 + tau), a)


def _stamped(t, u, v, h, w):
    last = np.full((h, w), -(1 << 61), dtype=np.int64)
    py.stamp_events(last, t, u, v)
    return last


@settings(max_examples=80, deadline=None)
@given(w=st.integers(1, 90), h=st.integers(1, 6), factor=st.integers(1, 90),
       seed=st.integers(0, 2**32 - 1))
def test_compress_agrees(w, h, factor, seed):
    if factor > w:
        return
    bits = np.packbits(np.random.default_rng(seed).random((h, w)) < 0.3, axis=1)
    assert np.array_equal(py.compress_packed(bits, w, factor), cy.compress_packed(bits, w, factor))


@pytest.mark.parametrize("mod", [py, cy], ids=["python", "cython"])
def test_bounds_error_names_event(mod):
    z = np.zeros(3, dtype=np.int64)
    u = np.array([0, 1, 9], dtype=np.int64)
    with pytest.raises(ValueError, match="event 2"):
        mod.accumulate_packed(z, u, z, 0, 10, 8, 2)
