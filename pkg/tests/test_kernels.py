"""The numba kernels and the numpy fallback must agree."""
import numpy as np
import pytest

from ifsca import kernels
from ifsca._accel import NUMBA_AVAILABLE
from ifsca._rng import derive_seed, draw_symbols
from ifsca.catalog import invariant_arc

pytestmark = pytest.mark.skipif(not NUMBA_AVAILABLE, reason="numba not installed")


def both(monkeypatch, fn):
    monkeypatch.delenv("IFSCA_DISABLE_JIT", raising=False)
    a = fn()
    monkeypatch.setenv("IFSCA_DISABLE_JIT", "1")
    b = fn()
    monkeypatch.delenv("IFSCA_DISABLE_JIT")
    return a, b


def _close(a, b, rtol=1e-11):
    a, b = np.asarray(a, float), np.asarray(b, float)
    assert a.shape == b.shape
    assert np.array_equal(np.isnan(a), np.isnan(b))
    m = ~np.isnan(a)
    assert np.allclose(a[m], b[m], rtol=rtol, atol=1e-14)


@pytest.fixture(scope="module")
def pairs():
    rng = np.random.default_rng(7)
    xs, ys = rng.random(40), rng.random(40)
    ys[:3] = xs[:3]  # diagonal pairs
    return xs, ys


@pytest.mark.parametrize("name", ["edalat", "drift", "circle", "rotations"])
@pytest.mark.parametrize("alpha", [1.0, 0.5])
def test_psi_profile(monkeypatch, request, pairs, name, alpha):
    sys = request.getfixturevalue(name)
    xs, ys = pairs
    lo, hi = sys.space.lo, sys.space.hi
    xs, ys = lo + xs * (hi - lo), lo + ys * (hi - lo)
    a, b = both(monkeypatch, lambda: kernels.psi_profile(sys.packed, xs, ys, 11, alpha))
    _close(a, b)


def test_psi_profile_deep_bfs(monkeypatch, two_arcs, pairs):
    # depth large enough to use the breadth-first lower levels
    a, b = both(monkeypatch, lambda: kernels.psi_profile(two_arcs.system.packed, pairs[0][:6], pairs[1][:6], 17))
    _close(a, b)


def test_log_profile(monkeypatch, circle, pairs):
    a, b = both(monkeypatch, lambda: kernels.log_profile(circle.packed, *pairs, 10))
    _close(a[0], b[0])
    _close(a[1], b[1])


def test_log_profile_saturation(monkeypatch, edalat):
    xs, ys = np.array([0.6, 0.1]), np.array([0.9, 0.2])
    a, b = both(monkeypatch, lambda: kernels.log_profile(edalat.packed, xs, ys, 6))
    _close(a[1], b[1])
    assert a[1][0, 1] == pytest.approx(0.5)  # f_1 merges 0.6 and 0.9


def test_deriv_profile(monkeypatch, circle, two_arcs):
    xs = np.linspace(0.013, 0.987, 33)
    for sys in (circle, two_arcs.system):
        a, b = both(monkeypatch, lambda: kernels.deriv_profile(sys.packed, xs, 12, 0.7))
        _close(a, b)


def test_sup_profile(monkeypatch, two_arcs, pairs):
    ia = invariant_arc(two_arcs)
    inv = (ia.lo, ia.hi, ia.r_up, ia.r_low)
    al = two_arcs.constants.alpha
    a, b = both(monkeypatch, lambda: kernels.sup_profile(two_arcs.system.packed, *pairs, 40, 2, al, inv))
    _close(a[0], b[0])
    _close(a[1], b[1])


@pytest.mark.parametrize("name", ["drift", "circle"])
def test_paths_and_chains(monkeypatch, request, name):
    sys = request.getfixturevalue(name)
    rng = np.random.default_rng(derive_seed(3, 1))
    syms = draw_symbols(rng, sys.probs, (500, 30))
    a, b = both(monkeypatch, lambda: kernels.mc_paths(sys.packed, 0.2, 0.7, syms, 0.5))
    _close(a, b, rtol=1e-9)
    a, b = both(monkeypatch, lambda: kernels.chain_samples(sys.packed, np.array([0.1, 0.4]), syms[:2], 10))
    _close(a, b, rtol=1e-9)
    a, b = both(monkeypatch, lambda: kernels.orbit(sys.packed, 0.3, syms[0]))
    _close(a, b, rtol=1e-9)


def test_draw_symbols_deterministic():
    a = draw_symbols(np.random.default_rng(5), (0.3, 0.7), (100, 20))
    b = draw_symbols(np.random.default_rng(5), (0.3, 0.7), (100, 20))
    assert np.array_equal(a, b)
    assert 0.6 < a.mean() < 0.8


def test_derive_seed_distinct():
    seeds = {derive_seed(0, i) for i in range(100)}
    assert len(seeds) == 100 and derive_seed(1, 0) != derive_seed(0, 0)
