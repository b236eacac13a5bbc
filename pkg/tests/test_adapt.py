import json

import numpy as np
import pytest

from ifsca.adapt import (EmpiricalMeasure, SimParams, eca_metric, export_metric, geometric_series_metric,
                         import_metric, power_metric, ratio_range, stationary_gap_metric, sup_metric)
from ifsca.catalog import invariant_arc
from ifsca.certify import (SAMPLED, GridParams, _admissible, certify_ratio_bound, grid_pairs, search_alpha,
                           search_k_eca)
from ifsca.errors import ConfigurationError, InputError
from ifsca.expect import metric_profile
from ifsca.reproduce import hat_d, sandwich_check
from ifsca.space import Base, Power, SpaceSpec, dist

CIRCLE = SpaceSpec.circle()


def _pairs(space, n, seed):
    rng = np.random.default_rng(seed)
    xs = space.lo + (space.hi - space.lo) * rng.random(n)
    ys = space.lo + (space.hi - space.lo) * rng.random(n)
    return xs, ys


def test_power_alpha_one(circle):
    xs, ys = _pairs(CIRCLE, 100, 0)
    assert np.array_equal(power_metric(Base(), 1.0).evaluate(CIRCLE, xs, ys), CIRCLE.dist(xs, ys))


def test_power_half_at_004():
    assert dist(CIRCLE, power_metric(Base(), 0.5), 0.3, 0.34) == pytest.approx(0.2, abs=1e-12)


def test_power_alpha_range():
    with pytest.raises(InputError):
        power_metric(Base(), 1.2)


def test_edalat_alpha_certifies_ca(edalat):
    a, phi = search_alpha(edalat)
    cert = certify_ratio_bound(edalat, power_metric(Base(), a), 1)
    assert phi < 1 and cert.certified and cert.rate_bound < 1


def test_power_keeps_nea(drift):
    for a in (1.0, 0.6, 0.3):
        c = certify_ratio_bound(drift, power_metric(Base(), a), 1, condition="NEA", grid=GridParams(resolution=128))
        assert c.certified and c.rate_bound <= 1 + 1e-9


def test_eca_k1_is_input(drift):
    xs, ys = _pairs(drift.space, 200, 1)
    m = eca_metric(drift, Base(), 1, 0.5)
    assert np.allclose(m.evaluate(drift.space, xs, ys), drift.space.dist(xs, ys), rtol=0, atol=1e-15)


def test_eca_diagonal(circle):
    m = eca_metric(circle, Base(), 4, 0.8)
    assert dist(CIRCLE, m, 0.3, 0.3) == 0.0


def test_eca_two_step_rate(drift):
    k, lam, _ = search_k_eca(drift, Base(), 6, GridParams(resolution=64))
    assert k == 2
    c = certify_ratio_bound(drift, eca_metric(drift, Base(), k, lam), 1, grid=GridParams(resolution=128),
                            soundness=SAMPLED)
    assert c.certified and c.rate_bound <= lam ** 0.5 + 1e-6


def test_eca_formula(circle):
    # d + lam^{-1/2} E(Z_1) for k = 2, by hand
    k, lam, x, y = 2, 0.7, 0.12, 0.4
    m = eca_metric(circle, Base(), k, lam)
    z1 = 0.0
    for i, p in enumerate(circle.probs):
        fx, fy = circle.apply_map(i, np.array([x, y]))
        z1 += p * float(CIRCLE.dist(fx, fy))
    assert dist(CIRCLE, m, x, y) == pytest.approx(0.28 + lam ** -0.5 * z1, rel=1e-13)


# -- geometric series ----------------------------------------------------------

def test_geometric_q_range(uniform):
    for q in (5 / 12, 0.3, 1.0):
        with pytest.raises(InputError):
            geometric_series_metric(uniform, Base(), 5 / 12, q, 1.0, 10)


def test_geometric_dominates_base(uniform):
    D = geometric_series_metric(uniform, Base(), 5 / 12, 0.7, 1.0, 12)
    xs, ys = _pairs(uniform.space, 300, 2)
    lo, _ = D.bracket(uniform.space, xs, ys)
    assert np.all(lo >= uniform.space.dist(xs, ys) - 1e-15)
    assert dist(uniform.space, D, 0.4, 0.4) == 0.0


def test_ratio_range(uniform, circle):
    xs, ys = _pairs(uniform.space, 300, 8)
    D = geometric_series_metric(uniform, Base(), 5 / 12, 0.7, 1.0, 12)
    lo, hi = ratio_range(uniform, D, xs, ys)
    # weights (q/lam)^n against E(Z_n) = lam^n d: the lower bracket of D/d is sum_{n<=12} q^n
    partial = sum(0.7**n for n in range(13))
    assert lo >= 1.0 and lo == pytest.approx(partial, rel=1e-12) and hi >= lo
    # eca bracket for k = 2: 1 <= D/d <= 1 + lam^{-1/2} L_max
    xs, ys = _pairs(CIRCLE, 300, 9)
    lo, hi = ratio_range(circle, eca_metric(circle, Base(), 2, 0.8), xs, ys)
    assert 1.0 <= lo <= hi <= 1.0 + 0.8**-0.5 * 1.5 + 1e-12
    with pytest.raises(InputError):
        ratio_range(circle, Base(), [0.2], [0.2])


def test_geometric_bracket_shrinks_at_rate_q(uniform):
    xs, ys = _pairs(uniform.space, 20, 3)
    widths = []
    for n_max in (6, 8, 10):
        lo, hi = geometric_series_metric(uniform, Base(), 5 / 12, 0.7, 1.0, n_max).bracket(uniform.space, xs, ys)
        widths.append(float(np.max(hi - lo)))
    assert widths[1] / widths[0] == pytest.approx(0.49, rel=1e-9)
    assert widths[2] / widths[1] == pytest.approx(0.49, rel=1e-9)


def bracket_slack(system, metric, grid):
    """Widest gap between the upper and lower one-step ratio over the (unrefined) certification grid."""
    xs, ys, _, _ = grid_pairs(system.space, None, grid.resolution)
    keep = _admissible(system.space, metric, xs, ys, grid)
    lo, hi = metric_profile(system, metric, xs[keep], ys[keep], 1)
    return float(np.max(hi[:, 1] / lo[:, 0] - lo[:, 1] / hi[:, 0]))


def test_geometric_rate(uniform):
    # the series tail is an absolute bound, so pairs with tiny D are left out
    lam, q = 5 / 12, 0.7
    D = geometric_series_metric(uniform, Base(), lam, q, 1.0, 14)
    grid = GridParams(resolution=64, refine=False, min_metric=0.05)
    c = certify_ratio_bound(uniform, D, 1, grid=grid, soundness=SAMPLED)
    slack = bracket_slack(uniform, D, grid)
    assert c.extras["bracket_slack"] == pytest.approx(slack, rel=1e-12)
    assert c.certified and c.rate_bound <= lam / q + slack


# -- sup metric -------------------------------------------------------------

def test_sup_sandwich(two_arcs):
    sw = sandwich_check(two_arcs, hat_d(two_arcs), n_pairs=2000, seed=5)
    assert sw["holds"] and sw["min_ratio"] >= 1 - 1e-12 and sw["max_ratio"] <= two_arcs.constants.C


def test_sup_diagonal(two_arcs):
    assert dist(CIRCLE, hat_d(two_arcs), 0.2, 0.2) == 0.0


def test_sup_nea(two_arcs):
    c = certify_ratio_bound(two_arcs.system, hat_d(two_arcs), 1, grid=GridParams(resolution=32), condition="NEA",
                            soundness=SAMPLED, tol=1e-6)
    assert c.certified and c.rate_bound <= 1 + 1e-6


def test_sup_needs_power_of_base(two_arcs):
    with pytest.raises(InputError):
        sup_metric(two_arcs.system, eca_metric(two_arcs.system, Base(), 2, 0.5), 10, "frozen",
                   invariant_arc(two_arcs))


# -- stationary gap ------------------------------------------------------------

@pytest.fixture(scope="module")
def small_rho(circle):
    return stationary_gap_metric(circle, SimParams(burn_in=1000, samples=50_000, chains=2, seed=1))


def test_gap_diagonal(small_rho):
    assert dist(CIRCLE, small_rho, 0.4, 0.4) == 0.0


def test_gap_is_metric_on_sample(small_rho):
    xs, ys = _pairs(CIRCLE, 500, 4)
    v = small_rho.evaluate(CIRCLE, xs, ys)
    assert np.all(v >= 0) and np.all(v <= 0.5)
    assert np.allclose(v, small_rho.evaluate(CIRCLE, ys, xs))


def test_gap_needs_invertible_maps(edalat):
    with pytest.raises(ConfigurationError):
        stationary_gap_metric(edalat, SimParams(burn_in=10, samples=100, chains=1))


def test_empirical_measure_arcs():
    mu = EmpiricalMeasure(CIRCLE, np.array([0.1, 0.2, 0.3, 0.9]))
    assert mu.arc_mass(0.15, 0.35) == pytest.approx(0.5)
    assert mu.arc_mass(0.85, 0.15) == pytest.approx(0.5)  # wraps through 0
    # the arc from 0.85 through 0 to 0.25 holds 3/4, the other arc 1/4
    assert mu.gap(np.array([0.85]), np.array([0.25]))[0] == pytest.approx(0.25)
    back = EmpiricalMeasure.from_dict(json.loads(json.dumps(mu.to_dict())))
    assert np.array_equal(back.samples, mu.samples)


def test_empirical_measure_nonempty():
    with pytest.raises(InputError):
        EmpiricalMeasure(CIRCLE, np.array([]))


# -- serialization ---------------------------------------------------------------

@pytest.mark.parametrize("build", [
    lambda ex: eca_metric(ex.system, Power(Base(), 0.5), 3, 0.9),
    lambda ex: geometric_series_metric(ex.system, Base(), 0.5, 0.8, 2.0, 8),
    lambda ex: hat_d(ex, depth=20),
])
def test_export_import_roundtrip(tmp_path, two_arcs, build):
    m = build(two_arcs)
    path = tmp_path / "metric.json"
    export_metric(m, path)
    back = import_metric(path)
    xs, ys = _pairs(CIRCLE, 40, 6)
    a = metric_profile(two_arcs.system, m, xs, ys, 0)
    b = metric_profile(two_arcs.system, back, xs, ys, 0)
    assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])


def test_export_gap_roundtrip(tmp_path, small_rho):
    export_metric(small_rho, tmp_path / "rho.json")
    back = import_metric(tmp_path / "rho.json")
    xs, ys = _pairs(CIRCLE, 40, 7)
    assert np.array_equal(back.evaluate(CIRCLE, xs, ys), small_rho.evaluate(CIRCLE, xs, ys))


def test_export_with_system_refs(tmp_path, circle):
    m = eca_metric(circle, Base(), 2, 0.9)
    export_metric(m, tmp_path / "m.json", {"c": circle})
    assert json.loads((tmp_path / "m.json").read_text())["system"] == "c"
    with pytest.raises(ConfigurationError):
        import_metric(tmp_path / "m.json").evaluate(CIRCLE, np.array([0.1]), np.array([0.2]))
    back = import_metric(tmp_path / "m.json", {"c": circle})
    assert dist(CIRCLE, back, 0.1, 0.2) == dist(CIRCLE, m, 0.1, 0.2)
