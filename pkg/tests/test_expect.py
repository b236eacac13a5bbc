import itertools
import math

import numpy as np
import pytest

from ifsca.catalog import invariant_arc
from ifsca.errors import CapExceededError, ConfigurationError, InputError
from ifsca.expect import expected_log_ratio, expected_pair_distance, expected_sup_distance, metric_profile
from ifsca.ifs import apply_word, word_weight
from ifsca.space import Base, Expected, Power


def brute_force(system, metric, x, y, n):
    """Enumerate every word of length n by direct composition."""
    total = 0.0
    for w in itertools.product(range(system.n_maps), repeat=n):
        fx, fy = apply_word(system, w, x), apply_word(system, w, y)
        total += word_weight(system, w) * float(metric.evaluate(system.space, np.array([fx]), np.array([fy]))[0])
    return total


def test_edalat_one_step(edalat):
    e = expected_pair_distance(edalat, Base(), 0.1, 0.4, 1)
    assert e.value == pytest.approx(0.35, abs=1e-15)
    assert e.value / 0.3 == pytest.approx(7 / 6)
    assert e.mode == "Exact" and e.samples_or_words == 2


@pytest.mark.parametrize("n", [0, 1, 5])
def test_diagonal_zero(circle, n):
    assert expected_pair_distance(circle, Base(), 0.3, 0.3, n).value == 0.0


def test_monte_carlo_matches_exact(edalat):
    ex = expected_pair_distance(edalat, Base(), 0.1, 0.4, 10)
    mc = expected_pair_distance(edalat, Base(), 0.1, 0.4, 10, mode="mc", budget=100_000, seed=11)
    assert mc.mode == "MonteCarlo" and mc.stderr > 0
    assert abs(mc.value - ex.value) <= 3 * mc.stderr


@pytest.mark.parametrize("name,x,y,n", [("drift", 0.3, 1.7, 6), ("circle", 0.1, 0.45, 7), ("uniform", 0.0, 1.0, 5)])
def test_exact_matches_brute_force(request, name, x, y, n):
    sys = request.getfixturevalue(name)
    for m in (Base(), Power(Base(), 0.4)):
        e = expected_pair_distance(sys, m, x, y, n)
        assert e.value == pytest.approx(brute_force(sys, m, x, y, n), rel=1e-12)


def test_uniform_exact_value(uniform):
    # slopes 1/3 and 1/2 everywhere: E(Z_n) = (5/12)^n d
    e = expected_pair_distance(uniform, Base(), 0.2, 0.9, 8)
    assert e.value == pytest.approx(0.7 * (5 / 12) ** 8, rel=1e-13)


def test_pushforward_identity(circle):
    x, y, n, m = 0.17, 0.62, 4, 3
    total = expected_pair_distance(circle, Base(), x, y, n + m).value
    acc = 0.0
    for w in itertools.product(range(2), repeat=n):
        fx, fy = apply_word(circle, w, x), apply_word(circle, w, y)
        acc += word_weight(circle, w) * expected_pair_distance(circle, Base(), fx, fy, m).value
    assert abs(acc - total) < 1e-12


def test_cap_exceeded(edalat):
    with pytest.raises(CapExceededError, match="MonteCarlo"):
        expected_pair_distance(edalat, Base(), 0.1, 0.4, 12, cap=1000)


def test_zero_budget(edalat):
    with pytest.raises(InputError):
        expected_pair_distance(edalat, Base(), 0.1, 0.4, 3, mode="mc", budget=0)


def test_unknown_mode(edalat):
    with pytest.raises(InputError):
        expected_pair_distance(edalat, Base(), 0.1, 0.4, 3, mode="quasi")


def test_mc_is_seeded(circle):
    a = expected_pair_distance(circle, Base(), 0.1, 0.4, 20, mode="mc", budget=500, seed=3)
    b = expected_pair_distance(circle, Base(), 0.1, 0.4, 20, mode="mc", budget=500, seed=3)
    assert a == b


def test_edalat_log_ratio(edalat):
    e = expected_log_ratio(edalat, Base(), 0.0, 0.3, 1)
    assert e.value == pytest.approx(0.5 * math.log(2 / 3), abs=1e-14)
    assert e.value == pytest.approx(-0.2027325540540822, abs=1e-12)


def test_log_ratio_rotations(rotations):
    for n in (1, 4, 9):
        assert abs(expected_log_ratio(rotations, Base(), 0.1, 0.35, n).value) < 1e-12


def test_log_ratio_zero_step(circle):
    assert expected_log_ratio(circle, Base(), 0.1, 0.2, 0).value == 0.0


def test_log_ratio_diagonal(circle):
    with pytest.raises(InputError):
        expected_log_ratio(circle, Base(), 0.1, 0.1, 2)


def test_log_ratio_merging_words(edalat):
    # f_1 sends 0.6 and 0.9 to 1: half the mass has Z_1 = 0
    e = expected_log_ratio(edalat, Base(), 0.6, 0.9, 1)
    assert e.value == -math.inf and e.flags["neg_inf_mass"] == pytest.approx(0.5)


def test_log_ratio_mc_close_to_exact(circle):
    ex = expected_log_ratio(circle, Base(), 0.2, 0.5, 8)
    mc = expected_log_ratio(circle, Base(), 0.2, 0.5, 8, mode="mc", budget=50_000, seed=2)
    assert abs(mc.value - ex.value) <= 4 * mc.stderr


# -- sup over the orbit -------------------------------------------------------

def test_sup_inside_invariant_arc(two_arcs):
    S, a = two_arcs.system, two_arcs.constants.alpha
    e = expected_sup_distance(S, Power(Base(), a), 0.55, 0.7, 30, "frozen", invariant_arc(two_arcs))
    assert e.lower == e.upper == pytest.approx(0.15**a, rel=1e-14)


def test_sup_diagonal(two_arcs):
    e = expected_sup_distance(two_arcs.system, Base(), 0.3, 0.3, 10, "frozen", invariant_arc(two_arcs))
    assert (e.value, e.lower, e.upper) == (0.0, 0.0, 0.0)


# frozen by a breadth-first enumeration that stops once both points are in I
SUP_ORACLE = {(0.2, 0.3): 0.7562247923588297, (0.05, 0.2): 0.8237245485600259, (0.24, 0.26): 0.6086344258219879}


@pytest.mark.parametrize("pair", sorted(SUP_ORACLE))
def test_sup_straddling_j(two_arcs, pair):
    S, k = two_arcs.system, two_arcs.constants
    e = expected_sup_distance(S, Power(Base(), k.alpha), *pair, 20, "frozen", invariant_arc(two_arcs))
    assert e.upper - e.lower < 1e-6 * e.upper
    assert e.lower - 1e-12 <= SUP_ORACLE[pair] <= e.upper + 1e-12
    da = float(S.space.dist(*pair)) ** k.alpha
    assert da <= e.lower and e.upper <= k.C * da


def test_sup_frozen_needs_invariant(two_arcs):
    with pytest.raises(ConfigurationError):
        expected_sup_distance(two_arcs.system, Base(), 0.1, 0.2, 10, "frozen", None)


def test_sup_bound_policy_brackets_frozen(two_arcs):
    S, a = two_arcs.system, two_arcs.constants.alpha
    inv = invariant_arc(two_arcs)
    frozen = expected_sup_distance(S, Power(Base(), a), 0.9, 0.1, 20, "frozen", inv)
    bound = expected_sup_distance(S, Power(Base(), a), 0.9, 0.1, 20, "lipschitz_cap")
    assert bound.lower <= frozen.lower + 1e-12 and frozen.upper <= bound.upper + 1e-12


def test_expected_pseudometric_profile(circle):
    # Expected(n) evaluated at step 0 equals E(Z_n)
    xs, ys = np.array([0.1, 0.3]), np.array([0.6, 0.35])
    lo, hi = metric_profile(circle, Expected(circle, Base(), 3), xs, ys, 0)
    ref = [expected_pair_distance(circle, Base(), x, y, 3).value for x, y in zip(xs, ys)]
    assert np.allclose(lo[:, 0], ref, rtol=1e-13) and np.allclose(hi[:, 0], ref, rtol=1e-13)


def test_estimate_dict(edalat):
    d = expected_log_ratio(edalat, Base(), 0.6, 0.9, 1).to_dict()
    assert d["value"] == "-inf" and d["flags"]["neg_inf_mass"] == 0.5
