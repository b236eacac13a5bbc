import math

import numpy as np
import pytest
from scipy.optimize import brentq

from ifsca.certify import (MARGIN, SAMPLED, GridParams, certify_log_ratio_bound, certify_ratio_bound,
                           check_leca_pairs, check_local_contraction_profile, estimate_growth_exponent,
                           lcws_from_profile, search_alpha, search_k_eca)
from ifsca.errors import CapExceededError, InputError
from ifsca.space import Base, Power


def test_drift_rate_on_a(drift):
    c = certify_ratio_bound(drift, Base(), 1, ((0.0, 1.0), (0.0, 1.0)))
    assert c.certified
    assert c.rate_bound == pytest.approx(0.6, abs=1e-9)


def test_drift_ratio_one_on_block(drift):
    c = certify_ratio_bound(drift, Base(), 1, ((1.0, 4 / 3), (1.0, 4 / 3)))
    assert c.refuted
    assert c.witness_ratio == pytest.approx(1.0, abs=1e-9)


def test_edalat_not_nea(edalat):
    c = certify_ratio_bound(edalat, Base(), 1, condition="NEA")
    assert c.refuted and c.witness_ratio >= 7 / 6 - 1e-9


def test_uniform_ca(uniform):
    c = certify_ratio_bound(uniform, Base(), 1)
    assert c.certified and c.rate_bound == pytest.approx(5 / 12, abs=1e-9)
    assert c.to_dict()["mode"] == "Padded" and "evidence_only" not in c.to_dict()


def test_sampled_certificate_is_evidence_only(uniform):
    d = certify_ratio_bound(uniform, Base(), 1, soundness=SAMPLED).to_dict()
    assert d["evidence_only"] is True and d["mode"] == "Sampled"


def test_rotations_not_ca(rotations):
    c = certify_ratio_bound(rotations, Base(), 1, grid=GridParams(resolution=64))
    assert c.refuted and c.witness_ratio == pytest.approx(1.0, abs=1e-12)
    nea = certify_ratio_bound(rotations, Base(), 1, grid=GridParams(resolution=64), condition="NEA")
    assert nea.certified


def test_bad_region(drift):
    with pytest.raises(InputError):
        certify_ratio_bound(drift, Base(), 1, ((0.0, 3.0), (0.0, 1.0)))


def test_grid_params_validation():
    with pytest.raises(InputError):
        GridParams(resolution=4)
    with pytest.raises(InputError):
        GridParams(band=0.0)


def test_depth_cap(circle):
    with pytest.raises(CapExceededError):
        certify_ratio_bound(circle, Base(), 30)


# -- searches -----------------------------------------------------------------

def test_search_k_uniform(uniform):
    k, lam, cert = search_k_eca(uniform, Base(), 4, GridParams(resolution=64))
    assert k == 1 and lam <= 0.5 + 1e-6 and cert.certified


def test_search_k_rotations(rotations):
    assert search_k_eca(rotations, Base(), 8, GridParams(resolution=32)) is None


def test_search_alpha_single_map(half_map):
    assert search_alpha(half_map) == (1.0, 0.5)


def test_search_alpha_rotations(rotations):
    assert search_alpha(rotations) is None


# root of (3^-a + 2^a)/2 = 1 - margin, by Brent's method
EDALAT_ALPHA = 0.5179621151344986


def test_search_alpha_edalat(edalat):
    a, phi = search_alpha(edalat)
    oracle = brentq(lambda t: 0.5 * (3.0**-t + 2.0**t) - (1 - MARGIN), 0.3, 1.0, xtol=1e-15)
    assert a == pytest.approx(oracle, abs=1e-12)
    assert a == pytest.approx(EDALAT_ALPHA, abs=1e-12)
    assert phi <= 1 - MARGIN + 1e-15


# -- log ratio ----------------------------------------------------------------

def test_edalat_log_ca(edalat):
    c = certify_log_ratio_bound(edalat)
    assert c.certified
    assert c.rate_bound <= 0.5 * math.log(2 / 3) + 1e-9
    assert c.rate_bound <= math.log(0.82)


def test_rotations_log_bound(rotations):
    c = certify_log_ratio_bound(rotations, grid=GridParams(resolution=64))
    assert c.rate_bound == pytest.approx(0.0, abs=1e-12) and not c.certified


def test_jensen_log_below_ca(uniform):
    ca = certify_ratio_bound(uniform, Base(), 1)
    lg = certify_log_ratio_bound(uniform)
    assert lg.certified and lg.rate_bound <= math.log(ca.rate_bound) + 1e-12


def test_epsilon_local_log(edalat):
    c = certify_log_ratio_bound(edalat, epsilon=0.05)
    assert c.condition.startswith("epsLocalLogCA") and c.certified


def test_log_needs_power_metric(uniform):
    from ifsca.adapt import eca_metric

    with pytest.raises(InputError):
        certify_log_ratio_bound(uniform, eca_metric(uniform, Base(), 2, 0.5))


# -- local profiles -----------------------------------------------------------

def test_local_profile_rotations(rotations):
    cs = check_local_contraction_profile(rotations, Base(), [0.1, 0.5, 0.9], 6)
    assert all(c.refuted for c in cs)
    assert lcws_from_profile(cs).refuted


def test_local_profile_chain_rule(circle):
    cs = check_local_contraction_profile(circle, Power(Base(), 0.5), [0.1, 0.3, 0.77], 3)
    for c in cs:
        smallest = [r[-1] for r in c.extras["ratios"]]
        assert np.allclose(smallest, c.extras["derivative_limits"], rtol=1e-8)


def test_local_profile_uniform(uniform):
    cs = check_local_contraction_profile(uniform, Base(), [0.2, 0.5], 2)
    assert all(c.certified for c in cs)
    assert lcws_from_profile(cs).certified


def test_local_profile_skips_breakpoints(two_arcs):
    # 0.25 is a breakpoint of f_1: the derivative limit there is undefined and recorded as skipped
    cs = check_local_contraction_profile(two_arcs.system, Base(), [0.25], 1)
    assert cs[0].extras["derivative_breakpoints_skipped"] == 1


# -- pairwise LECA --------------------------------------------------------------

def test_leca_uniform(uniform):
    rng = np.random.default_rng(0)
    res = check_leca_pairs(uniform, Base(), rng.random((30, 2)), 3)
    assert all(r["ell"] == 1 for r in res)


def test_leca_rotations(rotations):
    res = check_leca_pairs(rotations, Base(), [(0.1, 0.3), (0.5, 0.9)], 10)
    assert all(r["ell"] is None for r in res)


@pytest.mark.slow
def test_leca_circle(circle):
    rng = np.random.default_rng(0)
    res = check_leca_pairs(circle, Base(), rng.random((100, 2)), 200, mc_budget=20_000, seed=1)
    assert all(r["ell"] is not None for r in res)
    # pairs near the repelling point need steps past exact enumeration
    assert any(r["mode"] == "MonteCarlo" for r in res)


def test_leca_cap_without_mc(circle):
    with pytest.raises(CapExceededError):
        check_leca_pairs(circle, Base(), [(0.1, 0.2)], 40)


# -- growth exponent ----------------------------------------------------------

def test_growth_uniform(uniform):
    assert estimate_growth_exponent(uniform) <= math.log(0.5) + 1e-9


def test_growth_rotations(rotations):
    assert estimate_growth_exponent(rotations) == pytest.approx(0.0, abs=1e-12)


def test_growth_circle_trend(circle):
    vals = [estimate_growth_exponent(circle, Base(), n) for n in (2, 4, 6, 8, 10)]
    assert vals[-1] < 0
    assert all(b < a for a, b in zip(vals, vals[1:]))
