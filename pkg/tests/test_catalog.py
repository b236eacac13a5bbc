import math

import numpy as np
import pytest

from ifsca.catalog import (F0_KNOTS, F1_KNOTS, NAMES, TwoArcStructure, build_example, perturbed, two_arc_constants,
                           two_arc_system, verify_two_arc_axioms)
from ifsca.errors import InputError
from ifsca.ifs import AffinePieces, CircleSine, MinClamp, Rotation


def test_default_two_arc_axioms(two_arcs):
    rep = verify_two_arc_axioms(two_arcs.system, two_arcs.structure)
    assert rep.passed, rep.failed()
    assert [r.index for r in rep.results] == list(range(1, 8))
    assert rep.N == two_arcs.constants.N


def test_invariance_failure_names_axiom_3():
    # f_0 now sends 3/4 to 0.8, outside I
    xs, ys = F0_KNOTS
    sys = two_arc_system(0.5, (xs, ys[:3] + (0.8, 1.0)), F1_KNOTS)
    rep = verify_two_arc_axioms(sys, TwoArcStructure())
    assert 3 in [r.index for r in rep.failed()]
    bad = next(r for r in rep.failed() if r.index == 3)
    assert bad.witness is not None


def test_contraction_failure_names_axiom_5():
    sys = two_arc_system()
    rep = verify_two_arc_axioms(sys, perturbed(TwoArcStructure(), r=0.4))
    assert [r.index for r in rep.failed()] == [5]
    assert rep.failed()[0].witness["ratio"] > 0.4


def test_small_lipschitz_bound_names_axiom_7():
    rep = verify_two_arc_axioms(two_arc_system(), perturbed(TwoArcStructure(), c=2.0))
    assert 7 in [r.index for r in rep.failed()]


def test_build_rejects_broken_structure():
    with pytest.raises(InputError, match=r"\(5\)"):
        build_example("circle_two_arcs", {"structure": {"r": 0.4}})


def test_two_arc_constants_solve_the_constraint(two_arcs):
    # independent re-evaluation of the defining inequality at the chosen n and n - 1
    k, st = two_arcs.constants, two_arcs.structure
    p, r, c, a, N = 0.5, st.r, st.c, k.alpha, k.N
    assert r**k.ell * c < 1 <= r ** (k.ell - 1) * c
    q = c**a * p
    assert k.C == pytest.approx(c ** ((N + 1) * a) * (1 + 2 * q / (1 - q)), rel=1e-12)

    def lhs(n):
        return (r**k.ell * c) ** (n * a) + c ** (n * (k.ell + 1) * a) * p ** (n - N)

    assert lhs(k.n) < 1 / (2 * k.C)
    assert lhs(k.n - 1) >= 1 / (2 * k.C)
    assert k.esca_depth == (k.ell + 1) * k.n


def test_two_arc_constants_need_an_alpha():
    with pytest.raises(InputError):
        two_arc_constants(TwoArcStructure(), 0.5, 10_000, n_cap=10)


def test_edalat_maps(edalat):
    f0, f1 = edalat.maps
    assert isinstance(f0, AffinePieces) and f0.slopes == (1 / 3,)
    assert isinstance(f1, MinClamp) and f1.value == 1.0
    assert edalat.probs == (0.5, 0.5)
    xs = np.linspace(0, 1, 11)
    assert np.allclose(edalat.apply_map(1, xs), np.minimum(1, 2 * xs))


def test_drift_maps(drift):
    assert (drift.space.lo, drift.space.hi) == (0.0, 2.0)
    xs = np.linspace(0, 2, 13)
    assert np.allclose(drift.apply_map(0, xs), np.where(xs <= 1, xs / 3, xs - 2 / 3))
    assert np.allclose(drift.apply_map(1, xs), np.minimum(xs + 2 / 3, 2))
    assert drift.probs == (0.6, 0.4)


def test_circle_maps(circle):
    assert isinstance(circle.maps[0], CircleSine) and isinstance(circle.maps[1], Rotation)


def test_deterministic_build():
    for name in NAMES:
        a, b = build_example(name), build_example(name)
        assert a.system.to_dict() == b.system.to_dict()
        assert [e.to_dict() for e in a.expected] == [e.to_dict() for e in b.expected]


@pytest.mark.parametrize("name,params", [
    ("drift_example", {"p": 0.4}),
    ("circle_ns_rotation", {"a": 1.5}),
    ("circle_ns_rotation", {"theta": 0.5}),
    ("mystery", {}),
])
def test_params_out_of_range(name, params):
    with pytest.raises(InputError):
        build_example(name, params)


def test_expectation_lists():
    assert {e.prop for e in build_example("edalat_logca").expected} == {"logCA", "NEA", "search_alpha"}
    lam = build_example("drift_example", {"p": 0.75}).expected[2].note
    assert lam == f"lambda = {0.75 / 3 + 0.25:.6g}"
    assert len(build_example("circle_two_arcs").expected) == 7


def test_golden_rotation_default(circle):
    assert circle.maps[1].theta == pytest.approx((math.sqrt(5) - 1) / 2)
