import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ifsca.adapt import eca_metric
from ifsca.errors import ConfigurationError, DomainError, InputError
from ifsca.space import (Base, EcaSum, MetricExpr, Power, SpaceSpec, dist, metric_from_node,
                         validate_metric_axioms)

CIRCLE = SpaceSpec.circle()
UNIT = SpaceSpec.interval(0.0, 1.0)


def test_circle_wraps():
    assert dist(CIRCLE, Base(), 0.1, 0.9) == pytest.approx(0.2, abs=1e-15)


def test_power_half():
    assert dist(CIRCLE, Power(Base(), 0.5), 0.0, 0.25) == pytest.approx(0.5, abs=1e-15)


@pytest.mark.parametrize("metric", [Base(), Power(Base(), 0.3), Power(Power(Base(), 0.5), 0.5)])
@pytest.mark.parametrize("space", [CIRCLE, UNIT])
def test_diagonal_is_zero(space, metric):
    assert dist(space, metric, 0.37, 0.37) == 0.0


def test_canonical_circle_points():
    x = CIRCLE.canon(np.array([-0.25, 1.0, 2.75, 0.5]))
    assert np.allclose(x, [0.75, 0.0, 0.75, 0.5])
    assert np.all((x >= 0) & (x < 1))


def test_interval_rejects_outside_points():
    with pytest.raises(DomainError):
        UNIT.canon(1.5)


def test_interval_bounds_ordered():
    with pytest.raises(InputError):
        SpaceSpec.interval(1.0, 1.0)


def test_power_exponent_range():
    for a in (0.0, -0.1, 1.5):
        with pytest.raises(InputError):
            Power(Base(), a)


def test_power_one_is_inner():
    xs, ys = np.random.default_rng(0).random((2, 100))
    assert np.array_equal(Power(Base(), 1.0).evaluate(CIRCLE, xs, ys), Base().evaluate(CIRCLE, xs, ys))


def test_unbound_metric_is_configuration_error():
    m = EcaSum(None, Base(), 2, 0.5)
    with pytest.raises(ConfigurationError):
        m.evaluate(UNIT, np.array([0.1]), np.array([0.2]))


def test_eca_k1_equals_inner(uniform):
    xs, ys = np.random.default_rng(1).random((2, 200))
    m = eca_metric(uniform, Base(), 1, 0.5)
    assert np.allclose(m.evaluate(uniform.space, xs, ys), np.abs(xs - ys), atol=1e-12, rtol=0)


def test_eca_strong_equivalence_bracket(circle):
    k, lam = 3, 0.9
    m = eca_metric(circle, Base(), k, lam)
    rng = np.random.default_rng(2)
    xs, ys = rng.random((2, 300))
    d = circle.space.dist(xs, ys)
    r = m.evaluate(circle.space, xs, ys) / d
    L = max(circle.lipschitz_data().constants)
    upper = 1.0 + sum(lam ** (-j / k) * L**j for j in range(1, k))
    assert r.min() >= 1.0 - 1e-12
    assert r.max() <= upper + 1e-12


def test_axioms_circle_base():
    pts = np.arange(64) / 64
    assert validate_metric_axioms(CIRCLE, Base(), pts, 1e-12) == []


def test_axioms_interval_sqrt():
    pts = np.linspace(0, 1, 64)
    assert validate_metric_axioms(UNIT, Power(Base(), 0.5), pts) == []


class _Squared(MetricExpr):
    """Test double: d^2 breaks the triangle inequality."""

    node = "squared"

    def evaluate(self, space, xs, ys):
        return space.dist(xs, ys) ** 2

    def bracket(self, space, xs, ys):
        v = self.evaluate(space, xs, ys)
        return v, v


class _Negative(_Squared):
    def evaluate(self, space, xs, ys):
        return space.dist(xs, ys) - 0.5 * np.abs(np.sin(7 * np.asarray(xs) * np.asarray(ys)))


def test_axioms_report_triangle_violation():
    bad = validate_metric_axioms(UNIT, _Squared(), np.linspace(0, 1, 16))
    assert any(v.kind == "triangle" for v in bad)


def test_axioms_report_negative_values():
    bad = validate_metric_axioms(UNIT, _Negative(), np.linspace(0, 1, 16))
    assert {v.kind for v in bad} & {"nonnegativity", "triangle"}


def test_axioms_need_three_points():
    with pytest.raises(InputError):
        validate_metric_axioms(UNIT, Base(), [0.1, 0.1, 0.2])


@settings(max_examples=200, deadline=None)
@given(st.floats(0, 1, exclude_max=True), st.floats(0, 1, exclude_max=True), st.floats(0, 1, exclude_max=True),
       st.floats(0.05, 1.0))
def test_power_triangle_property(x, y, z, a):
    m = Power(Base(), a)
    d = lambda u, v: dist(CIRCLE, m, u, v)  # noqa: E731
    assert d(x, z) <= d(x, y) + d(y, z) + 1e-12
    assert d(x, y) <= 0.5**a + 1e-15


def test_node_roundtrip(circle):
    m = eca_metric(circle, Power(Base(), 0.5), 3, 0.8)
    back = metric_from_node(m.to_node({"sys": circle}), {"sys": circle})
    xs, ys = np.random.default_rng(3).random((2, 50))
    assert np.array_equal(m.evaluate(circle.space, xs, ys), back.evaluate(circle.space, xs, ys))


def test_unknown_node():
    with pytest.raises(InputError):
        metric_from_node({"node": "mystery"})


def test_space_dict_roundtrip():
    for s in (CIRCLE, SpaceSpec.interval(-1.0, 2.5)):
        assert SpaceSpec.from_dict(s.to_dict()) == s
        assert s.diameter == (0.5 if s.is_circle else 3.5)


def test_circle_distance_bounded():
    xs, ys = np.random.default_rng(4).random((2, 1000))
    d = CIRCLE.dist(xs, ys)
    assert d.max() <= 0.5 and math.isclose(float(CIRCLE.dist(0.0, 0.5)), 0.5)
