"""Constructors for adapted metrics bound to a system."""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, InputError
from .space import (Base, EcaSum, EmpiricalGap, GeomSeries, InvariantArc, MetricExpr, Power, SpaceSpec, SupMetric,
                    decode_array, encode_array, metric_from_node)


@dataclass(frozen=True, eq=False)
class EmpiricalMeasure:
    """Pooled sample of a probability measure with CDF and arc-mass queries."""

    space: SpaceSpec
    samples: np.ndarray

    def __post_init__(self):
        s = np.sort(np.asarray(self.space.canon(np.asarray(self.samples, dtype=float)), dtype=float))
        if s.size == 0:
            raise InputError("empirical measure needs at least one sample")
        s.setflags(write=False)
        object.__setattr__(self, "samples", s)

    @property
    def n(self) -> int:
        return int(self.samples.size)

    def cdf(self, x):
        return np.searchsorted(self.samples, np.asarray(x, dtype=float), side="right") / self.n

    def arc_mass(self, x, y):
        """mu([x, y]); on the circle the arc runs counterclockwise from x to y."""
        fx, fy = self.cdf(x), self.cdf(y)
        if not self.space.is_circle:
            return np.abs(fy - fx)
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        return np.where(x <= y, fy - fx, 1.0 - fx + fy)

    def gap(self, xs, ys):
        xs = self.space.canon(np.asarray(xs, dtype=float))
        ys = self.space.canon(np.asarray(ys, dtype=float))
        m = self.arc_mass(xs, ys)
        if self.space.is_circle:
            m = np.minimum(m, 1.0 - m)
        return np.where(xs == ys, 0.0, m)

    def to_dict(self) -> dict:
        return {"space": self.space.to_dict(), "n": self.n, "samples_b64": encode_array(self.samples)}

    @classmethod
    def from_dict(cls, d: dict) -> "EmpiricalMeasure":
        return cls(SpaceSpec.from_dict(d["space"]), decode_array(d["samples_b64"]))


def power_metric(metric: MetricExpr, alpha: float) -> MetricExpr:
    return Power(metric, float(alpha))


def eca_metric(system, metric: MetricExpr, k: int, lam: float) -> MetricExpr:
    """d + sum_{j=1}^{k-1} lam^{-j/k} E(Z_j); CA with rate lam^{1/k} when the input is k-ECA with rate lam."""
    return EcaSum(system, metric, int(k), float(lam))


def geometric_series_metric(system, metric: MetricExpr, lam: float, q: float, C: float, n_max: int) -> MetricExpr:
    if not (lam < q < 1.0):
        raise InputError(f"q={q} must satisfy lambda={lam} < q < 1")
    return GeomSeries(system, metric, float(lam), float(q), float(C), int(n_max))


def ratio_range(system, metric: MetricExpr, xs, ys, reference: MetricExpr = Base()) -> tuple[float, float]:
    """Observed (min, max) of metric / reference over the off-diagonal pairs given.

    Only a measurement: a finite max here says nothing about the ratio being bounded.
    """
    from .expect import metric_profile

    xs, ys = np.asarray(xs, dtype=float), np.asarray(ys, dtype=float)
    keep = system.space.dist(xs, ys) > 0
    if not keep.any():
        raise InputError("ratio_range needs at least one off-diagonal pair")
    lo, hi = metric_profile(system, metric, xs[keep], ys[keep], 0)
    rlo, rhi = metric_profile(system, reference, xs[keep], ys[keep], 0)
    return float(np.min(lo[:, 0] / rhi[:, 0])), float(np.max(hi[:, 0] / rlo[:, 0]))


def sup_metric(system, metric: MetricExpr, depth: int, tail_policy: str = "frozen",
               invariant: InvariantArc | None = None, w_min: float = 1e-15) -> MetricExpr:
    return SupMetric(system, metric, int(depth), tail_policy, invariant, w_min)


@dataclass(frozen=True)
class SimParams:
    burn_in: int = 10_000
    samples: int = 1_000_000
    chains: int = 4
    seed: int = 0


def stationary_gap_metric(system, sim: SimParams = SimParams()) -> EmpiricalGap:
    """rho(x,y) = min(mu[x,y], mu[y,x]) with mu stationary for the inverse system."""
    from .dynamics import estimate_stationary_measure

    if not system.space.is_circle:
        raise ConfigurationError("the gap metric is defined for circle systems")
    try:
        inv = system.inverse()
    except (ConfigurationError, InputError) as e:
        raise ConfigurationError(f"system is not invertible: {e}") from e
    est = estimate_stationary_measure(inv, sim.burn_in, sim.samples, sim.chains, sim.seed)
    return EmpiricalGap(est.measure)


def export_metric(metric: MetricExpr, path, systems: dict | None = None) -> None:
    """Write the node tree (systems inlined unless named in ``systems``) as JSON."""
    node = metric.to_node(systems)
    if systems is None:
        node = _inline_systems(metric, node)
    Path(path).write_text(json.dumps(node, sort_keys=True, indent=1))


def _inline_systems(metric, node):
    sys_ = getattr(metric, "system", None)
    if sys_ is not None and "system" in node:
        node["system"] = sys_.to_dict()
    inner = getattr(metric, "inner", None)
    if inner is not None:
        node["inner"] = _inline_systems(inner, node["inner"])
    return node


def import_metric(path, systems: dict | None = None) -> MetricExpr:
    return metric_from_node(json.loads(Path(path).read_text()), systems)


__all__ = ["EmpiricalMeasure", "SimParams", "power_metric", "eca_metric", "geometric_series_metric", "sup_metric",
           "stationary_gap_metric", "export_metric", "import_metric", "Base"]
