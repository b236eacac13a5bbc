"""Ambient spaces and composable metric expressions."""
from __future__ import annotations

import base64
import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .errors import ConfigurationError, DomainError, InputError


@dataclass(frozen=True)
class SpaceSpec:
    """The unit circle (points in [0, 1)) or a closed interval [lo, hi]."""

    kind: str
    lo: float = 0.0
    hi: float = 1.0

    def __post_init__(self):
        if self.kind not in ("circle", "interval"):
            raise InputError(f"unknown space kind {self.kind!r}")
        if self.kind == "circle":
            object.__setattr__(self, "lo", 0.0)
            object.__setattr__(self, "hi", 1.0)
        elif not self.lo < self.hi:
            raise InputError("interval bounds need lo < hi")

    @classmethod
    def circle(cls) -> "SpaceSpec":
        return cls("circle")

    @classmethod
    def interval(cls, lo: float, hi: float) -> "SpaceSpec":
        return cls("interval", float(lo), float(hi))

    @property
    def is_circle(self) -> bool:
        return self.kind == "circle"

    @property
    def diameter(self) -> float:
        return 0.5 if self.is_circle else self.hi - self.lo

    def canon(self, x):
        """Canonical representative; raises DomainError outside an interval."""
        arr = np.asarray(x, dtype=float)
        if self.is_circle:
            out = arr - np.floor(arr)
            out = np.where(out >= 1.0, 0.0, out)
        else:
            if np.any((arr < self.lo) | (arr > self.hi)) or np.any(np.isnan(arr)):
                raise DomainError(f"point outside [{self.lo}, {self.hi}]")
            out = arr
        return float(out) if out.ndim == 0 else out

    def dist(self, xs, ys):
        t = np.abs(np.asarray(xs, dtype=float) - np.asarray(ys, dtype=float))
        if self.is_circle:
            t = np.minimum(t, 1.0 - t)
        return t

    def to_dict(self) -> dict:
        if self.is_circle:
            return {"kind": "circle"}
        return {"kind": "interval", "bounds": [self.lo, self.hi]}

    @classmethod
    def from_dict(cls, d: dict) -> "SpaceSpec":
        if d.get("kind") == "circle":
            return cls.circle()
        if d.get("kind") == "interval":
            lo, hi = d["bounds"]
            return cls.interval(lo, hi)
        raise InputError(f"unknown space kind {d.get('kind')!r}")


# ---------------------------------------------------------------------------
# Linear structure shared by the adapted metrics.
#
# Base, Power(Base) and the sup-metric generate "families" of step profiles
# F_j(x, y) = E(Z_j) for j = 0, 1, ...  The weighted-sum and series metrics are
# finite linear combinations sum_i c_i F_{i+j}, so one enumeration to the
# deepest index serves every shift j at once.


@dataclass(frozen=True)
class InvariantArc:
    """An arc [lo, hi] mapped into itself by every map, contracting distances by
    a factor between ``r_low`` and ``r_up`` per step."""

    lo: float
    hi: float
    r_up: float
    r_low: float = 0.0

    def to_dict(self) -> dict:
        return {"lo": self.lo, "hi": self.hi, "r_up": self.r_up, "r_low": self.r_low}


@dataclass(frozen=True)
class PsiFamily:
    alpha: float
    system: Any = None


@dataclass(frozen=True)
class SupFamily:
    alpha: float
    system: Any
    depth: int
    policy: str
    invariant: InvariantArc | None
    w_min: float


@dataclass(frozen=True)
class Basis:
    family: Any
    coeffs: tuple
    tails: tuple = ()  # (coef, rate) pairs: upper slack at shift j is sum coef * rate**j

    def tail(self, j: int) -> float:
        return sum(c * r**j for c, r in self.tails)


def _bind(family, system):
    if family.system is None:
        if isinstance(family, PsiFamily):
            return PsiFamily(family.alpha, system)
    elif system is not None and family.system is not system and family.system != system:
        return None
    return family


class MetricExpr:
    """A metric (or pseudometric) evaluated on arrays of point pairs."""

    node = ""

    def evaluate(self, space: SpaceSpec, xs, ys) -> np.ndarray:
        lo, hi = self.bracket(space, xs, ys)
        return 0.5 * (lo + hi)

    def bracket(self, space: SpaceSpec, xs, ys):
        v = self.evaluate(space, xs, ys)
        return v, v

    def basis(self) -> Basis | None:
        return None

    def is_exact(self) -> bool:
        return True

    def to_node(self, refs: dict | None = None) -> dict:
        raise NotImplementedError

    def _profile(self, xs, ys, depth=0):
        from .expect import metric_profile

        system = getattr(self, "system", None)
        if system is None:
            raise ConfigurationError(f"{self.node} metric is not bound to a system")
        return metric_profile(system, self, xs, ys, depth)


@dataclass(frozen=True)
class Base(MetricExpr):
    node = "base"

    def evaluate(self, space, xs, ys):
        return space.dist(xs, ys)

    def bracket(self, space, xs, ys):
        v = space.dist(xs, ys)
        return v, v

    def basis(self):
        return Basis(PsiFamily(1.0), (1.0,))

    def to_node(self, refs=None):
        return {"node": "base"}


@dataclass(frozen=True)
class Power(MetricExpr):
    inner: MetricExpr
    alpha: float
    node = "power"

    def __post_init__(self):
        if not 0.0 < self.alpha <= 1.0:
            raise InputError("power exponent must lie in (0, 1]")

    def bracket(self, space, xs, ys):
        lo, hi = self.inner.bracket(space, xs, ys)
        if self.alpha == 1.0:
            return lo, hi
        return np.power(lo, self.alpha), np.power(hi, self.alpha)

    def evaluate(self, space, xs, ys):
        if isinstance(self.inner, Base):
            v = space.dist(xs, ys)
            return v if self.alpha == 1.0 else np.power(v, self.alpha)
        lo, hi = self.bracket(space, xs, ys)
        return 0.5 * (lo + hi)

    def is_exact(self):
        return self.inner.is_exact()

    def basis(self):
        b = self.inner.basis()
        if b is None:
            return None
        if self.alpha == 1.0:
            return b
        if isinstance(b.family, PsiFamily) and b.family.system is None and b.coeffs == (1.0,):
            return Basis(PsiFamily(b.family.alpha * self.alpha), (1.0,))
        return None

    def to_node(self, refs=None):
        return {"node": "power", "alpha": self.alpha, "inner": self.inner.to_node(refs)}


def _sysref(system, refs):
    if system is None:
        return None
    if refs:
        for name, s in refs.items():
            if s is system:
                return name
    return "system"


def _convolve_basis(inner: Basis, weights, system) -> Basis | None:
    fam = _bind(inner.family, system)
    if fam is None:
        return None
    c = np.convolve(np.asarray(inner.coeffs, dtype=float), np.asarray(weights, dtype=float))
    tails = tuple((coef * float(sum(w * rate**i for i, w in enumerate(weights))), rate) for coef, rate in inner.tails)
    return Basis(fam, tuple(float(v) for v in c), tails)


@dataclass(frozen=True, eq=False)
class EcaSum(MetricExpr):
    """d(x,y) + sum_{j<k} lam^{-j/k} E(Z_j) for the inner metric."""

    system: Any
    inner: MetricExpr
    k: int
    lam: float
    node = "eca"

    def __post_init__(self):
        if int(self.k) != self.k or self.k < 1:
            raise InputError("k must be a positive integer")
        if not 0.0 < self.lam < 1.0:
            raise InputError("lambda must lie in (0, 1)")

    @property
    def weights(self):
        return [self.lam ** (-j / self.k) for j in range(self.k)]

    def bracket(self, space, xs, ys):
        if self.k == 1:
            return self.inner.bracket(space, xs, ys)
        lo, hi = self._profile(xs, ys, 0)
        return lo[:, 0], hi[:, 0]

    def is_exact(self):
        return self.inner.is_exact()

    def basis(self):
        b = self.inner.basis()
        return None if b is None else _convolve_basis(b, self.weights, self.system)

    def to_node(self, refs=None):
        return {"node": "eca", "system": _sysref(self.system, refs), "k": int(self.k),
                "lambda": self.lam, "inner": self.inner.to_node(refs)}


@dataclass(frozen=True, eq=False)
class GeomSeries(MetricExpr):
    """Truncated series sum_{n<=n_max} (q/lam)^n E(Z_n) with a certified tail."""

    system: Any
    inner: MetricExpr
    lam: float
    q: float
    C: float
    n_max: int
    node = "geom"

    def __post_init__(self):
        if not 0.0 < self.lam < 1.0:
            raise InputError("lambda must lie in (0, 1)")
        if not self.lam < self.q < 1.0:
            raise InputError("q must satisfy lambda < q < 1")
        if self.C <= 0 or self.n_max < 0:
            raise InputError("C must be positive and n_max nonnegative")

    @property
    def C_tail(self) -> float:
        return self.C * self.q ** (self.n_max + 1) / (1.0 - self.q)

    def bracket(self, space, xs, ys):
        lo, hi = self._profile(xs, ys, 0)
        return lo[:, 0], hi[:, 0]

    def is_exact(self):
        return False

    def basis(self):
        b = self.inner.basis()
        if b is None:
            return None
        w = [(self.q / self.lam) ** n for n in range(self.n_max + 1)]
        out = _convolve_basis(b, w, self.system)
        if out is None:
            return None
        return Basis(out.family, out.coeffs, out.tails + ((self.C_tail, self.lam),))

    def to_node(self, refs=None):
        return {"node": "geom", "system": _sysref(self.system, refs), "lambda": self.lam, "q": self.q,
                "C": self.C, "n_max": int(self.n_max), "inner": self.inner.to_node(refs)}


TAIL_POLICIES = ("frozen", "lipschitz_cap")


@dataclass(frozen=True, eq=False)
class SupMetric(MetricExpr):
    """E(sup_n Z_n) for the inner metric (Base or a power of it)."""

    system: Any
    inner: MetricExpr
    depth: int
    tail_policy: str = "frozen"
    invariant: InvariantArc | None = None
    w_min: float = 1e-15
    node = "sup"

    def __post_init__(self):
        if self.tail_policy not in TAIL_POLICIES:
            raise InputError(f"tail policy must be one of {TAIL_POLICIES}")
        if self.tail_policy == "frozen" and self.invariant is None:
            raise ConfigurationError("frozen tail policy needs a declared invariant interval")
        b = self.inner.basis()
        if b is None or not isinstance(b.family, PsiFamily) or b.coeffs != (1.0,) or b.family.system is not None:
            raise InputError("sup metric supports Base or Power(Base) as inner metric")
        if self.depth < 0:
            raise InputError("depth must be nonnegative")

    @property
    def alpha(self) -> float:
        return self.inner.basis().family.alpha

    def bracket(self, space, xs, ys):
        lo, hi = self._profile(xs, ys, 0)
        return lo[:, 0], hi[:, 0]

    def is_exact(self):
        return False

    def basis(self):
        inv = self.invariant if self.tail_policy == "frozen" else None
        return Basis(SupFamily(self.alpha, self.system, int(self.depth), self.tail_policy, inv, self.w_min), (1.0,))

    def to_node(self, refs=None):
        out = {"node": "sup", "system": _sysref(self.system, refs), "depth": int(self.depth),
               "tail_policy": self.tail_policy, "w_min": self.w_min, "inner": self.inner.to_node(refs)}
        if self.invariant is not None:
            out["invariant"] = self.invariant.to_dict()
        return out


@dataclass(frozen=True, eq=False)
class Expected(MetricExpr):
    """The pseudometric (x, y) -> E(Z_n) of the inner metric."""

    system: Any
    inner: MetricExpr
    n: int
    node = "expected"

    def bracket(self, space, xs, ys):
        lo, hi = self._profile(xs, ys, 0)
        return lo[:, 0], hi[:, 0]

    def is_exact(self):
        return self.inner.is_exact()

    def basis(self):
        b = self.inner.basis()
        if b is None:
            return None
        return _convolve_basis(b, [0.0] * self.n + [1.0], self.system)

    def to_node(self, refs=None):
        return {"node": "expected", "system": _sysref(self.system, refs), "n": int(self.n),
                "inner": self.inner.to_node(refs)}


@dataclass(frozen=True, eq=False)
class EmpiricalGap(MetricExpr):
    """min(mu[x,y], mu[y,x]) for an empirical measure on the circle."""

    measure: Any
    node = "gap"

    def evaluate(self, space, xs, ys):
        return self.measure.gap(xs, ys)

    def bracket(self, space, xs, ys):
        v = self.measure.gap(xs, ys)
        return v, v

    def to_node(self, refs=None):
        return {"node": "gap", "measure": self.measure.to_dict()}


def metric_from_node(d: dict, systems: dict | None = None) -> MetricExpr:
    """Rebuild a metric tree; ``systems`` maps reference names to IfsSystem values."""
    systems = systems or {}
    kind = d.get("node")

    def sys_of():
        ref = d.get("system")
        if ref is None:
            return None
        if isinstance(ref, dict):
            from .ifs import IfsSystem

            return IfsSystem.from_dict(ref)
        return systems.get(ref)

    if kind == "base":
        return Base()
    if kind == "power":
        return Power(metric_from_node(d["inner"], systems), float(d["alpha"]))
    if kind == "eca":
        return EcaSum(sys_of(), metric_from_node(d["inner"], systems), int(d["k"]), float(d["lambda"]))
    if kind == "geom":
        return GeomSeries(sys_of(), metric_from_node(d["inner"], systems), float(d["lambda"]), float(d["q"]),
                          float(d["C"]), int(d["n_max"]))
    if kind == "sup":
        inv = d.get("invariant")
        inv = InvariantArc(**inv) if inv else None
        return SupMetric(sys_of(), metric_from_node(d["inner"], systems), int(d["depth"]),
                         d.get("tail_policy", "frozen"), inv, float(d.get("w_min", 1e-15)))
    if kind == "expected":
        return Expected(sys_of(), metric_from_node(d["inner"], systems), int(d["n"]))
    if kind == "gap":
        from .adapt import EmpiricalMeasure

        return EmpiricalGap(EmpiricalMeasure.from_dict(d["measure"]))
    raise InputError(f"unknown metric node {kind!r}")


def encode_array(a: np.ndarray) -> str:
    return base64.b64encode(np.ascontiguousarray(a, dtype="<f8").tobytes()).decode("ascii")


def decode_array(s: str) -> np.ndarray:
    return np.frombuffer(base64.b64decode(s), dtype="<f8").copy()


def dist(space: SpaceSpec, metric: MetricExpr, x: float, y: float) -> float:
    """Metric value at a single pair."""
    x = space.canon(x)
    y = space.canon(y)
    if x == y:
        return 0.0
    return float(metric.evaluate(space, np.array([x]), np.array([y]))[0])


@dataclass(frozen=True)
class AxiomViolation:
    kind: str  # "symmetry" | "nonnegativity" | "diagonal" | "indiscernibles" | "triangle"
    points: tuple
    amount: float


def validate_metric_axioms(space: SpaceSpec, metric: MetricExpr, sample_points, tol: float = 1e-12,
                           definite: bool = True, max_report: int = 50) -> list[AxiomViolation]:
    """Check the metric axioms on all pairs and triples of the sample points.

    ``definite=False`` checks pseudometric axioms only.
    """
    pts = np.unique(space.canon(np.asarray(sample_points, dtype=float)))
    if pts.size < 3:
        raise InputError("need at least 3 distinct sample points")
    n = pts.size
    X, Y = np.meshgrid(pts, pts, indexing="ij")
    D = np.asarray(metric.evaluate(space, X.ravel(), Y.ravel()), dtype=float).reshape(n, n)
    out: list[AxiomViolation] = []

    def add(kind, idx, amount):
        if len(out) < max_report:
            out.append(AxiomViolation(kind, tuple(float(pts[i]) for i in idx), float(amount)))

    for i in range(n):
        if abs(D[i, i]) > tol:
            add("diagonal", (i,), D[i, i])
    for i, j in zip(*np.nonzero(D < -tol)):
        add("nonnegativity", (i, j), D[i, j])
    asym = np.abs(D - D.T)
    for i, j in zip(*np.nonzero(np.triu(asym > tol, 1))):
        add("symmetry", (i, j), asym[i, j])
    if definite:
        off = ~np.eye(n, dtype=bool)
        for i, j in zip(*np.nonzero(np.triu(off & (D <= tol), 1))):
            add("indiscernibles", (i, j), D[i, j])
    # triangle: D[i,k] <= D[i,j] + D[j,k]
    excess = D[:, None, :] - (D[:, :, None] + D[None, :, :])
    bad = np.argwhere(excess > tol * (1.0 + np.abs(D[:, None, :])))
    for i, j, k in bad[:max_report]:
        add("triangle", (i, j, k), excess[i, j, k])
    return out
