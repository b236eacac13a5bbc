"""Maps, iterated function systems and word composition."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np

from .errors import BreakpointError, ConfigurationError, DomainError, InputError
from .space import SpaceSpec

Word = tuple  # sequence of symbols; the first symbol is applied first

_GRID_CHECK = 10_000


class MapSpec:
    """Common interface of the map families."""

    kind: str = ""

    def lipschitz(self) -> float:
        raise NotImplementedError

    def lipschitz_on(self, lo: float, hi: float) -> float:
        return self.lipschitz()

    def __call__(self, x):
        return self.evaluate(np.asarray(x, dtype=float))

    def to_dict(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class AffinePieces(MapSpec):
    """Piecewise affine map; piece j is ``slopes[j]*x + intercepts[j]`` on
    ``[breakpoints[j], breakpoints[j+1])``.

    On the circle the formula describes a lift and the result is taken mod 1.
    """

    breakpoints: tuple
    slopes: tuple
    intercepts: tuple
    kind: str = field(default="affine", init=False)

    def __post_init__(self):
        bp, sl, ic = self.breakpoints, self.slopes, self.intercepts
        if not (len(bp) == len(sl) == len(ic)) or len(bp) == 0:
            raise InputError("AffinePieces needs equal-length, non-empty breakpoint/slope/intercept lists")
        if any(b1 <= b0 for b0, b1 in zip(bp, bp[1:])):
            raise InputError("AffinePieces breakpoints must be strictly increasing")
        object.__setattr__(self, "breakpoints", tuple(float(b) for b in bp))
        object.__setattr__(self, "slopes", tuple(float(s) for s in sl))
        object.__setattr__(self, "intercepts", tuple(float(c) for c in ic))

    @classmethod
    def from_knots(cls, xs: Sequence[float], ys: Sequence[float]) -> "AffinePieces":
        """Linear interpolation through ``(xs[k], ys[k])``; the last knot only closes the final piece."""
        xs = [float(v) for v in xs]
        ys = [float(v) for v in ys]
        if len(xs) != len(ys) or len(xs) < 2:
            raise InputError("need at least two knots")
        slopes, icpts = [], []
        for x0, x1, y0, y1 in zip(xs, xs[1:], ys, ys[1:]):
            s = (y1 - y0) / (x1 - x0)
            slopes.append(s)
            icpts.append(y0 - s * x0)
        return cls(tuple(xs[:-1]), tuple(slopes), tuple(icpts))

    def piece_index(self, x):
        idx = np.searchsorted(np.asarray(self.breakpoints), x, side="right") - 1
        return np.clip(idx, 0, len(self.breakpoints) - 1)

    def evaluate(self, x):
        j = self.piece_index(x)
        return np.asarray(self.slopes)[j] * x + np.asarray(self.intercepts)[j]

    def derivative(self, x: float, circle: bool = False) -> float:
        j = int(self.piece_index(x))
        bp = self.breakpoints
        if x == bp[j]:
            left = j - 1 if j > 0 else (len(bp) - 1 if circle else None)
            if left is not None and self.slopes[left] != self.slopes[j]:
                raise BreakpointError(f"derivative undefined at breakpoint x={x}")
        return self.slopes[j]

    def lipschitz(self) -> float:
        return max(abs(s) for s in self.slopes)

    def lipschitz_on(self, lo: float, hi: float) -> float:
        bp = self.breakpoints + (math.inf,)
        vals = [abs(s) for s, a, b in zip(self.slopes, bp, bp[1:]) if b > lo and a < hi]
        return max(vals) if vals else self.lipschitz()

    def to_dict(self) -> dict:
        return {"family": "affine", "breakpoints": list(self.breakpoints),
                "slopes": list(self.slopes), "intercepts": list(self.intercepts)}


@dataclass(frozen=True)
class CircleSine(MapSpec):
    """x -> x + (a/2pi) sin(2 pi x) mod 1, an orientation preserving diffeomorphism for |a| < 1."""

    a: float
    kind: str = field(default="sine", init=False)

    def __post_init__(self):
        if not -1.0 < self.a < 1.0:
            raise InputError("CircleSine parameter a must lie in (-1, 1)")

    def evaluate(self, x):
        return x + self.a / (2 * math.pi) * np.sin(2 * math.pi * x)

    def derivative(self, x: float, circle: bool = True) -> float:
        return 1.0 + self.a * math.cos(2 * math.pi * x)

    def lipschitz(self) -> float:
        return 1.0 + abs(self.a)

    def to_dict(self) -> dict:
        return {"family": "sine", "a": self.a}


@dataclass(frozen=True)
class CircleSineInverse(MapSpec):
    """Inverse of :class:`CircleSine`, evaluated by safeguarded Newton iteration."""

    a: float
    kind: str = field(default="sine_inverse", init=False)

    def evaluate(self, y):
        from . import kernels

        return kernels.sine_inverse_np(np.asarray(y, dtype=float), self.a)

    def derivative(self, x: float, circle: bool = True) -> float:
        z = float(self.evaluate(np.array([x]))[0])
        return 1.0 / (1.0 + self.a * math.cos(2 * math.pi * z))

    def lipschitz(self) -> float:
        return 1.0 / (1.0 - abs(self.a))

    def to_dict(self) -> dict:
        return {"family": "sine_inverse", "a": self.a}


@dataclass(frozen=True)
class Rotation(MapSpec):
    theta: float
    kind: str = field(default="rotation", init=False)

    def evaluate(self, x):
        return x + self.theta

    def derivative(self, x: float, circle: bool = True) -> float:
        return 1.0

    def lipschitz(self) -> float:
        return 1.0

    def to_dict(self) -> dict:
        return {"family": "rotation", "theta": self.theta}


def _clamp_affine(inner: AffinePieces, value: float, upper: bool) -> AffinePieces:
    """Rewrite min(inner, value) (upper=True) or max(inner, value) as affine pieces."""
    bps = list(inner.breakpoints) + [math.inf]
    knots = []  # (start, slope, intercept)
    for j, (s, c) in enumerate(zip(inner.slopes, inner.intercepts)):
        a, b = bps[j], bps[j + 1]
        cuts = [a]
        if s != 0.0:
            xc = (value - c) / s
            if a < xc < b:
                cuts.append(xc)
        for k, start in enumerate(cuts):
            end = cuts[k + 1] if k + 1 < len(cuts) else b
            probe = start + 1.0 if math.isinf(end) else 0.5 * (start + end)
            y = s * probe + c
            clamped = y > value if upper else y < value
            knots.append((start, 0.0, value) if clamped else (start, s, c))
    merged = []
    for start, s, c in knots:
        if merged and merged[-1][1] == s and merged[-1][2] == c:
            continue
        merged.append((start, s, c))
    return AffinePieces(tuple(k[0] for k in merged), tuple(k[1] for k in merged), tuple(k[2] for k in merged))


@dataclass(frozen=True)
class MinClamp(MapSpec):
    """x -> min(inner(x), value): saturation from above."""

    inner: MapSpec
    value: float
    kind: str = field(default="min_clamp", init=False)

    @cached_property
    def affine(self) -> AffinePieces:
        if not isinstance(self.inner, AffinePieces):
            raise ConfigurationError("clamps are supported around AffinePieces only")
        return _clamp_affine(self.inner, self.value, upper=True)

    def evaluate(self, x):
        return np.minimum(self.inner.evaluate(x), self.value)

    def derivative(self, x: float, circle: bool = False) -> float:
        return self.affine.derivative(x, circle)

    def lipschitz(self) -> float:
        return self.affine.lipschitz()

    def lipschitz_on(self, lo, hi):
        return self.affine.lipschitz_on(lo, hi)

    def to_dict(self) -> dict:
        return {"family": "min_clamp", "value": self.value, "inner": self.inner.to_dict()}


@dataclass(frozen=True)
class MaxClamp(MinClamp):
    """x -> max(inner(x), value): saturation from below."""

    kind: str = field(default="max_clamp", init=False)

    @cached_property
    def affine(self) -> AffinePieces:
        if not isinstance(self.inner, AffinePieces):
            raise ConfigurationError("clamps are supported around AffinePieces only")
        return _clamp_affine(self.inner, self.value, upper=False)

    def evaluate(self, x):
        return np.maximum(self.inner.evaluate(x), self.value)

    def to_dict(self) -> dict:
        return {"family": "max_clamp", "value": self.value, "inner": self.inner.to_dict()}


def map_from_dict(d: dict) -> MapSpec:
    fam = d.get("family")
    if fam == "affine":
        if "knots" in d:
            xs, ys = zip(*d["knots"])
            return AffinePieces.from_knots(xs, ys)
        return AffinePieces(tuple(d["breakpoints"]), tuple(d["slopes"]), tuple(d["intercepts"]))
    if fam == "sine":
        return CircleSine(float(d["a"]))
    if fam == "sine_inverse":
        return CircleSineInverse(float(d["a"]))
    if fam == "rotation":
        return Rotation(float(d["theta"]))
    if fam in ("min_clamp", "max_clamp"):
        cls = MinClamp if fam == "min_clamp" else MaxClamp
        return cls(map_from_dict(d["inner"]), float(d["value"]))
    raise InputError(f"unknown map family {fam!r}")


def _normal_form(m: MapSpec) -> MapSpec:
    return m.affine if isinstance(m, MinClamp) else m


def _affine_inverse(m: AffinePieces) -> AffinePieces:
    """Inverse of an increasing degree-one circle lift given as affine pieces."""
    if any(s <= 0 for s in m.slopes):
        raise ConfigurationError("affine circle map is not invertible (non-increasing piece)")
    xs = list(m.breakpoints) + [1.0]
    ys = [float(m.evaluate(np.array([x]))[0]) for x in m.breakpoints]
    ys.append(ys[0] + 1.0)
    # Knots of the inverse lift, tiled over three periods then cut to [0, 1].
    kx, ky = [], []
    for shift in (-1.0, 0.0, 1.0):
        for x, y in zip(xs[:-1], ys[:-1]):
            kx.append(y + shift)
            ky.append(x + shift)
    order = np.argsort(kx)
    kx = np.asarray(kx)[order]
    ky = np.asarray(ky)[order]
    inner = (kx > 0.0) & (kx < 1.0)
    px = np.concatenate([[0.0], kx[inner], [1.0]])
    py = np.concatenate([[np.interp(0.0, kx, ky)], ky[inner], [np.interp(1.0, kx, ky)]])
    return AffinePieces.from_knots(px, py)


@dataclass(frozen=True)
class IfsSystem:
    """N maps on a space with a probability vector."""

    space: SpaceSpec
    maps: tuple
    probs: tuple
    name: str = ""
    allow_degenerate: bool = False

    def __post_init__(self):
        maps = tuple(self.maps)
        probs = tuple(float(p) for p in self.probs)
        object.__setattr__(self, "maps", maps)
        object.__setattr__(self, "probs", probs)
        if len(maps) != len(probs):
            raise InputError("maps and probs must have the same length")
        if not self.allow_degenerate:
            if len(maps) < 2:
                raise InputError("an IFS needs at least two maps")
            if any(p <= 0 for p in probs):
                raise InputError("probabilities must be strictly positive")
        elif len(maps) < 1 or any(p < 0 for p in probs):
            raise InputError("probabilities must be nonnegative and maps non-empty")
        if abs(sum(probs) - 1.0) > 1e-12:
            raise InputError(f"probabilities sum to {sum(probs)!r}, not 1")
        for i, m in enumerate(maps):
            self._check_into_space(i, m)

    def _check_into_space(self, i: int, m: MapSpec) -> None:
        if self.space.is_circle:
            return
        lo, hi = self.space.lo, self.space.hi
        grid = np.linspace(lo, hi, _GRID_CHECK)
        nf = _normal_form(m)
        if isinstance(nf, AffinePieces):
            extra = [b for b in nf.breakpoints if lo <= b <= hi]
            grid = np.concatenate([grid, extra])
        vals = np.asarray(m.evaluate(grid), dtype=float)
        tol = 1e-12 * max(1.0, abs(hi - lo))
        bad = np.nonzero((vals < lo - tol) | (vals > hi + tol))[0]
        if bad.size:
            x = grid[bad[0]]
            raise InputError(f"map {i} sends x={x} to {vals[bad[0]]}, outside [{lo}, {hi}]")

    @property
    def n_maps(self) -> int:
        return len(self.maps)

    @cached_property
    def packed(self):
        from .kernels import pack_system

        return pack_system(self)

    def apply_map(self, i: int, x):
        from . import kernels

        return kernels.map_np(self.packed, i, np.asarray(x, dtype=float))

    def apply_word(self, word: Sequence[int], x: float) -> float:
        return apply_word(self, word, x)

    def lipschitz_data(self):
        return lipschitz_data(self)

    def inverse(self) -> "IfsSystem":
        """The IFS of inverse maps (circle homeomorphisms only)."""
        if not self.space.is_circle:
            raise ConfigurationError("inverse systems are supported on the circle only")
        inv = []
        for m in self.maps:
            nf = _normal_form(m)
            if isinstance(nf, Rotation):
                inv.append(Rotation(-nf.theta))
            elif isinstance(nf, CircleSine):
                inv.append(CircleSineInverse(nf.a))
            elif isinstance(nf, CircleSineInverse):
                inv.append(CircleSine(nf.a))
            elif isinstance(nf, AffinePieces):
                inv.append(_affine_inverse(nf))
            else:
                raise ConfigurationError(f"map family {nf.kind} is not invertible")
        return IfsSystem(self.space, tuple(inv), self.probs, name=f"{self.name}^-1", allow_degenerate=self.allow_degenerate)

    def to_dict(self) -> dict:
        return {"space": self.space.to_dict(), "maps": [m.to_dict() for m in self.maps],
                "probs": list(self.probs), "name": self.name}

    @classmethod
    def from_dict(cls, d: dict) -> "IfsSystem":
        return cls(SpaceSpec.from_dict(d["space"]), tuple(map_from_dict(m) for m in d["maps"]),
                   tuple(d["probs"]), name=d.get("name", ""))


def word_weight(system: IfsSystem, word: Sequence[int]) -> float:
    w = 1.0
    for s in word:
        w *= system.probs[s]
    return w


def apply_word(system: IfsSystem, word: Sequence[int], x: float) -> float:
    """Compose the maps of ``word`` left to right: word[0] is applied first."""
    x = system.space.canon(x)
    n = system.n_maps
    for s in word:
        if not 0 <= int(s) < n:
            raise InputError(f"symbol {s} out of range for {n} maps")
    arr = np.array([x], dtype=float)
    for s in word:
        arr = system.apply_map(int(s), arr)
    return float(arr[0])


def map_derivative(m: MapSpec, x: float, space: SpaceSpec | None = None) -> float:
    circle = space.is_circle if space is not None else isinstance(m, (CircleSine, Rotation, CircleSineInverse))
    return float(m.derivative(float(x), circle))


@dataclass(frozen=True)
class LipschitzData:
    constants: tuple
    mean: float
    mean_log: float


def lipschitz_data(system: IfsSystem) -> LipschitzData:
    L = tuple(float(m.lipschitz()) for m in system.maps)
    p = system.probs
    mean = sum(pi * li for pi, li in zip(p, L))
    with np.errstate(divide="ignore"):
        mean_log = sum(pi * math.log(li) if li > 0 else (-math.inf if pi > 0 else 0.0) for pi, li in zip(p, L))
    return LipschitzData(L, mean, mean_log)
