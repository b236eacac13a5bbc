"""Example systems with their declared structure and expected properties."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import kernels
from .errors import InputError
from .ifs import AffinePieces, CircleSine, IfsSystem, MinClamp, Rotation
from .space import Base, InvariantArc, SpaceSpec

GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class Expectation:
    prop: str
    expect: str  # "Certified" | "Refuted" | "Holds"
    note: str = ""

    def to_dict(self) -> dict:
        out = {"property": self.prop, "expect": self.expect}
        if self.note:
            out["note"] = self.note
        return out


@dataclass(frozen=True)
class TwoArcStructure:
    I: tuple = (0.5, 0.75)
    J: tuple = (0.0, 0.25)
    J_star: tuple = (0.10, 0.15)
    y0: float = 0.0
    y1: float = 0.25
    r: float = 0.5
    c: float = 3.0

    def to_dict(self) -> dict:
        return {"I": list(self.I), "J": list(self.J), "J_star": list(self.J_star), "y0": self.y0, "y1": self.y1,
                "r": self.r, "c": self.c}


@dataclass(frozen=True)
class TwoArcConstants:
    ell: int
    alpha: float
    N: int
    C: float
    n: int

    @property
    def esca_depth(self) -> int:
        return (self.ell + 1) * self.n

    def to_dict(self) -> dict:
        return {"ell": self.ell, "alpha": self.alpha, "N": self.N, "C": self.C, "n": self.n,
                "esca_depth": self.esca_depth}


@dataclass
class Example:
    name: str
    system: IfsSystem
    metric: object
    expected: list
    params: dict
    structure: TwoArcStructure | None = None
    constants: TwoArcConstants | None = None
    extras: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# systems


def edalat_system(p: float = 0.5) -> IfsSystem:
    space = SpaceSpec.interval(0.0, 1.0)
    f0 = AffinePieces((0.0,), (1.0 / 3.0,), (0.0,))
    f1 = MinClamp(AffinePieces((0.0,), (2.0,), (0.0,)), 1.0)
    return IfsSystem(space, (f0, f1), (p, 1.0 - p), name="edalat_logca")


def drift_system(p: float = 0.6) -> IfsSystem:
    if not 0.5 < p < 1.0:
        raise InputError("drift example needs p in (1/2, 1)")
    space = SpaceSpec.interval(0.0, 2.0)
    f0 = AffinePieces((0.0, 1.0), (1.0 / 3.0, 1.0), (0.0, -2.0 / 3.0))
    f1 = MinClamp(AffinePieces((0.0,), (1.0,), (2.0 / 3.0,)), 2.0)
    return IfsSystem(space, (f0, f1), (p, 1.0 - p), name="drift_example")


def circle_ns_rotation_system(a: float = 0.5, theta: float = GOLDEN, p: float = 0.5) -> IfsSystem:
    if not 0.0 < a < 1.0:
        raise InputError("a must lie in (0, 1)")
    if abs(theta * 1e6 - round(theta * 1e6)) < 1e-9:
        raise InputError("theta should be irrational (no short rational approximant)")
    return IfsSystem(SpaceSpec.circle(), (CircleSine(a), Rotation(theta)), (p, 1.0 - p), name="circle_ns_rotation")


def all_rotations_system(thetas=(GOLDEN, math.sqrt(2.0) - 1.0), probs=None) -> IfsSystem:
    probs = probs or tuple(1.0 / len(thetas) for _ in thetas)
    return IfsSystem(SpaceSpec.circle(), tuple(Rotation(t) for t in thetas), probs, name="all_rotations")


def uniform_contraction_system(p: float = 0.5) -> IfsSystem:
    space = SpaceSpec.interval(0.0, 1.0)
    f0 = AffinePieces((0.0,), (1.0 / 3.0,), (0.0,))
    f1 = AffinePieces((0.0,), (0.5,), (0.5,))
    return IfsSystem(space, (f0, f1), (p, 1.0 - p), name="uniform_contraction")


# knots of the circle lifts; both fix one endpoint of J = (0, 1/4) and contract I = (1/2, 3/4) by 1/2
F0_KNOTS = ((0.0, 0.1, 0.5, 0.75, 1.0), (0.0, 0.3, 0.5625, 0.6875, 1.0))
F1_KNOTS = ((0.0, 0.15, 0.25, 0.5, 0.75, 1.0), (-0.134375, -0.05, 0.25, 0.6, 0.725, 0.865625))


def two_arc_system(p: float = 0.5, f0_knots=F0_KNOTS, f1_knots=F1_KNOTS) -> IfsSystem:
    f0 = AffinePieces.from_knots(*f0_knots)
    f1 = AffinePieces.from_knots(*f1_knots)
    for f in (f0, f1):
        if min(f.slopes) <= 0:
            raise InputError("two-arc maps must be orientation preserving")
    return IfsSystem(SpaceSpec.circle(), (f0, f1), (p, 1.0 - p), name="circle_two_arcs")


# ---------------------------------------------------------------------------
# two-arc axioms


def _in_arc(x, arc, closed=False):
    """Membership in the counterclockwise arc (a, b) of the circle."""
    a, b = arc
    x = np.mod(x, 1.0)
    L = (b - a) % 1.0 or 1.0
    t = np.mod(x - a, 1.0)
    if closed:
        return (t <= L + 1e-12) | (t >= 1.0 - 1e-12)
    return (t > 1e-12) & (t < L - 1e-12)


def _arc_grid(arc, n, closed=False):
    a, b = arc
    L = (b - a) % 1.0 or 1.0
    t = np.linspace(0.0, L, n + 2)
    t = t if closed else t[1:-1]
    return np.mod(a + t, 1.0)


@dataclass
class AxiomResult:
    index: int
    name: str
    passed: bool
    witness: object = None
    detail: str = ""

    def to_dict(self) -> dict:
        out = {"axiom": self.index, "name": self.name, "passed": self.passed}
        if self.witness is not None:
            out["witness"] = self.witness
        if self.detail:
            out["detail"] = self.detail
        return out


@dataclass
class AxiomReport:
    results: list
    N: int | None

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.results)

    def failed(self) -> list:
        return [r for r in self.results if not r.passed]

    def to_dict(self) -> dict:
        return {"passed": self.passed, "N": self.N, "axioms": [r.to_dict() for r in self.results]}


def entry_times(system, xs, target, max_steps: int = 64):
    """Per point, the least n with f_w^n(x) in ``target`` for every word w of length n (-1 past max_steps).

    Exhaustive over words; relies on ``target`` being forward invariant.
    """
    ps = system.packed
    xs = np.asarray(xs, dtype=float)
    out = np.zeros(xs.size, dtype=np.int64)
    owner = np.arange(xs.size)
    pts = xs.copy()
    for step in range(max_steps + 1):
        live = ~_in_arc(pts, target, closed=True)
        pts, owner = pts[live], owner[live]
        if pts.size == 0:
            return out
        out[np.unique(owner)] = step + 1
        if step == max_steps:
            break
        pts = np.concatenate([kernels.map_np(ps, i, pts) for i in range(system.n_maps)])
        owner = np.tile(owner, system.n_maps)
        if pts.size > 1 << 24:
            break
    out[np.unique(owner)] = -1
    return out


def verify_two_arc_axioms(system, st: TwoArcStructure, grid: int = 2000, word_len: int = 8,
                          max_entry: int = 64) -> AxiomReport:
    """Numerical check of the seven two-arc properties on grids and exhaustive words."""
    ps = system.packed
    f = [lambda x, i=i: kernels.map_np(ps, i, np.asarray(x, dtype=float)) for i in range(system.n_maps)]
    res = []

    # (1) endpoints of J are fixed points of f_0 and f_1 respectively
    e0 = abs(((f[0](np.array([st.y0]))[0] - st.y0) + 0.5) % 1.0 - 0.5)
    e1 = abs(((f[1](np.array([st.y1]))[0] - st.y1) + 0.5) % 1.0 - 0.5)
    ends = {round(st.J[0] % 1.0, 12), round(st.J[1] % 1.0, 12)}
    ok1 = e0 < 1e-12 and e1 < 1e-12 and st.y0 != st.y1 and {round(st.y0 % 1, 12), round(st.y1 % 1, 12)} == ends
    res.append(AxiomResult(1, "fixed endpoints", ok1, None if ok1 else [st.y0, st.y1],
                           f"|f0(y0)-y0|={e0:.3g}, |f1(y1)-y1|={e1:.3g}"))

    # (2) J* is thrown out of the closure of J by both maps
    xs = _arc_grid(st.J_star, grid)
    bad = None
    for i in range(system.n_maps):
        hit = _in_arc(f[i](xs), st.J, closed=True)
        if hit.any():
            bad = [i, float(xs[np.argmax(hit)])]
            break
    res.append(AxiomResult(2, "J* leaves closure of J", bad is None, bad))

    # (3) I is forward invariant
    xs = _arc_grid(st.I, grid, closed=True)
    bad = None
    for i in range(system.n_maps):
        out = ~_in_arc(f[i](xs), st.I, closed=True)
        if out.any():
            bad = [i, float(xs[np.argmax(out)])]
            break
    res.append(AxiomResult(3, "I invariant", bad is None, bad))

    # (4) every point outside the closure of J enters I along all words
    comp = (st.J[1], st.J[0])
    xs = _arc_grid(comp, grid)
    et = entry_times(system, xs, st.I, max_entry)
    ok4 = bool(np.all(et >= 0))
    res.append(AxiomResult(4, "uniform entry into I", ok4, None if ok4 else float(xs[np.argmin(et)]),
                           f"max entry time {int(et.max())} over {xs.size} grid points"))

    # N: exhaustive entry time of the arc W between f_0(y) and f_1(y), y the midpoint of J*
    y = 0.5 * (st.J_star[0] + st.J_star[1])
    w0, w1 = float(f[0](np.array([y]))[0]), float(f[1](np.array([y]))[0])
    W = (w0, w1) if _in_arc(np.array([st.I[0]]), (w0, w1))[0] else (w1, w0)
    ew = entry_times(system, _arc_grid(W, grid, closed=True), st.I, max_entry)
    N = int(ew.max()) if np.all(ew >= 0) else None

    # (5) contraction by r inside I along all words of length <= word_len
    xs = _arc_grid(st.I, 40, closed=True)
    i_idx, j_idx = np.triu_indices(xs.size, 1)
    X, Y = xs[i_idx], xs[j_idx]
    d0 = SpaceSpec.circle().dist(X, Y)
    bad = None
    cx, cy = X[None, :], Y[None, :]
    for n in range(1, word_len + 1):
        cx = np.concatenate([f[i](cx) for i in range(system.n_maps)])
        cy = np.concatenate([f[i](cy) for i in range(system.n_maps)])
        dn = SpaceSpec.circle().dist(cx, cy)
        viol = dn > st.r**n * d0[None, :] * (1 + 1e-9) + 1e-15
        if viol.any():
            w, k = np.unravel_index(np.argmax(viol), viol.shape)
            bad = {"n": n, "pair": [float(X[k]), float(Y[k])], "ratio": float(dn[w, k] / d0[k])}
            break
    res.append(AxiomResult(5, "contraction in I", bad is None, bad))

    # (6) non-contraction on J intersected with both preimages of J
    xs = _arc_grid(st.J, grid)
    inter = _in_arc(xs, st.J)
    for i in range(system.n_maps):
        inter &= _in_arc(f[i](xs), st.J)
    pts = xs[inter]
    if pts.size < 2:
        res.append(AxiomResult(6, "non-contraction on J core", True, None, "vacuous: the set is empty on the grid"))
    else:
        bad = None
        for i in range(system.n_maps):
            dd = SpaceSpec.circle().dist(f[i](pts[1:]), f[i](pts[:-1])) - SpaceSpec.circle().dist(pts[1:], pts[:-1])
            if (dd < -1e-12).any():
                bad = [i, float(pts[np.argmin(dd)])]
                break
        res.append(AxiomResult(6, "non-contraction on J core", bad is None, bad, f"{pts.size} grid points"))

    # (7) global Lipschitz constant c
    xs = np.arange(4 * grid) / (4 * grid)
    bad = None
    for i in range(system.n_maps):
        L = system.maps[i].lipschitz()
        dd = SpaceSpec.circle().dist(f[i](np.roll(xs, -1)), f[i](xs)) / SpaceSpec.circle().dist(np.roll(xs, -1), xs)
        if L > st.c + 1e-12 or dd.max() > st.c * (1 + 1e-9):
            bad = [i, max(L, float(dd.max()))]
            break
    res.append(AxiomResult(7, "Lipschitz constant c", bad is None, bad))
    return AxiomReport(res, N)


def two_arc_constants(st: TwoArcStructure, p: float, N: int, alpha_grid: int = 4000, n_cap: int = 10_000,
                      target: float = 0.5) -> TwoArcConstants:
    """Solve the two-arc constraints: ell, then alpha (least n), then the least n."""
    r, c = st.r, st.c
    p = max(p, 1.0 - p)
    ell = 1
    while r**ell * c >= 1.0:
        ell += 1
    a_max = math.log(1.0 / p) / ((ell + 1) * math.log(c))  # c^{(ell+1) alpha} < 1/p
    best = None
    for a in np.linspace(a_max / alpha_grid, a_max, alpha_grid, endpoint=False):
        a = float(a)
        C = _sandwich_C(c, p, N, a)
        if C is None:
            continue
        n = _least_n(r, c, p, N, ell, a, C, n_cap, target)
        if n is not None and (best is None or n < best[2] or (n == best[2] and a > best[0])):
            best = (a, C, n)
    if best is None:
        raise InputError("no admissible (alpha, n) for the two-arc constants")
    a, C, n = best
    return TwoArcConstants(ell, a, N, C, n)


def _sandwich_C(c, p, N, a):
    q = c**a * p
    if q >= 1.0 or (N + 1) * a * math.log(c) > 700.0:
        return None  # C not representable; treat as inadmissible
    return c ** ((N + 1) * a) * (1.0 + 2.0 * q / (1.0 - q))


def _least_n(r, c, p, N, ell, a, C, n_cap, target=0.5):
    n = np.arange(1, n_cap, dtype=float)
    lhs = np.exp(n * a * math.log(r**ell * c)) + np.exp(np.minimum(n * (ell + 1) * a * math.log(c) + (n - N) * math.log(p), 700.0))
    ok = np.nonzero(lhs < target / C)[0]
    return int(n[ok[0]]) if ok.size else None


# ---------------------------------------------------------------------------
# build


NAMES = ("edalat_logca", "drift_example", "circle_ns_rotation", "circle_two_arcs", "all_rotations",
         "uniform_contraction")


def build_example(name: str, params: dict | None = None) -> Example:
    params = dict(params or {})
    if name == "edalat_logca":
        p = float(params.get("p", 0.5))
        exp = [Expectation("logCA", "Certified"), Expectation("NEA", "Refuted"), Expectation("search_alpha", "Holds")]
        return Example(name, edalat_system(p), Base(), exp, {"p": p})
    if name == "drift_example":
        p = float(params.get("p", 0.6))
        t = float(params.get("t", 0.5))
        exp = [Expectation("NEA", "Certified"), Expectation("CA on [1,4/3]^2", "Refuted"),
               Expectation("hitting-time contraction A=[0,1]", "Holds", f"lambda = {p / 3 + 1 - p:.6g}"),
               Expectation("drift condition", "Certified")]
        return Example(name, drift_system(p), Base(), exp, {"p": p, "t": t})
    if name == "circle_ns_rotation":
        a = float(params.get("a", 0.5))
        theta = float(params.get("theta", GOLDEN))
        p = float(params.get("p", 0.5))
        exp = [Expectation("SA", "Holds"), Expectation("NEA(d)", "Refuted"), Expectation("NEA(rho)", "Certified"),
               Expectation("ESCA(rho)", "Refuted"), Expectation("alpha-k-ECA pipeline CA", "Certified")]
        return Example(name, circle_ns_rotation_system(a, theta, p), Base(), exp, {"a": a, "theta": theta, "p": p})
    if name == "circle_two_arcs":
        p = float(params.get("p", 0.5))
        st = TwoArcStructure(**{k: tuple(v) if isinstance(v, list) else v
                                for k, v in params.get("structure", {}).items()})
        system = two_arc_system(p, params.get("f0_knots", F0_KNOTS), params.get("f1_knots", F1_KNOTS))
        rep = verify_two_arc_axioms(system, st)
        if not rep.passed:
            f = rep.failed()[0]
            raise InputError(f"two-arc axiom ({f.index}) {f.name} fails; witness {f.witness}")
        consts = two_arc_constants(st, p, rep.N)
        exp = [Expectation("NEA(d)", "Refuted"), Expectation("epsLCA(d)", "Refuted"), Expectation("SA", "Holds"),
               Expectation("hatD sandwich", "Holds"), Expectation("NEA(hatD)", "Certified"),
               Expectation("ESCA(hatD)", "Certified"), Expectation("k-ECA pipeline CA", "Certified")]
        ex = Example(name, system, Base(), exp, {"p": p}, st, consts, {"axioms": rep.to_dict()})
        return ex
    if name == "all_rotations":
        exp = [Expectation("CA", "Refuted"), Expectation("logCA", "Refuted"), Expectation("ESCA", "Refuted"),
               Expectation("synchronization", "Refuted")]
        return Example(name, all_rotations_system(), Base(), exp, {})
    if name == "uniform_contraction":
        p = float(params.get("p", 0.5))
        return Example(name, uniform_contraction_system(p), Base(), [Expectation("CA", "Certified")], {"p": p})
    raise InputError(f"unknown example {name!r}; known: {', '.join(NAMES)}")


def invariant_arc(ex: Example) -> InvariantArc:
    """The frozen-tail data of the two-arc example (both maps have slope r on I)."""
    st = ex.structure
    return InvariantArc(st.I[0], st.I[1], st.r, st.r)


def perturbed(st: TwoArcStructure, **kw) -> TwoArcStructure:
    return replace(st, **kw)
