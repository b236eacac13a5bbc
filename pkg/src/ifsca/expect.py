"""Expectations over random words: exact enumeration and Monte Carlo."""
from __future__ import annotations

import math
from collections import OrderedDict
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from ._rng import draw_symbols
from .errors import CapExceededError, InputError
from .space import Basis, MetricExpr, PsiFamily, SupFamily, SupMetric, _bind

ENUM_CAP = 2 ** 25


@dataclass(frozen=True)
class Estimate:
    value: float
    mode: str  # "Exact" | "MonteCarlo"
    stderr: float = 0.0
    samples_or_words: int = 0
    seed: int | None = None
    lower: float | None = None
    upper: float | None = None
    flags: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        out = {"value": _num(self.value), "mode": self.mode, "stderr": _num(self.stderr),
               "samples_or_words": int(self.samples_or_words)}
        if self.seed is not None:
            out["seed"] = int(self.seed)
        if self.lower is not None:
            out["bracket"] = [_num(self.lower), _num(self.upper)]
        if self.flags:
            out["flags"] = {k: _num(v) if isinstance(v, float) else v for k, v in self.flags.items()}
        return out


def _num(v):
    v = float(v)
    if math.isinf(v):
        return "-inf" if v < 0 else "inf"
    if math.isnan(v):
        return "nan"
    return v


def check_cap(system, n: int, cap: int = ENUM_CAP) -> int:
    words = system.n_maps ** n
    if words > cap:
        raise CapExceededError(f"{system.n_maps}^{n} words exceed the enumeration cap {cap}; use MonteCarlo mode")
    return words


# ---------------------------------------------------------------------------
# step profiles


class _ProfileCache:
    """Small LRU of family profiles keyed by the queried pairs."""

    def __init__(self, size: int = 16):
        self.size = size
        self.data: OrderedDict = OrderedDict()

    def get(self, key):
        if key in self.data:
            self.data.move_to_end(key)
            return self.data[key]
        return None

    def put(self, key, value):
        self.data[key] = value
        self.data.move_to_end(key)
        while len(self.data) > self.size:
            self.data.popitem(last=False)

    def clear(self):
        self.data.clear()


_CACHE = _ProfileCache()


def clear_cache() -> None:
    _CACHE.clear()


def _fam_key(fam):
    if isinstance(fam, PsiFamily):
        return ("psi", fam.alpha, id(fam.system))
    return ("sup", fam.alpha, id(fam.system), fam.depth, fam.policy, fam.invariant, fam.w_min)


def family_profile(fam, system, xs, ys, L: int):
    """(lower, upper), each (P, L+1): the family's step profile F_0..F_L."""
    xs = np.ascontiguousarray(xs, dtype=float)
    ys = np.ascontiguousarray(ys, dtype=float)
    key = (_fam_key(fam), xs.tobytes(), ys.tobytes())
    hit = _CACHE.get(key)
    if hit is not None and hit[0] >= L:
        return hit[1][:, :L + 1], hit[2][:, :L + 1]
    ps = system.packed
    if isinstance(fam, PsiFamily):
        check_cap(system, L)
        F = kernels.psi_profile(ps, xs, ys, L, fam.alpha)
        res = (F, F)
    else:
        inv = fam.invariant
        inv_t = None if inv is None else (inv.lo, inv.hi, inv.r_up, inv.r_low)
        if inv_t is None and fam.w_min <= 0.0:
            check_cap(system, max(fam.depth, L))
        cap = system.space.diameter ** fam.alpha
        lo, hi, _ = kernels.sup_profile(ps, xs, ys, max(fam.depth, L), L, fam.alpha, inv_t, fam.w_min, cap)
        res = (lo, hi)
    _CACHE.put(key, (int(L),) + res)
    return res


def _combine(basis: Basis, Flo, Fhi, depth: int):
    c = np.asarray(basis.coeffs, dtype=float)
    P = Flo.shape[0]
    lo = np.zeros((P, depth + 1))
    hi = np.zeros((P, depth + 1))
    for j in range(depth + 1):
        lo[:, j] = Flo[:, j:j + c.size] @ c
        hi[:, j] = Fhi[:, j:j + c.size] @ c + basis.tail(j)
    return lo, hi


def metric_profile(system, metric: MetricExpr, xs, ys, depth: int):
    """(lower, upper) arrays (P, depth+1) with E(Z_j) of ``metric`` under ``system``, j = 0..depth."""
    xs = np.atleast_1d(np.asarray(xs, dtype=float))
    ys = np.atleast_1d(np.asarray(ys, dtype=float))
    b = metric.basis()
    if b is not None:
        fam = _bind(b.family, system)
        if fam is not None:
            L = len(b.coeffs) - 1 + depth
            Flo, Fhi = family_profile(fam, system, xs, ys, L)
            return _combine(b, Flo, Fhi, depth)
    return _generic_profile(system, metric, xs, ys, depth)


def _generic_profile(system, metric, xs, ys, depth):
    """Level-by-level enumeration evaluating the metric at every word's image pair."""
    ps = system.packed
    N = system.n_maps
    check_cap(system, depth)
    P = xs.size
    lo = np.zeros((P, depth + 1))
    hi = np.zeros((P, depth + 1))
    step = max(1, (1 << 18) // max(1, N ** depth))
    for s in range(0, P, step):
        fx = xs[s:s + step, None]
        fy = ys[s:s + step, None]
        w = np.array([1.0])
        for lvl in range(depth + 1):
            if lvl > 0:
                m = fx.shape[0]
                fx = np.stack([kernels.map_np(ps, i, fx) for i in range(N)], axis=-1).reshape(m, -1)
                fy = np.stack([kernels.map_np(ps, i, fy) for i in range(N)], axis=-1).reshape(m, -1)
                w = np.outer(w, ps.probs).ravel()
            vlo, vhi = metric.bracket(system.space, fx.ravel(), fy.ravel())
            lo[s:s + step, lvl] = np.asarray(vlo).reshape(fx.shape) @ w
            hi[s:s + step, lvl] = np.asarray(vhi).reshape(fx.shape) @ w
    return lo, hi


# ---------------------------------------------------------------------------
# public estimates


def _psi_alpha(metric: MetricExpr):
    """alpha when the metric is Base or a power of it, else None."""
    b = metric.basis()
    if b is not None and isinstance(b.family, PsiFamily) and b.family.system is None and b.coeffs == (1.0,):
        return b.family.alpha
    return None


def _canon_pair(system, x, y):
    return system.space.canon(x), system.space.canon(y)


def expected_pair_distance(system, metric: MetricExpr, x: float, y: float, n: int, mode: str = "exact",
                           budget: int = 10_000, seed: int = 0, cap: int = ENUM_CAP) -> Estimate:
    """E(Z_n) for the pair (x, y): exact enumeration or Monte Carlo."""
    x, y = _canon_pair(system, x, y)
    mode = mode.lower()
    if n < 0:
        raise InputError("n must be nonnegative")
    if mode not in ("exact", "montecarlo", "mc"):
        raise InputError(f"unknown mode {mode!r}")
    if mode != "exact" and budget < 1:
        raise InputError("Monte Carlo budget must be at least 1")
    if n == 0:
        lo, hi = metric.bracket(system.space, np.array([x]), np.array([y]))
        v = 0.5 * (float(lo[0]) + float(hi[0]))
        if mode == "exact":
            return Estimate(v, "Exact", 0.0, 1, None, float(lo[0]), float(hi[0]))
        return Estimate(v, "MonteCarlo", 0.0, int(budget), seed, float(lo[0]), float(hi[0]))
    if mode == "exact":
        words = check_cap(system, n, cap)
        lo, hi = metric_profile(system, metric, [x], [y], n)
        vlo, vhi = float(lo[0, n]), float(hi[0, n])
        return Estimate(0.5 * (vlo + vhi), "Exact", 0.0, words, None, vlo, vhi)
    rng = np.random.default_rng(seed)
    syms = draw_symbols(rng, system.probs, (budget, n))
    vals = _mc_values(system, metric, x, y, syms)
    mean = float(np.mean(vals))
    se = float(np.std(vals, ddof=1) / math.sqrt(budget)) if budget > 1 else 0.0
    return Estimate(mean, "MonteCarlo", se, int(budget), seed)


def _mc_values(system, metric, x, y, syms):
    alpha = _psi_alpha(metric)
    if alpha is not None:
        return kernels.mc_paths(system.packed, x, y, syms, alpha)[:, -1]
    ex, ey = kernels.mc_endpoints(system.packed, x, y, syms)
    return np.asarray(metric.evaluate(system.space, ex, ey), dtype=float)


def expected_log_ratio(system, metric: MetricExpr, x: float, y: float, n: int, mode: str = "exact",
                       budget: int = 10_000, seed: int = 0, cap: int = ENUM_CAP) -> Estimate:
    """E log(Z_n / metric(x, y)); words with Z_n = 0 force -inf (flagged)."""
    x, y = _canon_pair(system, x, y)
    if x == y:
        raise InputError("log ratio needs x != y")
    mode = mode.lower()
    if n == 0:
        return Estimate(0.0, "Exact" if mode == "exact" else "MonteCarlo", 0.0, 1)
    alpha = _psi_alpha(metric)
    if mode == "exact":
        words = check_cap(system, n, cap)
        if alpha is not None:
            s, neg = kernels.log_profile(system.packed, np.array([x]), np.array([y]), n)
            total, negm = alpha * float(s[0, n]), float(neg[0, n])
        else:
            total, negm = _generic_log(system, metric, x, y, n)
        flags = {"neg_inf_mass": negm} if negm > 0 else {}
        return Estimate(-math.inf if negm > 0 else total, "Exact", 0.0, words, None, flags=flags)
    if budget < 1:
        raise InputError("Monte Carlo budget must be at least 1")
    rng = np.random.default_rng(seed)
    syms = draw_symbols(rng, system.probs, (budget, n))
    d0 = float(metric.evaluate(system.space, np.array([x]), np.array([y]))[0])
    vals = _mc_values(system, metric, x, y, syms)
    zero = vals <= 0.0
    if zero.any():
        return Estimate(-math.inf, "MonteCarlo", math.nan, budget, seed, flags={"neg_inf_mass": float(zero.mean())})
    lg = np.log(vals / d0)
    se = float(np.std(lg, ddof=1) / math.sqrt(budget)) if budget > 1 else 0.0
    return Estimate(float(lg.mean()), "MonteCarlo", se, budget, seed)


def _generic_log(system, metric, x, y, n):
    ps = system.packed
    N = system.n_maps
    d0 = float(metric.evaluate(system.space, np.array([x]), np.array([y]))[0])
    fx, fy, w = np.array([x]), np.array([y]), np.array([1.0])
    for _ in range(n):
        fx = np.concatenate([kernels.map_np(ps, i, fx) for i in range(N)])
        fy = np.concatenate([kernels.map_np(ps, i, fy) for i in range(N)])
        w = np.concatenate([w * ps.probs[i] for i in range(N)])
    v = np.asarray(metric.evaluate(system.space, fx, fy), dtype=float)
    zero = v <= 0
    negm = float(w[zero].sum())
    total = float(np.log(v[~zero] / d0) @ w[~zero])
    return total, negm


def expected_sup_distance(system, metric: MetricExpr, x: float, y: float, depth: int,
                          tail_policy: str = "frozen", invariant=None, w_min: float = 1e-15) -> Estimate:
    """E(sup_{n>=0} Z_n) with a [lower, upper] bracket."""
    x, y = _canon_pair(system, x, y)
    sm = SupMetric(system, metric, depth, tail_policy, invariant, w_min)
    if x == y:
        return Estimate(0.0, "Exact", 0.0, 1, None, 0.0, 0.0)
    lo, hi = sm.bracket(system.space, np.array([x]), np.array([y]))
    lo, hi = float(lo[0]), float(hi[0])
    return Estimate(0.5 * (lo + hi), "Exact", 0.0, 0, None, lo, hi, flags={"tail_policy": tail_policy})
