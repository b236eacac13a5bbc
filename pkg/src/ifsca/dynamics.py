"""Markov-chain simulation, stationary measures, synchronization and drift checks."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from . import kernels
from ._rng import derive_seed, draw_symbols
from .errors import InputError
from .ifs import AffinePieces, _normal_form
from .space import MetricExpr, SpaceSpec

FLAT_FLOOR = 1e-12


@dataclass(frozen=True)
class Trajectory:
    start: float
    symbols: np.ndarray
    states: np.ndarray
    seed: int | None

    def replay(self, system) -> np.ndarray:
        return kernels.orbit(system.packed, self.start, self.symbols)


def simulate_chain(system, x0: float, n: int, seed: int = 0) -> Trajectory:
    if n < 0:
        raise InputError("n must be nonnegative")
    x0 = float(system.space.canon(x0))
    rng = np.random.default_rng(seed)
    syms = draw_symbols(rng, system.probs, (1, n))[0] if n else np.zeros(0, np.uint8)
    return Trajectory(x0, syms, kernels.orbit(system.packed, x0, syms), seed)


# ---------------------------------------------------------------------------
# transport distances


def interval_w1(a, b, b_weights=None) -> float:
    return float(stats.wasserstein_distance(a, b, None, b_weights))


def circle_w1(a, b, b_weights=None) -> float:
    """Exact W1 on the unit circle: min over c of the L1 norm of F_a - F_b - c."""
    a = np.sort(np.mod(np.asarray(a, dtype=float), 1.0))
    b = np.asarray(b, dtype=float) % 1.0
    wb = np.full(b.size, 1.0 / b.size) if b_weights is None else np.asarray(b_weights, float) / np.sum(b_weights)
    order = np.argsort(b, kind="stable")
    b, wb = b[order], wb[order]
    pts = np.concatenate([[0.0], a, b, [1.0]])
    pts.sort(kind="stable")
    lengths = np.diff(pts)
    mids = pts[:-1]
    Fa = np.searchsorted(a, mids, side="right") / a.size
    cw = np.concatenate([[0.0], np.cumsum(wb)])
    Fb = cw[np.searchsorted(b, mids, side="right")]
    diff = Fa - Fb
    keep = lengths > 0
    diff, lengths = diff[keep], lengths[keep]
    o = np.argsort(diff, kind="stable")
    cum = np.cumsum(lengths[o])
    c = diff[o][np.searchsorted(cum, 0.5 * cum[-1])]
    return float(np.sum(lengths * np.abs(diff - c)))


def transport_distance(space: SpaceSpec, a, b, b_weights=None) -> float:
    if space.is_circle:
        return circle_w1(a, b, b_weights)
    return interval_w1(a, b, b_weights)


def pushforward_sample(system, samples):
    """Atoms and weights of sum_i p_i (f_i)_* of the empirical measure."""
    ps = system.packed
    n = samples.size
    pts = np.concatenate([kernels.map_np(ps, i, samples) for i in range(system.n_maps)])
    w = np.concatenate([np.full(n, p / n) for p in system.probs])
    return pts, w


@dataclass(frozen=True)
class StationaryEstimate:
    measure: object  # EmpiricalMeasure
    residual: float
    burn_in: int
    samples: int
    chains: int
    seed: int

    def to_dict(self) -> dict:
        return {"residual": self.residual, "burn_in": self.burn_in, "samples_per_chain": self.samples,
                "chains": self.chains, "seed": self.seed, "mode": "MonteCarlo"}


def estimate_stationary_measure(system, burn_in: int = 10_000, samples: int = 100_000, chains: int = 4,
                                seed: int = 0, residual_subsample: int = 200_000) -> StationaryEstimate:
    """Pool ``chains`` independent runs of ``samples`` post-burn-in states each."""
    from .adapt import EmpiricalMeasure

    if samples < 1000:
        raise InputError("need at least 1000 samples")
    space = system.space
    x0s = np.empty(chains)
    rows = []
    for c in range(chains):
        rng = np.random.default_rng(derive_seed(seed, c))
        x0s[c] = space.lo + rng.random() * (space.hi - space.lo)
        rows.append(draw_symbols(rng, system.probs, (1, burn_in + samples))[0])
    syms = np.stack(rows)
    states = kernels.chain_samples(system.packed, x0s, syms, burn_in).ravel()
    mu = EmpiricalMeasure(space, states)
    sub = mu.samples
    if sub.size > residual_subsample:
        # evenly spaced order statistics keep the quantile shape of the pooled sample
        sub = sub[np.linspace(0, sub.size - 1, residual_subsample).astype(np.int64)]
    pts, w = pushforward_sample(system, sub)
    res = transport_distance(space, sub, pts, w)
    return StationaryEstimate(mu, res, burn_in, samples, chains, seed)


# ---------------------------------------------------------------------------
# synchronization


@dataclass
class SyncCurve:
    pair: tuple
    mean: np.ndarray
    stderr: np.ndarray
    slope: float
    slope_stderr: float
    intercept: float
    fit_rms: float
    sa_evidence: bool
    saexp_evidence: bool
    flat: bool
    flags: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"pair": list(self.pair), "slope": _f(self.slope), "slope_stderr": _f(self.slope_stderr),
                "intercept": _f(self.intercept), "fit_rms": _f(self.fit_rms), "sa_evidence": self.sa_evidence,
                "saexp_evidence": self.saexp_evidence, "flat": self.flat, "final_mean": _f(self.mean[-1]),
                "final_stderr": _f(self.stderr[-1]), "mode": "MonteCarlo", "flags": self.flags}


def _f(v):
    v = float(v)
    if math.isinf(v):
        return "-inf" if v < 0 else "inf"
    return "nan" if math.isnan(v) else v


def _path_values(system, metric, x, y, syms):
    from .expect import _psi_alpha

    alpha = _psi_alpha(metric)
    if alpha is not None:
        return kernels.mc_paths(system.packed, x, y, syms, alpha)
    B, n = syms.shape
    cx = np.full(B, x)
    cy = np.full(B, y)
    out = np.empty((B, n + 1))
    out[:, 0] = metric.evaluate(system.space, cx, cy)
    for t in range(n):
        cx = kernels.apply_symbols_np(system.packed, syms[:, t], cx)
        cy = kernels.apply_symbols_np(system.packed, syms[:, t], cy)
        out[:, t + 1] = metric.evaluate(system.space, cx, cy)
    return out


def fit_tail(mean: np.ndarray):
    """Least squares of log mean over the tail half: (slope, slope_se, intercept, rms, flags)."""
    n_max = mean.size - 1
    ns = np.arange(n_max // 2, n_max + 1)
    tail = mean[ns]
    if np.all(tail <= 0):
        return -math.inf, 0.0, -math.inf, 0.0, {"exact_sync": True}
    pos = tail > 0
    ns, lg = ns[pos], np.log(tail[pos])
    if ns.size < 3:
        return -math.inf, math.inf, float(lg[0]), 0.0, {"exact_sync_partial": True}
    res = stats.linregress(ns, lg)
    resid = lg - (res.intercept + res.slope * ns)
    return float(res.slope), float(res.stderr), float(res.intercept), float(np.sqrt(np.mean(resid**2))), {}


def synchronization_profile(system, metric: MetricExpr, pairs, n_max: int, mc_budget: int = 2000, seed: int = 0,
                            sa_threshold: float = 1e-2, rms_max: float = 0.5) -> list[SyncCurve]:
    """Monte Carlo decay curve E(Z_n), n = 0..n_max, for each pair, with a tail fit."""
    out = []
    for idx, (x, y) in enumerate(pairs):
        x, y = float(system.space.canon(x)), float(system.space.canon(y))
        if x == y:
            raise InputError("pairs must be off-diagonal")
        rng = np.random.default_rng(derive_seed(seed, idx))
        syms = draw_symbols(rng, system.probs, (mc_budget, n_max))
        vals = _path_values(system, metric, x, y, syms)
        mean = vals.mean(axis=0)
        se = vals.std(axis=0, ddof=1) / math.sqrt(mc_budget) if mc_budget > 1 else np.zeros(n_max + 1)
        slope, sse, icpt, rms, flags = fit_tail(mean)
        flat = abs(slope) <= 2.0 * sse + FLAT_FLOOR
        sa = bool(mean[-1] <= sa_threshold * mean[0])
        saexp = bool(slope < 0 and rms <= rms_max and not flat)
        out.append(SyncCurve((x, y), mean, se, slope, sse, icpt, rms, sa, saexp, bool(flat), flags))
    return out


def write_curve_csv(path, mean, stderr) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["n", "estimate", "stderr"])
        for n, (m, s) in enumerate(zip(mean, stderr)):
            w.writerow([n, repr(float(m)), repr(float(s))])


# ---------------------------------------------------------------------------
# hitting-time contraction


@dataclass
class HittingResult:
    lambda_hat: float
    stderr: float
    worst_pair: tuple
    per_pair: list
    exceeded_fraction: float
    verdict: str  # "Estimate" | "Inconclusive"

    def to_dict(self) -> dict:
        return {"lambda_hat": _f(self.lambda_hat), "stderr": _f(self.stderr), "worst_pair": list(self.worst_pair),
                "exceeded_fraction": self.exceeded_fraction, "verdict": self.verdict, "mode": "MonteCarlo",
                "per_pair": self.per_pair}


def hitting_time_contraction(system, metric: MetricExpr, A, pairs, mc_budget: int = 10_000,
                             horizon: int = 10_000, seed: int = 0, block_rows: int = 1024) -> HittingResult:
    """E d(X_T, Y_T)/d(x, y) at T = the later of the two hitting times of A (counted from step 1)."""
    from .expect import _psi_alpha

    alpha = _psi_alpha(metric)
    if alpha is None:
        raise InputError("hitting-time contraction supports Base or Power(Base) metrics")
    a_lo, a_hi = float(A[0]), float(A[1])
    per, worst, worst_se, worst_pair = [], -math.inf, 0.0, None
    exceeded_total = 0
    for idx, (x, y) in enumerate(pairs):
        rng = np.random.default_rng(derive_seed(seed, idx))
        ratios = []
        for s in range(0, mc_budget, block_rows):
            syms = draw_symbols(rng, system.probs, (min(block_rows, mc_budget - s), horizon))
            r, _ = kernels.hitting_ratios(system.packed, x, y, syms, a_lo, a_hi)
            ratios.append(r)
        r = np.concatenate(ratios) ** alpha
        ok = ~np.isnan(r)
        exceeded = int((~ok).sum())
        exceeded_total += exceeded
        m = float(r[ok].mean()) if ok.any() else math.nan
        se = float(r[ok].std(ddof=1) / math.sqrt(ok.sum())) if ok.sum() > 1 else 0.0
        per.append({"pair": [float(x), float(y)], "ratio": _f(m), "stderr": se, "exceeded": exceeded})
        if m > worst:
            worst, worst_se, worst_pair = m, se, (float(x), float(y))
    frac = exceeded_total / max(1, mc_budget * len(pairs))
    verdict = "Inconclusive" if frac > 0.05 else "Estimate"
    return HittingResult(worst, worst_se, worst_pair, per, frac, verdict)


# ---------------------------------------------------------------------------
# drift condition E V(X_1) <= r V(x) + b 1_A(x)


@dataclass(frozen=True)
class DriftSpec:
    kind: str  # "exponential" | "polynomial"
    param: tuple  # (t,) or polynomial coefficients, constant term first
    A: tuple
    r: float
    b: float

    @classmethod
    def exponential(cls, t: float, A, r: float, b: float) -> "DriftSpec":
        return cls("exponential", (float(t),), tuple(A), float(r), float(b))

    @classmethod
    def polynomial(cls, coeffs, A, r: float, b: float) -> "DriftSpec":
        return cls("polynomial", tuple(float(c) for c in coeffs), tuple(A), float(r), float(b))

    def V(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "exponential":
            return np.exp(self.param[0] * x)
        return np.polynomial.polynomial.polyval(x, self.param)

    def to_dict(self) -> dict:
        return {"V": self.kind, "param": list(self.param), "A": list(self.A), "r": self.r, "b": self.b}


@dataclass
class DriftReport:
    verdict: str
    soundness: str
    max_excess: float
    padded_bound: float | None
    witness: float | None
    grid_points: int

    def to_dict(self) -> dict:
        return {"verdict": self.verdict, "soundness": self.soundness, "max_excess": self.max_excess,
                "padded_bound": self.padded_bound, "witness": self.witness, "grid_points": self.grid_points}


def _drift_excess(system, drift: DriftSpec, x):
    ps = system.packed
    ev = sum(p * drift.V(kernels.map_np(ps, i, x)) for i, p in enumerate(system.probs))
    ind = (x >= drift.A[0]) & (x <= drift.A[1])
    return ev - drift.r * drift.V(x) - drift.b * ind, drift.r * drift.V(x) + drift.b


def _exp_cell_bound(system, drift: DriftSpec, cells_lo, cells_hi):
    """Upper bound of the excess on each closed cell, where every map is affine.

    Each term c*exp(s x) is monotone, so its cell maximum sits at an endpoint;
    terms sharing an exponent are merged first so cancellations stay exact.
    """
    t = drift.param[0]
    forms = [_normal_form(m) for m in system.maps]
    mids = 0.5 * (cells_lo + cells_hi)
    idx = [np.asarray(f.piece_index(mids)) for f in forms]
    inside = (cells_lo >= drift.A[0]) & (cells_hi <= drift.A[1])
    out = np.empty(cells_lo.size)
    combos = np.stack(idx, axis=1)
    uniq, inv = np.unique(combos, axis=0, return_inverse=True)
    inv = inv.ravel()
    for u, pieces in enumerate(uniq):
        terms: dict = {}
        for i, (f, j) in enumerate(zip(forms, pieces)):
            s, c = f.slopes[j], f.intercepts[j]
            key = round(t * s, 12)
            terms[key] = terms.get(key, 0.0) + system.probs[i] * math.exp(t * c)
        key = round(t, 12)
        terms[key] = terms.get(key, 0.0) - drift.r
        sel = inv == u
        a, b = cells_lo[sel], cells_hi[sel]
        tot = np.zeros(a.size)
        for s, c in terms.items():
            tot += np.maximum(c * np.exp(s * a), c * np.exp(s * b))
        out[sel] = tot - drift.b * inside[sel]
    return out


def check_drift_condition(system, drift: DriftSpec, resolution: int = 4096, tol: float = 1e-12) -> DriftReport:
    """Grid check of E V(X_1^x) - r V(x) - b 1_A(x) <= tol, padded when exact per-piece bounds exist."""
    space = system.space
    if space.is_circle:
        raise InputError("drift conditions are checked on interval spaces")
    xs = np.linspace(space.lo, space.hi, resolution + 1)
    forms = [_normal_form(m) for m in system.maps]
    affine = all(isinstance(f, AffinePieces) for f in forms)
    if affine:
        extra = [b for f in forms for b in f.breakpoints] + list(drift.A)
        xs = np.unique(np.concatenate([xs, [v for v in extra if space.lo <= v <= space.hi]]))
    g, scale = _drift_excess(system, drift, xs)
    allow = tol * (1.0 + np.abs(scale))
    k = int(np.argmax(g - allow))
    max_excess = float(np.max(g))
    if g[k] > allow[k]:
        return DriftReport("Refuted", "SampledOnly", max_excess, None, float(xs[k]), xs.size)
    if drift.kind == "exponential" and affine:
        bound = _exp_cell_bound(system, drift, xs[:-1], xs[1:])
        scale_c = drift.r * np.maximum(drift.V(xs[:-1]), drift.V(xs[1:])) + drift.b
        pb = float(np.max(bound))
        ok = bool(np.all(bound <= tol * (1.0 + scale_c)))
        return DriftReport("Certified" if ok else "Inconclusive", "LipschitzPadded", max_excess, pb, None, xs.size)
    return DriftReport("Certified", "SampledOnly", max_excess, None, None, xs.size)
