"""Grid certification of average-contraction conditions and the alpha / (k, lambda) searches."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from . import kernels
from ._rng import draw_symbols
from .errors import InputError
from .expect import ENUM_CAP, check_cap, metric_profile
from .space import Base, EcaSum, Expected, GeomSeries, MetricExpr, Power, PsiFamily, SupFamily

MARGIN = 1e-3


def _check_depth(system, metric, n):
    # pruned tail-sup enumeration has its own budget; everything else enumerates N^n words
    b = metric.basis()
    if b is not None and isinstance(b.family, SupFamily) and (b.family.invariant is not None or b.family.w_min > 0):
        return
    check_cap(system, n)
SAMPLED = "SampledOnly"
PADDED = "LipschitzPadded"


@dataclass(frozen=True)
class GridParams:
    resolution: int = 256
    band: float = 1e-4  # diagonal band, relative to the diameter
    refine: bool = True
    refine_factor: int = 4
    refine_fraction: float = 0.1
    max_refine: int = 1024
    min_metric: float = 0.0  # pairs with a smaller metric value are left out
    max_metric: float = math.inf  # epsilon-restricted conditions

    def __post_init__(self):
        if self.resolution < 8:
            raise InputError("grid resolution must be at least 8")
        if not self.band > 0:
            raise InputError("diagonal band must be positive")

    def to_dict(self) -> dict:
        out = {"resolution": self.resolution, "diagonal_band": self.band, "refine": self.refine}
        if self.min_metric > 0:
            out["min_metric"] = self.min_metric
        if math.isfinite(self.max_metric):
            out["max_metric"] = self.max_metric
        return out


@dataclass
class Certificate:
    condition: str
    rate_bound: float
    witness_pair: tuple | None
    witness_ratio: float
    verdict: str  # "Certified" | "Refuted" | "Inconclusive"
    soundness: str
    threshold: float
    region: tuple | None = None
    grid: GridParams | None = None
    sampled_max: float = math.nan
    extras: dict = field(default_factory=dict)

    @property
    def certified(self) -> bool:
        return self.verdict == "Certified"

    @property
    def refuted(self) -> bool:
        return self.verdict == "Refuted"

    def to_dict(self) -> dict:
        out = {"condition": self.condition, "rate_bound": _num(self.rate_bound), "verdict": self.verdict,
               "soundness": self.soundness, "threshold": _num(self.threshold),
               "witness_pair": None if self.witness_pair is None else [float(v) for v in self.witness_pair],
               "witness_ratio": _num(self.witness_ratio), "sampled_max": _num(self.sampled_max),
               "mode": "Padded" if self.soundness == PADDED else "Sampled"}
        if self.verdict == "Certified" and self.soundness == SAMPLED:
            out["evidence_only"] = True
        if self.region is not None:
            out["region"] = [list(map(float, r)) for r in self.region]
        if self.grid is not None:
            out["grid"] = self.grid.to_dict()
        if self.extras:
            out["extras"] = {k: _clean(v) for k, v in self.extras.items()}
        return out


def _num(v):
    if v is None:
        return None
    v = float(v)
    if math.isinf(v):
        return "-inf" if v < 0 else "inf"
    return "nan" if math.isnan(v) else v


def _clean(v):
    if isinstance(v, dict):
        return {k: _clean(x) for k, x in v.items()}
    if isinstance(v, (list, tuple, np.ndarray)):
        return [_clean(x) for x in v]
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        return _num(v)
    return v


# ---------------------------------------------------------------------------
# grids


def _check_region(space, region):
    if region is None:
        return None
    (x0, x1), (y0, y1) = region
    if not (x0 < x1 and y0 < y1):
        raise InputError(f"empty region {region}")
    if not space.is_circle:
        for a in (x0, x1, y0, y1):
            if a < space.lo - 1e-12 or a > space.hi + 1e-12:
                raise InputError(f"region {region} leaves the space [{space.lo}, {space.hi}]")
    return (float(x0), float(x1)), (float(y0), float(y1))


def _axis(space, lo, hi, res, full_circle):
    if full_circle:
        return np.arange(res) / res, 0.5 / res
    return np.linspace(lo, hi, res), 0.5 * (hi - lo) / (res - 1)


def grid_pairs(space, region, res: int):
    """Grid pairs (xs, ys) and the half cell widths (hx, hy) of the pair cells."""
    if region is None or region[0] == region[1]:
        lo, hi = (space.lo, space.hi) if region is None else region[0]
        pts, h = _axis(space, lo, hi, res, region is None and space.is_circle)
        i, j = np.triu_indices(res, 1)
        return pts[i], pts[j], h, h
    (x0, x1), (y0, y1) = region
    px, hx = _axis(space, x0, x1, res, False)
    py, hy = _axis(space, y0, y1, res, False)
    X, Y = np.meshgrid(px, py, indexing="ij")
    return X.ravel(), Y.ravel(), hx, hy


def _diag_points(space, region, res):
    if region is None:
        return _axis(space, space.lo, space.hi, res, space.is_circle)[0]
    lo = max(region[0][0], region[1][0])
    hi = min(region[0][1], region[1][1])
    if lo >= hi:
        return np.zeros(0)
    return np.linspace(lo, hi, res)


def _admissible(space, metric, xs, ys, grid: GridParams):
    d = space.dist(xs, ys)
    keep = d >= grid.band * space.diameter
    if grid.min_metric > 0 or math.isfinite(grid.max_metric):
        m = np.zeros_like(d)
        m[keep] = metric.evaluate(space, xs[keep], ys[keep])
        keep &= (m >= grid.min_metric) & (m < grid.max_metric)
    return keep


# ---------------------------------------------------------------------------
# Lipschitz moduli for padding


def _phi(system, beta, first=None):
    L = np.asarray(first if first is not None else [m.lipschitz() for m in system.maps], dtype=float)
    p = np.asarray(system.probs)
    with np.errstate(divide="ignore"):
        return float(np.sum(p * np.where(L > 0, L**beta, 0.0)))


def _region_lipschitz(system, region):
    if region is None or system.space.is_circle:
        return [m.lipschitz() for m in system.maps]
    lo = min(region[0][0], region[1][0])
    hi = max(region[0][1], region[1][1])
    return [m.lipschitz_on(lo, hi) for m in system.maps]


def metric_modulus(system, metric: MetricExpr):
    """(M, beta) with metric(x, x') <= M d(x, x')^beta, or None when no bound is available."""
    if isinstance(metric, Base):
        return 1.0, 1.0
    if isinstance(metric, Power):
        inner = metric_modulus(system, metric.inner)
        return None if inner is None else (inner[0] ** metric.alpha, inner[1] * metric.alpha)
    inner_metric = getattr(metric, "inner", None)
    inner = None if inner_metric is None else metric_modulus(system, inner_metric)
    if inner is None:
        return None
    M, beta = inner
    phi = _phi(system, beta)
    if isinstance(metric, EcaSum):
        return M * sum(w * phi**j for j, w in enumerate(metric.weights)), beta
    if isinstance(metric, Expected):
        return M * phi**metric.n, beta
    if isinstance(metric, GeomSeries):
        # the whole series is dominated by sum (q phi / lam)^n d^beta when that ratio is < 1
        rho = metric.q * phi / metric.lam
        if rho < 1.0:
            return M / (1.0 - rho), beta
    return None


def _global_bound(system, metric, n, region):
    """Sup of E(Z_n)/metric from Lipschitz constants (pure powers of d only)."""
    b = metric.basis()
    if b is None or b.coeffs != (1.0,) or b.tails or not isinstance(b.family, PsiFamily) or b.family.system is not None:
        return None
    a = b.family.alpha
    return _phi(system, a, _region_lipschitz(system, region)) * _phi(system, a) ** (n - 1)


# ---------------------------------------------------------------------------
# ratio evaluation


@dataclass
class _Eval:
    xs: np.ndarray
    ys: np.ndarray
    up: np.ndarray  # upper bracket of the ratio
    lo: np.ndarray  # lower bracket of the ratio
    num_hi: np.ndarray
    den_lo: np.ndarray
    skipped: int


def _ratios(system, metric, xs, ys, n) -> _Eval:
    lo, hi = metric_profile(system, metric, xs, ys, n)
    num_lo, num_hi = lo[:, n], hi[:, n]
    den_lo, den_hi = lo[:, 0], hi[:, 0]
    ok = den_lo > 0
    with np.errstate(divide="ignore", invalid="ignore"):
        up = np.where(ok, num_hi / den_lo, np.nan)
        low = np.where(ok, num_lo / np.where(den_hi > 0, den_hi, np.inf), np.nan)
    return _Eval(xs, ys, up, low, num_hi, den_lo, int((~ok).sum()))


def _padded(ev: _Eval, mod, num_factor, hx, hy):
    if mod is None:
        return np.full(ev.up.shape, np.inf)
    M, beta = mod
    e = M * (np.asarray(hx) ** beta + np.asarray(hy) ** beta)
    den = ev.den_lo - e
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(den > 0, (ev.num_hi + num_factor * e) / den, np.inf)


def _diag_limits(system, metric, pts, n):
    """h -> 0 limit of the step-n ratio at diagonal points, for metrics linear in a power of d."""
    b = metric.basis()
    if b is None or b.tails or not isinstance(b.family, PsiFamily) or pts.size == 0:
        return None
    c = np.asarray(b.coeffs)
    g = kernels.deriv_profile(system.packed, pts, c.size - 1 + n, b.family.alpha)
    num = g[:, n:n + c.size] @ c
    den = g[:, :c.size] @ c
    return num / den


def _refine_points(space, region, ev: _Eval, hx, hy, grid: GridParams):
    finite = np.where(np.isnan(ev.up), -np.inf, ev.up)
    m = min(grid.max_refine, max(1, int(math.ceil(grid.refine_fraction * finite.size))))
    worst = np.argsort(-finite, kind="stable")[:m]
    f = grid.refine_factor
    off = (2.0 * (np.arange(f) + 0.5) / f - 1.0)
    ux, uy = np.meshgrid(off * hx, off * hy, indexing="ij")
    xs = (ev.xs[worst, None] + ux.ravel()[None, :]).ravel()
    ys = (ev.ys[worst, None] + uy.ravel()[None, :]).ravel()
    if space.is_circle:
        xs, ys = np.mod(xs, 1.0), np.mod(ys, 1.0)
    else:
        bx = region[0] if region is not None else (space.lo, space.hi)
        by = region[1] if region is not None else (space.lo, space.hi)
        xs, ys = np.clip(xs, *bx), np.clip(ys, *by)
    return xs, ys


_CONDITIONS = {"CA": (1.0, True), "NEA": (1.0, False)}


def _decide(rate_bound, witness_ratio, threshold, strict, tol, margin):
    eff = (threshold * (1.0 - margin) if strict else threshold) + tol
    if rate_bound <= eff:
        return "Certified"
    if witness_ratio > eff:
        return "Refuted"
    return "Inconclusive"


def certify_ratio_bound(system, metric: MetricExpr, n: int = 1, region=None, grid: GridParams = GridParams(),
                        threshold: float | None = None, condition: str = "CA", soundness: str = PADDED,
                        tol: float = 1e-9, margin: float = MARGIN, strict: bool | None = None) -> Certificate:
    """Bound sup E(Z_n)/metric over grid pairs of ``region`` (pairs off the diagonal band)."""
    space = system.space
    region = _check_region(space, region)
    _check_depth(system, metric, n)
    if condition.startswith("kECA"):
        dthr, dstrict = 1.0, True
    else:
        dthr, dstrict = _CONDITIONS.get(condition, (1.0, True))
    threshold = dthr if threshold is None else float(threshold)
    strict = dstrict if strict is None else strict
    if soundness not in (SAMPLED, PADDED):
        soundness = PADDED if soundness.lower().startswith("p") else SAMPLED

    xs, ys, hx, hy = grid_pairs(space, region, grid.resolution)
    keep = _admissible(space, metric, xs, ys, grid)
    if not keep.any():
        raise InputError("no admissible grid pairs in the region")
    ev = _ratios(system, metric, xs[keep], ys[keep], n)
    mod = metric_modulus(system, metric)
    nf = 0.0 if mod is None else _phi(system, mod[1]) ** n
    pad = _padded(ev, mod, nf, hx, hy) if soundness == PADDED else None
    evals = [ev]
    refined = 0
    if grid.refine and ev.up.size:
        rx, ry = _refine_points(space, region, ev, hx, hy, grid)
        k2 = _admissible(space, metric, rx, ry, grid)
        if k2.any():
            ev2 = _ratios(system, metric, rx[k2], ry[k2], n)
            evals.append(ev2)
            refined = int(k2.sum())
            if pad is not None:
                f = grid.refine_factor
                pad = np.concatenate([pad, _padded(ev2, mod, nf, hx / f, hy / f)])
    up = np.concatenate([e.up for e in evals])
    low = np.concatenate([e.lo for e in evals])
    pxs = np.concatenate([e.xs for e in evals])
    pys = np.concatenate([e.ys for e in evals])
    skipped = sum(e.skipped for e in evals)

    valid = ~np.isnan(up)
    k = int(np.argmax(np.where(valid, up, -np.inf)))
    sampled_max = float(up[k]) if valid.any() else math.nan
    kw = int(np.argmax(np.where(valid, low, -np.inf)))
    witness, witness_ratio = (float(pxs[kw]), float(pys[kw])), float(low[kw])
    extras = {"n_pairs": int(up.size), "refined_pairs": refined, "zero_metric_skipped": skipped, "n": int(n)}
    gap = up - low
    fin = np.isfinite(gap)
    extras["bracket_slack"] = float(np.max(gap[fin])) if fin.any() else math.inf

    diag = _diag_points(space, region, grid.resolution)
    lim = _diag_limits(system, metric, diag, n)
    if lim is not None:
        bad = np.isnan(lim)
        extras["diagonal_breakpoints_skipped"] = int(bad.sum())
        if (~bad).any():
            j = int(np.argmax(np.where(bad, -np.inf, lim)))
            extras["diagonal_limit_max"] = float(lim[j])
            if lim[j] > sampled_max or math.isnan(sampled_max):
                sampled_max = float(lim[j])
            if lim[j] > witness_ratio:
                witness, witness_ratio = (float(diag[j]), float(diag[j])), float(lim[j])
                extras["witness_kind"] = "diagonal_limit"

    if soundness == PADDED:
        cells = float(np.max(pad[valid])) if valid.any() else math.inf
        glob = _global_bound(system, metric, n, region)
        rate = cells if glob is None else min(cells, glob)
        extras["cell_padding_max"] = cells
        if glob is not None:
            extras["global_lipschitz_bound"] = glob
        rate = max(rate, sampled_max)
    else:
        rate = sampled_max
    verdict = _decide(rate, witness_ratio, threshold, strict, tol, margin)
    name = condition if not condition.startswith("kECA") else f"kECA({n})"
    return Certificate(name, rate, witness, witness_ratio, verdict, soundness, threshold, region, grid,
                       sampled_max, extras)


# ---------------------------------------------------------------------------
# searches


def search_k_eca(system, metric: MetricExpr, k_max: int, grid: GridParams = GridParams(resolution=128),
                 soundness: str = SAMPLED, margin: float = MARGIN):
    """Smallest k <= k_max whose step-k certificate has rate < 1; returns (k, lambda, certificate) or None."""
    space = system.space
    _check_depth(system, metric, k_max)
    xs, ys, _, _ = grid_pairs(space, None, grid.resolution)
    keep = _admissible(space, metric, xs, ys, grid)
    xs, ys = xs[keep], ys[keep]
    lo, hi = metric_profile(system, metric, xs, ys, k_max)
    diag = _diag_points(space, None, grid.resolution)
    for k in range(1, k_max + 1):
        with np.errstate(divide="ignore", invalid="ignore"):
            coarse = float(np.nanmax(hi[:, k] / lo[:, 0]))
        lim = _diag_limits(system, metric, diag, k)
        if lim is not None and np.any(~np.isnan(lim)):
            coarse = max(coarse, float(np.nanmax(lim)))
        if coarse > 1.0 - margin:
            continue
        cert = certify_ratio_bound(system, metric, k, None, grid, condition="kECA", soundness=soundness,
                                   margin=margin)
        if cert.certified:
            return k, cert.rate_bound, cert
    return None


def search_alpha(system, margin: float = MARGIN):
    """Largest alpha in (0, 1] with phi(alpha) = E L^alpha <= 1 - margin, or None when E log L >= 0."""
    ld = system.lipschitz_data()
    if not ld.mean_log < 0:
        return None
    target = 1.0 - margin

    def phi(a):
        return _phi(system, a)

    if phi(1.0) <= target:
        return 1.0, phi(1.0)
    res = optimize.minimize_scalar(phi, bounds=(1e-9, 1.0), method="bounded", options={"xatol": 1e-12})
    a_min = float(res.x)
    if phi(a_min) > target:
        return None
    lo, hi = a_min, 1.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if phi(mid) <= target:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-14:
            break
    return lo, phi(lo)


def certify_log_ratio_bound(system, metric: MetricExpr = Base(), region=None, grid: GridParams = GridParams(),
                            epsilon: float | None = None, soundness: str = PADDED, tol: float = 1e-9,
                            margin: float = MARGIN) -> Certificate:
    """Bound sup E log(Z_1/d); Certified when the bound is <= log(1 - margin)."""
    from .expect import _psi_alpha

    space = system.space
    region = _check_region(space, region)
    alpha = _psi_alpha(metric)
    if alpha is None:
        raise InputError("log-ratio certification supports Base or Power(Base)")
    if epsilon is not None:
        grid = GridParams(grid.resolution, grid.band, grid.refine, grid.refine_factor, grid.refine_fraction,
                          grid.max_refine, grid.min_metric, float(epsilon))
    xs, ys, hx, hy = grid_pairs(space, region, grid.resolution)
    keep = _admissible(space, metric, xs, ys, grid)
    if not keep.any():
        raise InputError("no admissible grid pairs in the region")
    xs, ys = xs[keep], ys[keep]
    s, neg = kernels.log_profile(system.packed, xs, ys, 1)
    val = np.where(neg[:, 1] > 0, -np.inf, alpha * s[:, 1])
    if grid.refine and val.size:
        ev = _Eval(xs, ys, val, val, val, val, 0)
        rx, ry = _refine_points(space, region, ev, hx, hy, grid)
        k2 = _admissible(space, metric, rx, ry, grid)
        s2, n2 = kernels.log_profile(system.packed, rx[k2], ry[k2], 1)
        xs, ys = np.concatenate([xs, rx[k2]]), np.concatenate([ys, ry[k2]])
        val = np.concatenate([val, np.where(n2[:, 1] > 0, -np.inf, alpha * s2[:, 1])])
    k = int(np.argmax(val))
    sampled, witness = float(val[k]), (float(xs[k]), float(ys[k]))
    extras = {"n_pairs": int(val.size), "neg_inf_pairs": int(np.isneginf(val).sum())}
    diag = _diag_points(space, region, grid.resolution)
    if diag.size:
        with np.errstate(divide="ignore", invalid="ignore"):
            g = sum(p * np.log(np.abs(kernels.deriv_np(system.packed, i, diag)))
                    for i, p in enumerate(system.probs)) * alpha
        bad = np.isnan(g)
        extras["diagonal_breakpoints_skipped"] = int(bad.sum())
        if (~bad).any():
            j = int(np.argmax(np.where(bad, -np.inf, g)))
            extras["diagonal_limit_max"] = float(g[j])
            if g[j] > sampled:
                sampled, witness = float(g[j]), (float(diag[j]), float(diag[j]))
    rate = sampled
    if soundness == PADDED:
        L = np.asarray(_region_lipschitz(system, region), dtype=float)
        with np.errstate(divide="ignore"):
            glob = alpha * float(np.sum(np.asarray(system.probs) * np.log(L)))
        extras["global_lipschitz_bound"] = glob
        rate = max(glob, sampled)
    thr = math.log(1.0 - margin)
    verdict = "Certified" if rate <= thr else ("Refuted" if sampled > thr + tol else "Inconclusive")
    cond = "logCA" if epsilon is None else f"epsLocalLogCA({epsilon:g})"
    return Certificate(cond, rate, witness, sampled, verdict, soundness if soundness == PADDED else SAMPLED, thr,
                       region, grid, sampled, extras)


# ---------------------------------------------------------------------------
# local profiles


def _probe_pairs(space, centers, h):
    xs, ys = centers - h, centers + h
    if space.is_circle:
        return np.mod(xs, 1.0), np.mod(ys, 1.0)
    return np.clip(xs, space.lo, space.hi), np.clip(ys, space.lo, space.hi)


def check_local_contraction_profile(system, metric: MetricExpr, centers, ell_max: int,
                                    offsets=(1e-2, 1e-3, 1e-4, 1e-5, 1e-6), margin: float = MARGIN,
                                    eps: float | None = None, ells=None, min_metric: float = 0.0) -> list[Certificate]:
    """Near-diagonal ratios E(Z_l^{x-h,x+h})/metric(x-h,x+h) per center, l = 1..ell_max (or ``ells``)."""
    space = system.space
    centers = np.atleast_1d(np.asarray(centers, dtype=float))
    offsets = np.asarray(sorted(offsets, reverse=True), dtype=float)
    ells = list(range(1, ell_max + 1)) if ells is None else sorted(int(v) for v in ells)
    depth = max(ells)
    eps = margin if eps is None else eps
    P, H = centers.size, offsets.size
    xs = np.empty((P, H))
    ys = np.empty((P, H))
    for j, h in enumerate(offsets):
        xs[:, j], ys[:, j] = _probe_pairs(space, centers, h)
    lo, hi = metric_profile(system, metric, xs.ravel(), ys.ravel(), depth)
    den = lo[:, 0].reshape(P, H)
    with np.errstate(divide="ignore", invalid="ignore"):
        R = np.stack([(hi[:, l] / lo[:, 0]).reshape(P, H) for l in ells], axis=1)  # (P, n_ell, H)
        Rlow = np.stack([(lo[:, l] / hi[:, 0]).reshape(P, H) for l in ells], axis=1)
    valid = den > max(0.0, min_metric)
    lims = None
    b = metric.basis()
    if b is not None and not b.tails and isinstance(b.family, PsiFamily):
        lims = np.stack([_diag_limits(system, metric, centers, l) for l in ells], axis=1)
    out = []
    for p in range(P):
        v = valid[p]
        best_l, best_rate = None, math.inf
        refuted_all = True
        worst_l_ratio = -math.inf
        for li, l in enumerate(ells):
            r = R[p, li, v]
            if r.size == 0:
                refuted_all = False
                continue
            rate = float(np.max(r))
            if rate < best_rate:
                best_l, best_rate = l, rate
            small = float(Rlow[p, li, v][-1])  # smallest valid offset
            worst_l_ratio = max(worst_l_ratio, small)
            if small < 1.0 - eps:
                refuted_all = False
        thr = 1.0 - max(margin, eps)  # contraction must clear the noise band too
        if best_rate <= thr:
            verdict = "Certified"
        elif refuted_all:
            verdict = "Refuted"
        else:
            verdict = "Inconclusive"
        hmin = offsets[v][-1] if v.any() else offsets[-1]
        wp = tuple(float(t[0]) for t in _probe_pairs(space, centers[p:p + 1], hmin))
        extras = {"center": float(centers[p]), "best_ell": best_l, "ratios": R[p][:, v].tolist(),
                  "offsets": offsets[v].tolist(), "ells": ells, "skipped_offsets": int((~v).sum())}
        if lims is not None:
            lp = lims[p]
            extras["derivative_limits"] = lp.tolist()
            extras["derivative_breakpoints_skipped"] = int(np.isnan(lp).sum())
        cond = f"ESCA({best_l if best_l is not None else ells[-1]})"
        out.append(Certificate(cond, best_rate, (wp[0], wp[1]), worst_l_ratio, verdict, SAMPLED, thr, None, None,
                               best_rate, extras))
    return out


def lcws_from_profile(certs: list[Certificate]) -> Certificate:
    """Aggregate the l=1 smallest-offset ratios over centers (limsup proxy)."""
    vals = []
    for c in certs:
        r = c.extras["ratios"]
        if r and r[0]:
            vals.append((r[0][-1], c.extras["center"]))
    if not vals:
        return Certificate("LCWS", math.nan, None, math.nan, "Inconclusive", SAMPLED, 1.0 - MARGIN)
    v, x = max(vals)
    verdict = "Certified" if v <= 1.0 - MARGIN else ("Refuted" if v > 1.0 - MARGIN + 1e-9 else "Inconclusive")
    return Certificate("LCWS", v, (x, x), v, verdict, SAMPLED, 1.0 - MARGIN, extras={"centers": len(certs)})


def check_leca_pairs(system, metric: MetricExpr, pairs, ell_max: int, margin: float = MARGIN,
                     mc_budget: int = 0, seed: int = 0, exact_depth: int = 16) -> list[dict]:
    """Per pair, the smallest l <= ell_max with E(Z_l)/metric < 1 - margin (None if there is none).

    Steps up to ``exact_depth`` (and the word cap) are enumerated exactly.  With
    ``mc_budget > 0`` the remaining steps up to ``ell_max`` are estimated from
    shared-word Monte Carlo paths, and a step counts only when mean + 3 stderr
    clears the threshold.
    """
    from .dynamics import _path_values

    pairs = np.asarray(pairs, dtype=float).reshape(-1, 2)
    n_exact = min(ell_max, exact_depth) if mc_budget > 0 else ell_max
    while n_exact > 0 and system.n_maps ** n_exact > ENUM_CAP:
        n_exact -= 1
    if n_exact < ell_max and mc_budget <= 0:
        check_cap(system, ell_max)
    lo, hi = metric_profile(system, metric, pairs[:, 0], pairs[:, 1], n_exact)
    thr = 1.0 - margin
    out = []
    for p in range(pairs.shape[0]):
        ell, ratio, mode = None, math.nan, "Exact"
        for l in range(1, n_exact + 1):
            r = hi[p, l] / lo[p, 0] if lo[p, 0] > 0 else math.inf
            if r < thr:
                ell, ratio = l, float(r)
                break
        if ell is None and n_exact < ell_max and lo[p, 0] > 0:
            rng = np.random.default_rng([seed, p])
            syms = draw_symbols(rng, system.probs, (mc_budget, ell_max))
            vals = _path_values(system, metric, pairs[p, 0], pairs[p, 1], syms)[:, n_exact + 1:]
            upper = (vals.mean(axis=0) + 3.0 * vals.std(axis=0, ddof=1) / math.sqrt(mc_budget)) / lo[p, 0]
            hit = np.nonzero(upper < thr)[0]
            if hit.size:
                ell, ratio, mode = n_exact + 1 + int(hit[0]), float(upper[hit[0]]), "MonteCarlo"
        out.append({"pair": [float(pairs[p, 0]), float(pairs[p, 1])], "ell": ell, "ratio": _num(ratio),
                    "mode": mode})
    return out


def estimate_growth_exponent(system, metric: MetricExpr = Base(), n: int = 1,
                             grid: GridParams = GridParams(resolution=64, refine=False)) -> float:
    """Sampled sup over grid pairs of E log(Z_n/d), divided by n."""
    from .expect import _psi_alpha

    alpha = _psi_alpha(metric)
    if alpha is None:
        raise InputError("growth exponent supports Base or Power(Base)")
    check_cap(system, n)
    xs, ys, _, _ = grid_pairs(system.space, None, grid.resolution)
    keep = _admissible(system.space, metric, xs, ys, grid)
    s, neg = kernels.log_profile(system.packed, xs[keep], ys[keep], n)
    val = np.where(neg[:, n] > 0, -np.inf, alpha * s[:, n])
    return float(np.max(val)) / n
