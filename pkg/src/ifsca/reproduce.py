"""Runners that check each catalog example against its declared expectations."""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .adapt import SimParams, eca_metric, stationary_gap_metric, sup_metric
from .catalog import Example, build_example, invariant_arc
from .certify import (SAMPLED, Certificate, GridParams, certify_log_ratio_bound, certify_ratio_bound,
                      check_local_contraction_profile, search_alpha, search_k_eca)
from .dynamics import DriftSpec, check_drift_condition, hitting_time_contraction, synchronization_profile
from .errors import InputError
from .expect import metric_profile
from .space import Base, Power


@dataclass
class Check:
    prop: str
    expect: str
    observed: str
    detail: dict = field(default_factory=dict)

    @property
    def holds(self) -> bool:
        return self.observed == self.expect

    def to_dict(self) -> dict:
        return {"property": self.prop, "expect": self.expect, "observed": self.observed, "holds": self.holds,
                "detail": self.detail}


@dataclass
class ExampleRun:
    name: str
    params: dict
    checks: list
    curves: dict = field(default_factory=dict)  # name -> (mean, stderr)
    info: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return all(c.holds for c in self.checks)

    def to_dict(self) -> dict:
        return {"example": self.name, "params": self.params, "checks": [c.to_dict() for c in self.checks],
                "info": self.info, "all_hold": self.ok}


def _holds(flag: bool) -> str:
    return "Holds" if flag else "Fails"


def _cert_check(prop, expect, cert: Certificate) -> Check:
    return Check(prop, expect, cert.verdict, cert.to_dict())


class _Clock:
    def __init__(self):
        self.t = {}

    def __call__(self, key):
        clock = self

        class _T:
            def __enter__(self):
                self.s = time.perf_counter()

            def __exit__(self, *a):
                clock.t[key] = time.perf_counter() - self.s

        return _T()


# ---------------------------------------------------------------------------


def run_edalat(ex: Example, seed: int = 0, clock=None) -> ExampleRun:
    S = ex.system
    checks = []
    with clock("logCA"):
        checks.append(_cert_check("logCA", "Certified", certify_log_ratio_bound(S)))
    with clock("NEA"):
        c = certify_ratio_bound(S, Base(), 1, ((0.0, 0.5), (0.0, 0.5)), condition="NEA")
    checks.append(_cert_check("NEA on [0,1/2]^2", "Refuted", c))
    with clock("search_alpha"):
        found = search_alpha(S)
        detail = {"alpha": None}
        ok = False
        if found is not None:
            a, phi = found
            cert = certify_ratio_bound(S, Power(Base(), a), 1)
            ok = phi < 1.0 and cert.certified and cert.rate_bound < 1.0
            detail = {"alpha": a, "phi": phi, "certificate": cert.to_dict()}
    checks.append(Check("search_alpha", "Holds", _holds(ok), detail))
    # geometric mean of the two slopes on [0, 1/2]
    info = {"geometric_mean_slope": math.sqrt(2.0 / 3.0)}
    return ExampleRun(ex.name, ex.params, checks, info=info)


def run_drift(ex: Example, seed: int = 0, clock=None) -> ExampleRun:
    S = ex.system
    p, t = ex.params["p"], ex.params["t"]
    checks = []
    with clock("NEA"):
        checks.append(_cert_check("NEA", "Certified", certify_ratio_bound(S, Base(), 1, condition="NEA")))
    with clock("CA_block"):
        c = certify_ratio_bound(S, Base(), 1, ((1.0, 4.0 / 3.0), (1.0, 4.0 / 3.0)))
    checks.append(_cert_check("CA on [1,4/3]^2", "Refuted", c))
    lam = p / 3.0 + (1.0 - p)
    pairs = [(0.2, 0.9), (0.0, 1.0), (1.1, 1.9), (0.5, 1.5), (0.0, 2.0)]
    with clock("hitting"):
        h = hitting_time_contraction(S, Base(), (0.0, 1.0), pairs, mc_budget=10_000, horizon=10_000, seed=seed)
    ok = h.verdict == "Estimate" and h.lambda_hat <= lam + 3.0 * h.stderr
    checks.append(Check("hitting-time contraction A=[0,1]", "Holds", _holds(ok), {"lambda": lam, **h.to_dict()}))
    r = p * math.exp(-2.0 * t / 3.0) + (1.0 - p) * math.exp(2.0 * t / 3.0)
    b = math.exp(5.0 * t / 3.0)
    with clock("drift"):
        rep = check_drift_condition(S, DriftSpec.exponential(t, (0.0, 1.0), r, b))
    checks.append(Check("drift condition", "Certified", rep.verdict, {"t": t, "r": r, "b": b, **rep.to_dict()}))
    return ExampleRun(ex.name, ex.params, checks)


def random_pairs(space, n: int, seed: int, min_gap: float = 1e-3):
    rng = np.random.default_rng(seed)
    out = []
    while len(out) < n:
        x, y = space.lo + (space.hi - space.lo) * rng.random(2)
        if float(space.dist(x, y)) > min_gap:
            out.append((float(x), float(y)))
    return out


def _sync_check(S, prop, pairs, n_max, seed, curves, mc_budget=2000):
    curves_ = synchronization_profile(S, Base(), pairs, n_max, mc_budget=mc_budget, seed=seed)
    for i, c in enumerate(curves_):
        curves[f"sync_pair{i:02d}"] = (c.mean, c.stderr)
    neg = sum(1 for c in curves_ if c.slope < 0)
    detail = {"pairs": len(pairs), "negative_slopes": neg, "sa_evidence": sum(c.sa_evidence for c in curves_),
              "n_max": n_max, "mc_budget": mc_budget, "curves": [c.to_dict() for c in curves_]}
    return Check(prop, "Holds", _holds(neg == len(pairs)), detail)


ALPHA_LADDER = (1.0, 0.5, 0.25, 0.125)


def alpha_eca_pipeline(S, k_max: int = 12, grid: GridParams = GridParams(resolution=128), ladder=ALPHA_LADDER):
    """search_alpha, falling back to a halving ladder of exponents, then search_k_eca and eca_metric."""
    found = search_alpha(S)
    alphas = [found[0]] if found is not None else list(ladder)
    tried = []
    for a in alphas:
        m = Power(Base(), a)
        r = search_k_eca(S, m, k_max, grid)
        tried.append({"alpha": a, "k": None if r is None else r[0]})
        if r is None:
            continue
        k, lam, _ = r
        cert = certify_ratio_bound(S, eca_metric(S, m, k, lam), 1, grid=grid, soundness=SAMPLED)
        return {"search_alpha": None if found is None else found[0], "alpha": a, "k": k, "lambda": lam,
                "tried": tried, "certificate": cert}
    return {"search_alpha": None if found is None else found[0], "tried": tried, "certificate": None}


RHO_SIM = SimParams(burn_in=10_000, samples=5_000_000, chains=4)
RHO_MASS_FLOOR = 0.005
EPS_MC = 1e-2


def run_circle_ns(ex: Example, seed: int = 0, clock=None) -> ExampleRun:
    S = ex.system
    checks, curves = [], {}
    with clock("synchronization"):
        checks.append(_sync_check(S, "SA", random_pairs(S.space, 20, seed), 300, seed, curves))
    with clock("NEA_d"):
        c = certify_ratio_bound(S, Base(), 1, ((0.0, 0.05), (0.0, 0.05)), condition="NEA")
    checks.append(_cert_check("NEA(d) near the repelling point", "Refuted", c))
    with clock("rho"):
        rho = stationary_gap_metric(S, SimParams(RHO_SIM.burn_in, RHO_SIM.samples, RHO_SIM.chains, seed))
    with clock("NEA_rho"):
        c = certify_ratio_bound(S, rho, 1, grid=GridParams(resolution=128, min_metric=0.05), condition="NEA",
                                soundness=SAMPLED, tol=EPS_MC)
    checks.append(_cert_check("NEA(rho)", "Certified", c))
    centers = (np.arange(32) + 0.5) / 32
    with clock("ESCA_rho"):
        cs = check_local_contraction_profile(S, rho, centers, 8, offsets=(0.02, 0.01, 0.005, 0.0025), eps=EPS_MC,
                                             min_metric=RHO_MASS_FLOOR)
    refuted = sum(c.refuted for c in cs)
    worst = min(min(r[-1] for r in c.extras["ratios"]) for c in cs)
    checks.append(Check("ESCA(rho)", "Refuted", "Refuted" if refuted == len(cs) else "Inconclusive",
                        {"centers": len(cs), "refuted": refuted, "ell_max": 8, "min_ratio": worst,
                         "eps_mc": EPS_MC, "mass_floor": RHO_MASS_FLOOR}))
    with clock("pipeline"):
        pipe = alpha_eca_pipeline(S)
    cert = pipe.pop("certificate")
    ok = cert is not None and cert.certified and cert.rate_bound < 1.0
    pipe["certificate"] = None if cert is None else cert.to_dict()
    checks.append(Check("alpha-k-ECA pipeline CA", "Certified", "Certified" if ok else "Inconclusive", pipe))
    return ExampleRun(ex.name, ex.params, checks, curves)


def hat_d(ex: Example, depth: int = 60):
    k = ex.constants
    return sup_metric(ex.system, Power(Base(), k.alpha), depth, "frozen", invariant_arc(ex))


def sandwich_check(ex: Example, H, n_pairs: int = 10_000, seed: int = 0, rel_tol: float = 1e-12) -> dict:
    k = ex.constants
    S = ex.system
    rng = np.random.default_rng(seed)
    xs, ys = rng.random(n_pairs), rng.random(n_pairs)
    keep = S.space.dist(xs, ys) > 0
    xs, ys = xs[keep], ys[keep]
    lo, hi = metric_profile(S, H, xs, ys, 0)
    da = S.space.dist(xs, ys) ** k.alpha
    low = float(np.min(lo[:, 0] / da))
    up = float(np.max(hi[:, 0] / da))
    return {"pairs": int(xs.size), "min_ratio": low, "max_ratio": up, "C": k.C, "alpha": k.alpha,
            "holds": bool(low >= 1.0 - rel_tol and up <= k.C)}


def run_two_arcs(ex: Example, seed: int = 0, clock=None) -> ExampleRun:
    S = ex.system
    k = ex.constants
    checks, curves = [], {}
    info = {"structure": ex.structure.to_dict(), "constants": k.to_dict(), "axioms": ex.extras["axioms"]}
    checks.append(Check("axioms (1)-(7)", "Holds", _holds(ex.extras["axioms"]["passed"]), ex.extras["axioms"]))
    with clock("NEA_d"):
        c = certify_ratio_bound(S, Base(), 1, ((0.0, 0.05), (0.0, 0.05)), condition="NEA")
    checks.append(_cert_check("NEA(d)", "Refuted", c))
    with clock("epsLCA_d"):
        c = certify_ratio_bound(S, Base(), 1, grid=GridParams(max_metric=1e-2), condition="CA")
    checks.append(_cert_check("epsLCA(d), eps=0.01", "Refuted", c))
    with clock("synchronization"):
        checks.append(_sync_check(S, "SA", random_pairs(S.space, 8, seed), 200, seed, curves))
    H = hat_d(ex)
    with clock("sandwich"):
        sw = sandwich_check(ex, H, seed=seed)
    checks.append(Check("hatD sandwich", "Holds", _holds(sw.pop("holds")), sw))
    with clock("NEA_hatD"):
        c = certify_ratio_bound(S, H, 1, grid=GridParams(resolution=64), condition="NEA", soundness=SAMPLED,
                                tol=1e-6)
    checks.append(_cert_check("NEA(hatD)", "Certified", c))
    with clock("ESCA_hatD"):
        cs = check_local_contraction_profile(S, H, np.arange(64) / 64, 0, ells=[k.esca_depth])
    worst = max(c.rate_bound for c in cs)
    ok = worst <= 0.5 + 1e-3
    checks.append(Check("ESCA(hatD)", "Certified", "Certified" if ok else "Inconclusive",
                        {"depth": k.esca_depth, "centers": len(cs), "max_ratio": worst, "bound": 0.5}))
    with clock("pipeline"):
        r = search_k_eca(S, H, 60, GridParams(resolution=64))
        detail = {"k": None}
        observed = "Inconclusive"
        if r is not None:
            kk, lam, _ = r
            cert = certify_ratio_bound(S, eca_metric(S, H, kk, lam), 1, grid=GridParams(resolution=64),
                                       soundness=SAMPLED)
            detail = {"k": kk, "lambda": lam, "certificate": cert.to_dict()}
            if cert.certified and cert.rate_bound < 1.0:
                observed = "Certified"
    checks.append(Check("k-ECA pipeline CA", "Certified", observed, detail))
    return ExampleRun(ex.name, ex.params, checks, curves, info)


def run_all_rotations(ex: Example, seed: int = 0, clock=None) -> ExampleRun:
    S = ex.system
    checks, curves = [], {}
    with clock("CA"):
        checks.append(_cert_check("CA", "Refuted", certify_ratio_bound(S, Base(), 1, grid=GridParams(resolution=64))))
    with clock("logCA"):
        checks.append(_cert_check("logCA", "Refuted", certify_log_ratio_bound(S, grid=GridParams(resolution=64))))
    with clock("ESCA"):
        cs = check_local_contraction_profile(S, Base(), (np.arange(16) + 0.5) / 16, 8)
    refuted = sum(c.refuted for c in cs)
    checks.append(Check("ESCA", "Refuted", "Refuted" if refuted == len(cs) else "Inconclusive",
                        {"centers": len(cs), "refuted": refuted}))
    with clock("synchronization"):
        curves_ = synchronization_profile(S, Base(), random_pairs(S.space, 5, seed), 100, mc_budget=500, seed=seed)
    for i, c in enumerate(curves_):
        curves[f"sync_pair{i:02d}"] = (c.mean, c.stderr)
    flat = all(c.flat and not c.sa_evidence for c in curves_)
    checks.append(Check("synchronization", "Refuted", "Refuted" if flat else "Inconclusive",
                        {"flat": flat, "curves": [c.to_dict() for c in curves_]}))
    return ExampleRun(ex.name, ex.params, checks, curves)


def run_uniform(ex: Example, seed: int = 0, clock=None) -> ExampleRun:
    c = certify_ratio_bound(ex.system, Base(), 1)
    return ExampleRun(ex.name, ex.params, [_cert_check("CA", "Certified", c)])


RUNNERS = {
    "edalat_logca": run_edalat,
    "drift_example": run_drift,
    "circle_ns_rotation": run_circle_ns,
    "circle_two_arcs": run_two_arcs,
    "all_rotations": run_all_rotations,
    "uniform_contraction": run_uniform,
}


def reproduce(name: str, params: dict | None = None, seed: int = 0) -> ExampleRun:
    if name not in RUNNERS:
        raise InputError(f"unknown example {name!r}; known: {', '.join(RUNNERS)}")
    clock = _Clock()
    with clock("build"):
        ex = build_example(name, params)
    run = RUNNERS[name](ex, seed, clock)
    run.timings = dict(clock.t)
    return run
