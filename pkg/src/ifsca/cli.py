"""Command line: ``ifsca run | reproduce | list-examples``."""
from __future__ import annotations

import argparse
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import _accel
from ._rng import derive_seed
from .adapt import (SimParams, eca_metric, export_metric, geometric_series_metric, power_metric, ratio_range,
                    stationary_gap_metric, sup_metric)
from .catalog import NAMES, build_example, invariant_arc
from .certify import (PADDED, GridParams, certify_log_ratio_bound, certify_ratio_bound,
                      check_local_contraction_profile, search_alpha, search_k_eca)
from .config import AnalysisConfig, ConfigError, dump_config, example_config, load_config, parse_config
from .dynamics import (DriftSpec, check_drift_condition, estimate_stationary_measure, hitting_time_contraction,
                       simulate_chain, synchronization_profile)
from .errors import IfscaError
from .ifs import IfsSystem
from .reproduce import random_pairs, reproduce
from .report import Report
from .space import Base, InvariantArc, metric_from_node

log = logging.getLogger("ifsca")

EXIT_OK, EXIT_ERROR, EXIT_EXPECTATION = 0, 1, 2


class _Context:
    def __init__(self, cfg: AnalysisConfig, seed: int):
        self.cfg = cfg
        self.seed = seed
        self.example = None
        self.system = None
        sysc = cfg.system
        if "example" in sysc:
            self.example = build_example(sysc["example"], sysc.get("params"))
            self.system = self.example.system
        elif "inline" in sysc:
            self.system = IfsSystem.from_dict(sysc["inline"])
        refs = {"system": self.system}
        self.metrics = {"d": Base()}
        for name, node in cfg.metrics.items():
            self.metrics[name] = Base() if node == "base" else metric_from_node(node, refs)
        tol = cfg.tolerances
        self.tol = float(tol.get("tol", 1e-9))
        self.margin = float(tol.get("margin", 1e-3))
        self.eps_mc = float(tol.get("eps_mc", 1e-2))

    def metric(self, body):
        return self.metrics[body.get("metric", "d")]


def _grid(body) -> GridParams:
    g = dict(body.get("grid") or {})
    if "max_metric" in g:
        g["max_metric"] = float(g["max_metric"])
    return GridParams(**g)


def _region(body):
    r = body.get("region")
    return None if r is None else tuple(tuple(float(v) for v in side) for side in r)


def _task_certify(ctx: _Context, body, seed):
    cond = body["condition"]
    metric = ctx.metric(body)
    soundness = body.get("soundness", PADDED)
    tol = float(body.get("tol", ctx.tol))
    if cond in ("CA", "NEA", "kECA"):
        cert = certify_ratio_bound(ctx.system, metric, int(body.get("n", 1)), _region(body), _grid(body),
                                   body.get("threshold"), cond, soundness, tol, ctx.margin)
        return cert.to_dict(), cert.verdict, {}
    if cond == "logCA":
        cert = certify_log_ratio_bound(ctx.system, metric, _region(body), _grid(body), body.get("epsilon"),
                                       soundness, tol, ctx.margin)
        return cert.to_dict(), cert.verdict, {}
    centers = body.get("centers", 16)
    if isinstance(centers, int):
        centers = (np.arange(centers) + 0.5) / centers
    kw = {"margin": ctx.margin, "eps": body.get("eps"), "min_metric": float(body.get("min_metric", 0.0))}
    if "offsets" in body:
        kw["offsets"] = tuple(body["offsets"])
    certs = check_local_contraction_profile(ctx.system, metric, centers, int(body.get("ell_max", 8)), **kw)
    verdicts = [c.verdict for c in certs]
    if all(v == "Certified" for v in verdicts):
        verdict = "Certified"
    elif all(v == "Refuted" for v in verdicts):
        verdict = "Refuted"
    else:
        verdict = "Inconclusive"
    return {"condition": "ESCA", "verdict": verdict, "centers": [c.to_dict() for c in certs]}, verdict, {}


def _task_search(ctx: _Context, body, seed):
    if body["kind"] == "alpha":
        found = search_alpha(ctx.system, ctx.margin)
        if found is None:
            return {"alpha": None, "mode": "Exact"}, "Fails", {}
        a, phi = found
        if body.get("name"):
            ctx.metrics[body["name"]] = power_metric(Base(), a)
        return {"alpha": a, "phi": phi, "mode": "Exact"}, "Holds", {}
    metric = ctx.metric(body)
    r = search_k_eca(ctx.system, metric, int(body.get("k_max", 12)), _grid({"grid": body.get("grid") or
                                                                             {"resolution": 128}}),
                     margin=ctx.margin)
    if r is None:
        return {"k": None}, "Fails", {}
    k, lam, cert = r
    if body.get("name"):
        ctx.metrics[body["name"]] = eca_metric(ctx.system, metric, k, lam)
    return {"k": k, "lambda": lam, "certificate": cert.to_dict()}, "Holds", {}


def _task_build(ctx: _Context, body, seed):
    kind, name = body["kind"], body["name"]
    inner = ctx.metric(body)
    S = ctx.system
    if kind == "power":
        m = power_metric(inner, float(body["alpha"]))
    elif kind == "eca":
        m = eca_metric(S, inner, int(body["k"]), float(body["lambda"]))
    elif kind == "geometric_series":
        m = geometric_series_metric(S, inner, float(body["lambda"]), float(body["q"]), float(body["C"]),
                                    int(body.get("n_max", 64)))
    elif kind == "sup":
        inv = body.get("invariant")
        if inv == "example":
            inv = invariant_arc(ctx.example)
        elif isinstance(inv, dict):
            inv = InvariantArc(**inv)
        m = sup_metric(S, inner, int(body.get("depth", 60)), body.get("tail_policy", "frozen"), inv)
    else:
        sim = SimParams(int(body.get("burn_in", 10_000)), int(body.get("samples", 1_000_000)),
                        int(body.get("chains", 4)), seed)
        m = stationary_gap_metric(S, sim)
    ctx.metrics[name] = m
    res = {"name": name, "kind": kind}
    if body.get("export"):
        export_metric(m, body["export"])
        res["exported"] = str(body["export"])
    if kind != "stationary_gap":
        res["node"] = m.to_node({"system": S})
    if kind == "geometric_series":
        # topologically but not necessarily strongly equivalent to the inner metric: report what we see
        xs, ys = np.array(random_pairs(S.space, int(body.get("ratio_pairs", 200)), seed)).T
        lo, hi = ratio_range(S, m, xs, ys, inner)
        res["ratio_range"] = {"min": lo, "max": hi, "pairs": int(xs.size), "mode": "Sampled"}
    return res, None, {}


def _pairs(ctx, body, seed):
    if "pairs" in body:
        return [tuple(map(float, p)) for p in body["pairs"]]
    return random_pairs(ctx.system.space, int(body.get("n_pairs", 10)), seed)


def _task_simulate(ctx: _Context, body, seed):
    kind = body["kind"]
    S = ctx.system
    if kind == "chain":
        tr = simulate_chain(S, float(body.get("x0", 0.0)), int(body.get("n", 100)), seed)
        return {"start": tr.start, "final": float(tr.states[-1]), "steps": int(len(tr.symbols)), "seed": seed,
                "mode": "MonteCarlo"}, None, {}
    if kind == "stationary":
        est = estimate_stationary_measure(S, int(body.get("burn_in", 10_000)), int(body.get("samples", 100_000)),
                                          int(body.get("chains", 4)), seed)
        res = est.to_dict()
        observed = None
        if "residual_max" in body:
            observed = "Holds" if est.residual < float(body["residual_max"]) else "Fails"
        return res, observed, {}
    if kind == "synchronization":
        curves = synchronization_profile(S, ctx.metric(body), _pairs(ctx, body, seed), int(body.get("n_max", 100)),
                                         int(body.get("mc_budget", 2000)), seed)
        out = {f"pair{i:02d}": (c.mean, c.stderr) for i, c in enumerate(curves)}
        want = body.get("evidence", "negative_slope")
        if want == "flat":
            ok = all(c.flat for c in curves)
        elif want == "sa":
            ok = all(c.sa_evidence for c in curves)
        else:
            ok = all(c.slope < 0 for c in curves)
        return {"curves": [c.to_dict() for c in curves], "evidence": want}, "Holds" if ok else "Fails", out
    if kind == "hitting":
        h = hitting_time_contraction(S, ctx.metric(body), tuple(body["A"]), _pairs(ctx, body, seed),
                                     int(body.get("mc_budget", 10_000)), int(body.get("horizon", 10_000)), seed)
        observed = None
        if h.verdict == "Inconclusive":
            observed = "Inconclusive"
        elif "lambda" in body:
            observed = "Holds" if h.lambda_hat <= float(body["lambda"]) + 3 * h.stderr else "Fails"
        return h.to_dict(), observed, {}
    A = tuple(body.get("A", (S.space.lo, S.space.hi)))
    if "t" in body:
        drift = DriftSpec.exponential(float(body["t"]), A, float(body["r"]), float(body["b"]))
    else:
        drift = DriftSpec.polynomial(body["coeffs"], A, float(body["r"]), float(body["b"]))
    rep = check_drift_condition(S, drift, int(body.get("resolution", 4096)))
    return {**rep.to_dict(), "drift": drift.to_dict()}, rep.verdict, {}


def _task_reproduce(ctx: _Context, body, seed):
    name = body if isinstance(body, str) else body["example"]
    params = None if isinstance(body, str) else body.get("params")
    run = reproduce(name, params, ctx.seed)
    return run.to_dict(), "Holds" if run.ok else "Fails", run.curves


_TASKS = {"certify": _task_certify, "search": _task_search, "build_metric": _task_build,
          "simulate": _task_simulate, "reproduce": _task_reproduce}


def run_config(cfg: AnalysisConfig, seed: int | None = None) -> Report:
    """Execute the task list in order and collect a report."""
    seed = cfg.seed if seed is None else seed
    ctx = _Context(cfg, seed)
    report = Report(cfg.raw, seed)
    t_all = time.perf_counter()
    for i, task in enumerate(cfg.tasks):
        kind, body = next(iter(task.items()))
        t0 = time.perf_counter()
        log.info("task %d: %s", i, kind)
        result, observed, curves = _TASKS[kind](ctx, body, derive_seed(seed, i))
        expect = body.get("expect") if isinstance(body, dict) else None
        if kind == "reproduce" and expect is None:
            expect = "Holds"
        report.add_task(i, kind, result, expect, observed, time.perf_counter() - t0, curves)
    report.timings["total"] = time.perf_counter() - t_all
    return report


def _execute(cfg: AnalysisConfig, seed, out) -> int:
    try:
        report = run_config(cfg, seed)
    except (IfscaError, ConfigError, KeyError, TypeError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_ERROR
    out = Path(out or cfg.output.get("dir", "ifsca-out"))
    path = report.write(out)
    for t in report.tasks:
        mark = "" if "holds" not in t else (" ok" if t["holds"] else " MISMATCH")
        print(f"[{t['index']}] {t['type']}: {t.get('observed', '-')}{mark}")
    print(f"report: {path}")
    return EXIT_OK if report.expectations_hold else EXIT_EXPECTATION


def _cmd_run(args) -> int:
    try:
        cfg = load_config(args.config)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_ERROR
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_ERROR
    return _execute(cfg, args.seed, args.out)


def _cmd_reproduce(args) -> int:
    if args.example not in NAMES:
        print(f"error: unknown example {args.example!r}; known: {', '.join(NAMES)}", file=sys.stderr)
        return EXIT_ERROR
    cfg = parse_config(dump_config(example_config(args.example, args.seed or 0)))
    return _execute(cfg, args.seed, args.out or f"ifsca-out/{args.example}")


def _cmd_list(args) -> int:
    for name in NAMES:
        ex = build_example(name)
        props = ", ".join(f"{e.prop}={e.expect}" for e in ex.expected)
        print(f"{name}: {props}")
        if args.export:
            d = Path(args.export)
            d.mkdir(parents=True, exist_ok=True)
            (d / f"{name}.yaml").write_text(dump_config(example_config(name)))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="override the config seed")
    common.add_argument("--threads", type=int, default=None, help="cap numba worker threads")
    common.add_argument("--out", default=None, help="output directory for report.json and CSV sidecars")
    common.add_argument("-v", "--verbose", action="store_true")
    p = argparse.ArgumentParser(prog="ifsca", description="Average-contraction analysis of iterated function systems.")
    sub = p.add_subparsers(dest="cmd", required=True)
    r = sub.add_parser("run", parents=[common], help="run a YAML analysis config")
    r.add_argument("config")
    r.set_defaults(func=_cmd_run)
    r = sub.add_parser("reproduce", parents=[common], help="check a catalog example against its expectations")
    r.add_argument("example")
    r.set_defaults(func=_cmd_reproduce)
    r = sub.add_parser("list-examples", parents=[common], help="list catalog examples and expectations")
    r.add_argument("--export", default=None, metavar="DIR", help="also write one config per example")
    r.set_defaults(func=_cmd_list)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    _accel.set_threads(args.threads)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
