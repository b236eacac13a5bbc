"""YAML analysis configs: parsing, validation with line numbers, and example configs."""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .catalog import NAMES

CONFIG_SCHEMA = 1
TASK_KINDS = ("certify", "search", "build_metric", "simulate", "reproduce")
CONDITIONS = ("CA", "NEA", "kECA", "logCA", "ESCA")
SEARCH_KINDS = ("alpha", "k_eca")
METRIC_KINDS = ("power", "eca", "geometric_series", "sup", "stationary_gap")
SIM_KINDS = ("chain", "stationary", "synchronization", "hitting", "drift")
EXPECTS = ("Certified", "Refuted", "Inconclusive", "Holds", "Fails")


class ConfigError(Exception):
    """A config problem tied to a field path and, when known, a 1-based line."""

    def __init__(self, msg: str, path: tuple = (), line: int | None = None):
        self.msg, self.path, self.line = msg, tuple(path), line
        where = ".".join(str(p) for p in self.path) or "<root>"
        loc = f" (line {line})" if line is not None else ""
        super().__init__(f"{where}{loc}: {msg}")


@dataclass
class AnalysisConfig:
    system: dict
    metrics: dict = field(default_factory=dict)
    tasks: list = field(default_factory=list)
    seed: int = 0
    tolerances: dict = field(default_factory=dict)
    output: dict = field(default_factory=dict)
    raw: dict = field(default_factory=dict)


def _line_of(node, path) -> int | None:
    """Walk a composed YAML node along ``path`` and return the deepest line found."""
    line = None
    for key in path:
        if node is None:
            break
        line = node.start_mark.line + 1
        if isinstance(node, yaml.MappingNode):
            nxt = None
            for k, v in node.value:
                if k.value == key:
                    nxt = v
                    line = k.start_mark.line + 1
                    break
            node = nxt
        elif isinstance(node, yaml.SequenceNode) and isinstance(key, int) and key < len(node.value):
            node = node.value[key]
        else:
            node = None
    if node is not None:
        line = node.start_mark.line + 1
    return line


class _Validator:
    def __init__(self, root_node):
        self.root = root_node

    def fail(self, msg, path):
        raise ConfigError(msg, path, _line_of(self.root, path))

    def mapping(self, v, path):
        if not isinstance(v, dict):
            self.fail("expected a mapping", path)
        return v

    def choice(self, v, options, path):
        if v not in options:
            self.fail(f"{v!r} is not one of {', '.join(map(str, options))}", path)
        return v

    def number(self, v, path, lo=None, hi=None):
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            self.fail(f"expected a number, got {v!r}", path)
        if (lo is not None and v < lo) or (hi is not None and v > hi):
            self.fail(f"{v} out of range [{lo}, {hi}]", path)
        return v


def _validate(data, node) -> AnalysisConfig:
    val = _Validator(node)
    if data is None:
        data = {}
    val.mapping(data, ())
    unknown = set(data) - {"schema", "seed", "system", "metrics", "tasks", "tolerances", "output"}
    for k in sorted(unknown):
        val.fail("unknown top-level field", (k,))
    schema = data.get("schema", CONFIG_SCHEMA)
    if schema != CONFIG_SCHEMA:
        val.fail(f"unsupported schema version {schema!r} (expected {CONFIG_SCHEMA})", ("schema",))
    seed = data.get("seed", 0)
    if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
        val.fail("seed must be a nonnegative integer", ("seed",))
    tasks = data.get("tasks") or []
    if not isinstance(tasks, list):
        val.fail("expected a list of tasks", ("tasks",))
    system = data.get("system")
    if system is None:
        if any(not (isinstance(t, dict) and "reproduce" in t) for t in tasks):
            val.fail("a system is required unless every task is a reproduce task", ("system",))
        system = {}
    else:
        val.mapping(system, ("system",))
        if "example" in system:
            val.choice(system["example"], NAMES, ("system", "example"))
        elif "inline" in system:
            val.mapping(system["inline"], ("system", "inline"))
            for k in ("space", "maps", "probs"):
                if k not in system["inline"]:
                    val.fail("missing field", ("system", "inline", k))
        else:
            val.fail("needs 'example' or 'inline'", ("system",))
    metrics = data.get("metrics") or {}
    val.mapping(metrics, ("metrics",))
    defined = {"d", *metrics}
    for name, m in metrics.items():
        if m != "base" and not (isinstance(m, dict) and "node" in m):
            val.fail("metric must be 'base' or a node mapping", ("metrics", name))
    tol = data.get("tolerances") or {}
    val.mapping(tol, ("tolerances",))
    for k, v in tol.items():
        val.choice(k, ("tol", "margin", "eps_mc"), ("tolerances", k))
        val.number(v, ("tolerances", k), 0.0, 1.0)
    out = data.get("output") or {}
    val.mapping(out, ("output",))
    for i, t in enumerate(tasks):
        path = ("tasks", i)
        if not isinstance(t, dict) or len(t) != 1:
            val.fail(f"each task is a single-key mapping with key in {TASK_KINDS}", path)
        kind, body = next(iter(t.items()))
        val.choice(kind, TASK_KINDS, path)
        if kind == "reproduce":
            name = body if isinstance(body, str) else (body or {}).get("example")
            val.choice(name, NAMES, path + ("reproduce",))
            continue
        val.mapping(body, path + (kind,))
        if "expect" in body:
            val.choice(body["expect"], EXPECTS, path + (kind, "expect"))
        mref = body.get("metric", "d")
        if kind in ("certify", "search", "build_metric", "simulate") and mref not in defined:
            val.fail(f"metric {mref!r} is not defined by metrics or an earlier build_metric task",
                     path + (kind, "metric"))
        if kind == "certify":
            val.choice(body.get("condition"), CONDITIONS, path + (kind, "condition"))
            if "n" in body:
                val.number(body["n"], path + (kind, "n"), 1, 64)
        elif kind == "search":
            val.choice(body.get("kind"), SEARCH_KINDS, path + (kind, "kind"))
            if body.get("name"):
                defined.add(body["name"])
        elif kind == "build_metric":
            val.choice(body.get("kind"), METRIC_KINDS, path + (kind, "kind"))
            if not body.get("name"):
                val.fail("build_metric needs a name", path + (kind, "name"))
            defined.add(body["name"])
        elif kind == "simulate":
            val.choice(body.get("kind"), SIM_KINDS, path + (kind, "kind"))
    return AnalysisConfig(system, metrics, tasks, seed, tol, out, data)


def parse_config(text: str) -> AnalysisConfig:
    try:
        node = yaml.compose(text, Loader=yaml.SafeLoader)
        data = yaml.safe_load(text)
    except yaml.YAMLError as e:
        mark = getattr(e, "problem_mark", None)
        raise ConfigError(f"YAML syntax error: {getattr(e, 'problem', e)}", (),
                          None if mark is None else mark.line + 1) from e
    return _validate(data, node)


def load_config(path) -> AnalysisConfig:
    return parse_config(Path(path).read_text())


def example_config(name: str, seed: int = 0) -> dict:
    """A config that reruns the named example's expectation checks."""
    if name not in NAMES:
        raise ConfigError(f"unknown example {name!r}", ("reproduce",))
    return {"schema": CONFIG_SCHEMA, "seed": seed, "system": {"example": name},
            "tasks": [{"reproduce": name}]}


def dump_config(cfg: dict) -> str:
    return yaml.safe_dump(cfg, sort_keys=False)
