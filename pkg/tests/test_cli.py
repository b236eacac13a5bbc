import json
import textwrap
from pathlib import Path

import pytest

from ifsca.cli import EXIT_ERROR, EXIT_EXPECTATION, EXIT_OK, main, run_config
from ifsca.config import ConfigError, example_config, parse_config
from ifsca.report import REPORT_SCHEMA, dumps, strip_timings


def _write(tmp_path, text, name="cfg.yaml"):
    p = tmp_path / name
    p.write_text(textwrap.dedent(text))
    return p


def _body(path):
    return dumps(strip_timings(json.loads(path.read_text())))


def test_empty_task_list(tmp_path, capsys):
    cfg = _write(tmp_path, """
        system: {example: uniform_contraction}
        tasks: []
    """)
    assert main(["run", str(cfg), "--out", str(tmp_path / "o")]) == EXIT_OK
    doc = json.loads((tmp_path / "o" / "report.json").read_text())
    assert doc["tasks"] == [] and doc["schema"] == REPORT_SCHEMA and doc["all_expectations_hold"]


def test_reproduce_edalat(tmp_path):
    assert main(["reproduce", "edalat_logca", "--out", str(tmp_path)]) == EXIT_OK
    doc = json.loads((tmp_path / "report.json").read_text())
    checks = {c["property"]: c for c in doc["tasks"][0]["result"]["checks"]}
    assert checks["logCA"]["observed"] == "Certified"
    assert checks["NEA on [0,1/2]^2"]["observed"] == "Refuted"
    alpha = next(c for c in checks.values() if "alpha" in c["detail"])["detail"]["alpha"]
    assert alpha == pytest.approx(0.52, abs=0.005)


def test_unknown_example(capsys):
    assert main(["reproduce", "nope"]) == EXIT_ERROR
    assert "unknown example" in capsys.readouterr().err


def test_expectation_mismatch_exits_2(tmp_path):
    cfg = _write(tmp_path, """
        system: {example: all_rotations}
        tasks:
          - certify: {condition: CA, expect: Certified, grid: {resolution: 32}}
    """)
    assert main(["run", str(cfg), "--out", str(tmp_path / "o")]) == EXIT_EXPECTATION


def test_execution_error_exits_1(tmp_path, capsys):
    # depth 30 on a two-map system is past the enumeration cap
    cfg = _write(tmp_path, """
        system: {example: circle_ns_rotation}
        tasks:
          - certify: {condition: CA, n: 30}
    """)
    assert main(["run", str(cfg), "--out", str(tmp_path / "o")]) == EXIT_ERROR
    assert "error" in capsys.readouterr().err


def test_missing_config_file(tmp_path):
    assert main(["run", str(tmp_path / "absent.yaml")]) == EXIT_ERROR


def test_validation_names_field_and_line(tmp_path, capsys):
    cfg = _write(tmp_path, """\
        system: {example: uniform_contraction}
        tasks:
          - certify: {condition: CA}
          - certify: {condition: XYZ}
    """)
    assert main(["run", str(cfg)]) == EXIT_ERROR
    err = capsys.readouterr().err
    assert "tasks.1.certify.condition" in err and "line 4" in err


@pytest.mark.parametrize("text,field,line", [
    ("system: {example: nope}\n", "system.example", 1),
    ("seed: -1\nsystem: {example: edalat_logca}\n", "seed", 1),
    ("system: {example: edalat_logca}\ntasks:\n  - certify: {condition: CA, metric: m}\n",
     "tasks.0.certify.metric", 3),
    ("system: {example: edalat_logca}\nbogus: 1\n", "bogus", 2),
    ("schema: 9\nsystem: {example: edalat_logca}\n", "schema", 1),
    ("system: {example: edalat_logca}\ntasks:\n  - build_metric: {kind: power, alpha: 0.5}\n",
     "tasks.0.build_metric.name", 3),
    ("tasks:\n  - certify: {condition: CA}\n", "system", 1),  # missing: reported at the enclosing mapping
])
def test_config_errors(text, field, line):
    with pytest.raises(ConfigError) as ei:
        parse_config(text)
    assert ei.value.path == tuple(int(p) if p.isdigit() else p for p in field.split("."))
    assert ei.value.line == line


def test_yaml_syntax_error_has_line():
    with pytest.raises(ConfigError) as ei:
        parse_config("system: {example: edalat_logca\ntasks: [\n")
    assert ei.value.line is not None


def test_metric_defined_by_earlier_task():
    cfg = parse_config(textwrap.dedent("""
        system: {example: edalat_logca}
        tasks:
          - search: {kind: alpha, name: da}
          - certify: {condition: CA, metric: da}
    """))
    assert len(cfg.tasks) == 2
    with pytest.raises(ConfigError):
        parse_config(textwrap.dedent("""
            system: {example: edalat_logca}
            tasks:
              - certify: {condition: CA, metric: da}
              - search: {kind: alpha, name: da}
        """))


def test_reproduce_only_needs_no_system():
    assert parse_config("tasks:\n  - reproduce: uniform_contraction\n").system == {}


def test_pipeline_config(tmp_path):
    cfg = _write(tmp_path, """
        seed: 3
        system: {example: edalat_logca}
        tasks:
          - search: {kind: alpha, name: da, expect: Holds}
          - certify: {condition: CA, metric: da, expect: Certified}
          - build_metric: {kind: power, alpha: 0.5, name: h}
          - build_metric: {kind: geometric_series, lambda: 0.9, q: 0.95, C: 2.0, n_max: 8, name: g}
          - simulate: {kind: synchronization, pairs: [[0.1, 0.9]], n_max: 10, mc_budget: 100}
    """)
    out = tmp_path / "o"
    assert main(["run", str(cfg), "--out", str(out)]) == EXIT_OK
    doc = json.loads((out / "report.json").read_text())
    assert doc["tasks"][4]["sidecars"] == ["task04_pair00.csv"]
    assert (out / "task04_pair00.csv").read_text().startswith("n,estimate,stderr")
    rr = doc["tasks"][3]["result"]["ratio_range"]
    assert 1.0 <= rr["min"] <= rr["max"] and rr["pairs"] == 200
    assert doc["tasks"][2]["result"]["node"] == {"node": "power", "alpha": 0.5, "inner": {"node": "base"}}
    assert set(doc["csv_columns"]) == {"n", "estimate", "stderr"}


def test_byte_identical_rerun(tmp_path):
    cfg = str(Path(__file__).parents[1] / "configs" / "edalat_analysis.yaml")
    assert main(["run", cfg, "--out", str(tmp_path / "a")]) == EXIT_OK
    assert main(["run", cfg, "--out", str(tmp_path / "b")]) == EXIT_OK
    assert _body(tmp_path / "a" / "report.json") == _body(tmp_path / "b" / "report.json")
    for f in (tmp_path / "a").glob("*.csv"):
        assert f.read_bytes() == (tmp_path / "b" / f.name).read_bytes()


def test_seed_override_changes_mc(tmp_path):
    cfg = _write(tmp_path, """
        system: {example: circle_ns_rotation}
        tasks:
          - simulate: {kind: chain, x0: 0.2, n: 50}
    """)
    main(["run", str(cfg), "--out", str(tmp_path / "a"), "--seed", "1"])
    main(["run", str(cfg), "--out", str(tmp_path / "b"), "--seed", "2"])
    a = json.loads((tmp_path / "a" / "report.json").read_text())
    b = json.loads((tmp_path / "b" / "report.json").read_text())
    assert a["seed"] == 1 and b["seed"] == 2
    assert a["tasks"][0]["result"]["final"] != b["tasks"][0]["result"]["final"]


def test_list_examples_export(tmp_path, capsys):
    assert main(["list-examples", "--export", str(tmp_path)]) == EXIT_OK
    lines = capsys.readouterr().out.strip().splitlines()
    assert len(lines) == 6 and lines[0].startswith("edalat_logca:")
    cfg = parse_config((tmp_path / "drift_example.yaml").read_text())
    assert cfg.tasks == [{"reproduce": "drift_example"}]


def test_run_config_api():
    rep = run_config(parse_config("system: {example: uniform_contraction}\ntasks:\n  - certify: {condition: CA}\n"))
    assert rep.tasks[0]["observed"] == "Certified" and rep.expectations_hold
    assert "timings" not in rep.body() and "timings" in rep.document()


def test_example_config_unknown():
    with pytest.raises(ConfigError):
        example_config("nope")
