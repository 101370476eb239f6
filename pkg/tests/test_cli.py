import numpy as np
import pytest
from click.testing import CliRunner

from tbn_compiler.cli import cli
from tbn_compiler.core.evidence import evidence_by_slice, load_stream
from tbn_compiler.core.generators import static_chain
from tbn_compiler.core.oracle import query_brute
from tbn_compiler.core.parser import format_model, load_model

DETERMINISTIC = """
node x dynamic transitional-init
  states off on
  parents prev(x)
  cpt 1 0
      0 1
  initcpt 0.5 0.5

node o dynamic observable
  states off on
  parents x
  cpt 1 0
      0 1

query x
"""


@pytest.fixture
def runner():
    return CliRunner()


@pytest.fixture
def model_path(examples_dir):
    return str(examples_dir / "three_chains.tbn")


@pytest.fixture
def stream_path(examples_dir):
    return str(examples_dir / "three_chains.evidence")


@pytest.fixture
def short_stream(tmp_path):
    path = tmp_path / "short.evidence"
    path.write_text("obs e 0.1 0.9\nobs f 1 0\nadvance\nobs g 0.3 0.7\n")
    return str(path)


@pytest.fixture
def plan_path(runner, model_path, tmp_path):
    out = tmp_path / "chains.plan.json"
    result = runner.invoke(cli, ["compile", model_path, "-o", str(out)])
    assert result.exit_code == 0, result.output
    return str(out)


def parse_records(output):
    rows = []
    for line in output.strip().splitlines():
        step, target, *values = line.split()
        rows.append((int(step[2:]), target, np.array([float(v) for v in values])))
    return rows


def test_validate_ok(runner, model_path):
    result = runner.invoke(cli, ["validate", model_path])
    assert result.exit_code == 0, result.output
    assert "Model is valid" in result.output
    assert "Interface I: a, b, c, d" in result.output


def test_validate_reports_violations(runner, tmp_path, examples_dir):
    text = (examples_dir / "three_chains.tbn").read_text().replace("cpt 0.7 0.3", "cpt 0.5 0.47")
    path = tmp_path / "bad.tbn"
    path.write_text(text)
    result = runner.invoke(cli, ["validate", str(path)])
    assert result.exit_code == 1
    assert "1 violation(s)" in result.output


def test_validate_syntax_error(runner, tmp_path):
    path = tmp_path / "broken.tbn"
    path.write_text("node a sttic\n")
    result = runner.invoke(cli, ["validate", str(path)])
    assert result.exit_code == 1
    assert "line 1, column 8" in result.output


def test_missing_file(runner, tmp_path):
    result = runner.invoke(cli, ["validate", str(tmp_path / "nope.tbn")])
    assert result.exit_code == 3


def test_validate_binary_model(runner, tmp_path):
    path = tmp_path / "binary.tbn"
    path.write_bytes(b"\xff\xfe")
    result = runner.invoke(cli, ["validate", str(path)])
    assert result.exit_code == 1
    assert "Error:" in result.output
    assert "line 1, column 1: invalid UTF-8 byte 0xff" in result.output


def test_oracle_binary_stream(runner, model_path, tmp_path):
    stream = tmp_path / "binary.evidence"
    stream.write_bytes(b"obs e 0.1 0.9\n\xff\xfe\n")
    result = runner.invoke(cli, ["oracle", model_path, str(stream)])
    assert result.exit_code == 1
    assert "line 2: column 1: invalid UTF-8" in result.output


def test_run_binary_plan(runner, stream_path, tmp_path):
    plan = tmp_path / "binary.plan.json"
    plan.write_bytes(b'{"format":\xff}')
    result = runner.invoke(cli, ["run", str(plan), stream_path])
    assert result.exit_code == 1
    assert "Undecodable plan file (line 1, column 11)" in result.output


def test_missing_arguments(runner):
    assert runner.invoke(cli, ["compile"]).exit_code == 2
    assert runner.invoke(cli, ["run", "only-one"]).exit_code == 2


def test_bad_environment(runner, model_path):
    result = runner.invoke(cli, ["validate", model_path], env={"TBN_TOLERANCE": "abc"})
    assert result.exit_code == 2


def test_bad_log_level(runner, model_path):
    result = runner.invoke(cli, ["--log-level", "LOUD", "validate", model_path])
    assert result.exit_code == 2


def test_compile_writes_plan(runner, model_path, tmp_path):
    out = tmp_path / "plan.json"
    result = runner.invoke(cli, ["compile", model_path, "-o", str(out)])
    assert result.exit_code == 0, result.output
    assert out.exists()
    assert "3 factor(s)" in result.output
    assert "{(b,a),(c,a),(d,a)}" in result.output


def test_compile_default_output(runner, tmp_path):
    model = tmp_path / "chain.tbn"
    model.write_text(format_model(static_chain()))
    result = runner.invoke(cli, ["compile", str(model)])
    assert result.exit_code == 0, result.output
    assert (tmp_path / "chain.plan.json").exists()


def test_compile_is_byte_identical(runner, model_path, tmp_path):
    first, second = tmp_path / "one.json", tmp_path / "two.json"
    runner.invoke(cli, ["compile", model_path, "-o", str(first)])
    runner.invoke(cli, ["compile", model_path, "-o", str(second)])
    assert first.read_bytes() == second.read_bytes()


def test_compile_capacity_error(runner, model_path, tmp_path):
    result = runner.invoke(cli, ["compile", model_path, "-o", str(tmp_path / "p.json"), "--cap", "2"])
    assert result.exit_code == 1
    assert "cap 2" in result.output


def test_run_matches_oracle(runner, plan_path, model_path, stream_path):
    result = runner.invoke(cli, ["run", plan_path, stream_path])
    assert result.exit_code == 0, result.output
    rows = parse_records(result.output)
    assert [(step, target) for step, target, _ in rows] == [(0, "a"), (1, "b"), (2, "a"), (2, "d")]
    model = load_model(model_path)
    slices = evidence_by_slice(load_stream(stream_path))
    for step, target, values in rows:
        np.testing.assert_allclose(values, query_brute(model, target, slices, step), atol=1e-9)


def test_run_tsv(runner, plan_path, stream_path):
    result = runner.invoke(cli, ["run", plan_path, stream_path, "--format", "tsv"])
    assert result.exit_code == 0, result.output
    first = result.output.splitlines()[0].split("\t")
    assert first[:2] == ["0", "a"]
    assert len(first) == 4


def test_run_targets_at_each_advance(runner, plan_path, tmp_path):
    stream = tmp_path / "empty.evidence"
    stream.write_text("advance\nadvance\nadvance\n")
    result = runner.invoke(cli, ["run", plan_path, str(stream), "-t", "a"])
    assert result.exit_code == 0, result.output
    assert [row[:2] for row in parse_records(result.output)] == [(0, "a"), (1, "a"), (2, "a")]


def test_run_malformed_stream(runner, plan_path, tmp_path):
    stream = tmp_path / "bad.evidence"
    stream.write_text("advance\nobs e 1 x\n")
    result = runner.invoke(cli, ["run", plan_path, str(stream)])
    assert result.exit_code == 1
    assert "line 2" in result.output


def test_run_unknown_observable(runner, plan_path, tmp_path):
    stream = tmp_path / "unknown.evidence"
    stream.write_text("obs a 1 0\n")
    result = runner.invoke(cli, ["run", plan_path, str(stream)])
    assert result.exit_code == 1
    assert "line 1" in result.output


def test_run_corrupted_plan(runner, plan_path, stream_path):
    with open(plan_path, "r+", encoding="utf-8") as f:
        text = f.read().replace('"iterations":1', '"iterations":5')
        f.seek(0)
        f.write(text)
        f.truncate()
    result = runner.invoke(cli, ["run", plan_path, stream_path])
    assert result.exit_code == 1
    assert "checksum" in result.output


def test_run_impossible_evidence(runner, tmp_path):
    model = tmp_path / "det.tbn"
    model.write_text(DETERMINISTIC)
    plan = tmp_path / "det.plan.json"
    assert runner.invoke(cli, ["compile", str(model), "-o", str(plan)]).exit_code == 0
    stream = tmp_path / "det.evidence"
    stream.write_text("obs o 1 0\nadvance\nobs o 0 1\nquery x\n")
    result = runner.invoke(cli, ["run", str(plan), str(stream)])
    assert result.exit_code == 4
    assert "Impossible" in result.output


def test_oracle_command(runner, model_path, stream_path):
    result = runner.invoke(cli, ["oracle", model_path, stream_path, "-t", "b", "--step", "1"])
    assert result.exit_code == 0, result.output
    ((step, target, values),) = parse_records(result.output)
    assert (step, target) == (1, "b")
    slices = evidence_by_slice(load_stream(stream_path))
    np.testing.assert_allclose(values, query_brute(load_model(model_path), "b", slices, 1), atol=1e-9)


def test_oracle_infeasible(runner, model_path, stream_path):
    result = runner.invoke(cli, ["oracle", model_path, stream_path, "--cap", "4"])
    assert result.exit_code == 1
    assert "Oracle infeasible" in result.output


def test_diff_agrees(runner, model_path, short_stream):
    result = runner.invoke(cli, ["diff", model_path, short_stream])
    assert result.exit_code == 0, result.output
    assert "within tolerance" in result.output


def test_diff_with_plan_file(runner, model_path, short_stream, plan_path):
    result = runner.invoke(cli, ["diff", model_path, short_stream, "--plan", plan_path])
    assert result.exit_code == 0, result.output


def test_diff_oracle_cap(runner, model_path, short_stream, plan_path):
    result = runner.invoke(cli, ["diff", model_path, short_stream, "--plan", plan_path, "--cap", "4"])
    assert result.exit_code == 1
    assert "Oracle infeasible" in result.output


def test_inspect_ring(runner, examples_dir, tmp_path):
    plan = tmp_path / "ring.plan.json"
    runner.invoke(cli, ["compile", str(examples_dir / "ring.tbn"), "-o", str(plan)])
    result = runner.invoke(cli, ["inspect", str(plan)])
    assert result.exit_code == 0, result.output
    assert "(b,a),(c,a),(d,a)" in result.output
    assert "Iterations: 3" in result.output


def test_inspect_static_model(runner, tmp_path):
    model = tmp_path / "chain.tbn"
    model.write_text(format_model(static_chain()))
    plan = tmp_path / "chain.plan.json"
    runner.invoke(cli, ["compile", str(model), "-o", str(plan)])
    result = runner.invoke(cli, ["inspect", str(plan)])
    assert result.exit_code == 0, result.output
    assert "(none)" in result.output
