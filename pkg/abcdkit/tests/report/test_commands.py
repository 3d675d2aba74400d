import json

from typer import Typer
from typer.testing import CliRunner

from abcdkit.report.commands import iv, simulate


def _app(command):
    app = Typer()
    app.command()(command)
    return app


def test_simulate_then_iv(tmp_path):
    runner = CliRunner()
    sim_out = tmp_path / "sim"
    result = runner.invoke(_app(simulate), ["--seed", "3", "--out", str(sim_out), "-c", "no"])
    assert result.exit_code == 0, result.output
    assert "report written to" in result.output
    assert json.loads((sim_out / "report.json").read_text())["meta"]["seed"] == 3

    iv_out = tmp_path / "iv"
    data = sim_out / "data" / "simulated.csv"
    result = runner.invoke(
        _app(iv), ["--data", str(data), "--robust", "--out", str(iv_out), "-c", "no"]
    )
    assert result.exit_code == 0, result.output
    report = json.loads((iv_out / "report.json").read_text())
    assert report["config"]["cov_type"] == "hc1"
    assert report["config"]["f_threshold"] == 10.0


def test_seed_from_the_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("ABCD_SEED", "17")
    result = CliRunner().invoke(_app(simulate), ["--out", str(tmp_path), "-c", "no"])
    assert result.exit_code == 0, result.output
    assert json.loads((tmp_path / "report.json").read_text())["meta"]["seed"] == 17


def test_failure_exit_status(tmp_path):
    data = tmp_path / "data.csv"
    data.write_text("anchor,belief\n10,1\n90,2\n")
    out = tmp_path / "out"
    result = CliRunner().invoke(_app(iv), ["--data", str(data), "--out", str(out), "-c", "no"])
    assert result.exit_code == 1
    assert json.loads((out / "error.json").read_text())["error"]["type"] == "SchemaError"
