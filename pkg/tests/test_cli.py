import pytest

from qcfold import cli

import json

from typer.testing import CliRunner


@pytest.fixture
def runner():
    return CliRunner()


def invoke(runner, *args):
    return runner.invoke(cli.app, [str(arg) for arg in args])


def test_missing_scenario(runner, tmp_path):
    result = invoke(runner, "build", "-c", tmp_path / "nope.json", "-o", tmp_path)

    assert result.exit_code == cli.EXIT_USAGE


def test_invalid_scenario(runner, tmp_path):
    path = tmp_path / "bad.json"
    path.write_text('{"window": 0}')

    assert invoke(runner, "verify", "-c", path, "-o", tmp_path).exit_code == cli.EXIT_USAGE


def test_unknown_log_level(runner, tmp_path):
    result = invoke(runner, "build", "-c", "halfplane-default", "-o", tmp_path, "--log-level", "loud")

    assert result.exit_code == cli.EXIT_USAGE


def test_unknown_render_target(runner, tmp_path):
    result = invoke(runner, "render", "spiral", "-c", "halfplane-default", "-o", tmp_path)

    assert result.exit_code == 2


def test_report_needs_a_verify_run(runner, tmp_path):
    result = invoke(runner, "report", "-c", "halfplane-default", "-o", tmp_path)

    assert result.exit_code == cli.EXIT_USAGE
    assert not (tmp_path / "summary.json").exists()


def test_report_summary(runner, tmp_path):
    payload = {
        "scenario": "halfplane-default",
        "config_hash": "0" * 64,
        "schema_version": 1,
        "passed": False,
        "audits": [
            {"id": "hyperbolic.decay", "passed": True, "measured": {"exponent": 1.0}, "offending": []},
            {"id": "quasiregular.dilatation", "passed": False, "measured": {"k": 1.0}, "offending": ["k"]},
        ],
    }
    (tmp_path / "report.json").write_text(json.dumps(payload))
    result = invoke(runner, "report", "-c", "halfplane-default", "-o", tmp_path)

    assert result.exit_code == 0
    assert json.loads((tmp_path / "summary.json").read_text()) == {
        "scenario": "halfplane-default",
        "config_hash": "0" * 64,
        "passed": False,
        "failing": ["quasiregular.dilatation"],
        "audits": 2,
    }


def test_repeated_builds_are_identical(runner, tmp_path):
    first = invoke(runner, "build", "-c", "halfplane-default", "-o", tmp_path, "--log-level", "none")
    assert first.exit_code == 0, first.output
    manifest = (tmp_path / "manifest.json").read_bytes()

    second = invoke(runner, "build", "-c", "halfplane-default", "-o", tmp_path, "--log-level", "none")
    assert second.exit_code == 0, second.output
    assert "cached" in second.output
    assert (tmp_path / "manifest.json").read_bytes() == manifest

    artifacts = json.loads(manifest)["artifacts"]
    assert {"scenario.json", "blaschke.json", "partitions.json", "assemblies.json"} <= set(artifacts)


def test_failed_audit_exit_code(runner, tmp_path):
    path = tmp_path / "strict.json"
    path.write_text(
        json.dumps(
            {
                "name": "strict",
                "window": 12,
                "riemann": {"resolution": 256},
                "net": {"R": 1.0, "S": 1},
                "audit": {"oracle_tolerance": 1e-12},
            }
        )
    )
    result = invoke(runner, "verify", "-c", path, "-o", tmp_path / "out", "--log-level", "none", "-j", 2)

    assert result.exit_code == cli.EXIT_AUDIT_FAILED
    report = json.loads((tmp_path / "out" / "report.json").read_text())
    failing = {audit["id"] for audit in report["audits"] if not audit["passed"]}
    assert "riemann.oracle" in failing
    assert report["passed"] is False


def test_sparse_net_exit_code(runner, tmp_path):
    path = tmp_path / "sparse.json"
    path.write_text(json.dumps({"name": "sparse", "window": 6, "riemann": {"resolution": 256}, "net": {"R": 1000.0}}))
    result = invoke(runner, "build", "-c", path, "-o", tmp_path / "out", "--log-level", "none", "--no-cache")

    assert result.exit_code == cli.EXIT_BUILD_FAILED
