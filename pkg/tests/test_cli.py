import json
from pathlib import Path

from click.testing import CliRunner

from semfuzz import cli, fixtures

from conftest import GOLDEN_DIR, REPO


def _run(args):
    return CliRunner().invoke(cli.main, args)


class TestConfig:
    def test_defaults_without_file(self):
        cfg = cli.load_run_config(None, {})
        assert cfg["sampling"]["temperature"] == 0.5
        assert cfg["sampling"]["top_p"] == 0.1

    def test_flag_overrides_win(self, tmp_path):
        f = tmp_path / "cfg.json"
        f.write_text(json.dumps({"timeout_ms": 9000}))
        cfg = cli.load_run_config(str(f), {"timeout_ms": 123})
        assert cfg["timeout_ms"] == 123

    def test_none_overrides_ignored(self, tmp_path):
        f = tmp_path / "cfg.json"
        f.write_text(json.dumps({"timeout_ms": 9000}))
        assert cli.load_run_config(str(f), {"timeout_ms": None})["timeout_ms"] == 9000

    def test_hash_stable_and_ignores_output_path(self):
        a = cli.load_run_config(None, {})
        b = cli.load_run_config(None, {})
        b["paths"]["out"] = "/somewhere/else"
        assert cli.config_hash(a) == cli.config_hash(b)
        b["timeout_ms"] = 1
        assert cli.config_hash(a) != cli.config_hash(b)


class TestEvalCommands:
    def test_eval_rules_against_benchmark(self):
        res = _run(["eval", "rules",
                    "--extracted", str(GOLDEN_DIR / "rules.json"),
                    "--benchmark", str(REPO / "data/benchmark/rules_truth.json")])
        assert res.exit_code == 0
        doc = json.loads(res.output)
        assert doc["precision"] == 1.0
        assert doc["recall"] == 0.8
        assert abs(doc["f1"] - 8 / 9) < 1e-9

    def test_eval_cases_accuracy(self, tmp_path):
        manifest = tmp_path / "manifest.json"
        manifest.write_text(json.dumps({"cases": [
            {"valid": True}, {"valid": True}, {"valid": True},
            {"valid": False}]}))
        res = _run(["eval", "cases", "--manifest", str(manifest)])
        assert res.exit_code == 0
        assert json.loads(res.output)["accuracy"] == 0.75

    def test_eval_cases_empty_is_runtime_error(self, tmp_path):
        manifest = tmp_path / "manifest.json"
        manifest.write_text(json.dumps({"cases": []}))
        res = _run(["eval", "cases", "--manifest", str(manifest)])
        assert res.exit_code == 1


class TestUsageErrors:
    def test_missing_required_option(self):
        res = _run(["eval", "rules"])
        assert res.exit_code == 2

    def test_unknown_subcommand(self):
        res = _run(["nope"])
        assert res.exit_code == 2


class TestCampaignExitCodes:
    def test_vulnerability_exit_ten(self, tmp_path):
        cases_dir = GOLDEN_DIR / "cases"
        out = tmp_path / "findings.jsonl"
        # buggy HTTP fixture accepts the malformed Content-Length case
        cfg = fixtures.FixtureConfig(
            "HTTP1", bugs=frozenset({fixtures.BUG_CL_WHITESPACE}))
        with fixtures.serve(cfg) as handle:
            res = _run(["campaign", "run", "--cases", str(cases_dir),
                        "--target", f"127.0.0.1:{handle.port}",
                        "--protocol", "HTTP1", "--out", str(out)])
        assert res.exit_code == 10
        lines = [json.loads(l) for l in out.read_text().splitlines()]
        assert any(v["status"] == "PotentialVulnerability" for v in lines)

    def test_consistent_run_exits_zero(self, tmp_path):
        out = tmp_path / "findings.jsonl"
        with fixtures.serve(fixtures.FixtureConfig("HTTP1")) as handle:
            res = _run(["campaign", "run", "--cases", str(GOLDEN_DIR / "cases"),
                        "--target", f"127.0.0.1:{handle.port}",
                        "--protocol", "HTTP1", "--out", str(out)])
        assert res.exit_code == 0
        summary = json.loads(res.output)
        assert summary["potential_vulnerabilities"] == 0


class TestArtifactStamps:
    def test_manifest_carries_hash_and_version(self):
        from semfuzz.testcases import SCHEMA_VERSION
        doc = json.loads((GOLDEN_DIR / "cases" / "manifest.json").read_text())
        assert doc["schema_version"] == SCHEMA_VERSION
        assert doc["config_hash"] == cli.config_hash(
            cli.load_run_config(str(REPO / "configs/replay.json"), {}))

    def test_rules_and_strategies_stamped(self):
        for name in ("rules.json", "strategies.json"):
            doc = json.loads((GOLDEN_DIR / name).read_text())
            assert doc["schema_version"] == 1
            assert len(doc["config_hash"]) == 64
