"""Command-line entry point: one verb-noun subcommand per pipeline stage
plus an end-to-end ``pipeline`` command chaining them against the bundled
fixture servers.

Exit codes: 0 ok, 2 usage error, 10 potential vulnerabilities found,
1 runtime error.
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
import os
import sys
from pathlib import Path

import click

from . import campaign as campaign_mod
from . import codecs, fixtures, gateway, ingest, metrics, model, rules, strategies, testcases
from .messagetypes import load_message_types
from .strategies import FeedbackClass

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_USAGE = 2
EXIT_VULNS = 10

_DEFAULTS = {
    "provider": {"kind": "replay", "store": "data/replay",
                 "base_url": "", "model": ""},
    "sampling": {"temperature": gateway.DEFAULT_TEMPERATURE,
                 "top_p": gateway.DEFAULT_TOP_P},
    "concurrency": 4,
    "timeout_ms": campaign_mod.DEFAULT_TIMEOUT_MS,
    "strategy_cap": strategies.DEFAULT_STRATEGY_CAP,
    "paths": {"rfc": "", "seeds": "data/seeds", "types": "", "out": "out"},
    "campaign": {"probe": True, "responder_port": 35353,
                 "bugs": sorted(fixtures.ALL_BUGS)},
}


def _merge(base: dict, extra: dict) -> dict:
    out = dict(base)
    for k, v in extra.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def load_run_config(config_file: str | None, overrides: dict | None = None) -> dict:
    cfg = dict(_DEFAULTS)
    if config_file:
        try:
            cfg = _merge(cfg, json.loads(Path(config_file).read_text()))
        except (OSError, json.JSONDecodeError) as e:
            raise click.UsageError(f"cannot read config {config_file}: {e}")
    if overrides:
        cfg = _merge(cfg, {k: v for k, v in overrides.items() if v is not None})
    return cfg


def config_hash(cfg: dict) -> str:
    # the output location does not affect what is computed, so it is
    # excluded to keep artifacts byte-identical across checkouts
    cfg = dict(cfg)
    cfg["paths"] = {k: v for k, v in cfg.get("paths", {}).items() if k != "out"}
    return hashlib.sha256(
        json.dumps(cfg, sort_keys=True, separators=(",", ":")).encode()).hexdigest()


@dataclasses.dataclass
class _SamplingBinding:
    """Wraps a binding, forcing non-default sampling from the run config."""
    inner: object
    temperature: float
    top_p: float

    @property
    def kind(self):
        return self.inner.kind

    def complete(self, prompt, req):
        req = dataclasses.replace(req, temperature=self.temperature,
                                  top_p=self.top_p)
        return self.inner.complete(prompt, req)


def make_binding(cfg: dict):
    p = cfg["provider"]
    kind = p.get("kind", "replay")
    if kind == "replay":
        binding = gateway.ReplayBinding(Path(p["store"]))
    elif kind == "remote":
        binding = gateway.RemoteBinding(p["base_url"], p["model"],
                                        api_key=os.environ.get("LLM_API_KEY"))
    elif kind == "record":
        binding = gateway.RecordBinding(
            Path(p["store"]),
            gateway.RemoteBinding(p["base_url"], p["model"],
                                  api_key=os.environ.get("LLM_API_KEY")))
    else:
        raise click.UsageError(f"unknown provider kind {kind!r}")
    s = cfg["sampling"]
    if (s["temperature"], s["top_p"]) != (gateway.DEFAULT_TEMPERATURE,
                                          gateway.DEFAULT_TOP_P):
        binding = _SamplingBinding(binding, s["temperature"], s["top_p"])
    return binding


def _fail(message: str) -> None:
    click.echo(json.dumps({"error": message}), err=True)
    sys.exit(EXIT_RUNTIME)


def _write_json(path: Path, payload: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=1) + "\n")


def _load_types(path: str | None) -> dict:
    return load_message_types(path or None)


@click.group()
@click.option("-v", "--verbose", is_flag=True, help="debug logging to stderr")
def main(verbose):
    logging.basicConfig(level=logging.DEBUG if verbose else logging.WARNING,
                        stream=sys.stderr, format="%(levelname)s %(name)s %(message)s")


# --- rules -----------------------------------------------------------------


@main.group("rules")
def rules_group():
    """Semantic-rule construction from RFC text."""


@rules_group.command("extract")
@click.option("--rfc", "rfc_file", required=True, type=click.Path(exists=True))
@click.option("--types", "types_file", default=None, type=click.Path(exists=True))
@click.option("--seeds", "seeds_dir", required=True, type=click.Path(exists=True))
@click.option("--out", "out_file", required=True, type=click.Path())
@click.option("--config", "config_file", default=None, type=click.Path(exists=True))
def rules_extract(rfc_file, types_file, seeds_dir, out_file, config_file):
    cfg = load_run_config(config_file, {"paths": {"rfc": rfc_file,
                                                  "seeds": seeds_dir,
                                                  "types": types_file}})
    try:
        payload = _run_rules_extract(cfg)
    except (gateway.GatewayError, ingest.IngestError, OSError) as e:
        _fail(f"{type(e).__name__}: {e}")
    _write_json(Path(out_file), payload)


def _run_rules_extract(cfg: dict) -> dict:
    types = _load_types(cfg["paths"]["types"])
    corpus = ingest.load_seed_dir(cfg["paths"]["seeds"],
                                  [t for ts in types.values() for t in ts])
    binding = make_binding(cfg)
    rfc_path = Path(cfg["paths"]["rfc"])
    payload = rules.build_rules(rfc_path.read_text(), types, corpus, binding,
                                rfc_id=rfc_path.name)
    payload["config_hash"] = config_hash(cfg)
    return payload


# --- strategies ------------------------------------------------------------


@main.group("strategies")
def strategies_group():
    """Mutation-strategy generation from semantic rules."""


@strategies_group.command("gen")
@click.option("--rules", "rules_file", required=True, type=click.Path(exists=True))
@click.option("--out", "out_file", required=True, type=click.Path())
@click.option("--cap", default=None, type=int)
@click.option("--config", "config_file", default=None, type=click.Path(exists=True))
def strategies_gen(rules_file, out_file, cap, config_file):
    cfg = load_run_config(config_file, {"strategy_cap": cap})
    try:
        rule_list = rules.load_rules_file(json.loads(Path(rules_file).read_text()))
        payload = strategies.gen_all(rule_list, make_binding(cfg),
                                     cap=cfg["strategy_cap"])
    except (gateway.GatewayError, OSError, KeyError, json.JSONDecodeError) as e:
        _fail(f"{type(e).__name__}: {e}")
    payload["config_hash"] = config_hash(cfg)
    _write_json(Path(out_file), payload)


# --- cases -----------------------------------------------------------------


@main.group("cases")
def cases_group():
    """Test-case generation from strategies and seeds."""


@cases_group.command("gen")
@click.option("--strategies", "strategies_file", required=True,
              type=click.Path(exists=True))
@click.option("--seeds", "seeds_dir", required=True, type=click.Path(exists=True))
@click.option("--types", "types_file", default=None, type=click.Path(exists=True))
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--config", "config_file", default=None, type=click.Path(exists=True))
def cases_gen(strategies_file, seeds_dir, types_file, out_dir, config_file):
    cfg = load_run_config(config_file, {"paths": {"seeds": seeds_dir,
                                                  "types": types_file}})
    try:
        strategy_list = strategies.load_strategies_file(
            json.loads(Path(strategies_file).read_text()))
        _run_cases_gen(cfg, strategy_list, Path(out_dir))
    except (gateway.GatewayError, ingest.IngestError, OSError, KeyError,
            json.JSONDecodeError) as e:
        _fail(f"{type(e).__name__}: {e}")


def _run_cases_gen(cfg: dict, strategy_list, out_dir: Path) -> dict:
    types = _load_types(cfg["paths"]["types"])
    corpus = ingest.load_seed_dir(cfg["paths"]["seeds"],
                                  [t for ts in types.values() for t in ts])
    result = testcases.gen_cases(strategy_list, corpus, make_binding(cfg))
    out_dir.mkdir(parents=True, exist_ok=True)
    records = []
    for case in result["cases"]:
        message_file = wire_file = ""
        if case.valid:
            message_file = f"{case.case_id}.json"
            wire_file = f"{case.case_id}.bin"
            (out_dir / message_file).write_text(model.dump_message(case.message))
            (out_dir / wire_file).write_bytes(case.wire)
        records.append(testcases.case_record(case, message_file, wire_file))
    manifest = {
        "schema_version": result["schema_version"],
        "config_hash": config_hash(cfg),
        "accuracy": result["accuracy"],
        "cases": records,
    }
    _write_json(out_dir / "manifest.json", manifest)
    return manifest


def load_cases_dir(cases_dir: Path) -> list[testcases.TestCase]:
    manifest = json.loads((cases_dir / "manifest.json").read_text())
    out = []
    for rec in manifest["cases"]:
        message = wire = None
        if rec.get("message_file"):
            message = model.load_message((cases_dir / rec["message_file"]).read_text())
        if rec.get("wire_file"):
            wire = (cases_dir / rec["wire_file"]).read_bytes()
        out.append(testcases.TestCase(
            case_id=rec["case_id"], strategy_id=rec["strategy_id"],
            protocol=rec["protocol"], message_type=rec["message_type"],
            expected=FeedbackClass(rec["expected"]), message=message,
            wire=wire, valid=rec["valid"], error=rec.get("error", ""),
            frozen_paths=tuple(rec.get("frozen_paths", ())),
            rule_id=rec.get("rule_id", "")))
    return out


# --- campaign --------------------------------------------------------------


def _parse_target(target: str) -> tuple[str, int]:
    host, sep, port = target.rpartition(":")
    if not sep:
        raise click.UsageError(f"target must be host:port, got {target!r}")
    try:
        return host, int(port)
    except ValueError:
        raise click.UsageError(f"bad port in target {target!r}")


@main.group("campaign")
def campaign_group():
    """Test-case execution against a live target."""


@campaign_group.command("run")
@click.option("--cases", "cases_dir", required=True, type=click.Path(exists=True))
@click.option("--target", required=True)
@click.option("--protocol", required=True,
              type=click.Choice(["DNS", "HTTP1", "TLS13"]))
@click.option("--mode", default="client", type=click.Choice(["client", "responder"]))
@click.option("--transport", default=None, type=click.Choice(["tcp", "udp"]))
@click.option("--listen-port", default=0, type=int,
              help="responder mode: local port the target calls back on")
@click.option("--probe/--no-probe", default=False)
@click.option("--probe-seed", default=None, type=click.Path(exists=True))
@click.option("--timeout-ms", default=None, type=int)
@click.option("--out", "out_file", required=True, type=click.Path())
@click.option("--config", "config_file", default=None, type=click.Path(exists=True))
def campaign_run(cases_dir, target, protocol, mode, transport, listen_port,
                 probe, probe_seed, timeout_ms, out_file, config_file):
    cfg = load_run_config(config_file, {"timeout_ms": timeout_ms})
    host, port = _parse_target(target)
    transport = transport or ("udp" if protocol == "DNS" else "tcp")
    ep = campaign_mod.Endpoint(host, port, transport, mode, listen_port)
    try:
        cases = [c for c in load_cases_dir(Path(cases_dir))
                 if c.protocol == protocol]
        ccfg = campaign_mod.CampaignConfig(
            timeout_ms=cfg["timeout_ms"], probe=probe,
            probe_wire=Path(probe_seed).read_bytes() if probe_seed else None,
            probe_protocol=protocol, workers=cfg["concurrency"])
        report = campaign_mod.run_campaign(cases, ep, ccfg)
        campaign_mod.write_findings(report, out_file)
    except (OSError, KeyError, json.JSONDecodeError,
            campaign_mod.CampaignError) as e:
        _fail(f"{type(e).__name__}: {e}")
    click.echo(json.dumps(report.summary()))
    if report.potential_vulnerabilities:
        sys.exit(EXIT_VULNS)


# --- eval ------------------------------------------------------------------


@main.group("eval")
def eval_group():
    """Scoring against ground truth."""


@eval_group.command("rules")
@click.option("--extracted", required=True, type=click.Path(exists=True))
@click.option("--benchmark", required=True, type=click.Path(exists=True))
def eval_rules(extracted, benchmark):
    try:
        rule_list = rules.load_rules_file(json.loads(Path(extracted).read_text()))
        truths = json.loads(Path(benchmark).read_text())
        if isinstance(truths, dict):
            truths = truths["rules"]
        report = metrics.score_rules(rule_list, truths)
    except (OSError, KeyError, json.JSONDecodeError, metrics.MetricsError) as e:
        _fail(f"{type(e).__name__}: {e}")
    click.echo(json.dumps(report.to_json()))


@eval_group.command("cases")
@click.option("--manifest", required=True, type=click.Path(exists=True))
def eval_cases(manifest):
    try:
        doc = json.loads(Path(manifest).read_text())
        report = metrics.score_cases(doc["cases"])
    except (OSError, KeyError, json.JSONDecodeError, metrics.MetricsError) as e:
        _fail(f"{type(e).__name__}: {e}")
    click.echo(json.dumps(report))


# --- fixtures --------------------------------------------------------------


_FIXTURE_PROTOCOLS = {"dns": "DNS", "http": "HTTP1", "tls": "TLS13",
                      "DNS": "DNS", "HTTP1": "HTTP1", "TLS13": "TLS13"}


@main.group("fixtures")
def fixtures_group():
    """Reference servers with optional planted bugs."""


@fixtures_group.command("serve")
@click.option("--protocol", required=True,
              type=click.Choice(sorted(_FIXTURE_PROTOCOLS)))
@click.option("--bugs", default="", help="comma-separated bug ids")
@click.option("--port", default=0, type=int)
@click.option("--host", default="127.0.0.1")
@click.option("--upstream", default=None, help="DNS forwarding target host:port")
def fixtures_serve(protocol, bugs, port, host, upstream):
    bug_set = frozenset(b.strip() for b in bugs.split(",") if b.strip())
    try:
        cfg = fixtures.FixtureConfig(
            protocol=_FIXTURE_PROTOCOLS[protocol], bugs=bug_set, host=host,
            port=port, upstream=_parse_target(upstream) if upstream else None)
        handle = fixtures.serve(cfg)
    except fixtures.FixtureError as e:
        _fail(f"{type(e).__name__}: {e}")
    click.echo(json.dumps({"listening": f"{host}:{handle.port}",
                           "protocol": cfg.protocol, "bugs": sorted(bug_set)}))
    try:
        handle.thread.join()
    except KeyboardInterrupt:
        handle.shutdown()


# --- pipeline --------------------------------------------------------------


_PROTOCOL_BUGS = {
    "TLS13": {fixtures.BUG_PSK_NOT_LAST},
    "HTTP1": {fixtures.BUG_CL_WHITESPACE, fixtures.BUG_AE_CRASH},
    "DNS": {fixtures.BUG_DNS_EXTRA_RECORD},
}


def _pipeline_campaign(cases, protocol: str, bugs: frozenset, cfg: dict,
                       corpus) -> campaign_mod.Report:
    responder_port = cfg["campaign"]["responder_port"]
    fixture_cfg = fixtures.FixtureConfig(
        protocol=protocol, bugs=bugs,
        upstream=("127.0.0.1", responder_port) if protocol == "DNS" else None)
    probe_wire = None
    if cfg["campaign"]["probe"] and protocol != "DNS":
        probe_wire = next(e.wire for e in corpus.entries
                          if e.seed.protocol == protocol)
    with fixtures.serve(fixture_cfg) as handle:
        ep = campaign_mod.Endpoint(
            "127.0.0.1", handle.port,
            "udp" if protocol == "DNS" else "tcp",
            "responder" if protocol == "DNS" else "client",
            responder_port if protocol == "DNS" else 0)
        ccfg = campaign_mod.CampaignConfig(
            timeout_ms=cfg["timeout_ms"],
            probe=probe_wire is not None, probe_wire=probe_wire,
            probe_protocol=protocol, workers=1)
        return campaign_mod.run_campaign(cases, ep, ccfg)


def run_pipeline(cfg: dict, out_dir: Path) -> dict:
    """rules -> strategies -> cases -> campaigns against bundled fixtures."""
    out_dir.mkdir(parents=True, exist_ok=True)
    types = _load_types(cfg["paths"]["types"])
    corpus = ingest.load_seed_dir(cfg["paths"]["seeds"],
                                  [t for ts in types.values() for t in ts])

    rules_payload = _run_rules_extract(cfg)
    _write_json(out_dir / "rules.json", rules_payload)

    binding = make_binding(cfg)
    rule_list = rules.load_rules_file(rules_payload)
    strategies_payload = strategies.gen_all(rule_list, binding,
                                            cap=cfg["strategy_cap"])
    strategies_payload["config_hash"] = config_hash(cfg)
    _write_json(out_dir / "strategies.json", strategies_payload)

    strategy_list = strategies.load_strategies_file(strategies_payload)
    cases_dir = out_dir / "cases"
    _run_cases_gen(cfg, strategy_list, cases_dir)
    cases = load_cases_dir(cases_dir)

    enabled_bugs = frozenset(cfg["campaign"]["bugs"])
    buggy_verdicts, control_verdicts = [], []
    for protocol in ("DNS", "HTTP1", "TLS13"):
        subset = [c for c in cases if c.protocol == protocol]
        if not subset:
            continue
        bugs = frozenset(_PROTOCOL_BUGS[protocol] & enabled_bugs)
        buggy_verdicts += _pipeline_campaign(subset, protocol, bugs, cfg,
                                             corpus).verdicts
        control_verdicts += _pipeline_campaign(subset, protocol, frozenset(),
                                               cfg, corpus).verdicts

    buggy = campaign_mod.Report(sorted(buggy_verdicts, key=lambda v: v.case_id))
    control = campaign_mod.Report(sorted(control_verdicts, key=lambda v: v.case_id))
    campaign_mod.write_findings(buggy, out_dir / "findings.jsonl")
    campaign_mod.write_findings(control, out_dir / "findings_control.jsonl")
    return {
        "rules": len(rules_payload["rules"]),
        "strategies": len(strategies_payload["strategies"]),
        "cases": len(cases),
        "buggy": buggy.summary(),
        "control": control.summary(),
    }


@main.command("pipeline")
@click.option("--config", "config_file", default=None, type=click.Path(exists=True))
@click.option("--out", "out_dir", default=None, type=click.Path())
def pipeline(config_file, out_dir):
    cfg = load_run_config(config_file, {"paths": {"out": out_dir}})
    try:
        summary = run_pipeline(cfg, Path(cfg["paths"]["out"]))
    except (gateway.GatewayError, ingest.IngestError, fixtures.FixtureError,
            campaign_mod.CampaignError, codecs.CodecError, OSError) as e:
        _fail(f"{type(e).__name__}: {e}")
    click.echo(json.dumps(summary))


if __name__ == "__main__":
    sys.exit(main())
