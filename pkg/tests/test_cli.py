"""Command-line surfaces: simulate and service utilities."""

from __future__ import annotations

import json

import pytest
from click.testing import CliRunner

from credbroker.cli import main as broker_cli
from credbroker.simulator.cli import main as simulate_cli


@pytest.fixture
def runner() -> CliRunner:
    return CliRunner()


class TestSimulateCli:
    def test_run_builtin_writes_metrics_and_trace(self, runner, tmp_path):
        out = tmp_path / "run.json"
        result = runner.invoke(
            simulate_cli, ["run", "--scenario", "brokered", "--seed", "1", "--out", str(out)]
        )
        assert result.exit_code == 0, result.output
        data = json.loads(out.read_text(encoding="utf-8"))
        assert data["metrics"]["scenario"] == "brokered"
        assert data["metrics"]["standing_privilege_count"] == 0
        assert any(e["event"] == "access_request" for e in data["trace"])

    def test_run_scenario_file(self, runner, tmp_path):
        scenario = tmp_path / "s.yaml"
        scenario.write_text(
            """
name: inline_injection
jobs:
  - identity: spiffe://ci/a
    environment: dev
    start: 0
    wall_time: 50
    requests: [{resource: "db://x", action: read}]
""",
            encoding="utf-8",
        )
        result = runner.invoke(simulate_cli, ["run", "--scenario", str(scenario)])
        assert result.exit_code == 0, result.output
        assert "inline_injection" in result.output

    def test_unknown_scenario_is_a_usage_error(self, runner):
        result = runner.invoke(simulate_cli, ["run", "--scenario", "nope"])
        assert result.exit_code == 2
        assert "neither a builtin" in result.output

    def test_compare_all_builtin(self, runner, tmp_path):
        out = tmp_path / "compare.json"
        result = runner.invoke(
            simulate_cli, ["compare", "--all-builtin", "--seed", "0", "--out", str(out)]
        )
        assert result.exit_code == 0, result.output
        rows = json.loads(out.read_text(encoding="utf-8"))
        assert [r["scenario"] for r in rows] == [
            "inline_injection",
            "static_role_mapping",
            "global_secrets_mount",
            "cross_env_reuse",
            "brokered",
        ]
        lines = result.output.splitlines()
        assert lines[0].startswith("scenario")
        assert len([l for l in lines if l and not l.startswith(("scenario", "-", "wrote"))]) == 5

    def test_verify_audit_ok_and_broken(self, runner, tmp_path):
        from credbroker.audit import AuditLog, EventKind

        path = tmp_path / "audit.log"
        log = AuditLog(path)
        for i in range(5):
            log.append_event(EventKind.DECISION, {"n": i}, 1000 + i)
        log.close()
        ok = runner.invoke(simulate_cli, ["verify-audit", "--log", str(path)])
        assert ok.exit_code == 0 and "ok" in ok.output

        lines = path.read_text(encoding="utf-8").splitlines()
        raw = bytearray(lines[2].encode("utf-8"))
        raw[-10] ^= 0x01
        lines[2] = raw.decode("utf-8", errors="replace")
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        broken = runner.invoke(simulate_cli, ["verify-audit", "--log", str(path)])
        assert broken.exit_code == 1
        assert "first bad seq 2" in broken.output

    def test_verify_audit_detects_truncation_via_head(self, runner, tmp_path):
        from credbroker.audit import AuditLog, EventKind

        path = tmp_path / "audit.log"
        log = AuditLog(path)
        for i in range(4):
            log.append_event(EventKind.DECISION, {"n": i}, 1000 + i)
        log.close()
        lines = path.read_text(encoding="utf-8").splitlines()
        path.write_text("\n".join(lines[:-1]) + "\n", encoding="utf-8")
        result = runner.invoke(simulate_cli, ["verify-audit", "--log", str(path)])
        assert result.exit_code == 1
        assert "truncation" in result.output


class TestBrokerCli:
    def test_key_and_identity_generation_feed_a_valid_config(self, runner, tmp_path):
        mint = tmp_path / "mint.key"
        bundle = tmp_path / "bundle.yaml"
        signing = tmp_path / "signing.key"
        assert runner.invoke(broker_cli, ["gen-minting-key", "--out", str(mint)]).exit_code == 0
        assert (
            runner.invoke(
                broker_cli,
                [
                    "gen-identity",
                    "--trust-domain", "ci",
                    "--bundle-out", str(bundle),
                    "--key-out", str(signing),
                ],
            ).exit_code
            == 0
        )
        policy = tmp_path / "policy.yaml"
        policy.write_text("rules: []\n", encoding="utf-8")
        config = tmp_path / "broker.yaml"
        config.write_text(
            f"""
policy_path: {policy}
bundle_paths: [{bundle}]
minting_key_path: {mint}
audit_log_path: {tmp_path / 'audit.log'}
""",
            encoding="utf-8",
        )
        result = runner.invoke(broker_cli, ["check-config", "--config", str(config)])
        assert result.exit_code == 0, result.output
        assert "ok:" in result.output

    def test_check_config_reports_missing_files(self, runner, tmp_path):
        config = tmp_path / "broker.yaml"
        config.write_text("policy_path: /does/not/exist.yaml\n", encoding="utf-8")
        result = runner.invoke(broker_cli, ["check-config", "--config", str(config)])
        assert result.exit_code == 1
        assert "exist" in result.output


class TestServe:
    def test_serve_round_trip_over_a_real_socket(self, tmp_path):
        """End-to-end over HTTP: start on a free port, obtain a credential,
        stop, and the on-disk audit chain verifies."""
        import socket
        import time
        import urllib.request

        from credbroker.api import BrokerConfig, serve
        from credbroker.audit import verify_log_file
        from credbroker.identity import (
            TrustBundle,
            dump_bundle,
            generate_signing_key,
            issue_token,
            parse_spiffe_id,
        )

        from conftest import CANONICAL_POLICY

        # Key validity must straddle the real wall clock the service uses.
        signing = generate_signing_key("ci-key-1")
        live_bundle = TrustBundle(
            trust_domain="ci",
            keys=(signing.bundle_key(not_after=int(time.time()) + 86_400),),
            local=True,
        )
        policy = tmp_path / "policy.yaml"
        policy.write_text(CANONICAL_POLICY, encoding="utf-8")
        bundle = tmp_path / "bundle.yaml"
        bundle.write_text(dump_bundle(live_bundle), encoding="utf-8")
        with socket.socket() as probe:
            probe.bind(("127.0.0.1", 0))
            port = probe.getsockname()[1]
        config = BrokerConfig(
            listen_address=f"127.0.0.1:{port}",
            policy_path=str(policy),
            bundle_paths=[str(bundle)],
            audit_log_path=str(tmp_path / "audit.log"),
        )
        handle = serve(config)
        try:
            now = int(time.time())
            token = issue_token(
                parse_spiffe_id("spiffe://ci/org/deploy"),
                "credbroker",
                {},
                300,
                signing,
                store=handle.broker.bundle_store,
                now=now,
            ).serialize()
            body = json.dumps(
                {
                    "token": token,
                    "resource": "s3://prod-release-artifacts",
                    "action": "write",
                }
            ).encode("utf-8")
            request = urllib.request.Request(
                f"{handle.base_url}/v1/credentials",
                data=body,
                headers={"Content-Type": "application/json"},
            )
            with urllib.request.urlopen(request) as response:
                data = json.loads(response.read())
            assert data["status"] == "issued"
        finally:
            handle.stop()
        assert verify_log_file(tmp_path / "audit.log").ok
