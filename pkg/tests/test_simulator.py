"""Simulator: scenario fidelity, brokered invariants, determinism, report."""

from __future__ import annotations

import pytest

from credbroker.simulator import (
    Scenario,
    ScenarioError,
    SimJob,
    builtin_names,
    load_builtin,
    load_scenario,
    report,
    run_scenario,
)
from credbroker.simulator.scenarios import ScenarioName

SEED = 7


@pytest.fixture(scope="module")
def builtin_runs():
    return {name: run_scenario(load_builtin(name), seed=SEED) for name in builtin_names()}


class TestScenarioLoading:
    def test_all_builtins_load_and_run(self, builtin_runs):
        assert set(builtin_runs) == {
            "inline_injection",
            "static_role_mapping",
            "global_secrets_mount",
            "cross_env_reuse",
            "brokered",
        }

    def test_invalid_scenarios_rejected(self):
        with pytest.raises(ScenarioError):
            load_scenario("name: brokered\njobs: []\n")
        with pytest.raises(ScenarioError):
            load_scenario("name: who-knows\njobs: []\n")
        with pytest.raises(ScenarioError):
            Scenario(
                name=ScenarioName.INLINE_INJECTION,
                jobs=(
                    SimJob("spiffe://ci/a", "lunar", (("db://x", "read"),), 0, 10),
                ),
            )

    def test_brokered_requires_policy(self):
        with pytest.raises(ScenarioError):
            Scenario(
                name=ScenarioName.BROKERED,
                jobs=(SimJob("spiffe://ci/a", "dev", (("db://x", "read"),), 0, 10),),
            )


class TestBrokeredInvariants:
    def test_zero_standing_privilege(self, builtin_runs):
        """Outside job execution intervals no unexpired credential exists;
        the metric is computed by sweeping and re-verifying, so zero here
        means the sweep found nothing."""
        metrics, _ = builtin_runs["brokered"]
        assert metrics.standing_privilege_count == 0

    def test_full_audit_coverage(self, builtin_runs):
        metrics, _ = builtin_runs["brokered"]
        assert metrics.audit_coverage == 1.0

    def test_exposure_bounded_by_global_cap(self, builtin_runs):
        metrics, _ = builtin_runs["brokered"]
        assert metrics.max_exposure_window <= 900

    def test_brokered_drives_a_real_broker(self, builtin_runs):
        """The trace records broker results, not scripted outcomes: every
        access in the builtin run came back issued."""
        _, trace = builtin_runs["brokered"]
        accesses = [e for e in trace if e["event"] == "access_request"]
        assert accesses and all(e["outcome"] == "issued" for e in accesses)

    def test_determinism_same_seed_same_everything(self):
        scenario = load_builtin("brokered")
        first = run_scenario(scenario, seed=123)
        second = run_scenario(scenario, seed=123)
        assert first == second

    def test_approval_rules_resolve_via_scripted_approver(self):
        """A brokered scenario whose policy gates on approval still issues,
        after the configured delay, with coverage intact."""
        text = """
name: brokered
approver_delay: 7
jobs:
  - identity: spiffe://ci/org/deploy
    environment: prod
    start: 0
    wall_time: 600
    requests:
      - {resource: "s3://prod-release-artifacts", action: write}
policy:
  rules:
    - id: gated
      subject: "spiffe://ci/org/deploy"
      resource: "s3://prod-release-artifacts"
      actions: [write]
      obligations: {approval_required: true}
"""
        metrics, trace = run_scenario(load_scenario(text), seed=1)
        outcomes = [e["outcome"] for e in trace if e["event"] == "approval_resolution"]
        assert outcomes and outcomes[0] == "issued"
        assert metrics.audit_coverage == 1.0


class TestAntiPatternFidelity:
    def test_inline_exposure_equals_job_wall_time(self, builtin_runs):
        metrics, _ = builtin_runs["inline_injection"]
        longest_wall = max(job.wall_time for job in load_builtin("inline_injection").jobs)
        assert metrics.max_exposure_window == longest_wall == 1200

    def test_static_role_grants_equal_standing_count(self):
        """Grant count is by construction: a 4-role mapping stands as 4."""
        text = """
name: static_role_mapping
jobs:
  - identity: spiffe://ci/a
    environment: dev
    start: 0
    wall_time: 100
    requests: [{resource: "db://x", action: read}]
secrets_config:
  roles:
    "spiffe://ci/a": [["dev", "db://x"]]
    "spiffe://ci/b": [["dev", "db://x"]]
    "spiffe://ci/c": [["staging", "kv://y"]]
    "spiffe://ci/d": [["prod", "s3://z"]]
"""
        metrics, _ = run_scenario(load_scenario(text), seed=0)
        assert metrics.standing_privilege_count == 4

    def test_anti_patterns_have_no_audit_trail(self, builtin_runs):
        for name in ("inline_injection", "static_role_mapping",
                     "global_secrets_mount", "cross_env_reuse"):
            metrics, _ = builtin_runs[name]
            assert metrics.audit_coverage == 0.0

    def test_cross_env_blast_covers_every_pair(self, builtin_runs):
        """The shared secret reaches all (environment, resource) pairs."""
        metrics, _ = builtin_runs["cross_env_reuse"]
        scenario = load_builtin("cross_env_reuse")
        assert metrics.blast_radius == len(scenario.all_pairs()) == 4

    def test_brokered_blast_is_only_held_credentials(self, builtin_runs):
        """Reachability oracle: compromising the dev job under the broker
        reaches exactly that job's own scoped credentials."""
        metrics, _ = builtin_runs["brokered"]
        scenario = load_builtin("brokered")
        victim = scenario.jobs[scenario.compromised_job]
        assert metrics.blast_radius == len(victim.requests) == 2
        assert metrics.blast_radius < builtin_runs["cross_env_reuse"][0].blast_radius


class TestReport:
    def test_single_run_table(self, builtin_runs):
        metrics, _ = builtin_runs["brokered"]
        table, rows = report([metrics])
        assert len(rows) == 1
        assert rows[0]["scenario"] == "brokered"
        assert "standing_privilege_count" in table.splitlines()[0]

    def test_five_scenario_comparison_brokered_dominates(self, builtin_runs):
        """On the bundled job set the brokered row dominates every metric."""
        ordered = [builtin_runs[name][0] for name in builtin_names()]
        table, rows = report(ordered)
        assert len(rows) == 5
        by_name = {row["scenario"]: row for row in rows}
        brokered = by_name.pop("brokered")
        for other in by_name.values():
            assert brokered["standing_privilege_count"] < other["standing_privilege_count"]
            assert brokered["max_exposure_window"] < other["max_exposure_window"]
            assert brokered["blast_radius"] <= other["blast_radius"]
            assert brokered["audit_coverage"] > other["audit_coverage"]
        assert brokered["blast_radius"] < by_name["cross_env_reuse"]["blast_radius"]

    def test_empty_metrics_is_a_usage_error(self):
        with pytest.raises(ValueError):
            report([])
