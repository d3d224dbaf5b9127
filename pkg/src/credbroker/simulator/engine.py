"""Deterministic scenario execution over a logical clock.

Anti-pattern scenarios model their access rule directly (static placements
that always grant); the brokered scenario stands up a real broker -- identity
issuance, policy evaluation, minting, audit -- and drives every access
through it. Metrics come from sweeps and enumerations over the run, not
closed forms: standing privilege sweeps out-of-job instants and re-verifies
every ever-issued credential, and blast radius enumerates (environment,
resource) pairs against held credentials.
"""

from __future__ import annotations

import heapq
import random
from dataclasses import dataclass

from ..audit import AuditLog, EventKind
from ..broker import AccessRequest, Broker, ResultStatus, new_request_id
from ..identity import BundleStore, TrustBundle, generate_signing_key, issue_token, parse_spiffe_id
from ..minting import Credential, CredentialScope, Minter, verify_credential
from ..policy import load_policy
from .scenarios import Scenario, ScenarioError, ScenarioMetrics, ScenarioName, SimJob

_AUDIENCE = "sim-broker"
_TOKEN_TTL = 600


@dataclass(frozen=True)
class _Grant:
    """A static secret placement: identity -> secret covering some pairs."""

    identity: str
    secret_id: str
    pairs: frozenset[tuple[str, str]]


def _request_offsets(scenario: Scenario, seed: int) -> dict[tuple[int, int], int]:
    """Per (job, request) start offsets, drawn in a fixed order so every
    scenario sharing a job set and seed sees identical timing."""
    rng = random.Random(f"{seed}:offsets")
    offsets = {}
    for ji, job in enumerate(scenario.jobs):
        for ri in range(len(job.requests)):
            offsets[(ji, ri)] = rng.randint(0, max(0, job.wall_time // 4))
    return offsets


def _job_intervals(jobs: tuple[SimJob, ...]) -> list[tuple[int, int]]:
    intervals = sorted((job.start, job.start + job.wall_time) for job in jobs)
    merged: list[tuple[int, int]] = []
    for start, end in intervals:
        if merged and start <= merged[-1][1]:
            merged[-1] = (merged[-1][0], max(merged[-1][1], end))
        else:
            merged.append((start, end))
    return merged


def _out_of_job_instants(jobs: tuple[SimJob, ...], horizon: int) -> list[int]:
    """Probe instants covering every interval where no job is running."""
    merged = _job_intervals(jobs)
    probes: list[int] = []
    cursor = 0
    for start, end in merged:
        if cursor < start:
            probes.extend({cursor, (cursor + start) // 2, start - 1})
        cursor = max(cursor, end)
    if cursor <= horizon:
        probes.extend({cursor, (cursor + horizon) // 2, horizon})
    return sorted(set(probes))


def _static_grants(scenario: Scenario) -> list[_Grant]:
    """The secret placements each anti-pattern is built from."""
    all_pairs = frozenset(scenario.all_pairs())
    identities = list(dict.fromkeys(job.identity for job in scenario.jobs))
    name = scenario.name
    if name is ScenarioName.INLINE_INJECTION:
        return [
            _Grant(
                identity=job.identity,
                secret_id=f"inline-secret-{ji}",
                pairs=frozenset(
                    (job.environment, resource) for resource, _ in job.requests
                ),
            )
            for ji, job in enumerate(scenario.jobs)
        ]
    if name is ScenarioName.STATIC_ROLE_MAPPING:
        roles = scenario.secrets_config.get("roles")
        if roles:
            return [
                _Grant(
                    identity=str(identity),
                    secret_id=f"role:{identity}",
                    pairs=frozenset((str(e), str(r)) for e, r in pairs),
                )
                for identity, pairs in roles.items()
            ]
        grants = []
        for identity in identities:
            pairs = frozenset(
                (job.environment, resource)
                for job in scenario.jobs
                if job.identity == identity
                for resource, _ in job.requests
            )
            grants.append(_Grant(identity, f"role:{identity}", pairs))
        return grants
    if name is ScenarioName.GLOBAL_SECRETS_MOUNT:
        return [_Grant(identity, "global-mount", all_pairs) for identity in identities]
    if name is ScenarioName.CROSS_ENV_REUSE:
        return [_Grant(identity, "shared-secret", all_pairs) for identity in identities]
    raise ScenarioError(f"no static grant model for {name.value}")


# ---------------------------------------------------------------------------
# Anti-pattern runs
# ---------------------------------------------------------------------------


def _run_antipattern(scenario: Scenario, seed: int) -> tuple[ScenarioMetrics, list[dict]]:
    offsets = _request_offsets(scenario, seed)
    grants = _static_grants(scenario)
    by_identity: dict[str, list[_Grant]] = {}
    for grant in grants:
        by_identity.setdefault(grant.identity, []).append(grant)

    trace: list[dict] = []
    access_events = 0
    for ji, job in enumerate(scenario.jobs):
        trace.append({"time": job.start, "event": "job_start", "job": ji})
        for ri, (resource, action) in enumerate(job.requests):
            t = job.start + offsets[(ji, ri)]
            access_events += 1
            held = by_identity.get(job.identity, [])
            pair = (job.environment, resource)
            granted = any(pair in grant.pairs for grant in held)
            trace.append(
                {
                    "time": t,
                    "event": "access",
                    "job": ji,
                    "resource": resource,
                    "action": action,
                    "outcome": "granted" if granted else "refused",
                }
            )
        trace.append({"time": job.start + job.wall_time, "event": "job_end", "job": ji})
    trace.sort(key=lambda e: (e["time"], e["job"], e.get("event", "")))

    horizon = max(job.start + job.wall_time for job in scenario.jobs) + 1
    probes = _out_of_job_instants(scenario.jobs, horizon)
    # Static placements exist at every instant; any out-of-job probe finds
    # all of them standing.
    standing = {(g.identity, g.secret_id) for g in grants} if probes else set()

    # Each job holds its secrets for its entire wall time.
    max_exposure = max(job.wall_time for job in scenario.jobs)

    blast = 0
    if scenario.compromised_job is not None:
        victim = scenario.jobs[scenario.compromised_job]
        reachable: set[tuple[str, str]] = set()
        for env, resource in scenario.all_pairs():
            for grant in by_identity.get(victim.identity, []):
                if (env, resource) in grant.pairs:
                    reachable.add((env, resource))
        blast = len(reachable)

    metrics = ScenarioMetrics(
        scenario=scenario.name.value,
        standing_privilege_count=len(standing),
        max_exposure_window=max_exposure,
        blast_radius=blast,
        audit_coverage=0.0 if access_events else 1.0,
    )
    return metrics, trace


# ---------------------------------------------------------------------------
# Brokered run
# ---------------------------------------------------------------------------


def _build_sim_broker(scenario: Scenario, seed: int) -> tuple[Broker, dict[str, object]]:
    key_rng = random.Random(f"{seed}:minting-key")
    store = BundleStore()
    signers: dict[str, object] = {}
    horizon = max(job.start + job.wall_time for job in scenario.jobs)
    for job in scenario.jobs:
        domain = parse_spiffe_id(job.identity).trust_domain
        if domain in signers:
            continue
        signing = generate_signing_key(f"{domain}-sim-key")
        store.register(
            TrustBundle(
                trust_domain=domain,
                keys=(signing.bundle_key(not_after=horizon + 10_000),),
                local=True,
            )
        )
        signers[domain] = signing
    minter = Minter(key_rng.randbytes(32))
    broker = Broker(
        bundle_store=store,
        minter=minter,
        audit_log=AuditLog(),
        audience=_AUDIENCE,
        policy=load_policy(scenario.policy_text),
    )
    return broker, signers


def _run_brokered(scenario: Scenario, seed: int) -> tuple[ScenarioMetrics, list[dict]]:
    offsets = _request_offsets(scenario, seed)
    broker, signers = _build_sim_broker(scenario, seed)
    key = broker.minter.key_bytes()

    counter = 0
    heap: list[tuple[int, int, str, dict]] = []

    def push(time: int, kind: str, data: dict) -> None:
        nonlocal counter
        counter += 1
        heapq.heappush(heap, (time, counter, kind, data))

    trace: list[dict] = []
    for ji, job in enumerate(scenario.jobs):
        trace.append({"time": job.start, "event": "job_start", "job": ji})
        trace.append({"time": job.start + job.wall_time, "event": "job_end", "job": ji})
        for ri, (resource, action) in enumerate(job.requests):
            push(job.start + offsets[(ji, ri)], "request", {"job": ji, "req": ri})

    issued: list[tuple[int, Credential, int]] = []  # (job index, credential, t_issue)
    request_ids: list[str] = []
    pending_meta: dict[str, dict] = {}

    def job_end(ji: int) -> int:
        job = scenario.jobs[ji]
        return job.start + job.wall_time

    events_out: list[dict] = []
    while heap:
        t, _, kind, data = heapq.heappop(heap)
        ji = data["job"]
        job = scenario.jobs[ji]
        if kind == "request":
            if t >= job_end(ji):
                continue
            resource, action = job.requests[data["req"]]
            subject = parse_spiffe_id(job.identity)
            signing = signers[subject.trust_domain]
            token = issue_token(
                subject,
                _AUDIENCE,
                {"environment": job.environment},
                min(_TOKEN_TTL, 3600),
                signing,
                store=broker.bundle_store,
                now=t,
            )
            request_id = new_request_id()
            request_ids.append(request_id)
            req = AccessRequest(
                request_id=request_id,
                token=token.serialize(),
                resource=resource,
                action=action,
                justification=f"simulated job {ji}",
                received_at=t,
                ttl_seconds=max(1, job_end(ji) - t),
            )
            result = broker.handle_access_request(req, t)
            events_out.append(
                {
                    "time": t,
                    "event": "access_request",
                    "job": ji,
                    "resource": resource,
                    "action": action,
                    "outcome": result.status.value,
                }
            )
            if result.status is ResultStatus.ISSUED:
                credential = result.credential
                issued.append((ji, credential, t))
                if credential.expires_at < job_end(ji):
                    push(credential.expires_at, "request", dict(data))
            elif result.status is ResultStatus.PENDING:
                pending_meta[result.request_id] = dict(data)
                push(t + scenario.approver_delay, "approval", {"job": ji, "request_id": result.request_id})
        elif kind == "approval":
            result = broker.record_approval(
                data["request_id"], "sim-approver", "approve", t
            )
            events_out.append(
                {
                    "time": t,
                    "event": "approval_resolution",
                    "job": ji,
                    "outcome": result.status.value,
                }
            )
            if result.status is ResultStatus.ISSUED:
                credential = result.credential
                issued.append((ji, credential, t))
                if credential.expires_at < job_end(ji):
                    push(credential.expires_at, "request", dict(pending_meta[data["request_id"]]))

    trace.extend(events_out)
    trace.sort(key=lambda e: (e["time"], e["job"], e.get("event", "")))

    # Audit coverage: every access request must have a decision record.
    decision_ids = {
        e.request_id
        for e in broker.audit_log.events()
        if e.kind is EventKind.DECISION
    }
    covered = sum(1 for rid in request_ids if rid in decision_ids)
    coverage = covered / len(request_ids) if request_ids else 1.0

    # Standing privilege: sweep out-of-job instants past the last expiry and
    # re-verify every ever-issued credential at each probe.
    horizon = max(
        [job.start + job.wall_time for job in scenario.jobs]
        + [credential.expires_at for _, credential, _ in issued]
    ) + 1
    standing: set[tuple[str, str]] = set()
    for probe in _out_of_job_instants(scenario.jobs, horizon):
        for ji, credential, _ in issued:
            if verify_credential(credential, credential.scope, probe, key).ok:
                standing.add((scenario.jobs[ji].identity, credential.credential_id))

    max_exposure = max(
        (credential.expires_at - credential.not_before for _, credential, _ in issued),
        default=0,
    )

    blast = 0
    if scenario.compromised_job is not None:
        victim_index = scenario.compromised_job
        acquisitions = [t for ji, _, t in issued if ji == victim_index]
        compromise_time = max(acquisitions) if acquisitions else scenario.jobs[victim_index].start
        reachable: set[tuple[str, str]] = set()
        for env, resource in scenario.all_pairs():
            for ji, credential, _ in issued:
                if ji != victim_index:
                    continue
                scope = CredentialScope(
                    subject=credential.scope.subject,
                    resource=resource,
                    action=credential.scope.action,
                )
                check = verify_credential(credential, scope, compromise_time, key)
                if check.ok and scenario.resource_environment(resource) == env:
                    reachable.add((env, resource))
        blast = len(reachable)

    metrics = ScenarioMetrics(
        scenario=scenario.name.value,
        standing_privilege_count=len(standing),
        max_exposure_window=max_exposure,
        blast_radius=blast,
        audit_coverage=coverage,
    )
    return metrics, trace


def run_scenario(scenario: Scenario, seed: int = 0) -> tuple[ScenarioMetrics, list[dict]]:
    """Run one scenario; identical (scenario, seed) gives identical metrics
    and trace."""
    if scenario.name is ScenarioName.BROKERED:
        return _run_brokered(scenario, seed)
    return _run_antipattern(scenario, seed)
