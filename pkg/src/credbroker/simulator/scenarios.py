"""Scenario model and file format.

A scenario names an access-handling pattern, a set of simulated CI jobs
(identity, environment, requested resource/action pairs, wall time), and an
optional compromised job for blast-radius analysis. Anti-pattern scenarios
model their access rule directly; the brokered scenario drives a real
in-process broker.

Scenario files are YAML mirroring ``Scenario``; five builtin files ship in
``data/``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from importlib import resources
from typing import Any, Mapping

import yaml

ENVIRONMENTS = ("dev", "staging", "prod")


class ScenarioError(Exception):
    """Raised for structurally invalid scenarios (code: invalid-scenario)."""

    code = "invalid-scenario"


class ScenarioName(str, Enum):
    INLINE_INJECTION = "inline_injection"
    STATIC_ROLE_MAPPING = "static_role_mapping"
    GLOBAL_SECRETS_MOUNT = "global_secrets_mount"
    CROSS_ENV_REUSE = "cross_env_reuse"
    BROKERED = "brokered"


@dataclass(frozen=True)
class SimJob:
    """One simulated CI job: who it is, where it runs, what it touches."""

    identity: str
    environment: str
    requests: tuple[tuple[str, str], ...]  # (resource, action)
    start: int
    wall_time: int


@dataclass(frozen=True)
class Scenario:
    name: ScenarioName
    jobs: tuple[SimJob, ...]
    secrets_config: Mapping[str, Any] = field(default_factory=dict)
    policy_text: str | None = None  # brokered only
    compromised_job: int | None = None
    approver_delay: int = 5

    def __post_init__(self) -> None:
        if not self.jobs:
            raise ScenarioError("scenario must define at least one job")
        for job in self.jobs:
            if job.environment not in ENVIRONMENTS:
                raise ScenarioError(
                    f"environment {job.environment!r} not in {ENVIRONMENTS}"
                )
            if job.wall_time <= 0 or job.start < 0:
                raise ScenarioError("job needs start >= 0 and wall_time > 0")
            if not job.requests:
                raise ScenarioError(f"job {job.identity!r} requests nothing")
        if self.compromised_job is not None and not (
            0 <= self.compromised_job < len(self.jobs)
        ):
            raise ScenarioError("compromised_job index out of range")
        if self.name is ScenarioName.BROKERED and self.policy_text is None:
            raise ScenarioError("brokered scenario requires a policy")

    def all_pairs(self) -> set[tuple[str, str]]:
        """Every (environment, resource) pair the job set touches."""
        return {
            (job.environment, resource)
            for job in self.jobs
            for resource, _action in job.requests
        }

    def resource_environment(self, resource: str) -> str:
        for job in self.jobs:
            for job_resource, _action in job.requests:
                if job_resource == resource:
                    return job.environment
        raise ScenarioError(f"resource {resource!r} not used by any job")


@dataclass(frozen=True)
class ScenarioMetrics:
    """Comparable security metrics, one set per scenario run.

    standing_privilege_count: grants usable at some instant when no job runs.
    max_exposure_window: longest interval any usable secret is held by a job.
    blast_radius: (environment, resource) pairs reachable from the
        compromised job's held credentials at compromise time.
    audit_coverage: fraction of access events with a decision audit record.
    """

    scenario: str
    standing_privilege_count: int
    max_exposure_window: int
    blast_radius: int
    audit_coverage: float

    def __post_init__(self) -> None:
        if min(self.standing_privilege_count, self.max_exposure_window, self.blast_radius) < 0:
            raise ScenarioError("metrics must be non-negative")
        if not 0.0 <= self.audit_coverage <= 1.0:
            raise ScenarioError("audit_coverage must be within [0, 1]")

    def to_dict(self) -> dict:
        return {
            "scenario": self.scenario,
            "standing_privilege_count": self.standing_privilege_count,
            "max_exposure_window": self.max_exposure_window,
            "blast_radius": self.blast_radius,
            "audit_coverage": self.audit_coverage,
        }


def _parse_job(raw: dict) -> SimJob:
    requests = []
    for entry in raw.get("requests", []):
        if isinstance(entry, dict):
            requests.append((str(entry["resource"]), str(entry["action"])))
        else:
            resource, action = entry
            requests.append((str(resource), str(action)))
    return SimJob(
        identity=str(raw["identity"]),
        environment=str(raw["environment"]),
        requests=tuple(requests),
        start=int(raw.get("start", 0)),
        wall_time=int(raw["wall_time"]),
    )


def load_scenario(text: str) -> Scenario:
    """Parse a scenario file (YAML)."""
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ScenarioError(f"unparseable scenario file: {exc}") from exc
    if not isinstance(raw, dict):
        raise ScenarioError("scenario file must be a mapping")
    try:
        name = ScenarioName(raw["name"])
    except (KeyError, ValueError):
        raise ScenarioError(
            f"name must be one of {[n.value for n in ScenarioName]}"
        ) from None
    policy_text = None
    if raw.get("policy") is not None:
        policy_text = yaml.safe_dump(raw["policy"], sort_keys=False)
    try:
        jobs = tuple(_parse_job(j) for j in raw.get("jobs", []))
    except (KeyError, TypeError, ValueError) as exc:
        raise ScenarioError(f"bad job entry: {exc}") from exc
    return Scenario(
        name=name,
        jobs=jobs,
        secrets_config=raw.get("secrets_config", {}) or {},
        policy_text=policy_text,
        compromised_job=raw.get("compromised_job"),
        approver_delay=int(raw.get("approver_delay", 5)),
    )


def builtin_names() -> list[str]:
    return [name.value for name in ScenarioName]


def load_builtin(name: str) -> Scenario:
    """Load one of the five bundled scenario files by name."""
    if name not in builtin_names():
        raise ScenarioError(f"no builtin scenario {name!r}; try {builtin_names()}")
    text = resources.files("credbroker.simulator").joinpath(f"data/{name}.yaml").read_text(
        encoding="utf-8"
    )
    return load_scenario(text)
