"""Default-deny attribute-based policy: loading, evaluation, explanation.

A policy document is an ordered list of rules. A request is allowed (or sent
to approval) iff at least one rule matches its subject, resource, action,
claim conditions, and time window; absence of a match means deny. There is
no embedded code in documents: the format is declarative YAML and the
evaluator is a plain linear scan, so an independent implementation can check
any decision.

Evaluation is pure: time enters only through ``ctx.now``, never a wall clock.
"""

from __future__ import annotations

from dataclasses import dataclass
from datetime import datetime, timezone
from enum import Enum
from typing import Mapping

import yaml

from .canon import canonical_json, sha256_hex
from .identity import IdentityError, SpiffeId, parse_spiffe_id

__all__ = [
    "DEFAULT_GLOBAL_TTL_CAP",
    "Decision",
    "EffectiveObligations",
    "EvaluationTrace",
    "Outcome",
    "PolicyDocument",
    "PolicyIssue",
    "PolicyRule",
    "PolicyValidationError",
    "RequestContext",
    "RuleTrace",
    "evaluate",
    "explain",
    "load_policy",
    "resource_matches",
    "subject_matches",
]

# Credentials are meant to live minutes, not hours; 15 minutes matches
# common cloud temporary-credential floors. Configurable everywhere it is
# consumed.
DEFAULT_GLOBAL_TTL_CAP = 900


class Outcome(str, Enum):
    ALLOW = "allow"
    DENY = "deny"
    PENDING_APPROVAL = "pending_approval"


@dataclass(frozen=True)
class PolicyIssue:
    """One validation problem found while loading a document."""

    code: str
    message: str
    rule_id: str | None = None

    def __str__(self) -> str:
        where = f" (rule {self.rule_id!r})" if self.rule_id else ""
        return f"{self.code}{where}: {self.message}"


class PolicyValidationError(Exception):
    """Carries every problem found in a document, not just the first."""

    def __init__(self, issues: list[PolicyIssue]):
        super().__init__("; ".join(str(i) for i in issues))
        self.issues = issues

    def codes(self) -> set[str]:
        return {issue.code for issue in self.issues}


@dataclass(frozen=True)
class PolicyRule:
    """One allow rule: match dimensions, conditions, obligations.

    ``subject_match`` is an exact SPIFFE ID or a prefix pattern ending in
    ``/*``; ``resource_match`` is an exact URI or a prefix ending in ``*``.
    Conditions are exact string equality over verified token claims; a
    referenced claim that is absent from the request fails the rule
    (fail-closed). The optional window bounds ``ctx.now``:
    not_before <= now < not_after.
    """

    rule_id: str
    subject_match: str
    resource_match: str
    actions: frozenset[str]
    conditions: tuple[tuple[str, str], ...] = ()
    not_before: int | None = None
    not_after: int | None = None
    approval_required: bool = False
    max_ttl: int | None = None


@dataclass(frozen=True)
class PolicyDocument:
    """Validated ordered rule list; ``version`` is its content hash."""

    rules: tuple[PolicyRule, ...]
    version: str


@dataclass(frozen=True)
class RequestContext:
    """The three runtime questions as data: who (subject, claims),
    what (resource, action), and when (now)."""

    subject: SpiffeId
    claims: Mapping[str, str]
    resource: str
    action: str
    now: int

    def __post_init__(self) -> None:
        if not self.resource:
            raise ValueError("resource must be non-empty")
        if not self.action:
            raise ValueError("action must be non-empty")


@dataclass(frozen=True)
class EffectiveObligations:
    approval_required: bool
    ttl_cap: int


@dataclass(frozen=True)
class Decision:
    """Evaluation outcome plus the matched-rule trace that justifies it."""

    outcome: Outcome
    matched_rule_ids: tuple[str, ...]
    effective_obligations: EffectiveObligations
    evaluated_at: int

    def canonical_form(self) -> bytes:
        return canonical_json(
            {
                "outcome": self.outcome.value,
                "matched_rule_ids": list(self.matched_rule_ids),
                "approval_required": self.effective_obligations.approval_required,
                "ttl_cap": self.effective_obligations.ttl_cap,
                "evaluated_at": self.evaluated_at,
            }
        )


@dataclass(frozen=True)
class RuleTrace:
    """Per-rule outcome: fully matched, or the first dimension that failed.

    ``failed_at`` is one of "subject", "resource", "action", "condition[i]",
    "time_window"; None iff the rule matched.
    """

    rule_id: str
    matched: bool
    failed_at: str | None = None


@dataclass(frozen=True)
class EvaluationTrace:
    decision: Decision
    rules: tuple[RuleTrace, ...]


# ---------------------------------------------------------------------------
# Pattern matching
# ---------------------------------------------------------------------------


def subject_matches(pattern: str, subject: SpiffeId) -> bool:
    """Prefix patterns end in ``/*`` and match by canonical-form prefix
    (keeping the slash); exact patterns match only string-equal forms."""
    canonical = str(subject)
    if pattern.endswith("/*"):
        return canonical.startswith(pattern[:-1])
    return canonical == pattern


def resource_matches(pattern: str, resource: str) -> bool:
    if pattern.endswith("*"):
        return resource.startswith(pattern[:-1])
    return resource == pattern


def _rule_failure(rule: PolicyRule, ctx: RequestContext) -> str | None:
    """First failing dimension in fixed order, or None when fully matched."""
    if not subject_matches(rule.subject_match, ctx.subject):
        return "subject"
    if not resource_matches(rule.resource_match, ctx.resource):
        return "resource"
    if ctx.action not in rule.actions:
        return "action"
    for i, (key, required) in enumerate(rule.conditions):
        if ctx.claims.get(key) != required:
            return f"condition[{i}]"
    if rule.not_before is not None and ctx.now < rule.not_before:
        return "time_window"
    if rule.not_after is not None and ctx.now >= rule.not_after:
        return "time_window"
    return None


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------


def evaluate(
    document: PolicyDocument,
    ctx: RequestContext,
    *,
    global_ttl_cap: int = DEFAULT_GLOBAL_TTL_CAP,
) -> Decision:
    """Linear scan over the rule list; no rule matched means deny.

    When several rules match, the outcome is allow if any matching rule does
    not require approval (rules are a disjunction); the effective ttl cap is
    the maximum rule cap among the rules that decided the outcome, with an
    absent rule cap standing for the global cap.
    """
    matched = [rule for rule in document.rules if _rule_failure(rule, ctx) is None]
    if not matched:
        return Decision(
            outcome=Outcome.DENY,
            matched_rule_ids=(),
            effective_obligations=EffectiveObligations(False, global_ttl_cap),
            evaluated_at=ctx.now,
        )
    unconditional = [rule for rule in matched if not rule.approval_required]
    deciding = unconditional or matched
    ttl_cap = max(
        rule.max_ttl if rule.max_ttl is not None else global_ttl_cap
        for rule in deciding
    )
    return Decision(
        outcome=Outcome.ALLOW if unconditional else Outcome.PENDING_APPROVAL,
        matched_rule_ids=tuple(rule.rule_id for rule in matched),
        effective_obligations=EffectiveObligations(
            approval_required=not unconditional,
            ttl_cap=min(ttl_cap, global_ttl_cap),
        ),
        evaluated_at=ctx.now,
    )


def explain(
    document: PolicyDocument,
    ctx: RequestContext,
    *,
    global_ttl_cap: int = DEFAULT_GLOBAL_TTL_CAP,
) -> EvaluationTrace:
    """Per-rule trace with the first failing dimension of every rule;
    a rule appears fully matched here iff evaluate lists its id."""
    traces = []
    for rule in document.rules:
        failed_at = _rule_failure(rule, ctx)
        traces.append(
            RuleTrace(rule_id=rule.rule_id, matched=failed_at is None, failed_at=failed_at)
        )
    return EvaluationTrace(
        decision=evaluate(document, ctx, global_ttl_cap=global_ttl_cap),
        rules=tuple(traces),
    )


# ---------------------------------------------------------------------------
# Document loading
# ---------------------------------------------------------------------------

_ISO_FMT = "%Y-%m-%dT%H:%M:%SZ"


def _parse_window_instant(value) -> int:
    if isinstance(value, bool):
        raise ValueError("not an instant")
    if isinstance(value, int):
        return value
    if isinstance(value, datetime):
        return int(value.replace(tzinfo=value.tzinfo or timezone.utc).timestamp())
    return int(
        datetime.strptime(str(value), _ISO_FMT).replace(tzinfo=timezone.utc).timestamp()
    )


def _validate_subject_pattern(pattern: str) -> str | None:
    """Returns an error message, or None when well-formed."""
    if not pattern:
        return "subject pattern must be non-empty"
    if "*" in pattern[:-1] or (pattern.endswith("*") and not pattern.endswith("/*")):
        return "wildcard is only allowed as a trailing '/*'"
    probe = pattern[:-2] if pattern.endswith("/*") else pattern
    try:
        parse_spiffe_id(probe)
    except IdentityError as exc:
        return f"not a valid SPIFFE ID pattern: {exc}"
    return None


def _validate_resource_pattern(pattern: str) -> str | None:
    if not pattern:
        return "resource pattern must be non-empty"
    if "*" in pattern[:-1]:
        return "wildcard is only allowed as the final character"
    return None


def _rule_version_key(rule: PolicyRule) -> dict:
    return {
        "rule_id": rule.rule_id,
        "subject": rule.subject_match,
        "resource": rule.resource_match,
        "actions": sorted(rule.actions),
        "conditions": [list(pair) for pair in rule.conditions],
        "not_before": rule.not_before,
        "not_after": rule.not_after,
        "approval_required": rule.approval_required,
        "max_ttl": rule.max_ttl,
    }


def document_version(rules: tuple[PolicyRule, ...]) -> str:
    return sha256_hex(canonical_json([_rule_version_key(r) for r in rules]))


def load_policy(
    text: str, *, global_ttl_cap: int = DEFAULT_GLOBAL_TTL_CAP
) -> PolicyDocument:
    """Parse and validate a document; collects all problems before failing.

    An empty document is valid and denies everything.
    """
    issues: list[PolicyIssue] = []
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f" at line {mark.line + 1}, column {mark.column + 1}" if mark else ""
        raise PolicyValidationError(
            [PolicyIssue("parse-error", f"invalid document{where}: {exc}")]
        ) from exc
    if doc is None:
        doc = {}
    if not isinstance(doc, dict) or not isinstance(doc.get("rules", []), list):
        raise PolicyValidationError(
            [PolicyIssue("parse-error", "document must be a mapping with a 'rules' list")]
        )

    rules: list[PolicyRule] = []
    seen_ids: set[str] = set()
    for index, raw in enumerate(doc.get("rules", [])):
        if not isinstance(raw, dict):
            issues.append(PolicyIssue("parse-error", f"rule #{index} is not a mapping"))
            continue
        rule_id = str(raw.get("id", ""))
        if not rule_id:
            issues.append(PolicyIssue("parse-error", f"rule #{index} is missing 'id'"))
            rule_id = f"#{index}"
        if rule_id in seen_ids:
            issues.append(
                PolicyIssue("duplicate-rule-id", "rule id appears twice", rule_id)
            )
        seen_ids.add(rule_id)

        subject = str(raw.get("subject", ""))
        problem = _validate_subject_pattern(subject)
        if problem:
            issues.append(PolicyIssue("malformed-pattern", problem, rule_id))

        resource = str(raw.get("resource", ""))
        problem = _validate_resource_pattern(resource)
        if problem:
            issues.append(PolicyIssue("malformed-pattern", problem, rule_id))

        raw_actions = raw.get("actions", [])
        if not isinstance(raw_actions, list):
            raw_actions = [raw_actions]
        actions = frozenset(str(a) for a in raw_actions if str(a))
        if not actions:
            issues.append(PolicyIssue("empty-actions", "rule allows no actions", rule_id))

        conditions: tuple[tuple[str, str], ...] = ()
        not_before = not_after = None
        raw_conditions = raw.get("conditions", {}) or {}
        if not isinstance(raw_conditions, dict):
            issues.append(
                PolicyIssue("parse-error", "conditions must be a mapping", rule_id)
            )
        else:
            claims = raw_conditions.get("claims", {}) or {}
            if not isinstance(claims, dict):
                issues.append(
                    PolicyIssue("parse-error", "conditions.claims must be a mapping", rule_id)
                )
            else:
                conditions = tuple((str(k), str(v)) for k, v in claims.items())
            for bound in ("not_before", "not_after"):
                if raw_conditions.get(bound) is None:
                    continue
                try:
                    value = _parse_window_instant(raw_conditions[bound])
                except Exception:
                    issues.append(
                        PolicyIssue(
                            "parse-error",
                            f"conditions.{bound} must be an epoch integer or ISO-8601 UTC",
                            rule_id,
                        )
                    )
                    continue
                if bound == "not_before":
                    not_before = value
                else:
                    not_after = value

        approval_required = False
        max_ttl = None
        obligations = raw.get("obligations", {}) or {}
        if not isinstance(obligations, dict):
            issues.append(
                PolicyIssue("parse-error", "obligations must be a mapping", rule_id)
            )
        else:
            approval_required = bool(obligations.get("approval_required", False))
            if obligations.get("max_ttl") is not None:
                try:
                    max_ttl = int(obligations["max_ttl"])
                except (TypeError, ValueError):
                    issues.append(
                        PolicyIssue("malformed-ttl", "max_ttl must be an integer", rule_id)
                    )
                    max_ttl = None
                else:
                    if max_ttl <= 0:
                        issues.append(
                            PolicyIssue("malformed-ttl", "max_ttl must be positive", rule_id)
                        )
                        max_ttl = None
                    elif max_ttl > global_ttl_cap:
                        issues.append(
                            PolicyIssue(
                                "ttl-exceeds-global-cap",
                                f"max_ttl {max_ttl}s exceeds global cap {global_ttl_cap}s",
                                rule_id,
                            )
                        )

        rules.append(
            PolicyRule(
                rule_id=rule_id,
                subject_match=subject,
                resource_match=resource,
                actions=actions,
                conditions=conditions,
                not_before=not_before,
                not_after=not_after,
                approval_required=approval_required,
                max_ttl=max_ttl,
            )
        )

    if issues:
        raise PolicyValidationError(issues)
    frozen = tuple(rules)
    return PolicyDocument(rules=frozen, version=document_version(frozen))
