"""The runtime decision point: authenticate, evaluate, gate, mint, audit.

Every access request runs the same fixed pipeline: verify the workload
token, build a request context from the verified identity, consult the
decision cache, evaluate policy, then mint (allow), enqueue for human
approval (pending), or refuse (deny). Every path writes exactly one decision
audit event before returning, and issuance never happens without a durable
decision record -- any failure along the way fails closed.

Approvals re-evaluate policy at resolution time against the stored context,
so a credential issued after an approval is consistent with the policy
active when the human acted, not just when the request arrived.
"""

from __future__ import annotations

import dataclasses
import threading
import uuid
from collections import OrderedDict
from dataclasses import dataclass, replace
from enum import Enum

from .audit import AuditError, AuditLog, EventKind
from .canon import canonical_json, sha256_hex
from .identity import (
    DEFAULT_CLOCK_LEEWAY,
    BundleStore,
    IdentityError,
    TrustBundle,
    verify_token,
)
from .minting import Credential, CredentialKind, CredentialScope, MintError, Minter
from .policy import (
    Decision,
    EvaluationTrace,
    Outcome,
    PolicyDocument,
    RequestContext,
    evaluate,
    explain,
)

__all__ = [
    "DEFAULT_APPROVAL_WINDOW",
    "DEFAULT_REQUEST_TTL",
    "AccessRequest",
    "ApprovalStatus",
    "Broker",
    "BrokerResult",
    "PendingApproval",
    "ResultStatus",
]

DEFAULT_APPROVAL_WINDOW = 3600
DEFAULT_REQUEST_TTL = 900


@dataclass(frozen=True)
class AccessRequest:
    """One workload request for access to (resource, action).

    ``justification`` is recorded and audited but not evaluated by policy.
    ``kind`` and ``ttl_seconds`` are requester preferences; policy and the
    global cap still clamp the result.
    """

    request_id: str
    token: str
    resource: str
    action: str
    justification: str = ""
    received_at: int = 0
    kind: CredentialKind = CredentialKind.SESSION_TOKEN
    ttl_seconds: int = DEFAULT_REQUEST_TTL

    def __post_init__(self) -> None:
        if not self.resource or not self.action:
            raise ValueError("resource and action must be non-empty")


class ApprovalStatus(str, Enum):
    PENDING = "pending"
    APPROVED = "approved"
    DENIED = "denied"
    EXPIRED = "expired"


@dataclass
class PendingApproval:
    """A pending-approval queue entry; terminal states are immutable.

    Mutated only under the broker's queue lock, so a concurrent approve and
    expiry resolve to exactly one terminal state.
    """

    request_id: str
    decision: Decision
    ctx: RequestContext
    created_at: int
    expires_at: int
    status: ApprovalStatus = ApprovalStatus.PENDING
    approver: str | None = None
    resolved_at: int | None = None
    requested_kind: CredentialKind = CredentialKind.SESSION_TOKEN
    requested_ttl: int = DEFAULT_REQUEST_TTL
    justification: str = ""
    decision_seq: int | None = None


class ResultStatus(str, Enum):
    ISSUED = "issued"
    DENIED = "denied"
    PENDING = "pending"
    ERROR = "error"


@dataclass(frozen=True)
class BrokerResult:
    """Exactly-one-variant outcome of a broker operation."""

    status: ResultStatus
    credential: Credential | None = None
    reason: str | None = None
    trace: EvaluationTrace | None = None
    decision_seq: int | None = None
    request_id: str | None = None
    deadline: int | None = None
    error_category: str | None = None
    error_code: str | None = None

    @classmethod
    def issued(cls, credential: Credential, decision_seq: int) -> "BrokerResult":
        return cls(ResultStatus.ISSUED, credential=credential, decision_seq=decision_seq)

    @classmethod
    def denied(
        cls,
        reason: str,
        decision_seq: int | None = None,
        trace: EvaluationTrace | None = None,
    ) -> "BrokerResult":
        return cls(ResultStatus.DENIED, reason=reason, decision_seq=decision_seq, trace=trace)

    @classmethod
    def pending(cls, request_id: str, deadline: int, decision_seq: int) -> "BrokerResult":
        return cls(
            ResultStatus.PENDING,
            request_id=request_id,
            deadline=deadline,
            decision_seq=decision_seq,
        )

    @classmethod
    def error(cls, category: str, code: str | None = None) -> "BrokerResult":
        return cls(ResultStatus.ERROR, error_category=category, error_code=code)


def new_request_id() -> str:
    return f"req-{uuid.uuid4().hex}"


class Broker:
    """Single-instance broker core; transport-agnostic.

    All operations take an explicit ``now`` so time-dependent behavior is
    testable against a simulated clock. Policy and bundle swaps are atomic
    snapshot replacements; in-flight evaluations finish against the snapshot
    they started with.
    """

    def __init__(
        self,
        *,
        bundle_store: BundleStore,
        minter: Minter,
        audit_log: AuditLog,
        audience: str,
        policy: PolicyDocument | None = None,
        approval_window: int = DEFAULT_APPROVAL_WINDOW,
        clock_leeway: int = DEFAULT_CLOCK_LEEWAY,
        cache_enabled: bool = False,
        cache_ttl: int = 30,
        cache_capacity: int = 1024,
    ):
        if approval_window <= 0:
            raise ValueError("approval window must be positive")
        self.bundle_store = bundle_store
        self.minter = minter
        self.audit_log = audit_log
        self.audience = audience
        self._policy = policy
        self.approval_window = approval_window
        self.clock_leeway = clock_leeway
        self.cache_enabled = cache_enabled
        self.cache_ttl = cache_ttl
        self.cache_capacity = cache_capacity
        self._cache: OrderedDict[tuple, tuple[Decision, int]] = OrderedDict()
        self._cache_lock = threading.Lock()
        self._pending: dict[str, PendingApproval] = {}
        self._pending_lock = threading.Lock()
        self._seen_request_ids: set[str] = set()
        self._seen_lock = threading.Lock()

    # ------------------------------------------------------------------
    # Configuration surface
    # ------------------------------------------------------------------

    @property
    def policy(self) -> PolicyDocument | None:
        return self._policy

    @property
    def global_ttl_cap(self) -> int:
        return self.minter.global_ttl_cap

    def set_policy(self, document: PolicyDocument, now: int) -> None:
        """Atomically swap the active document; the decision cache dies with
        the old version."""
        self._policy = document
        with self._cache_lock:
            self._cache.clear()
        self.audit_log.append_event(
            EventKind.POLICY_CHANGE,
            {"policy_version": document.version, "rule_count": len(document.rules)},
            now,
        )

    def register_bundle(self, bundle: TrustBundle, now: int) -> None:
        self.bundle_store.register(bundle)
        self.audit_log.append_event(
            EventKind.BUNDLE_CHANGE,
            {
                "trust_domain": bundle.trust_domain,
                "key_ids": sorted(k.key_id for k in bundle.keys),
                "local": bundle.local,
            },
            now,
        )

    # ------------------------------------------------------------------
    # Decision cache
    # ------------------------------------------------------------------

    def _cached_decision(
        self, document: PolicyDocument, ctx: RequestContext
    ) -> tuple[Decision, bool]:
        """Returns (decision, cache_hit). Cache key excludes ctx.now: within
        the entry ttl the stored decision is served verbatim."""
        if not self.cache_enabled:
            return (
                evaluate(document, ctx, global_ttl_cap=self.global_ttl_cap),
                False,
            )
        key = (
            document.version,
            str(ctx.subject),
            sha256_hex(canonical_json(dict(ctx.claims))),
            ctx.resource,
            ctx.action,
        )
        with self._cache_lock:
            entry = self._cache.get(key)
            if entry is not None:
                decision, cached_at = entry
                if ctx.now - cached_at < self.cache_ttl:
                    self._cache.move_to_end(key)
                    return decision, True
                del self._cache[key]
        decision = evaluate(document, ctx, global_ttl_cap=self.global_ttl_cap)
        with self._cache_lock:
            self._cache[key] = (decision, ctx.now)
            self._cache.move_to_end(key)
            while len(self._cache) > self.cache_capacity:
                self._cache.popitem(last=False)
        return decision, False

    # ------------------------------------------------------------------
    # Pipeline
    # ------------------------------------------------------------------

    def handle_access_request(self, req: AccessRequest, now: int) -> BrokerResult:
        """Fixed pipeline: authenticate, contextualize, evaluate, act.

        Exactly one decision audit event per request, plus one issuance
        event when a credential is minted.
        """
        with self._seen_lock:
            if req.request_id in self._seen_request_ids:
                raise ValueError(f"request id {req.request_id!r} was already used")
            self._seen_request_ids.add(req.request_id)

        try:
            identity = verify_token(
                req.token, now, self.bundle_store, self.audience, leeway=self.clock_leeway
            )
        except IdentityError as exc:
            self._audit_decision(
                req,
                now,
                outcome="error",
                error="authentication-failed",
                error_code=exc.code,
            )
            return BrokerResult.error("authentication-failed", code=exc.code)

        ctx = RequestContext(
            subject=identity.subject,
            claims=identity.claims,
            resource=req.resource,
            action=req.action,
            now=now,
        )
        document = self._policy
        if document is None:
            self._audit_decision(
                req,
                now,
                outcome="error",
                error="policy-unavailable",
                subject=str(ctx.subject),
            )
            return BrokerResult.error("policy-unavailable")

        decision, cache_hit = self._cached_decision(document, ctx)

        if decision.outcome is Outcome.ALLOW:
            return self._issue(req, ctx, decision, document, now, cache_hit)

        if decision.outcome is Outcome.PENDING_APPROVAL:
            entry = PendingApproval(
                request_id=req.request_id,
                decision=decision,
                ctx=ctx,
                created_at=now,
                expires_at=now + self.approval_window,
                requested_kind=req.kind,
                requested_ttl=req.ttl_seconds,
                justification=req.justification,
            )
            with self._pending_lock:
                self._pending[req.request_id] = entry
            try:
                seq = self._audit_decision(
                    req,
                    now,
                    outcome=decision.outcome.value,
                    decision=decision,
                    document=document,
                    subject=str(ctx.subject),
                    cache_hit=cache_hit,
                    approval_deadline=entry.expires_at,
                )
            except AuditError:
                with self._pending_lock:
                    self._pending.pop(req.request_id, None)
                return BrokerResult.error("internal", code="audit-storage-failure")
            entry.decision_seq = seq
            return BrokerResult.pending(req.request_id, entry.expires_at, seq)

        trace = explain(document, ctx, global_ttl_cap=self.global_ttl_cap)
        try:
            seq = self._audit_decision(
                req,
                now,
                outcome=decision.outcome.value,
                decision=decision,
                document=document,
                subject=str(ctx.subject),
                cache_hit=cache_hit,
            )
        except AuditError:
            return BrokerResult.error("internal", code="audit-storage-failure")
        return BrokerResult.denied("no-matching-rule", decision_seq=seq, trace=trace)

    def _issue(
        self,
        req: AccessRequest,
        ctx: RequestContext,
        decision: Decision,
        document: PolicyDocument,
        now: int,
        cache_hit: bool,
    ) -> BrokerResult:
        try:
            decision_seq = self._audit_decision(
                req,
                now,
                outcome=decision.outcome.value,
                decision=decision,
                document=document,
                subject=str(ctx.subject),
                cache_hit=cache_hit,
            )
        except AuditError:
            return BrokerResult.error("internal", code="audit-storage-failure")
        scope = CredentialScope(subject=ctx.subject, resource=ctx.resource, action=ctx.action)
        try:
            credential = self.minter.mint(
                req.kind, scope, req.ttl_seconds, decision, now, decision_ref=decision_seq
            )
        except MintError as exc:
            self.audit_log.append_event(
                EventKind.ANOMALY,
                {
                    "anomaly": "mint-failure-after-allow",
                    "error_code": exc.code,
                    "subject": str(ctx.subject),
                    "resource": ctx.resource,
                    "action": ctx.action,
                },
                now,
                request_id=req.request_id,
            )
            return BrokerResult.error("internal", code=exc.code)
        try:
            self._audit_issuance(credential, now, req.request_id)
        except AuditError:
            return BrokerResult.error("internal", code="audit-storage-failure")
        return BrokerResult.issued(credential, decision_seq)

    # ------------------------------------------------------------------
    # Approvals
    # ------------------------------------------------------------------

    def record_approval(
        self, request_id: str, approver: str, verdict: str, now: int
    ) -> BrokerResult:
        """Resolve a pending approval.

        Approval does not replay the old decision: policy is re-evaluated
        against the stored context at approval time, and a document that no
        longer matches denies (fail closed against policy swaps between
        enqueue and approval).
        """
        if verdict not in ("approve", "deny"):
            raise ValueError(f"verdict must be 'approve' or 'deny', got {verdict!r}")
        with self._pending_lock:
            entry = self._pending.get(request_id)
            if entry is None:
                return BrokerResult.error("unknown-request")
            if entry.status is not ApprovalStatus.PENDING:
                return BrokerResult.error("already-resolved", code=entry.status.value)
            if now >= entry.expires_at:
                entry.status = ApprovalStatus.EXPIRED
                entry.resolved_at = now
                self._audit_approval(entry, now, status="expired")
                return BrokerResult.error("approval-expired")
            if verdict == "deny":
                entry.status = ApprovalStatus.DENIED
                entry.approver = approver
                entry.resolved_at = now
                seq = self._audit_approval(entry, now, status="denied", approver=approver)
                return BrokerResult.denied("approval-denied", decision_seq=seq)

            document = self._policy
            recheck = None
            if document is not None:
                recheck = evaluate(
                    document,
                    replace(entry.ctx, now=now),
                    global_ttl_cap=self.global_ttl_cap,
                )
            if recheck is None or recheck.outcome is Outcome.DENY:
                entry.status = ApprovalStatus.DENIED
                entry.approver = approver
                entry.resolved_at = now
                seq = self._audit_approval(
                    entry,
                    now,
                    status="denied",
                    approver=approver,
                    reason="policy-no-longer-matches",
                )
                return BrokerResult.denied("policy-no-longer-matches", decision_seq=seq)

            entry.status = ApprovalStatus.APPROVED
            entry.approver = approver
            entry.resolved_at = now
            approval_seq = self._audit_approval(
                entry,
                now,
                status="approved",
                approver=approver,
                reevaluated_outcome=recheck.outcome.value,
                policy_version=document.version,
            )
            # The human approval discharges the approval obligation; what
            # remains of the re-evaluated decision is an allow.
            resolved = dataclasses.replace(
                recheck, outcome=Outcome.ALLOW, evaluated_at=now
            )
            scope = CredentialScope(
                subject=entry.ctx.subject,
                resource=entry.ctx.resource,
                action=entry.ctx.action,
            )
            try:
                credential = self.minter.mint(
                    entry.requested_kind,
                    scope,
                    entry.requested_ttl,
                    resolved,
                    now,
                    decision_ref=approval_seq,
                )
                self._audit_issuance(credential, now, request_id)
            except MintError as exc:
                self.audit_log.append_event(
                    EventKind.ANOMALY,
                    {
                        "anomaly": "mint-failure-after-approval",
                        "error_code": exc.code,
                        "subject": str(entry.ctx.subject),
                        "resource": entry.ctx.resource,
                        "action": entry.ctx.action,
                    },
                    now,
                    request_id=request_id,
                )
                return BrokerResult.error("internal", code=exc.code)
            except AuditError:
                return BrokerResult.error("internal", code="audit-storage-failure")
            return BrokerResult.issued(credential, approval_seq)

    def list_pending(self, now: int) -> list[PendingApproval]:
        """Snapshot of live entries, oldest first; entries past their
        deadline are transitioned to expired on the way out."""
        with self._pending_lock:
            live = []
            for entry in self._pending.values():
                if entry.status is not ApprovalStatus.PENDING:
                    continue
                if now >= entry.expires_at:
                    entry.status = ApprovalStatus.EXPIRED
                    entry.resolved_at = now
                    self._audit_approval(entry, now, status="expired")
                    continue
                live.append(dataclasses.replace(entry))
            return sorted(live, key=lambda e: (e.created_at, e.request_id))

    def get_pending(self, request_id: str) -> PendingApproval | None:
        with self._pending_lock:
            entry = self._pending.get(request_id)
            return dataclasses.replace(entry) if entry is not None else None

    # ------------------------------------------------------------------
    # Audit payload construction
    # ------------------------------------------------------------------

    def _audit_decision(
        self,
        req: AccessRequest,
        now: int,
        *,
        outcome: str,
        decision: Decision | None = None,
        document: PolicyDocument | None = None,
        subject: str | None = None,
        error: str | None = None,
        error_code: str | None = None,
        cache_hit: bool = False,
        approval_deadline: int | None = None,
    ) -> int:
        payload: dict = {
            "outcome": outcome,
            "resource": req.resource,
            "action": req.action,
            "justification": req.justification,
        }
        if subject is not None:
            payload["subject"] = subject
        if decision is not None:
            payload["matched_rule_ids"] = list(decision.matched_rule_ids)
            payload["approval_required"] = decision.effective_obligations.approval_required
            payload["ttl_cap"] = decision.effective_obligations.ttl_cap
        if document is not None:
            payload["policy_version"] = document.version
        if error is not None:
            payload["error"] = error
        if error_code is not None:
            payload["error_code"] = error_code
        if cache_hit:
            payload["cache_hit"] = True
        if approval_deadline is not None:
            payload["approval_deadline"] = approval_deadline
        event = self.audit_log.append_event(
            EventKind.DECISION, payload, now, request_id=req.request_id
        )
        return event.seq

    def _audit_approval(
        self,
        entry: PendingApproval,
        now: int,
        *,
        status: str,
        approver: str | None = None,
        reason: str | None = None,
        reevaluated_outcome: str | None = None,
        policy_version: str | None = None,
    ) -> int:
        payload: dict = {
            "status": status,
            "subject": str(entry.ctx.subject),
            "resource": entry.ctx.resource,
            "action": entry.ctx.action,
            "original_decision_seq": entry.decision_seq,
        }
        if approver is not None:
            payload["approver"] = approver
        if reason is not None:
            payload["reason"] = reason
        if reevaluated_outcome is not None:
            payload["reevaluated_outcome"] = reevaluated_outcome
        if policy_version is not None:
            payload["policy_version"] = policy_version
        event = self.audit_log.append_event(
            EventKind.APPROVAL, payload, now, request_id=entry.request_id
        )
        return event.seq

    def _audit_issuance(self, credential: Credential, now: int, request_id: str) -> int:
        # Scope and expiry only -- secret material never reaches the log.
        payload = {
            "credential_id": credential.credential_id,
            "kind": credential.kind.value,
            "scope": {
                "subject": str(credential.scope.subject),
                "resource": credential.scope.resource,
                "action": credential.scope.action,
            },
            "expires_at": credential.expires_at,
            "decision_ref": credential.decision_ref,
        }
        event = self.audit_log.append_event(
            EventKind.ISSUANCE, payload, now, request_id=request_id
        )
        return event.seq
