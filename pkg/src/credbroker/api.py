"""HTTP surface for the broker: stable wire formats over a local socket.

The transport layer adds no authorization logic of its own -- every response
is a straight mapping of a broker-core result, and each broker error
category has exactly one status code (see ``ERROR_STATUS``). Admin endpoints
(policy and bundle updates, approval verdicts) require a static bearer
secret from configuration; TLS/mTLS termination is a reverse-proxy concern
and is documented, not implemented, here.

    POST /v1/credentials            request a credential
    GET  /v1/approvals              pending approval queue
    POST /v1/approvals/{request_id} resolve one (admin)
    GET  /v1/audit                  query events + current head hash
    PUT  /v1/policy                 swap the active policy (admin)
    PUT  /v1/bundles                register a trust bundle (admin)
    GET  /v1/healthz                liveness
"""

from __future__ import annotations

import hmac
import os
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import yaml
from fastapi import Depends, FastAPI, HTTPException, Query, Request
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from .audit import AuditError, AuditLog
from .broker import (
    DEFAULT_APPROVAL_WINDOW,
    AccessRequest,
    Broker,
    BrokerResult,
    ResultStatus,
    new_request_id,
)
from .canon import b64url_decode, b64url_encode
from .identity import BundleStore, IdentityError, load_bundle
from .minting import CredentialKind, Minter
from .policy import DEFAULT_GLOBAL_TTL_CAP, PolicyValidationError, load_policy

__all__ = [
    "ERROR_STATUS",
    "BrokerConfig",
    "ConfigError",
    "ServiceHandle",
    "build_broker",
    "create_app",
    "load_config",
    "serve",
]

# One status code per broker error category; the mapping is total.
ERROR_STATUS = {
    "authentication-failed": 401,
    "policy-unavailable": 503,
    "internal": 500,
    "unknown-request": 404,
    "already-resolved": 409,
    "approval-expired": 410,
}


class ConfigError(Exception):
    pass


@dataclass
class BrokerConfig:
    """Startup configuration; every referenced file must exist."""

    listen_address: str = "127.0.0.1:8710"
    audience: str = "credbroker"
    policy_path: str | None = None
    bundle_paths: list[str] = field(default_factory=list)
    minting_key_path: str | None = None
    global_ttl_cap: int = DEFAULT_GLOBAL_TTL_CAP
    approval_window: int = DEFAULT_APPROVAL_WINDOW
    cache_enabled: bool = False
    cache_ttl: int = 30
    cache_capacity: int = 1024
    audit_log_path: str = "audit.log"
    admin_token: str | None = None

    def validate(self) -> None:
        if self.global_ttl_cap <= 0:
            raise ConfigError("global_ttl_cap must be positive")
        if self.approval_window <= 0:
            raise ConfigError("approval_window must be positive")
        for label, candidate in [
            ("policy_path", self.policy_path),
            ("minting_key_path", self.minting_key_path),
            *[("bundle_paths entry", p) for p in self.bundle_paths],
        ]:
            if candidate is not None and not Path(candidate).exists():
                raise ConfigError(f"{label} {candidate!r} does not exist")


def load_config(path: str | Path) -> BrokerConfig:
    """Read the YAML config file; CREDBROKER_ADMIN_TOKEN overrides the
    admin_token field so the secret can stay out of the file."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file {path} does not exist")
    raw = yaml.safe_load(path.read_text(encoding="utf-8")) or {}
    known = {f for f in BrokerConfig.__dataclass_fields__}
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    config = BrokerConfig(**raw)
    env_token = os.environ.get("CREDBROKER_ADMIN_TOKEN")
    if env_token:
        config.admin_token = env_token
    config.validate()
    return config


def _load_minting_key(path: str | None) -> bytes:
    if path is None:
        # Ephemeral key: credentials from a previous process are unverifiable,
        # which is the safe default for a dev instance.
        import secrets

        return secrets.token_bytes(32)
    text = Path(path).read_text(encoding="utf-8").strip()
    return b64url_decode(text)


def build_broker(config: BrokerConfig, *, fresh_audit: bool = False) -> Broker:
    """Assemble a broker from configuration: bundles, policy, key, audit."""
    config.validate()
    store = BundleStore()
    for bundle_path in config.bundle_paths:
        store.register(load_bundle(Path(bundle_path).read_text(encoding="utf-8")))
    minter = Minter(
        _load_minting_key(config.minting_key_path), global_ttl_cap=config.global_ttl_cap
    )
    audit_path = Path(config.audit_log_path)
    if audit_path.exists() and audit_path.stat().st_size > 0 and not fresh_audit:
        audit_log = AuditLog.open(audit_path)
    else:
        audit_log = AuditLog(audit_path)
    policy = None
    if config.policy_path is not None:
        policy = load_policy(
            Path(config.policy_path).read_text(encoding="utf-8"),
            global_ttl_cap=config.global_ttl_cap,
        )
    return Broker(
        bundle_store=store,
        minter=minter,
        audit_log=audit_log,
        audience=config.audience,
        policy=policy,
        approval_window=config.approval_window,
        cache_enabled=config.cache_enabled,
        cache_ttl=config.cache_ttl,
        cache_capacity=config.cache_capacity,
    )


# ---------------------------------------------------------------------------
# Wire models
# ---------------------------------------------------------------------------


class CredentialRequestBody(BaseModel):
    token: str
    resource: str
    action: str
    justification: str = ""
    kind: str = CredentialKind.SESSION_TOKEN.value
    ttl_seconds: int = 900


class VerdictBody(BaseModel):
    verdict: str  # "approve" | "deny"
    approver: str


def _credential_json(result: BrokerResult) -> dict:
    credential = result.credential
    return {
        "status": "issued",
        "credential": credential.serialize(),
        "credential_id": credential.credential_id,
        "kind": credential.kind.value,
        "expires_at": credential.expires_at,
        "decision_seq": result.decision_seq,
    }


def _trace_json(result: BrokerResult) -> list[dict]:
    if result.trace is None:
        return []
    return [
        {"rule_id": r.rule_id, "matched": r.matched, "failed_at": r.failed_at}
        for r in result.trace.rules
    ]


def _event_json(event) -> dict:
    return event.to_record()


def create_app(
    broker: Broker,
    *,
    admin_token: str | None = None,
    clock: Callable[[], int] | None = None,
) -> FastAPI:
    """Build the HTTP app around one broker core.

    ``clock`` injects request time (epoch seconds); production uses the wall
    clock, tests use a simulated one.
    """
    clock = clock or (lambda: int(time.time()))
    app = FastAPI(title="credbroker", version="0.1.0", docs_url=None, redoc_url=None)

    def require_admin(request: Request) -> str:
        if admin_token is None:
            raise HTTPException(status_code=403, detail="admin endpoints are disabled")
        header = request.headers.get("authorization", "")
        presented = header.removeprefix("Bearer ").strip()
        if not presented or not hmac.compare_digest(presented, admin_token):
            raise HTTPException(status_code=401, detail="admin credentials required")
        return "admin"

    @app.get("/v1/healthz")
    def healthz() -> dict:
        return {"status": "ok", "audit_head": b64url_encode(broker.audit_log.head_hash)}

    @app.post("/v1/credentials")
    def request_credential(body: CredentialRequestBody) -> JSONResponse:
        try:
            kind = CredentialKind(body.kind)
        except ValueError:
            raise HTTPException(status_code=400, detail=f"unknown credential kind {body.kind!r}")
        if body.ttl_seconds <= 0:
            raise HTTPException(status_code=400, detail="ttl_seconds must be positive")
        now = clock()
        req = AccessRequest(
            request_id=new_request_id(),
            token=body.token,
            resource=body.resource,
            action=body.action,
            justification=body.justification,
            received_at=now,
            kind=kind,
            ttl_seconds=body.ttl_seconds,
        )
        result = broker.handle_access_request(req, now)
        if result.status is ResultStatus.ISSUED:
            return JSONResponse(status_code=200, content=_credential_json(result))
        if result.status is ResultStatus.PENDING:
            return JSONResponse(
                status_code=202,
                content={
                    "status": "pending",
                    "request_id": result.request_id,
                    "deadline": result.deadline,
                },
            )
        if result.status is ResultStatus.DENIED:
            return JSONResponse(
                status_code=403,
                content={
                    "status": "denied",
                    "reason": result.reason,
                    "decision_seq": result.decision_seq,
                    "trace": _trace_json(result),
                },
            )
        return JSONResponse(
            status_code=ERROR_STATUS[result.error_category],
            content={
                "status": "error",
                "error": result.error_category,
                "code": result.error_code,
            },
        )

    @app.get("/v1/approvals")
    def list_approvals() -> dict:
        entries = broker.list_pending(clock())
        return {
            "pending": [
                {
                    "request_id": e.request_id,
                    "subject": str(e.ctx.subject),
                    "resource": e.ctx.resource,
                    "action": e.ctx.action,
                    "justification": e.justification,
                    "created_at": e.created_at,
                    "deadline": e.expires_at,
                }
                for e in entries
            ]
        }

    @app.post("/v1/approvals/{request_id}")
    def resolve_approval(
        request_id: str, body: VerdictBody, _admin: str = Depends(require_admin)
    ) -> JSONResponse:
        if body.verdict not in ("approve", "deny"):
            raise HTTPException(status_code=400, detail="verdict must be approve or deny")
        if not body.approver:
            raise HTTPException(status_code=400, detail="approver must be non-empty")
        result = broker.record_approval(request_id, body.approver, body.verdict, clock())
        if result.status is ResultStatus.ISSUED:
            return JSONResponse(status_code=200, content=_credential_json(result))
        if result.status is ResultStatus.DENIED:
            return JSONResponse(
                status_code=200,
                content={
                    "status": "denied",
                    "reason": result.reason,
                    "decision_seq": result.decision_seq,
                },
            )
        return JSONResponse(
            status_code=ERROR_STATUS[result.error_category],
            content={
                "status": "error",
                "error": result.error_category,
                "code": result.error_code,
            },
        )

    @app.get("/v1/audit")
    def query_audit(
        kind: str | None = Query(default=None),
        request_id: str | None = Query(default=None),
        subject: str | None = Query(default=None),
        seq_min: int | None = Query(default=None),
        seq_max: int | None = Query(default=None),
        time_min: int | None = Query(default=None),
        time_max: int | None = Query(default=None),
    ) -> dict:
        seq_range = None
        if seq_min is not None or seq_max is not None:
            seq_range = (seq_min or 0, seq_max if seq_max is not None else 2**62)
        time_range = None
        if time_min is not None or time_max is not None:
            time_range = (time_min or 0, time_max if time_max is not None else 2**62)
        try:
            events = broker.audit_log.query_events(
                kind=kind,
                request_id=request_id,
                subject=subject,
                seq_range=seq_range,
                time_range=time_range,
            )
        except AuditError as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        return {
            "events": [_event_json(e) for e in events],
            "head_hash": broker.audit_log.head_hash.hex(),
        }

    @app.put("/v1/policy")
    async def put_policy(request: Request, _admin: str = Depends(require_admin)) -> dict:
        text = (await request.body()).decode("utf-8")
        try:
            document = load_policy(text, global_ttl_cap=broker.global_ttl_cap)
        except PolicyValidationError as exc:
            raise HTTPException(
                status_code=400,
                detail={"errors": [str(issue) for issue in exc.issues]},
            )
        broker.set_policy(document, clock())
        return {"version": document.version, "rule_count": len(document.rules)}

    @app.put("/v1/bundles")
    async def put_bundle(request: Request, _admin: str = Depends(require_admin)) -> dict:
        text = (await request.body()).decode("utf-8")
        try:
            bundle = load_bundle(text)
        except IdentityError as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        broker.register_bundle(bundle, clock())
        return {
            "trust_domain": bundle.trust_domain,
            "key_ids": sorted(k.key_id for k in bundle.keys),
            "local": bundle.local,
        }

    return app


# ---------------------------------------------------------------------------
# Serving
# ---------------------------------------------------------------------------


@dataclass
class ServiceHandle:
    """A running broker service; ``stop()`` drains in-flight requests."""

    app: FastAPI
    broker: Broker
    host: str
    port: int
    _server: object = None
    _thread: threading.Thread | None = None

    @property
    def base_url(self) -> str:
        return f"http://{self.host}:{self.port}"

    def stop(self) -> None:
        if self._server is not None:
            self._server.should_exit = True
        if self._thread is not None:
            self._thread.join(timeout=10)
        self.broker.audit_log.close()


def serve(config: BrokerConfig, *, wait_ready: float = 5.0) -> ServiceHandle:
    """Start the service on the configured address.

    Raises ConfigError for invalid configuration, AuditError when the stored
    chain fails verification, and OSError on bind failure.
    """
    import uvicorn

    broker = build_broker(config)
    app = create_app(broker, admin_token=config.admin_token)
    host, _, port_text = config.listen_address.partition(":")
    port = int(port_text or "8710")
    uv_config = uvicorn.Config(app, host=host or "127.0.0.1", port=port, log_level="warning")
    server = uvicorn.Server(uv_config)
    thread = threading.Thread(target=server.run, daemon=True, name="credbroker-api")
    thread.start()
    deadline = time.time() + wait_ready
    while not server.started:
        if not thread.is_alive() or time.time() > deadline:
            raise OSError(f"bind-failure: could not start on {config.listen_address}")
        time.sleep(0.01)
    return ServiceHandle(app=app, broker=broker, host=host or "127.0.0.1", port=port,
                         _server=server, _thread=thread)
