"""Short-lived scope-bound credential minting and verification.

Credentials are bound to exactly one (subject, resource, action) triple and
clamped to the smallest of the requested ttl, the decision's ttl cap, and
the global cap. Three backend kinds are local stand-ins whose shapes match
the real thing: a self-contained signed session token, a cloud-style
temporary-credential triple, and a single-use secret lease.

The minter holds no per-subject secrets: its state is the broker's minting
key, a nonce counter, and a lease table keyed by lease-id digest. The proof
is a keyed integrity tag (HMAC-SHA256) over the key-sorted envelope; the
envelope carries ``proof_alg`` so the scheme can move to asymmetric
signatures without a format change.
"""

from __future__ import annotations

import hmac
import json
import secrets
import threading
from dataclasses import dataclass
from datetime import datetime, timezone
from enum import Enum

from .canon import b64url_decode, b64url_encode, canonical_json, sha256_hex
from .identity import SpiffeId, parse_spiffe_id
from .policy import DEFAULT_GLOBAL_TTL_CAP, Decision, Outcome

__all__ = [
    "Credential",
    "CredentialCheck",
    "CredentialKind",
    "CredentialScope",
    "MintError",
    "Minter",
    "deserialize_credential",
    "verify_credential",
]

_PROOF_ALG = "HMAC-SHA256"
_PROOF_CONTEXT = b"credbroker:credential:v1:"
_SESSION_CONTEXT = b"credbroker:session-token:v1:"


class CredentialKind(str, Enum):
    SESSION_TOKEN = "session_token"
    STS_LIKE = "sts_like"
    SECRET_LEASE = "secret_lease"


class MintError(Exception):
    """Minting failure: deny-decision, zero-ttl, or unknown-kind."""

    def __init__(self, code: str, message: str):
        super().__init__(f"{code}: {message}")
        self.code = code


@dataclass(frozen=True)
class CredentialScope:
    """The exact triple the credential is usable for, nothing wider."""

    subject: SpiffeId
    resource: str
    action: str

    def __post_init__(self) -> None:
        if not self.resource or not self.action:
            raise ValueError("scope resource and action must be non-empty")


@dataclass(frozen=True)
class Credential:
    """Minted credential; ``proof`` binds every other field."""

    credential_id: str
    kind: CredentialKind
    scope: CredentialScope
    not_before: int
    expires_at: int
    decision_ref: int
    secret_material: str
    proof: bytes

    def envelope_fields(self) -> dict:
        return {
            "credential_id": self.credential_id,
            "kind": self.kind.value,
            "subject": str(self.scope.subject),
            "resource": self.scope.resource,
            "action": self.scope.action,
            "not_before": self.not_before,
            "expires_at": self.expires_at,
            "decision_ref": self.decision_ref,
            "secret_material": self.secret_material,
            "proof_alg": _PROOF_ALG,
        }

    def serialize(self) -> str:
        """Text envelope: the key-sorted fields plus base64url proof."""
        fields = self.envelope_fields()
        fields["proof"] = b64url_encode(self.proof)
        return canonical_json(fields).decode("utf-8")


@dataclass(frozen=True)
class CredentialCheck:
    """Accept/reject verdict; rejections carry a distinct reason.

    reasons: bad-proof, expired, not-yet-valid, scope-mismatch (with the
    first differing field in ``mismatch_field``). Envelopes that cannot be
    parsed count as bad-proof.
    """

    ok: bool
    reason: str | None = None
    mismatch_field: str | None = None


def _proof_tag(key: bytes, credential_fields: dict) -> bytes:
    return hmac.new(
        key, _PROOF_CONTEXT + canonical_json(credential_fields), "sha256"
    ).digest()


def deserialize_credential(text: str) -> Credential:
    """Parse the text envelope; raises ValueError on any structural defect."""
    data = json.loads(text)
    scope = CredentialScope(
        subject=parse_spiffe_id(data["subject"]),
        resource=data["resource"],
        action=data["action"],
    )
    credential = Credential(
        credential_id=str(data["credential_id"]),
        kind=CredentialKind(data["kind"]),
        scope=scope,
        not_before=int(data["not_before"]),
        expires_at=int(data["expires_at"]),
        decision_ref=int(data["decision_ref"]),
        secret_material=str(data["secret_material"]),
        proof=b64url_decode(data["proof"]),
    )
    if credential.serialize() != text:
        raise ValueError("credential envelope is not in canonical form")
    return credential


class Minter:
    """Mints credentials under a single symmetric minting key.

    Thread-safe: the id counter and the lease table are guarded; credentials
    themselves are immutable values.
    """

    def __init__(self, minting_key: bytes, *, global_ttl_cap: int = DEFAULT_GLOBAL_TTL_CAP):
        if global_ttl_cap <= 0:
            raise ValueError("global ttl cap must be positive")
        self._key = minting_key
        self._global_ttl_cap = global_ttl_cap
        self._lock = threading.Lock()
        self._counter = 0
        # lease-id digest -> (credential_id, expires_at); never the lease
        # secret itself, never anything subject-indexed.
        self._leases: dict[str, tuple[str, int]] = {}

    @property
    def global_ttl_cap(self) -> int:
        return self._global_ttl_cap

    def mint(
        self,
        kind: CredentialKind | str,
        scope: CredentialScope,
        requested_ttl: int,
        decision: Decision,
        now: int,
        *,
        decision_ref: int = 0,
    ) -> Credential:
        """Mint after an allow decision; lifetime is the min of all caps.

        ``decision_ref`` is the audit sequence number of the event that
        authorized this issuance.
        """
        try:
            kind = CredentialKind(kind)
        except ValueError:
            raise MintError("unknown-kind", f"no minter backend for {kind!r}") from None
        if decision.outcome is not Outcome.ALLOW:
            raise MintError(
                "deny-decision",
                f"minting requires an allow decision, got {decision.outcome.value}",
            )
        if requested_ttl <= 0:
            raise MintError("zero-ttl", "requested ttl must be positive")

        ttl = min(
            requested_ttl,
            decision.effective_obligations.ttl_cap,
            self._global_ttl_cap,
        )
        with self._lock:
            self._counter += 1
            serial = self._counter
        credential_id = f"cred-{serial:06d}-{secrets.token_hex(8)}"
        expires_at = now + ttl

        if kind is CredentialKind.SESSION_TOKEN:
            secret_material = self._session_token(credential_id, scope, expires_at)
        elif kind is CredentialKind.STS_LIKE:
            secret_material = _sts_material(expires_at)
        else:
            lease_id = f"lease-{secrets.token_hex(16)}"
            with self._lock:
                self._leases[sha256_hex(lease_id.encode())] = (credential_id, expires_at)
            secret_material = lease_id

        fields = {
            "credential_id": credential_id,
            "kind": kind.value,
            "subject": str(scope.subject),
            "resource": scope.resource,
            "action": scope.action,
            "not_before": now,
            "expires_at": expires_at,
            "decision_ref": decision_ref,
            "secret_material": secret_material,
            "proof_alg": _PROOF_ALG,
        }
        return Credential(
            credential_id=credential_id,
            kind=kind,
            scope=scope,
            not_before=now,
            expires_at=expires_at,
            decision_ref=decision_ref,
            secret_material=secret_material,
            proof=_proof_tag(self._key, fields),
        )

    def _session_token(self, credential_id: str, scope: CredentialScope, expires_at: int) -> str:
        payload = canonical_json(
            {
                "action": scope.action,
                "credential_id": credential_id,
                "expires_at": expires_at,
                "resource": scope.resource,
                "subject": str(scope.subject),
            }
        )
        tag = hmac.new(self._key, _SESSION_CONTEXT + payload, "sha256").digest()
        return f"st.{b64url_encode(payload)}.{b64url_encode(tag)}"

    def redeem_lease(self, lease_id: str, now: int) -> str | None:
        """Single-use redemption: returns the credential id once, then never
        again; expired leases are unredeemable."""
        digest = sha256_hex(lease_id.encode())
        with self._lock:
            entry = self._leases.pop(digest, None)
        if entry is None:
            return None
        credential_id, expires_at = entry
        if now >= expires_at:
            return None
        return credential_id

    def key_bytes(self) -> bytes:
        """The verification key for resource servers in the same trust zone."""
        return self._key


def _sts_material(expires_at: int) -> str:
    expiration = datetime.fromtimestamp(expires_at, tz=timezone.utc).strftime(
        "%Y-%m-%dT%H:%M:%SZ"
    )
    return canonical_json(
        {
            "access_key_id": "BRKA" + secrets.token_hex(8).upper(),
            "secret_access_key": secrets.token_urlsafe(30),
            "session_token": secrets.token_urlsafe(45),
            "expiration": expiration,
        }
    ).decode("utf-8")


def verify_credential(
    credential: Credential | str,
    presented_scope: CredentialScope,
    now: int,
    minting_key: bytes,
) -> CredentialCheck:
    """Accept iff the proof verifies, now is inside the validity window, and
    the presented scope equals the bound scope exactly."""
    if isinstance(credential, str):
        try:
            credential = deserialize_credential(credential)
        except Exception:
            return CredentialCheck(ok=False, reason="bad-proof")
    expected = _proof_tag(minting_key, credential.envelope_fields())
    if not hmac.compare_digest(expected, credential.proof):
        return CredentialCheck(ok=False, reason="bad-proof")
    if now < credential.not_before:
        return CredentialCheck(ok=False, reason="not-yet-valid")
    if now >= credential.expires_at:
        return CredentialCheck(ok=False, reason="expired")
    for field_name in ("subject", "resource", "action"):
        if getattr(presented_scope, field_name) != getattr(credential.scope, field_name):
            return CredentialCheck(ok=False, reason="scope-mismatch", mismatch_field=field_name)
    return CredentialCheck(ok=True)
