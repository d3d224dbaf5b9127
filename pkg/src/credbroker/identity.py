"""Workload identity: SPIFFE-style IDs, signed identity tokens, trust bundles.

This module answers exactly one question -- "which workload is this?" It
parses and validates workload identifiers, verifies identity tokens against
per-trust-domain key bundles, and registers federated peer bundles. It never
consults policy and never issues access credentials; its public surface
returns only identities, tokens, bundles, and errors.

Token wire format is JWT-compatible: three dot-separated unpadded base64url
segments (header, payload, Ed25519 signature over the two encoded segments),
with a deterministic key-sorted payload so the signed bytes are reproducible.
"""

from __future__ import annotations

import json
import re
import threading
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Iterable, Mapping

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives.asymmetric.ed25519 import (
    Ed25519PrivateKey,
    Ed25519PublicKey,
)

from .canon import b64url_decode, b64url_encode, canonical_json

__all__ = [
    "DEFAULT_CLOCK_LEEWAY",
    "DEFAULT_MAX_TOKEN_LIFETIME",
    "BundleKey",
    "BundleStore",
    "IdentityError",
    "SigningKey",
    "SpiffeId",
    "TrustBundle",
    "VerifiedIdentity",
    "WorkloadToken",
    "dump_bundle",
    "generate_signing_key",
    "issue_token",
    "load_bundle",
    "parse_spiffe_id",
    "verify_token",
]

# Leeway applied to the issued_at/expires_at checks; distributed brokers
# and their clients never share a perfect clock.
DEFAULT_CLOCK_LEEWAY = 5

# Cap on identity-token validity at issuance (seconds).
DEFAULT_MAX_TOKEN_LIFETIME = 3600

_TRUST_DOMAIN_RE = re.compile(r"^[a-z0-9._-]+$")
_PATH_SEGMENT_RE = re.compile(r"^[A-Za-z0-9._-]+$")

_TOKEN_ALG = "EdDSA"
_TOKEN_TYP = "broker-id+jwt"


class IdentityError(Exception):
    """Identity-layer failure with a stable machine-readable code.

    Codes seen by callers:
      parse:        malformed-scheme, empty-trust-domain, illegal-character,
                    illegal-path-segment
      issuance:     unknown-signing-key, ttl-exceeds-max, invalid-ttl
      verification: malformed-token, unknown-trust-domain, unknown-key-id,
                    bad-signature, token-expired, token-not-yet-valid,
                    audience-mismatch
      bundles:      duplicate-key-id, empty-trust-domain, malformed-bundle
    """

    def __init__(self, code: str, message: str):
        super().__init__(f"{code}: {message}")
        self.code = code


def _validate_trust_domain(trust_domain: str) -> None:
    if not trust_domain:
        raise IdentityError("empty-trust-domain", "trust domain must be non-empty")
    if not _TRUST_DOMAIN_RE.match(trust_domain):
        raise IdentityError(
            "illegal-character",
            f"trust domain {trust_domain!r} may contain only lowercase letters, "
            "digits, dots, hyphens, underscores",
        )


def _validate_path(path: str) -> None:
    if path == "":
        return
    if not path.startswith("/"):
        raise IdentityError("illegal-path-segment", "path must start with '/'")
    if "?" in path or "#" in path:
        raise IdentityError("illegal-character", "path may not carry query or fragment")
    for segment in path[1:].split("/"):
        if segment == "":
            raise IdentityError("illegal-path-segment", "empty path segment ('//')")
        if segment in (".", ".."):
            raise IdentityError(
                "illegal-path-segment", f"relative segment {segment!r} not allowed"
            )
        if not _PATH_SEGMENT_RE.match(segment):
            raise IdentityError(
                "illegal-character", f"illegal character in path segment {segment!r}"
            )


@dataclass(frozen=True)
class SpiffeId:
    """Parsed workload identifier: trust domain plus slash-delimited path.

    Canonical textual form is ``spiffe://<trust_domain><path>``; parsing the
    canonical form reproduces the value exactly.
    """

    trust_domain: str
    path: str = ""

    def __post_init__(self) -> None:
        _validate_trust_domain(self.trust_domain)
        _validate_path(self.path)

    def __str__(self) -> str:
        return f"spiffe://{self.trust_domain}{self.path}"


def parse_spiffe_id(text: str) -> SpiffeId:
    """Parse the canonical ``spiffe://`` form.

    The trust domain is lowercase-normalized; the path is case-sensitive.
    """
    if not isinstance(text, str) or not text.startswith("spiffe://"):
        raise IdentityError("malformed-scheme", f"not a spiffe:// identifier: {text!r}")
    rest = text[len("spiffe://") :]
    slash = rest.find("/")
    if slash < 0:
        authority, path = rest, ""
    else:
        authority, path = rest[:slash], rest[slash:]
    if "@" in authority or ":" in authority:
        raise IdentityError("illegal-character", "trust domain may not carry userinfo or port")
    return SpiffeId(trust_domain=authority.lower(), path=path)


# ---------------------------------------------------------------------------
# Trust bundles
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BundleKey:
    """One verification key inside a trust bundle."""

    key_id: str
    public_key: bytes  # raw 32-byte Ed25519 public key
    not_after: int  # epoch seconds; key unusable at and after this instant


@dataclass(frozen=True)
class TrustBundle:
    """Verification keys for one trust domain.

    ``local`` marks the broker's own domain; federated peers are non-local.
    An empty key set is a valid (revoked / unusable) bundle.
    """

    trust_domain: str
    keys: tuple[BundleKey, ...] = ()
    local: bool = False

    def __post_init__(self) -> None:
        _validate_trust_domain(self.trust_domain)
        seen: set[str] = set()
        for key in self.keys:
            if key.key_id in seen:
                raise IdentityError(
                    "duplicate-key-id", f"key id {key.key_id!r} appears twice in bundle"
                )
            seen.add(key.key_id)


class BundleStore:
    """Trust bundle registry, exactly one bundle per trust domain.

    Writes replace the whole mapping under a lock (copy-on-write) so readers
    always see a consistent snapshot; verification is pure over a snapshot.
    """

    def __init__(self, bundles: Iterable[TrustBundle] = ()):
        self._lock = threading.Lock()
        self._bundles: dict[str, TrustBundle] = {}
        for bundle in bundles:
            self.register(bundle)

    def register(self, bundle: TrustBundle) -> None:
        """Register or replace the bundle for its trust domain."""
        with self._lock:
            updated = dict(self._bundles)
            updated[bundle.trust_domain] = bundle
            self._bundles = updated

    def get(self, trust_domain: str) -> TrustBundle | None:
        return self._bundles.get(trust_domain)

    def domains(self) -> list[str]:
        return sorted(self._bundles)


# ---------------------------------------------------------------------------
# Tokens
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class WorkloadToken:
    """Signed workload identity assertion.

    ``signature`` covers the ASCII bytes of ``<header_b64>.<payload_b64>``,
    so any byte change in either encoded segment invalidates it.
    """

    subject: SpiffeId
    audience: str
    issued_at: int
    expires_at: int
    claims: Mapping[str, str]
    key_id: str
    signature: bytes

    def signing_input(self) -> bytes:
        header, payload = _token_segments(self)
        return f"{header}.{payload}".encode("ascii")

    def serialize(self) -> str:
        header, payload = _token_segments(self)
        return f"{header}.{payload}.{b64url_encode(self.signature)}"


@dataclass(frozen=True)
class VerifiedIdentity:
    """Result of successful token verification: who, plus attested claims."""

    subject: SpiffeId
    claims: dict[str, str] = field(default_factory=dict)


@dataclass(frozen=True)
class SigningKey:
    """Private half of a bundle key; issuance-side only."""

    key_id: str
    private_key: Ed25519PrivateKey

    def public_bytes(self) -> bytes:
        from cryptography.hazmat.primitives.serialization import (
            Encoding,
            PublicFormat,
        )

        return self.private_key.public_key().public_bytes(
            Encoding.Raw, PublicFormat.Raw
        )

    def bundle_key(self, not_after: int) -> BundleKey:
        return BundleKey(self.key_id, self.public_bytes(), not_after)


def generate_signing_key(key_id: str) -> SigningKey:
    return SigningKey(key_id=key_id, private_key=Ed25519PrivateKey.generate())


def _token_segments(token: WorkloadToken) -> tuple[str, str]:
    header = {"alg": _TOKEN_ALG, "kid": token.key_id, "typ": _TOKEN_TYP}
    payload = {
        "aud": token.audience,
        "claims": dict(token.claims),
        "exp": token.expires_at,
        "iat": token.issued_at,
        "sub": str(token.subject),
    }
    return b64url_encode(canonical_json(header)), b64url_encode(canonical_json(payload))


def deserialize_token(text: str) -> WorkloadToken:
    """Decode the three-segment form; raises malformed-token on any defect."""
    try:
        header_b64, payload_b64, sig_b64 = text.split(".")
        header = json.loads(b64url_decode(header_b64))
        payload = json.loads(b64url_decode(payload_b64))
        signature = b64url_decode(sig_b64)
        subject = parse_spiffe_id(payload["sub"])
        claims = payload["claims"]
        if not isinstance(claims, dict) or not all(
            isinstance(k, str) and isinstance(v, str) for k, v in claims.items()
        ):
            raise ValueError("claims must map strings to strings")
        token = WorkloadToken(
            subject=subject,
            audience=str(payload["aud"]),
            issued_at=int(payload["iat"]),
            expires_at=int(payload["exp"]),
            claims=claims,
            key_id=str(header["kid"]),
            signature=signature,
        )
    except IdentityError as exc:
        raise IdentityError("malformed-token", f"undecodable token: {exc}") from exc
    except Exception as exc:
        raise IdentityError("malformed-token", f"undecodable token: {exc}") from exc
    # Only the canonical encoding is accepted; base64 variants that decode to
    # the same bytes would otherwise slip past tamper detection.
    if token.serialize() != text:
        raise IdentityError("malformed-token", "token is not in canonical form")
    return token


def issue_token(
    subject: SpiffeId,
    audience: str,
    claims: Mapping[str, str],
    ttl: int,
    signing_key: SigningKey,
    *,
    store: BundleStore,
    now: int,
    max_lifetime: int = DEFAULT_MAX_TOKEN_LIFETIME,
) -> WorkloadToken:
    """Mint an identity token; local stand-in for an external identity plane.

    The signing key must already be registered (same key id and public key)
    in the bundle for the subject's trust domain, so freshly issued tokens
    verify against the same store.
    """
    if ttl <= 0:
        raise IdentityError("invalid-ttl", "token ttl must be positive")
    if ttl > max_lifetime:
        raise IdentityError(
            "ttl-exceeds-max", f"requested ttl {ttl}s exceeds max lifetime {max_lifetime}s"
        )
    bundle = store.get(subject.trust_domain)
    registered = None
    if bundle is not None and bundle.local:
        registered = next((k for k in bundle.keys if k.key_id == signing_key.key_id), None)
    if registered is None or registered.public_key != signing_key.public_bytes():
        raise IdentityError(
            "unknown-signing-key",
            f"key {signing_key.key_id!r} is not registered in a local bundle "
            f"for domain {subject.trust_domain!r}",
        )
    unsigned = WorkloadToken(
        subject=subject,
        audience=audience,
        issued_at=now,
        expires_at=now + ttl,
        claims=dict(claims),
        key_id=signing_key.key_id,
        signature=b"",
    )
    signature = signing_key.private_key.sign(unsigned.signing_input())
    return WorkloadToken(
        subject=unsigned.subject,
        audience=unsigned.audience,
        issued_at=unsigned.issued_at,
        expires_at=unsigned.expires_at,
        claims=unsigned.claims,
        key_id=unsigned.key_id,
        signature=signature,
    )


def verify_token(
    token: WorkloadToken | str,
    now: int,
    store: BundleStore,
    expected_audience: str,
    *,
    leeway: int = DEFAULT_CLOCK_LEEWAY,
) -> VerifiedIdentity:
    """Verify a token against the bundle for its subject's trust domain.

    Bundle lookup is keyed by the token's own trust domain, so identical key
    material registered under another domain never verifies it (federation
    isolation). Time checks apply ``leeway`` on both ends.
    """
    if isinstance(token, str):
        token = deserialize_token(token)
    bundle = store.get(token.subject.trust_domain)
    if bundle is None:
        raise IdentityError(
            "unknown-trust-domain",
            f"no trust bundle registered for {token.subject.trust_domain!r}",
        )
    key = next(
        (k for k in bundle.keys if k.key_id == token.key_id and now < k.not_after),
        None,
    )
    if key is None:
        raise IdentityError(
            "unknown-key-id",
            f"no usable key {token.key_id!r} in bundle for "
            f"{token.subject.trust_domain!r}",
        )
    try:
        Ed25519PublicKey.from_public_bytes(key.public_key).verify(
            token.signature, token.signing_input()
        )
    except (InvalidSignature, ValueError) as exc:
        raise IdentityError("bad-signature", "token signature does not verify") from exc
    if now < token.issued_at - leeway:
        raise IdentityError("token-not-yet-valid", "token issued in the future")
    if now >= token.expires_at + leeway:
        raise IdentityError("token-expired", "token validity window has passed")
    if token.audience != expected_audience:
        raise IdentityError(
            "audience-mismatch",
            f"token audience {token.audience!r} is not this broker "
            f"({expected_audience!r})",
        )
    return VerifiedIdentity(subject=token.subject, claims=dict(token.claims))


# ---------------------------------------------------------------------------
# Bundle file format
# ---------------------------------------------------------------------------

_ISO_FMT = "%Y-%m-%dT%H:%M:%SZ"


def _parse_instant(value) -> int:
    if isinstance(value, int):
        return value
    if isinstance(value, datetime):
        return int(value.replace(tzinfo=value.tzinfo or timezone.utc).timestamp())
    return int(
        datetime.strptime(str(value), _ISO_FMT).replace(tzinfo=timezone.utc).timestamp()
    )


def _format_instant(epoch: int) -> str:
    return datetime.fromtimestamp(epoch, tz=timezone.utc).strftime(_ISO_FMT)


def load_bundle(text: str) -> TrustBundle:
    """Parse the bundle file format (YAML): trust_domain, local, key entries.

    Key entries carry key_id, base64 public key, and an ISO-8601 UTC
    not_after timestamp.
    """
    import base64

    import yaml

    try:
        doc = yaml.safe_load(text)
        keys = tuple(
            BundleKey(
                key_id=str(entry["key_id"]),
                public_key=base64.b64decode(entry["public_key"]),
                not_after=_parse_instant(entry["not_after"]),
            )
            for entry in doc.get("keys", [])
        )
        return TrustBundle(
            trust_domain=str(doc["trust_domain"]),
            keys=keys,
            local=bool(doc.get("local", False)),
        )
    except IdentityError:
        raise
    except Exception as exc:
        raise IdentityError("malformed-bundle", f"cannot parse bundle file: {exc}") from exc


def dump_bundle(bundle: TrustBundle) -> str:
    import base64

    import yaml

    doc = {
        "trust_domain": bundle.trust_domain,
        "local": bundle.local,
        "keys": [
            {
                "key_id": key.key_id,
                "public_key": base64.b64encode(key.public_key).decode("ascii"),
                "not_after": _format_instant(key.not_after),
            }
            for key in bundle.keys
        ],
    }
    return yaml.safe_dump(doc, sort_keys=False)
