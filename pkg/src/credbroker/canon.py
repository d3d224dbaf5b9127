"""Canonical byte encoding shared by tokens, credentials, and audit records.

One encoding, three uses: the signed token payload, the credential envelope,
and the audit hash chain all serialize the same way (key-sorted compact JSON,
UTF-8), so an external verifier needs a single recipe.
"""

from __future__ import annotations

import base64
import hashlib
import json
from typing import Any

# Genesis link for hash chains.
ZERO_DIGEST = b"\x00" * 32


def canonical_json(obj: Any) -> bytes:
    """Deterministic key-sorted compact JSON, UTF-8 encoded."""
    return json.dumps(
        obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False
    ).encode("utf-8")


def sha256(data: bytes) -> bytes:
    return hashlib.sha256(data).digest()


def sha256_hex(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def b64url_encode(data: bytes) -> str:
    """Unpadded base64url, the segment encoding for tokens and proofs."""
    return base64.urlsafe_b64encode(data).rstrip(b"=").decode("ascii")


def b64url_decode(text: str) -> bytes:
    pad = -len(text) % 4
    return base64.urlsafe_b64decode(text + "=" * pad)
