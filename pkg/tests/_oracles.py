"""Independent first-principles oracles.

Everything here is deliberately written from the documented semantics, not
from the implementation: the policy oracle is a naive scan over plain rule
data, and the chain oracle re-hashes records with hashlib/json directly.
Keep these free of imports from the modules they check.
"""

from __future__ import annotations

import hashlib
import json


def naive_rule_matches(rule: dict, ctx: dict) -> bool:
    """Plain-data rule match: rule and ctx are dicts of primitives.

    rule: subject (pattern), resource (pattern), actions (set), conditions
    (list of [key, value]), not_before/not_after (int or None),
    ctx: subject (canonical string), resource, action, claims (dict), now.
    """
    pattern = rule["subject"]
    if pattern.endswith("/*"):
        if not ctx["subject"].startswith(pattern[: len(pattern) - 1]):
            return False
    elif ctx["subject"] != pattern:
        return False

    pattern = rule["resource"]
    if pattern.endswith("*"):
        if not ctx["resource"].startswith(pattern[: len(pattern) - 1]):
            return False
    elif ctx["resource"] != pattern:
        return False

    if ctx["action"] not in rule["actions"]:
        return False

    for key, value in rule.get("conditions", []):
        if key not in ctx["claims"] or ctx["claims"][key] != value:
            return False

    nb = rule.get("not_before")
    if nb is not None and ctx["now"] < nb:
        return False
    na = rule.get("not_after")
    if na is not None and ctx["now"] >= na:
        return False
    return True


def naive_policy_scan(rules: list[dict], ctx: dict, global_cap: int = 900) -> dict:
    """Linear scan returning outcome, matched ids, and joined obligations."""
    matched = [rule for rule in rules if naive_rule_matches(rule, ctx)]
    if not matched:
        return {
            "outcome": "deny",
            "matched": [],
            "approval_required": False,
            "ttl_cap": global_cap,
        }
    plain = [rule for rule in matched if not rule.get("approval_required")]
    deciding = plain if plain else matched
    caps = [
        rule["max_ttl"] if rule.get("max_ttl") is not None else global_cap
        for rule in deciding
    ]
    return {
        "outcome": "allow" if plain else "pending_approval",
        "matched": [rule["id"] for rule in matched],
        "approval_required": not plain,
        "ttl_cap": min(max(caps), global_cap),
    }


def rehash_chain(records: list[dict]) -> list[str]:
    """Recompute the whole hash chain from genesis; returns hex digests.

    Uses only the documented recipe: this_hash = SHA-256(prev_hash_bytes ||
    key-sorted compact JSON of {kind, payload, request_id, seq, timestamp}).
    """
    digests = []
    prev = b"\x00" * 32
    for record in records:
        body = json.dumps(
            {
                "kind": record["kind"],
                "payload": record["payload"],
                "request_id": record["request_id"],
                "seq": record["seq"],
                "timestamp": record["timestamp"],
            },
            sort_keys=True,
            separators=(",", ":"),
            ensure_ascii=False,
        ).encode("utf-8")
        prev = hashlib.sha256(prev + body).digest()
        digests.append(prev.hex())
    return digests
