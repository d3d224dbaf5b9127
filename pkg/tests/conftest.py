"""Shared fixtures: a small trust universe and broker factories."""

from __future__ import annotations

import secrets
from dataclasses import dataclass
from pathlib import Path

import pytest

from credbroker.audit import AuditLog
from credbroker.broker import Broker
from credbroker.identity import (
    BundleStore,
    SigningKey,
    SpiffeId,
    TrustBundle,
    generate_signing_key,
    issue_token,
)
from credbroker.minting import Minter
from credbroker.policy import load_policy

CANONICAL_SUBJECT = "spiffe://ci/org/deploy"
CANONICAL_RESOURCE = "s3://prod-release-artifacts"
CANONICAL_ACTION = "write"

CANONICAL_POLICY = """
rules:
  - id: release-deploy
    subject: "spiffe://ci/org/deploy"
    resource: "s3://prod-release-artifacts"
    actions: [write]
"""

REPO_ROOT = Path(__file__).resolve().parents[1]
APPENDIX_POLICY_PATH = REPO_ROOT / "policies" / "appendix-a.example"

FAR_FUTURE = 10_000_000


@dataclass
class TrustSetup:
    """One local trust domain with a registered signing key."""

    store: BundleStore
    signing: SigningKey
    trust_domain: str
    audience: str

    def token_for(
        self,
        subject: SpiffeId | str,
        *,
        now: int,
        ttl: int = 600,
        claims: dict | None = None,
        audience: str | None = None,
    ) -> str:
        from credbroker.identity import parse_spiffe_id

        if isinstance(subject, str):
            subject = parse_spiffe_id(subject)
        token = issue_token(
            subject,
            audience or self.audience,
            claims or {},
            ttl,
            self.signing,
            store=self.store,
            now=now,
        )
        return token.serialize()


def make_trust_setup(trust_domain: str = "ci", audience: str = "test-broker") -> TrustSetup:
    signing = generate_signing_key(f"{trust_domain}-key-1")
    store = BundleStore()
    store.register(
        TrustBundle(
            trust_domain=trust_domain,
            keys=(signing.bundle_key(not_after=FAR_FUTURE),),
            local=True,
        )
    )
    return TrustSetup(store=store, signing=signing, trust_domain=trust_domain, audience=audience)


@pytest.fixture
def trust() -> TrustSetup:
    return make_trust_setup()


def make_broker(
    trust_setup: TrustSetup,
    policy_text: str | None = CANONICAL_POLICY,
    *,
    audit_path=None,
    **broker_kwargs,
) -> Broker:
    policy = load_policy(policy_text) if policy_text is not None else None
    return Broker(
        bundle_store=trust_setup.store,
        minter=Minter(secrets.token_bytes(32)),
        audit_log=AuditLog(audit_path),
        audience=trust_setup.audience,
        policy=policy,
        **broker_kwargs,
    )


@pytest.fixture
def broker(trust: TrustSetup) -> Broker:
    return make_broker(trust)
