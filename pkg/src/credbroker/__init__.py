"""credbroker: a runtime credential broker for CI/CD workloads.

Verifies SPIFFE-style workload identity tokens, evaluates default-deny
attribute-based policy (with optional human-approval obligations), mints
short-lived scope-bound credentials, and records every decision in a
tamper-evident hash-chained audit log. A scenario simulator compares the
brokered model against common access anti-patterns.
"""

from .audit import AuditEvent, AuditLog, ChainStatus, EventKind, verify_chain
from .broker import AccessRequest, Broker, BrokerResult, PendingApproval, ResultStatus
from .identity import (
    BundleKey,
    BundleStore,
    IdentityError,
    SigningKey,
    SpiffeId,
    TrustBundle,
    WorkloadToken,
    generate_signing_key,
    issue_token,
    parse_spiffe_id,
    verify_token,
)
from .minting import (
    Credential,
    CredentialCheck,
    CredentialKind,
    CredentialScope,
    MintError,
    Minter,
    verify_credential,
)
from .policy import (
    Decision,
    Outcome,
    PolicyDocument,
    PolicyRule,
    PolicyValidationError,
    RequestContext,
    evaluate,
    explain,
    load_policy,
)

__version__ = "0.1.0"
