"""Service command line: run the broker, generate keys, check config."""

from __future__ import annotations

import secrets
import sys
from pathlib import Path

import click

from .api import ConfigError, load_config, serve
from .canon import b64url_encode
from .identity import TrustBundle, dump_bundle, generate_signing_key


@click.group()
def main() -> None:
    """Credential broker service utilities."""


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
def run(config_path: str) -> None:
    """Start the broker service and block until interrupted."""
    try:
        config = load_config(config_path)
        handle = serve(config)
    except (ConfigError, OSError) as exc:
        click.echo(f"startup failed: {exc}", err=True)
        sys.exit(1)
    click.echo(f"credbroker listening on {handle.base_url}")
    try:
        handle._thread.join()
    except KeyboardInterrupt:
        handle.stop()


@main.command("gen-minting-key")
@click.option("--out", "out_path", required=True, type=click.Path())
def gen_minting_key(out_path: str) -> None:
    """Write a fresh base64url minting key."""
    Path(out_path).write_text(b64url_encode(secrets.token_bytes(32)) + "\n", encoding="utf-8")
    click.echo(f"wrote minting key to {out_path}")


@main.command("gen-identity")
@click.option("--trust-domain", required=True)
@click.option("--key-id", default="key-1", show_default=True)
@click.option("--not-after", default="2030-01-01T00:00:00Z", show_default=True)
@click.option("--bundle-out", required=True, type=click.Path())
@click.option("--key-out", required=True, type=click.Path())
def gen_identity(
    trust_domain: str, key_id: str, not_after: str, bundle_out: str, key_out: str
) -> None:
    """Generate a signing key and the matching trust bundle file.

    The private key file is a local issuance stand-in for tests and demos;
    a real deployment gets bundles from its identity plane instead.
    """
    from cryptography.hazmat.primitives.serialization import (
        Encoding,
        NoEncryption,
        PrivateFormat,
    )

    from .identity import _parse_instant  # file format helper

    signing = generate_signing_key(key_id)
    bundle = TrustBundle(
        trust_domain=trust_domain,
        keys=(signing.bundle_key(_parse_instant(not_after)),),
        local=True,
    )
    Path(bundle_out).write_text(dump_bundle(bundle), encoding="utf-8")
    raw = signing.private_key.private_bytes(
        Encoding.Raw, PrivateFormat.Raw, NoEncryption()
    )
    Path(key_out).write_text(b64url_encode(raw) + "\n", encoding="utf-8")
    click.echo(f"wrote bundle to {bundle_out} and private key to {key_out}")


@main.command("check-config")
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
def check_config(config_path: str) -> None:
    """Validate a config file without starting the service."""
    try:
        config = load_config(config_path)
    except ConfigError as exc:
        click.echo(f"invalid: {exc}", err=True)
        sys.exit(1)
    click.echo(f"ok: audience={config.audience!r} listen={config.listen_address}")


if __name__ == "__main__":
    main()
