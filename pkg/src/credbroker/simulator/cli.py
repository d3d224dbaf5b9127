"""Simulator command line: run scenarios, compare builtins, verify logs."""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from ..audit import verify_log_file
from .engine import run_scenario
from .report import report
from .scenarios import ScenarioError, builtin_names, load_builtin, load_scenario


@click.group()
def main() -> None:
    """Scenario simulator for access-handling patterns."""


def _load(source: str):
    if source in builtin_names():
        return load_builtin(source)
    path = Path(source)
    if not path.exists():
        raise ScenarioError(
            f"{source!r} is neither a builtin ({builtin_names()}) nor a file"
        )
    return load_scenario(path.read_text(encoding="utf-8"))


@main.command()
@click.option("--scenario", "source", required=True, help="builtin name or scenario file")
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--out", "out_path", default=None, type=click.Path(),
              help="write metrics and trace as JSON")
def run(source: str, seed: int, out_path: str | None) -> None:
    """Run one scenario and print its metrics."""
    try:
        scenario = _load(source)
        metrics, trace = run_scenario(scenario, seed=seed)
    except ScenarioError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(2)
    table, _rows = report([metrics])
    click.echo(table)
    if out_path:
        Path(out_path).write_text(
            json.dumps({"metrics": metrics.to_dict(), "trace": trace}, indent=2),
            encoding="utf-8",
        )
        click.echo(f"wrote {out_path}")


@main.command()
@click.option("--all-builtin", "all_builtin", is_flag=True, required=True)
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--out", "out_path", default=None, type=click.Path())
def compare(all_builtin: bool, seed: int, out_path: str | None) -> None:
    """Run every builtin scenario and print the comparison table."""
    results = [run_scenario(load_builtin(name), seed=seed)[0] for name in builtin_names()]
    table, rows = report(results)
    click.echo(table)
    if out_path:
        Path(out_path).write_text(json.dumps(rows, indent=2), encoding="utf-8")
        click.echo(f"wrote {out_path}")


@main.command("verify-audit")
@click.option("--log", "log_path", required=True, type=click.Path(exists=True))
def verify_audit(log_path: str) -> None:
    """Verify an audit log file's hash chain (and head file, if present)."""
    status = verify_log_file(log_path)
    if not status.ok:
        click.echo(f"broken: first bad seq {status.first_bad_seq}")
        sys.exit(1)
    head_path = Path(log_path).with_name(Path(log_path).name + ".head")
    if head_path.exists():
        head = json.loads(head_path.read_text(encoding="utf-8"))
        lines = [
            line
            for line in Path(log_path).read_text(encoding="utf-8").splitlines()
            if line.strip()
        ]
        tail = json.loads(lines[-1]) if lines else None
        if tail is None or tail["seq"] != head["seq"] or tail["this_hash"] != head["head_hash"]:
            click.echo("broken: head file does not match log tail (truncation?)")
            sys.exit(1)
    click.echo("ok")


if __name__ == "__main__":
    main()
