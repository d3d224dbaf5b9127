"""Comparison table over scenario metrics."""

from __future__ import annotations

from typing import Sequence

from .scenarios import ScenarioMetrics

# Stable column order for both the text table and the machine-readable rows.
COLUMNS = (
    "scenario",
    "standing_privilege_count",
    "max_exposure_window",
    "blast_radius",
    "audit_coverage",
)


def report(metrics: Sequence[ScenarioMetrics]) -> tuple[str, list[dict]]:
    """Aligned text table plus machine-readable rows, one per scenario."""
    if not metrics:
        raise ValueError("at least one metrics set is required")
    rows = [m.to_dict() for m in metrics]
    rendered = [
        {column: _format(row[column]) for column in COLUMNS} for row in rows
    ]
    widths = {
        column: max(len(column), *(len(r[column]) for r in rendered))
        for column in COLUMNS
    }
    header = "  ".join(column.ljust(widths[column]) for column in COLUMNS)
    divider = "  ".join("-" * widths[column] for column in COLUMNS)
    lines = [header, divider]
    for row in rendered:
        lines.append("  ".join(row[column].ljust(widths[column]) for column in COLUMNS))
    return "\n".join(lines), rows


def _format(value) -> str:
    if isinstance(value, float):
        return f"{value:.2f}"
    return str(value)
