"""Append-only, hash-chained audit log.

Every decision, approval, issuance, and configuration change gets one event.
Event n commits to its predecessor: ``this_hash = SHA-256(prev_hash ||
canonical fields)``, with the all-zero digest as the genesis link, so a
single flipped byte anywhere in the stored log is detectable, and the event
that authorized a credential can always be found again.

Storage is a newline-delimited file of canonical JSON records plus a head
file holding the current (seq, head hash). Hash chains cannot see suffix
truncation on their own; the head file can. An external auditor can verify
the whole chain from the documented line format alone.

Secret material never enters a payload; appends are serialized and durable
(flush + fsync) before they return.
"""

from __future__ import annotations

import hashlib
import json
import os
import threading
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

from .canon import ZERO_DIGEST, canonical_json, sha256

__all__ = [
    "AuditError",
    "AuditEvent",
    "AuditLog",
    "ChainStatus",
    "EventKind",
    "compute_event_hash",
    "verify_chain",
    "verify_log_file",
]


class EventKind(str, Enum):
    DECISION = "decision"
    APPROVAL = "approval"
    ISSUANCE = "issuance"
    POLICY_CHANGE = "policy_change"
    BUNDLE_CHANGE = "bundle_change"
    ANOMALY = "anomaly"


class AuditError(Exception):
    """Codes: storage-failure, malformed-filter, audit-unrecoverable."""

    def __init__(self, code: str, message: str):
        super().__init__(f"{code}: {message}")
        self.code = code


@dataclass(frozen=True)
class AuditEvent:
    seq: int
    timestamp: int
    kind: EventKind
    request_id: str | None
    payload: dict
    prev_hash: bytes
    this_hash: bytes

    def to_record(self) -> dict:
        return {
            "seq": self.seq,
            "timestamp": self.timestamp,
            "kind": self.kind.value,
            "request_id": self.request_id,
            "payload": self.payload,
            "prev_hash": self.prev_hash.hex(),
            "this_hash": self.this_hash.hex(),
        }

    def to_line(self) -> str:
        return canonical_json(self.to_record()).decode("utf-8")


def compute_event_hash(
    prev_hash: bytes, seq: int, timestamp: int, kind: str, request_id: str | None, payload: dict
) -> bytes:
    body = canonical_json(
        {
            "kind": kind,
            "payload": payload,
            "request_id": request_id,
            "seq": seq,
            "timestamp": timestamp,
        }
    )
    return sha256(prev_hash + body)


@dataclass(frozen=True)
class ChainStatus:
    ok: bool
    first_bad_seq: int | None = None


def verify_chain(events: list[AuditEvent]) -> ChainStatus:
    """Recompute every link and digest; reports the smallest bad seq."""
    prev = ZERO_DIGEST
    for position, event in enumerate(events):
        if event.seq != position or event.prev_hash != prev:
            return ChainStatus(ok=False, first_bad_seq=position)
        recomputed = compute_event_hash(
            event.prev_hash,
            event.seq,
            event.timestamp,
            event.kind.value,
            event.request_id,
            event.payload,
        )
        if recomputed != event.this_hash:
            return ChainStatus(ok=False, first_bad_seq=position)
        prev = event.this_hash
    return ChainStatus(ok=True)


def _parse_line(line: str) -> AuditEvent:
    record = json.loads(line)
    return AuditEvent(
        seq=int(record["seq"]),
        timestamp=int(record["timestamp"]),
        kind=EventKind(record["kind"]),
        request_id=record["request_id"],
        payload=record["payload"],
        prev_hash=bytes.fromhex(record["prev_hash"]),
        this_hash=bytes.fromhex(record["this_hash"]),
    )


_KIND_VALUES = frozenset(k.value for k in EventKind)
_RECORD_KEYS = frozenset(
    ["seq", "timestamp", "kind", "request_id", "payload", "prev_hash", "this_hash"]
)
_ZERO_HEX = ZERO_DIGEST.hex()


# Stored lines are canonical JSON with sorted keys, so the bytes that were
# hashed (the record minus its two digest members) are recoverable from the
# line itself by excising the `"prev_hash":"…",` and `,"this_hash":"…"`
# spans. rfind is safe: with top-level keys sorted, no member after the real
# prev_hash/this_hash can contain the raw marker (strings would carry
# escaped quotes), so the last occurrence is always the top-level member.
_PREV_MARK = '"prev_hash":"'
_THIS_MARK = ',"this_hash":"'
_PREV_SPAN = len(_PREV_MARK) + 64 + 2  # marker + hex + closing quote + comma
_THIS_SPAN = len(_THIS_MARK) + 64 + 1  # marker + hex + closing quote


def verify_log_lines(lines) -> ChainStatus:
    """Chain verification over stored record lines, single pass with early
    exit; an unparseable or non-canonical line is a broken link at that
    position.

    Only the writer's exact canonical byte form verifies: the recomputed
    digest is taken over the line bytes minus the two digest members, so
    any single-byte change to a stored record breaks the chain right there.
    """
    sha256 = hashlib.sha256
    loads = json.loads
    prev = ZERO_DIGEST
    prev_hex = _ZERO_HEX
    position = 0
    for line in lines:
        line = line.rstrip("\n")
        if not line:
            continue
        try:
            record = loads(line)
            # All seven keys are read below, so len == 7 pins the key set.
            if len(record) != 7 or record["kind"] not in _KIND_VALUES:
                return ChainStatus(ok=False, first_bad_seq=position)
            if record["seq"] != position or record["prev_hash"] != prev_hex:
                return ChainStatus(ok=False, first_bad_seq=position)
            i = line.rfind(_PREV_MARK)
            j = line.rfind(_THIS_MARK)
            if (
                i <= 0
                or j < i + _PREV_SPAN
                or line[i + _PREV_SPAN - 2] != '"'
                or line[i + _PREV_SPAN - 1] != ","
                or line[j + _THIS_SPAN - 1] != '"'
                or line[i + len(_PREV_MARK) : i + len(_PREV_MARK) + 64] != prev_hex
                or line[j + len(_THIS_MARK) : j + len(_THIS_MARK) + 64]
                != record["this_hash"]
            ):
                return ChainStatus(ok=False, first_bad_seq=position)
            body = line[:i] + line[i + _PREV_SPAN : j] + line[j + _THIS_SPAN :]
            digest = sha256(prev + body.encode("utf-8"))
            this_hex = digest.hexdigest()
            if this_hex != record["this_hash"]:
                return ChainStatus(ok=False, first_bad_seq=position)
        except Exception:
            return ChainStatus(ok=False, first_bad_seq=position)
        prev = digest.digest()
        prev_hex = this_hex
        position += 1
    return ChainStatus(ok=True)


def verify_log_file(path: str | Path) -> ChainStatus:
    with open(path, "r", encoding="utf-8", errors="replace") as fh:
        return verify_log_lines(fh)


class AuditLog:
    """Single-writer hash-chained log, optionally file-backed.

    With a path, every append is written, flushed, and fsynced before the
    call returns, and the head file is atomically replaced; without one the
    log is in-memory (tests, simulation).
    """

    def __init__(self, path: str | Path | None = None, head_path: str | Path | None = None):
        self._lock = threading.Lock()
        self._events: list[AuditEvent] = []
        self._path = Path(path) if path is not None else None
        if self._path is not None and head_path is None:
            head_path = self._path.with_name(self._path.name + ".head")
        self._head_path = Path(head_path) if head_path is not None else None
        self._fh = None
        if self._path is not None:
            if self._path.exists() and self._path.stat().st_size > 0:
                raise AuditError(
                    "storage-failure",
                    f"{self._path} already holds events; resume with AuditLog.open()",
                )
            try:
                self._fh = open(self._path, "a", encoding="utf-8")
            except OSError as exc:
                raise AuditError("storage-failure", f"cannot open log: {exc}") from exc

    # ------------------------------------------------------------------
    # Construction from existing storage
    # ------------------------------------------------------------------

    @classmethod
    def open(cls, path: str | Path, head_path: str | Path | None = None) -> "AuditLog":
        """Reload a stored log, verify the chain and the head pointer, and
        resume appending from the verified head."""
        path = Path(path)
        if head_path is None:
            head_path = path.with_name(path.name + ".head")
        head_path = Path(head_path)
        log = cls.__new__(cls)
        log._lock = threading.Lock()
        log._events = []
        log._path = path
        log._head_path = head_path
        log._fh = None
        if path.exists():
            status = verify_log_file(path)
            if not status.ok:
                raise AuditError(
                    "audit-unrecoverable",
                    f"stored chain is broken at seq {status.first_bad_seq}",
                )
            with open(path, "r", encoding="utf-8") as fh:
                log._events = [_parse_line(line) for line in fh if line.strip()]
        if head_path.exists():
            head = json.loads(head_path.read_text(encoding="utf-8"))
            expected_seq = head["seq"]
            expected_hash = head["head_hash"]
            actual_seq = log._events[-1].seq if log._events else None
            actual_hash = log._events[-1].this_hash.hex() if log._events else None
            if expected_seq != actual_seq or expected_hash != actual_hash:
                raise AuditError(
                    "audit-unrecoverable",
                    f"head file says seq {expected_seq}, log ends at {actual_seq}: "
                    "log was truncated or replaced",
                )
        elif log._events:
            raise AuditError(
                "audit-unrecoverable", "log has events but no head file to anchor them"
            )
        try:
            log._fh = open(path, "a", encoding="utf-8")
        except OSError as exc:
            raise AuditError("storage-failure", f"cannot open log: {exc}") from exc
        return log

    # ------------------------------------------------------------------
    # Appending
    # ------------------------------------------------------------------

    def append_event(
        self, kind: EventKind, payload: dict, now: int, *, request_id: str | None = None
    ) -> AuditEvent:
        """Append one chained event; durable before return when file-backed."""
        with self._lock:
            seq = len(self._events)
            prev = self._events[-1].this_hash if self._events else ZERO_DIGEST
            event = AuditEvent(
                seq=seq,
                timestamp=now,
                kind=kind,
                request_id=request_id,
                payload=payload,
                prev_hash=prev,
                this_hash=compute_event_hash(
                    prev, seq, now, kind.value, request_id, payload
                ),
            )
            if self._fh is not None:
                try:
                    self._fh.write(event.to_line() + "\n")
                    self._fh.flush()
                    os.fsync(self._fh.fileno())
                    self._write_head(event)
                except OSError as exc:
                    raise AuditError(
                        "storage-failure", f"append not durable: {exc}"
                    ) from exc
            self._events.append(event)
            return event

    def _write_head(self, event: AuditEvent) -> None:
        tmp = self._head_path.with_name(self._head_path.name + ".tmp")
        tmp.write_text(
            canonical_json({"head_hash": event.this_hash.hex(), "seq": event.seq}).decode(
                "utf-8"
            ),
            encoding="utf-8",
        )
        os.replace(tmp, self._head_path)

    # ------------------------------------------------------------------
    # Reading
    # ------------------------------------------------------------------

    @property
    def head_hash(self) -> bytes:
        with self._lock:
            return self._events[-1].this_hash if self._events else ZERO_DIGEST

    def __len__(self) -> int:
        return len(self._events)

    def events(self) -> list[AuditEvent]:
        with self._lock:
            return list(self._events)

    def verify(self) -> ChainStatus:
        return verify_chain(self.events())

    def query_events(
        self,
        *,
        kind: EventKind | str | None = None,
        request_id: str | None = None,
        subject: str | None = None,
        seq_range: tuple[int, int] | None = None,
        time_range: tuple[int, int] | None = None,
    ) -> list[AuditEvent]:
        """Filtered view in seq order; an empty filter returns everything.

        Ranges are inclusive (lo, hi) pairs. The subject filter matches the
        payload's top-level subject or an issuance scope's subject.
        """
        if kind is not None:
            try:
                kind = EventKind(kind)
            except ValueError:
                raise AuditError("malformed-filter", f"unknown kind {kind!r}") from None
        for name, bounds in (("seq_range", seq_range), ("time_range", time_range)):
            if bounds is None:
                continue
            if len(bounds) != 2 or bounds[0] > bounds[1]:
                raise AuditError("malformed-filter", f"{name} must be an ordered (lo, hi) pair")

        def matches(event: AuditEvent) -> bool:
            if kind is not None and event.kind is not kind:
                return False
            if request_id is not None and event.request_id != request_id:
                return False
            if subject is not None:
                in_payload = event.payload.get("subject") == subject
                scope = event.payload.get("scope") or {}
                in_scope = isinstance(scope, dict) and scope.get("subject") == subject
                if not in_payload and not in_scope:
                    return False
            if seq_range is not None and not seq_range[0] <= event.seq <= seq_range[1]:
                return False
            if time_range is not None and not time_range[0] <= event.timestamp <= time_range[1]:
                return False
            return True

        return [event for event in self.events() if matches(event)]

    def close(self) -> None:
        if self._fh is not None:
            self._fh.close()
            self._fh = None
