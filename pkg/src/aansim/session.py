"""Canonical, replay-stable session logs.

A session log is one JSON object per line: the first line is episode
metadata, each following line is a timestamped record (an orchestrator
event with the actions and state it produced, or a free-form simulator
note).  Serialization is canonical — sorted keys, fixed separators, no
wall-clock stamps — so identical (scenario, condition, seed) runs produce
byte-identical files.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

LOG_FORMAT = "aansim-log/1"

_META_REQUIRED = ("format", "condition", "seed", "scenario_hash", "profile")
_RECORD_REQUIRED = ("t", "kind")
_RECORD_KINDS = ("event", "note")


class LogInvalid(ValueError):
    """A session log violates the record schema; the message pinpoints where."""


@dataclass
class SessionLog:
    meta: dict
    records: list[dict] = field(default_factory=list)

    def add_event(
        self,
        t: float,
        event: dict,
        actions: list[dict],
        state: dict,
    ) -> None:
        self.records.append(
            {
                "t": float(t),
                "kind": "event",
                "event": event,
                "actions": actions,
                "state": state,
            }
        )

    def add_note(self, t: float, text: str, **data) -> None:
        record = {"t": float(t), "kind": "note", "note": text}
        if data:
            record["data"] = data
        self.records.append(record)

    @property
    def end_time(self) -> float:
        return self.records[-1]["t"] if self.records else 0.0


def _dumps(obj: dict) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def write_log(log: SessionLog, path: str | Path) -> None:
    lines = [_dumps(log.meta)]
    lines.extend(_dumps(r) for r in log.records)
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_log(path: str | Path) -> SessionLog:
    text = Path(path).read_text(encoding="utf-8")
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise LogInvalid(f"{path}: empty log file")
    try:
        meta = json.loads(lines[0])
        records = [json.loads(ln) for ln in lines[1:]]
    except json.JSONDecodeError as exc:
        raise LogInvalid(f"{path}: line {exc.lineno}: not valid JSON") from exc
    return SessionLog(meta=meta, records=records)


def validate_log(log: SessionLog) -> None:
    """Check structural invariants; raises LogInvalid naming the bad record."""
    if not isinstance(log.meta, dict):
        raise LogInvalid("meta line must be a JSON object")
    for key in _META_REQUIRED:
        if key not in log.meta:
            raise LogInvalid(f"meta: missing key {key!r}")
    if log.meta["format"] != LOG_FORMAT:
        raise LogInvalid(
            f"meta: unsupported format {log.meta['format']!r}, expected {LOG_FORMAT!r}"
        )
    prev_t = -float("inf")
    for i, record in enumerate(log.records):
        where = f"record {i}"
        if not isinstance(record, dict):
            raise LogInvalid(f"{where}: must be a JSON object")
        for key in _RECORD_REQUIRED:
            if key not in record:
                raise LogInvalid(f"{where}: missing key {key!r}")
        t = record["t"]
        if not isinstance(t, (int, float)):
            raise LogInvalid(f"{where}: 't' must be a number, got {type(t).__name__}")
        if t < prev_t - 1e-9:
            raise LogInvalid(f"{where}: time {t} runs backward (previous {prev_t})")
        prev_t = max(prev_t, float(t))
        kind = record["kind"]
        if kind not in _RECORD_KINDS:
            raise LogInvalid(f"{where}: unknown kind {kind!r}")
        if kind == "event":
            for key in ("event", "actions", "state"):
                if key not in record:
                    raise LogInvalid(f"{where}: event records need key {key!r}")
            if not isinstance(record["actions"], list):
                raise LogInvalid(f"{where}: 'actions' must be a list")
        elif kind == "note" and "note" not in record:
            raise LogInvalid(f"{where}: note records need key 'note'")
