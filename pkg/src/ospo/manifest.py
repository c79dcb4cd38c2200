"""Append-only JSONL manifest.

Line 1 is a header ``{"sample_id": "__header__", "stage": "header", ...}``;
every other line is ``{"sample_id", "stage", "data"}``. Lines are written whole
and flushed one at a time, so a killed run leaves at most one torn trailing
line, which is dropped when the manifest is reopened.
"""

from __future__ import annotations

import json
import os
from pathlib import Path

from ospo.errors import ConfigMismatch

HEADER_ID = "__header__"


def dumps(record: dict) -> str:
    return json.dumps(record, sort_keys=True, separators=(",", ":"), ensure_ascii=False, allow_nan=False)


def repair(path) -> int:
    """Truncate a torn trailing line; returns the number of bytes removed."""
    path = Path(path)
    if not path.exists():
        return 0
    data = path.read_bytes()
    if not data or data.endswith(b"\n"):
        return 0
    cut = data.rfind(b"\n") + 1
    with open(path, "r+b") as f:
        f.truncate(cut)
    return len(data) - cut


def read_records(path, include_header: bool = False) -> list[dict]:
    out = []
    with open(path, encoding="utf-8") as f:
        for line in f:
            if not line.endswith("\n"):
                break  # torn tail
            rec = json.loads(line)
            if not include_header and rec.get("sample_id") == HEADER_ID:
                continue
            out.append(rec)
    return out


class Manifest:
    """Single appender over a JSONL file, with an index of completed (sample, stage) pairs."""

    def __init__(self, path, config_hash: str, code_version: str):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        repair(self.path)
        self._done: dict[str, dict[str, dict]] = {}
        self.order: list[str] = []
        if self.path.exists() and self.path.stat().st_size > 0:
            records = read_records(self.path, include_header=True)
            header = records[0]
            if header.get("sample_id") != HEADER_ID:
                raise ConfigMismatch(f"{self.path} does not start with a header record")
            if header.get("config_hash") != config_hash:
                raise ConfigMismatch(f"config hash {config_hash[:12]} does not match manifest "
                                     f"{str(header.get('config_hash'))[:12]}")
            for rec in records[1:]:
                self._index(rec)
            self._f = open(self.path, "a", encoding="utf-8")
        else:
            self._f = open(self.path, "w", encoding="utf-8")
            self._write({"sample_id": HEADER_ID, "stage": "header", "config_hash": config_hash,
                         "code_version": code_version})

    def _index(self, rec: dict) -> None:
        sid = rec["sample_id"]
        if sid not in self._done:
            self._done[sid] = {}
            self.order.append(sid)
        self._done[sid][rec["stage"]] = rec.get("data")

    def _write(self, rec: dict) -> None:
        self._f.write(dumps(rec) + "\n")
        self._f.flush()

    def append(self, sample_id: str, stage: str, data: dict) -> None:
        if self.has(sample_id, stage):
            raise ValueError(f"duplicate record for ({sample_id}, {stage})")
        rec = {"sample_id": sample_id, "stage": stage, "data": data}
        self._write(rec)
        self._index(rec)

    def has(self, sample_id: str, stage: str) -> bool:
        return stage in self._done.get(sample_id, {})

    def get(self, sample_id: str, stage: str) -> dict | None:
        return self._done.get(sample_id, {}).get(stage)

    def samples(self) -> list[str]:
        """Sample ids in first-seen order (excluding run-level ids such as ``__train__``)."""
        return [s for s in self.order if not s.startswith("__")]

    def sync(self) -> None:
        self._f.flush()
        os.fsync(self._f.fileno())

    def close(self) -> None:
        if not self._f.closed:
            self._f.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
