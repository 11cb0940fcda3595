"""Append-only hash-linked ledger with JSON Lines persistence."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

GENESIS_PREV = "00" * 32


def _canonical(obj) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=True).encode()


def block_digest(height: int, prev: str, timestamp: int, records: list) -> str:
    body = {"height": height, "prev": prev, "records": records, "timestamp": timestamp}
    return hashlib.sha256(_canonical(body)).hexdigest()


@dataclass(frozen=True)
class LedgerBlock:
    height: int
    prev: str
    timestamp: int
    records: tuple
    digest: str

    def recompute(self) -> str:
        return block_digest(self.height, self.prev, self.timestamp, list(self.records))

    def to_dict(self) -> dict:
        return {
            "height": self.height, "prev": self.prev, "timestamp": self.timestamp,
            "records": list(self.records), "digest": self.digest,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "LedgerBlock":
        return cls(int(d["height"]), d["prev"], int(d["timestamp"]), tuple(d["records"]), d["digest"])


@dataclass(frozen=True)
class LedgerVerdict:
    ok: bool
    height: int | None = None  # first offending block
    reason: str = ""

    def __bool__(self) -> bool:
        return self.ok


@dataclass
class Ledger:
    name: str
    blocks: list[LedgerBlock] = field(default_factory=list)

    @property
    def head_digest(self) -> str:
        return self.blocks[-1].digest if self.blocks else GENESIS_PREV

    def __len__(self) -> int:
        return len(self.blocks)

    def append(self, records: list[dict], timestamp: int) -> LedgerBlock:
        # round-trip through JSON so stored records are exactly what persistence reproduces
        recs = tuple(json.loads(_canonical(list(records))))
        height = len(self.blocks)
        b = LedgerBlock(height, self.head_digest, int(timestamp), recs,
                        block_digest(height, self.head_digest, int(timestamp), list(recs)))
        self.blocks.append(b)
        return b

    def records(self):
        for b in self.blocks:
            yield from b.records

    def verify(self) -> LedgerVerdict:
        return verify_blocks(self.blocks)

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for b in self.blocks:
                fh.write(_canonical(b.to_dict()).decode() + "\n")

    @classmethod
    def load(cls, path, name: str | None = None) -> "Ledger":
        blocks = []
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                if line.strip():
                    blocks.append(LedgerBlock.from_dict(json.loads(line)))
        return cls(name or Path(path).stem, blocks)


def verify_blocks(blocks) -> LedgerVerdict:
    prev = GENESIS_PREV
    for i, b in enumerate(blocks):
        if b.height != i:
            return LedgerVerdict(False, i, "height out of sequence")
        if b.prev != prev:
            return LedgerVerdict(False, i, "broken link")
        if b.recompute() != b.digest:
            return LedgerVerdict(False, i, "digest mismatch")
        prev = b.digest
    return LedgerVerdict(True)


def verify_file(path) -> LedgerVerdict:
    """Verify a persisted ledger; an unreadable line fails at its height."""
    blocks = []
    with open(path, "rb") as fh:
        for i, raw in enumerate(fh):
            try:
                blocks.append(LedgerBlock.from_dict(json.loads(raw.decode("utf-8"))))
            except (ValueError, KeyError, TypeError, UnicodeDecodeError):
                return LedgerVerdict(False, i, "unreadable block")
    return verify_blocks(blocks)
