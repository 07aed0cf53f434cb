"""Public bulletin board: an append-only, hash-chained JSON-lines log.

Each entry hashes ``(seq, party, phase, payload, prev_hash)`` with
length-prefixed SHA-256 (see :func:`hsdir_longevity.encoding.hash_parts`);
``payload`` is the canonical JSON encoding of the entry's payload object.
Phases must advance in protocol order. The only step back allowed is from
``dc-open`` to ``dc-commit``, which starts the next collection epoch.
"""

import json
import threading
from dataclasses import dataclass
from pathlib import Path

from .encoding import canonical_json, hash_parts

PHASES = (
    "keygen-commit",
    "keygen-open",
    "dc-commit",
    "dc-open",
    "aggregate",
    "shuffle",
    "decrypt-partial",
    "result",
)
GENESIS = bytes(32)


class OutOfPhase(Exception):
    pass


class ChainBroken(Exception):
    pass


def entry_hash(seq, party, phase, payload: bytes, prev_hash: bytes) -> bytes:
    return hash_parts(b"pbb-entry", seq, str(party), phase, payload, prev_hash)


@dataclass(frozen=True)
class PbbEntry:
    seq: int
    party: object
    phase: str
    payload: bytes
    prev_hash: bytes
    entry_hash: bytes

    @property
    def data(self):
        return json.loads(self.payload)

    def to_json(self) -> dict:
        return {
            "seq": self.seq,
            "party": self.party,
            "phase": self.phase,
            "payload": json.loads(self.payload),
            "prev_hash": self.prev_hash.hex(),
            "entry_hash": self.entry_hash.hex(),
        }


class BulletinBoard:
    def __init__(self, path=None):
        self.entries: list[PbbEntry] = []
        self.path = Path(path) if path is not None else None
        self._lock = threading.Lock()
        if self.path is not None:
            self.path.write_text("")

    @property
    def phase(self):
        return self.entries[-1].phase if self.entries else None

    def _check_phase(self, phase):
        if phase not in PHASES:
            raise OutOfPhase(f"unknown phase {phase!r}")
        if self.phase is None:
            return
        cur, new = PHASES.index(self.phase), PHASES.index(phase)
        if new < cur and not (self.phase == "dc-open" and phase == "dc-commit"):
            raise OutOfPhase(f"cannot post {phase!r} after {self.phase!r}")

    def append(self, party, phase, payload) -> PbbEntry:
        body = canonical_json(payload)
        with self._lock:
            self._check_phase(phase)
            seq = len(self.entries)
            prev = self.entries[-1].entry_hash if self.entries else GENESIS
            entry = PbbEntry(seq, party, phase, body, prev, entry_hash(seq, party, phase, body, prev))
            self.entries.append(entry)
            if self.path is not None:
                with self.path.open("a") as fh:
                    fh.write(canonical_json(entry.to_json()).decode("ascii") + "\n")
        return entry

    def by_phase(self, phase) -> list[PbbEntry]:
        return [e for e in self.entries if e.phase == phase]

    def verify_chain(self) -> bool:
        """Recompute every hash and link; raises :class:`ChainBroken` on the first bad entry."""
        prev = GENESIS
        for i, e in enumerate(self.entries):
            if e.seq != i:
                raise ChainBroken(f"entry {i}: sequence gap")
            if e.prev_hash != prev:
                raise ChainBroken(f"entry {i}: prev_hash does not link")
            if e.entry_hash != entry_hash(e.seq, e.party, e.phase, e.payload, e.prev_hash):
                raise ChainBroken(f"entry {i}: entry_hash mismatch")
            prev = e.entry_hash
        return True

    @classmethod
    def load(cls, path):
        board = cls()
        for line in Path(path).read_text().splitlines():
            if not line.strip():
                continue
            d = json.loads(line)
            board.entries.append(PbbEntry(
                d["seq"], d["party"], d["phase"], canonical_json(d["payload"]),
                bytes.fromhex(d["prev_hash"]), bytes.fromhex(d["entry_hash"]),
            ))
        board.path = Path(path)
        return board
