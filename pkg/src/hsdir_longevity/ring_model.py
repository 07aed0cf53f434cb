"""Descriptor-id derivation and HSDir responsibility on the fingerprint ring.

Hash-input layout (fixed here because Tor's prose leaves it open):

    secret_id_part = SHA1(time_period as 4-byte big-endian
                          || descriptor_cookie (16 bytes, omitted when absent)
                          || replica as 1 byte)
    descriptor_id  = SHA1(identifier (10 bytes) || secret_id_part)

A descriptor-id that equals a fingerprint exactly is stored starting at the
next strictly greater fingerprint (half-open ring segments).
"""

import hashlib
import json
from bisect import bisect_right
from dataclasses import dataclass
from functools import cached_property

import numpy as np

SECONDS_PER_DAY = 86400
IDENTIFIER_BYTES = 10
DESCRIPTOR_ID_BYTES = 20
COOKIE_BYTES = 16
REPLICAS = (0, 1)
RELAYS_PER_REPLICA = 3


def identifier_from_public_key(public_key: bytes) -> bytes:
    """80-bit onion identifier: truncated SHA-1 of the service public key."""
    return hashlib.sha1(public_key).digest()[:IDENTIFIER_BYTES]


def derive_time_period(current_time: int, permanent_id_byte: int) -> int:
    if current_time < 0:
        raise ValueError("current_time must be non-negative")
    if not 0 <= permanent_id_byte <= 255:
        raise ValueError("permanent_id_byte must be in 0..255")
    return (current_time + permanent_id_byte * SECONDS_PER_DAY // 256) // SECONDS_PER_DAY


def secret_id_part(time_period: int, cookie: bytes | None, replica: int) -> bytes:
    if cookie is not None and len(cookie) != COOKIE_BYTES:
        raise ValueError(f"descriptor cookie must be {COOKIE_BYTES} bytes, got {len(cookie)}")
    if replica not in REPLICAS:
        raise ValueError("replica must be 0 or 1")
    data = time_period.to_bytes(4, "big") + (cookie or b"") + bytes([replica])
    return hashlib.sha1(data).digest()


def derive_descriptor_ids(identifier: bytes, cookie: bytes | None, time_period: int) -> tuple[bytes, bytes]:
    """Return the (replica 0, replica 1) descriptor-ids as 20-byte digests."""
    if len(identifier) != IDENTIFIER_BYTES:
        raise ValueError(f"identifier must be {IDENTIFIER_BYTES} bytes")
    return tuple(
        hashlib.sha1(identifier + secret_id_part(time_period, cookie, r)).digest()
        for r in REPLICAS
    )


def _as_int(value) -> int:
    if isinstance(value, (bytes, bytearray)):
        return int.from_bytes(value, "big")
    return int(value)


@dataclass(frozen=True)
class Ring:
    """HSDir relays sorted by fingerprint, plus the subset we control.

    Build with :meth:`from_relays`, which sorts and validates.
    """

    relay_ids: tuple
    fingerprints: tuple
    controlled: frozenset = frozenset()

    def __post_init__(self):
        if len(self.relay_ids) != len(self.fingerprints):
            raise ValueError("relay_ids and fingerprints differ in length")
        if len(self.fingerprints) < RELAYS_PER_REPLICA:
            raise ValueError("a ring needs at least 3 relays")
        if any(a >= b for a, b in zip(self.fingerprints, self.fingerprints[1:])):
            raise ValueError("fingerprints must be strictly ascending (duplicates rejected)")
        if len(set(self.relay_ids)) != len(self.relay_ids):
            raise ValueError("duplicate relay id")
        if not self.controlled <= set(self.relay_ids):
            raise ValueError("controlled relays must be ring members")

    @classmethod
    def from_relays(cls, relays, controlled=()):
        """``relays`` is an iterable of ``(relay_id, fingerprint)`` pairs in any order."""
        pairs = sorted(((rid, _as_int(fp)) for rid, fp in relays), key=lambda p: p[1])
        for fp in (p[1] for p in pairs):
            if not 0 <= fp < 1 << 160:
                raise ValueError("fingerprint out of 160-bit range")
        return cls(
            relay_ids=tuple(p[0] for p in pairs),
            fingerprints=tuple(p[1] for p in pairs),
            controlled=frozenset(controlled),
        )

    def __len__(self):
        return len(self.relay_ids)

    def with_controlled(self, controlled):
        return Ring(self.relay_ids, self.fingerprints, frozenset(controlled))

    @cached_property
    def index_of(self) -> dict:
        return {rid: i for i, rid in enumerate(self.relay_ids)}

    @cached_property
    def controlled_mask(self) -> np.ndarray:
        mask = np.zeros(len(self), dtype=bool)
        for rid in self.controlled:
            mask[self.index_of[rid]] = True
        return mask

    @cached_property
    def _fp_high(self) -> np.ndarray:
        return np.array([fp >> 96 for fp in self.fingerprints], dtype=np.uint64)

    def start_index(self, descriptor_id) -> int:
        """Ring position of the first relay with fingerprint strictly above ``descriptor_id``."""
        return bisect_right(self.fingerprints, _as_int(descriptor_id)) % len(self)

    def start_indices(self, digests: np.ndarray) -> np.ndarray:
        """Vectorised :meth:`start_index` over an ``(N, 20)`` uint8 array of descriptor-ids."""
        digests = np.ascontiguousarray(digests, dtype=np.uint8).reshape(-1, DESCRIPTOR_ID_BYTES)
        high = digests[:, :8].copy().view(">u8").ravel().astype(np.uint64)
        idx = np.searchsorted(self._fp_high, high, side="right")
        # equal top 64 bits: settle the order on the full 160-bit value
        clash = np.flatnonzero((idx > 0) & (self._fp_high[np.maximum(idx - 1, 0)] == high))
        for i in clash:
            idx[i] = bisect_right(self.fingerprints, int.from_bytes(digests[i].tobytes(), "big"))
        return idx % len(self)

    def window(self, start: int) -> list:
        n = len(self)
        return [self.relay_ids[(start + j) % n] for j in range(RELAYS_PER_REPLICA)]

    @cached_property
    def window_controlled_counts(self) -> np.ndarray:
        """Number of controlled relays in the 3-relay window starting at each position."""
        m = self.controlled_mask.astype(np.int64)
        return m + np.roll(m, -1) + np.roll(m, -2)

    def to_json(self) -> str:
        return json.dumps(
            [
                {"relay_id": rid, "fingerprint_hex": format(fp, "040x"), "controlled": rid in self.controlled}
                for rid, fp in zip(self.relay_ids, self.fingerprints)
            ],
            indent=1,
        )

    @classmethod
    def from_json(cls, text: str):
        rows = json.loads(text)
        return cls.from_relays(
            ((r["relay_id"], int(r["fingerprint_hex"], 16)) for r in rows),
            controlled=[r["relay_id"] for r in rows if r["controlled"]],
        )


def responsible_relays(ring: Ring, descriptor_id) -> list:
    """The three relays that store ``descriptor_id``, wrapping past the ring end."""
    return ring.window(ring.start_index(descriptor_id))


def random_ring(n_relays: int, n_controlled: int, rng: np.random.Generator) -> Ring:
    """Relays with uniformly random 160-bit fingerprints.

    Relay ids are 0..n-1 in draw order, so they carry no information about
    ring position. The controlled subset is a uniform random sample.
    """
    if not 0 <= n_controlled <= n_relays:
        raise ValueError("n_controlled must lie in [0, n_relays]")
    fps, seen = [], set()
    while len(fps) < n_relays:
        fp = int.from_bytes(rng.bytes(DESCRIPTOR_ID_BYTES), "big")
        if fp not in seen:
            seen.add(fp)
            fps.append(fp)
    relays = list(enumerate(fps))
    controlled = rng.choice(n_relays, size=n_controlled, replace=False).tolist()
    return Ring.from_relays(relays, controlled)
