"""Canonical byte encodings shared by commitments, challenges and the bulletin board."""

import hashlib
import json


def hash_parts(*parts):
    """SHA-256 over length-prefixed parts.

    Every part is prefixed with its 8-byte big-endian length so that no two
    distinct part sequences share a preimage. ``str`` parts are UTF-8 encoded
    and ``int`` parts use their decimal string form.
    """
    h = hashlib.sha256()
    for part in parts:
        if isinstance(part, str):
            part = part.encode("utf-8")
        elif isinstance(part, int):
            part = str(part).encode("ascii")
        h.update(len(part).to_bytes(8, "big"))
        h.update(part)
    return h.digest()


def canonical_json(obj):
    """Deterministic JSON bytes: sorted keys, no whitespace, ASCII only."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=True).encode("ascii")


def int_to_hex(x):
    return format(int(x), "x")


def hex_to_int(s):
    return int(s, 16)
