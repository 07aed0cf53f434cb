"""Re-encryption shuffles with a cut-and-choose proof of correctness.

A shuffle maps ``inputs`` to ``outputs`` with ``outputs[i] = reencrypt(inputs[perm[i]], coins[i])``.

Proof, repeated for ``rounds`` rounds:

1. the prover publishes a *shadow* list, a fresh shuffle of ``inputs``;
2. one challenge bit per round is read from a single hash over the group,
   the key, ``inputs``, ``outputs`` and every shadow (Fiat-Shamir);
3. bit 0 opens ``inputs -> shadow``, bit 1 opens ``shadow -> outputs``.

Each opening alone is a uniformly random shuffle, so nothing about the real
permutation leaks. A prover whose outputs are not a shuffle of the inputs can
prepare at most one of the two openings per round and is caught with
probability 1/2 per round.
"""

import hashlib
from dataclasses import dataclass

import numpy as np

from .encoding import canonical_json, hash_parts, hex_to_int, int_to_hex
from .group_crypto import Ciphertext, GroupParams, reencrypt

DEFAULT_ROUNDS = 40
CHALLENGE_TAG = b"hsdir-longevity/shuffle-challenge/v1"


@dataclass
class ShuffleWitness:
    permutation: list
    coins: list

    def __post_init__(self):
        if sorted(self.permutation) != list(range(len(self.permutation))):
            raise ValueError("permutation is not a bijection")
        if len(self.coins) != len(self.permutation):
            raise ValueError("need one re-encryption coin per element")


def _permutation(n, rng):
    if rng is None:
        import secrets
        perm = list(range(n))
        for i in range(n - 1, 0, -1):
            j = secrets.randbelow(i + 1)
            perm[i], perm[j] = perm[j], perm[i]
        return perm
    return [int(x) for x in rng.permutation(n)]


def apply_shuffle(params: GroupParams, A: int, inputs, witness: ShuffleWitness) -> list:
    return [reencrypt(params, A, inputs[j], r) for j, r in zip(witness.permutation, witness.coins)]


def shuffle(params: GroupParams, A: int, inputs, rng=None):
    """Permute and re-encrypt ``inputs``; returns ``(outputs, witness)``."""
    inputs = list(inputs)
    witness = ShuffleWitness(_permutation(len(inputs), rng), [params.random_exponent(rng) for _ in inputs])
    return apply_shuffle(params, A, inputs, witness), witness


@dataclass
class ShuffleRound:
    shadow: list
    bit: int
    permutation: list
    coins: list

    def to_json(self) -> dict:
        return {
            "shadow": [c.to_json() for c in self.shadow],
            "bit": self.bit,
            "permutation": list(self.permutation),
            "coins": [int_to_hex(r) for r in self.coins],
        }

    @classmethod
    def from_json(cls, d):
        return cls(
            [Ciphertext.from_json(c) for c in d["shadow"]],
            int(d["bit"]),
            [int(i) for i in d["permutation"]],
            [hex_to_int(r) for r in d["coins"]],
        )


@dataclass
class ShuffleTranscript:
    rounds: list

    def to_json(self) -> dict:
        return {"rounds": [r.to_json() for r in self.rounds]}

    @classmethod
    def from_json(cls, d):
        return cls([ShuffleRound.from_json(r) for r in d["rounds"]])


def _list_bytes(cts) -> bytes:
    return canonical_json([c.to_json() for c in cts])


def challenge_bits(params: GroupParams, A: int, inputs, outputs, shadows) -> list:
    """One bit per shadow, taken from the leading bits of a hash over the whole statement."""
    seed = hash_parts(
        CHALLENGE_TAG,
        canonical_json({k: int_to_hex(getattr(params, k)) for k in ("p", "q", "g", "h")}),
        int_to_hex(A),
        _list_bytes(inputs),
        _list_bytes(outputs),
        *(_list_bytes(s) for s in shadows),
    )
    need = len(shadows)
    stream, counter = b"", 0
    while 8 * len(stream) < need:
        stream += hashlib.sha256(seed + counter.to_bytes(4, "big")).digest()
        counter += 1
    return [(stream[j // 8] >> (7 - j % 8)) & 1 for j in range(need)]


def _compose_to_output(params, shadow_w: ShuffleWitness, real_w: ShuffleWitness) -> ShuffleWitness:
    """Opening of ``shadow -> outputs`` given both shuffles of the same inputs."""
    inv = [0] * len(shadow_w.permutation)
    for j, k in enumerate(shadow_w.permutation):
        inv[k] = j
    perm = [inv[k] for k in real_w.permutation]
    coins = [(r - shadow_w.coins[j]) % params.q for r, j in zip(real_w.coins, perm)]
    return ShuffleWitness(perm, coins)


def prove(params: GroupParams, A: int, inputs, outputs, witness: ShuffleWitness,
          rounds: int = DEFAULT_ROUNDS, rng=None) -> ShuffleTranscript:
    if rounds < 1:
        raise ValueError("need at least one round")
    inputs, outputs = list(inputs), list(outputs)
    if apply_shuffle(params, A, inputs, witness) != outputs:
        raise ValueError("witness does not map inputs to outputs")
    shadows, shadow_ws = [], []
    for _ in range(rounds):
        s, w = shuffle(params, A, inputs, rng)
        shadows.append(s)
        shadow_ws.append(w)
    bits = challenge_bits(params, A, inputs, outputs, shadows)
    out = []
    for s, w, b in zip(shadows, shadow_ws, bits):
        opening = w if b == 0 else _compose_to_output(params, w, witness)
        out.append(ShuffleRound(s, b, opening.permutation, opening.coins))
    return ShuffleTranscript(out)


@dataclass(frozen=True)
class Verdict:
    accepted: bool
    reason: str | None = None
    round: int | None = None

    def __bool__(self):
        return self.accepted


def verify(params: GroupParams, A: int, inputs, outputs, transcript: ShuffleTranscript, min_rounds: int = 1) -> Verdict:
    inputs, outputs = list(inputs), list(outputs)
    n = len(inputs)
    if len(outputs) != n:
        return Verdict(False, "input and output lengths differ")
    if len(transcript.rounds) < min_rounds:
        return Verdict(False, f"transcript has {len(transcript.rounds)} rounds, need {min_rounds}")
    for c in outputs:
        if not (params.is_element(c.c1) and params.is_element(c.c2)):
            return Verdict(False, "output contains a non-group element")
    for j, rnd in enumerate(transcript.rounds):
        if len(rnd.shadow) != n or len(rnd.permutation) != n or len(rnd.coins) != n:
            return Verdict(False, "malformed round lengths", j)
    bits = challenge_bits(params, A, inputs, outputs, [r.shadow for r in transcript.rounds])
    for j, (rnd, b) in enumerate(zip(transcript.rounds, bits)):
        if rnd.bit != b:
            return Verdict(False, "challenge bit does not match the hash", j)
        if sorted(rnd.permutation) != list(range(n)):
            return Verdict(False, "revealed permutation is not a bijection", j)
        if any(not 0 <= r < params.q for r in rnd.coins):
            return Verdict(False, "revealed coin out of range", j)
        w = ShuffleWitness(rnd.permutation, rnd.coins)
        src, dst = (inputs, rnd.shadow) if b == 0 else (rnd.shadow, outputs)
        if apply_shuffle(params, A, src, w) != list(dst):
            side = "inputs -> shadow" if b == 0 else "shadow -> outputs"
            return Verdict(False, f"opening of {side} does not reproduce the list", j)
    return Verdict(True)
