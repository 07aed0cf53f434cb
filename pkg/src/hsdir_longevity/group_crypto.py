"""Exponential ElGamal over the quadratic residues of a safe prime, with n-of-n keys.

The joint secret is the *sum* of the parties' shares (the joint public key is
the product of their public shares), so decryption chains one division per
party: ``v_0 = C2`` and ``v_i = v_{i-1} / C1^{a_i}``, ending at ``h^m``.

Randomness comes from a ``numpy.random.Generator`` so simulations replay
exactly from a seed; pass ``None`` to draw from the OS CSPRNG instead.
"""

import hashlib
import json
import math
import secrets
from dataclasses import dataclass
from typing import NamedTuple

import gmpy2

from .encoding import hash_parts, hex_to_int, int_to_hex

# RFC 3526 group 14: 2048-bit MODP safe prime.
MODP_2048_P = int(
    "FFFFFFFFFFFFFFFFC90FDAA22168C234C4C6628B80DC1CD129024E088A67CC74"
    "020BBEA63B139B22514A08798E3404DDEF9519B3CD3A431B302B0A6DF25F1437"
    "4FE1356D6D51C245E485B576625E7EC6F44C42E9A637ED6B0BFF5CB6F406B7ED"
    "EE386BFB5A899FA5AE9F24117C4B1FE649286651ECE45B3DC2007CB8A163BF05"
    "98DA48361C55D39A69163FA8FD24CF5F83655D23DCA3AD961C62F356208552BB"
    "9ED529077096966D670C354E4ABC9804F1746C08CA18217C32905E462E36CE3B"
    "E39E772C180E86039B2783A2EC07A28FB5C55DF06F4C52C9DE2BCBF695581718"
    "3995497CEA956AE515D2261898FA051015728E5A8AACAA68FFFFFFFFFFFFFFFF",
    16,
)
H_DOMAIN_TAG = b"hsdir-longevity/second-generator/v1"


class CommitmentMismatch(Exception):
    def __init__(self, party, message="opened key share does not match its commitment"):
        super().__init__(f"party {party}: {message}")
        self.party = party


class DlogNotFound(Exception):
    """No exponent within the bound maps to the target; the aggregate is corrupt."""


def _powmod(base, exp, mod):
    return int(gmpy2.powmod(base, exp, mod))


@dataclass(frozen=True)
class GroupParams:
    p: int
    q: int
    g: int
    h: int

    def __post_init__(self):
        if self.p != 2 * self.q + 1:
            raise ValueError("p must equal 2q + 1")
        if not (gmpy2.is_prime(self.p) and gmpy2.is_prime(self.q)):
            raise ValueError("p and q must be prime")
        for name in ("g", "h"):
            x = getattr(self, name)
            if not 1 < x < self.p or _powmod(x, self.q, self.p) != 1:
                raise ValueError(f"{name} is not a generator of QR_p")
        if self.g == self.h:
            raise ValueError("g and h must differ")

    def is_element(self, x) -> bool:
        return 0 < x < self.p and gmpy2.legendre(x, self.p) == 1

    def exp(self, base, e):
        return _powmod(base, e, self.p)

    def mul(self, x, y):
        return x * y % self.p

    def div(self, x, y):
        return x * int(gmpy2.invert(y, self.p)) % self.p

    def random_exponent(self, rng=None) -> int:
        nbytes = (self.q.bit_length() + 64 + 7) // 8
        raw = secrets.token_bytes(nbytes) if rng is None else rng.bytes(nbytes)
        return int.from_bytes(raw, "big") % self.q

    def to_json(self) -> str:
        return json.dumps({k: int_to_hex(getattr(self, k)) for k in ("p", "q", "g", "h")}, indent=1)

    @classmethod
    def from_json(cls, text: str):
        d = json.loads(text)
        return cls(*(hex_to_int(d[k]) for k in ("p", "q", "g", "h")))


def derive_second_generator(p: int, tag: bytes = H_DOMAIN_TAG) -> int:
    """Hash ``tag`` into Z_p* and square it, so nobody knows log_g of the result."""
    need = (p.bit_length() + 128 + 7) // 8
    stream, counter = b"", 0
    while len(stream) < need:
        stream += hashlib.sha256(tag + counter.to_bytes(4, "big")).digest()
        counter += 1
    x = int.from_bytes(stream[:need], "big") % p
    return x * x % p


def toy_group() -> GroupParams:
    """p = 23 test group; h = 9 is fixed so hand-computed vectors apply."""
    return GroupParams(p=23, q=11, g=4, h=9)


def mod2048_group() -> GroupParams:
    p = MODP_2048_P
    return GroupParams(p=p, q=(p - 1) // 2, g=4, h=derive_second_generator(p))


GROUPS = {"toy": toy_group, "mod2048": mod2048_group}


def get_group(name: str) -> GroupParams:
    try:
        return GROUPS[name]()
    except KeyError:
        raise ValueError(f"unknown group {name!r}; choose from {sorted(GROUPS)}") from None


# --- distributed key generation ------------------------------------------------------


def share_commitment(party, public_share: int, salt: bytes) -> bytes:
    return hash_parts(b"keygen-commit", party, int_to_hex(public_share), salt)


@dataclass(frozen=True)
class PublicShare:
    """What a party publishes: commitment first, then ``(A_i, salt)`` as the opening."""

    party: object
    A: int
    salt: bytes
    commitment: bytes

    def opens(self) -> bool:
        return share_commitment(self.party, self.A, self.salt) == self.commitment


@dataclass(frozen=True)
class KeyShare:
    party: object
    a: int
    A: int
    salt: bytes
    commitment: bytes

    def public(self) -> PublicShare:
        return PublicShare(self.party, self.A, self.salt, self.commitment)


def keygen_share(params: GroupParams, rng=None, party=0, secret=None) -> KeyShare:
    """Draw a key share ``a_i`` (or use ``secret``) and commit to ``A_i = g^a_i`` with a 256-bit salt."""
    a = params.random_exponent(rng) if secret is None else secret % params.q
    A = params.exp(params.g, a)
    salt = secrets.token_bytes(32) if rng is None else rng.bytes(32)
    return KeyShare(party, a, A, salt, share_commitment(party, A, salt))


def combine_pubkeys(params: GroupParams, shares) -> int:
    """Joint public key ``prod A_i`` after checking every opening against its commitment."""
    shares = list(shares)
    if not shares:
        raise ValueError("no key shares")
    A = 1
    for s in shares:
        if not s.opens():
            raise CommitmentMismatch(s.party)
        if not params.is_element(s.A):
            raise CommitmentMismatch(s.party, "public share is not a group element")
        A = params.mul(A, s.A)
    return A


# --- encryption ----------------------------------------------------------------------


class Ciphertext(NamedTuple):
    c1: int
    c2: int

    def to_json(self) -> dict:
        return {"c1": int_to_hex(self.c1), "c2": int_to_hex(self.c2)}

    @classmethod
    def from_json(cls, d: dict):
        return cls(hex_to_int(d["c1"]), hex_to_int(d["c2"]))


def encrypt(params: GroupParams, A: int, m: int, r: int | None = None, rng=None) -> Ciphertext:
    """``(g^r, A^r h^m)``; ``r`` is drawn when not given."""
    if not 0 <= m < params.q:
        raise ValueError("message must lie in [0, q)")
    if r is None:
        r = params.random_exponent(rng)
    return Ciphertext(params.exp(params.g, r), params.mul(params.exp(A, r), params.exp(params.h, m)))


def add(params: GroupParams, x: Ciphertext, y: Ciphertext) -> Ciphertext:
    return Ciphertext(params.mul(x.c1, y.c1), params.mul(x.c2, y.c2))


def reencrypt(params: GroupParams, A: int, c: Ciphertext, r: int | None = None, rng=None) -> Ciphertext:
    """Multiply in a fresh encryption of zero: ``(C1 g^r, C2 A^r)``."""
    if r is None:
        r = params.random_exponent(rng)
    return Ciphertext(params.mul(c.c1, params.exp(params.g, r)), params.mul(c.c2, params.exp(A, r)))


def partial_decrypt(params: GroupParams, c: Ciphertext, a_i: int, v_prev: int | None = None) -> int:
    """One link of the decryption chain: ``v_prev / C1^a_i`` (``v_prev`` defaults to ``C2``)."""
    v = c.c2 if v_prev is None else v_prev
    return params.div(v, params.exp(c.c1, a_i))


def joint_decrypt_element(params: GroupParams, c: Ciphertext, secrets_in_order) -> int:
    """Run the whole chain; the result is ``h^m``."""
    v = c.c2
    for a in secrets_in_order:
        v = partial_decrypt(params, c, a, v)
    return v


# --- bounded discrete logarithm ------------------------------------------------------


def dlog_bruteforce(params: GroupParams, target: int, bound: int) -> int:
    if bound < 0:
        raise ValueError("bound must be non-negative")
    x = 1
    for m in range(bound + 1):
        if x == target:
            return m
        x = params.mul(x, params.h)
    raise DlogNotFound(f"no m <= {bound} with h^m = target")


class BsgsSolver:
    """Baby-step giant-step for ``h^m = target`` with ``0 <= m <= bound``; the table is reused across calls."""

    def __init__(self, params: GroupParams, bound: int):
        if bound < 0:
            raise ValueError("bound must be non-negative")
        self.params = params
        self.bound = bound
        self.step = math.isqrt(bound) + 1
        self.baby = {}
        x = 1
        for j in range(self.step):
            self.baby.setdefault(x, j)
            x = params.mul(x, params.h)
        self.giant = params.div(1, params.exp(params.h, self.step))

    def solve(self, target: int) -> int:
        y = target % self.params.p
        for i in range(self.bound // self.step + 1):
            j = self.baby.get(y)
            if j is not None:
                m = i * self.step + j
                if m <= self.bound:
                    return m
                break
            y = self.params.mul(y, self.giant)
        raise DlogNotFound(f"no m <= {self.bound} with h^m = target")


def dlog_bsgs(params: GroupParams, target: int, bound: int) -> int:
    return BsgsSolver(params, bound).solve(target)
