"""Shared test utilities: small worlds and a cheating shuffle prover."""

import numpy as np

from hsdir_longevity.group_crypto import Ciphertext, add, encrypt
from hsdir_longevity.population_sim import HiddenService
from hsdir_longevity.shuffle_proof import ShuffleRound, ShuffleTranscript, challenge_bits, shuffle


def make_service(service_id=0, onset=0, lifespan=5, pib=0, identifier=None):
    ident = identifier if identifier is not None else service_id.to_bytes(10, "big")
    return HiddenService(service_id, ident, pib, onset, lifespan)


def encrypt_all(params, A, messages, rng):
    return [encrypt(params, A, m, rng=rng) for m in messages]


def cheating_prove(params, A, inputs, rounds, rng, max_tries=1):
    """Prover whose output list swaps one plaintext (adds 1 to the first entry).

    Per round it guesses the challenge bit in advance. For a guessed 0 it
    publishes an honest shadow of ``inputs``; for a guessed 1 it publishes a
    shadow built as a shuffle of the (bad) outputs, which it can open towards
    the outputs. Either way it can answer only the guessed bit. With
    ``max_tries > 1`` it regrinds all shadows, which is the best it can do
    against a single global challenge hash.

    Returns ``(outputs, transcript)``; the transcript carries the bits the
    verifier will recompute, so acceptance requires every guess to be right.
    """
    honest, _ = shuffle(params, A, inputs, rng)
    outputs = list(honest)
    outputs[0] = add(params, outputs[0], encrypt(params, A, 1, rng=rng))
    best = None
    for _ in range(max_tries):
        guesses = [int(b) for b in rng.integers(0, 2, rounds)]
        shadows, openings = [], []
        for g in guesses:
            if g == 0:
                s, w = shuffle(params, A, inputs, rng)
                shadows.append(s)
                openings.append(w)
            else:
                # a shuffle of outputs, relabelled so that shadow -> outputs is a valid opening
                s, w = _reverse_shadow(params, A, outputs, rng)
                shadows.append(s)
                openings.append(w)
        bits = challenge_bits(params, A, inputs, outputs, shadows)
        rounds_out = [ShuffleRound(s, b, w.permutation, w.coins) for s, b, w in zip(shadows, bits, openings)]
        best = ShuffleTranscript(rounds_out)
        if bits == guesses:
            break
    return outputs, best


def _reverse_shadow(params, A, outputs, rng):
    """Shadow ``S`` with a witness for ``S -> outputs``: ``S[k] = outputs[pi(k)]`` re-encrypted with ``-r``."""
    from hsdir_longevity.shuffle_proof import ShuffleWitness
    n = len(outputs)
    sigma = [int(x) for x in rng.permutation(n)]
    coins = [params.random_exponent(rng) for _ in range(n)]
    # outputs[i] = reenc(S[sigma[i]], coins[i])  =>  S[sigma[i]] = reenc(outputs[i], -coins[i])
    shadow = [None] * n
    for i in range(n):
        c = outputs[i]
        neg = (-coins[i]) % params.q
        shadow[sigma[i]] = Ciphertext(params.mul(c.c1, params.exp(params.g, neg)),
                                      params.mul(c.c2, params.exp(A, neg)))
    return shadow, ShuffleWitness(sigma, coins)


def seeded(seed):
    return np.random.default_rng(seed)


def partitioned_reports(record, dc_groups, zero_parties=(), halve_parties=()):
    """Per-party ``{service: count}`` as each party's DCs would report them.

    ``dc_groups[i]`` are the relay ids of party ``i + 1``. A party reports
    only services its DCs actually saw; zeroing parties report 0 for each of
    them and halving parties report ``count // 2``.
    """
    out = {}
    for i, relays in enumerate(dc_groups, start=1):
        counts = record.counts_for(relays)
        seen = np.flatnonzero(counts)
        if i in zero_parties:
            out[i] = {int(s): 0 for s in seen}
        elif i in halve_parties:
            out[i] = {int(s): int(counts[s]) // 2 for s in seen}
        else:
            out[i] = {int(s): int(counts[s]) for s in seen}
    return out


def split_controlled(ring, n_parties, rng):
    ctl = sorted(ring.controlled)
    order = [ctl[i] for i in rng.permutation(len(ctl))]
    return [order[i::n_parties] for i in range(n_parties)]
