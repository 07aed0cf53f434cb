"""Multi-party computation of the lifespan histogram over encrypted HSDir counts.

Roles: every party runs one Tally Key Server (TKS) holding a key share and
several Data Collectors (DCs), each a controlled HSDir relay. All messages
go through the bulletin board. Phases run in this order:

1. keygen: every TKS commits to ``A_i``, then opens; the joint key is the product.
2. collection: each epoch (one simulated day) the DCs fold ``E(1)`` into an
   encrypted counter per onion hash, commit to their ledger, open it, and
   erase their epoch state. TKSs check each opening against its commitment.
3. aggregate: TKS 1 multiplies all ciphertexts of the same onion hash; the
   others recompute and compare.
4. shuffle: hashes are dropped and every TKS in ascending order shuffles the
   list and publishes a proof, which the others verify.
5. decrypt: each TKS strips its share from every ciphertext of the final
   list and the last one solves the bounded discrete logs.

A verification failure raises :class:`ProtocolAbort` naming the party at fault
and the run stops before decryption.
"""

import secrets
from collections import Counter, defaultdict
from dataclasses import dataclass, field

from .encoding import canonical_json, hash_parts, hex_to_int, int_to_hex
from .estimation import Histogram, weighted_extrapolate
from .group_crypto import (
    BsgsSolver,
    Ciphertext,
    DlogNotFound,
    GroupParams,
    PublicShare,
    add,
    combine_pubkeys,
    encrypt,
    keygen_share,
    partial_decrypt,
)
from .pbb import BulletinBoard
from .population_sim import daily_uploads
from .shuffle_proof import DEFAULT_ROUNDS, ShuffleTranscript, prove, shuffle, verify

CHEATS = ("zeros", "bad-shuffle", "bad-aggregate")


class ProtocolAbort(Exception):
    def __init__(self, party, reason):
        super().__init__(f"party {party}: {reason}")
        self.party = party
        self.reason = reason


# --- data collection -------------------------------------------------------------------


def dc_observe(ledger: dict, onion_hash: bytes, params: GroupParams, A: int, rng=None, value: int = 1) -> dict:
    """Fold a fresh ``E(r, value)`` into the counter for ``onion_hash``, creating it if absent."""
    c = encrypt(params, A, value, rng=rng)
    old = ledger.get(onion_hash)
    ledger[onion_hash] = c if old is None else add(params, old, c)
    return ledger


def ledger_bytes(entries) -> bytes:
    """Canonical encoding of ``[(onion_hash, ciphertext), ...]`` sorted by hash."""
    return canonical_json([[h.hex(), c.to_json()] for h, c in sorted(entries)])


def dc_commitment(dc_id, epoch, entries, salt: bytes) -> bytes:
    return hash_parts(b"dc-commit", str(dc_id), epoch, ledger_bytes(entries), salt)


@dataclass
class DataCollector:
    dc_id: str
    party: int
    relay_id: object
    ledger: dict = field(default_factory=dict)
    cheat: str | None = None
    _pending: tuple | None = None

    def observe(self, params, A, onion_hash, rng=None):
        dc_observe(self.ledger, onion_hash, params, A, rng, value=0 if self.cheat == "zeros" else 1)

    def commit(self, pbb: BulletinBoard, epoch: int, rng=None):
        entries = sorted(self.ledger.items())
        salt = secrets.token_bytes(32) if rng is None else rng.bytes(32)
        self._pending = (entries, salt)
        pbb.append(self.party, "dc-commit", {
            "dc": self.dc_id, "epoch": epoch,
            "commitment": dc_commitment(self.dc_id, epoch, entries, salt).hex(),
        })

    def open(self, pbb: BulletinBoard, epoch: int):
        if self._pending is None:
            raise ProtocolAbort(self.party, f"DC {self.dc_id} opened before committing")
        entries, salt = self._pending
        pbb.append(self.party, "dc-open", {
            "dc": self.dc_id, "epoch": epoch, "salt": salt.hex(),
            "entries": [[h.hex(), c.to_json()] for h, c in entries],
        })
        # forward security: nothing from this epoch survives publication
        self.ledger = {}
        self._pending = None


def dc_publish(dcs, pbb: BulletinBoard, epoch: int, rng=None):
    """All DCs commit, then all open, for one epoch."""
    for dc in dcs:
        dc.commit(pbb, epoch, rng)
    for dc in dcs:
        dc.open(pbb, epoch)


def verify_dc_openings(pbb: BulletinBoard, params: GroupParams, epoch=None):
    """Check every ``dc-open`` against the ``dc-commit`` posted before it."""
    commits = {}
    for e in pbb.entries:
        if e.phase == "dc-commit":
            d = e.data
            commits[(d["dc"], d["epoch"])] = (e.party, bytes.fromhex(d["commitment"]))
        elif e.phase == "dc-open":
            d = e.data
            if epoch is not None and d["epoch"] != epoch:
                continue
            key = (d["dc"], d["epoch"])
            if key not in commits:
                raise ProtocolAbort(e.party, f"DC {d['dc']} opened epoch {d['epoch']} without a commitment")
            party, commitment = commits[key]
            entries = [(bytes.fromhex(h), Ciphertext.from_json(c)) for h, c in d["entries"]]
            if party != e.party or dc_commitment(d["dc"], d["epoch"], entries, bytes.fromhex(d["salt"])) != commitment:
                raise ProtocolAbort(e.party, f"DC {d['dc']} epoch {d['epoch']}: opening does not match commitment")
            if len({h for h, _ in entries}) != len(entries):
                raise ProtocolAbort(e.party, f"DC {d['dc']} epoch {d['epoch']}: duplicate onion hash")
            for _, c in entries:
                if not (params.is_element(c.c1) and params.is_element(c.c2)):
                    raise ProtocolAbort(e.party, f"DC {d['dc']} epoch {d['epoch']}: invalid ciphertext")


# --- aggregation ---------------------------------------------------------------------


def tks_aggregate(pbb: BulletinBoard, params: GroupParams) -> list:
    """Homomorphic sum per onion hash over every DC opening; sorted by hash."""
    sums: dict = {}
    for e in pbb.by_phase("dc-open"):
        for h, c in e.data["entries"]:
            key = bytes.fromhex(h)
            c = Ciphertext.from_json(c)
            sums[key] = c if key not in sums else add(params, sums[key], c)
    return sorted(sums.items())


def _aggregate_payload(aggregate):
    return {"aggregate": [[h.hex(), c.to_json()] for h, c in aggregate]}


# --- parties -------------------------------------------------------------------------


@dataclass
class Party:
    party_id: int
    key: object
    dcs: list
    cheat: str | None = None


def _cheat_shuffle(params, A, inputs, rounds, rng):
    """Replace one plaintext by adding an encryption of 1 to it, then prove as if honest."""
    outputs, witness = shuffle(params, A, inputs, rng)
    bad = list(outputs)
    if bad:
        bad[0] = add(params, bad[0], encrypt(params, A, 1, rng=rng))
    transcript = prove(params, A, inputs, outputs, witness, rounds, rng)
    return bad, transcript


def shuffle_phase(aggregates, parties, pbb: BulletinBoard, params: GroupParams, A: int,
                  rounds: int = DEFAULT_ROUNDS, rng=None) -> list:
    """Sequential verified shuffles, one per party in ascending id order.

    Every transcript is checked before the next party starts; a failure
    aborts naming the shuffling party.
    """
    current = [c for _, c in aggregates]
    for party in sorted(parties, key=lambda p: p.party_id):
        if party.cheat == "bad-shuffle":
            outputs, transcript = _cheat_shuffle(params, A, current, rounds, rng)
        else:
            outputs, witness = shuffle(params, A, current, rng)
            transcript = prove(params, A, current, outputs, witness, rounds, rng)
        pbb.append(party.party_id, "shuffle", {
            "output": [c.to_json() for c in outputs],
            "transcript": transcript.to_json(),
        })
        # verification works only from what is on the board
        posted = pbb.entries[-1].data
        posted_out = [Ciphertext.from_json(c) for c in posted["output"]]
        verdict = verify(params, A, current, posted_out, ShuffleTranscript.from_json(posted["transcript"]),
                         min_rounds=rounds)
        if not verdict:
            where = f" (round {verdict.round})" if verdict.round is not None else ""
            raise ProtocolAbort(party.party_id, f"shuffle proof rejected: {verdict.reason}{where}")
        current = posted_out
    return current


@dataclass
class DecryptionResult:
    counts: list
    flagged: list


def joint_decrypt(final_list, parties, pbb: BulletinBoard, params: GroupParams, bound: int) -> DecryptionResult:
    """Chain partial decryptions in ascending party order, then bounded DLog.

    Ciphertexts whose plaintext exceeds ``bound`` are reported in ``flagged``
    (by index in ``final_list``) and left out of ``counts``.
    """
    ordered = sorted(parties, key=lambda p: p.party_id)
    values = [c.c2 for c in final_list]
    for party in ordered:
        values = [partial_decrypt(params, c, party.key.a, v) for c, v in zip(final_list, values)]
        pbb.append(party.party_id, "decrypt-partial", {"values": [int_to_hex(v) for v in values]})
    solver = BsgsSolver(params, bound)
    counts, flagged = [], []
    for i, v in enumerate(values):
        try:
            counts.append(solver.solve(v))
        except DlogNotFound:
            flagged.append(i)
    pbb.append(ordered[-1].party_id, "result", {"counts": counts, "flagged": flagged})
    return DecryptionResult(counts, flagged)


def build_histogram(counts, pmf_table=None) -> Histogram:
    """Raw histogram of counts, or a lifespan histogram when a pmf table is given."""
    if pmf_table is None:
        return Histogram.from_values(counts)
    return weighted_extrapolate(counts, pmf_table)


# --- orchestration -------------------------------------------------------------------


@dataclass
class MpcResult:
    counts: list
    flagged: list
    pbb: BulletinBoard
    joint_key: int
    # harness-side plaintext of what each DC encrypted: {dc_id: Counter(onion_hash -> count)}
    reported: dict
    dc_party: dict
    aborted: ProtocolAbort | None = None

    def reported_by_party(self) -> dict:
        out: dict = defaultdict(Counter)
        for dc_id, counts in self.reported.items():
            out[self.dc_party[dc_id]].update(counts)
        return {p: dict(c) for p, c in sorted(out.items())}


class ProtocolRun:
    """State machine over one bulletin board; methods must be called in phase order."""

    ORDER = ("init", "keyed", "collected", "aggregated", "shuffled", "decrypted")

    def __init__(self, params: GroupParams, parties, pbb: BulletinBoard, rng=None, rounds=DEFAULT_ROUNDS):
        if not parties:
            raise ValueError("need at least one party")
        self.params = params
        self.parties = sorted(parties, key=lambda p: p.party_id)
        self.pbb = pbb
        self.rng = rng
        self.rounds = rounds
        self.state = "init"
        self.A = None
        self.aggregate = None
        self.final = None
        self.reported = defaultdict(Counter)

    def _require(self, *states):
        if self.state not in states:
            raise RuntimeError(f"step not allowed in state {self.state!r}")

    @property
    def dcs(self):
        return [dc for p in self.parties for dc in p.dcs]

    def keygen(self):
        self._require("init")
        for p in self.parties:
            self.pbb.append(p.party_id, "keygen-commit", {"commitment": p.key.commitment.hex()})
        for p in self.parties:
            self.pbb.append(p.party_id, "keygen-open", {"A": int_to_hex(p.key.A), "salt": p.key.salt.hex()})
        commits = {e.party: bytes.fromhex(e.data["commitment"]) for e in self.pbb.by_phase("keygen-commit")}
        publics = [
            PublicShare(e.party, hex_to_int(e.data["A"]), bytes.fromhex(e.data["salt"]), commits[e.party])
            for e in self.pbb.by_phase("keygen-open")
        ]
        try:
            self.A = combine_pubkeys(self.params, publics)
        except Exception as exc:
            raise ProtocolAbort(getattr(exc, "party", None), str(exc)) from exc
        self.state = "keyed"
        return self.A

    def collect_epoch(self, epoch: int, observations):
        """``observations`` maps a DC id to the onion hashes it saw this epoch (with repeats)."""
        self._require("keyed", "collected")
        by_id = {dc.dc_id: dc for dc in self.dcs}
        for dc_id, hashes in observations.items():
            dc = by_id[dc_id]
            for h in hashes:
                dc.observe(self.params, self.A, h, self.rng)
                self.reported[dc.dc_id][h] += 0 if dc.cheat == "zeros" else 1
        dc_publish(self.dcs, self.pbb, epoch, self.rng)
        verify_dc_openings(self.pbb, self.params, epoch)
        self.state = "collected"

    def aggregate_phase(self):
        self._require("collected")
        verify_dc_openings(self.pbb, self.params)
        first = self.parties[0]
        agg = tks_aggregate(self.pbb, self.params)
        published = agg
        if first.cheat == "bad-aggregate" and agg:
            h, c = agg[0]
            published = [(h, add(self.params, c, encrypt(self.params, self.A, 1, rng=self.rng)))] + agg[1:]
        self.pbb.append(first.party_id, "aggregate", _aggregate_payload(published))
        posted = canonical_json(self.pbb.entries[-1].data)
        for p in self.parties[1:]:
            if canonical_json(_aggregate_payload(tks_aggregate(self.pbb, self.params))) != posted:
                raise ProtocolAbort(first.party_id, f"aggregate does not match recomputation by party {p.party_id}")
        self.aggregate = published
        self.state = "aggregated"
        return published

    def shuffle(self):
        self._require("aggregated")
        self.final = shuffle_phase(self.aggregate, self.parties, self.pbb, self.params, self.A, self.rounds, self.rng)
        self.state = "shuffled"
        return self.final

    def decrypt(self, bound: int) -> DecryptionResult:
        self._require("shuffled")
        res = joint_decrypt(self.final, self.parties, self.pbb, self.params, bound)
        self.state = "decrypted"
        return res


def make_parties(params, dc_relays, rng=None, cheats=None):
    """``dc_relays[i]`` lists the relay ids run as DCs by party ``i + 1``."""
    cheats = cheats or {}
    for pid, how in cheats.items():
        if how not in CHEATS:
            raise ValueError(f"unknown cheat {how!r} for party {pid}")
    parties = []
    for i, relays in enumerate(dc_relays, start=1):
        cheat = cheats.get(i)
        dcs = [DataCollector(f"p{i}-dc{j}", i, rid, cheat=cheat if cheat == "zeros" else None)
               for j, rid in enumerate(relays)]
        parties.append(Party(i, keygen_share(params, rng, party=i), dcs, cheat))
    return parties


def run_mpc(params: GroupParams, population, ring, dc_relays, duration: int, rng=None,
            rounds: int = DEFAULT_ROUNDS, double_count: bool = True, cheats=None,
            pbb_path=None, bound: int | None = None) -> MpcResult:
    """Full pipeline over a simulated study: collection through joint decryption.

    Each day every alive service uploads its descriptors; uploads landing on a
    DC's relay are folded into that DC's encrypted ledger. The DLog bound
    defaults to ``12 * duration``.
    """
    if bound is None:
        bound = 12 * duration
    if bound >= params.q:
        raise ValueError(f"DLog bound {bound} does not fit the group order; use a larger group")
    pbb = BulletinBoard(pbb_path)
    parties = make_parties(params, dc_relays, rng, cheats)
    run = ProtocolRun(params, parties, pbb, rng, rounds)
    dc_of_relay = {dc.relay_id: dc.dc_id for dc in run.dcs}
    dc_party = {dc.dc_id: dc.party for dc in run.dcs}
    try:
        run.keygen()
        for day in range(duration):
            observations = {dc.dc_id: [] for dc in run.dcs}
            for s in population:
                if s.onset <= day < s.onset + s.lifespan:
                    for rid in daily_uploads(s, ring, day, double_count):
                        if rid in dc_of_relay:
                            observations[dc_of_relay[rid]].append(s.onion_hash)
            run.collect_epoch(day, observations)
        run.aggregate_phase()
        run.shuffle()
        res = run.decrypt(bound)
    except ProtocolAbort as exc:
        return MpcResult([], [], pbb, run.A, dict(run.reported), dc_party, aborted=exc)
    return MpcResult(res.counts, res.flagged, pbb, run.A, dict(run.reported), dc_party)


def plaintext_counts(population, ring, dc_relays, duration, double_count=True) -> list:
    """Oracle: per-service totals over all DCs, computed in the clear, for services seen at least once."""
    dcs = {rid for relays in dc_relays for rid in relays}
    out = []
    for s in population:
        total = 0
        for day in range(s.onset, min(s.onset + s.lifespan, duration)):
            total += sum(1 for rid in daily_uploads(s, ring, day, double_count) if rid in dcs)
        if total:
            out.append(total)
    return out
