"""Synthetic hidden-service populations and their descriptor uploads on a ring.

Counting model: a controlled relay adds one to a service's counter each time
one of the service's descriptors is uploaded to it in an epoch (one simulated
day). Two epoch models are supported:

* single count (default, ``double_count=False``): on each day the service is
  alive it uploads the descriptors of the time-period active at midday, so a
  service alive ``d`` days produces ``6 * d`` relay uploads.
* boundary double count (``double_count=True``): every epoch also sees the
  descriptors of the following time-period, because rotations are staggered
  by the permanent-id-byte and do not line up with epoch boundaries. Each
  time-period is then counted in both epochs it overlaps and a service alive
  ``d`` days produces ``12 * d`` relay uploads.
"""

import csv
import hashlib
import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy import sparse

from .ring_model import (
    IDENTIFIER_BYTES,
    RELAYS_PER_REPLICA,
    REPLICAS,
    SECONDS_PER_DAY,
    Ring,
    derive_time_period,
    random_ring,
    secret_id_part,
)


@dataclass(frozen=True)
class LifespanDist:
    """Lifespan distribution in days: ``normal(mu, sigma)``, ``uniform(lo, hi)`` or ``exponential(rate)``."""

    kind: str
    params: tuple

    def __post_init__(self):
        arity = {"normal": 2, "uniform": 2, "exponential": 1}
        if self.kind not in arity:
            raise ValueError(f"unknown lifespan distribution {self.kind!r}")
        if len(self.params) != arity[self.kind]:
            raise ValueError(f"{self.kind} takes {arity[self.kind]} parameter(s)")
        if any(p <= 0 for p in self.params):
            raise ValueError("distribution parameters must be positive")
        if self.kind == "uniform" and self.params[0] > self.params[1]:
            raise ValueError("uniform needs lo <= hi")

    @classmethod
    def normal(cls, mu=30.0, sigma=15.0):
        return cls("normal", (float(mu), float(sigma)))

    @classmethod
    def uniform(cls, lo, hi):
        return cls("uniform", (float(lo), float(hi)))

    @classmethod
    def exponential(cls, rate):
        return cls("exponential", (float(rate),))

    @classmethod
    def parse(cls, text: str):
        """Parse ``"normal:30,15"``, ``"uniform:1,180"`` or ``"exponential:0.05"``."""
        kind, _, rest = text.partition(":")
        params = tuple(float(x) for x in rest.split(",")) if rest else ()
        return cls(kind.strip(), params)

    def __str__(self):
        return f"{self.kind}:" + ",".join(f"{p:g}" for p in self.params)

    def draw(self, rng: np.random.Generator, n: int) -> np.ndarray:
        if self.kind == "normal":
            return rng.normal(self.params[0], self.params[1], n)
        if self.kind == "uniform":
            return rng.uniform(self.params[0], self.params[1], n)
        return rng.exponential(1.0 / self.params[0], n)


@dataclass(frozen=True)
class StudyConfig:
    n_relays: int = 3000
    n_controlled: int = 80
    n_services: int = 60000
    duration: int = 180
    lifespan_dist: LifespanDist = field(default_factory=LifespanDist.normal)
    seed: int = 0
    double_count: bool = False

    def __post_init__(self):
        if self.n_relays < RELAYS_PER_REPLICA:
            raise ValueError("n_relays must be at least 3")
        if not 0 <= self.n_controlled <= self.n_relays:
            raise ValueError("n_controlled must lie in [0, n_relays]")
        if self.duration < 1:
            raise ValueError("duration must be at least one day")
        if self.n_services < 0:
            raise ValueError("n_services must be non-negative")

    @classmethod
    def from_mapping(cls, data: dict):
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        kwargs = {}
        for key, value in data.items():
            if key == "lifespan_dist":
                kwargs[key] = value if isinstance(value, LifespanDist) else LifespanDist.parse(str(value))
            elif key == "double_count":
                kwargs[key] = value if isinstance(value, bool) else str(value).lower() in ("1", "true", "yes", "on")
            else:
                kwargs[key] = int(value)
        return cls(**kwargs)

    @classmethod
    def load(cls, path):
        """Read a JSON object or a flat ``key=value`` file."""
        text = Path(path).read_text()
        if text.lstrip().startswith("{"):
            return cls.from_mapping(json.loads(text))
        data = {}
        for line in text.splitlines():
            line = line.split("#", 1)[0].strip()
            if line:
                key, _, value = line.partition("=")
                data[key.strip()] = value.strip()
        return cls.from_mapping(data)

    def to_mapping(self) -> dict:
        d = asdict(self)
        d["lifespan_dist"] = str(self.lifespan_dist)
        return d

    def replace(self, **changes):
        return replace(self, **changes)


@dataclass(frozen=True)
class HiddenService:
    service_id: int
    identifier: bytes
    permanent_id_byte: int
    onset: int
    lifespan: int
    cookie: bytes | None = None

    def __post_init__(self):
        if len(self.identifier) != IDENTIFIER_BYTES:
            raise ValueError("identifier must be 80 bits")
        if self.lifespan < 1 or self.onset < 0:
            raise ValueError("need lifespan >= 1 and onset >= 0")

    @property
    def days(self) -> range:
        return range(self.onset, self.onset + self.lifespan)

    @property
    def onion_hash(self) -> bytes:
        """256-bit hash under which Data Collectors key this service."""
        return hashlib.sha256(b"onion-hash|" + self.identifier).digest()


def sample_population(cfg: StudyConfig, rng: np.random.Generator) -> list[HiddenService]:
    raw = cfg.lifespan_dist.draw(rng, cfg.n_services)
    lifespans = np.clip(np.rint(raw), 1, cfg.duration).astype(np.int64)
    onsets = rng.integers(0, cfg.duration - lifespans + 1)
    pib = rng.integers(0, 256, cfg.n_services)
    idents = rng.bytes(IDENTIFIER_BYTES * cfg.n_services)
    return [
        HiddenService(
            service_id=i,
            identifier=idents[i * IDENTIFIER_BYTES:(i + 1) * IDENTIFIER_BYTES],
            permanent_id_byte=int(pib[i]),
            onset=int(onsets[i]),
            lifespan=int(lifespans[i]),
        )
        for i in range(cfg.n_services)
    ]


def epoch_periods(day: int, permanent_id_byte: int, double_count: bool = False, study_start: int = 0) -> list[int]:
    """Time-periods whose descriptors a service uploads during epoch ``day``."""
    start = study_start + day * SECONDS_PER_DAY
    if double_count:
        first = derive_time_period(start, permanent_id_byte)
        return [first, first + 1]
    return [derive_time_period(start + SECONDS_PER_DAY // 2, permanent_id_byte)]


def upload_periods(service: HiddenService, double_count: bool = False, study_start: int = 0) -> dict[int, int]:
    """Map time-period -> number of epochs in which that period's uploads are counted."""
    weights: dict[int, int] = {}
    for day in service.days:
        for tp in epoch_periods(day, service.permanent_id_byte, double_count, study_start):
            weights[tp] = weights.get(tp, 0) + 1
    return weights


def daily_uploads(service: HiddenService, ring: Ring, day: int, double_count: bool = False, study_start: int = 0) -> list:
    """Relay ids receiving an upload from ``service`` during epoch ``day``, with multiplicity."""
    relays = []
    for tp in epoch_periods(day, service.permanent_id_byte, double_count, study_start):
        for r in REPLICAS:
            d = hashlib.sha1(service.identifier + secret_id_part(tp, service.cookie, r)).digest()
            relays.extend(ring.window(ring.start_index(d)))
    return relays


@dataclass
class UploadPlacement:
    """Every (service, time-period, replica) upload as a ring start position.

    ``weight`` is the number of epochs in which the upload is counted. It is
    independent of which relays are controlled, so one placement serves a
    whole sweep over controlled sets.
    """

    n_services: int
    service: np.ndarray
    start: np.ndarray
    weight: np.ndarray

    def totals(self, ring: Ring) -> np.ndarray:
        per_upload = self.weight * ring.window_controlled_counts[self.start]
        return np.bincount(self.service, weights=per_upload, minlength=self.n_services).astype(np.int64)


def place_uploads(population, ring: Ring, double_count: bool = False, study_start: int = 0, chunk: int = 2000) -> UploadPlacement:
    sha1 = hashlib.sha1
    sid_cache: dict = {}
    services, starts, weights = [], [], []
    for lo in range(0, len(population), chunk):
        digests, svc, wts = [], [], []
        for idx, s in enumerate(population[lo:lo + chunk], start=lo):
            ident = s.identifier
            for tp, w in upload_periods(s, double_count, study_start).items():
                for r in REPLICAS:
                    key = (tp, s.cookie, r)
                    sid = sid_cache.get(key)
                    if sid is None:
                        sid = sid_cache[key] = secret_id_part(tp, s.cookie, r)
                    digests.append(sha1(ident + sid).digest())
                    svc.append(idx)
                    wts.append(w)
        if not digests:
            continue
        arr = np.frombuffer(b"".join(digests), dtype=np.uint8).reshape(-1, 20)
        starts.append(ring.start_indices(arr).astype(np.int32))
        services.append(np.asarray(svc, dtype=np.int32))
        weights.append(np.asarray(wts, dtype=np.int8))
    empty = np.zeros(0, dtype=np.int32)
    return UploadPlacement(
        n_services=len(population),
        service=np.concatenate(services) if services else empty,
        start=np.concatenate(starts) if starts else empty,
        weight=np.concatenate(weights) if weights else empty.astype(np.int8),
    )


@dataclass
class ObservationRecord:
    """Ground-truth lifespans and controlled-relay counts per service.

    ``per_relay`` (optional) is a sparse ``services x controlled relays``
    matrix whose columns are labelled by ``relay_columns``.
    """

    lifespan_true: np.ndarray
    count_total: np.ndarray
    per_relay: sparse.csr_matrix | None = None
    relay_columns: tuple = ()

    def counts_for(self, relay_ids) -> np.ndarray:
        """Per-service counts summed over a subset of controlled relays (one party's DCs)."""
        if self.per_relay is None:
            raise ValueError("record was produced without per-relay counts")
        col = {rid: j for j, rid in enumerate(self.relay_columns)}
        cols = [col[r] for r in relay_ids if r in col]
        if not cols:
            return np.zeros(len(self.lifespan_true), dtype=np.int64)
        return np.asarray(self.per_relay[:, cols].sum(axis=1)).ravel().astype(np.int64)

    def write_csv(self, path, wide: bool = False):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            header = ["service_id", "lifespan_true", "count_total"]
            dense = None
            if wide:
                if self.per_relay is None:
                    raise ValueError("wide export needs per-relay counts")
                header += [f"relay_{rid}" for rid in self.relay_columns]
                dense = self.per_relay.toarray()
            w.writerow(header)
            for i, (la, c) in enumerate(zip(self.lifespan_true, self.count_total)):
                row = [i, int(la), int(c)]
                if dense is not None:
                    row += [int(x) for x in dense[i]]
                w.writerow(row)


def _per_relay_matrix(placement: UploadPlacement, ring: Ring):
    mask = ring.controlled_mask
    n = len(ring)
    columns = [i for i in range(n) if mask[i]]
    col_of = np.full(n, -1, dtype=np.int64)
    col_of[columns] = np.arange(len(columns))
    rows, cols, vals = [], [], []
    for j in range(RELAYS_PER_REPLICA):
        pos = (placement.start + j) % n
        hit = mask[pos]
        rows.append(placement.service[hit])
        cols.append(col_of[pos[hit]])
        vals.append(placement.weight[hit].astype(np.int64))
    m = sparse.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(placement.n_services, len(columns)),
    ).tocsr()
    return m, tuple(ring.relay_ids[i] for i in columns)


def run_study(cfg: StudyConfig, population, ring: Ring, placement: UploadPlacement | None = None,
              per_relay: bool = False) -> ObservationRecord:
    """Play out the study on ``ring`` and count uploads at controlled relays."""
    if len(ring) != cfg.n_relays or len(ring.controlled) != cfg.n_controlled:
        raise ValueError("ring does not match the study configuration")
    if placement is None:
        placement = place_uploads(population, ring, cfg.double_count)
    record = ObservationRecord(
        lifespan_true=np.array([s.lifespan for s in population], dtype=np.int64),
        count_total=placement.totals(ring),
    )
    if per_relay:
        record.per_relay, record.relay_columns = _per_relay_matrix(placement, ring)
    return record


def simulate(cfg: StudyConfig, per_relay: bool = False):
    """Seeded convenience: sample ring and population, then run the study."""
    rng = np.random.default_rng(cfg.seed)
    ring = random_ring(cfg.n_relays, cfg.n_controlled, rng)
    population = sample_population(cfg, rng)
    return ring, population, run_study(cfg, population, ring, per_relay=per_relay)
