"""Lifespan estimation from partial HSDir coverage and count-based extrapolation."""

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .population_sim import StudyConfig, place_uploads, sample_population
from .ring_model import RELAYS_PER_REPLICA, random_ring

UPLOADS_PER_PERIOD = 2 * RELAYS_PER_REPLICA


def single_relay_probability(n_relays):
    """Chance that one given HSDir hosts a service placed on a single random relay."""
    return 1.0 / n_relays


def hosting_probability(n_relays):
    """Approximate chance that a given HSDir hosts one of a service's six descriptor copies."""
    return UPLOADS_PER_PERIOD / n_relays


def estimate_lifespan(count_total, n_controlled, n_relays):
    """Scale a partial count up to full coverage and divide out the six daily uploads."""
    if n_controlled < 1:
        raise ValueError("need at least one controlled relay")
    return np.asarray(count_total, dtype=float) * n_relays / (n_controlled * UPLOADS_PER_PERIOD)


def relative_error(estimated, actual):
    actual = np.asarray(actual, dtype=float)
    if np.any(actual <= 0):
        raise ValueError("actual lifespan must be positive")
    return np.abs(np.asarray(estimated, dtype=float) - actual) / actual


def average_error(errors):
    errors = np.asarray(errors, dtype=float)
    if errors.size == 0:
        raise ValueError("no errors to average")
    return float(errors.mean())


def expected_count_mean(days, n_controlled, n_relays, double_count=True):
    if n_relays < 1:
        raise ValueError("n_relays must be positive")
    epochs = 2 if double_count else 1
    return UPLOADS_PER_PERIOD * days * epochs * n_controlled / n_relays


# --- Monte-Carlo count distributions -------------------------------------------------


def simulate_period_counts(n_periods, n_controlled, n_relays, runs, rng, chunk=500):
    """Controlled-relay hits per time-period (both replicas) for ``runs`` independent placements.

    Each run draws a fresh ring (uniform fingerprints), a fresh controlled
    subset, and uniformly random descriptor-ids: the random-oracle view of the
    SHA-1 derivation. Returns an int array of shape ``(runs, n_periods)``.
    """
    if runs < 1:
        raise ValueError("runs must be at least 1")
    if not 0 <= n_controlled <= n_relays or n_relays < RELAYS_PER_REPLICA:
        raise ValueError("invalid ring size")
    out = np.empty((runs, n_periods), dtype=np.int64)
    for lo in range(0, runs, chunk):
        r = min(chunk, runs - lo)
        offset = np.arange(r, dtype=float)[:, None]
        fps = np.sort(rng.random((r, n_relays)), axis=1)
        keys = rng.random((r, n_relays))
        if n_controlled == 0:
            mask = np.zeros((r, n_relays), dtype=np.int64)
        else:
            cut = np.partition(keys, n_controlled - 1, axis=1)[:, n_controlled - 1]
            mask = (keys <= cut[:, None]).astype(np.int64)
        window = mask + np.roll(mask, -1, axis=1) + np.roll(mask, -2, axis=1)
        pos = rng.random((r, 2 * n_periods))
        flat = np.searchsorted((fps + offset).ravel(), (pos + offset).ravel(), side="right")
        local = (flat.reshape(r, -1) - np.arange(r)[:, None] * n_relays) % n_relays
        hits = np.take_along_axis(window, local, axis=1)
        out[lo:lo + r] = hits[:, 0::2] + hits[:, 1::2]
    return out


def totals_from_periods(period_counts, days, double_count=True):
    """Total count for a service alive ``days`` days, from per-period hits.

    With the boundary double count every interior period is seen in two
    epochs and the first and last periods in one, so ``days + 1`` periods
    are needed; otherwise ``days`` periods each counted once.
    """
    if days == 0:
        return np.zeros(len(period_counts), dtype=np.int64)
    if double_count:
        seg = period_counts[:, :days + 1]
        return 2 * seg.sum(axis=1) - seg[:, 0] - seg[:, days]
    return period_counts[:, :days].sum(axis=1)


@dataclass
class CountPmf:
    """Empirical distribution of total counts; ``prob[x]`` is P(count = x)."""

    prob: np.ndarray
    runs: int

    @classmethod
    def from_samples(cls, samples, max_count=None):
        samples = np.asarray(samples, dtype=np.int64)
        size = int(samples.max()) + 1 if max_count is None else max_count + 1
        return cls(np.bincount(samples, minlength=size) / len(samples), len(samples))

    @property
    def support(self):
        return np.flatnonzero(self.prob)

    def mean(self):
        return float(np.dot(np.arange(len(self.prob)), self.prob))

    def std(self):
        x = np.arange(len(self.prob))
        return float(math.sqrt(max(np.dot((x - self.mean()) ** 2, self.prob), 0.0)))

    def mass_within(self, lo, hi):
        x = np.arange(len(self.prob))
        return float(self.prob[(x >= lo) & (x <= hi)].sum())

    def mode(self):
        return int(np.argmax(self.prob))

    def quantile(self, q):
        return int(np.searchsorted(np.cumsum(self.prob), q - 1e-12))


def count_distribution(days, n_controlled, n_relays, runs, rng, double_count=True):
    """Monte-Carlo pmf of one service's total count after ``days`` days alive."""
    periods = simulate_period_counts(days + 1, n_controlled, n_relays, runs, rng)
    totals = totals_from_periods(periods, days, double_count)
    epochs = 2 if double_count else 1
    return CountPmf.from_samples(totals, max_count=UPLOADS_PER_PERIOD * epochs * days)


@dataclass
class CountPmfTable:
    """One count pmf per lifespan ``d = 1..duration``."""

    pmfs: dict
    runs: int

    @property
    def lifespans(self):
        return sorted(self.pmfs)

    def prob(self, days, count):
        p = self.pmfs[days].prob
        return float(p[count]) if 0 <= count < len(p) else 0.0

    def column(self, count):
        """``p_d(count)`` for every lifespan, in :attr:`lifespans` order."""
        return np.array([self.prob(d, count) for d in self.lifespans])

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["d", "count", "prob"])
            for d in self.lifespans:
                p = self.pmfs[d].prob
                for x in np.flatnonzero(p):
                    w.writerow([d, int(x), repr(float(p[x]))])

    @classmethod
    def from_csv(cls, path, runs=0):
        rows: dict = {}
        with open(path, newline="") as fh:
            for row in csv.DictReader(fh):
                rows.setdefault(int(row["d"]), {})[int(row["count"])] = float(row["prob"])
        pmfs = {}
        for d, entries in rows.items():
            prob = np.zeros(max(entries) + 1)
            for x, p in entries.items():
                prob[x] = p
            pmfs[d] = CountPmf(prob, runs)
        return cls(pmfs, runs)


def build_pmf_table(duration, n_controlled, n_relays, runs, rng, double_count=True):
    """Count pmfs for every lifespan up to ``duration``.

    Runs are shared across lifespans: each run follows one service through
    the whole study and lifespan ``d`` reads the first ``d`` days of it.
    """
    periods = simulate_period_counts(duration + 1, n_controlled, n_relays, runs, rng)
    epochs = 2 if double_count else 1
    pmfs = {
        d: CountPmf.from_samples(totals_from_periods(periods, d, double_count),
                                 max_count=UPLOADS_PER_PERIOD * epochs * d)
        for d in range(1, duration + 1)
    }
    return CountPmfTable(pmfs, runs)


# --- Histograms and extrapolation ------------------------------------------------------


@dataclass
class Histogram:
    """Lifespan (days) -> weight. ``unattributed`` holds mass that could not be placed."""

    buckets: dict = field(default_factory=dict)
    unattributed: float = 0.0

    @classmethod
    def from_values(cls, values):
        h = cls()
        for v in values:
            h.add(int(v), 1.0)
        return h

    def add(self, key, weight):
        self.buckets[key] = self.buckets.get(key, 0.0) + weight

    @property
    def mass(self):
        return float(sum(self.buckets.values()))

    def normalized(self):
        m = self.mass
        if m == 0:
            return Histogram()
        return Histogram({k: v / m for k, v in self.buckets.items()})

    def cdf(self):
        n = self.normalized().buckets
        acc, out = 0.0, []
        for k in sorted(n):
            acc += n[k]
            out.append((k, acc))
        return out

    def to_csv(self, path, key_name="lifespan_days"):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow([key_name, "weight"])
            for k in sorted(self.buckets):
                w.writerow([k, repr(float(self.buckets[k]))])

    def cdf_to_csv(self, path, key_name="lifespan_days"):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow([key_name, "cdf"])
            for k, c in self.cdf():
                w.writerow([k, repr(float(c))])


def total_variation(h1: Histogram, h2: Histogram) -> float:
    a, b = h1.normalized().buckets, h2.normalized().buckets
    return 0.5 * sum(abs(a.get(k, 0.0) - b.get(k, 0.0)) for k in set(a) | set(b))


def weighted_extrapolate(observed, table: CountPmfTable, normalize=True) -> Histogram:
    """Spread each observed count over lifespans by its likelihood under each lifespan.

    With ``normalize`` (default) an observation of count ``x`` gives lifespan
    ``d`` the weight ``p_d(x) / sum_j p_j(x)``, i.e. the posterior under a
    uniform prior, so total mass equals the number of observations. Without
    it, the raw ``p_d(x)`` are added. Counts impossible under every lifespan go
    to ``unattributed``.
    """
    hist = Histogram()
    days = table.lifespans
    values, mult = np.unique(np.asarray(list(observed), dtype=np.int64), return_counts=True)
    for x, m in zip(values, mult):
        col = table.column(int(x))
        total = col.sum()
        if total == 0:
            hist.unattributed += float(m)
            continue
        weights = col / total if normalize else col
        for d, w in zip(days, weights):
            if w > 0:
                hist.add(d, float(m * w))
    return hist


def mean_extrapolate(observed, n_controlled, n_relays, double_count=True) -> Histogram:
    """Baseline: invert the mean expected count per observation.

    Lifespans round to the nearest day (halves toward the smaller day) and
    are at least 1. Zero counts cannot be inverted and are tallied in
    ``unattributed``.
    """
    per_day = expected_count_mean(1, n_controlled, n_relays, double_count)
    hist = Histogram()
    for x in observed:
        if x <= 0:
            hist.unattributed += 1.0
            continue
        hist.add(max(1, math.ceil(x / per_day - 0.5)), 1.0)
    return hist


# --- Coverage sweep ---------------------------------------------------------------------

SWEEP_N_CONTROLLED = tuple(range(30, 301, 30))


@dataclass
class SweepPoint:
    n_controlled: int
    e_avg: float
    frac_below: float
    errors: np.ndarray = field(repr=False, default=None)


def coverage_sweep(cfg: StudyConfig, n_controlled_values=SWEEP_N_CONTROLLED, threshold=0.2, keep_errors=False):
    """Average relative error of the lifespan estimate for each controlled-set size.

    One ring, population and upload placement is drawn from ``cfg.seed``;
    controlled sets are nested prefixes of one random relay ordering, so
    larger sets contain the smaller ones.
    """
    rng = np.random.default_rng(cfg.seed)
    ring = random_ring(cfg.n_relays, 0, rng)
    population = sample_population(cfg, rng)
    placement = place_uploads(population, ring, cfg.double_count)
    order = [ring.relay_ids[i] for i in rng.permutation(len(ring))]
    actual = np.array([s.lifespan for s in population], dtype=float)
    epochs = 2 if cfg.double_count else 1
    points = []
    for nc in n_controlled_values:
        counts = placement.totals(ring.with_controlled(order[:nc]))
        errors = relative_error(estimate_lifespan(counts / epochs, nc, cfg.n_relays), actual)
        points.append(SweepPoint(nc, average_error(errors), float((errors < threshold).mean()),
                                 errors if keep_errors else None))
    return points
