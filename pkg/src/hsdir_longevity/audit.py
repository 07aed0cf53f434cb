"""Checks against parties that lie about their inputs.

* cross-party histogram distances (chi-square, Kullback-Leibler)
  with an outlier rule;
* honeypot services whose exact per-DC counts everyone can recompute from
  the ring;
* spot checks of a random sample of services with known expectations.
"""

import json
import math
from dataclasses import asdict, dataclass
from itertools import combinations

import numpy as np

from .estimation import Histogram
from .population_sim import daily_uploads

METRICS = ("chi2", "kl")
# smallest distance to the nearest other party that can count as disagreement;
# chi2 lies in [0, 2], symmetrised KL is unbounded
MIN_DISTANCE = {"chi2": 0.25, "kl": 1.0}


@dataclass(frozen=True)
class AuditConfig:
    delta: int = 0
    smoothing: float = 1e-6
    sample_size: int = 100
    outlier_factor: float = 3.0
    metric: str = "chi2"
    min_distance: float | None = None

    def __post_init__(self):
        if self.smoothing <= 0:
            raise ValueError("smoothing must be positive")
        if self.delta < 0:
            raise ValueError("delta must be non-negative")
        if self.metric not in METRICS:
            raise ValueError(f"metric must be one of {METRICS}")


def _as_hist(h):
    return h if isinstance(h, Histogram) else Histogram(dict(h))


def smoothed_pair(h1, h2, eps=1e-6):
    """Both histograms as probability vectors over their joint support, plus ``eps`` per bucket, renormalised."""
    h1, h2 = _as_hist(h1), _as_hist(h2)
    if h1.mass == 0 and h2.mass == 0:
        raise ValueError("both histograms are empty")
    keys = sorted(set(h1.buckets) | set(h2.buckets))
    out = []
    for h in (h1.normalized(), h2.normalized()):
        v = np.array([h.buckets.get(k, 0.0) for k in keys]) + eps
        out.append(v / v.sum())
    return out[0], out[1]


def chi2_distance(h1, h2, eps=1e-6) -> float:
    """Symmetric chi-square distance ``sum (p - q)^2 / (p + q)``, in [0, 2]."""
    p, q = smoothed_pair(h1, h2, eps)
    return float(np.sum((p - q) ** 2 / (p + q)))


def kl_divergence(h1, h2, eps=1e-6) -> float:
    """Directed ``KL(h1 || h2)`` in nats."""
    p, q = smoothed_pair(h1, h2, eps)
    return float(np.sum(p * np.log(p / q)))


def distance(h1, h2, metric="chi2", eps=1e-6) -> float:
    if metric == "chi2":
        return chi2_distance(h1, h2, eps)
    if metric == "kl":
        # symmetrised so the pairwise matrix is well defined
        return kl_divergence(h1, h2, eps) + kl_divergence(h2, h1, eps)
    raise ValueError(f"unknown metric {metric!r}")


def distance_matrix(histograms: dict, metric="chi2", eps=1e-6):
    parties = sorted(histograms)
    n = len(parties)
    m = np.zeros((n, n))
    for i, j in combinations(range(n), 2):
        m[i, j] = m[j, i] = distance(histograms[parties[i]], histograms[parties[j]], metric, eps)
    return parties, m


def outlier_party(histograms: dict, metric="chi2", eps=1e-6, factor=3.0, min_distance=None):
    """Party whose histogram stands apart from all the others, or ``None``.

    The candidate is the party with the largest summed distance to the rest.
    It is flagged only if its distance to its *nearest* other party exceeds
    both ``factor`` times the median pairwise distance among the remaining
    parties and ``min_distance`` (default per metric, see ``MIN_DISTANCE``).
    The relative test asks that the others agree with each other far better
    than with the candidate; the floor keeps sampling noise between honest
    parties from being read as disagreement.
    """
    if len(histograms) < 3:
        raise ValueError("need at least three parties")
    parties, m = distance_matrix(histograms, metric, eps)
    cand = int(np.argmax(m.sum(axis=1)))
    others = [i for i in range(len(parties)) if i != cand]
    nearest = min(m[cand, i] for i in others)
    baseline = float(np.median([m[i, j] for i, j in combinations(others, 2)]))
    floor = MIN_DISTANCE[metric] if min_distance is None else min_distance
    if nearest > factor * baseline and nearest > floor:
        return parties[cand]
    return None


def party_histograms(reported: dict) -> dict:
    """``{party: {service: count}}`` -> ``{party: Histogram of counts}``."""
    return {p: Histogram.from_values(counts.values()) for p, counts in reported.items()}


# --- honeypots ----------------------------------------------------------------------


def honeypot_schedule(service, ring, duration, double_count=False, study_start=0) -> list:
    """Per-day relay ids (with multiplicity) that receive the honeypot's uploads."""
    return [
        daily_uploads(service, ring, day, double_count, study_start) if day in service.days else []
        for day in range(duration)
    ]


def honeypot_expected(schedule, dc_relays) -> int:
    dcs = set(dc_relays)
    return sum(1 for day in schedule for rid in day if rid in dcs)


def verify_honeypot(reported: int, expected: int, delta: int) -> str:
    return "cheated" if abs(reported - expected) > delta else "honest"


# --- spot checks --------------------------------------------------------------------


@dataclass
class SpotCheckResult:
    pass_rate: dict
    n_checked: int

    def honest_miss_probability(self, p1: float) -> float:
        """Chance an honest party misses the threshold on every check, if each miss has probability ``p1``."""
        return p1 ** self.n_checked


def spot_check(expected: dict, reported: dict, delta: int, n_iterations: int, rng) -> SpotCheckResult:
    """Sample services and compare each party's reported count with the known expectation.

    ``expected`` is ``{service: {party: count}}`` (the ground truth available
    to the verifiers); ``reported`` is ``{party: {service: count}}``.
    """
    services = sorted(expected)
    if not services or n_iterations < 1:
        raise ValueError("empty spot-check sample")
    k = min(n_iterations, len(services))
    sample = [services[i] for i in rng.choice(len(services), size=k, replace=False)]
    rates = {}
    for party, counts in reported.items():
        ok = sum(abs(counts.get(s, 0) - expected[s].get(party, 0)) <= delta for s in sample)
        rates[party] = ok / k
    return SpotCheckResult(rates, k)


def audit_report(histograms: dict, config: AuditConfig, honeypots=None) -> dict:
    """JSON-ready report: pairwise distances, outlier verdict and honeypot table.

    ``honeypots`` rows are dicts with ``service``, ``dc``, ``party``,
    ``expected`` and ``reported``; a verdict is added to each.
    """
    parties, chi2 = distance_matrix(histograms, "chi2", config.smoothing)
    kl = {f"{a}->{b}": kl_divergence(histograms[a], histograms[b], config.smoothing)
          for a in parties for b in parties if a != b}
    outlier = None
    if len(histograms) >= 3:
        outlier = outlier_party(histograms, config.metric, config.smoothing, config.outlier_factor,
                                config.min_distance)
    table = []
    for row in honeypots or []:
        row = dict(row)
        row["verdict"] = verify_honeypot(row["reported"], row["expected"], config.delta)
        table.append(row)
    return {
        "config": asdict(config),
        "parties": parties,
        "chi2_matrix": [[round(x, 12) for x in r] for r in chi2.tolist()],
        "kl": {k: (round(v, 12) if math.isfinite(v) else None) for k, v in kl.items()},
        "outlier": outlier,
        "honeypots": table,
    }


def write_report(path, report: dict):
    with open(path, "w") as fh:
        json.dump(report, fh, indent=1, sort_keys=True)
        fh.write("\n")
