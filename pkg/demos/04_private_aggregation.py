# Three parties count services together without learning which service had which count
import time

import numpy as np

from hsdir_longevity.aggregation_protocol import plaintext_counts, run_mpc
from hsdir_longevity.audit import outlier_party, party_histograms
from hsdir_longevity.estimation import Histogram
from hsdir_longevity.group_crypto import mod2048_group
from hsdir_longevity.population_sim import LifespanDist, StudyConfig, sample_population
from hsdir_longevity.ring_model import random_ring

rng = np.random.default_rng(1)
params = mod2048_group()

# a small world: 40 relays, each party runs 3 of them as data collectors
ring = random_ring(40, 0, rng)
chosen = [ring.relay_ids[i] for i in rng.choice(40, 9, replace=False)]
dc_relays = [chosen[0:3], chosen[3:6], chosen[6:9]]
ring = ring.with_controlled(chosen)
cfg = StudyConfig(n_relays=40, n_controlled=9, n_services=40, duration=10,
                  lifespan_dist=LifespanDist.uniform(1, 10), double_count=True)
population = sample_population(cfg, rng)

t0 = time.perf_counter()
res = run_mpc(params, population, ring, dc_relays, cfg.duration, rng, rounds=8)
print(f"protocol finished in {time.perf_counter() - t0:.1f}s with {len(res.pbb.entries)} board entries")

# the only output is a multiset of counts, detached from the services
print("decrypted counts:", sorted(res.counts))
print("matches the plaintext computation:", sorted(res.counts) == sorted(plaintext_counts(population, ring, dc_relays, cfg.duration)))
print("count histogram:", dict(sorted(Histogram.from_values(res.counts).buckets.items())))

phases = {}
for e in res.pbb.entries:
    phases[e.phase] = phases.get(e.phase, 0) + 1
print("board entries per phase:", phases)

# party 2 reports zeros for everything it sees
res = run_mpc(params, population, ring, dc_relays, cfg.duration, rng, rounds=8, cheats={2: "zeros"})
hists = party_histograms(res.reported_by_party())
for p, h in hists.items():
    print(f"party {p} reported histogram: {dict(sorted(h.buckets.items()))}")
print("outlier:", outlier_party(hists))

# party 3 tampers with a ciphertext while shuffling; the proof catches it
res = run_mpc(params, population, ring, dc_relays, cfg.duration, rng, rounds=8, cheats={3: "bad-shuffle"})
print("aborted:", res.aborted)
