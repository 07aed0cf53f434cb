# Where does a hidden service put its descriptors, and how often do we see them?
import numpy as np

from hsdir_longevity.population_sim import HiddenService, daily_uploads
from hsdir_longevity.ring_model import derive_descriptor_ids, derive_time_period, random_ring, responsible_relays

rng = np.random.default_rng(7)

# a 3000-relay ring, 80 of which we run
ring = random_ring(3000, 80, rng)
print("relays:", len(ring), "controlled:", len(ring.controlled))

# one service: an 80-bit identifier plus its permanent-id-byte
ident = rng.bytes(10)
pib = 200

# the time-period flips once a day, shifted by pib * 86400 / 256 seconds
for hour in (0, 6, 12, 18, 24):
    t = 19000 * 86400 + hour * 3600
    print(f"hour {hour:2d} -> time-period {derive_time_period(t, pib)}")

# two descriptor-ids per period (replica 0 and 1), each stored on three consecutive relays
tp = derive_time_period(19000 * 86400, pib)
for replica, d in enumerate(derive_descriptor_ids(ident, None, tp)):
    print(f"replica {replica}: {d.hex()} -> relays {responsible_relays(ring, d)}")

# a month of uploads: how many land on our relays?
svc = HiddenService(0, ident, pib, onset=0, lifespan=30)
hits = [sum(r in ring.controlled for r in daily_uploads(svc, ring, day)) for day in range(30)]
print("daily hits on controlled relays:", hits)
print("total", sum(hits), "- expected about", 6 * 30 * 80 / 3000)
