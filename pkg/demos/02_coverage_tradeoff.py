# How many relays do we need to run before the lifespan estimate is any good?
import numpy as np

from hsdir_longevity.estimation import coverage_sweep
from hsdir_longevity.population_sim import LifespanDist, StudyConfig

# a smaller population than the full 60,000 so this runs in seconds
cfg = StudyConfig(n_relays=3000, n_services=10000, duration=180, seed=3)

for dist in (LifespanDist.normal(30, 15), LifespanDist.uniform(1, 180), LifespanDist.exponential(1 / 20)):
    print(dist)
    for pt in coverage_sweep(cfg.replace(lifespan_dist=dist)):
        bar = "#" * int(40 * pt.e_avg)
        print(f"  N_c={pt.n_controlled:3d}  E_avg={pt.e_avg:.3f}  under 0.2: {pt.frac_below:5.1%}  {bar}")

# the error is mostly counting noise: a service seen x times has relative sd near 1/sqrt(x)
cfg = cfg.replace(lifespan_dist=LifespanDist.normal(150, 30))
pts = coverage_sweep(cfg, [30, 300], keep_errors=True)
for pt in pts:
    print(f"long-lived services, N_c={pt.n_controlled}: median error {np.median(pt.errors):.3f}, "
          f"{pt.frac_below:.1%} under 0.2")
