# From raw counts back to lifespans: weighted extrapolation against mean inversion
import numpy as np

from hsdir_longevity.estimation import (
    Histogram,
    build_pmf_table,
    count_distribution,
    mean_extrapolate,
    total_variation,
    weighted_extrapolate,
)
from hsdir_longevity.population_sim import StudyConfig, simulate

rng = np.random.default_rng(5)

# what a service alive d days looks like from 80 of 3000 relays
for d in (10, 30, 50, 90):
    pmf = count_distribution(d, 80, 3000, 10000, rng)
    mu, sd = pmf.mean(), pmf.std()
    print(f"d={d:2d}: mean {mu:5.2f}  sd {sd:4.2f}  95% of counts in [{pmf.quantile(0.025)}, {pmf.quantile(0.975)}]"
          f"  mode {pmf.mode()}")

# the counts overlap heavily, so a count does not pin down a lifespan
table = build_pmf_table(180, 80, 3000, 10000, rng)
print("P(count = 3) for d = 5, 10, 20:", [round(table.prob(d, 3), 3) for d in (5, 10, 20)])

# a simulated study, then both ways of turning counts into a lifespan histogram
cfg = StudyConfig(n_services=20000, double_count=True, seed=9)
ring, population, rec = simulate(cfg)
seen = rec.count_total > 0
truth = Histogram.from_values(rec.lifespan_true[seen])
weighted = weighted_extrapolate(rec.count_total[seen], table)
naive = mean_extrapolate(rec.count_total[seen], 80, 3000)
print(f"{seen.sum()} of {cfg.n_services} services seen at least once")
print(f"total variation to the truth: weighted {total_variation(weighted, truth):.3f}, "
      f"mean inversion {total_variation(naive, truth):.3f}")

# side by side CDFs at a few lifespans
for name, h in (("truth", truth), ("weighted", weighted), ("mean", naive)):
    cdf = dict(h.cdf())
    marks = [max((v for k, v in cdf.items() if k <= day), default=0.0) for day in (10, 30, 60)]
    print(f"{name:9s} P(<=10d) {marks[0]:.2f}  P(<=30d) {marks[1]:.2f}  P(<=60d) {marks[2]:.2f}")
