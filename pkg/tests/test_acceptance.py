"""Acceptance criteria 1-8, each at its stated tolerance.

Every test records a PASS/FAIL line that the conftest prints in the
terminal summary; the assertion then fails the test if the criterion fails.
"""

import math
import time

import numpy as np
from scipy import stats

from helpers import cheating_prove, encrypt_all, partitioned_reports
from hsdir_longevity.aggregation_protocol import plaintext_counts, run_mpc
from hsdir_longevity.audit import honeypot_expected, honeypot_schedule, outlier_party, party_histograms, verify_honeypot
from hsdir_longevity.estimation import (
    Histogram,
    SWEEP_N_CONTROLLED,
    build_pmf_table,
    count_distribution,
    coverage_sweep,
    expected_count_mean,
    mean_extrapolate,
    total_variation,
    weighted_extrapolate,
)
from hsdir_longevity.group_crypto import (
    Ciphertext,
    add,
    combine_pubkeys,
    dlog_bsgs,
    encrypt,
    joint_decrypt_element,
    keygen_share,
    mod2048_group,
    partial_decrypt,
    toy_group,
    BsgsSolver,
)
from hsdir_longevity.population_sim import (
    HiddenService,
    LifespanDist,
    StudyConfig,
    place_uploads,
    run_study,
    sample_population,
)
from hsdir_longevity.ring_model import random_ring
from hsdir_longevity.shuffle_proof import prove, shuffle, verify

SEEDS = (11, 12, 13)


def test_criterion_1_coverage_cdf(record_criterion):
    # long-lived services (mean 150 days): the reported fractions need about 150 days of counts
    cfg = StudyConfig(n_relays=3000, n_services=60000, duration=180, lifespan_dist=LifespanDist.normal(150, 30))
    fracs, slowest = [], 0.0
    for seed in SEEDS:
        t0 = time.perf_counter()
        lo, hi = coverage_sweep(cfg.replace(seed=seed), [30, 300])
        slowest = max(slowest, time.perf_counter() - t0)
        fracs.append((lo.frac_below, hi.frac_below))
    tol = 0.03
    ok = all(h >= 0.88 - tol and 0.40 - tol <= lo <= 0.60 + tol for lo, h in fracs) and slowest < 300
    detail = ", ".join(f"seed {s}: N_c=30 {lo:.3f}, N_c=300 {h:.3f}" for s, (lo, h) in zip(SEEDS, fracs))
    record_criterion(1, ok, f"{detail}; bands >= 0.85 and [0.37, 0.63]; slowest sweep {slowest:.0f}s")
    assert ok


def test_criterion_2_error_monotone(record_criterion):
    dists = {"uniform": LifespanDist.uniform(1, 180), "normal": LifespanDist.normal(30, 15),
             "exponential": LifespanDist.exponential(1 / 20)}
    rhos = {}
    for name, dist in dists.items():
        cfg = StudyConfig(n_relays=3000, n_services=60000, duration=180, lifespan_dist=dist, seed=21)
        e_avg = [p.e_avg for p in coverage_sweep(cfg, SWEEP_N_CONTROLLED)]
        rhos[name] = stats.spearmanr(SWEEP_N_CONTROLLED, e_avg).statistic
    ok = all(r <= -0.8 for r in rhos.values())
    record_criterion(2, ok, "Spearman rho " + ", ".join(f"{k} {v:.3f}" for k, v in rhos.items()) + " (need <= -0.8)")
    assert ok


def test_criterion_3_expected_count_bands(record_criterion):
    runs, parts, ok = 10000, [], True
    t0 = time.perf_counter()
    for d in (10, 30, 50, 90):
        pmf = count_distribution(d, 80, 3000, runs, np.random.default_rng([31, d]))
        mu, sd = pmf.mean(), pmf.std()
        within = pmf.mass_within(mu - 2 * sd, mu + 2 * sd)
        expected = expected_count_mean(d, 80, 3000)
        z = abs(mu - expected) / (sd / math.sqrt(runs))
        ok &= within >= 0.93 and z <= 3
        parts.append(f"d={d}: within 2sd {within:.3f}, mean {mu:.2f} vs {expected:.1f} ({z:.1f} SE)")
    elapsed = time.perf_counter() - t0
    ok &= elapsed < 120
    record_criterion(3, ok, "; ".join(parts) + f"; {elapsed:.1f}s")
    assert ok


def test_criterion_4_crypto_oracles(record_criterion):
    toy = toy_group()
    share = keygen_share(toy, np.random.default_rng(0), party=1, secret=3)
    c = encrypt(toy, share.A, 2, r=5)
    v = partial_decrypt(toy, c, 3)
    toy_ok = share.A == 18 and c == Ciphertext(12, 13) and v == 12 == pow(9, 2, 23) and dlog_bsgs(toy, v, 100) == 2

    big = mod2048_group()
    rng = np.random.default_rng(41)
    shares = [keygen_share(big, rng, party=i) for i in (1, 2)]
    A = combine_pubkeys(big, [s.public() for s in shares])
    secrets = [s.a for s in shares]
    solver = BsgsSolver(big, 2000)
    fail_rt = fail_sum = 0
    for _ in range(1000):
        m1, m2 = (int(x) for x in rng.integers(0, 1000, 2))
        c1, c2 = encrypt(big, A, m1, rng=rng), encrypt(big, A, m2, rng=rng)
        fail_rt += solver.solve(joint_decrypt_element(big, c1, secrets)) != m1
        fail_sum += solver.solve(joint_decrypt_element(big, add(big, c1, c2), secrets)) != m1 + m2
    ok = toy_ok and fail_rt == 0 and fail_sum == 0
    record_criterion(4, ok, f"toy vectors {'exact' if toy_ok else 'MISMATCH'}; 2048-bit: "
                            f"{fail_rt} roundtrip and {fail_sum} homomorphic-sum failures in 1000 each")
    assert ok


def test_criterion_5_end_to_end(record_criterion, tmp_path):
    rng = np.random.default_rng(51)
    params = mod2048_group()
    duration, n_relays = 30, 60
    ring = random_ring(n_relays, 0, rng)
    chosen = [ring.relay_ids[i] for i in rng.choice(n_relays, 12, replace=False)]
    dc_relays = [chosen[i * 4:(i + 1) * 4] for i in range(3)]
    ring = ring.with_controlled(chosen)
    cfg = StudyConfig(n_relays=n_relays, n_controlled=12, n_services=100, duration=duration,
                      lifespan_dist=LifespanDist.uniform(1, duration), double_count=True)
    population = sample_population(cfg, rng)
    t0 = time.perf_counter()
    res = run_mpc(params, population, ring, dc_relays, duration, rng, rounds=8, pbb_path=tmp_path / "pbb.jsonl")
    elapsed = time.perf_counter() - t0
    oracle = plaintext_counts(population, ring, dc_relays, duration)
    hashes = {s.onion_hash.hex() for s in population}
    leaked = any(h in e.payload.decode() for e in res.pbb.by_phase("result") for h in hashes)
    shuffles = len(res.pbb.by_phase("shuffle"))
    ok = (res.aborted is None and sorted(res.counts) == sorted(oracle) and res.flagged == []
          and res.pbb.verify_chain() and not leaked and shuffles == 3 and elapsed < 180)
    record_criterion(5, ok, f"{len(res.counts)} decrypted counts vs {len(oracle)} oracle counts, "
                            f"multisets {'equal' if sorted(res.counts) == sorted(oracle) else 'DIFFER'}; "
                            f"{shuffles} verified shuffles; chain of {len(res.pbb.entries)} entries verifies; "
                            f"onion hashes in result: {leaked}; {elapsed:.0f}s")
    assert ok


def test_criterion_6_shuffle_soundness(record_criterion):
    params = toy_group()
    trials, rounds = 400, 8
    cheats_accepted = honest_accepted = 0
    for t in range(trials):
        rng = np.random.default_rng([61, t])
        shares = [keygen_share(params, rng, party=i) for i in (1, 2)]
        A = combine_pubkeys(params, [s.public() for s in shares])
        inputs = encrypt_all(params, A, [int(x) for x in rng.integers(0, 11, 5)], rng)
        outputs, transcript = cheating_prove(params, A, inputs, rounds, rng)
        cheats_accepted += bool(verify(params, A, inputs, outputs, transcript, min_rounds=rounds))
        out, w = shuffle(params, A, inputs, rng)
        honest_accepted += bool(verify(params, A, inputs, out, prove(params, A, inputs, out, w, rounds, rng),
                                       min_rounds=rounds))
    p = 2.0 ** -rounds
    limit = p + 3 * math.sqrt(p * (1 - p) / trials)
    rate = cheats_accepted / trials
    ok = rate <= limit and honest_accepted == trials
    record_criterion(6, ok, f"cheater accepted {cheats_accepted}/{trials} = {rate:.4f} (limit {limit:.4f}); "
                            f"honest {honest_accepted}/{trials}")
    assert ok


def test_criterion_7_audit_detection(record_criterion):
    runs, flagged, pot_checks, pot_match, caught = 20, 0, 0, 0, 0
    for seed in range(runs):
        rng = np.random.default_rng([71, seed])
        cfg = StudyConfig(n_relays=3000, n_controlled=3, n_services=20000, duration=180, double_count=True)
        ring = random_ring(cfg.n_relays, cfg.n_controlled, rng)
        dcs = sorted(ring.controlled)
        groups = [[rid] for rid in dcs]  # three parties, one DC each
        population = sample_population(cfg, rng)
        pots = [HiddenService(cfg.n_services + k, rng.bytes(10), int(rng.integers(256)), 0, cfg.duration)
                for k in range(3)]
        rec = run_study(cfg, population + pots, ring, place_uploads(population + pots, ring, True), per_relay=True)
        bad = int(rng.integers(1, 4))
        reports = partitioned_reports(rec, groups, zero_parties=[bad])
        flagged += outlier_party(party_histograms(reports)) == bad
        col = {rid: j for j, rid in enumerate(rec.relay_columns)}
        for i, s in enumerate(pots, start=cfg.n_services):
            schedule = honeypot_schedule(s, ring, cfg.duration, True)
            for party, rid in enumerate(dcs, start=1):
                expected = honeypot_expected(schedule, [rid])
                pot_checks += 1
                pot_match += expected == rec.per_relay[i, col[rid]]
                if party == bad and expected > 0:
                    caught += verify_honeypot(reports[party].get(i, 0), expected, 0) == "cheated"
    ok = flagged / runs >= 0.95 and pot_match == pot_checks
    record_criterion(7, ok, f"zeroing DC flagged in {flagged}/{runs} runs; honeypot expected == simulator in "
                            f"{pot_match}/{pot_checks} checks; honeypots caught the zeroing DC {caught} times")
    assert ok


def test_criterion_8_weighted_extrapolation(record_criterion):
    nc, nr, duration = 80, 3000, 180
    table = build_pmf_table(duration, nc, nr, 10000, np.random.default_rng(81))
    wins, parts = 0, []
    for seed in range(10):
        cfg = StudyConfig(n_relays=nr, n_controlled=nc, n_services=20000, duration=duration,
                          double_count=True, seed=800 + seed)
        rng = np.random.default_rng(cfg.seed)
        ring = random_ring(nr, nc, rng)
        population = sample_population(cfg, rng)
        rec = run_study(cfg, population, ring)
        seen = rec.count_total > 0
        truth = Histogram.from_values(rec.lifespan_true[seen])
        tv_w = total_variation(weighted_extrapolate(rec.count_total[seen], table), truth)
        tv_m = total_variation(mean_extrapolate(rec.count_total[seen], nc, nr), truth)
        wins += tv_w < tv_m
        parts.append(f"{tv_w:.3f}/{tv_m:.3f}")
    ok = wins >= 8
    record_criterion(8, ok, f"weighted beats mean inversion in {wins}/10 seeds (TV weighted/mean: {', '.join(parts)})")
    assert ok
