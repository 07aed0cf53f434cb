"""Command-line front end.

Every command writes into ``--out`` (created if missing). Outputs depend only
on the arguments and ``--seed``, so reruns are byte-identical.

Output schemas:

* ``error_vs_nc.csv``: distribution,n_controlled,e_avg,frac_below
* ``error_cdf.csv``: distribution,n_controlled,error,cdf
* ``count_pmf.csv``: d,count,prob
* ``bands.csv``: d,expected_mean,mean,sd,lo_1sd,hi_1sd,lo_2sd,hi_2sd,within_2sd,q025,q975
* ``histogram.csv``: lifespan_days,weight; ``cdf.csv``: lifespan_days,cdf
* ``raw_histogram.csv``: count,weight; ``raw_cdf.csv``: count,cdf
* ``reported.csv``: party,dc,onion_hash,count
* ``honeypots.csv``: service,owner,dc,party,expected,reported (``audit`` needs no owner)
* ``pbb.jsonl``: bulletin board, one entry per line
* ``report.json``: audit report plus run summary
"""

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from .aggregation_protocol import (
    CHEATS,
    ProtocolAbort,
    ProtocolRun,
    make_parties,
    plaintext_counts,
    run_mpc,
)
from .audit import METRICS, AuditConfig, audit_report, honeypot_expected, honeypot_schedule, party_histograms, write_report
from .encoding import int_to_hex
from .estimation import (
    SWEEP_N_CONTROLLED,
    CountPmfTable,
    Histogram,
    build_pmf_table,
    count_distribution,
    coverage_sweep,
    expected_count_mean,
    mean_extrapolate,
    weighted_extrapolate,
)
from .group_crypto import GROUPS, get_group
from .pbb import BulletinBoard
from .population_sim import HiddenService, LifespanDist, StudyConfig, sample_population
from .ring_model import IDENTIFIER_BYTES, random_ring
from .shuffle_proof import DEFAULT_ROUNDS

SWEEP_DISTRIBUTIONS = ("normal:30,15", "uniform:1,180", "exponential:0.05")
ERROR_GRID = np.round(np.arange(0, 2.0001, 0.05), 2)

# protocol demo defaults: small enough to finish in a few minutes on the 2048-bit group
MPC_DEFAULTS = dict(n_relays=60, n_controlled=0, n_services=100, duration=30, lifespan_dist="uniform:1,30", double_count=True)


class CliError(Exception):
    pass


def _ints(text):
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _cheat(text):
    party, sep, how = text.partition("=")
    if not sep or not party.isdigit() or how not in CHEATS:
        raise argparse.ArgumentTypeError(f"expected PARTY=HOW with HOW in {CHEATS}, got {text!r}")
    return int(party), how


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _study_config(args, defaults=None) -> StudyConfig:
    data = dict(defaults or {})
    if args.config:
        if not Path(args.config).exists():
            raise CliError(f"config file {args.config} does not exist")
        data.update(StudyConfig.load(args.config).to_mapping())
    for key in ("n_relays", "n_controlled", "n_services", "duration", "lifespan_dist"):
        value = getattr(args, key, None)
        if value is not None:
            data[key] = value
    if getattr(args, "double_count", None) is not None:
        data["double_count"] = args.double_count
    data["seed"] = args.seed
    return StudyConfig.from_mapping(data)


def _write_rows(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


def _fmt(x):
    return repr(float(x))


# --- commands ------------------------------------------------------------------------


def cmd_coverage_sweep(args):
    cfg = _study_config(args)
    ncs = args.n_controlled_values or list(SWEEP_N_CONTROLLED)
    if max(ncs) > cfg.n_relays or min(ncs) < 1:
        raise CliError(f"n_controlled values must lie in [1, {cfg.n_relays}]")
    dists = args.distributions or ([str(cfg.lifespan_dist)] if args.config or args.lifespan_dist else list(SWEEP_DISTRIBUTIONS))
    rows, cdf_rows = [], []
    for text in dists:
        dist = LifespanDist.parse(text)
        points = coverage_sweep(cfg.replace(lifespan_dist=dist), ncs, threshold=args.threshold, keep_errors=True)
        for pt in points:
            rows.append([str(dist), pt.n_controlled, _fmt(pt.e_avg), _fmt(pt.frac_below)])
            errs = np.sort(pt.errors)
            for e in ERROR_GRID:
                cdf_rows.append([str(dist), pt.n_controlled, f"{e:.2f}",
                                 _fmt(np.searchsorted(errs, e, side="right") / len(errs))])
            print(f"{dist}  N_c={pt.n_controlled:4d}  E_avg={pt.e_avg:.4f}  frac<{args.threshold}={pt.frac_below:.3f}")
    out = _out_dir(args)
    _write_rows(out / "error_vs_nc.csv", ["distribution", "n_controlled", "e_avg", "frac_below"], rows)
    _write_rows(out / "error_cdf.csv", ["distribution", "n_controlled", "error", "cdf"], cdf_rows)
    return 0


def cmd_expected_dist(args):
    if args.n_controlled > args.n_relays:
        raise CliError("n_controlled exceeds n_relays")
    if args.runs < 1:
        raise CliError("runs must be at least 1")
    double = not args.single_count
    pmfs, bands = {}, []
    for d in args.lifespans:
        # one independent stream per lifespan
        rng = np.random.default_rng([args.seed, d])
        pmf = count_distribution(d, args.n_controlled, args.n_relays, args.runs, rng, double)
        pmfs[d] = pmf
        mu, sd = pmf.mean(), pmf.std()
        bands.append([
            d, _fmt(expected_count_mean(d, args.n_controlled, args.n_relays, double)), _fmt(mu), _fmt(sd),
            _fmt(mu - sd), _fmt(mu + sd), _fmt(mu - 2 * sd), _fmt(mu + 2 * sd),
            _fmt(pmf.mass_within(mu - 2 * sd, mu + 2 * sd)), pmf.quantile(0.025), pmf.quantile(0.975),
        ])
        print(f"d={d:3d}  mean={mu:.3f}  sd={sd:.3f}  within 2sd={pmf.mass_within(mu - 2 * sd, mu + 2 * sd):.3f}  mode={pmf.mode()}")
    out = _out_dir(args)
    CountPmfTable(pmfs, args.runs).to_csv(out / "count_pmf.csv")
    _write_rows(out / "bands.csv", ["d", "expected_mean", "mean", "sd", "lo_1sd", "hi_1sd", "lo_2sd", "hi_2sd",
                                    "within_2sd", "q025", "q975"], bands)
    return 0


def _read_counts(path):
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        col = next((c for c in ("count_total", "count") if c in (reader.fieldnames or [])), None)
        if col is None:
            raise CliError(f"{path} needs a count_total or count column")
        return [int(row[col]) for row in reader]


def _write_histograms(out, counts, table, normalize=True):
    raw = Histogram.from_values(counts)
    raw.to_csv(out / "raw_histogram.csv", key_name="count")
    raw.cdf_to_csv(out / "raw_cdf.csv", key_name="count")
    hist = weighted_extrapolate([c for c in counts if c > 0], table, normalize)
    hist.to_csv(out / "histogram.csv")
    hist.cdf_to_csv(out / "cdf.csv")
    return hist


def cmd_estimate(args):
    counts = _read_counts(args.counts)
    double = not args.single_count
    if args.table:
        table = CountPmfTable.from_csv(args.table)
    else:
        if args.seed is None:
            raise CliError("--seed is required when the pmf table is simulated")
        table = build_pmf_table(args.duration, args.n_controlled, args.n_relays, args.runs,
                                np.random.default_rng(args.seed), double)
    out = _out_dir(args)
    hist = _write_histograms(out, counts, table, normalize=not args.unnormalized)
    base = mean_extrapolate(counts, args.n_controlled, args.n_relays, double)
    base.to_csv(out / "baseline_histogram.csv")
    base.cdf_to_csv(out / "baseline_cdf.csv")
    summary = {"observed": len(counts), "zero_counts": sum(1 for c in counts if c == 0),
               "unattributed": hist.unattributed, "mass": hist.mass}
    (out / "summary.json").write_text(json.dumps(summary, indent=1, sort_keys=True) + "\n")
    print(f"{len(counts)} counts -> mass {hist.mass:.3f}, unattributed {hist.unattributed:.0f}")
    return 0


def cmd_mpc_keygen(args):
    params = get_group(args.group)
    rng = np.random.default_rng(args.seed)
    out = _out_dir(args)
    parties = make_parties(params, [[] for _ in range(args.parties)], rng)
    run = ProtocolRun(params, parties, BulletinBoard(out / "pbb.jsonl"), rng)
    try:
        A = run.keygen()
    except ProtocolAbort as exc:
        print(f"abort: {exc}", file=sys.stderr)
        return 3
    (out / "group.json").write_text(params.to_json() + "\n")
    (out / "keygen.json").write_text(json.dumps({
        "joint_key": int_to_hex(A),
        "public_shares": {str(p.party_id): int_to_hex(p.key.A) for p in parties},
        # simulation only: in a deployment every share stays with its party
        "secret_shares": {str(p.party_id): int_to_hex(p.key.a) for p in parties},
    }, indent=1, sort_keys=True) + "\n")
    print(f"{args.parties} parties, joint key {int_to_hex(A)[:16]}...")
    return 0


def _honeypots(n_per_party, n_parties, duration, first_id, rng):
    """Private services run by each party, online for the whole study."""
    pots, owner = [], {}
    for party in range(1, n_parties + 1):
        for _ in range(n_per_party):
            s = HiddenService(first_id + len(pots), rng.bytes(IDENTIFIER_BYTES), int(rng.integers(256)), 0, duration)
            pots.append(s)
            owner[s.service_id] = party
    return pots, owner


def cmd_mpc_run(args):
    if args.parties < 1 or args.dcs_per_party < 1:
        raise CliError("need at least one party and one DC per party")
    cheats = dict(args.cheat_party or [])
    bad = [p for p in cheats if not 1 <= p <= args.parties]
    if bad:
        raise CliError(f"--cheat-party names unknown party {bad[0]}")
    cfg = _study_config(args, MPC_DEFAULTS)
    n_dcs = args.parties * args.dcs_per_party
    if n_dcs > cfg.n_relays:
        raise CliError(f"{n_dcs} DCs do not fit on {cfg.n_relays} relays")
    params = get_group(args.group)
    rng = np.random.default_rng(args.seed)
    ring = random_ring(cfg.n_relays, 0, rng)
    chosen = [ring.relay_ids[i] for i in rng.choice(len(ring), size=n_dcs, replace=False)]
    dc_relays = [chosen[i * args.dcs_per_party:(i + 1) * args.dcs_per_party] for i in range(args.parties)]
    ring = ring.with_controlled(chosen)
    population = sample_population(cfg.replace(n_controlled=n_dcs), rng)
    pots, owner = _honeypots(args.honeypots, args.parties, cfg.duration, cfg.n_services, rng)
    population += pots

    out = _out_dir(args)
    try:
        result = run_mpc(params, population, ring, dc_relays, cfg.duration, rng, args.rounds,
                         cfg.double_count, cheats, pbb_path=out / "pbb.jsonl")
    except ValueError as exc:
        raise CliError(str(exc)) from None
    if result.aborted is not None:
        print(f"abort: {result.aborted}", file=sys.stderr)
        return 3

    table = build_pmf_table(cfg.duration, n_dcs, cfg.n_relays, args.pmf_runs, rng, cfg.double_count)
    _write_histograms(out, result.counts, table)

    reported_rows = []
    for dc_id in sorted(result.reported):
        for h, c in sorted(result.reported[dc_id].items()):
            reported_rows.append([result.dc_party[dc_id], dc_id, h.hex(), c])
    _write_rows(out / "reported.csv", ["party", "dc", "onion_hash", "count"], reported_rows)

    dcs = [(f"p{i}-dc{j}", i, rid) for i, relays in enumerate(dc_relays, start=1) for j, rid in enumerate(relays)]
    pot_rows = []
    for s in pots:
        schedule = honeypot_schedule(s, ring, cfg.duration, cfg.double_count)
        for dc_id, party, rid in dcs:
            expected = honeypot_expected(schedule, [rid])
            reported = result.reported.get(dc_id, {}).get(s.onion_hash, 0)
            if expected or reported:
                pot_rows.append({"service": s.service_id, "owner": owner[s.service_id], "dc": dc_id,
                                 "party": party, "expected": expected, "reported": reported})
    _write_rows(out / "honeypots.csv", ["service", "owner", "dc", "party", "expected", "reported"],
                [[r[k] for k in ("service", "owner", "dc", "party", "expected", "reported")] for r in pot_rows])

    config = AuditConfig(delta=args.delta, metric=args.metric, outlier_factor=args.outlier_factor,
                         min_distance=args.min_distance)
    histograms = party_histograms(result.reported_by_party())
    report = audit_report(histograms, config, pot_rows) if histograms else {"honeypots": pot_rows}
    oracle = plaintext_counts(population, ring, dc_relays, cfg.duration, cfg.double_count)
    report["run"] = {
        "study": cfg.replace(n_controlled=n_dcs).to_mapping(),
        "group": args.group,
        "parties": args.parties,
        "dcs_per_party": args.dcs_per_party,
        "rounds": args.rounds,
        "cheats": {str(k): v for k, v in sorted(cheats.items())},
        "decrypted": len(result.counts),
        "flagged": result.flagged,
        "oracle_match": sorted(result.counts) == sorted(oracle),
        "pbb_entries": len(result.pbb.entries),
    }
    write_report(out / "report.json", report)
    cheated = sorted({r["party"] for r in report.get("honeypots", []) if r.get("verdict") == "cheated"})
    print(f"decrypted {len(result.counts)} counts ({len(result.flagged)} flagged); "
          f"oracle match: {report['run']['oracle_match']}; outlier: {report.get('outlier')}; "
          f"honeypot cheaters: {cheated or 'none'}")
    return 0


def _read_reported(path):
    reported: dict = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            party = int(row["party"])
            svc = row.get("onion_hash") or row["service"]
            reported.setdefault(party, {})
            reported[party][svc] = reported[party].get(svc, 0) + int(row["count"])
    return reported


def cmd_audit(args):
    reported = _read_reported(args.reported)
    if len(reported) < 3:
        raise CliError("the outlier test needs at least three parties")
    pots = []
    if args.honeypots:
        with open(args.honeypots, newline="") as fh:
            for row in csv.DictReader(fh):
                pots.append({k: (v if k == "dc" else int(v)) for k, v in row.items()})
    config = AuditConfig(delta=args.delta, smoothing=args.smoothing, metric=args.metric,
                         outlier_factor=args.outlier_factor, min_distance=args.min_distance)
    report = audit_report(party_histograms(reported), config, pots)
    out = _out_dir(args)
    write_report(out / "report.json", report)
    print(f"outlier: {report['outlier']}")
    return 0


# --- parser --------------------------------------------------------------------------


def _study_flags(p, with_controlled=True):
    p.add_argument("--config", help="StudyConfig as JSON or key=value lines")
    p.add_argument("--n-relays", dest="n_relays", type=int)
    if with_controlled:
        p.add_argument("--n-controlled", dest="n_controlled", type=int)
    p.add_argument("--n-services", dest="n_services", type=int)
    p.add_argument("--duration", type=int)
    p.add_argument("--lifespan-dist", dest="lifespan_dist", help="e.g. normal:30,15, uniform:1,180, exponential:0.05")
    g = p.add_mutually_exclusive_group()
    g.add_argument("--double-count", dest="double_count", action="store_true", default=None,
                   help="count both time-periods touched by each epoch")
    g.add_argument("--single-count", dest="double_count", action="store_false")


def _audit_flags(p):
    p.add_argument("--delta", type=int, default=0, help="tolerated count difference")
    p.add_argument("--metric", choices=METRICS, default="chi2")
    p.add_argument("--outlier-factor", dest="outlier_factor", type=float, default=3.0)
    p.add_argument("--min-distance", dest="min_distance", type=float,
                   help="smallest nearest-party distance that can flag an outlier (default per metric)")


def build_parser():
    parser = argparse.ArgumentParser(prog="hsdir-longevity", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("coverage-sweep", help="estimation error against number of controlled relays")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    _study_flags(p, with_controlled=False)
    p.add_argument("--distributions", nargs="+", help=f"lifespan distributions (default: {' '.join(SWEEP_DISTRIBUTIONS)})")
    p.add_argument("--n-controlled-values", dest="n_controlled_values", type=_ints)
    p.add_argument("--threshold", type=float, default=0.2)
    p.set_defaults(func=cmd_coverage_sweep)

    p = sub.add_parser("expected-dist", help="Monte-Carlo count distribution per lifespan")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--lifespans", type=_ints, default=[10, 30, 50, 90])
    p.add_argument("--runs", type=int, default=10000)
    p.add_argument("--n-controlled", dest="n_controlled", type=int, default=80)
    p.add_argument("--n-relays", dest="n_relays", type=int, default=3000)
    p.add_argument("--single-count", action="store_true")
    p.set_defaults(func=cmd_expected_dist)

    p = sub.add_parser("estimate", help="lifespan histogram from observed counts")
    p.add_argument("--counts", required=True, help="CSV with a count_total or count column")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--table", help="count_pmf.csv to use instead of simulating one")
    p.add_argument("--n-controlled", dest="n_controlled", type=int, default=80)
    p.add_argument("--n-relays", dest="n_relays", type=int, default=3000)
    p.add_argument("--duration", type=int, default=180)
    p.add_argument("--runs", type=int, default=10000)
    p.add_argument("--single-count", action="store_true")
    p.add_argument("--unnormalized", action="store_true", help="add raw likelihoods instead of posteriors")
    p.set_defaults(func=cmd_estimate)

    mpc = sub.add_parser("mpc", help="multi-party aggregation protocol").add_subparsers(dest="mpc_command", required=True)
    p = mpc.add_parser("keygen", help="distributed key generation only")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--parties", type=int, default=3)
    p.add_argument("--group", choices=sorted(GROUPS), default="mod2048")
    p.set_defaults(func=cmd_mpc_keygen)

    p = mpc.add_parser("run", help="full protocol over a simulated study")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--parties", type=int, default=3)
    p.add_argument("--dcs-per-party", dest="dcs_per_party", type=int, default=4)
    p.add_argument("--group", choices=sorted(GROUPS), default="mod2048")
    p.add_argument("--rounds", type=int, default=DEFAULT_ROUNDS, help="shuffle proof rounds")
    p.add_argument("--cheat-party", dest="cheat_party", type=_cheat, action="append",
                   help=f"PARTY=HOW with HOW in {', '.join(CHEATS)}; repeatable")
    p.add_argument("--honeypots", type=int, default=1, help="private services per party")
    p.add_argument("--pmf-runs", dest="pmf_runs", type=int, default=10000)
    _study_flags(p, with_controlled=False)
    _audit_flags(p)
    p.set_defaults(func=cmd_mpc_run)

    p = sub.add_parser("audit", help="cross-party and honeypot checks on reported counts")
    p.add_argument("--reported", required=True, help="CSV with party, onion_hash (or service) and count")
    p.add_argument("--honeypots", help="CSV with service, dc, party, expected, reported")
    p.add_argument("--out", required=True)
    p.add_argument("--smoothing", type=float, default=1e-6)
    _audit_flags(p)
    p.set_defaults(func=cmd_audit)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (CliError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
