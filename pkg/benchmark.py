import argparse
import json
import time
import uuid

import numpy as np
import psutil

from cadlag_line.core.convergence import convergence_experiment, ks_two_sample, parse_functional, preset_config, sample_functional
from cadlag_line.core.counterexamples import example1_report, example2_report, lemma_report
from cadlag_line.core.metric import rho_infinity, skorokhod_distance
from cadlag_line.core.paths import constant_path, indicator_path, step_path
from cadlag_line.core.processes import CompoundPoissonSampler
from cadlag_line.utils.db_handler import LedgerDB
from cadlag_line.utils.project_config import SessionConfig
from cadlag_line.utils.seeding import SeedKey


def run_metric_bench(ledger: LedgerDB, run_id: str, seed: int, pairs: int):
    rng = SeedKey(seed, (0,)).generator()
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(pairs):
        a, b = rng.uniform(0.01, 0.99, size=2)
        value = skorokhod_distance(indicator_path(a, 1.0), indicator_path(b, 1.0), 1.0, 1e-9,
                                   want_witness=False).value
        worst = max(worst, abs(value - min(abs(a - b), 1.0)))
    for _ in range(pairs):
        x = step_path([(t, s) for t, s in zip(rng.integers(1, 32, 4) / 32, rng.normal(size=4))], 1.0)
        y = step_path([(t, s) for t, s in zip(rng.integers(1, 32, 4) / 32, rng.normal(size=4))], 1.0)
        skorokhod_distance(x, y, 1.0, 1e-9)
    rho = rho_infinity(constant_path(0.0, 31.0), constant_path(1.0, 31.0), 1e-9)
    elapsed = max(0.0001, time.perf_counter() - t0)
    ledger.metric(run_id, "metric", "indicator_max_error", worst, "abs")
    ledger.metric(run_id, "metric", "rho_infinity_constants", rho, "value")
    ledger.metric(run_id, "metric", "elapsed", elapsed, "sec")
    ledger.metric(run_id, "metric", "throughput", 2 * pairs / elapsed, "distances_per_sec")


def run_examples_bench(ledger: LedgerDB, run_id: str, session: SessionConfig):
    t0 = time.perf_counter()
    first = example1_report(20, 1e-9, session)
    second = example2_report(20, 1e-9, "repaired", session)
    elapsed = max(0.0001, time.perf_counter() - t0)
    ledger.metric(run_id, "examples", "example1_min_composed", min(first.column("rho_composed")), "value")
    ledger.metric(run_id, "examples", "example2_min_composed", min(second.column("rho_composed")), "value")
    ledger.metric(run_id, "examples", "elapsed", elapsed, "sec")
    return f"example1: {first.verdict}; example2: {second.verdict}"


def run_lemmas_bench(ledger: LedgerDB, run_id: str, seed: int, families: int, session: SessionConfig):
    notes = []
    for which in ("lemma1", "lemma2"):
        t0 = time.perf_counter()
        report = lemma_report(which, 20, 0.5, seed, families, 1e-9, session)
        elapsed = max(0.0001, time.perf_counter() - t0)
        ledger.metric(run_id, which, "final_composed", report.rows[-1].rho_composed, "value")
        ledger.metric(run_id, which, "elapsed", elapsed, "sec")
        notes.append(f"{which}: converges={report.converges}")
    return "; ".join(notes)


def run_montecarlo_bench(ledger: LedgerDB, run_id: str, seed: int, samples: int, session: SessionConfig):
    t0 = time.perf_counter()
    for a in (0.5, 1.0):
        config = preset_config("corollary2", a=a, n_values=[100, 10000], samples=samples)
        report = convergence_experiment(config, seed, session)
        for row in report.rows:
            if row.functional == "terminal":
                ledger.metric(run_id, "montecarlo", f"ks_terminal_a{a}_n{row.n}", row.statistic, "ks")

    # Two samples from one sampler should pass the 99% critical value.
    sampler = CompoundPoissonSampler(n=100)
    terminal = parse_functional("terminal")
    key = SeedKey(seed, (7,))
    passes = 0
    replicates = 20
    for r in range(replicates):
        u = sample_functional(sampler, terminal, samples, key.spawn(r, 0), session)
        v = sample_functional(sampler, terminal, samples, key.spawn(r, 1), session)
        passes += ks_two_sample(u, v) <= 1.628 * np.sqrt(2.0 / samples)
    elapsed = max(0.0001, time.perf_counter() - t0)
    ledger.metric(run_id, "montecarlo", "null_pass_rate", passes / replicates, "fraction")
    ledger.metric(run_id, "montecarlo", "elapsed", elapsed, "sec")


def run_full(args):
    session = SessionConfig.load(args.config)
    session.auto_tune()

    ledger = LedgerDB(args.db_path)
    run_id = str(uuid.uuid4())
    ledger.run_start(run_id, args.scenario, cpu_workers=session.cpu_workers)

    proc = psutil.Process()
    rss_start = proc.memory_info().rss / (1024 * 1024)
    ledger.metric(run_id, "system", "rss_start", rss_start, "mb")

    t_all = time.perf_counter()
    notes = []
    try:
        if args.scenario in ("metric", "full"):
            run_metric_bench(ledger, run_id, args.seed, args.pairs)

        if args.scenario in ("examples", "full"):
            notes.append(run_examples_bench(ledger, run_id, session))

        if args.scenario in ("lemmas", "full"):
            notes.append(run_lemmas_bench(ledger, run_id, args.seed, args.families, session))

        if args.scenario in ("montecarlo", "full"):
            run_montecarlo_bench(ledger, run_id, args.seed, args.samples, session)

        total_elapsed = max(0.0001, time.perf_counter() - t_all)
        rss_end = proc.memory_info().rss / (1024 * 1024)
        ledger.metric(run_id, "system", "rss_end", rss_end, "mb")
        ledger.metric(run_id, "system", "elapsed_total", total_elapsed, "sec")

        ledger.run_finish(run_id, "success", notes="; ".join(notes))

        print(json.dumps({
            "run_id": run_id,
            "status": "success",
            "scenario": args.scenario,
            "seed": args.seed,
            "cpu_workers": session.cpu_workers,
            "db_path": args.db_path,
            "metrics": [list(m) for m in ledger.run_metrics(run_id)],
            "notes": notes,
        }, indent=2))
    except Exception as e:
        ledger.run_finish(run_id, "failed", notes=str(e))
        raise


def main():
    parser = argparse.ArgumentParser(description="cadlag-line benchmark runner")
    parser.add_argument("--scenario", choices=["metric", "examples", "lemmas", "montecarlo", "full"], default="full")
    parser.add_argument("--config", default="session.json")
    parser.add_argument("--seed", type=int, default=20240601)
    parser.add_argument("--pairs", type=int, default=100)
    parser.add_argument("--families", type=int, default=50)
    parser.add_argument("--samples", type=int, default=5000)
    parser.add_argument("--db-path", default="benchmarks/cadlag_line_benchmarks.db")
    args = parser.parse_args()

    run_full(args)


if __name__ == "__main__":
    main()
