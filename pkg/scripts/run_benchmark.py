#!/usr/bin/env python3
"""Run the desk-scale comparison: centralised vs federated (random and
pretrained initialization) for both model presets, plus the three
aggregation strategies, and print a summary table."""
from __future__ import annotations

import argparse
import time

from fediron.experiments import (BENCHMARK_FL_OPTIMIZERS, best_recent_f1, build_ton10_benchmark,
                                 final_weighted_f1, run_comparison, run_federated)
from fediron.federation import AggregationConfig


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--scale", type=float, default=0.001)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--rounds", type=int, default=50)
    parser.add_argument("--epochs", type=int, default=2)
    parser.add_argument("--presets", nargs="+", default=["dnn", "dbn"])
    parser.add_argument("--skip-aggregation", action="store_true",
                        help="skip the fedavg/fedprox/fedyogi comparison")
    args = parser.parse_args()

    started = time.perf_counter()
    bench = build_ton10_benchmark(scale=args.scale, seed=args.seed)
    total = sum(c.n_train + c.n_test for c in bench.clients)
    print(f"benchmark: {len(bench.clients)} clients, {total} records, "
          f"residual {bench.residual.n_train}")

    print(f"\n{'preset':<8}{'centralised':>14}{'pretrained FL':>16}{'random FL':>12}{'gap':>8}")
    for preset in args.presets:
        t0 = time.perf_counter()
        result = run_comparison(bench, preset, rounds=args.rounds,
                                local_epochs=args.epochs, seed=args.seed)
        print(f"{preset:<8}{result.central_f1:>14.4f}{result.pretrained_f1:>16.4f}"
              f"{result.random_f1:>12.4f}{result.pretrained_f1 - result.random_f1:>+8.3f}"
              f"   ({time.perf_counter() - t0:.0f}s)")

    if not args.skip_aggregation:
        print(f"\n{'strategy':<10}{'final F1':>10}{'best of last 5':>16}")
        for kind in ("fedavg", "fedprox", "fedyogi"):
            _, history = run_federated(bench, "dnn", AggregationConfig(kind),
                                       rounds=args.rounds, local_epochs=args.epochs,
                                       seed=args.seed,
                                       optimizer=BENCHMARK_FL_OPTIMIZERS["dnn"])
            print(f"{kind:<10}{final_weighted_f1(history):>10.4f}"
                  f"{best_recent_f1(history):>16.4f}")

    print(f"\ntotal {time.perf_counter() - started:.0f}s")


if __name__ == "__main__":
    main()
