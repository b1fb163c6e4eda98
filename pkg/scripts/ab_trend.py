"""A/B the prototype-filtered negative sampler against plain random sampling.

Runs the cold-start clustered population over several seeds with dot_bpr,
once with random negatives and once with the filtered reliable-negative
set, and reports per-seed test NDCG@10 plus medians.  This is the same
protocol the acceptance suite pins down; here it is exposed for playing
with seeds, q, and the instance geometry.

Usage:
    python scripts/ab_trend.py [--seeds 5] [--q 0.1] [--epochs 40]
"""

import argparse
import statistics
import time

from dydq.data import partition_leave_one_out
from dydq.evaluation import build_test_cases, evaluate
from dydq.models import TrainConfig, make_score_fn, train
from dydq.pu import select_reliable_negatives
from dydq.synthetic import clustered_instance


def run_cell(seed, filtered, q, epochs):
    d, store, _ = clustered_instance(seed=seed)
    split = partition_leave_one_out(d, mode="one_out_test", seed=seed, val_user_fraction=0.10)
    rn = None
    if filtered:
        rn = select_reliable_negatives(d, split, store, q=q, candidate_cap=None, seed=seed)
    cfg = TrainConfig(
        objective="bpr",
        head="dot",
        neg_source="reliable" if filtered else "random",
        d=16,
        lr=0.05,
        epochs_max=epochs,
        batch=16,
        seed=seed,
    )
    model = train(d, split, store, rn, cfg)
    cases, degenerate = build_test_cases(d, split)
    report = evaluate(cases, make_score_fn(model.params, store), degenerate_cases=degenerate)
    return report.ndcg_at_10


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--seeds", type=int, default=5)
    parser.add_argument("--q", type=float, default=0.10)
    parser.add_argument("--epochs", type=int, default=40)
    args = parser.parse_args()

    t0 = time.perf_counter()
    print(f"{'seed':>4} {'random':>8} {'filtered':>9} {'delta':>8}")
    plain, filtered = [], []
    for seed in range(args.seeds):
        a = run_cell(seed, False, args.q, args.epochs)
        b = run_cell(seed, True, args.q, args.epochs)
        plain.append(a)
        filtered.append(b)
        print(f"{seed:>4} {a:>8.4f} {b:>9.4f} {b - a:>+8.4f}")
    med_a, med_b = statistics.median(plain), statistics.median(filtered)
    print(f"\nmedians: random {med_a:.4f}  filtered {med_b:.4f}  delta {med_b - med_a:+.4f}")
    print(f"({time.perf_counter() - t0:.0f}s)")


if __name__ == "__main__":
    main()
