"""Run every model x technique cell on one dataset and print the result table.

Usage:
    python scripts/run_matrix.py dataset.tsv out_dir [--seed 0] [--epochs 30]
        [--name gijon] [--n 10] [--q 0.1]

--name selects the published-reference column when the dataset matches one
of the catalogued collections; synthetic data simply shows "-".  The matrix
always uses the built-in embedder because the augmentation cells must embed
the images they synthesize.
"""

import argparse

from dydq.pipeline import RunConfig, render_table, run_matrix


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("dataset")
    parser.add_argument("out_dir")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--epochs", type=int, default=30)
    parser.add_argument("--name", default="")
    parser.add_argument("--n", type=int, default=10)
    parser.add_argument("--q", type=float, default=0.10)
    args = parser.parse_args()

    cfg = RunConfig(
        dataset_path=args.dataset,
        out_dir=args.out_dir,
        dataset_name=args.name,
        seed=args.seed,
        epochs_max=args.epochs,
        n=args.n,
        q=args.q,
    )
    combined = run_matrix(cfg)
    print(render_table(combined["rows"]), end="")
    print(f"\nartifacts in {args.out_dir}")


if __name__ == "__main__":
    main()
