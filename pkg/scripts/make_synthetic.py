"""Write a seeded synthetic dataset (and optional embedding file) to disk.

Usage:
    python scripts/make_synthetic.py demo out_dir [--users 30] [--items 8] [--seed 0]
    python scripts/make_synthetic.py clustered out_dir [--seed 0]

The demo flavor contains only the interaction table; the clustered flavor
also exports its ground-truth embeddings so the selection and training
stages can run on geometry with known structure.
"""

import argparse
from pathlib import Path

from dydq.data import save_dataset
from dydq.embeddings import export_embeddings
from dydq.synthetic import clustered_instance, demo_dataset


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("flavor", choices=["demo", "clustered"])
    parser.add_argument("out_dir", type=Path)
    parser.add_argument("--users", type=int, default=30)
    parser.add_argument("--items", type=int, default=8)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    if args.flavor == "demo":
        d = demo_dataset(n_users=args.users, n_items=args.items, seed=args.seed)
        tsv, keys = save_dataset(d, args.out_dir)
        print(f"wrote {tsv} and {keys}: {d.n_users} users, {d.n_items} items, {d.n_images} images")
        return

    d, store, styles = clustered_instance(seed=args.seed)
    tsv, keys = save_dataset(d, args.out_dir)
    emb = Path(args.out_dir) / "embeddings.bin"
    export_embeddings(store, emb)
    cold = sum(1 for u in range(d.n_users) if len(d.images_by_user[u]) <= 3)
    print(f"wrote {tsv}, {keys} and {emb}")
    print(f"{d.n_users} users ({cold} cold, 2 styles), {d.n_items} items, {d.n_images} images")


if __name__ == "__main__":
    main()
