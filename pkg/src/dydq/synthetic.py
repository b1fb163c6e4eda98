"""Seeded synthetic instances for experiments and the test suite.

Three builders:

- demo_dataset: a small review dataset with enough texture (varying user
  activity, multi-image items, full review coverage) to drive every
  pipeline stage end to end.
- clustered_instance: two orthogonal style populations whose embeddings sit
  on low-dimensional per-style manifolds, with a configurable cold-start
  share.  Random negative sampling on it draws same-style images as
  false negatives; prototype-filtered sampling removes them.
- separable_instance: the minimal two-population set where each item holds
  exactly one image per style, so a correctly separated scorer reaches
  AUC 1.0 on held-out cases with no tie obstructions.

All builders derive everything from an explicit seed.
"""

from __future__ import annotations

import numpy as np

from .data import Dataset, Interaction, child_seed
from .embeddings import EmbeddingStore
from .images import PixelImage, value_noise_image

REVIEW_PHRASES = (
    "Great tapas and friendly staff",
    "Cozy corner spot near the old market",
    "Loved the grilled octopus and the house wine",
    "Service was slow but the stew made up for it",
    "Best dessert menu in the neighborhood",
    "Generous portions at a fair price",
    "The terrace view alone is worth the visit",
    "Fresh fish every single day",
    "A bit noisy at lunch yet the rice dishes shine",
    "Charming staff and an excellent cheese board",
)


def _dataset_from_rows(rows: list[tuple[int, int, int, str]], item_type_label: str = "restaurant") -> Dataset:
    n_users = 1 + max(r[0] for r in rows)
    n_items = 1 + max(r[1] for r in rows)
    n_images = 1 + max(r[2] for r in rows)
    return Dataset(
        interactions=[Interaction(user=u, item=i, image=p, review_text=t) for u, i, p, t in rows],
        n_users=n_users,
        n_items=n_items,
        n_images=n_images,
        user_keys=[f"u{i}" for i in range(n_users)],
        item_keys=[f"i{i}" for i in range(n_items)],
        image_keys=[f"p{i}" for i in range(n_images)],
        item_type_label=item_type_label,
    )


def demo_dataset(n_users: int = 30, n_items: int = 8, seed: int = 0) -> Dataset:
    """Users upload 3-8 images each, items collect uploads from many users,
    every interaction carries review text."""
    rng = np.random.default_rng(child_seed(seed, "demo"))
    rows: list[tuple[int, int, int, str]] = []
    image = 0
    for u in range(n_users):
        for j in range(int(rng.integers(3, 9))):
            item = int(rng.integers(n_items)) if image >= n_items else image
            review = REVIEW_PHRASES[int(rng.integers(len(REVIEW_PHRASES)))]
            rows.append((u, item, image, review))
            image += 1
    return _dataset_from_rows(rows)


class ProceduralImageSource:
    """Deterministic pixels for any image id: a smooth value-noise field
    seeded from (source seed, id)."""

    def __init__(self, seed: int = 0, size: int = 64):
        self.seed = seed
        self.size = size

    def __call__(self, image_id: int) -> PixelImage:
        return value_noise_image(child_seed(self.seed, "pix", image_id), self.size)


def clustered_instance(
    n_users: int = 200,
    n_items: int = 40,
    seed: int = 0,
    dim: int = 16,
    cold_fraction: float = 0.6,
    cold_images: tuple[int, int] = (2, 3),
    active_images: tuple[int, int] = (6, 10),
    manifold_width: float = 0.2,
    user_spread: float = 0.2,
    jitter: float = 0.03,
) -> tuple[Dataset, EmbeddingStore, dict[int, int]]:
    """Two-style population where every user owns a local image cluster.

    Style centers are the first two coordinate axes.  Each style spans a
    two-axis manifold; a user sits at a fixed manifold position (uniform in
    ±manifold_width) and their images scatter around it (±user_spread, plus
    isotropic jitter).  With user_spread comparable to manifold_width, the
    most-similar uniformly drawn "negatives" for a user sit inside their own
    neighborhood — exactly the draws a prototype filter prunes — while
    other-style and far same-style images stay admissible.  A cold_fraction share of users uploads only
    cold_images images.  Returns the dataset, a dim-wide store over all
    images, and the user->style map.
    """
    if dim < 6:
        raise ValueError("need at least 6 dimensions for two styles with 2-axis manifolds")
    rng = np.random.default_rng(child_seed(seed, "clustered"))
    styles = np.array([u % 2 for u in range(n_users)])
    rng.shuffle(styles)
    n_cold = int(round(cold_fraction * n_users))
    cold = np.zeros(n_users, dtype=bool)
    cold[rng.choice(n_users, size=n_cold, replace=False)] = True

    rows: list[tuple[int, int, int, str]] = []
    store = EmbeddingStore(dim=dim)
    image = 0
    for u in range(n_users):
        lo, hi = cold_images if cold[u] else active_images
        count = int(rng.integers(lo, hi + 1))
        style = int(styles[u])
        axes = (2, 3) if style == 0 else (4, 5)
        center = np.zeros(dim)
        center[style] = 1.0
        for axis in axes:
            center[axis] = rng.uniform(-manifold_width, manifold_width)
        for _ in range(count):
            item = int(rng.integers(n_items)) if image >= n_items else image
            vec = center.copy()
            for axis in axes:
                vec[axis] += rng.uniform(-user_spread, user_spread)
            vec += jitter * rng.standard_normal(dim)
            vec /= np.linalg.norm(vec)
            store.add(image, vec.astype(np.float32))
            review = REVIEW_PHRASES[int(rng.integers(len(REVIEW_PHRASES)))]
            rows.append((u, item, image, review))
            image += 1
    return _dataset_from_rows(rows), store, {u: int(styles[u]) for u in range(n_users)}


def separable_instance(
    n_users: int = 8,
    n_items: int = 16,
    seed: int = 0,
    dim: int = 8,
    jitter: float = 0.02,
) -> tuple[Dataset, EmbeddingStore, dict[int, int]]:
    """Every item holds exactly two images, one per style, uploaded by
    alternating users; embeddings sit on two orthogonal axes plus a small
    jitter.  Any scorer that separates the styles per user ranks each
    held-out positive above its single opposite-style rival.
    """
    if n_users % 2 != 0:
        raise ValueError("need an even user count, half per style")
    rng = np.random.default_rng(child_seed(seed, "separable"))
    half = n_users // 2
    style0_users = list(range(0, n_users, 2))
    style1_users = list(range(1, n_users, 2))

    rows: list[tuple[int, int, int, str]] = []
    store = EmbeddingStore(dim=dim)
    image = 0
    for item in range(n_items):
        for style, uploader in ((0, style0_users[item % half]), (1, style1_users[item % half])):
            vec = np.zeros(dim)
            vec[style] = 1.0
            vec += jitter * rng.standard_normal(dim)
            vec /= np.linalg.norm(vec)
            store.add(image, vec.astype(np.float32))
            review = REVIEW_PHRASES[(item + style) % len(REVIEW_PHRASES)]
            rows.append((uploader, item, image, review))
            image += 1
    styles = {u: u % 2 for u in range(n_users)}
    return _dataset_from_rows(rows), store, styles
