"""User-personalized two-step reliable-negative selection.

Step one builds a per-user prototype: the centroid of the user's train-image
embeddings and a nearest-rank percentile threshold over the cosine
similarities of those images to the centroid.  Step two admits candidate
(user, image) pairs whose similarity falls at or below the threshold.

Per-user random streams are derived from the master seed, so results are
independent of processing order and of other users' data.
"""

from __future__ import annotations

import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

from .data import Dataset, Split, child_seed
from .embeddings import EmbeddingStore, cosine
from .errors import DegenerateEmbedding, NoPositives

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class UserPrototype:
    user: int
    centroid: np.ndarray  # float64 mean of train-image embeddings, not re-normalized
    threshold: float
    own_image_count: int


@dataclass
class ReliableNegatives:
    """Admitted (user, image) pairs with their prototype similarities."""

    percentile_q: float
    candidate_cap: int | None
    per_user: dict[int, dict[int, float]] = field(default_factory=dict)
    users_with_empty_rn: int = 0

    def images(self, user: int) -> set[int]:
        return set(self.per_user.get(user, ()))

    @property
    def total_admitted(self) -> int:
        return sum(len(v) for v in self.per_user.values())

    def summary(self) -> dict:
        return {
            "q": self.percentile_q,
            "cap": self.candidate_cap,
            "total_admitted": self.total_admitted,
            "users_with_empty_rn": self.users_with_empty_rn,
        }


def nearest_rank_index(q: float, n: int) -> int:
    """1-based nearest-rank index ceil(q*n) into an ascending-sorted list.

    q is interpreted as the decimal fraction it was written as (denominator
    up to 10^4), so ceil(0.3 * 10) is 3 rather than a float-rounding 4.
    """
    if not (0.0 < q < 1.0):
        raise ValueError(f"percentile q must be in (0, 1), got {q}")
    if n < 1:
        raise ValueError("need at least one sample")
    idx = math.ceil(Fraction(q).limit_denominator(10_000) * n)
    return min(max(idx, 1), n)


def build_prototype(
    user: int, train_images, store: EmbeddingStore, q: float = 0.10
) -> UserPrototype:
    """Centroid plus nearest-rank percentile threshold of own-image similarities.

    The centroid is the exact arithmetic mean (per-dimension fsum / N) of the
    user's train-image embeddings; similarities are cosine(centroid, image).
    """
    images = sorted(train_images)
    if not images:
        raise NoPositives(user)
    vectors = store.matrix(images)
    centroid = np.array(
        [math.fsum(float(v) for v in vectors[:, j]) / len(images) for j in range(store.dim)],
        dtype=np.float64,
    )
    if math.sqrt(math.fsum(float(c) * float(c) for c in centroid)) == 0.0:
        raise DegenerateEmbedding(f"user {user}: centroid is the zero vector")
    sims = sorted(cosine(centroid, vectors[i]) for i in range(len(images)))
    threshold = sims[nearest_rank_index(q, len(images)) - 1]
    return UserPrototype(user=user, centroid=centroid, threshold=threshold, own_image_count=len(images))


def _select_for_user(
    user: int,
    train_images: set[int],
    all_images: np.ndarray,
    own_images: set[int],
    store: EmbeddingStore,
    q: float,
    candidate_cap: int | None,
    seed: int,
) -> dict[int, float]:
    proto = build_prototype(user, train_images, store, q)
    pool = all_images[~np.isin(all_images, sorted(own_images))]
    if pool.size == 0:
        return {}
    if candidate_cap is not None and pool.size > candidate_cap:
        rng = np.random.default_rng(child_seed(seed, "rn", user))
        candidates = np.sort(rng.choice(pool, size=candidate_cap, replace=False))
    else:
        candidates = pool
    admitted: dict[int, float] = {}
    for p in candidates.tolist():
        sim = cosine(proto.centroid, store.get(p))
        if sim <= proto.threshold:
            admitted[p] = sim
    return admitted


def select_reliable_negatives(
    d: Dataset,
    split: Split,
    store: EmbeddingStore,
    q: float = 0.10,
    candidate_cap: int | None = 500,
    seed: int = 0,
    users=None,
    threads: int = 1,
) -> ReliableNegatives:
    """Admit reliable negatives for every user with train images.

    Candidates are drawn uniformly without replacement (up to candidate_cap,
    None meaning a full scan) from the dataset's real images minus the user's
    own image set; an image is admitted when its cosine similarity to the
    user's centroid is at or below the user's threshold.  Users without train
    images are skipped with an empty set and counted.
    """
    train_by_user: dict[int, set[int]] = {}
    for it in split.train:
        train_by_user.setdefault(it.user, set()).add(it.image)
    if users is None:
        users = range(d.n_users)
    users = sorted(users)
    all_images = np.asarray(d.all_images, dtype=np.int64)

    rn = ReliableNegatives(percentile_q=q, candidate_cap=candidate_cap)

    def run(u: int) -> tuple[int, dict[int, float]]:
        train = train_by_user.get(u)
        if not train:
            return u, {}
        own = d.images_by_user.get(u, set())
        return u, _select_for_user(u, train, all_images, own, store, q, candidate_cap, seed)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = dict(pool.map(run, users))
    else:
        results = dict(run(u) for u in users)

    for u in users:
        admitted = results[u]
        rn.per_user[u] = admitted
        if not admitted:
            rn.users_with_empty_rn += 1
            if u not in train_by_user:
                log.debug("user %d has no train images; empty RN set", u)
    return rn


def write_rn_dump(rn: ReliableNegatives, tsv_path: str | Path, summary_path: str | Path):
    rows = ["user_id\timage_id\tsimilarity"]
    for u in sorted(rn.per_user):
        for p in sorted(rn.per_user[u]):
            rows.append(f"{u}\t{p}\t{rn.per_user[u][p]:.9f}")
    Path(tsv_path).write_text("\n".join(rows) + "\n", encoding="utf-8")
    Path(summary_path).write_text(json.dumps(rn.summary(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
