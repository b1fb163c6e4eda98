"""Leave-one-out ranking evaluation: a test case per held-out interaction,
with the other images of the same item as negatives, scored by Recall@10,
NDCG@10 (cases with more than 10 candidate images only) and a per-case
tie-aware AUC averaged over all cases.

Scoring is injected as a callable so any model (or a raw heuristic) can be
evaluated; nothing here depends on the trainer.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

from .data import Dataset, Split


@dataclass(frozen=True)
class TestCase:
    __test__ = False  # not a pytest class, despite the name

    user: int
    item: int
    positive: int
    negatives: tuple[int, ...]


# score_fn(user, image_ids) -> one score per image id
ScoreFn = Callable[[int, Sequence[int]], Sequence[float]]


@dataclass(frozen=True)
class MetricReport:
    recall_at_10: float
    ndcg_at_10: float
    auc: float
    n_cases_total: int
    n_cases_gt10: int
    degenerate_cases: int

    def as_dict(self) -> dict:
        return {
            "recall_at_10": self.recall_at_10,
            "ndcg_at_10": self.ndcg_at_10,
            "auc": self.auc,
            "n_cases_total": self.n_cases_total,
            "n_cases_gt10": self.n_cases_gt10,
            "degenerate_cases": self.degenerate_cases,
        }


def cases_from_interactions(d: Dataset, interactions) -> tuple[list[TestCase], int]:
    """Turn held-out interactions into ranking cases; negatives are every
    other image of the same item (a user's own train images included — they
    were not the held-out upload).  Single-image items yield no usable case
    and are dropped; the count of drops is returned alongside.
    """
    cases: list[TestCase] = []
    degenerate = 0
    for it in interactions:
        others = tuple(p for p in d.images_by_item[it.item] if p != it.image)
        if not others:
            degenerate += 1
            continue
        cases.append(TestCase(user=it.user, item=it.item, positive=it.image, negatives=others))
    return cases, degenerate


def build_test_cases(d: Dataset, split: Split) -> tuple[list[TestCase], int]:
    return cases_from_interactions(d, split.test)


def recall_at_k(rank_of_positive: int, k: int = 10) -> int:
    if rank_of_positive < 1:
        raise ValueError("ranks start at 1")
    return 1 if rank_of_positive <= k else 0


def ndcg_at_k(rank_of_positive: int, k: int = 10) -> float:
    """Single relevant item, so the ideal DCG is 1 and the score collapses
    to the positive's discount factor."""
    if rank_of_positive < 1:
        raise ValueError("ranks start at 1")
    if rank_of_positive > k:
        return 0.0
    return 1.0 / math.log2(rank_of_positive + 1)


def auc_case(score_pos: float, scores_neg: Sequence[float]) -> float:
    """Tie-aware pairwise win rate of the positive against each negative
    (per-case Mann-Whitney)."""
    if not scores_neg:
        raise ValueError("auc needs at least one negative")
    below = sum(1 for s in scores_neg if s < score_pos)
    ties = sum(1 for s in scores_neg if s == score_pos)
    return (below + 0.5 * ties) / len(scores_neg)


def rank_of_positive(score_pos: float, positive: int, negatives: Sequence[int], scores_neg: Sequence[float]) -> int:
    """1-based rank under descending score with ascending-id tie-breaking."""
    rank = 1
    for image, s in zip(negatives, scores_neg):
        if s > score_pos or (s == score_pos and image < positive):
            rank += 1
    return rank


def evaluate(cases: Sequence[TestCase], score_fn: ScoreFn, k: int = 10, degenerate_cases: int = 0) -> MetricReport:
    """Average the per-case metrics.

    Recall/NDCG denominators count only cases with more than 10 candidate
    images; AUC averages over every case.  Sums use math.fsum, so the
    result is independent of case order.
    """
    recalls: list[float] = []
    ndcgs: list[float] = []
    aucs: list[float] = []
    n_gt10 = 0
    for case in cases:
        ids = [case.positive, *case.negatives]
        scores = score_fn(case.user, ids)
        s_pos, s_negs = float(scores[0]), [float(s) for s in scores[1:]]
        rank = rank_of_positive(s_pos, case.positive, case.negatives, s_negs)
        aucs.append(auc_case(s_pos, s_negs))
        if len(ids) > 10:
            n_gt10 += 1
            recalls.append(float(recall_at_k(rank, k)))
            ndcgs.append(ndcg_at_k(rank, k))
    return MetricReport(
        recall_at_10=math.fsum(recalls) / n_gt10 if n_gt10 else 0.0,
        ndcg_at_10=math.fsum(ndcgs) / n_gt10 if n_gt10 else 0.0,
        auc=math.fsum(aucs) / len(aucs) if aucs else 0.0,
        n_cases_total=len(cases),
        n_cases_gt10=n_gt10,
        degenerate_cases=degenerate_cases,
    )
