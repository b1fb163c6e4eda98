import re

from dydq.references import (
    DATASET_STATS,
    DATASETS,
    MODELS,
    PUBLISHED_COSTS,
    PUBLISHED_METRICS,
    TECHNIQUES,
    reference_cost,
    reference_result,
)


def test_catalog_shape():
    assert DATASETS == ("gijon", "barcelona", "madrid")
    assert MODELS == ("mlp_bce", "dot_bce", "dot_bpr")
    assert TECHNIQUES == ("none", "pu", "tda", "genda")
    cells = [
        PUBLISHED_METRICS[d][m][t] for d in DATASETS for m in MODELS for t in TECHNIQUES
    ]
    assert len(cells) == 36


def test_metric_values_in_range():
    for d in DATASETS:
        for m in MODELS:
            for t in TECHNIQUES:
                recall, ndcg, auc = PUBLISHED_METRICS[d][m][t]
                for v in (recall, ndcg, auc):
                    assert 0.0 <= v <= 1.0, (d, m, t)
                assert ndcg <= recall  # single-relevant ranking metric ordering


def test_dataset_stats_consistent():
    for name, stats in DATASET_STATS.items():
        assert name in DATASETS
        assert stats["users"] > 0 and stats["items"] > 0 and stats["images"] > 0
        ratio = stats["images"] / stats["users"]
        assert abs(ratio - stats["images_per_user"]) < 0.01


def test_reference_result_lookup():
    row = reference_result("gijon", "dot_bpr", "pu")
    assert row == {"recall_at_10": 0.531, "ndcg_at_10": 0.299, "auc": 0.731, "source": "paper"}
    assert reference_result("demo", "dot_bpr", "pu") is None
    assert reference_result("gijon", "dot_bpr", "unknown") is None
    assert reference_result("gijon", "other_model", "pu") is None


def test_reference_cost_lookup():
    for model in MODELS:
        for technique in TECHNIQUES:
            cost = reference_cost(model, technique)
            assert cost is not None
            assert cost["source"] == "paper"
            assert cost["seconds"] > 0
            assert cost["emissions_g"] > 0
    assert reference_cost("dot_bpr", "mystery") is None


def test_cost_time_strings_parse_to_seconds():
    pattern = re.compile(r"^(?:(\d+)h )?(\d+)' (\d+)\"$")
    for model in MODELS:
        for technique in TECHNIQUES:
            row = PUBLISHED_COSTS[model][technique]
            match = pattern.match(row["time"])
            assert match, row["time"]
            h, m, s = (int(g) if g else 0 for g in match.groups())
            assert h * 3600 + m * 60 + s == row["seconds"]
