"""Published reference results for the original city-scale datasets.

Shipped as plain data so reports can display them next to locally computed
metrics.  They are context only: nothing in this package asserts against
them, because they depend on the original image corpora, the semantic
embedder and the measurement hardware, none of which ship here.

Keys: dataset in {gijon, barcelona, madrid}; model in {mlp_bce, dot_bce,
dot_bpr}; technique in {none, pu, tda, genda}.
"""

from __future__ import annotations

DATASETS = ("gijon", "barcelona", "madrid")
MODELS = ("mlp_bce", "dot_bce", "dot_bpr")
TECHNIQUES = ("none", "pu", "tda", "genda")

SOURCE_TAG = "paper"

DATASET_STATS = {
    "gijon": {"users": 5_139, "items": 598, "images": 18_679, "images_per_user": 3.64},
    "barcelona": {"users": 33_537, "items": 5_881, "images": 150_416, "images_per_user": 4.49},
    "madrid": {"users": 43_628, "items": 6_810, "images": 203_905, "images_per_user": 4.67},
}

# (recall_at_10, ndcg_at_10, auc) per dataset/model/technique.
PUBLISHED_METRICS = {
    "gijon": {
        "mlp_bce": {
            "none": (0.492, 0.262, 0.702),
            "pu": (0.517, 0.280, 0.715),
            "tda": (0.532, 0.290, 0.720),
            "genda": (0.527, 0.292, 0.722),
        },
        "dot_bce": {
            "none": (0.486, 0.278, 0.691),
            "pu": (0.490, 0.276, 0.692),
            "tda": (0.495, 0.280, 0.699),
            "genda": (0.492, 0.284, 0.705),
        },
        "dot_bpr": {
            "none": (0.535, 0.306, 0.736),
            "pu": (0.531, 0.299, 0.731),
            "tda": (0.529, 0.301, 0.728),
            "genda": (0.535, 0.306, 0.737),
        },
    },
    "barcelona": {
        "mlp_bce": {
            "none": (0.562, 0.320, 0.726),
            "pu": (0.587, 0.334, 0.747),
            "tda": (0.587, 0.336, 0.745),
            "genda": (0.582, 0.344, 0.750),
        },
        "dot_bce": {
            "none": (0.527, 0.304, 0.696),
            "pu": (0.558, 0.315, 0.702),
            "tda": (0.527, 0.302, 0.688),
            "genda": (0.526, 0.302, 0.693),
        },
        "dot_bpr": {
            "none": (0.584, 0.342, 0.745),
            "pu": (0.586, 0.342, 0.746),
            "tda": (0.584, 0.344, 0.745),
            "genda": (0.583, 0.340, 0.745),
        },
    },
    "madrid": {
        "mlp_bce": {
            "none": (0.522, 0.298, 0.737),
            "pu": (0.524, 0.307, 0.752),
            "tda": (0.531, 0.315, 0.752),
            "genda": (0.534, 0.309, 0.755),
        },
        "dot_bce": {
            "none": (0.490, 0.281, 0.699),
            "pu": (0.499, 0.295, 0.716),
            "tda": (0.500, 0.287, 0.709),
            "genda": (0.512, 0.298, 0.713),
        },
        "dot_bpr": {
            "none": (0.538, 0.316, 0.752),
            "pu": (0.538, 0.314, 0.753),
            "tda": (0.535, 0.312, 0.748),
            "genda": (0.540, 0.315, 0.752),
        },
    },
}

# Training wall time (display string and seconds) and emissions in gCO2e,
# measured on the original hardware; per model/technique.
PUBLISHED_COSTS = {
    "mlp_bce": {
        "none": {"time": "62' 11\"", "seconds": 3731, "emissions_g": 7.96},
        "pu": {"time": "22' 53\"", "seconds": 1373, "emissions_g": 4.86},
        "tda": {"time": "36' 26\"", "seconds": 2186, "emissions_g": 7.84},
        "genda": {"time": "5h 20' 10\"", "seconds": 19210, "emissions_g": 57.58},
    },
    "dot_bce": {
        "none": {"time": "13' 24\"", "seconds": 804, "emissions_g": 2.67},
        "pu": {"time": "8' 32\"", "seconds": 512, "emissions_g": 1.17},
        "tda": {"time": "30' 12\"", "seconds": 1812, "emissions_g": 6.10},
        "genda": {"time": "3h 59' 28\"", "seconds": 14368, "emissions_g": 47.12},
    },
    "dot_bpr": {
        "none": {"time": "12' 33\"", "seconds": 753, "emissions_g": 1.49},
        "pu": {"time": "15' 31\"", "seconds": 931, "emissions_g": 1.73},
        "tda": {"time": "29' 25\"", "seconds": 1765, "emissions_g": 4.92},
        "genda": {"time": "4h 03' 43\"", "seconds": 14623, "emissions_g": 47.71},
    },
}


def reference_result(dataset: str, model: str, technique: str) -> dict | None:
    """Reference (recall, ndcg, auc) for a cell, or None when the dataset
    has no published figures (every locally built dataset)."""
    try:
        recall, ndcg, auc = PUBLISHED_METRICS[dataset.lower()][model][technique]
    except KeyError:
        return None
    return {"recall_at_10": recall, "ndcg_at_10": ndcg, "auc": auc, "source": SOURCE_TAG}


def reference_cost(model: str, technique: str) -> dict | None:
    try:
        cell = PUBLISHED_COSTS[model][technique]
    except KeyError:
        return None
    return {**cell, "source": SOURCE_TAG}
