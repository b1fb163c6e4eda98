"""End-to-end experiment orchestration.

A RunConfig describes one cell: dataset, embedding source, data-quality
technique, model, seeds and power model.  run_pipeline executes
ingest -> partition -> technique stage -> train -> eval with the heavy
stages metered, then writes report.json (strictly deterministic given the
config), emissions.csv and projection.csv (wall-clock dependent, kept out
of the report), plus stage artifacts.  run_matrix sweeps all twelve
model x technique cells and emits a combined table.
"""

from __future__ import annotations

import dataclasses
import json
import time
from dataclasses import dataclass, replace
from pathlib import Path

from .data import Dataset, Split, ingest, partition_leave_one_out
from .embeddings import SUPPORTED_BASELINE_DIMS, EmbeddingStore, baseline_embed, import_embeddings
from .errors import ConfigError
from .evaluation import build_test_cases, evaluate
from .genaug import ExternalDirGenerator, StubGenerator, generate_to_threshold, write_prompts
from .metering import Meter, PowerModel, write_emissions_csv, write_projection_csv
from .models import TrainConfig, make_score_fn, save_checkpoint, train
from .pu import select_reliable_negatives, write_rn_dump
from .references import MODELS, TECHNIQUES, reference_cost, reference_result
from .synthetic import ProceduralImageSource
from .transforms import DirectoryImageSource, augment_to_threshold

MODEL_HEADS = {"mlp_bce": ("mlp", "bce"), "dot_bce": ("dot", "bce"), "dot_bpr": ("dot", "bpr")}


@dataclass(frozen=True)
class RunConfig:
    dataset_path: str
    out_dir: str
    technique: str = "none"  # none | pu | tda | genda
    model: str = "dot_bpr"  # mlp_bce | dot_bce | dot_bpr
    dataset_name: str = ""  # reference-table key; defaults to the file stem
    embeddings: str = "baseline"  # "baseline" or a path to an embedding file
    images: str = "procedural"  # "procedural" or a directory of <image_key>.png
    partition_mode: str = "paper_text"
    val_user_fraction: float = 0.10
    seed: int = 0
    n: int = 10
    q: float = 0.10
    candidate_cap: int | None = 500
    threads: int = 1
    image_size: int = 64
    baseline_dim: int = 48
    generator: str = "stub"  # stub | external_dir
    external_dir: str = ""
    epochs_max: int = 30
    lr: float = 0.01
    l2: float = 1e-5
    batch: int = 128
    model_dim: int = 64
    hidden: int = 64
    patience: int = 5
    delta: float = 0.001
    val_metric: str = "ndcg"
    negatives_per_positive: int = 1
    device_watts: float = 50.0
    pue: float = 1.0
    grid_intensity: float = 300.0
    dump_images: bool = False
    item_type_label: str = "restaurant"

    def validate(self):
        if self.technique not in TECHNIQUES:
            raise ConfigError(f"unknown technique {self.technique!r}")
        if self.model not in MODELS:
            raise ConfigError(f"unknown model {self.model!r}")
        if self.partition_mode not in ("paper_text", "one_out_test"):
            raise ConfigError(f"unknown partition mode {self.partition_mode!r}")
        if self.generator not in ("stub", "external_dir"):
            raise ConfigError(f"unknown generator {self.generator!r}")
        if not Path(self.dataset_path).exists():
            raise ConfigError(f"dataset file {self.dataset_path!r} does not exist")
        if self.embeddings != "baseline" and not Path(self.embeddings).exists():
            raise ConfigError(f"embedding file {self.embeddings!r} does not exist")
        if self.images != "procedural" and not Path(self.images).is_dir():
            raise ConfigError(f"image directory {self.images!r} does not exist")
        if self.generator == "external_dir" and not Path(self.external_dir).is_dir():
            raise ConfigError(f"generated-image directory {self.external_dir!r} does not exist")
        if not 0.0 < self.q < 1.0:
            raise ConfigError("percentile q must lie in (0, 1)")
        if not 0.0 <= self.val_user_fraction < 1.0:
            raise ConfigError("validation user fraction must lie in [0, 1)")
        if self.n < 1 or self.threads < 1 or self.image_size < 8:
            raise ConfigError("n >= 1, threads >= 1 and image_size >= 8 required")
        if self.candidate_cap is not None and self.candidate_cap < 1:
            raise ConfigError("candidate cap must be >= 1 or unset")
        if self.baseline_dim not in SUPPORTED_BASELINE_DIMS:
            raise ConfigError(f"baseline dim must be one of {sorted(SUPPORTED_BASELINE_DIMS)}")
        if self.technique in ("tda", "genda") and self.embeddings != "baseline":
            raise ConfigError(
                "augmentation needs the built-in embedder so synthetic images can be embedded; "
                "imported embedding files cover only the original images"
            )

    def power_model(self) -> PowerModel:
        return PowerModel(
            device_watts=self.device_watts, pue=self.pue, grid_intensity=self.grid_intensity
        )

    def train_config(self) -> TrainConfig:
        head, objective = MODEL_HEADS[self.model]
        return TrainConfig(
            objective=objective,
            neg_source="reliable" if self.technique == "pu" else "random",
            head=head,
            d=self.model_dim,
            hidden=self.hidden,
            lr=self.lr,
            l2=self.l2,
            epochs_max=self.epochs_max,
            early_stop_patience=self.patience,
            early_stop_delta=self.delta,
            batch=self.batch,
            seed=self.seed,
            negatives_per_positive=self.negatives_per_positive,
            val_metric=self.val_metric,
        )


def _image_source(cfg: RunConfig, d: Dataset):
    if cfg.images == "procedural":
        return ProceduralImageSource(seed=cfg.seed, size=cfg.image_size)
    return DirectoryImageSource(cfg.images, d)


def build_baseline_store(cfg: RunConfig, d: Dataset) -> EmbeddingStore:
    source = _image_source(cfg, d)
    store = EmbeddingStore(dim=cfg.baseline_dim)
    for image_id in d.all_images:
        store.add(image_id, baseline_embed(source(image_id), dim=cfg.baseline_dim))
    return store


def load_store(cfg: RunConfig, d: Dataset) -> EmbeddingStore:
    if cfg.embeddings == "baseline":
        return build_baseline_store(cfg, d)
    return import_embeddings(cfg.embeddings)


def _technique_stage(cfg: RunConfig, d: Dataset, split: Split, store: EmbeddingStore, meter: Meter, out: Path):
    """Run the configured data-quality technique; returns (possibly
    augmented) split, the per-technique report fragment, and the selected
    negatives when applicable."""
    if cfg.technique == "none":
        return split, {"name": "none"}, None
    if cfg.technique == "pu":
        rn, _rec = meter.measure(
            "pu_select",
            lambda: select_reliable_negatives(
                d, split, store, q=cfg.q, candidate_cap=cfg.candidate_cap, seed=cfg.seed, threads=cfg.threads
            ),
        )
        write_rn_dump(rn, out / "rn_dump.tsv", out / "rn_summary.json")
        return split, {"name": "pu", **rn.summary()}, rn

    embed_fn = lambda img: baseline_embed(img, dim=cfg.baseline_dim)  # noqa: E731
    if cfg.technique == "tda":
        source = _image_source(cfg, d)
        augmented, _rec = meter.measure(
            "augment",
            lambda: augment_to_threshold(
                d, split, store, source, embed_fn, n=cfg.n, seed=cfg.seed,
                out_dir=(out / "aug") if cfg.dump_images else None,
            ),
        )
        new_train = list(split.train) + [a.as_interaction() for a in augmented]
        fragment = {
            "name": "tda",
            "generated": len(augmented),
            "users_filled": len({a.base.user for a in augmented}),
        }
        return replace(split, train=new_train), fragment, None

    # genda
    handle = StubGenerator() if cfg.generator == "stub" else ExternalDirGenerator(cfg.external_dir)
    write_prompts(d, split, out / "prompts.tsv", n=cfg.n, seed=cfg.seed)
    (augmented, summary), _rec = meter.measure(
        "genaug",
        lambda: generate_to_threshold(
            d, split, store, handle, embed_fn, n=cfg.n, seed=cfg.seed, size=cfg.image_size
        ),
    )
    new_train = list(split.train) + [a.as_interaction() for a in augmented]
    return replace(split, train=new_train), {"name": "genda", **summary.as_dict()}, None


def run_pipeline(cfg: RunConfig, clock=time.perf_counter) -> dict:
    """Execute one experiment cell and write its artifacts.

    report.json depends only on the config (wall-clock quantities go to
    the CSV logs), so reruns with the same config are byte-identical.
    """
    cfg.validate()
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    meter = Meter(cfg.power_model(), clock=clock)
    name = cfg.dataset_name or Path(cfg.dataset_path).stem

    d = ingest(cfg.dataset_path, item_type_label=cfg.item_type_label)
    split = partition_leave_one_out(
        d, mode=cfg.partition_mode, seed=cfg.seed, val_user_fraction=cfg.val_user_fraction
    )
    store = load_store(cfg, d)

    split, technique_fragment, rn = _technique_stage(cfg, d, split, store, meter, out)

    model, _train_rec = meter.measure("train", lambda: train(d, split, store, rn, cfg.train_config()))
    save_checkpoint(model, out / "model.ckpt")

    cases, degenerate = build_test_cases(d, split)
    score_fn = make_score_fn(model.params, store)
    metrics, eval_rec = meter.measure(
        "eval", lambda: evaluate(cases, score_fn, degenerate_cases=degenerate)
    )

    report = {
        "config": dataclasses.asdict(cfg),
        "dataset": {"name": name, "users": d.n_users, "items": d.n_items, "images": d.n_images},
        "partition": {
            "mode": cfg.partition_mode,
            "train": len(split.train),
            "validation": len(split.validation),
            "test": len(split.test),
        },
        "technique": technique_fragment,
        "training": {
            "stopped_epoch": model.stopped_epoch,
            "best_epoch": model.best_epoch,
            "epochs": [dataclasses.asdict(e) for e in model.history],
        },
        "metrics": metrics.as_dict(),
        "reference": reference_result(name, cfg.model, cfg.technique),
        "reference_cost": reference_cost(cfg.model, cfg.technique),
    }
    (out / "report.json").write_text(json.dumps(report, sort_keys=True, indent=2) + "\n", encoding="utf-8")

    write_emissions_csv(meter.records, out / "emissions.csv")
    train_rec = next(r for r in meter.records if r.phase == "train")
    per_case_g = eval_rec.emissions_g / metrics.n_cases_total if metrics.n_cases_total else 0.0
    write_projection_csv(train_rec, per_case_g, out / "projection.csv")
    return report


def _format_cell(value) -> str:
    return f"{value:.3f}" if isinstance(value, float) else str(value)


def render_table(rows: list[dict]) -> str:
    """Fixed-width text table of the matrix results with reference values
    alongside (marked by their source, never compared)."""
    header = f"{'model':<10} {'technique':<10} {'recall@10':>10} {'ndcg@10':>10} {'auc':>10}   reference (r/n/a)"
    lines = [header, "-" * len(header)]
    for row in rows:
        m = row["metrics"]
        ref = row["reference"]
        ref_text = (
            f"{ref['recall_at_10']:.3f}/{ref['ndcg_at_10']:.3f}/{ref['auc']:.3f} [{ref['source']}]"
            if ref
            else "-"
        )
        lines.append(
            f"{row['model']:<10} {row['technique']:<10} "
            f"{_format_cell(m['recall_at_10']):>10} {_format_cell(m['ndcg_at_10']):>10} "
            f"{_format_cell(m['auc']):>10}   {ref_text}"
        )
    return "\n".join(lines) + "\n"


def run_matrix(cfg: RunConfig, clock=time.perf_counter) -> dict:
    """All 12 model x technique cells over one dataset; per-cell artifacts
    land in <out>/<model>_<technique>/ and the combined report + table at
    the top level."""
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for model in MODELS:
        for technique in TECHNIQUES:
            cell_cfg = replace(
                cfg, model=model, technique=technique, out_dir=str(out / f"{model}_{technique}")
            )
            cell_report = run_pipeline(cell_cfg, clock=clock)
            rows.append(
                {
                    "model": model,
                    "technique": technique,
                    "metrics": cell_report["metrics"],
                    "technique_summary": cell_report["technique"],
                    "reference": cell_report["reference"],
                    "reference_cost": cell_report["reference_cost"],
                }
            )
    combined = {
        "dataset": cfg.dataset_name or Path(cfg.dataset_path).stem,
        "seed": cfg.seed,
        "rows": rows,
    }
    (out / "report.json").write_text(json.dumps(combined, sort_keys=True, indent=2) + "\n", encoding="utf-8")
    (out / "table.txt").write_text(render_table(rows), encoding="utf-8")
    return combined
