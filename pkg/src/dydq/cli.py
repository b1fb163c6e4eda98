"""Command-line front end.

Subcommands cover each pipeline stage (ingest, partition, embed, pu-select,
augment, genaug, prompts, train, eval) plus the full experiment matrix and
report rendering.  Configuration comes from an INI-style file of
``key = value`` lines (sections are organizational only); every flag
overrides its config key.  Exit codes: 0 ok, 2 bad configuration, 3 bad
input data, 4 runtime failure.
"""

from __future__ import annotations

import argparse
import configparser
import dataclasses
import json
import sys
from pathlib import Path

from .data import ingest, partition_leave_one_out, save_dataset, save_split
from .embeddings import baseline_embed, export_embeddings, import_embeddings, merge_stores
from .errors import ConfigError, DataError, DydqError
from .evaluation import build_test_cases, evaluate
from .genaug import generate_to_threshold, write_prompts
from .metering import Meter
from .models import load_checkpoint, make_score_fn, save_checkpoint, train
from .pipeline import (
    RunConfig,
    _image_source,
    _technique_stage,
    build_baseline_store,
    load_store,
    render_table,
    run_matrix,
    run_pipeline,
)
from .pu import select_reliable_negatives, write_rn_dump
from .transforms import augment_to_threshold, save_augmented

_CONFIG_FIELDS = {f.name: f for f in dataclasses.fields(RunConfig)}


def _coerce(name: str, raw: str):
    field = _CONFIG_FIELDS[name]
    text = raw.strip()
    if name == "candidate_cap":
        return None if text.lower() in ("none", "") or int(text) <= 0 else int(text)
    if field.type in ("int", int):
        return int(text)
    if field.type in ("float", float):
        return float(text)
    if field.type in ("bool", bool):
        if text.lower() in ("1", "true", "yes", "on"):
            return True
        if text.lower() in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"config key {name}: cannot read {text!r} as a boolean")
    return text


def read_config_file(path: str) -> dict:
    parser = configparser.ConfigParser()
    loaded = parser.read(path)
    if not loaded:
        raise ConfigError(f"config file {path!r} not found")
    values: dict = {}
    sections = [parser.defaults()] + [parser[s] for s in parser.sections()]
    for section in sections:
        for key, raw in section.items():
            if key not in _CONFIG_FIELDS:
                raise ConfigError(f"unknown config key {key!r}")
            try:
                values[key] = _coerce(key, raw)
            except (ValueError, TypeError) as exc:
                raise ConfigError(f"config key {key!r}: {exc}") from None
    return values


# CLI flag destinations that map onto RunConfig fields.
_FLAG_TO_FIELD = {
    "dataset": "dataset_path",
    "out": "out_dir",
    "name": "dataset_name",
    "technique": "technique",
    "model": "model",
    "seed": "seed",
    "n": "n",
    "q": "q",
    "cap": "candidate_cap",
    "threads": "threads",
    "mode": "partition_mode",
    "val_fraction": "val_user_fraction",
    "embeddings": "embeddings",
    "images": "images",
    "dim": "baseline_dim",
    "generator": "generator",
    "external_dir": "external_dir",
    "epochs": "epochs_max",
    "image_size": "image_size",
    "dump_images": "dump_images",
    "item_type": "item_type_label",
    "val_metric": "val_metric",
    "lr": "lr",
    "l2": "l2",
    "batch": "batch",
    "model_dim": "model_dim",
    "hidden": "hidden",
    "watts": "device_watts",
    "pue": "pue",
    "grid": "grid_intensity",
}


def build_run_config(args: argparse.Namespace, require_out: bool = True) -> RunConfig:
    values: dict = {}
    if getattr(args, "config", None):
        values.update(read_config_file(args.config))
    for flag, field in _FLAG_TO_FIELD.items():
        flag_value = getattr(args, flag, None)
        if flag_value is not None:
            values[field] = _coerce(field, str(flag_value)) if isinstance(flag_value, str) else flag_value
    if "dataset_path" not in values:
        raise ConfigError("a dataset path is required (--dataset or config key dataset_path)")
    if "out_dir" not in values:
        if not require_out:
            values["out_dir"] = "."
        else:
            raise ConfigError("an output directory is required (--out or config key out_dir)")
    if "candidate_cap" in values and isinstance(values["candidate_cap"], int) and values["candidate_cap"] <= 0:
        values["candidate_cap"] = None
    try:
        return RunConfig(**values)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


def _add_common(parser: argparse.ArgumentParser):
    parser.add_argument("--config", help="INI config file; flags override its keys")
    parser.add_argument("--dataset", help="interaction TSV file")
    parser.add_argument("--out", help="output directory (or file for single-artifact commands)")
    parser.add_argument("--name", help="dataset name used for reference lookup")
    parser.add_argument("--technique", choices=["none", "pu", "tda", "genda"])
    parser.add_argument("--model", choices=["mlp_bce", "dot_bce", "dot_bpr"])
    parser.add_argument("--seed", type=int)
    parser.add_argument("--n", type=int, help="activity threshold for augmentation")
    parser.add_argument("--q", type=float, help="similarity percentile for negative selection")
    parser.add_argument("--cap", type=int, dest="cap", help="candidate cap per user (<=0 disables)")
    parser.add_argument("--threads", type=int)
    parser.add_argument("--mode", choices=["paper_text", "one_out_test"], help="partition mode")
    parser.add_argument("--val-fraction", type=float, dest="val_fraction")
    parser.add_argument("--embeddings", help='"baseline" or an embedding file to import')
    parser.add_argument("--images", help='"procedural" or a directory of <image_key>.png files')
    parser.add_argument("--dim", type=int, help="built-in embedder output size")
    parser.add_argument("--generator", choices=["stub", "external_dir"])
    parser.add_argument("--external-dir", dest="external_dir", help="directory of pre-generated images")
    parser.add_argument("--epochs", type=int)
    parser.add_argument("--image-size", type=int, dest="image_size")
    parser.add_argument("--dump-images", action="store_const", const=True, dest="dump_images")
    parser.add_argument("--item-type", dest="item_type", help="noun used in generated prompts")
    parser.add_argument("--val-metric", choices=["ndcg", "auc"], dest="val_metric")
    parser.add_argument("--lr", type=float)
    parser.add_argument("--l2", type=float)
    parser.add_argument("--batch", type=int)
    parser.add_argument("--model-dim", type=int, dest="model_dim")
    parser.add_argument("--hidden", type=int)
    parser.add_argument("--watts", type=float)
    parser.add_argument("--pue", type=float)
    parser.add_argument("--grid", type=float, help="grid intensity in gCO2e per kWh")


def _cmd_ingest(args) -> int:
    cfg = build_run_config(args)
    d = ingest(cfg.dataset_path, item_type_label=cfg.item_type_label)
    tsv_path, keys_path = save_dataset(d, cfg.out_dir)
    print(f"ingested {d.n_users} users, {d.n_items} items, {d.n_images} images")
    print(f"wrote {tsv_path} and {keys_path}")
    return 0


def _cmd_partition(args) -> int:
    cfg = build_run_config(args)
    d = ingest(cfg.dataset_path, item_type_label=cfg.item_type_label)
    split = partition_leave_one_out(
        d, mode=cfg.partition_mode, seed=cfg.seed, val_user_fraction=cfg.val_user_fraction
    )
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_split(split, out / "split.tsv")
    print(
        f"train {len(split.train)}, validation {len(split.validation)}, test {len(split.test)}"
        f" ({cfg.partition_mode}, seed {cfg.seed})"
    )
    return 0


def _cmd_embed(args) -> int:
    if args.check:
        store = import_embeddings(args.check)
        print(f"ok: dim={store.dim} count={len(store)}")
        return 0
    if args.merge:
        if not args.out:
            raise ConfigError("--merge needs --out for the combined file")
        stores = [import_embeddings(p) for p in args.merge]
        store = stores[0]
        for other in stores[1:]:
            store = merge_stores(store, other)
        out = Path(args.out)
        if out.is_dir():
            out = out / "embeddings.bin"
        out.parent.mkdir(parents=True, exist_ok=True)
        export_embeddings(store, out)
        print(f"wrote {len(store)} embeddings of dim {store.dim} to {out}")
        return 0
    cfg = build_run_config(args)
    out = Path(cfg.out_dir)
    if out.is_dir():
        out = out / "embeddings.bin"
    d = ingest(cfg.dataset_path, item_type_label=cfg.item_type_label)
    store = build_baseline_store(cfg, d)
    out.parent.mkdir(parents=True, exist_ok=True)
    export_embeddings(store, out)
    print(f"wrote {len(store)} embeddings of dim {store.dim} to {out}")
    return 0


def _cmd_pu_select(args) -> int:
    cfg = build_run_config(args)
    d = ingest(cfg.dataset_path, item_type_label=cfg.item_type_label)
    split = partition_leave_one_out(
        d, mode=cfg.partition_mode, seed=cfg.seed, val_user_fraction=cfg.val_user_fraction
    )
    store = load_store(cfg, d)
    rn = select_reliable_negatives(
        d, split, store, q=cfg.q, candidate_cap=cfg.candidate_cap, seed=cfg.seed, threads=cfg.threads
    )
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_rn_dump(rn, out / "rn_dump.tsv", out / "rn_summary.json")
    print(json.dumps(rn.summary()))
    return 0


def _cmd_augment(args) -> int:
    cfg = build_run_config(args)
    if cfg.embeddings != "baseline":
        raise ConfigError("augmentation requires the built-in embedder (embeddings = baseline)")
    d = ingest(cfg.dataset_path, item_type_label=cfg.item_type_label)
    split = partition_leave_one_out(
        d, mode=cfg.partition_mode, seed=cfg.seed, val_user_fraction=cfg.val_user_fraction
    )
    store = build_baseline_store(cfg, d)
    source = _image_source(cfg, d)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    augmented = augment_to_threshold(
        d, split, store, source, lambda img: baseline_embed(img, dim=cfg.baseline_dim),
        n=cfg.n, seed=cfg.seed, out_dir=(out / "aug") if cfg.dump_images else None,
    )
    save_augmented(augmented, out / "augmented.tsv")
    print(f"generated {len(augmented)} transformed interactions for {len({a.base.user for a in augmented})} users")
    return 0


def _cmd_genaug(args) -> int:
    cfg = build_run_config(args)
    if cfg.embeddings != "baseline":
        raise ConfigError("augmentation requires the built-in embedder (embeddings = baseline)")
    d = ingest(cfg.dataset_path, item_type_label=cfg.item_type_label)
    split = partition_leave_one_out(
        d, mode=cfg.partition_mode, seed=cfg.seed, val_user_fraction=cfg.val_user_fraction
    )
    store = build_baseline_store(cfg, d)
    from .genaug import ExternalDirGenerator, StubGenerator

    handle = StubGenerator() if cfg.generator == "stub" else ExternalDirGenerator(cfg.external_dir)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    augmented, summary = generate_to_threshold(
        d, split, store, handle, lambda img: baseline_embed(img, dim=cfg.baseline_dim),
        n=cfg.n, seed=cfg.seed, size=cfg.image_size,
    )
    save_augmented(augmented, out / "augmented.tsv")
    (out / "genaug_summary.json").write_text(json.dumps(summary.as_dict(), sort_keys=True) + "\n")
    print(json.dumps(summary.as_dict()))
    return 0


def _cmd_prompts(args) -> int:
    cfg = build_run_config(args)
    d = ingest(cfg.dataset_path, item_type_label=cfg.item_type_label)
    split = partition_leave_one_out(
        d, mode=cfg.partition_mode, seed=cfg.seed, val_user_fraction=cfg.val_user_fraction
    )
    out = Path(cfg.out_dir)
    if out.is_dir():
        out = out / "prompts.tsv"
    out.parent.mkdir(parents=True, exist_ok=True)
    count = write_prompts(d, split, out, n=cfg.n, seed=cfg.seed)
    print(f"wrote {count} prompts to {out}")
    return 0


def _cmd_train(args) -> int:
    cfg = build_run_config(args)
    cfg.validate()
    d = ingest(cfg.dataset_path, item_type_label=cfg.item_type_label)
    split = partition_leave_one_out(
        d, mode=cfg.partition_mode, seed=cfg.seed, val_user_fraction=cfg.val_user_fraction
    )
    store = load_store(cfg, d)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    meter = Meter(cfg.power_model())
    split, fragment, rn = _technique_stage(cfg, d, split, store, meter, out)
    model, _ = meter.measure("train", lambda: train(d, split, store, rn, cfg.train_config()))
    save_checkpoint(model, out / "model.ckpt")
    last = model.history[-1].val_metric if model.history else 0.0
    print(
        f"stopped after {model.stopped_epoch} epochs (best {model.best_epoch}); "
        f"last validation {cfg.val_metric} {last:.4f}"
    )
    return 0


def _cmd_eval(args) -> int:
    cfg = build_run_config(args)
    d = ingest(cfg.dataset_path, item_type_label=cfg.item_type_label)
    split = partition_leave_one_out(
        d, mode=cfg.partition_mode, seed=cfg.seed, val_user_fraction=cfg.val_user_fraction
    )
    store = load_store(cfg, d)
    ckpt = args.model_file or str(Path(cfg.out_dir) / "model.ckpt")
    params, _header = load_checkpoint(ckpt)
    cases, degenerate = build_test_cases(d, split)
    report = evaluate(cases, make_score_fn(params, store), degenerate_cases=degenerate)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "metrics.json").write_text(json.dumps(report.as_dict(), sort_keys=True) + "\n")
    print(json.dumps(report.as_dict()))
    return 0


def _cmd_matrix(args) -> int:
    cfg = build_run_config(args)
    combined = run_matrix(cfg)
    print(render_table(combined["rows"]), end="")
    return 0


def _cmd_run(args) -> int:
    cfg = build_run_config(args)
    report = run_pipeline(cfg)
    print(json.dumps(report["metrics"]))
    return 0


def _cmd_report(args) -> int:
    path = Path(args.out or ".") / "report.json"
    if not path.exists():
        raise DataError(f"no report at {path}")
    report = json.loads(path.read_text())
    if "rows" in report:
        print(render_table(report["rows"]), end="")
    else:
        print(json.dumps(report.get("metrics", {}), indent=2))
        ref = report.get("reference")
        if ref:
            print(f"reference ({ref['source']}): recall {ref['recall_at_10']}, "
                  f"ndcg {ref['ndcg_at_10']}, auc {ref['auc']}")
    return 0


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dydq", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    commands = {
        "ingest": _cmd_ingest,
        "partition": _cmd_partition,
        "embed": _cmd_embed,
        "pu-select": _cmd_pu_select,
        "augment": _cmd_augment,
        "genaug": _cmd_genaug,
        "prompts": _cmd_prompts,
        "train": _cmd_train,
        "eval": _cmd_eval,
        "run": _cmd_run,
        "matrix": _cmd_matrix,
        "report": _cmd_report,
    }
    for name, func in commands.items():
        p = sub.add_parser(name)
        _add_common(p)
        if name == "embed":
            p.add_argument("--check", help="validate an embedding file and print dim/count")
            p.add_argument("--merge", nargs="+", help="merge embedding files into --out")
        if name == "eval":
            p.add_argument("--model-file", dest="model_file", help="checkpoint to evaluate")
        p.set_defaults(func=func)
    return parser


def main(argv=None) -> int:
    parser = make_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except DydqError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4
    except Exception as exc:  # noqa: BLE001 - the CLI boundary reports and exits
        print(f"unexpected error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
