"""Dyadic user-item-image dataset: ingestion, indexing and leave-one-out splits.

The interaction record is an authorship triple (user, item, image) with an
optional review text.  Ids are densified at ingestion (0-based, in order of
first appearance); the original string keys are kept in a sidecar so dumps
stay readable.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DuplicateInteraction, EmptyDataset, MalformedLine

TSV_HEADER = "user\titem\timage\treview"

#: Synthetic image-id ranges.  Real ids are dense from 0, so anything at or
#: above these bases is recognizably synthetic and collision-free.
TRANSFORM_ID_BASE = 1 << 40
GENERATIVE_ID_BASE = 1 << 41


def child_seed(master: int, *keys) -> int:
    """Derive a stable 64-bit stream seed from a master seed and context keys.

    Used everywhere a per-user / per-item random stream is needed, so results
    do not depend on iteration order or on other users' data.
    """
    h = hashlib.blake2b(digest_size=8)
    h.update(str(int(master)).encode())
    for k in keys:
        h.update(b"\x1f")
        h.update(str(k).encode())
    return int.from_bytes(h.digest(), "little")


@dataclass(frozen=True)
class Interaction:
    user: int
    item: int
    image: int
    review_text: str = ""


@dataclass
class Dataset:
    """Immutable-by-convention container for one ingested dataset."""

    interactions: list[Interaction]
    n_users: int
    n_items: int
    n_images: int
    user_keys: list[str]
    item_keys: list[str]
    image_keys: list[str]
    item_type_label: str = "restaurant"
    images_by_item: dict[int, set[int]] = field(default_factory=dict)
    images_by_user: dict[int, set[int]] = field(default_factory=dict)
    item_of_image: dict[int, int] = field(default_factory=dict)
    user_of_image: dict[int, int] = field(default_factory=dict)
    by_user_image: dict[tuple[int, int], Interaction] = field(default_factory=dict)

    def __post_init__(self):
        if not self.images_by_item:
            self._build_indexes()

    def _build_indexes(self):
        for it in self.interactions:
            self.images_by_item.setdefault(it.item, set()).add(it.image)
            self.images_by_user.setdefault(it.user, set()).add(it.image)
            self.item_of_image[it.image] = it.item
            self.user_of_image[it.image] = it.user
            self.by_user_image[(it.user, it.image)] = it

    def validate(self):
        """Check structural invariants; raises DataError subclasses on failure."""
        seen_pairs = set()
        seen_images = {}
        for it in self.interactions:
            if not (0 <= it.user < self.n_users):
                raise MalformedLine(0, f"user id {it.user} out of range")
            if not (0 <= it.item < self.n_items):
                raise MalformedLine(0, f"item id {it.item} out of range")
            if not (0 <= it.image < self.n_images):
                raise MalformedLine(0, f"image id {it.image} out of range")
            if (it.user, it.image) in seen_pairs:
                raise DuplicateInteraction(f"(user={it.user}, image={it.image})")
            seen_pairs.add((it.user, it.image))
            if it.image in seen_images:
                raise DuplicateInteraction(f"image {it.image} has two authors/items")
            seen_images[it.image] = it
        if len(seen_images) != self.n_images:
            raise MalformedLine(0, "image id space not dense")
        assert sum(len(s) for s in self.images_by_item.values()) == len(self.interactions)
        assert sum(len(s) for s in self.images_by_user.values()) == len(self.interactions)

    @property
    def all_images(self) -> list[int]:
        return sorted(self.item_of_image)

    def review_of(self, user: int, image: int) -> str:
        return self.by_user_image[(user, image)].review_text


def ingest(path: str | Path, fmt: str = "tsv", item_type_label: str = "restaurant") -> Dataset:
    """Read a UTF-8 TSV of (user, item, image, review) rows into a Dataset.

    Ids are densified in first-appearance order.  Duplicate (user, image)
    pairs and reused image keys are rejected; review text may be empty and is
    kept verbatim.
    """
    if fmt != "tsv":
        raise MalformedLine(0, f"unsupported format {fmt!r}")
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise EmptyDataset(f"{path}: empty file")
    if lines[0] != TSV_HEADER:
        raise MalformedLine(1, f"expected header {TSV_HEADER!r}, got {lines[0]!r}")

    user_ids: dict[str, int] = {}
    item_ids: dict[str, int] = {}
    image_ids: dict[str, int] = {}
    interactions: list[Interaction] = []
    seen_pairs: set[tuple[str, str]] = set()

    for line_no, line in enumerate(lines[1:], start=2):
        fields = line.split("\t")
        if len(fields) != 4:
            raise MalformedLine(line_no, f"expected 4 tab-separated fields, got {len(fields)}")
        user_key, item_key, image_key, review = fields
        if not user_key or not item_key or not image_key:
            raise MalformedLine(line_no, "empty user/item/image key")
        if (user_key, image_key) in seen_pairs:
            raise DuplicateInteraction(
                f"line {line_no}: duplicate (user={user_key!r}, image={image_key!r})"
            )
        seen_pairs.add((user_key, image_key))
        if image_key in image_ids:
            raise DuplicateInteraction(f"line {line_no}: image key {image_key!r} reused")
        u = user_ids.setdefault(user_key, len(user_ids))
        i = item_ids.setdefault(item_key, len(item_ids))
        p = image_ids.setdefault(image_key, len(image_ids))
        interactions.append(Interaction(u, i, p, review))

    if not interactions:
        raise EmptyDataset(f"{path}: no interaction rows")

    d = Dataset(
        interactions=interactions,
        n_users=len(user_ids),
        n_items=len(item_ids),
        n_images=len(image_ids),
        user_keys=list(user_ids),
        item_keys=list(item_ids),
        image_keys=list(image_ids),
        item_type_label=item_type_label,
    )
    d.validate()
    return d


def save_dataset(d: Dataset, out_dir: str | Path) -> tuple[Path, Path]:
    """Write dataset.tsv plus the key sidecar JSON; returns both paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    tsv_path = out_dir / "dataset.tsv"
    rows = [TSV_HEADER]
    for it in d.interactions:
        rows.append(
            f"{d.user_keys[it.user]}\t{d.item_keys[it.item]}\t"
            f"{d.image_keys[it.image]}\t{it.review_text}"
        )
    tsv_path.write_text("\n".join(rows) + "\n", encoding="utf-8")
    sidecar = {
        "user_keys": d.user_keys,
        "item_keys": d.item_keys,
        "image_keys": d.image_keys,
        "item_type_label": d.item_type_label,
    }
    sidecar_path = out_dir / "dataset.keys.json"
    sidecar_path.write_text(json.dumps(sidecar, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return tsv_path, sidecar_path


@dataclass
class Split:
    train: list[Interaction]
    validation: list[Interaction]
    test: list[Interaction]

    def train_images_of(self, user: int) -> list[int]:
        return [it.image for it in self.train if it.user == user]

    def counts_by_user(self, part: str) -> dict[int, int]:
        out: dict[int, int] = {}
        for it in getattr(self, part):
            out[it.user] = out.get(it.user, 0) + 1
        return out


def partition_leave_one_out(
    d: Dataset,
    mode: str = "paper_text",
    seed: int = 0,
    val_user_fraction: float = 0.10,
) -> Split:
    """Per-user leave-one-out partition of the interactions.

    mode "paper_text": for users with N >= 2 images, 1 uniformly chosen image
    goes to train and the remaining N-1 are held out.  mode "one_out_test":
    N-1 train, 1 held out.  Single-image users always train.  A seeded
    fraction of the users owning held-out cases is carved out user-wise into
    the validation set (all of their held-out cases), the rest go to test.
    """
    if mode not in ("paper_text", "one_out_test"):
        raise ValueError(f"unknown partition mode {mode!r}")
    if not d.interactions:
        raise EmptyDataset("cannot partition an empty dataset")
    if not (0.0 <= val_user_fraction < 1.0):
        raise ValueError("val_user_fraction must be in [0, 1)")

    per_user: dict[int, list[Interaction]] = {}
    for it in d.interactions:
        per_user.setdefault(it.user, []).append(it)

    train: list[Interaction] = []
    holdout: dict[int, list[Interaction]] = {}
    for u in sorted(per_user):
        its = sorted(per_user[u], key=lambda it: it.image)
        if len(its) == 1:
            train.append(its[0])
            continue
        rng = np.random.default_rng(child_seed(seed, "loo", u))
        k = int(rng.integers(len(its)))
        if mode == "paper_text":
            train.append(its[k])
            holdout[u] = [it for j, it in enumerate(its) if j != k]
        else:
            holdout[u] = [its[k]]
            train.extend(it for j, it in enumerate(its) if j != k)

    holdout_users = sorted(holdout)
    validation: list[Interaction] = []
    test: list[Interaction] = []
    n_val_users = 0
    if val_user_fraction > 0 and holdout_users:
        n_val_users = max(1, int(round(val_user_fraction * len(holdout_users))))
    rng = np.random.default_rng(child_seed(seed, "valcarve"))
    val_users = set(
        rng.choice(np.asarray(holdout_users, dtype=np.int64), size=n_val_users, replace=False).tolist()
        if n_val_users
        else []
    )
    for u in holdout_users:
        (validation if u in val_users else test).extend(holdout[u])
    return Split(train=train, validation=validation, test=test)


def save_split(split: Split, path: str | Path):
    rows = ["part\tuser\titem\timage"]
    for part in ("train", "validation", "test"):
        for it in getattr(split, part):
            rows.append(f"{part}\t{it.user}\t{it.item}\t{it.image}")
    Path(path).write_text("\n".join(rows) + "\n", encoding="utf-8")


def load_split(path: str | Path, d: Dataset) -> Split:
    lines = Path(path).read_text(encoding="utf-8").rstrip("\n").split("\n")
    if not lines or lines[0] != "part\tuser\titem\timage":
        raise MalformedLine(1, "bad split header")
    parts: dict[str, list[Interaction]] = {"train": [], "validation": [], "test": []}
    for line_no, line in enumerate(lines[1:], start=2):
        fields = line.split("\t")
        if len(fields) != 4 or fields[0] not in parts:
            raise MalformedLine(line_no, "bad split row")
        u, i, p = int(fields[1]), int(fields[2]), int(fields[3])
        it = d.by_user_image.get((u, p))
        if it is None or it.item != i:
            raise MalformedLine(line_no, f"split row not present in dataset: ({u},{i},{p})")
        parts[fields[0]].append(it)
    return Split(**parts)
