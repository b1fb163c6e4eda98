"""Generative augmentation: turn review text into image prompts, pull images
from a pluggable generator, and fill low-activity users to the threshold n.

Two generator handles exist.  The stub paints a deterministic low-frequency
color field from a hash of (prompt, seed), keeping the suite self-contained;
external_dir serves pre-generated files keyed by prompt hash, which is how a
real text-to-image backend plugs in.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .data import GENERATIVE_ID_BASE, Dataset, Interaction, Split, child_seed
from .embeddings import EmbeddingStore
from .errors import DydqError, EmptyReview, GeneratedImageMissing
from .images import PixelImage, decode_png, value_noise_image
from .transforms import AugmentedInteraction

FNV_OFFSET = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3

PROMPT_PREFIX = "Photorealistic image, taken with a smartphone camera, uploaded with the following "


def fnv1a64(data: bytes) -> int:
    h = FNV_OFFSET
    for b in data:
        h = ((h ^ b) * FNV_PRIME) & 0xFFFFFFFFFFFFFFFF
    return h


@dataclass(frozen=True)
class Prompt:
    item_type: str
    review_text: str

    @property
    def rendered(self) -> str:
        return f"{PROMPT_PREFIX}{self.item_type} review: {self.review_text}"

    @property
    def hash_hex(self) -> str:
        return f"{fnv1a64(self.rendered.encode('utf-8')):016x}"


def build_prompt(item_type: str, review: str) -> Prompt:
    trimmed = review.strip()
    if not trimmed:
        raise EmptyReview("review text is empty after trimming")
    return Prompt(item_type=item_type, review_text=trimmed)


@dataclass(frozen=True)
class StubGenerator:
    kind = "stub"


@dataclass(frozen=True)
class ExternalDirGenerator:
    kind = "external_dir"
    directory: Path

    def __init__(self, directory: str | Path):
        object.__setattr__(self, "directory", Path(directory))


GeneratorHandle = StubGenerator | ExternalDirGenerator


def generate(g: GeneratorHandle, prompt: Prompt, seed: int = 0, size: int = 64) -> PixelImage:
    """Produce the image for a prompt.

    The stub hashes (rendered prompt, seed) into a value-noise seed, so
    distinct prompts give distinct but stable pixel fields.  external_dir
    loads <hash(rendered)>.png and fails loudly when the file is absent.
    """
    if size < 8:
        raise ValueError("generated images must be at least 8px on a side")
    if isinstance(g, StubGenerator):
        h = fnv1a64(prompt.rendered.encode("utf-8") + b"\x1f" + seed.to_bytes(8, "little", signed=False))
        return value_noise_image(h, size)
    if isinstance(g, ExternalDirGenerator):
        filename = f"{prompt.hash_hex}.png"
        path = g.directory / filename
        if not path.exists():
            raise GeneratedImageMissing(filename)
        return decode_png(path)
    raise TypeError(f"unknown generator handle {g!r}")


@dataclass
class GenerationSummary:
    generated: int = 0
    skipped_users: int = 0
    failed: int = 0
    failures: list[str] = field(default_factory=list)

    def as_dict(self) -> dict:
        return {"generated": self.generated, "skipped_users": self.skipped_users, "failed": self.failed}


@dataclass(frozen=True)
class PlannedGeneration:
    user: int
    iteration: int
    base: Interaction
    prompt: Prompt
    seed: int


def plan_generation(d: Dataset, split: Split, n: int = 10, seed: int = 0) -> tuple[list[PlannedGeneration], int]:
    """Deterministic fill schedule: which prompt each below-threshold user
    gets at each iteration.  Emitting prompts ahead of generation and the
    generation pass itself both walk this plan, so pre-generated external
    images always line up.  Returns (plan, users skipped for lack of
    usable review text).
    """
    if n < 1:
        raise ValueError("activity threshold n must be >= 1")
    train_by_user: dict[int, list[Interaction]] = {}
    for it in split.train:
        train_by_user.setdefault(it.user, []).append(it)

    plan: list[PlannedGeneration] = []
    skipped = 0
    for u in sorted(train_by_user):
        base_its = train_by_user[u]
        need = n - len(base_its)
        if need <= 0:
            continue
        reviewed = [it for it in base_its if it.review_text.strip()]
        if not reviewed:
            skipped += 1
            continue
        rng = np.random.default_rng(child_seed(seed, "genda", u))
        for j in range(need):
            base = reviewed[int(rng.integers(len(reviewed)))]
            prompt = build_prompt(d.item_type_label, base.review_text)
            plan.append(
                PlannedGeneration(
                    user=u, iteration=j, base=base, prompt=prompt, seed=child_seed(seed, "genda", u, j)
                )
            )
    return plan, skipped


def generate_to_threshold(
    d: Dataset,
    split: Split,
    store: EmbeddingStore,
    g: GeneratorHandle,
    embed_fn: Callable[[PixelImage], np.ndarray],
    n: int = 10,
    seed: int = 0,
    size: int = 64,
) -> tuple[list[AugmentedInteraction], GenerationSummary]:
    """Fill below-threshold users with generated train interactions.

    Each planned generation either succeeds (image embedded and appended
    with provenance "generative") or is recorded as a failure; one bad
    prompt never aborts the batch.
    """
    plan, skipped = plan_generation(d, split, n=n, seed=seed)
    summary = GenerationSummary(skipped_users=skipped)
    out: list[AugmentedInteraction] = []
    next_id = GENERATIVE_ID_BASE
    for p in plan:
        try:
            pixels = generate(g, p.prompt, seed=p.seed, size=size)
        except DydqError as exc:
            summary.failed += 1
            summary.failures.append(f"user {p.user}: {exc}")
            continue
        store.add(next_id, embed_fn(pixels))
        out.append(
            AugmentedInteraction(
                base=p.base,
                synthetic_image=next_id,
                provenance="generative",
                transform_seed=p.seed,
                prompt_hash=p.prompt.hash_hex,
            )
        )
        next_id += 1
        summary.generated += 1
    return out, summary


def write_prompts(d: Dataset, split: Split, path: str | Path, n: int = 10, seed: int = 0) -> int:
    """Emit the deduplicated prompts.tsv (prompt_hash\trendered_prompt) the
    fill would consume; the companion image producer renders one PNG per
    row.  Returns the row count.
    """
    plan, _ = plan_generation(d, split, n=n, seed=seed)
    rows = ["prompt_hash\trendered_prompt"]
    seen: set[str] = set()
    for p in plan:
        h = p.prompt.hash_hex
        if h in seen:
            continue
        seen.add(h)
        rows.append(f"{h}\t{p.prompt.rendered}")
    Path(path).write_text("\n".join(rows) + "\n", encoding="utf-8")
    return len(seen)
