"""Transform-based augmentation: perturbed copies of low-activity users'
images until each user owns the activity-threshold number of train examples.

Transform parameters are sampled inside apply_transform from the ranges a
TransformSpec declares, so a (spec, seed) pair pins the output exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence, Union

import numpy as np

from .data import TRANSFORM_ID_BASE, Dataset, Interaction, Split, child_seed
from .embeddings import EmbeddingStore
from .errors import MissingImageFile
from .images import PixelImage, decode_png, encode_png

ImageSource = Callable[[int], PixelImage]


@dataclass(frozen=True)
class CutoutSpec:
    kind = "cutout"
    frac_low: float = 0.10
    frac_high: float = 0.30

    def __post_init__(self):
        if not (0.0 <= self.frac_low <= self.frac_high <= 1.0):
            raise ValueError("cutout fractions must satisfy 0 <= low <= high <= 1")


@dataclass(frozen=True)
class AffineSpec:
    kind = "affine"
    max_rotation_deg: float = 15.0
    max_translate_frac: float = 0.10
    scale_low: float = 0.90
    scale_high: float = 1.10

    def __post_init__(self):
        if self.max_rotation_deg < 0 or self.max_translate_frac < 0:
            raise ValueError("rotation/translation bounds must be non-negative")
        if not (0.0 < self.scale_low <= self.scale_high):
            raise ValueError("scale range must be positive and ordered")


@dataclass(frozen=True)
class BlurSpec:
    kind = "gaussian_blur"
    sigma_low: float = 0.5
    sigma_high: float = 2.0

    def __post_init__(self):
        if not (0.0 <= self.sigma_low <= self.sigma_high):
            raise ValueError("blur sigma range must be non-negative and ordered")


@dataclass(frozen=True)
class NoiseSpec:
    kind = "gaussian_noise"
    sigma_low: float = 5.0
    sigma_high: float = 20.0

    def __post_init__(self):
        if not (0.0 <= self.sigma_low <= self.sigma_high):
            raise ValueError("noise sigma range must be non-negative and ordered")


TransformSpec = Union[CutoutSpec, AffineSpec, BlurSpec, NoiseSpec]

DEFAULT_SPECS: tuple[TransformSpec, ...] = (CutoutSpec(), AffineSpec(), BlurSpec(), NoiseSpec())


def cutout(img: PixelImage, x0: int, y0: int, w: int, h: int) -> PixelImage:
    """Blacken the rectangle [x0, x0+w) x [y0, y0+h); zero-area is identity."""
    if w <= 0 or h <= 0:
        return img
    arr = img.data.copy()
    arr[y0 : y0 + h, x0 : x0 + w] = 0
    return PixelImage(arr)


def affine(img: PixelImage, angle_deg: float, tx: float, ty: float, scale: float) -> PixelImage:
    """Rotate/scale about the center then translate, bilinear sampling with
    black fill outside the source bounds."""
    h, w = img.height, img.width
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    theta = math.radians(angle_deg)
    cos_t, sin_t = math.cos(theta), math.sin(theta)
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
    dx = xs - cx - tx
    dy = ys - cy - ty
    # inverse of translate(center+t) . rotate(theta) . scale(s) . translate(-center)
    sx = (cos_t * dx + sin_t * dy) / scale + cx
    sy = (-sin_t * dx + cos_t * dy) / scale + cy
    x0 = np.floor(sx).astype(np.int64)
    y0 = np.floor(sy).astype(np.int64)
    fx = sx - x0
    fy = sy - y0
    out = np.zeros((h, w, 3), dtype=np.float64)
    src = img.data.astype(np.float64)
    for oy, ox, wgt in (
        (0, 0, (1 - fx) * (1 - fy)),
        (0, 1, fx * (1 - fy)),
        (1, 0, (1 - fx) * fy),
        (1, 1, fx * fy),
    ):
        yy = y0 + oy
        xx = x0 + ox
        inb = (yy >= 0) & (yy < h) & (xx >= 0) & (xx < w)
        yc = np.clip(yy, 0, h - 1)
        xc = np.clip(xx, 0, w - 1)
        out += (wgt * inb)[:, :, None] * src[yc, xc]
    return PixelImage(np.clip(np.round(out), 0, 255).astype(np.uint8))


def _gaussian_kernel(sigma: float) -> np.ndarray:
    radius = int(math.floor(3.0 * sigma))
    if sigma <= 0.0 or radius < 1:
        return np.array([1.0])
    offsets = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-(offsets**2) / (2.0 * sigma * sigma))
    return k / k.sum()


def gaussian_blur(img: PixelImage, sigma: float) -> PixelImage:
    """Separable Gaussian blur, kernel truncated at 3*sigma, edge-replicated
    borders.  sigma small enough that the kernel collapses to [1] is identity."""
    k = _gaussian_kernel(sigma)
    if k.size == 1:
        return img
    r = k.size // 2
    arr = img.data.astype(np.float64)
    padded = np.pad(arr, ((r, r), (0, 0), (0, 0)), mode="edge")
    vert = sum(k[i] * padded[i : i + arr.shape[0]] for i in range(k.size))
    padded = np.pad(vert, ((0, 0), (r, r), (0, 0)), mode="edge")
    horiz = sum(k[i] * padded[:, i : i + arr.shape[1]] for i in range(k.size))
    return PixelImage(np.clip(np.round(horiz), 0, 255).astype(np.uint8))


def gaussian_noise(img: PixelImage, sigma: float, rng: np.random.Generator) -> PixelImage:
    noise = rng.normal(0.0, sigma, size=img.data.shape)
    out = img.data.astype(np.float64) + noise
    return PixelImage(np.clip(np.round(out), 0, 255).astype(np.uint8))


def apply_transform(img: PixelImage, spec: TransformSpec, seed: int) -> PixelImage:
    """Sample concrete parameters from the spec's ranges and apply them.

    Output has the input's dimensions and is fully determined by
    (img, spec, seed).
    """
    rng = np.random.default_rng(np.uint64(seed & 0xFFFFFFFFFFFFFFFF))
    if isinstance(spec, CutoutSpec):
        fw = rng.uniform(spec.frac_low, spec.frac_high)
        fh = rng.uniform(spec.frac_low, spec.frac_high)
        w = int(round(fw * img.width))
        h = int(round(fh * img.height))
        if w == 0 or h == 0:
            return img
        x0 = int(rng.integers(0, img.width - w + 1))
        y0 = int(rng.integers(0, img.height - h + 1))
        return cutout(img, x0, y0, w, h)
    if isinstance(spec, AffineSpec):
        angle = rng.uniform(-spec.max_rotation_deg, spec.max_rotation_deg)
        tx = rng.uniform(-spec.max_translate_frac, spec.max_translate_frac) * img.width
        ty = rng.uniform(-spec.max_translate_frac, spec.max_translate_frac) * img.height
        scale = rng.uniform(spec.scale_low, spec.scale_high)
        return affine(img, angle, tx, ty, scale)
    if isinstance(spec, BlurSpec):
        sigma = rng.uniform(spec.sigma_low, spec.sigma_high)
        return gaussian_blur(img, sigma)
    if isinstance(spec, NoiseSpec):
        sigma = rng.uniform(spec.sigma_low, spec.sigma_high)
        return gaussian_noise(img, sigma, rng)
    raise TypeError(f"unknown transform spec {spec!r}")


@dataclass(frozen=True)
class AugmentedInteraction:
    base: Interaction
    synthetic_image: int
    provenance: str  # "transform" | "generative"
    transform: TransformSpec | None = None
    transform_seed: int = 0
    prompt_hash: str | None = None

    def as_interaction(self) -> Interaction:
        return Interaction(
            user=self.base.user,
            item=self.base.item,
            image=self.synthetic_image,
            review_text=self.base.review_text,
        )


class DirectoryImageSource:
    """Look up pixel data as <dir>/<image_key>.png using the dataset's keys."""

    def __init__(self, directory: str | Path, dataset: Dataset):
        self.directory = Path(directory)
        self.dataset = dataset

    def __call__(self, image_id: int) -> PixelImage:
        try:
            key = self.dataset.image_keys[image_id]
        except IndexError:
            raise MissingImageFile(image_id, "id outside dataset") from None
        path = self.directory / f"{key}.png"
        if not path.exists():
            raise MissingImageFile(image_id, str(path))
        return decode_png(path)


def augment_to_threshold(
    d: Dataset,
    split: Split,
    store: EmbeddingStore,
    images: ImageSource,
    embed_fn: Callable[[PixelImage], np.ndarray],
    n: int = 10,
    specs: Sequence[TransformSpec] = DEFAULT_SPECS,
    seed: int = 0,
    out_dir: str | Path | None = None,
) -> list[AugmentedInteraction]:
    """Fill every user below the activity threshold up to exactly n train
    examples by cycling over their train images with sampled transforms.

    Synthetic images are embedded with embed_fn and appended to the store;
    ids are allocated from the transform-tagged range in ascending-user
    order.  Users at or above n are untouched.
    """
    if n < 1:
        raise ValueError("activity threshold n must be >= 1")
    if not specs:
        raise ValueError("need at least one transform spec")
    train_by_user: dict[int, list[Interaction]] = {}
    for it in split.train:
        train_by_user.setdefault(it.user, []).append(it)

    out: list[AugmentedInteraction] = []
    next_id = TRANSFORM_ID_BASE
    for u in sorted(train_by_user):
        base_its = train_by_user[u]
        need = n - len(base_its)
        if need <= 0:
            continue
        rng = np.random.default_rng(child_seed(seed, "tda", u))
        for j in range(need):
            base = base_its[j % len(base_its)]
            pixels = images(base.image)
            spec = specs[int(rng.integers(len(specs)))]
            t_seed = child_seed(seed, "tda", u, j)
            synth = apply_transform(pixels, spec, t_seed)
            store.add(next_id, embed_fn(synth))
            aug = AugmentedInteraction(
                base=base,
                synthetic_image=next_id,
                provenance="transform",
                transform=spec,
                transform_seed=t_seed,
            )
            out.append(aug)
            if out_dir is not None:
                encode_png(synth, Path(out_dir) / str(u) / f"{next_id}.png")
            next_id += 1
    return out


def save_augmented(augmented: Sequence[AugmentedInteraction], path: str | Path):
    rows = ["user\titem\timage\tbase_image\tprovenance\tprompt_hash"]
    for a in augmented:
        rows.append(
            f"{a.base.user}\t{a.base.item}\t{a.synthetic_image}\t{a.base.image}"
            f"\t{a.provenance}\t{a.prompt_hash or '-'}"
        )
    Path(path).write_text("\n".join(rows) + "\n", encoding="utf-8")
