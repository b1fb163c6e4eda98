"""Authorship-scoring models and their training loops.

Two heads share one scoring path: project the image embedding through a
dense layer, then either take the inner product with the user vector (dot)
or feed the concatenated pair through a one-hidden-layer tanh MLP.  Raw
scores everywhere; the logistic squashing lives inside the losses, which
keeps the pointwise (binary cross-entropy) and pairwise (logistic ranking)
objectives on the same footing and saturation-free.

Optimization is plain SGD with momentum so that runs are bit-reproducible
from the seed.  Gradients are hand-derived and checked against finite
differences in the test suite.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .data import Dataset, Split, child_seed
from .embeddings import EmbeddingStore
from .errors import CheckpointFormatError, DataError, TrainingDiverged, TruncatedFile
from .evaluation import cases_from_interactions, evaluate
from .pu import ReliableNegatives

CHECKPOINT_MAGIC = "dydq-checkpoint"
INIT_SCALE = 0.05


@dataclass
class ModelParams:
    """Parameter bundle.  user_table rows are per-user vectors; proj_w/b map
    input embeddings into the same space.  The mlp_* stack exists only for
    the mlp head (2d -> hidden -> 1, tanh hidden activation)."""

    head: str
    user_table: np.ndarray
    proj_w: np.ndarray
    proj_b: np.ndarray
    mlp_w1: np.ndarray | None = None
    mlp_b1: np.ndarray | None = None
    mlp_w2: np.ndarray | None = None
    mlp_b2: np.ndarray | None = None

    @property
    def n_users(self) -> int:
        return self.user_table.shape[0]

    @property
    def d(self) -> int:
        return self.user_table.shape[1]

    @property
    def d_in(self) -> int:
        return self.proj_w.shape[0]

    def arrays(self) -> dict[str, np.ndarray]:
        """Parameters in canonical order (the checkpoint blob order)."""
        out = {"user_table": self.user_table, "proj_w": self.proj_w, "proj_b": self.proj_b}
        if self.head == "mlp":
            out.update(mlp_w1=self.mlp_w1, mlp_b1=self.mlp_b1, mlp_w2=self.mlp_w2, mlp_b2=self.mlp_b2)
        return out

    def copy(self) -> "ModelParams":
        return ModelParams(
            head=self.head,
            user_table=self.user_table.copy(),
            proj_w=self.proj_w.copy(),
            proj_b=self.proj_b.copy(),
            mlp_w1=None if self.mlp_w1 is None else self.mlp_w1.copy(),
            mlp_b1=None if self.mlp_b1 is None else self.mlp_b1.copy(),
            mlp_w2=None if self.mlp_w2 is None else self.mlp_w2.copy(),
            mlp_b2=None if self.mlp_b2 is None else self.mlp_b2.copy(),
        )


@dataclass(frozen=True)
class TrainConfig:
    objective: str = "bpr"  # bce | bpr
    neg_source: str = "random"  # random | reliable
    head: str = "dot"  # dot | mlp
    d: int = 64
    hidden: int = 64
    lr: float = 0.01
    l2: float = 1e-5
    epochs_max: int = 100
    early_stop_patience: int = 5
    early_stop_delta: float = 0.001
    batch: int = 128
    seed: int = 0
    negatives_per_positive: int = 1
    val_metric: str = "ndcg"  # ndcg | auc

    def __post_init__(self):
        if self.objective not in ("bce", "bpr"):
            raise ValueError(f"unknown objective {self.objective!r}")
        if self.neg_source not in ("random", "reliable"):
            raise ValueError(f"unknown negative source {self.neg_source!r}")
        if self.head not in ("dot", "mlp"):
            raise ValueError(f"unknown head {self.head!r}")
        if self.val_metric not in ("ndcg", "auc"):
            raise ValueError(f"unknown validation metric {self.val_metric!r}")
        if self.d < 1 or self.hidden < 1 or self.batch < 1 or self.negatives_per_positive < 1:
            raise ValueError("d, hidden, batch and negatives_per_positive must be >= 1")
        if self.lr <= 0 or self.l2 < 0 or self.epochs_max < 0 or self.early_stop_patience < 1:
            raise ValueError("lr > 0, l2 >= 0, epochs_max >= 0, patience >= 1 required")


@dataclass(frozen=True)
class EpochStats:
    epoch: int
    train_loss: float
    val_metric: float
    rn_fallbacks: int


@dataclass
class TrainedModel:
    params: ModelParams
    history: list[EpochStats] = field(default_factory=list)
    stopped_epoch: int = 0
    best_epoch: int = 0
    config: TrainConfig = field(default_factory=TrainConfig)


def init_params(n_users: int, d_in: int, cfg: TrainConfig) -> ModelParams:
    """Weights i.i.d. uniform in [-0.05, 0.05] from the seeded generator
    (draw order: user_table, proj_w, then the mlp stack); biases zero."""
    rng = np.random.default_rng(child_seed(cfg.seed, "init"))
    user_table = rng.uniform(-INIT_SCALE, INIT_SCALE, size=(n_users, cfg.d))
    proj_w = rng.uniform(-INIT_SCALE, INIT_SCALE, size=(d_in, cfg.d))
    proj_b = np.zeros(cfg.d)
    if cfg.head == "dot":
        return ModelParams(head="dot", user_table=user_table, proj_w=proj_w, proj_b=proj_b)
    mlp_w1 = rng.uniform(-INIT_SCALE, INIT_SCALE, size=(2 * cfg.d, cfg.hidden))
    mlp_b1 = np.zeros(cfg.hidden)
    mlp_w2 = rng.uniform(-INIT_SCALE, INIT_SCALE, size=cfg.hidden)
    mlp_b2 = np.zeros(())
    return ModelParams(
        head="mlp", user_table=user_table, proj_w=proj_w, proj_b=proj_b,
        mlp_w1=mlp_w1, mlp_b1=mlp_b1, mlp_w2=mlp_w2, mlp_b2=mlp_b2,
    )


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x, dtype=np.float64)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def score_batch(params: ModelParams, users: np.ndarray, emb: np.ndarray) -> np.ndarray:
    """Raw scores for (user, embedding) rows."""
    proj = emb @ params.proj_w + params.proj_b
    u_vecs = params.user_table[users]
    if params.head == "dot":
        return np.einsum("ij,ij->i", u_vecs, proj)
    z = np.concatenate([u_vecs, proj], axis=1)
    hidden = np.tanh(z @ params.mlp_w1 + params.mlp_b1)
    return hidden @ params.mlp_w2 + params.mlp_b2


def score(params: ModelParams, u: int, e: np.ndarray) -> float:
    if not 0 <= u < params.n_users:
        raise DataError(f"user id {u} outside parameter table")
    if e.shape != (params.d_in,):
        raise DataError(f"embedding dim {e.shape} does not match model input {params.d_in}")
    return float(score_batch(params, np.array([u]), np.asarray(e, dtype=np.float64)[None, :])[0])


def _zero_grads(params: ModelParams) -> dict[str, np.ndarray]:
    return {k: np.zeros_like(v) for k, v in params.arrays().items()}


def _accumulate_score_grads(
    params: ModelParams,
    users: np.ndarray,
    emb: np.ndarray,
    upstream: np.ndarray,
    grads: dict[str, np.ndarray],
):
    """Add d(sum_i upstream_i * score_i)/d(theta) into grads."""
    proj = emb @ params.proj_w + params.proj_b
    u_vecs = params.user_table[users]
    if params.head == "dot":
        d_user = upstream[:, None] * proj
        d_proj = upstream[:, None] * u_vecs
    else:
        z = np.concatenate([u_vecs, proj], axis=1)
        hidden = np.tanh(z @ params.mlp_w1 + params.mlp_b1)
        grads["mlp_w2"] += hidden.T @ upstream
        grads["mlp_b2"] += upstream.sum()
        d_hidden = upstream[:, None] * params.mlp_w2[None, :]
        d_act = d_hidden * (1.0 - hidden**2)
        grads["mlp_w1"] += z.T @ d_act
        grads["mlp_b1"] += d_act.sum(axis=0)
        d_z = d_act @ params.mlp_w1.T
        d_user = d_z[:, : params.d]
        d_proj = d_z[:, params.d :]
    grads["proj_w"] += emb.T @ d_proj
    grads["proj_b"] += d_proj.sum(axis=0)
    np.add.at(grads["user_table"], users, d_user)


def _l2_penalty(params: ModelParams, users: np.ndarray, l2: float, grads: dict[str, np.ndarray]) -> float:
    """l2 * (batch-mean ||U_u||^2 + ||W||^2); gradient added in place."""
    if l2 == 0.0:
        return 0.0
    n = len(users)
    u_vecs = params.user_table[users]
    term = l2 * (float((u_vecs**2).sum() / n) + float((params.proj_w**2).sum()))
    np.add.at(grads["user_table"], users, (2.0 * l2 / n) * u_vecs)
    grads["proj_w"] += 2.0 * l2 * params.proj_w
    return term


def bce_loss(s: float, label: int) -> float:
    """Pointwise binary cross-entropy on a raw score, log-sum-exp form."""
    return float(np.logaddexp(0.0, s) - s * label)


def bpr_loss(s_pos: float, s_neg: float, l2_term: float = 0.0) -> float:
    """Pairwise logistic ranking loss -ln(sigmoid(s_pos - s_neg)) + l2."""
    return float(np.logaddexp(0.0, -(s_pos - s_neg))) + l2_term


def bce_objective(
    params: ModelParams, users: np.ndarray, emb: np.ndarray, labels: np.ndarray, l2: float = 0.0
) -> tuple[float, dict[str, np.ndarray]]:
    """Mean pointwise loss over the batch plus the l2 penalty, with exact
    analytic gradients for every parameter."""
    users = np.asarray(users)
    emb = np.asarray(emb, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.float64)
    n = len(users)
    s = score_batch(params, users, emb)
    per_example = np.logaddexp(0.0, s) - s * labels
    grads = _zero_grads(params)
    _accumulate_score_grads(params, users, emb, (_sigmoid(s) - labels) / n, grads)
    loss = float(per_example.mean()) + _l2_penalty(params, users, l2, grads)
    return loss, grads


def bpr_objective(
    params: ModelParams, users: np.ndarray, emb_pos: np.ndarray, emb_neg: np.ndarray, l2: float = 0.0
) -> tuple[float, dict[str, np.ndarray]]:
    """Mean pairwise loss over (positive, negative) rows plus l2 penalty,
    with exact analytic gradients."""
    users = np.asarray(users)
    emb_pos = np.asarray(emb_pos, dtype=np.float64)
    emb_neg = np.asarray(emb_neg, dtype=np.float64)
    n = len(users)
    diff = score_batch(params, users, emb_pos) - score_batch(params, users, emb_neg)
    per_pair = np.logaddexp(0.0, -diff)
    upstream = -_sigmoid(-diff) / n
    grads = _zero_grads(params)
    _accumulate_score_grads(params, users, emb_pos, upstream, grads)
    _accumulate_score_grads(params, users, emb_neg, -upstream, grads)
    loss = float(per_pair.mean()) + _l2_penalty(params, users, l2, grads)
    return loss, grads


class _Momentum:
    def __init__(self, params: ModelParams, lr: float, momentum: float = 0.9):
        self.lr = lr
        self.momentum = momentum
        self.velocity = {k: np.zeros_like(v) for k, v in params.arrays().items()}

    def step(self, params: ModelParams, grads: dict[str, np.ndarray]):
        for name, arr in params.arrays().items():
            v = self.momentum * self.velocity[name] + grads[name]
            self.velocity[name] = v
            arr -= self.lr * v
            if not np.all(np.isfinite(arr)):
                raise TrainingDiverged(f"parameter {name} became non-finite")


def make_score_fn(params: ModelParams, store: EmbeddingStore):
    def score_fn(u: int, image_ids: Sequence[int]) -> np.ndarray:
        emb = store.matrix(list(image_ids))
        return score_batch(params, np.full(len(image_ids), u, dtype=np.int64), emb)

    return score_fn


def train(
    d: Dataset,
    split: Split,
    store: EmbeddingStore,
    rn: ReliableNegatives | None,
    cfg: TrainConfig,
) -> TrainedModel:
    """Seeded minibatch training with per-epoch negative resampling.

    Every positive draws fresh negatives each epoch: uniform over images
    outside the user's positives in random mode, uniform over the user's
    reliable-negative set in reliable mode (falling back to random when
    that set is empty, counted per epoch).  The pairwise objective takes
    one step per minibatch; the pointwise objective takes a positive step
    then a negative step.  Early stopping watches the validation metric
    with the configured patience/delta and restores the best epoch's
    parameters; without validation cases the full epoch budget runs.
    """
    positives = list(split.train)
    if not positives:
        raise DataError("empty train split")
    if cfg.neg_source == "reliable" and rn is None:
        raise DataError("reliable negative sampling requested but no selection given")

    params = init_params(d.n_users, store.dim, cfg)
    optimizer = _Momentum(params, lr=cfg.lr)

    all_real = np.array(d.all_images, dtype=np.int64)
    pos_by_user: dict[int, set[int]] = {}
    for it in positives:
        pos_by_user.setdefault(it.user, set()).add(it.image)
    allowed_cache: dict[int, np.ndarray] = {}
    rn_cache: dict[int, np.ndarray] = {}

    def allowed_for(u: int) -> np.ndarray:
        arr = allowed_cache.get(u)
        if arr is None:
            mask = ~np.isin(all_real, sorted(pos_by_user.get(u, ())))
            arr = all_real[mask]
            if arr.size == 0:
                raise DataError(f"user {u} has no candidate negatives")
            allowed_cache[u] = arr
        return arr

    def reliable_for(u: int) -> np.ndarray:
        arr = rn_cache.get(u)
        if arr is None:
            arr = np.array(sorted(rn.images(u)), dtype=np.int64) if rn is not None else np.empty(0, dtype=np.int64)
            rn_cache[u] = arr
        return arr

    val_cases, _ = cases_from_interactions(d, split.validation)
    npp = cfg.negatives_per_positive

    history: list[EpochStats] = []
    best_metric = -math.inf
    best_params: ModelParams | None = None
    best_epoch = 0
    wait = 0

    for epoch in range(1, cfg.epochs_max + 1):
        rng = np.random.default_rng(child_seed(cfg.seed, "epoch", epoch))
        perm = rng.permutation(len(positives))
        fallbacks = 0
        losses: list[float] = []
        weights: list[int] = []
        for start in range(0, len(perm), cfg.batch):
            chunk = perm[start : start + cfg.batch]
            users = np.repeat([positives[i].user for i in chunk], npp)
            pos_ids = np.repeat([positives[i].image for i in chunk], npp)
            neg_ids = np.empty(len(users), dtype=np.int64)
            for row, u in enumerate(users):
                pool = reliable_for(int(u)) if cfg.neg_source == "reliable" else None
                if pool is None or pool.size == 0:
                    if cfg.neg_source == "reliable":
                        fallbacks += 1
                    pool = allowed_for(int(u))
                neg_ids[row] = pool[int(rng.integers(pool.size))]
            emb_pos = store.matrix([int(p) for p in pos_ids])
            emb_neg = store.matrix([int(p) for p in neg_ids])
            if cfg.objective == "bpr":
                loss, grads = bpr_objective(params, users, emb_pos, emb_neg, cfg.l2)
                optimizer.step(params, grads)
            else:
                loss_p, grads = bce_objective(params, users, emb_pos, np.ones(len(users)), cfg.l2)
                optimizer.step(params, grads)
                loss_n, grads = bce_objective(params, users, emb_neg, np.zeros(len(users)), cfg.l2)
                optimizer.step(params, grads)
                loss = 0.5 * (loss_p + loss_n)
            losses.append(loss * len(users))
            weights.append(len(users))
        epoch_loss = math.fsum(losses) / sum(weights)

        metric = 0.0
        if val_cases:
            report = evaluate(val_cases, make_score_fn(params, store))
            metric = report.ndcg_at_10 if cfg.val_metric == "ndcg" else report.auc
        history.append(EpochStats(epoch=epoch, train_loss=epoch_loss, val_metric=metric, rn_fallbacks=fallbacks))

        if val_cases:
            if metric > best_metric + cfg.early_stop_delta:
                best_metric = metric
                best_params = params.copy()
                best_epoch = epoch
                wait = 0
            else:
                wait += 1
                if wait >= cfg.early_stop_patience:
                    break

    if best_params is not None:
        params = best_params
    else:
        best_epoch = len(history)
    return TrainedModel(
        params=params, history=history, stopped_epoch=len(history), best_epoch=best_epoch, config=cfg
    )


def rank_images(
    params: ModelParams, u: int, candidates: Sequence[int], store: EmbeddingStore
) -> list[tuple[int, float]]:
    """Candidates sorted by descending score, ties broken by ascending id."""
    if not candidates:
        raise ValueError("need at least one candidate image")
    scores = score_batch(params, np.full(len(candidates), u, dtype=np.int64), store.matrix(list(candidates)))
    return sorted(zip([int(c) for c in candidates], [float(s) for s in scores]), key=lambda t: (-t[1], t[0]))


def save_checkpoint(model: TrainedModel, path: str | Path):
    """JSON header (shapes, head, config echo) length-prefixed with u32 LE,
    then every parameter as little-endian f32 in arrays() order."""
    arrays = model.params.arrays()
    header = {
        "magic": CHECKPOINT_MAGIC,
        "version": 1,
        "head": model.params.head,
        "n_users": model.params.n_users,
        "d_in": model.params.d_in,
        "d": model.params.d,
        "arrays": [[name, list(arr.shape)] for name, arr in arrays.items()],
        "stopped_epoch": model.stopped_epoch,
        "best_epoch": model.best_epoch,
        "config": {
            "objective": model.config.objective,
            "neg_source": model.config.neg_source,
            "head": model.config.head,
            "d": model.config.d,
            "hidden": model.config.hidden,
            "lr": model.config.lr,
            "l2": model.config.l2,
            "epochs_max": model.config.epochs_max,
            "batch": model.config.batch,
            "seed": model.config.seed,
        },
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        for arr in arrays.values():
            fh.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def load_checkpoint(path: str | Path) -> tuple[ModelParams, dict]:
    """Inverse of save_checkpoint; returns float64 parameters plus the
    decoded header."""
    raw = Path(path).read_bytes()
    if len(raw) < 4:
        raise TruncatedFile("checkpoint shorter than its length prefix")
    (header_len,) = struct.unpack("<I", raw[:4])
    if len(raw) < 4 + header_len:
        raise TruncatedFile("checkpoint header cut short")
    try:
        header = json.loads(raw[4 : 4 + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointFormatError(f"unreadable checkpoint header: {exc}") from None
    if header.get("magic") != CHECKPOINT_MAGIC:
        raise CheckpointFormatError("missing checkpoint magic")
    offset = 4 + header_len
    loaded: dict[str, np.ndarray] = {}
    for name, shape in header["arrays"]:
        count = int(np.prod(shape)) if shape else 1
        nbytes = 4 * count
        if len(raw) < offset + nbytes:
            raise TruncatedFile(f"checkpoint blob cut short in {name}")
        flat = np.frombuffer(raw[offset : offset + nbytes], dtype="<f4")
        loaded[name] = flat.reshape(shape).astype(np.float64)
        offset += nbytes
    if offset != len(raw):
        raise CheckpointFormatError("trailing bytes after parameter blob")
    params = ModelParams(
        head=header["head"],
        user_table=loaded["user_table"],
        proj_w=loaded["proj_w"],
        proj_b=loaded["proj_b"],
        mlp_w1=loaded.get("mlp_w1"),
        mlp_b1=loaded.get("mlp_b1"),
        mlp_w2=loaded.get("mlp_w2"),
        mlp_b2=loaded.get("mlp_b2"),
    )
    return params, header
