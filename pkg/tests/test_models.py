import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import dydq.models as models
from dydq.data import Dataset, Interaction, child_seed, partition_leave_one_out
from dydq.embeddings import EmbeddingStore
from dydq.errors import DataError, TrainingDiverged, TruncatedFile
from dydq.errors import CheckpointFormatError
from dydq.models import (
    ModelParams,
    TrainConfig,
    TrainedModel,
    bce_loss,
    bce_objective,
    bpr_loss,
    bpr_objective,
    init_params,
    load_checkpoint,
    make_score_fn,
    rank_images,
    save_checkpoint,
    score,
    score_batch,
    train,
)
from dydq.pu import ReliableNegatives
from dydq.synthetic import separable_instance


def small_instance(n_users=3, n_images=9, dim=4, seed=0):
    rng = np.random.default_rng(seed)
    store = EmbeddingStore(dim=dim)
    for i in range(n_images):
        store.add(i, rng.normal(size=dim).astype(np.float32))
    rows = [Interaction(p % n_users, 0, p, "r") for p in range(n_images)]
    d = Dataset(rows, n_users, 1, n_images, [], [], [])
    return d, store


def test_init_params_ranges_and_shapes():
    cfg = TrainConfig(head="mlp", d=6, hidden=5, seed=2)
    params = init_params(4, 10, cfg)
    assert params.user_table.shape == (4, 6)
    assert params.proj_w.shape == (10, 6)
    assert params.mlp_w1.shape == (12, 5)
    assert params.mlp_w2.shape == (5,)
    assert params.mlp_b2.shape == ()
    for arr in (params.user_table, params.proj_w, params.mlp_w1, params.mlp_w2):
        assert np.all(np.abs(arr) <= 0.05)
    assert np.all(params.proj_b == 0) and np.all(params.mlp_b1 == 0)
    again = init_params(4, 10, cfg)
    assert np.array_equal(params.user_table, again.user_table)
    dot = init_params(4, 10, TrainConfig(head="dot", d=6, seed=2))
    assert dot.mlp_w1 is None


@pytest.mark.parametrize(
    "kwargs",
    [
        {"objective": "hinge"},
        {"neg_source": "hard"},
        {"head": "bilinear"},
        {"val_metric": "recall"},
        {"d": 0},
        {"lr": 0.0},
        {"l2": -1.0},
        {"early_stop_patience": 0},
        {"negatives_per_positive": 0},
    ],
)
def test_train_config_validation(kwargs):
    with pytest.raises(ValueError):
        TrainConfig(**kwargs)


def test_score_matches_batch_and_validates():
    _, store = small_instance()
    params = init_params(3, 4, TrainConfig(head="dot", d=5))
    e = store.get(0).astype(np.float64)
    batch = score_batch(params, np.array([1]), e[None, :])
    assert score(params, 1, e) == float(batch[0])
    with pytest.raises(DataError):
        score(params, 9, e)
    with pytest.raises(DataError):
        score(params, 0, np.zeros(3))


def test_loss_oracle_values():
    assert bce_loss(0.0, 1) == pytest.approx(math.log(2.0), rel=1e-15)
    assert bce_loss(0.0, 0) == pytest.approx(math.log(2.0), rel=1e-15)
    assert bce_loss(20.0, 1) == pytest.approx(2.061153620314381e-09, rel=1e-12)
    assert bpr_loss(1.0, 0.0) == pytest.approx(0.31326168751822286, rel=1e-15)
    assert bpr_loss(0.0, 0.0) == pytest.approx(math.log(2.0), rel=1e-15)
    assert bpr_loss(1.0, 0.0, l2_term=0.5) == pytest.approx(0.81326168751822286, rel=1e-15)
    # saturation-free far into the tails
    assert bce_loss(500.0, 1) == 0.0
    assert math.isfinite(bpr_loss(-500.0, 500.0))


@given(
    base=st.floats(min_value=-20, max_value=20),
    step=st.floats(min_value=1e-6, max_value=10),
)
@settings(max_examples=60, deadline=None)
def test_bpr_strictly_decreasing_in_margin(base, step):
    assert bpr_loss(base + step, 0.0) < bpr_loss(base, 0.0)


def flatten(params):
    return np.concatenate([arr.ravel() for arr in params.arrays().values()])


def unflatten_into(params, flat):
    pos = 0
    for arr in params.arrays().values():
        n = arr.size
        arr.ravel()[:] = flat[pos : pos + n]
        pos += n


def finite_difference_check(head, objective, seed, l2=1e-3, h=1e-3):
    rng = np.random.default_rng(seed)
    cfg = TrainConfig(head=head, d=4, hidden=3, seed=int(rng.integers(2**31)))
    params = init_params(3, 5, cfg)
    # move off the uniform init so tanh units are active
    for arr in params.arrays().values():
        arr += rng.normal(scale=0.3, size=arr.shape)
    users = rng.integers(0, 3, size=6)
    emb_a = rng.normal(size=(6, 5))
    emb_b = rng.normal(size=(6, 5))
    if objective == "bce":
        labels = rng.integers(0, 2, size=6).astype(float)
        fn = lambda: bce_objective(params, users, emb_a, labels, l2=l2)  # noqa: E731
    else:
        fn = lambda: bpr_objective(params, users, emb_a, emb_b, l2=l2)  # noqa: E731
    _, grads = fn()
    analytic = np.concatenate([grads[k].ravel() for k in params.arrays()])
    theta = flatten(params).copy()
    numeric = np.empty_like(analytic)
    for j in range(theta.size):
        for sign, slot in ((+1, 0), (-1, 1)):
            shifted = theta.copy()
            shifted[j] += sign * h
            unflatten_into(params, shifted)
            loss = fn()[0]
            if slot == 0:
                up = loss
            else:
                down = loss
        numeric[j] = (up - down) / (2 * h)
    unflatten_into(params, theta)
    denom = np.maximum(np.abs(analytic) + np.abs(numeric), 1e-8)
    return float(np.max(np.abs(analytic - numeric) / denom))


@pytest.mark.parametrize("head", ["dot", "mlp"])
@pytest.mark.parametrize("objective", ["bce", "bpr"])
def test_gradients_match_finite_differences(head, objective):
    for seed in range(3):
        assert finite_difference_check(head, objective, seed) < 1e-4


def test_momentum_update_math():
    params = ModelParams(
        head="dot",
        user_table=np.array([[1.0, 2.0]]),
        proj_w=np.zeros((2, 2)),
        proj_b=np.zeros(2),
    )
    opt = models._Momentum(params, lr=0.1, momentum=0.9)
    g = {"user_table": np.array([[1.0, 0.0]]), "proj_w": np.zeros((2, 2)), "proj_b": np.zeros(2)}
    opt.step(params, g)
    assert np.allclose(params.user_table, [[0.9, 2.0]])
    opt.step(params, g)
    # velocity: 0.9*1 + 1 = 1.9
    assert np.allclose(params.user_table, [[0.9 - 0.19, 2.0]])


def test_momentum_detects_divergence():
    params = ModelParams(
        head="dot", user_table=np.ones((1, 1)), proj_w=np.ones((1, 1)), proj_b=np.zeros(1)
    )
    opt = models._Momentum(params, lr=1.0)
    with pytest.raises(TrainingDiverged):
        opt.step(params, {"user_table": np.array([[np.inf]]), "proj_w": np.zeros((1, 1)), "proj_b": np.zeros(1)})


def run_training(objective="bpr", neg_source="random", rn=None, epochs=3, batch=4, val_fraction=0.4):
    d, store = small_instance(n_users=4, n_images=20)
    split = partition_leave_one_out(d, mode="one_out_test", seed=0, val_user_fraction=val_fraction)
    cfg = TrainConfig(objective=objective, neg_source=neg_source, head="dot", d=4,
                      epochs_max=epochs, batch=batch, seed=1)
    return train(d, split, store, rn, cfg), d, split, store


def test_train_runs_and_logs():
    model, d, split, store = run_training()
    assert model.stopped_epoch == len(model.history) <= 3
    assert model.best_epoch <= model.stopped_epoch
    for e, stats in enumerate(model.history, start=1):
        assert stats.epoch == e
        assert math.isfinite(stats.train_loss)
    assert model.params.user_table.shape == (4, 4)


def test_train_without_validation_uses_full_budget():
    model, *_ = run_training(val_fraction=0.0, epochs=4)
    assert model.stopped_epoch == 4
    assert all(s.val_metric == 0.0 for s in model.history)
    assert model.best_epoch == 4


def test_train_requires_positives_and_rn():
    d, store = small_instance()
    split = partition_leave_one_out(d, mode="one_out_test", seed=0)
    empty = type(split)(train=[], validation=split.validation, test=split.test)
    with pytest.raises(DataError):
        train(d, empty, store, None, TrainConfig())
    with pytest.raises(DataError):
        train(d, split, store, None, TrainConfig(neg_source="reliable"))


def test_reliable_fallback_counted():
    rn = ReliableNegatives(percentile_q=0.1, candidate_cap=None)  # empty for every user
    model, _, split, _ = run_training(neg_source="reliable", rn=rn, epochs=1)
    assert model.history[0].rn_fallbacks == len(split.train)


def test_sampled_negatives_respect_pools():
    d, store = small_instance(n_users=4, n_images=20)
    split = partition_leave_one_out(d, mode="one_out_test", seed=0, val_user_fraction=0.0)
    pos_by_user = {}
    for it in split.train:
        pos_by_user.setdefault(it.user, set()).add(it.image)

    calls = []
    original = EmbeddingStore.matrix

    def spy(self, image_ids):
        calls.append(list(image_ids))
        return original(self, image_ids)

    cfg = TrainConfig(objective="bpr", head="dot", d=4, epochs_max=1, batch=100, seed=3)
    EmbeddingStore.matrix = spy
    try:
        train(d, split, store, None, cfg)
    finally:
        EmbeddingStore.matrix = original
    # one epoch, one batch: calls are [pos], [neg], then validation lookups
    pos_ids, neg_ids = calls[0], calls[1]
    perm = np.random.default_rng(child_seed(3, "epoch", 1)).permutation(len(split.train))
    users = [split.train[i].user for i in perm]
    assert pos_ids == [split.train[i].image for i in perm]
    for u, neg in zip(users, neg_ids):
        assert neg not in pos_by_user[u]


def test_reliable_negatives_drawn_from_rn_sets():
    d, store = small_instance(n_users=4, n_images=20)
    split = partition_leave_one_out(d, mode="one_out_test", seed=0, val_user_fraction=0.0)
    rn = ReliableNegatives(percentile_q=0.1, candidate_cap=None)
    allowed = {u: {(u + 7) % 20, (u + 11) % 20} - d.images_by_user.get(u, set()) for u in range(4)}
    rn.per_user = {u: {p: 0.0 for p in allowed[u]} for u in range(4)}

    calls = []
    original = EmbeddingStore.matrix

    def spy(self, image_ids):
        calls.append(list(image_ids))
        return original(self, image_ids)

    cfg = TrainConfig(objective="bpr", neg_source="reliable", head="dot", d=4,
                      epochs_max=1, batch=100, seed=5)
    EmbeddingStore.matrix = spy
    try:
        model = train(d, split, store, rn, cfg)
    finally:
        EmbeddingStore.matrix = original
    neg_ids = calls[1]
    perm = np.random.default_rng(child_seed(5, "epoch", 1)).permutation(len(split.train))
    users = [split.train[i].user for i in perm]
    for u, neg in zip(users, neg_ids):
        assert neg in allowed[u]
    assert model.history[0].rn_fallbacks == 0


def test_bce_takes_two_steps_per_batch(monkeypatch):
    counts = {"n": 0}
    original = models._Momentum.step

    def counting_step(self, params, grads):
        counts["n"] += 1
        return original(self, params, grads)

    monkeypatch.setattr(models._Momentum, "step", counting_step)
    run_training(objective="bce", epochs=1, batch=100, val_fraction=0.0)
    bce_steps = counts["n"]
    counts["n"] = 0
    run_training(objective="bpr", epochs=1, batch=100, val_fraction=0.0)
    assert (bce_steps, counts["n"]) == (2, 1)


def test_early_stopping_restores_best_epoch():
    d, store, _ = separable_instance()
    split = partition_leave_one_out(d, mode="one_out_test", seed=0, val_user_fraction=0.4)
    cfg = TrainConfig(objective="bpr", head="dot", d=8, lr=0.05, epochs_max=200,
                      batch=16, seed=3, val_metric="auc")
    model = train(d, split, store, None, cfg)
    assert model.stopped_epoch < 200  # patience kicked in
    best = max(s.val_metric for s in model.history)
    assert model.history[model.best_epoch - 1].val_metric == best
    from dydq.evaluation import cases_from_interactions, evaluate

    cases, _ = cases_from_interactions(d, split.validation)
    report = evaluate(cases, make_score_fn(model.params, store))
    assert report.auc == pytest.approx(best, abs=1e-12)


def test_rank_images_ordering_and_ties():
    store = EmbeddingStore(dim=2)
    store.add(0, np.array([1.0, 0.0], dtype=np.float32))
    store.add(1, np.array([1.0, 0.0], dtype=np.float32))  # exact duplicate
    store.add(2, np.array([0.0, 1.0], dtype=np.float32))
    params = ModelParams(
        head="dot",
        user_table=np.array([[1.0, 0.0]]),
        proj_w=np.eye(2),
        proj_b=np.zeros(2),
    )
    ranked = rank_images(params, 0, [2, 1, 0], store)
    assert [r[0] for r in ranked] == [0, 1, 2]  # tie between 0/1 broken by id
    with pytest.raises(ValueError):
        rank_images(params, 0, [], store)


def test_rank_images_invariant_under_monotone_transform(monkeypatch):
    store = EmbeddingStore(dim=2)
    for i in range(6):
        store.add(i, np.array([i * 0.1, 1.0], dtype=np.float32))
    params = init_params(2, 2, TrainConfig(d=3, seed=0))
    base = rank_images(params, 1, list(range(6)), store)

    original = models.score_batch

    def warped(p, users, emb):
        s = original(p, users, emb)
        return np.tanh(s) * 3.0 + 1.0  # strictly increasing

    monkeypatch.setattr(models, "score_batch", warped)
    transformed = rank_images(params, 1, list(range(6)), store)
    assert [r[0] for r in base] == [r[0] for r in transformed]


def test_make_score_fn_matches_score():
    d, store = small_instance()
    params = init_params(3, 4, TrainConfig(d=6, seed=4))
    fn = make_score_fn(params, store)
    got = fn(2, [0, 3, 5])
    expected = [score(params, 2, store.get(p).astype(np.float64)) for p in (0, 3, 5)]
    assert np.allclose(got, expected, atol=1e-12)


@pytest.mark.parametrize("head", ["dot", "mlp"])
def test_checkpoint_round_trip(tmp_path, head):
    cfg = TrainConfig(head=head, d=5, hidden=4, seed=6)
    params = init_params(3, 7, cfg)
    model = TrainedModel(params=params, stopped_epoch=9, best_epoch=4, config=cfg)
    path = tmp_path / "model.ckpt"
    save_checkpoint(model, path)
    loaded, header = load_checkpoint(path)
    assert header["head"] == head
    assert header["stopped_epoch"] == 9 and header["best_epoch"] == 4
    assert header["config"]["seed"] == 6
    for name, arr in params.arrays().items():
        extracted = loaded.arrays()[name]
        assert np.array_equal(extracted, arr.astype("<f4").astype(np.float64))


def test_checkpoint_rejects_malformed(tmp_path):
    cfg = TrainConfig(d=3, seed=0)
    model = TrainedModel(params=init_params(2, 4, cfg), config=cfg)
    path = tmp_path / "model.ckpt"
    save_checkpoint(model, path)
    raw = path.read_bytes()

    (tmp_path / "short.ckpt").write_bytes(raw[:2])
    with pytest.raises(TruncatedFile):
        load_checkpoint(tmp_path / "short.ckpt")

    (tmp_path / "cut.ckpt").write_bytes(raw[:-5])
    with pytest.raises(TruncatedFile):
        load_checkpoint(tmp_path / "cut.ckpt")

    (tmp_path / "trail.ckpt").write_bytes(raw + b"\x00\x00")
    with pytest.raises(CheckpointFormatError):
        load_checkpoint(tmp_path / "trail.ckpt")

    import struct as _struct

    bad_header = b'{"magic": "nope"}'
    (tmp_path / "magic.ckpt").write_bytes(_struct.pack("<I", len(bad_header)) + bad_header)
    with pytest.raises(CheckpointFormatError):
        load_checkpoint(tmp_path / "magic.ckpt")

    garbled = _struct.pack("<I", 5) + b"\xff\xfe\x00\x01\x02"
    (tmp_path / "junk.ckpt").write_bytes(garbled)
    with pytest.raises(CheckpointFormatError):
        load_checkpoint(tmp_path / "junk.ckpt")


def test_checkpoint_scores_survive_round_trip(tmp_path):
    model, d, split, store = run_training(epochs=2)
    path = tmp_path / "model.ckpt"
    save_checkpoint(model, path)
    loaded, _ = load_checkpoint(path)
    for u in range(d.n_users):
        a = score(model.params, u, store.get(0).astype(np.float64))
        b = score(loaded, u, store.get(0).astype(np.float64))
        assert math.isclose(a, b, rel_tol=1e-6, abs_tol=1e-6)  # f32 quantization only
