import numpy as np
import pytest

from synthsieve import datagen, models, trainer
from synthsieve.errors import DataError, GradientError
from synthsieve.manifest import DatasetManifest, ImageSample
from synthsieve.trainer import AdamState, TrainConfig, adam_step, effective_lr, kfold_split

import oracles


# --- Adam -----------------------------------------------------------------------

def test_adam_zero_gradients_leave_params_unchanged():
    cfg = TrainConfig(decay=0.0)
    p = np.array([1.0, -2.0, 3.0])
    params = [("p", p)]
    state = AdamState()
    adam_step(params, {"p": np.zeros(3)}, state, 1, cfg)
    assert np.array_equal(p, [1.0, -2.0, 3.0])
    assert np.all(state.m["p"] == 0.0) and np.all(state.v["p"] == 0.0)


def test_adam_first_step_magnitude_is_lr():
    cfg = TrainConfig(learning_rate=0.001, decay=0.0)
    p = np.array([5.0])
    state = AdamState()
    adam_step([("p", p)], {"p": np.array([3.7])}, state, 1, cfg)
    # bias-corrected first step: |delta| = lr * |g| / (|g| + eps) ~= lr
    assert abs((5.0 - p[0]) - cfg.learning_rate) <= 1e-9


def test_adam_matches_reference_on_quadratic():
    # loss = 0.5 * sum((p - target)^2), gradient p - target
    r = np.random.default_rng(0)
    target = r.standard_normal(6)
    p0 = r.standard_normal(6)
    cfg = TrainConfig(learning_rate=0.01, decay=1e-3)
    ref_traj = oracles.adam_ref(p0, lambda p: p - target, 100,
                                lr=cfg.learning_rate, decay=cfg.decay,
                                beta1=cfg.beta1, beta2=cfg.beta2, eps=cfg.adam_eps)
    p = p0.copy()
    state = AdamState()
    for t in range(1, 101):
        adam_step([("p", p)], {"p": p - target}, state, t, cfg)
        rel = np.abs(p - ref_traj[t - 1]) / np.maximum(np.abs(ref_traj[t - 1]), 1e-12)
        assert rel.max() <= 1e-10


def test_adam_monotone_on_convex_quadratic():
    cfg = TrainConfig(learning_rate=0.01, decay=0.0)
    p = np.array([3.0])
    state = AdamState()
    losses = []
    for t in range(1, 501):
        losses.append(0.5 * p[0] ** 2)
        adam_step([("p", p)], {"p": p.copy()}, state, t, cfg)
    diffs = np.diff(losses)
    assert np.all(diffs < 1e-12)


def test_effective_lr_decay():
    cfg = TrainConfig(learning_rate=0.001, decay=1e-6)
    lrs = [effective_lr(cfg, t) for t in range(1, 200)]
    assert all(a > b for a, b in zip(lrs, lrs[1:]))
    assert abs(lrs[0] - 0.001 / (1 + 1e-6)) <= 1e-12


def test_adam_errors():
    cfg = TrainConfig()
    state = AdamState()
    with pytest.raises(ValueError, match="step index"):
        adam_step([("p", np.ones(2))], {"p": np.ones(2)}, state, 0, cfg)
    with pytest.raises(GradientError, match="p"):
        adam_step([("p", np.ones(2))], {"p": np.array([1.0, np.nan])}, state, 1, cfg)
    with pytest.raises(ValueError, match="shape"):
        adam_step([("p", np.ones(2))], {"p": np.ones(3)}, state, 1, cfg)


# --- k-fold ---------------------------------------------------------------------

def test_kfold_even_split():
    folds = kfold_split(10, 5, seed=3)
    assert [len(f) for f in folds] == [2] * 5
    union = np.concatenate(folds)
    assert len(np.unique(union)) == 10
    assert sorted(union.tolist()) == list(range(10))


def test_kfold_uneven_sizes():
    folds = kfold_split(11, 5, seed=1)
    assert sorted(len(f) for f in folds) == [2, 2, 2, 2, 3]
    assert len(folds[0]) == 3  # first folds take the remainder


def test_kfold_deterministic_and_seed_sensitive():
    a = kfold_split(1000, 5, seed=9)
    b = kfold_split(1000, 5, seed=9)
    c = kfold_split(1000, 5, seed=10)
    for fa, fb in zip(a, b):
        assert np.array_equal(fa, fb)
    assert any(not np.array_equal(fa, fc) for fa, fc in zip(a, c))


def test_kfold_too_few_samples():
    with pytest.raises(ValueError, match="at least"):
        kfold_split(3, 5, seed=0)


# --- metrics --------------------------------------------------------------------

def test_metrics_perfect_predictions():
    labels = np.array([0] * 25 + [1] * 25)
    m = trainer.metrics_from_predictions(labels, labels.copy(), 0.1)
    assert m.accuracy == 1.0
    assert m.confusion[0, 1] == 0 and m.confusion[1, 0] == 0
    assert m.precision == (1.0, 1.0) and m.recall == (1.0, 1.0)


def test_metrics_inverted_predictions():
    labels = np.array([0] * 25 + [1] * 25)
    m = trainer.metrics_from_predictions(labels, 1 - labels)
    assert m.accuracy == 0.0
    assert np.trace(m.confusion) == 0


def test_metrics_counting():
    r = np.random.default_rng(0)
    labels = r.integers(0, 2, 40)
    preds = r.integers(0, 2, 40)
    m = trainer.metrics_from_predictions(labels, preds)
    assert m.confusion.sum() == 40


# --- fit / train -----------------------------------------------------------------

def test_fit_memorizes_two_samples():
    cam = datagen.reencode_jpeg(datagen.gen_camera_proxy(1, 64), 0.95)
    syn = datagen.reencode_jpeg(datagen.gen_synthetic_proxy(2, 64, "flat_synthetic"), 0.95)
    images = np.stack([cam, syn])
    labels = np.array([0, 1])
    cfg = TrainConfig(epochs=30, batch_size=2, seed=0, bn_refresh_samples=0)
    model = models.build_model("dws1", seed=4, input_side=64)
    records, fitted = trainer.fit(model, images, labels, cfg)
    losses = [r.train_loss for r in records]
    assert losses[-1] < 0.01
    tail = losses[3:]
    assert all(a >= b - 1e-9 for a, b in zip(tail, tail[1:]))


def _manifest_from(tmp_path, images, labels):
    from synthsieve.imageio import save_png
    samples = []
    for i, (img, label) in enumerate(zip(images, labels)):
        name = f"img_{i:03d}.png"
        save_png(img, tmp_path / name)
        samples.append(ImageSample(path=name, label=int(label), source="external",
                                   seed=i, quality=0.95, width=img.shape[1],
                                   height=img.shape[0]))
    return DatasetManifest(samples, seed=0, config_digest="t", base_dir=str(tmp_path))


def test_train_deterministic_and_validates_in_infer_mode(tmp_path, micro_train_arrays):
    images, labels = micro_train_arrays
    manifest = _manifest_from(tmp_path, images, labels)
    cfg = TrainConfig(epochs=2, batch_size=4, folds=2, seed=11, bn_refresh_samples=8)
    model = models.build_model("dws1", seed=12, input_side=64)

    report1, fold_models = trainer.train(model, manifest, cfg)
    report2, _ = trainer.train(model, manifest, cfg)
    assert len(report1.records) == cfg.folds * cfg.epochs
    for r1, r2 in zip(report1.records, report2.records):
        assert r1.train_loss == r2.train_loss  # bit-identical reruns
        assert r1.val_accuracy == r2.val_accuracy

    # fold metrics match an explicit infer-mode evaluation of the fold model
    folds = kfold_split(len(images), cfg.folds, cfg.seed)
    imgs_loaded, labels_loaded = trainer.load_manifest_images(manifest, 64)
    for fold_model, val_idx, metrics in zip(fold_models, folds, report1.fold_metrics):
        assert fold_model.mode == "infer"
        again = trainer.evaluate_arrays(fold_model, imgs_loaded[val_idx],
                                        labels_loaded[val_idx], cfg.batch_size)
        assert again.accuracy == metrics.accuracy
        assert np.array_equal(again.confusion, metrics.confusion)
        assert metrics.confusion.sum() == len(val_idx)


def test_train_rejects_single_class(tmp_path, micro_train_arrays):
    images, labels = micro_train_arrays
    manifest = _manifest_from(tmp_path, images[:10], np.zeros(10, np.int64))
    cfg = TrainConfig(epochs=1, batch_size=4, folds=2, seed=0)
    with pytest.raises(DataError, match="both classes"):
        trainer.train(models.build_model("dws1", seed=0, input_side=64), manifest, cfg)


def test_label_permutation_equivariance(tmp_path, micro_train_arrays):
    images, labels = micro_train_arrays
    (tmp_path / "a").mkdir()
    (tmp_path / "b").mkdir()
    man_a = _manifest_from(tmp_path / "a", images, labels)
    man_b = _manifest_from(tmp_path / "b", images, 1 - labels)

    model_a = models.build_model("dws1", seed=21, input_side=64)
    model_b = model_a.clone()
    head = next(l for l in model_b.layers if l.kind == "dense")
    head.weights = head.weights[:, ::-1].copy()
    head.bias = head.bias[::-1].copy()

    cfg = TrainConfig(epochs=2, batch_size=4, folds=2, seed=31, bn_refresh_samples=8)
    report_a, _ = trainer.train(model_a, man_a, cfg)
    report_b, _ = trainer.train(model_b, man_b, cfg)
    for ma, mb in zip(report_a.fold_metrics, report_b.fold_metrics):
        assert np.array_equal(mb.confusion, ma.confusion[::-1, ::-1])


def test_evaluate_empty_manifest(tmp_path):
    manifest = DatasetManifest([], seed=0, base_dir=str(tmp_path))
    model = models.build_model("dws1", seed=0, input_side=64)
    with pytest.raises(DataError, match="empty"):
        trainer.evaluate(model, manifest)


def test_write_report(tmp_path, micro_train_arrays):
    images, labels = micro_train_arrays
    manifest = _manifest_from(tmp_path, images, labels)
    cfg = TrainConfig(epochs=1, batch_size=4, folds=2, seed=1, bn_refresh_samples=8)
    report, _ = trainer.train(models.build_model("dws1", seed=1, input_side=64),
                              manifest, cfg)
    out = tmp_path / "report.tsv"
    trainer.write_report(report, out)
    lines = out.read_text().splitlines()
    assert lines[0] == "epoch\tfold\tsplit\tloss\taccuracy"
    assert len(lines) == 1 + 2 * len(report.records)
    assert lines[1].split("\t")[2] == "train"
    assert lines[2].split("\t")[2] == "val"
