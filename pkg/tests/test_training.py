"""Training loop, best-checkpoint rule, evaluation, inference helpers."""

import os
from collections import Counter

import numpy as np
import pytest

from signnet.config_text import parse_model_config
from signnet.data import scan_manifest, stratified_split, synthetic_manifest
from signnet.errors import (
    ConfigError,
    ParameterError,
    TrainingDiverged,
)
from signnet.models import Model, load_checkpoint
from signnet.training import (
    ConfusionMatrix,
    TrainConfig,
    TrainReport,
    bench_inference,
    evaluate,
    infer_single,
    load_subset,
    resolve_graph,
    train_run,
    write_curves_csv,
)


@pytest.fixture(scope="module")
def glyph_setup(mini_glyph_root):
    entries, hist = scan_manifest(mini_glyph_root)
    split = stratified_split(entries, seed=2)
    return mini_glyph_root, entries, split.by_path()


@pytest.fixture(scope="module")
def trained(glyph_setup, mini_config_path, tmp_path_factory):
    root, entries, membership = glyph_setup
    out = str(tmp_path_factory.mktemp("run"))
    config = TrainConfig(
        model=mini_config_path, lr=0.05, epochs=2, batch_size=8,
        seed=3, input_side=16,
    )
    report = train_run(config, entries, membership, root, out)
    return root, entries, membership, report


def test_config_validation():
    with pytest.raises(ParameterError):
        TrainConfig(epochs=0)
    with pytest.raises(ParameterError):
        TrainConfig(batch_size=0)
    with pytest.raises(ParameterError):
        TrainConfig(lr=-0.1)
    with pytest.raises(ParameterError):
        TrainConfig(optimizer="lbfgs")
    with pytest.raises(ParameterError):
        TrainConfig(augment="flip")


def test_resolve_graph_preset_and_file(mini_config_path):
    graph = resolve_graph(TrainConfig(model="ann", input_side=8), ["a", "b", "c"])
    assert graph.class_count == 3
    assert graph.class_names == ["a", "b", "c"]
    graph = resolve_graph(TrainConfig(model=mini_config_path), list("abcd"))
    assert graph.class_count == 4
    with pytest.raises(ConfigError, match="declares 4 classes"):
        resolve_graph(TrainConfig(model=mini_config_path), ["a", "b", "c"])


def test_load_subset_membership(glyph_setup):
    root, entries, membership = glyph_setup
    xs, ys = load_subset(entries, membership, "val", root, 16)
    want = sum(tag == "val" for tag in membership.values())
    assert xs.shape == (want, 1, 16, 16)
    assert xs.dtype == np.float32
    assert ys.dtype == np.int64
    assert set(int(v) for v in ys) <= {0, 1, 2, 3}
    with pytest.raises(ParameterError):
        load_subset(entries, membership, "holdout", root, 16)


def test_zero_lr_keeps_validation_flat(glyph_setup, mini_config_path, tmp_path):
    root, entries, membership = glyph_setup
    config = TrainConfig(
        model=mini_config_path, lr=0.0, epochs=2, batch_size=8, seed=1,
        input_side=16,
    )
    report = train_run(config, entries, membership, root, str(tmp_path))
    assert report.epochs_run == 2
    # parameters never move, so validation repeats and the first epoch keeps
    # the best-checkpoint slot (strict improvement required)
    assert report.val_loss[0] == report.val_loss[1]
    assert report.val_acc[0] == report.val_acc[1]
    assert report.best_epoch == 1
    # train batches are reshuffled per epoch, so the same per-sample losses
    # get regrouped and the f32 means round differently at ~1e-8
    assert report.train_loss[0] == pytest.approx(report.train_loss[1], rel=1e-6)


def test_two_runs_bitwise_identical(glyph_setup, mini_config_path, tmp_path):
    root, entries, membership = glyph_setup
    outs = []
    for sub in ("a", "b"):
        out = tmp_path / sub
        config = TrainConfig(
            model=mini_config_path, lr=0.05, epochs=2, batch_size=8, seed=3,
            input_side=16,
        )
        report = train_run(config, entries, membership, root, str(out))
        outs.append((report, out / "best.ckpt"))
    ra, rb = outs[0][0], outs[1][0]
    assert ra.train_loss == rb.train_loss
    assert ra.val_loss == rb.val_loss
    assert ra.best_epoch == rb.best_epoch
    assert outs[0][1].read_bytes() == outs[1][1].read_bytes()


def test_tiny_cnn_learns(glyph_setup, mini_config_path, tmp_path):
    root, entries, membership = glyph_setup
    config = TrainConfig(
        model=mini_config_path, optimizer="sgd", lr=0.1, epochs=6,
        batch_size=8, seed=1, input_side=16,
    )
    report = train_run(config, entries, membership, root, str(tmp_path))
    assert report.train_loss[-1] < report.train_loss[0]
    assert report.checkpoint_path is not None
    assert os.path.exists(report.checkpoint_path)


def test_augmented_run_stays_finite(glyph_setup, mini_config_path, tmp_path):
    root, entries, membership = glyph_setup
    config = TrainConfig(
        model=mini_config_path, lr=0.05, epochs=1, batch_size=8, seed=4,
        input_side=16, augment="crop-jitter",
    )
    report = train_run(config, entries, membership, root, str(tmp_path))
    assert np.isfinite(report.train_loss[0])


def test_divergence_carries_partial_report(glyph_setup, mini_config_path, tmp_path):
    root, entries, membership = glyph_setup
    config = TrainConfig(
        model=mini_config_path, lr=1e30, epochs=3, batch_size=8, seed=0,
        input_side=16,
    )
    with np.errstate(over="ignore", invalid="ignore"):
        with pytest.raises(TrainingDiverged) as info:
            train_run(config, entries, membership, root, str(tmp_path))
    exc = info.value
    assert exc.report is not None
    assert exc.report.diverged_at == (exc.epoch, exc.batch)
    assert exc.epoch >= 1
    curves = tmp_path / "curves.csv"
    write_curves_csv(exc.report, str(curves))  # partial epochs only
    assert curves.read_text().startswith("epoch,train_loss")


def test_epoch_log_lines(glyph_setup, mini_config_path, tmp_path):
    root, entries, membership = glyph_setup
    lines = []
    config = TrainConfig(
        model=mini_config_path, lr=0.05, epochs=2, batch_size=8, seed=5,
        input_side=16,
    )
    train_run(config, entries, membership, root, str(tmp_path), log=lines.append)
    assert len(lines) == 2
    assert lines[0].startswith("epoch 1 train_loss")
    assert "val_acc" in lines[0]


def test_best_checkpoint_tracks_min_val_loss(trained):
    _, _, _, report = trained
    best = int(np.argmin(report.val_loss)) + 1
    assert report.best_epoch == best
    assert report.best_val_loss == report.val_loss[best - 1]


def test_write_curves_csv_format(tmp_path):
    report = TrainReport(
        config=TrainConfig(), class_names=["a", "b"],
        train_loss=[1.5, 0.25], train_acc=[0.5, 0.75],
        val_loss=[1.25, 0.5], val_acc=[0.5, 1.0],
    )
    path = tmp_path / "curves.csv"
    write_curves_csv(report, str(path))
    assert path.read_text() == (
        "epoch,train_loss,train_acc,val_loss,val_acc\n"
        "1,1.5,0.5,1.25,0.5\n"
        "2,0.25,0.75,0.5,1\n"
    )


def _router_model():
    """Dense layer wired as the identity: predictions equal the position of
    the hot input pixel, so the confusion matrix is fully controlled."""
    graph = parse_model_config("input c=1 h=2 w=2\nflatten\ndense out=4\nsoftmax\n")
    model = Model(graph)
    model.params()["l1.dense.w"][...] = np.eye(4, dtype=np.float32)
    return model


def test_evaluate_matches_pair_counts(rs):
    model = _router_model()
    n = 600
    ys = rs.randint(0, 4, size=n).astype(np.int64)
    preds = rs.randint(0, 4, size=n)
    xs = np.zeros((n, 1, 2, 2), dtype=np.float32)
    flat = xs.reshape(n, 4)
    flat[np.arange(n), preds] = 1.0
    accuracy, matrix = evaluate(model, xs, ys)
    want = Counter(zip(ys.tolist(), preds.tolist()))
    for t in range(4):
        for p in range(4):
            assert matrix.counts[t, p] == want.get((t, p), 0)
    assert matrix.total == n
    assert np.array_equal(matrix.row_sums(), np.bincount(ys, minlength=4))
    trace = sum(want.get((c, c), 0) for c in range(4))
    assert accuracy == trace / n
    assert matrix.accuracy == accuracy


def test_evaluate_label_range_guard():
    model = _router_model()
    xs = np.zeros((2, 1, 2, 2), dtype=np.float32)
    with pytest.raises(ConfigError, match="labels reach 7"):
        evaluate(model, xs, np.array([0, 7]))


def test_confusion_csv_layout():
    matrix = ConfusionMatrix(
        class_names=["x", "y"], counts=np.array([[3, 1], [0, 2]], dtype=np.int64)
    )
    assert matrix.to_csv_text() == "x,y\n3,1\n0,2\n"
    assert matrix.accuracy == 5 / 6


def test_empty_manifest_rejected(tmp_path, mini_config_path):
    config = TrainConfig(model=mini_config_path, epochs=1)
    with pytest.raises(ParameterError):
        train_run(config, [], {}, str(tmp_path), str(tmp_path / "out"))


def test_gapped_class_indices_rejected(tmp_path, mini_config_path):
    entries = synthetic_manifest((3, 3))
    for e in entries:
        if e.class_index == 1:
            e.class_index = 2  # leave a hole at index 1
    config = TrainConfig(model=mini_config_path, epochs=1)
    with pytest.raises(ParameterError, match="contiguous"):
        train_run(config, entries, {}, str(tmp_path), str(tmp_path / "out"))


def test_infer_single_on_trained_checkpoint(trained):
    root, entries, membership, report = trained
    image_path = os.path.join(root, entries[0].path)
    name, prob, probs = infer_single(report.checkpoint_path, image_path)
    assert name in report.class_names
    assert 0.0 < prob <= 1.0
    assert probs.shape == (4,)
    assert float(probs.sum()) == pytest.approx(1.0, abs=1e-5)
    assert float(probs.max()) == pytest.approx(prob, abs=1e-12)


def test_bench_inference_report(trained):
    root, entries, _, report = trained
    image_path = os.path.join(root, entries[0].path)
    bench = bench_inference(report.checkpoint_path, image_path, iterations=5)
    assert bench.iterations == 5
    assert bench.mean_ms > 0.0
    assert bench.p95_ms >= bench.median_ms > 0.0
    with pytest.raises(ParameterError):
        bench_inference(report.checkpoint_path, image_path, iterations=0)
