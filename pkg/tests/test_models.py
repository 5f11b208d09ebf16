"""Preset architectures, parameter init, runtime model, checkpoints."""

import struct
from collections import Counter

import numpy as np
import pytest

from signnet.config_text import parse_model_config
from signnet.errors import CheckpointError, ConfigError, ParameterError, ShapeError
from signnet.layers import softmax
from signnet.models import (
    CHECKPOINT_MAGIC,
    Model,
    build_preset,
    load_checkpoint,
    save_checkpoint,
)
from signnet.tensor import Prng

MINI_ANN = """\
input c=1 h=4 w=4
flatten
dense out=6
relu
dense out=3
softmax
"""


def kind_counts(graph):
    return Counter(spec.kind for spec in graph.layers)


def test_ann_preset_census():
    graph = build_preset("ann", input_side=64, class_count=32)
    assert [s.kind for s in graph.layers] == [
        "flatten", "dense", "relu", "dropout", "dense", "softmax",
    ]
    assert graph.layers[1].units == 512
    assert graph.layers[4].units == 32
    assert graph.class_count == 32


def test_cnn_preset_census():
    graph = build_preset("cnn", input_side=64, class_count=32)
    counts = kind_counts(graph)
    assert counts["conv"] == 4
    assert counts["maxpool"] == 4
    assert counts["dropout"] == 5
    assert counts["dense"] == 2
    assert counts["softmax"] == 1
    assert [s.out_channels for s in graph.layers if s.kind == "conv"] == [32, 64, 128, 128]
    assert graph.layers[-1].kind == "softmax"


def test_resnet18_preset_census():
    graph = build_preset("resnet18", input_side=64, class_count=32)
    counts = kind_counts(graph)
    assert counts["conv"] == 17
    assert counts["residual"] == 8
    assert counts["meanpool"] == 1
    assert counts["maxpool"] == 1
    assert counts["dense"] == 1
    projected = [s for s in graph.layers if s.kind == "residual" and s.has_projection]
    assert len(projected) == 3  # one per downsampling stage boundary
    assert all(s.proj_stride == 2 for s in projected)


def test_preset_validation():
    with pytest.raises(ParameterError, match="unknown preset"):
        build_preset("vgg")
    with pytest.raises(ParameterError):
        build_preset("ann", class_count=1)
    with pytest.raises(ParameterError):
        build_preset("ann", class_count=4, class_names=["a", "b"])
    with pytest.raises(ConfigError, match="stem"):
        build_preset("resnet18", input_side=4)


def test_init_determinism():
    graph = build_preset("cnn", input_side=16, class_count=8)
    a = Model(graph, rng=Prng(3)).params()
    b = Model(graph, rng=Prng(3)).params()
    assert set(a) == set(b)
    for name in a:
        assert np.array_equal(a[name], b[name]), name
    c = Model(graph, rng=Prng(4)).params()
    assert any(not np.array_equal(a[name], c[name]) for name in a)


def test_init_scales():
    model = Model(build_preset("ann", input_side=64, class_count=32), rng=Prng(0))
    params = model.params()
    hidden = params["l1.dense.w"]  # 4096 -> 512, relu follows
    head = params["l4.dense.w"]  # 512 -> 32, softmax follows
    assert abs(float(hidden.std()) - np.sqrt(2.0 / 4096)) < 0.03 * np.sqrt(2.0 / 4096)
    assert abs(float(head.std()) - np.sqrt(1.0 / 512)) < 0.03 * np.sqrt(1.0 / 512)
    assert float(np.abs(params["l1.dense.b"]).max()) == 0.0
    cnn = Model(build_preset("cnn", input_side=16, class_count=8), rng=Prng(1))
    first_conv = cnn.params()["l0.conv.w"]  # fan_in 1*3*3, relu follows
    assert abs(float(first_conv.std()) - np.sqrt(2.0 / 9)) < 0.15 * np.sqrt(2.0 / 9)


def test_param_names_ann():
    model = Model(build_preset("ann", input_side=8, class_count=4), rng=Prng(0))
    assert set(model.params()) == {
        "l1.dense.w", "l1.dense.b", "l4.dense.w", "l4.dense.b",
    }


def test_forward_shapes_and_probability_rows():
    model = Model(build_preset("ann", input_side=8, class_count=4), rng=Prng(2))
    x = Prng(5).gaussian(2 * 64).astype(np.float32).reshape(2, 1, 8, 8)
    probs = model.forward(x)
    assert probs.shape == (2, 4)
    assert np.allclose(probs.sum(axis=1), 1.0, atol=1e-6)
    scores = model.forward_scores(x)
    assert np.allclose(softmax(scores), probs, atol=1e-7)


def test_forward_input_guard():
    model = Model(build_preset("ann", input_side=8, class_count=4), rng=Prng(0))
    with pytest.raises(ShapeError, match="model expects"):
        model.forward(np.zeros((2, 1, 9, 9), dtype=np.float32))


def test_backward_grad_shapes():
    model = Model(parse_model_config(MINI_ANN), dtype=np.float64, rng=Prng(7))
    x = Prng(1).gaussian(2 * 16).reshape(2, 1, 4, 4)
    scores = model.forward_scores(x, train=True)
    grads = model.backward(np.ones_like(scores))
    params = model.params()
    assert set(grads) == set(params)
    for name in params:
        assert grads[name].shape == params[name].shape


def test_resnet18_runs_forward_and_backward():
    graph = build_preset("resnet18", input_side=16, class_count=4)
    model = Model(graph, rng=Prng(0))
    x = Prng(9).gaussian(256).astype(np.float32).reshape(1, 1, 16, 16)
    scores = model.forward_scores(x, train=True, rng=Prng(2))
    assert scores.shape == (1, 4)
    grads = model.backward(np.ones_like(scores))
    params = model.params()
    assert set(grads) == set(params)
    names = set(params)
    assert any(name.endswith(".residual.pw") for name in names)


def test_set_dropout_toggles_layers():
    model = Model(build_preset("cnn", input_side=16, class_count=4), rng=Prng(0))
    model.set_dropout(False)
    x = Prng(3).gaussian(256).astype(np.float32).reshape(1, 1, 16, 16)
    # with dropout off, train-mode forward needs no rng and matches eval
    train_scores = model.forward_scores(x, train=True)
    eval_scores = model.forward_scores(x)
    assert np.array_equal(train_scores, eval_scores)


def checkpoint_model():
    graph = build_preset(
        "ann", input_side=8, class_count=3, class_names=["alef", "beh", "teh"]
    )
    return Model(graph, rng=Prng(12))


def test_checkpoint_round_trip_bitwise(tmp_path):
    model = checkpoint_model()
    path = str(tmp_path / "m.ckpt")
    save_checkpoint(model, path)
    loaded = load_checkpoint(path)
    x = Prng(4).gaussian(2 * 64).astype(np.float32).reshape(2, 1, 8, 8)
    assert np.array_equal(model.forward(x), loaded.forward(x))
    for name, arr in model.params().items():
        assert np.array_equal(arr, loaded.params()[name])
    assert loaded.graph.class_names == ["alef", "beh", "teh"]


def test_checkpoint_save_load_save_identical(tmp_path):
    model = checkpoint_model()
    p1, p2 = str(tmp_path / "a.ckpt"), str(tmp_path / "b.ckpt")
    save_checkpoint(model, p1)
    save_checkpoint(load_checkpoint(p1), p2)
    with open(p1, "rb") as f1, open(p2, "rb") as f2:
        assert f1.read() == f2.read()


def test_checkpoint_load_as_float64(tmp_path):
    model = checkpoint_model()
    path = str(tmp_path / "m.ckpt")
    save_checkpoint(model, path)
    wide = load_checkpoint(path, dtype=np.float64)
    w32 = model.params()["l1.dense.w"]
    w64 = wide.params()["l1.dense.w"]
    assert w64.dtype == np.float64
    assert np.array_equal(w64, w32.astype(np.float64))


def test_checkpoint_corruptions_distinct(tmp_path):
    model = checkpoint_model()
    path = tmp_path / "m.ckpt"
    save_checkpoint(model, str(path))
    base = path.read_bytes()
    assert base[:4] == CHECKPOINT_MAGIC

    def load_bytes(data):
        bad = tmp_path / "bad.ckpt"
        bad.write_bytes(data)
        with pytest.raises(CheckpointError) as info:
            load_checkpoint(str(bad))
        return info.value

    magic_err = load_bytes(b"XSLN" + base[4:])
    version_err = load_bytes(base[:4] + struct.pack("<I", 99) + base[8:])
    trunc_err = load_bytes(base[: len(base) // 2])
    assert magic_err.field == "magic"
    assert version_err.field == "version"
    assert "truncated" in str(trunc_err)
    messages = {str(magic_err), str(version_err), str(trunc_err)}
    assert len(messages) == 3


def test_checkpoint_trailing_bytes_rejected(tmp_path):
    model = checkpoint_model()
    path = tmp_path / "m.ckpt"
    save_checkpoint(model, str(path))
    bad = tmp_path / "bad.ckpt"
    bad.write_bytes(path.read_bytes() + b"\x00\x00")
    with pytest.raises(CheckpointError, match="trailing"):
        load_checkpoint(str(bad))


def test_checkpoint_parameter_count_mismatch(tmp_path):
    model = checkpoint_model()
    path = tmp_path / "m.ckpt"
    save_checkpoint(model, str(path))
    base = bytearray(path.read_bytes())
    text_len = struct.unpack_from("<I", base, 8)[0]
    count_at = 12 + text_len
    struct.pack_into("<I", base, count_at, 99)
    bad = tmp_path / "bad.ckpt"
    bad.write_bytes(bytes(base))
    with pytest.raises(CheckpointError, match="declares 99"):
        load_checkpoint(str(bad))
