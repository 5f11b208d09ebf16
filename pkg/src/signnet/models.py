"""Model presets, the runtime model, initialization, and checkpoints.

The runtime `Model` instantiates layer kernels from a `ModelGraph`, runs
whole-model forward passes, and backpropagates a score gradient through the
layer stack (residual skips included).  Checkpoints are a little-endian
binary container carrying the serialized graph text plus float32 parameter
payloads.
"""

from __future__ import annotations

import struct

import numpy as np

from . import layers as L
from .config_text import (
    LayerSpec,
    ModelGraph,
    parse_model_config,
    serialize_model_config,
    validate_graph,
)
from .errors import CheckpointError, ConfigError, ParameterError, ShapeError
from .tensor import Prng, Tensor

PRESET_NAMES = ("ann", "cnn", "resnet18")

CHECKPOINT_MAGIC = b"ASLN"
CHECKPOINT_VERSION = 1


def build_preset(
    name: str,
    input_side: int = 64,
    class_count: int = 32,
    class_names: list[str] | None = None,
) -> ModelGraph:
    if input_side < 1:
        raise ParameterError(f"input side must be >= 1, got {input_side}")
    if class_count < 2:
        raise ParameterError(f"class count must be >= 2, got {class_count}")
    if class_names is not None and len(class_names) != class_count:
        raise ParameterError(
            f"{len(class_names)} class names for {class_count} classes"
        )
    if name == "ann":
        specs = [
            LayerSpec(kind="flatten"),
            LayerSpec(kind="dense", units=512),
            LayerSpec(kind="relu"),
            LayerSpec(kind="dropout", rate=0.5),
            LayerSpec(kind="dense", units=class_count),
            LayerSpec(kind="softmax"),
        ]
    elif name == "cnn":
        specs = []
        for channels in (32, 64, 128, 128):
            specs.extend(
                [
                    LayerSpec(kind="conv", out_channels=channels, kernel=3, stride=1, padding="same"),
                    LayerSpec(kind="relu"),
                    LayerSpec(kind="maxpool", kernel=2, stride=2),
                    LayerSpec(kind="dropout", rate=0.5),
                ]
            )
        specs.extend(
            [
                LayerSpec(kind="flatten"),
                LayerSpec(kind="dense", units=256),
                LayerSpec(kind="relu"),
                LayerSpec(kind="dropout", rate=0.5),
                LayerSpec(kind="dense", units=class_count),
                LayerSpec(kind="softmax"),
            ]
        )
    elif name == "resnet18":
        specs = [
            LayerSpec(kind="conv", out_channels=64, kernel=7, stride=2, padding="same"),
            LayerSpec(kind="relu"),
            LayerSpec(kind="maxpool", kernel=3, stride=2),
        ]
        side = _conv_side(input_side, 7, 2, "same")
        if side < 3:
            raise ConfigError(f"input side {input_side} too small for the resnet stem")
        side = (side - 3) // 2 + 1
        for stage_index, channels in enumerate((64, 128, 256, 512)):
            for unit in range(2):
                stride = 2 if stage_index > 0 and unit == 0 else 1
                source = len(specs) - 1
                specs.extend(
                    [
                        LayerSpec(kind="conv", out_channels=channels, kernel=3, stride=stride, padding="same"),
                        LayerSpec(kind="relu"),
                        LayerSpec(kind="conv", out_channels=channels, kernel=3, stride=1, padding="same"),
                        LayerSpec(kind="residual", source=source),
                        LayerSpec(kind="relu"),
                    ]
                )
                if stride == 2:
                    side = _conv_side(side, 3, 2, "same")
        specs.extend(
            [
                LayerSpec(kind="meanpool", kernel=side, stride=side),
                LayerSpec(kind="flatten"),
                LayerSpec(kind="dense", units=class_count),
                LayerSpec(kind="softmax"),
            ]
        )
    else:
        raise ParameterError(f"unknown preset {name!r}; expected one of {PRESET_NAMES}")
    graph = ModelGraph(
        input_shape=(1, input_side, input_side),
        layers=specs,
        class_names=list(class_names) if class_names else None,
    )
    validate_graph(graph)
    return graph


def _conv_side(side, kernel, stride, padding):
    pad = kernel - 1 if padding == "same" else 0
    return (side + pad - kernel) // stride + 1


def _make_layer(spec: LayerSpec, in_shape: tuple, dtype) -> L.Layer:
    if spec.kind == "conv":
        return L.Conv2D(
            in_shape[0], spec.out_channels, spec.kernel, spec.stride, spec.padding, dtype
        )
    if spec.kind == "dense":
        return L.Dense(in_shape[0], spec.units, dtype)
    if spec.kind in ("maxpool", "meanpool"):
        return L.Pool2D(spec.kind[:-4], spec.kernel, spec.stride)
    if spec.kind == "dropout":
        return L.Dropout(spec.rate)
    if spec.kind in L.ACTIVATION_KINDS:
        return L.Activation(spec.kind)
    if spec.kind == "flatten":
        return L.Flatten()
    if spec.kind == "softmax":
        return L.Softmax()
    if spec.kind == "residual":
        projection = None
        if spec.has_projection:
            projection = L.Conv2D(
                spec.proj_in_channels,
                spec.proj_out_channels,
                1,
                spec.proj_stride,
                "none",
                dtype,
            )
        return L.ResidualAdd(projection)
    raise ConfigError(f"unknown layer kind {spec.kind!r}")


_LAYER_TAGS = {
    L.Dense: "dense",
    L.Conv2D: "conv",
    L.ResidualAdd: "residual",
}


class Model:
    """Runtime network: layer kernels assembled per a ModelGraph."""

    def __init__(self, graph: ModelGraph, dtype=np.float32, rng: Prng | None = None):
        self.graph = graph
        self.dtype = dtype
        self.shapes = validate_graph(graph)
        self.layers: list[L.Layer] = []
        cur = tuple(graph.input_shape)
        for spec, out_shape in zip(graph.layers, self.shapes):
            self.layers.append(_make_layer(spec, cur, dtype))
            cur = out_shape
        self._ends_with_softmax = bool(graph.layers) and graph.layers[-1].kind == "softmax"
        if rng is not None:
            self.init_params(rng)

    @property
    def class_count(self) -> int:
        return self.graph.class_count

    def set_dropout(self, enabled: bool) -> None:
        for layer in self.layers:
            if isinstance(layer, L.Dropout):
                layer.enabled = enabled

    def _feeds_softmax(self, index: int) -> bool:
        for spec in self.graph.layers[index + 1 :]:
            if spec.kind in ("dropout", "flatten"):
                continue
            return spec.kind == "softmax"
        return False

    def init_params(self, rng: Prng) -> None:
        """He-style Gaussian weights (std sqrt(2/fan_in)) for relu-bound
        layers, sqrt(1/fan_in) for the classifier head; zero biases."""
        for index, layer in enumerate(self.layers):
            if isinstance(layer, L.Dense):
                gain = 1.0 if self._feeds_softmax(index) else 2.0
                self._fill(rng, layer.params["w"], layer.in_features, gain)
            elif isinstance(layer, L.Conv2D):
                fan_in = layer.in_channels * layer.kernel[0] * layer.kernel[1]
                self._fill(rng, layer.params["w"], fan_in, 2.0)
            elif isinstance(layer, L.ResidualAdd) and layer.projection is not None:
                proj = layer.projection
                self._fill(rng, proj.params["w"], proj.in_channels, 2.0)

    @staticmethod
    def _fill(rng: Prng, w: Tensor, fan_in: int, gain: float) -> None:
        std = float(np.sqrt(gain / fan_in))
        w[...] = rng.gaussian(w.size, 0.0, std).astype(w.dtype).reshape(w.shape)

    def _check_input(self, x: Tensor) -> None:
        if x.ndim != 4 or tuple(x.shape[1:]) != tuple(self.graph.input_shape):
            raise ShapeError(
                f"model expects [N, {', '.join(map(str, self.graph.input_shape))}], "
                f"got {x.shape}"
            )

    def forward(
        self,
        x: Tensor,
        train: bool = False,
        rng: Prng | None = None,
        through_softmax: bool = True,
    ) -> Tensor:
        self._check_input(x)
        stop = len(self.layers)
        if not through_softmax and self._ends_with_softmax:
            stop -= 1
        outputs: list[Tensor] = []
        cur = x
        for i in range(stop):
            spec = self.graph.layers[i]
            layer = self.layers[i]
            if spec.kind == "residual":
                skip = x if spec.source < 0 else outputs[spec.source]
                cur = layer.forward(cur, skip, train=train, rng=rng)
            else:
                cur = layer.forward(cur, train=train, rng=rng)
            outputs.append(cur)
        return cur

    def forward_scores(self, x: Tensor, train: bool = False, rng: Prng | None = None) -> Tensor:
        """Forward pass stopping before the terminal softmax."""
        return self.forward(x, train=train, rng=rng, through_softmax=False)

    def backward(self, d_scores: Tensor) -> dict[str, Tensor]:
        """Backpropagate a gradient w.r.t. the pre-softmax scores.

        Requires a preceding train-mode forward pass; returns parameter
        gradients keyed like `params()`.
        """
        last = len(self.layers) - 1
        if self._ends_with_softmax:
            last -= 1
        pending: dict[int, Tensor] = {last: d_scores}
        for i in range(last, -1, -1):
            g = pending.pop(i)
            spec = self.graph.layers[i]
            layer = self.layers[i]
            if spec.kind == "residual":
                d_branch, d_skip = layer.backward(g)
                self._accumulate(pending, i - 1, d_branch)
                self._accumulate(pending, spec.source, d_skip)
            else:
                self._accumulate(pending, i - 1, layer.backward(g))
        return self.grads()

    @staticmethod
    def _accumulate(pending: dict, index: int, grad: Tensor) -> None:
        if index < 0:
            return
        if index in pending:
            pending[index] = pending[index] + grad
        else:
            pending[index] = grad

    def _param_items(self):
        for i, layer in enumerate(self.layers):
            tag = _LAYER_TAGS.get(type(layer))
            if tag is None or not layer.params:
                continue
            for pname, arr in layer.params.items():
                yield f"l{i}.{tag}.{pname}", layer, pname, arr

    def params(self) -> dict[str, Tensor]:
        return {name: arr for name, _, _, arr in self._param_items()}

    def grads(self) -> dict[str, Tensor]:
        out = {}
        for name, layer, pname, _ in self._param_items():
            if pname in layer.grads:
                out[name] = layer.grads[pname]
        return out


def save_checkpoint(model: Model, path: str) -> None:
    text = serialize_model_config(model.graph).encode("utf-8")
    chunks = [
        CHECKPOINT_MAGIC,
        struct.pack("<I", CHECKPOINT_VERSION),
        struct.pack("<I", len(text)),
        text,
    ]
    params = model.params()
    chunks.append(struct.pack("<I", len(params)))
    for name, arr in params.items():
        name_b = name.encode("utf-8")
        chunks.append(struct.pack("<H", len(name_b)))
        chunks.append(name_b)
        chunks.append(struct.pack("<B", arr.ndim))
        chunks.append(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        chunks.append(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    with open(path, "wb") as fh:
        fh.write(b"".join(chunks))


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.data):
            raise CheckpointError(
                f"truncated checkpoint while reading {what}", field=what
            )
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def u32(self, what: str) -> int:
        return struct.unpack("<I", self.take(4, what))[0]


def load_checkpoint(path: str, dtype=np.float32) -> Model:
    with open(path, "rb") as fh:
        data = fh.read()
    reader = _Reader(data)
    magic = reader.take(4, "magic")
    if magic != CHECKPOINT_MAGIC:
        raise CheckpointError(f"bad magic {magic!r}", field="magic")
    version = reader.u32("version")
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(f"unsupported version {version}", field="version")
    text_len = reader.u32("graph length")
    text = reader.take(text_len, "graph description").decode("utf-8")
    try:
        graph = parse_model_config(text)
    except ConfigError as exc:
        raise CheckpointError(f"bad graph description: {exc}", field="graph") from exc
    model = Model(graph, dtype=dtype)
    expected = model.params()
    declared = reader.u32("parameter count")
    if declared != len(expected):
        raise CheckpointError(
            f"checkpoint declares {declared} parameters, graph has {len(expected)}",
            field="parameter count",
        )
    for name, arr in expected.items():
        name_len = struct.unpack("<H", reader.take(2, "parameter name length"))[0]
        stored_name = reader.take(name_len, "parameter name").decode("utf-8")
        if stored_name != name:
            raise CheckpointError(
                f"parameter order mismatch: stored {stored_name!r}, expected {name!r}",
                field=name,
            )
        rank = reader.take(1, f"{name} rank")[0]
        dims = struct.unpack(f"<{rank}Q", reader.take(8 * rank, f"{name} dims"))
        if dims != arr.shape:
            raise CheckpointError(
                f"parameter {name!r} has shape {dims}, graph expects {arr.shape}",
                field=name,
            )
        payload = reader.take(4 * arr.size, f"{name} payload")
        values = np.frombuffer(payload, dtype="<f4").reshape(arr.shape)
        arr[...] = values.astype(dtype, copy=False)
    if reader.pos != len(data):
        raise CheckpointError(
            f"{len(data) - reader.pos} trailing bytes after parameters",
            field="payload",
        )
    return model
