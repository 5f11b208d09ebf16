"""Plain-text model configuration grammar.

One directive per line:

    input c=1 h=64 w=64
    conv out=32 k=3 s=1 pad=same
    relu | sigmoid | tanh | step
    maxpool k=2 s=2
    meanpool k=2 s=2
    dropout p=0.5
    flatten
    dense out=256
    residual begin ... residual end
    softmax

'#' starts a comment.  A `# classes: a,b,c` comment carries optional class
names through checkpoints.  Parse errors report the 1-based line number.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field

from .errors import ConfigError

ACTIVATION_WORDS = ("relu", "sigmoid", "tanh", "step")
BARE_WORDS = ACTIVATION_WORDS + ("flatten", "softmax")
CLASS_NAMES_PREFIX = "# classes:"


@dataclass
class LayerSpec:
    kind: str
    units: int = 0
    out_channels: int = 0
    kernel: int = 0
    stride: int = 0
    padding: str = ""
    rate: float = 0.0
    source: int = -2
    # derived projection on the skip link (filled by validation)
    proj_in_channels: int = 0
    proj_out_channels: int = 0
    proj_stride: int = 0

    @property
    def has_projection(self) -> bool:
        return self.proj_stride > 0


@dataclass
class ModelGraph:
    input_shape: tuple[int, int, int]
    layers: list[LayerSpec] = field(default_factory=list)
    class_names: list[str] | None = None

    @property
    def skip_links(self) -> list[tuple[int, int]]:
        return [
            (spec.source, i)
            for i, spec in enumerate(self.layers)
            if spec.kind == "residual"
        ]

    @property
    def class_count(self) -> int:
        for spec in reversed(self.layers):
            if spec.kind == "dense":
                return spec.units
        raise ConfigError("graph has no dense layer to define a class count")


def _kv_tokens(tokens, keys, lineno, kind):
    seen = {}
    for token in tokens:
        if "=" not in token:
            raise ConfigError(f"expected key=value, got {token!r}", line=lineno)
        key, _, raw = token.partition("=")
        if key not in keys:
            raise ConfigError(f"unknown {kind} key {key!r}", line=lineno)
        if key in seen:
            raise ConfigError(f"duplicate key {key!r}", line=lineno)
        seen[key] = raw
    for key in keys:
        if key not in seen:
            raise ConfigError(f"{kind} is missing key {key!r}", line=lineno)
    return seen


def _int_field(raw, key, lineno, minimum=1):
    try:
        value = int(raw)
    except ValueError:
        raise ConfigError(f"{key} must be an integer, got {raw!r}", line=lineno) from None
    if value < minimum:
        raise ConfigError(f"{key} must be >= {minimum}, got {value}", line=lineno)
    return value


def parse_model_config(text: str) -> ModelGraph:
    input_shape = None
    layers: list[LayerSpec] = []
    class_names = None
    residual_stack: list[tuple[int, int]] = []  # (source index, begin line)
    for lineno, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.strip()
        if not line:
            continue
        if line.startswith("#"):
            if line.startswith(CLASS_NAMES_PREFIX) and class_names is None:
                names = [n.strip() for n in line[len(CLASS_NAMES_PREFIX):].split(",")]
                if names and all(names):
                    class_names = names
            continue
        tokens = line.split()
        word = tokens[0]
        if input_shape is None and word != "input":
            raise ConfigError("first directive must be 'input'", line=lineno)
        if word == "input":
            if input_shape is not None:
                raise ConfigError("duplicate 'input' directive", line=lineno)
            kv = _kv_tokens(tokens[1:], ("c", "h", "w"), lineno, "input")
            input_shape = tuple(_int_field(kv[k], k, lineno) for k in ("c", "h", "w"))
        elif word == "conv":
            kv = _kv_tokens(tokens[1:], ("out", "k", "s", "pad"), lineno, "conv")
            if kv["pad"] not in ("same", "none"):
                raise ConfigError(f"pad must be same|none, got {kv['pad']!r}", line=lineno)
            layers.append(
                LayerSpec(
                    kind="conv",
                    out_channels=_int_field(kv["out"], "out", lineno),
                    kernel=_int_field(kv["k"], "k", lineno),
                    stride=_int_field(kv["s"], "s", lineno),
                    padding=kv["pad"],
                )
            )
        elif word == "dense":
            kv = _kv_tokens(tokens[1:], ("out",), lineno, "dense")
            layers.append(LayerSpec(kind="dense", units=_int_field(kv["out"], "out", lineno)))
        elif word in ("maxpool", "meanpool"):
            kv = _kv_tokens(tokens[1:], ("k", "s"), lineno, word)
            layers.append(
                LayerSpec(
                    kind=word,
                    kernel=_int_field(kv["k"], "k", lineno),
                    stride=_int_field(kv["s"], "s", lineno),
                )
            )
        elif word == "dropout":
            kv = _kv_tokens(tokens[1:], ("p",), lineno, "dropout")
            try:
                rate = float(kv["p"])
            except ValueError:
                raise ConfigError(f"p must be a real, got {kv['p']!r}", line=lineno) from None
            if not 0.0 <= rate < 1.0:
                raise ConfigError(f"p must be in [0, 1), got {rate}", line=lineno)
            layers.append(LayerSpec(kind="dropout", rate=rate))
        elif word in BARE_WORDS:
            if len(tokens) != 1:
                raise ConfigError(f"{word} takes no arguments", line=lineno)
            layers.append(LayerSpec(kind=word))
        elif word == "residual":
            if len(tokens) != 2 or tokens[1] not in ("begin", "end"):
                raise ConfigError("expected 'residual begin' or 'residual end'", line=lineno)
            if tokens[1] == "begin":
                residual_stack.append((len(layers) - 1, lineno))
            else:
                if not residual_stack:
                    raise ConfigError("'residual end' without matching begin", line=lineno)
                source, _ = residual_stack.pop()
                if source == len(layers) - 1:
                    raise ConfigError("empty residual branch", line=lineno)
                layers.append(LayerSpec(kind="residual", source=source))
        else:
            raise ConfigError(f"unknown directive {word!r}", line=lineno)
    if input_shape is None:
        raise ConfigError("missing 'input' directive")
    if residual_stack:
        raise ConfigError("unclosed 'residual begin'", line=residual_stack[-1][1])
    if not layers:
        raise ConfigError("configuration declares no layers")
    graph = ModelGraph(input_shape=input_shape, layers=layers, class_names=class_names)
    validate_graph(graph)
    return graph


def _conv_out_side(side, kernel, stride, padding):
    pad = kernel - 1 if padding == "same" else 0
    return (side + pad - kernel) // stride + 1


def validate_graph(graph: ModelGraph) -> list[tuple]:
    """Shape-check every layer; derive residual skip projections.

    Returns the per-layer output shapes ((C, H, W) or (features,)).
    """
    shapes: list[tuple] = []
    cur: tuple = tuple(graph.input_shape)
    if len(cur) != 3 or min(cur) < 1:
        raise ConfigError(f"bad input shape {cur}")

    def need_spatial(i, spec):
        if len(cur) != 3:
            raise ConfigError(f"layer {i} ({spec.kind}) needs [C, H, W] input, has {cur}")

    def need_flat(i, spec):
        if len(cur) != 1:
            raise ConfigError(f"layer {i} ({spec.kind}) needs flattened input, has {cur}")

    for i, spec in enumerate(graph.layers):
        if spec.kind == "conv":
            need_spatial(i, spec)
            out_h = _conv_out_side(cur[1], spec.kernel, spec.stride, spec.padding)
            out_w = _conv_out_side(cur[2], spec.kernel, spec.stride, spec.padding)
            if out_h < 1 or out_w < 1:
                raise ConfigError(
                    f"layer {i} (conv): kernel {spec.kernel} stride {spec.stride} "
                    f"does not fit {cur[1]}x{cur[2]}"
                )
            cur = (spec.out_channels, out_h, out_w)
        elif spec.kind in ("maxpool", "meanpool"):
            need_spatial(i, spec)
            if cur[1] < spec.kernel or cur[2] < spec.kernel:
                raise ConfigError(
                    f"layer {i} ({spec.kind}): window {spec.kernel} exceeds "
                    f"{cur[1]}x{cur[2]}"
                )
            out_h = (cur[1] - spec.kernel) // spec.stride + 1
            out_w = (cur[2] - spec.kernel) // spec.stride + 1
            cur = (cur[0], out_h, out_w)
        elif spec.kind == "flatten":
            need_spatial(i, spec)
            cur = (cur[0] * cur[1] * cur[2],)
        elif spec.kind == "dense":
            need_flat(i, spec)
            cur = (spec.units,)
        elif spec.kind == "softmax":
            need_flat(i, spec)
        elif spec.kind in ACTIVATION_WORDS or spec.kind == "dropout":
            pass
        elif spec.kind == "residual":
            source_shape = (
                tuple(graph.input_shape) if spec.source < 0 else shapes[spec.source]
            )
            if source_shape == cur:
                spec.proj_in_channels = spec.proj_out_channels = spec.proj_stride = 0
            else:
                if len(cur) != 3 or len(source_shape) != 3:
                    raise ConfigError(
                        f"layer {i} (residual): cannot reconcile {source_shape} with {cur}"
                    )
                stride = _derive_projection_stride(source_shape, cur, i)
                spec.proj_in_channels = source_shape[0]
                spec.proj_out_channels = cur[0]
                spec.proj_stride = stride
        else:
            raise ConfigError(f"layer {i}: unknown kind {spec.kind!r}")
        shapes.append(cur)
    return shapes


def _derive_projection_stride(source_shape, out_shape, index) -> int:
    for stride in range(1, source_shape[1] + 1):
        h = (source_shape[1] - 1) // stride + 1
        w = (source_shape[2] - 1) // stride + 1
        if (h, w) == (out_shape[1], out_shape[2]):
            return stride
    raise ConfigError(
        f"layer {index} (residual): no 1x1 projection maps {source_shape} to {out_shape}"
    )


def serialize_model_config(graph: ModelGraph) -> str:
    lines = []
    if graph.class_names:
        lines.append(f"{CLASS_NAMES_PREFIX} " + ",".join(graph.class_names))
    c, h, w = graph.input_shape
    lines.append(f"input c={c} h={h} w={w}")
    begins: dict[int, list[int]] = defaultdict(list)
    for i, spec in enumerate(graph.layers):
        if spec.kind == "residual":
            begins[spec.source + 1].append(i)
    for i, spec in enumerate(graph.layers):
        # outermost brackets (ending later) open first
        for _ in sorted(begins.get(i, ()), reverse=True):
            lines.append("residual begin")
        if spec.kind == "conv":
            lines.append(
                f"conv out={spec.out_channels} k={spec.kernel} "
                f"s={spec.stride} pad={spec.padding}"
            )
        elif spec.kind == "dense":
            lines.append(f"dense out={spec.units}")
        elif spec.kind in ("maxpool", "meanpool"):
            lines.append(f"{spec.kind} k={spec.kernel} s={spec.stride}")
        elif spec.kind == "dropout":
            lines.append(f"dropout p={spec.rate!r}")
        elif spec.kind == "residual":
            lines.append("residual end")
        else:
            lines.append(spec.kind)
    return "\n".join(lines) + "\n"
