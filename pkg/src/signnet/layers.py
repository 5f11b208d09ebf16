"""Layer kernels with hand-derived backward passes.

Every layer caches what its backward pass needs during a training-mode
forward, and clears the cache once backward has consumed it.  Activations
use [N, ...] batches; convolutional tensors are [N, C, H, W].

In deterministic mode the convolution accumulates its terms in the fixed
order bias, then (row offset, column offset, input channel) ascending,
which makes it bit-exact against a naive six-loop evaluation of

    Z[n, k, i, j] = b[k] + sum_u sum_v sum_c X[n, c, i*s+u, j*s+v] * W[k, c, u, v]
"""

from __future__ import annotations

import numpy as np

from . import tensor as tc
from .errors import ParameterError, ShapeError, StateError
from .tensor import Prng, Tensor

ACTIVATION_KINDS = ("step", "sigmoid", "tanh", "relu")
PADDING_MODES = ("same", "none")


def sigmoid(x: Tensor) -> Tensor:
    """Numerically safe logistic function."""
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def softmax(x: Tensor) -> Tensor:
    """Row-wise max-shifted softmax for [N, C] scores."""
    z = x - x.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


class Layer:
    """Base layer: parameter dict, gradient dict, forward cache."""

    def __init__(self):
        self.params: dict[str, Tensor] = {}
        self.grads: dict[str, Tensor] = {}
        self._cache = None

    def forward(self, x: Tensor, train: bool = False, rng: Prng | None = None) -> Tensor:
        raise NotImplementedError

    def backward(self, upstream: Tensor) -> Tensor:
        raise NotImplementedError

    def _take_cache(self):
        if self._cache is None:
            raise StateError(f"{type(self).__name__}.backward called without a forward cache")
        cache, self._cache = self._cache, None
        return cache


class Dense(Layer):
    """Fully connected layer; weight shape [in_features, out_features]."""

    def __init__(self, in_features: int, out_features: int, dtype=np.float32):
        super().__init__()
        if in_features <= 0 or out_features <= 0:
            raise ParameterError(f"bad dense size {in_features}->{out_features}")
        self.in_features = in_features
        self.out_features = out_features
        self.params = {
            "w": np.zeros((in_features, out_features), dtype=dtype),
            "b": np.zeros(out_features, dtype=dtype),
        }

    def forward(self, x, train=False, rng=None):
        if x.ndim != 2 or x.shape[1] != self.in_features:
            raise ShapeError(
                f"dense expects [N, {self.in_features}], got {x.shape}"
            )
        if train:
            self._cache = x
        return tc.matmul(x, self.params["w"]) + self.params["b"]

    def backward(self, upstream):
        x = self._take_cache()
        self.grads = {
            "w": x.T @ upstream,
            "b": upstream.sum(axis=0),
        }
        return upstream @ self.params["w"].T


def _conv_geometry(h, w, kernel, stride, padding):
    kh, kw = kernel
    sh, sw = stride
    if padding == "same":
        pad_h, pad_w = kh - 1, kw - 1
    else:
        pad_h = pad_w = 0
    out_h = (h + pad_h - kh) // sh + 1
    out_w = (w + pad_w - kw) // sw + 1
    if out_h <= 0 or out_w <= 0:
        raise ShapeError(
            f"kernel {kernel} with stride {stride} does not fit {h}x{w} "
            f"under {padding!r} padding"
        )
    return pad_h, pad_w, out_h, out_w


def _as_pair(value) -> tuple[int, int]:
    if isinstance(value, (tuple, list)):
        a, b = value
        return int(a), int(b)
    return int(value), int(value)


class Conv2D(Layer):
    """2-D convolution (cross-correlation); kernels [out, in, kh, kw]."""

    def __init__(
        self,
        in_channels: int,
        out_channels: int,
        kernel,
        stride=1,
        padding: str = "same",
        dtype=np.float32,
    ):
        super().__init__()
        self.kernel = _as_pair(kernel)
        self.stride = _as_pair(stride)
        if padding not in PADDING_MODES:
            raise ParameterError(f"padding must be one of {PADDING_MODES}, got {padding!r}")
        if min(self.kernel) <= 0 or min(self.stride) <= 0:
            raise ParameterError(f"bad kernel {self.kernel} or stride {self.stride}")
        if in_channels <= 0 or out_channels <= 0:
            raise ParameterError(f"bad channel counts {in_channels}->{out_channels}")
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.padding = padding
        kh, kw = self.kernel
        self.params = {
            "w": np.zeros((out_channels, in_channels, kh, kw), dtype=dtype),
            "b": np.zeros(out_channels, dtype=dtype),
        }

    def _pad(self, x):
        pad_h, pad_w, out_h, out_w = _conv_geometry(
            x.shape[2], x.shape[3], self.kernel, self.stride, self.padding
        )
        if pad_h == 0 and pad_w == 0:
            return x, (0, 0), out_h, out_w
        top, left = pad_h // 2, pad_w // 2
        x_pad = np.zeros(
            (x.shape[0], x.shape[1], x.shape[2] + pad_h, x.shape[3] + pad_w),
            dtype=x.dtype,
        )
        x_pad[:, :, top : top + x.shape[2], left : left + x.shape[3]] = x
        return x_pad, (top, left), out_h, out_w

    def forward(self, x, train=False, rng=None):
        if x.ndim != 4 or x.shape[1] != self.in_channels:
            raise ShapeError(
                f"conv expects [N, {self.in_channels}, H, W], got {x.shape}"
            )
        x_pad, offsets, out_h, out_w = self._pad(x)
        n = x.shape[0]
        kh, kw = self.kernel
        sh, sw = self.stride
        w, b = self.params["w"], self.params["b"]
        if tc.is_deterministic():
            # accumulator starts at the bias; terms added in (u, v, c) order
            out = np.empty((n, self.out_channels, out_h, out_w), dtype=x.dtype)
            out[:] = b[None, :, None, None]
            for u in range(kh):
                for v in range(kw):
                    for c in range(self.in_channels):
                        xs = x_pad[:, c, u : u + sh * out_h : sh, v : v + sw * out_w : sw]
                        out += xs[:, None, :, :] * w[None, :, c, u, v, None, None]
        else:
            windows = np.lib.stride_tricks.sliding_window_view(
                x_pad, (kh, kw), axis=(2, 3)
            )[:, :, ::sh, ::sw, :, :]
            out = np.tensordot(windows, w, axes=([1, 4, 5], [1, 2, 3]))
            out = np.ascontiguousarray(out.transpose(0, 3, 1, 2)) + b[None, :, None, None]
            out = out.astype(x.dtype, copy=False)
        if train:
            self._cache = (x_pad, offsets, x.shape, out_h, out_w)
        return out

    def backward(self, upstream):
        x_pad, (top, left), x_shape, out_h, out_w = self._take_cache()
        kh, kw = self.kernel
        sh, sw = self.stride
        w = self.params["w"]
        dw = np.zeros_like(w)
        dx_pad = np.zeros_like(x_pad)
        for u in range(kh):
            for v in range(kw):
                xs = x_pad[:, :, u : u + sh * out_h : sh, v : v + sw * out_w : sw]
                dw[:, :, u, v] = np.tensordot(upstream, xs, axes=([0, 2, 3], [0, 2, 3]))
                contrib = np.tensordot(upstream, w[:, :, u, v], axes=([1], [0]))
                dx_pad[:, :, u : u + sh * out_h : sh, v : v + sw * out_w : sw] += (
                    contrib.transpose(0, 3, 1, 2)
                )
        self.grads = {"w": dw, "b": upstream.sum(axis=(0, 2, 3))}
        return np.ascontiguousarray(
            dx_pad[:, :, top : top + x_shape[2], left : left + x_shape[3]]
        )


def conv2d_forward(x, kernels, bias, stride=1, padding: str = "same"):
    """One convolution pass with explicit kernels, no layer bookkeeping."""
    kernels = np.asarray(kernels)
    bias = np.asarray(bias)
    if kernels.ndim != 4:
        raise ShapeError(f"kernels must be [out, in, kh, kw], got {kernels.shape}")
    if bias.shape != (kernels.shape[0],):
        raise ShapeError(f"bias must be [{kernels.shape[0]}], got {bias.shape}")
    layer = Conv2D(
        kernels.shape[1],
        kernels.shape[0],
        kernels.shape[2:4],
        stride,
        padding,
        dtype=kernels.dtype,
    )
    layer.params["w"] = kernels
    layer.params["b"] = bias
    return layer.forward(x)


class Pool2D(Layer):
    """Max or mean pooling over non-padded windows."""

    def __init__(self, kind: str, kernel, stride):
        super().__init__()
        if kind not in ("max", "mean"):
            raise ParameterError(f"pool kind must be 'max' or 'mean', got {kind!r}")
        self.kind = kind
        self.kernel = _as_pair(kernel)
        self.stride = _as_pair(stride)
        if min(self.kernel) <= 0 or min(self.stride) <= 0:
            raise ParameterError(f"bad kernel {self.kernel} or stride {self.stride}")

    def forward(self, x, train=False, rng=None):
        if x.ndim != 4:
            raise ShapeError(f"pool expects [N, C, H, W], got {x.shape}")
        n, c, h, w = x.shape
        kh, kw = self.kernel
        sh, sw = self.stride
        if h < kh or w < kw:
            raise ShapeError(f"pool window {self.kernel} exceeds input {h}x{w}")
        out_h = (h - kh) // sh + 1
        out_w = (w - kw) // sw + 1
        # windows stacked in row-major (u, v) order so argmax ties resolve
        # to the first row-major position
        slices = [
            x[:, :, u : u + sh * out_h : sh, v : v + sw * out_w : sw]
            for u in range(kh)
            for v in range(kw)
        ]
        stack = np.stack(slices, axis=0)
        if self.kind == "max":
            idx = stack.argmax(axis=0)
            out = np.take_along_axis(stack, idx[None], axis=0)[0]
            if train:
                self._cache = (idx, x.shape, out_h, out_w)
        else:
            acc = np.zeros_like(stack[0])
            for plane in stack:
                acc += plane
            out = acc * (1.0 / (kh * kw))
            out = out.astype(x.dtype, copy=False)
            if train:
                self._cache = (None, x.shape, out_h, out_w)
        return out

    def backward(self, upstream):
        idx, x_shape, out_h, out_w = self._take_cache()
        n, c, h, w = x_shape
        kh, kw = self.kernel
        sh, sw = self.stride
        dx = np.zeros(x_shape, dtype=upstream.dtype)
        ns, cs, rows, cols = np.indices((n, c, out_h, out_w), sparse=True)
        if self.kind == "max":
            u = idx // kw
            v = idx % kw
            np.add.at(dx, (ns, cs, rows * sh + u, cols * sw + v), upstream)
        else:
            share = upstream * (1.0 / (kh * kw))
            share = share.astype(upstream.dtype, copy=False)
            for u in range(kh):
                for v in range(kw):
                    dx[:, :, u : u + sh * out_h : sh, v : v + sw * out_w : sw] += share
        return dx


class Dropout(Layer):
    """Inverted dropout: survivors are scaled by 1/(1-rate) at train time."""

    def __init__(self, rate: float = 0.5):
        super().__init__()
        if not 0.0 <= rate < 1.0:
            raise ParameterError(f"dropout rate must be in [0, 1), got {rate}")
        self.rate = rate
        self.enabled = True  # models may switch dropout off run-wide

    def forward(self, x, train=False, rng=None):
        if not train or self.rate == 0.0 or not self.enabled:
            if train:
                self._cache = "identity"
            return x
        if rng is None:
            raise StateError("dropout in train mode needs the run Prng")
        u = rng.uniform_block(x.size).reshape(x.shape)
        mask = (u >= self.rate).astype(x.dtype)
        mask *= 1.0 / (1.0 - self.rate)
        self._cache = mask
        return x * mask

    def backward(self, upstream):
        mask = self._take_cache()
        if isinstance(mask, str):  # rate 0 or eval-style pass-through
            return upstream
        return upstream * mask


class Activation(Layer):
    """Pointwise nonlinearity: step, sigmoid, tanh, or relu."""

    def __init__(self, kind: str):
        super().__init__()
        if kind not in ACTIVATION_KINDS:
            raise ParameterError(
                f"activation must be one of {ACTIVATION_KINDS}, got {kind!r}"
            )
        self.kind = kind

    def forward(self, x, train=False, rng=None):
        if self.kind == "step":
            out = np.where(x >= 0, x.dtype.type(1.0), x.dtype.type(-1.0))
            cache = None
        elif self.kind == "sigmoid":
            out = sigmoid(x)
            cache = out
        elif self.kind == "tanh":
            out = np.tanh(x)
            cache = out
        else:  # relu; derivative taken as 0 at x == 0
            mask = x > 0
            out = np.where(mask, x, x.dtype.type(0.0))
            cache = mask
        if train:
            self._cache = (self.kind, cache)
        return out

    def backward(self, upstream):
        kind, cache = self._take_cache()
        if kind == "step":
            return np.zeros_like(upstream)
        if kind == "sigmoid":
            return upstream * cache * (1.0 - cache)
        if kind == "tanh":
            return upstream * (1.0 - cache * cache)
        return upstream * cache  # relu mask


class Softmax(Layer):
    """Row-wise softmax over class scores."""

    def forward(self, x, train=False, rng=None):
        if x.ndim != 2:
            raise ShapeError(f"softmax expects [N, C], got {x.shape}")
        out = softmax(x)
        if train:
            self._cache = out
        return out

    def backward(self, upstream):
        p = self._take_cache()
        inner = (upstream * p).sum(axis=1, keepdims=True)
        return p * (upstream - inner)


class Flatten(Layer):
    def forward(self, x, train=False, rng=None):
        if train:
            self._cache = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, upstream):
        shape = self._take_cache()
        return upstream.reshape(shape)


class ResidualAdd(Layer):
    """Adds the skip input to the branch output, optionally projecting the
    skip through a 1x1 strided convolution when shapes differ."""

    def __init__(self, projection: Conv2D | None = None):
        super().__init__()
        self.projection = projection
        if projection is not None:
            self.params = {
                "pw": projection.params["w"],
                "pb": projection.params["b"],
            }

    def forward(self, branch: Tensor, skip: Tensor, train=False, rng=None):
        if self.projection is not None:
            skip = self.projection.forward(skip, train=train)
        if branch.shape != skip.shape:
            raise ShapeError(
                f"residual add shapes differ: branch {branch.shape} vs skip {skip.shape}"
            )
        if train:
            self._cache = "ready"
        return branch + skip

    def backward(self, upstream):
        self._take_cache()
        if self.projection is not None:
            d_skip = self.projection.backward(upstream)
            self.grads = {
                "pw": self.projection.grads["w"],
                "pb": self.projection.grads["b"],
            }
        else:
            d_skip = upstream
        return upstream, d_skip
