"""Layer primitives with explicit forward/backward passes.

Tensors are numpy arrays laid out (batch, channels, height, width) for
convolutions and (batch, features) for dense layers.  Convolution is valid
mode, stride 1, cross-correlation.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


# -- functional ops -------------------------------------------------------------

def conv2d_forward(x, w, b):
    if x.ndim != 4 or w.ndim != 4:
        raise ValueError("conv2d expects 4-D input and weights")
    if x.shape[1] != w.shape[1]:
        raise ValueError(f"input has {x.shape[1]} channels, kernel expects {w.shape[1]}")
    kh, kw = w.shape[2:]
    if kh > x.shape[2] or kw > x.shape[3]:
        raise ValueError(f"kernel {kh}x{kw} larger than input {x.shape[2]}x{x.shape[3]}")
    win = sliding_window_view(x, (kh, kw), axis=(2, 3))  # B,C,Ho,Wo,kh,kw
    out = np.tensordot(win, w, axes=([1, 4, 5], [1, 2, 3]))  # B,Ho,Wo,F
    out = out.transpose(0, 3, 1, 2)
    return out + b[None, :, None, None]


def conv2d_backward(x, w, grad_out, need_input_grad: bool = True):
    """Returns ``(grad_x, grad_w, grad_b)``; ``grad_x`` is None if not needed."""
    kh, kw = w.shape[2:]
    ho, wo = x.shape[2] - kh + 1, x.shape[3] - kw + 1
    if grad_out.shape != (x.shape[0], w.shape[0], ho, wo):
        raise ValueError(f"grad_out shape {grad_out.shape} inconsistent with forward "
                         f"{(x.shape[0], w.shape[0], ho, wo)}")
    grad_b = grad_out.sum(axis=(0, 2, 3))
    win = sliding_window_view(x, (kh, kw), axis=(2, 3))
    grad_w = np.tensordot(grad_out, win, axes=([0, 2, 3], [0, 2, 3]))  # F,C,kh,kw
    grad_x = None
    if need_input_grad:
        gpad = np.pad(grad_out, ((0, 0), (0, 0), (kh - 1, kh - 1), (kw - 1, kw - 1)))
        gwin = sliding_window_view(gpad, (kh, kw), axis=(2, 3))  # B,F,H,W,kh,kw
        wflip = w[:, :, ::-1, ::-1]
        grad_x = np.tensordot(gwin, wflip, axes=([1, 4, 5], [0, 2, 3])).transpose(0, 3, 1, 2)
    return grad_x, grad_w, grad_b


def dense_forward(x, w, b):
    if x.shape[-1] != w.shape[0]:
        raise ValueError(f"dense input width {x.shape[-1]} != {w.shape[0]}")
    return x @ w + b


def dense_backward(x, w, grad_out):
    return grad_out @ w.T, x.T @ grad_out, grad_out.sum(axis=0)


def relu_forward(x):
    return np.maximum(x, 0.0)


def relu_backward(x, grad_out):
    return grad_out * (x > 0)


def softmax(z):
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def dropout(x, rate: float, train: bool, rng=None):
    """Inverted dropout; returns ``(y, mask)`` with ``mask`` None in eval mode."""
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must lie in [0, 1), got {rate}")
    if not train or rate == 0.0:
        return x, None
    keep = (rng.random(x.shape, dtype=x.dtype) >= rate).astype(x.dtype) / (1.0 - rate)
    return x * keep, keep


# -- layer objects ----------------------------------------------------------------

class Layer:
    kind = "layer"
    params: dict

    def __init__(self):
        self.params = {}
        self.grads = {}

    def out_shape(self, in_shape):
        return in_shape

    def spec(self):
        return {"kind": self.kind}

    def init(self, rng, dtype):
        pass


class Conv2D(Layer):
    kind = "conv2d"

    def __init__(self, in_ch: int, filters: int, kh: int, kw: int):
        super().__init__()
        self.in_ch, self.filters, self.kh, self.kw = in_ch, filters, kh, kw
        self.first = False

    def init(self, rng, dtype):
        fan_in = self.in_ch * self.kh * self.kw
        fan_out = self.filters * self.kh * self.kw
        lim = np.sqrt(6.0 / (fan_in + fan_out))
        self.params = {"W": rng.uniform(-lim, lim, (self.filters, self.in_ch, self.kh, self.kw)).astype(dtype),
                       "b": np.zeros(self.filters, dtype=dtype)}

    def out_shape(self, s):
        c, h, w = s
        if c != self.in_ch:
            raise ValueError(f"conv2d expects {self.in_ch} channels, got {c}")
        if self.kh > h or self.kw > w:
            raise ValueError(f"kernel {self.kh}x{self.kw} does not fit {h}x{w}")
        return (self.filters, h - self.kh + 1, w - self.kw + 1)

    def forward(self, x, train, rng):
        self.x = x
        return conv2d_forward(x, self.params["W"], self.params["b"])

    def backward(self, g):
        gx, gw, gb = conv2d_backward(self.x, self.params["W"], g, need_input_grad=not self.first)
        self.grads = {"W": gw, "b": gb}
        return gx

    def spec(self):
        return {"kind": self.kind, "in_ch": self.in_ch, "filters": self.filters,
                "kh": self.kh, "kw": self.kw}


class Dense(Layer):
    kind = "dense"

    def __init__(self, n_in: int, n_out: int):
        super().__init__()
        self.n_in, self.n_out = n_in, n_out

    def init(self, rng, dtype):
        lim = np.sqrt(6.0 / (self.n_in + self.n_out))
        self.params = {"W": rng.uniform(-lim, lim, (self.n_in, self.n_out)).astype(dtype),
                       "b": np.zeros(self.n_out, dtype=dtype)}

    def out_shape(self, s):
        if s != (self.n_in,):
            raise ValueError(f"dense expects ({self.n_in},), got {s}")
        return (self.n_out,)

    def forward(self, x, train, rng):
        self.x = x
        return dense_forward(x, self.params["W"], self.params["b"])

    def backward(self, g):
        gx, gw, gb = dense_backward(self.x, self.params["W"], g)
        self.grads = {"W": gw, "b": gb}
        return gx

    def spec(self):
        return {"kind": self.kind, "n_in": self.n_in, "n_out": self.n_out}


class ReLU(Layer):
    kind = "relu"

    def forward(self, x, train, rng):
        self.x = x
        return relu_forward(x)

    def backward(self, g):
        return relu_backward(self.x, g)


class Dropout(Layer):
    kind = "dropout"

    def __init__(self, rate: float):
        super().__init__()
        if not 0.0 <= rate < 1.0:
            raise ValueError(f"dropout rate must lie in [0, 1), got {rate}")
        self.rate = rate

    def forward(self, x, train, rng):
        y, self.mask = dropout(x, self.rate, train, rng)
        return y

    def backward(self, g):
        return g if self.mask is None else g * self.mask

    def spec(self):
        return {"kind": self.kind, "rate": self.rate}


class Flatten(Layer):
    kind = "flatten"

    def out_shape(self, s):
        return (int(np.prod(s)),)

    def forward(self, x, train, rng):
        self.shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, g):
        return g.reshape(self.shape)


class Softmax(Layer):
    """Output layer; its backward is fused with cross-entropy in the model."""

    kind = "softmax"

    def forward(self, x, train, rng):
        return softmax(x)

    def backward(self, g):
        raise RuntimeError("softmax backward is fused with the cross-entropy loss")


LAYER_KINDS = {c.kind: c for c in (Conv2D, Dense, ReLU, Dropout, Flatten, Softmax)}


def layer_from_spec(spec: dict) -> Layer:
    spec = dict(spec)
    cls = LAYER_KINDS[spec.pop("kind")]
    return cls(**spec)
