"""Sequential network container and the CNN / CNN2 / DNN-feat profiles."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from ..iqcore import STREAM_INIT, SeedSpec, rng
from .layers import Conv2D, Dense, Dropout, Flatten, Layer, ReLU, Softmax, layer_from_spec

IQ_SHAPE = (1, 2, 128)
FEAT_SHAPE = (32,)


@dataclass
class ModelSpec:
    name: str
    input_shape: tuple
    layers: list = field(default_factory=list)   # layer spec dicts
    l2_conv_weight: float = 0.0
    l1_act: float = 0.0
    l1_layer: int | None = None   # index of the layer whose output gets the L1 penalty

    def as_dict(self):
        d = asdict(self)
        d["input_shape"] = list(self.input_shape)
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        d["input_shape"] = tuple(d["input_shape"])
        return cls(**d)


def _conv_stack(name, f1, f2, dense, drop, n_classes, l2, l1):
    c1 = (f1, 1, 3)
    c2 = (f2, 2, 3)
    h1 = (f1, 2, 128 - 2)
    flat = f2 * 1 * (h1[2] - 2)
    layers = [
        {"kind": "conv2d", "in_ch": 1, "filters": c1[0], "kh": c1[1], "kw": c1[2]},
        {"kind": "relu"},
        {"kind": "dropout", "rate": drop},
        {"kind": "conv2d", "in_ch": f1, "filters": c2[0], "kh": c2[1], "kw": c2[2]},
        {"kind": "relu"},
        {"kind": "dropout", "rate": drop},
        {"kind": "flatten"},
        {"kind": "dense", "n_in": flat, "n_out": dense},
        {"kind": "relu"},
        {"kind": "dropout", "rate": drop},
        {"kind": "dense", "n_in": dense, "n_out": n_classes},
        {"kind": "softmax"},
    ]
    return ModelSpec(name, IQ_SHAPE, layers, l2, l1, 8 if l1 > 0 else None)


def cnn_spec(n_classes=11, filters=(64, 16), dense=128, dropout=0.5,
             l2_conv_weight=1e-4, l1_act=1e-5):
    return _conv_stack("CNN", filters[0], filters[1], dense, dropout, n_classes,
                       l2_conv_weight, l1_act)


def cnn2_spec(n_classes=11, filters=(256, 80), dense=256, dropout=0.6):
    return _conv_stack("CNN2", filters[0], filters[1], dense, dropout, n_classes, 0.0, 0.0)


def dnn_feat_spec(n_classes=11, widths=(512, 256, 128), dropout=0.5, n_in=32):
    layers = []
    prev = n_in
    for w in widths:
        layers += [{"kind": "dense", "n_in": prev, "n_out": w}, {"kind": "relu"},
                   {"kind": "dropout", "rate": dropout}]
        prev = w
    layers += [{"kind": "dense", "n_in": prev, "n_out": n_classes}, {"kind": "softmax"}]
    return ModelSpec("DNN-feat", (n_in,), layers)


PROFILES = {"cnn": cnn_spec, "cnn2": cnn2_spec, "dnn-feat": dnn_feat_spec}


class Model:
    """Sequential stack ending in softmax, trained with cross-entropy."""

    def __init__(self, spec: ModelSpec, seed=0, dtype=np.float64):
        self.spec = spec
        self.dtype = np.dtype(dtype)
        self.layers: list[Layer] = [layer_from_spec(s) for s in spec.layers]
        if not self.layers or self.layers[-1].kind != "softmax":
            raise ValueError("model must end in a softmax layer")
        self.shapes = [tuple(spec.input_shape)]
        for layer in self.layers:
            self.shapes.append(tuple(layer.out_shape(self.shapes[-1])))
        convs = [l for l in self.layers if isinstance(l, Conv2D)]
        if convs:
            convs[0].first = self.layers.index(convs[0]) == 0
        g = rng(SeedSpec(int(seed), STREAM_INIT))
        for layer in self.layers:
            layer.init(g, self.dtype)

    @property
    def n_classes(self):
        return self.shapes[-1][0]

    # parameters are addressed as "<layer index>.<name>"
    def param_items(self):
        for i, layer in enumerate(self.layers):
            for k in sorted(layer.params):
                yield f"{i}.{k}", layer, k

    def get_params(self) -> dict:
        return {name: layer.params[k] for name, layer, k in self.param_items()}

    def set_params(self, params: dict):
        for name, layer, k in self.param_items():
            arr = np.asarray(params[name], dtype=self.dtype)
            if arr.shape != layer.params[k].shape:
                raise ValueError(f"parameter {name} shape {arr.shape} != {layer.params[k].shape}")
            layer.params[k] = arr.copy()

    def get_grads(self) -> dict:
        return {name: layer.grads[k] for name, layer, k in self.param_items()}

    def n_params(self):
        return sum(p.size for p in self.get_params().values())

    def check_input(self, x):
        x = np.asarray(x, dtype=self.dtype)
        if tuple(x.shape[1:]) != tuple(self.spec.input_shape):
            raise ValueError(f"input shape {tuple(x.shape[1:])} != model input "
                             f"{tuple(self.spec.input_shape)}")
        return x

    def forward(self, x, train=False, rng=None, keep_outputs=False):
        x = self.check_input(x)
        self.outputs = [] if keep_outputs else None
        for layer in self.layers:
            x = layer.forward(x, train, rng)
            if keep_outputs:
                self.outputs.append(x)
            if self.spec.l1_layer is not None and layer is self.layers[self.spec.l1_layer]:
                self._l1_h = x
        return x

    def penalty(self) -> float:
        p = 0.0
        if self.spec.l2_conv_weight > 0:
            p += self.spec.l2_conv_weight * sum(float(np.sum(l.params["W"] ** 2))
                                                for l in self.layers if isinstance(l, Conv2D))
        if self.spec.l1_act > 0 and self.spec.l1_layer is not None:
            h = self._l1_h
            p += self.spec.l1_act * float(np.sum(np.abs(h))) / h.shape[0]
        return p

    def loss(self, probs, onehot) -> float:
        """Mean cross-entropy plus enabled penalties (needs a prior forward)."""
        ce = -np.mean(np.log(np.clip(np.sum(probs * onehot, axis=1), 1e-300, None)))
        return float(ce) + self.penalty()

    def backward(self, probs, onehot):
        """Gradients of :meth:`loss`; fills each layer's ``grads``."""
        n = probs.shape[0]
        g = ((probs - onehot) / n).astype(self.dtype, copy=False)
        for i in range(len(self.layers) - 2, -1, -1):
            layer = self.layers[i]
            if i == self.spec.l1_layer and self.spec.l1_act > 0:
                g = g + (self.spec.l1_act / n) * np.sign(self._l1_h)
            g = layer.backward(g)
            if isinstance(layer, Conv2D) and self.spec.l2_conv_weight > 0:
                layer.grads["W"] = layer.grads["W"] + 2.0 * self.spec.l2_conv_weight * layer.params["W"]
        return self.get_grads()

    def predict_proba(self, x, batch_size=1024):
        x = self.check_input(x)
        out = [self.forward(x[s:s + batch_size], train=False) for s in range(0, x.shape[0], batch_size)]
        return np.concatenate(out) if out else np.empty((0, self.n_classes))


def build_model(name: str, seed=0, dtype=np.float64, **kw) -> Model:
    try:
        spec = PROFILES[name.lower()](**kw)
    except KeyError:
        raise ValueError(f"unknown model {name!r}; choose from {sorted(PROFILES)}") from None
    return Model(spec, seed=seed, dtype=dtype)
