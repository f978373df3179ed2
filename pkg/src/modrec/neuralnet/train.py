"""Adam, the training loop with best-validation keep, and gradient checking."""

from __future__ import annotations

import copy
import csv
import logging
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from ..iqcore import STREAM_DROPOUT, STREAM_SHUFFLE, SeedSpec, rng
from .model import Model

log = logging.getLogger(__name__)


class TrainingDiverged(RuntimeError):
    pass


@dataclass
class TrainConfig:
    batch_size: int = 1024
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    max_epochs: int = 60
    patience: int = 0          # 0 disables early stopping; best-val weights are kept regardless
    seed: int = 0
    time_budget: float = 0.0   # seconds; 0 = unlimited

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        for k in ("learning_rate", "beta1", "beta2", "eps"):
            if getattr(self, k) <= 0:
                raise ValueError(f"{k} must be > 0")
        if self.max_epochs < 1:
            raise ValueError("max_epochs must be >= 1")

    def as_dict(self):
        return asdict(self)


class Adam:
    def __init__(self, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m: dict = {}
        self.v: dict = {}
        self.t = 0

    def step(self, params: dict, grads: dict):
        """In-place update of every array in ``params``."""
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1**self.t
        c2 = 1.0 - b2**self.t
        for k, p in params.items():
            g = grads[k]
            if k not in self.m:
                self.m[k] = np.zeros_like(p)
                self.v[k] = np.zeros_like(p)
            m, v = self.m[k], self.v[k]
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def adam_step(params, grads, state, cfg: TrainConfig):
    """Functional form: ``state`` is an :class:`Adam` (created when None)."""
    if state is None:
        state = Adam(cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.eps)
    state.step(params, grads)
    return params, state


@dataclass
class History:
    epoch: list = field(default_factory=list)
    train_loss: list = field(default_factory=list)
    val_loss: list = field(default_factory=list)
    train_acc: list = field(default_factory=list)
    val_acc: list = field(default_factory=list)
    best_epoch: int = -1
    seconds: float = 0.0

    def __len__(self):
        return len(self.epoch)

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["epoch", "train_loss", "val_loss", "train_acc", "val_acc"])
            for row in zip(self.epoch, self.train_loss, self.val_loss, self.train_acc, self.val_acc):
                w.writerow([row[0]] + [f"{v:.10g}" for v in row[1:]])


def one_hot(y, n):
    out = np.zeros((len(y), n))
    out[np.arange(len(y)), np.asarray(y, dtype=np.int64)] = 1.0
    return out


def _first_nonfinite_layer(model: Model):
    for i, out in enumerate(model.outputs or []):
        if not np.all(np.isfinite(out)):
            return i, model.layers[i].kind
    return None, None


def evaluate_loss(model: Model, X, y, batch_size=1024):
    if len(y) == 0:
        return float("nan"), float("nan")
    total, correct = 0.0, 0
    oh_all = one_hot(y, model.n_classes)
    for s in range(0, len(y), batch_size):
        p = model.forward(X[s:s + batch_size], train=False)
        oh = oh_all[s:s + batch_size]
        total += model.loss(p, oh) * p.shape[0]
        correct += int(np.sum(np.argmax(p, axis=1) == y[s:s + batch_size]))
    return total / len(y), correct / len(y)


def train(model: Model, X_train, y_train, X_val, y_val, cfg: TrainConfig = TrainConfig(),
          progress=None):
    """Minibatch Adam; returns ``(model, history)`` with best-val-loss weights loaded."""
    X_train = model.check_input(X_train)
    X_val = model.check_input(X_val)
    y_train = np.asarray(y_train, dtype=np.int64)
    y_val = np.asarray(y_val, dtype=np.int64)
    opt = Adam(cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.eps)
    oh_train = one_hot(y_train, model.n_classes)
    hist = History()
    best = (np.inf, None)
    t0 = time.perf_counter()
    n = len(y_train)
    for epoch in range(cfg.max_epochs):
        perm = rng(SeedSpec(cfg.seed, STREAM_SHUFFLE, (epoch,))).permutation(n)
        loss_sum, correct = 0.0, 0
        for bi, s in enumerate(range(0, n, cfg.batch_size)):
            idx = perm[s:s + cfg.batch_size]
            drop_rng = rng(SeedSpec(cfg.seed, STREAM_DROPOUT, (epoch, bi)))
            probs = model.forward(X_train[idx], train=True, rng=drop_rng)
            loss = model.loss(probs, oh_train[idx])
            if not np.isfinite(loss):
                model.forward(X_train[idx], train=True,
                              rng=rng(SeedSpec(cfg.seed, STREAM_DROPOUT, (epoch, bi))),
                              keep_outputs=True)
                li, kind = _first_nonfinite_layer(model)
                where = f"layer {li} ({kind})" if li is not None else "the loss itself"
                raise TrainingDiverged(f"non-finite loss at epoch {epoch} batch {bi}; "
                                       f"first non-finite value in {where}")
            model.backward(probs, oh_train[idx])
            opt.step(model.get_params(), model.get_grads())
            loss_sum += loss * idx.size
            correct += int(np.sum(np.argmax(probs, axis=1) == y_train[idx]))
        vl, va = evaluate_loss(model, X_val, y_val)
        hist.epoch.append(epoch)
        hist.train_loss.append(loss_sum / n)
        hist.train_acc.append(correct / n)
        hist.val_loss.append(vl)
        hist.val_acc.append(va)
        if vl < best[0]:
            best = (vl, copy.deepcopy(model.get_params()))
            hist.best_epoch = epoch
        log.info("epoch %d train_loss %.4f val_loss %.4f val_acc %.4f", epoch, loss_sum / n, vl, va)
        if progress:
            progress(epoch, hist)
        if cfg.patience and epoch - hist.best_epoch >= cfg.patience:
            break
        if cfg.time_budget and time.perf_counter() - t0 > cfg.time_budget:
            break
    if best[1] is not None:
        model.set_params(best[1])
    hist.seconds = time.perf_counter() - t0
    return model, hist


def predict(model: Model, X, batch_size=1024):
    """Class probabilities in eval mode (dropout off)."""
    return model.predict_proba(X, batch_size)


def _loss_at(model, X, oh, seed):
    p = model.forward(X, train=True, rng=rng(SeedSpec(seed, STREAM_DROPOUT)))
    return model.loss(p, oh), p


def grad_check(model: Model, X, y, eps: float = 1e-5, seed: int = 0, floor: float = 1e-8):
    """Max relative error between analytic and central-difference gradients.

    Dropout masks are frozen by reseeding before every forward pass.
    Relative error is ``|a - n| / max(|a|, |n|, floor)``.
    """
    oh = one_hot(y, model.n_classes)
    _, p = _loss_at(model, X, oh, seed)
    analytic = {k: v.copy() for k, v in model.backward(p, oh).items()}
    worst = 0.0
    for name, layer, key in model.param_items():
        arr = layer.params[key]
        flat = arr.reshape(-1)
        num = np.empty(flat.size)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            lp, _ = _loss_at(model, X, oh, seed)
            flat[i] = orig - eps
            lm, _ = _loss_at(model, X, oh, seed)
            flat[i] = orig
            num[i] = (lp - lm) / (2 * eps)
        a = analytic[name].reshape(-1)
        rel = np.abs(a - num) / np.maximum(np.maximum(np.abs(a), np.abs(num)), floor)
        worst = max(worst, float(rel.max()))
    return worst
