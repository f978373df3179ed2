"""Classical classifiers over expert feature vectors.

All four are written directly on numpy and are deterministic for fixed
inputs.  Each exposes ``fit(X, y)`` returning ``self`` and
``predict(X) -> int array``; :func:`make_classifier` builds one by kind name.
"""

from __future__ import annotations

import warnings

import numpy as np


def _check_dim(clf, X):
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if X.shape[1] != clf.n_features:
        raise ValueError(f"expected {clf.n_features} features, got {X.shape[1]}")
    return X


class KNN1:
    kind = "knn1"

    def fit(self, X, y):
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[0] < 1:
            raise ValueError("knn1 needs at least one training row")
        self.X = X
        self.y = np.asarray(y, dtype=np.int64)
        self.n_features = X.shape[1]
        self._sq = np.einsum("ij,ij->i", X, X)
        return self

    def nearest(self, X, chunk: int = 2048) -> np.ndarray:
        X = _check_dim(self, X)
        out = np.empty(X.shape[0], dtype=np.int64)
        for s in range(0, X.shape[0], chunk):
            q = X[s:s + chunk]
            d = self._sq[None, :] - 2.0 * q @ self.X.T + np.einsum("ij,ij->i", q, q)[:, None]
            # argmin returns the first (lowest-index) minimum
            out[s:s + chunk] = np.argmin(d, axis=1)
        return out

    def predict(self, X):
        return self.y[self.nearest(X)]

    def state(self):
        return {"X": self.X, "y": self.y}

    @classmethod
    def from_state(cls, st, meta=None):
        return cls().fit(st["X"], st["y"])


class GaussianNB:
    kind = "gnb"
    var_floor = 1e-9

    def fit(self, X, y):
        X = np.asarray(X, dtype=np.float64)
        y = np.asarray(y, dtype=np.int64)
        self.classes = np.unique(y)
        self.n_features = X.shape[1]
        means, varis, priors = [], [], []
        for c in self.classes:
            Xc = X[y == c]
            if Xc.shape[0] < 2:
                raise ValueError(f"class {c} has {Xc.shape[0]} sample(s); gaussian_nb needs >= 2")
            means.append(Xc.mean(axis=0))
            varis.append(np.maximum(Xc.var(axis=0), self.var_floor))
            priors.append(Xc.shape[0] / X.shape[0])
        self.theta = np.array(means)
        self.var = np.array(varis)
        self.log_prior = np.log(np.array(priors))
        return self

    def joint_log_likelihood(self, X):
        X = _check_dim(self, X)
        ll = -0.5 * (np.log(2 * np.pi * self.var).sum(axis=1)[None, :]
                     + (((X[:, None, :] - self.theta[None]) ** 2) / self.var[None]).sum(axis=2))
        return ll + self.log_prior[None, :]

    def predict(self, X):
        return self.classes[np.argmax(self.joint_log_likelihood(X), axis=1)]

    def state(self):
        return {"classes": self.classes, "theta": self.theta, "var": self.var,
                "log_prior": self.log_prior}

    @classmethod
    def from_state(cls, st, meta=None):
        obj = cls()
        obj.classes = st["classes"].astype(np.int64)
        obj.theta, obj.var, obj.log_prior = st["theta"], st["var"], st["log_prior"]
        obj.n_features = obj.theta.shape[1]
        return obj


def gini(counts: np.ndarray) -> np.ndarray:
    """Gini impurity of count vectors along the last axis."""
    n = counts.sum(axis=-1)
    with np.errstate(invalid="ignore", divide="ignore"):
        p = counts / n[..., None]
        g = 1.0 - (p**2).sum(axis=-1)
    return np.where(n > 0, g, 0.0)


def best_split(X, y, n_classes: int, min_leaf: int = 1):
    """Exhaustive CART split minimizing weighted Gini.

    Thresholds are midpoints between consecutive distinct values.  Ties go
    to the lowest feature index, then the lowest threshold.  Returns
    ``(feature, threshold, impurity)`` or ``None`` when no valid split exists.
    """
    n, d = X.shape
    best = None
    onehot = np.eye(n_classes, dtype=np.int64)[y]
    for f in range(d):
        order = np.argsort(X[:, f], kind="stable")
        xs = X[order, f]
        left = np.cumsum(onehot[order], axis=0)[:-1]
        right = left[-1][None, :] + onehot[order][-1][None, :] - left if n > 1 else left
        nl = np.arange(1, n)
        valid = (xs[1:] > xs[:-1]) & (nl >= min_leaf) & (n - nl >= min_leaf)
        if not valid.any():
            continue
        imp = (nl * gini(left) + (n - nl) * gini(right)) / n
        imp = np.where(valid, imp, np.inf)
        # round away float noise so equal-quality splits tie exactly
        imp = np.round(imp, 12)
        k = int(np.argmin(imp))
        if best is None or imp[k] < best[2]:
            best = (f, 0.5 * (xs[k] + xs[k + 1]), float(imp[k]))
    return best


class DecisionTree:
    kind = "tree"

    def __init__(self, max_depth: int = 16, min_leaf: int = 4):
        self.max_depth = max_depth
        self.min_leaf = min_leaf

    def fit(self, X, y):
        X = np.asarray(X, dtype=np.float64)
        y = np.asarray(y, dtype=np.int64)
        if X.shape[0] == 0:
            raise ValueError("decision tree needs data")
        self.n_features = X.shape[1]
        self.n_classes = int(y.max()) + 1
        # flat arrays: feature (-1 = leaf), threshold, left, right, value
        self.feature, self.threshold, self.left, self.right, self.value = [], [], [], [], []
        self._grow(X, y, 0)
        self.feature = np.array(self.feature, dtype=np.int64)
        self.threshold = np.array(self.threshold)
        self.left = np.array(self.left, dtype=np.int64)
        self.right = np.array(self.right, dtype=np.int64)
        self.value = np.array(self.value, dtype=np.int64)
        return self

    def _new_node(self, y):
        counts = np.bincount(y, minlength=self.n_classes)
        self.feature.append(-1)
        self.threshold.append(0.0)
        self.left.append(-1)
        self.right.append(-1)
        self.value.append(int(np.argmax(counts)))
        return len(self.feature) - 1, counts

    def _grow(self, X, y, depth):
        node, counts = self._new_node(y)
        if depth >= self.max_depth or np.count_nonzero(counts) <= 1 or y.size < 2 * self.min_leaf:
            return node
        split = best_split(X, y, self.n_classes, self.min_leaf)
        if split is None:
            return node
        f, thr, _ = split
        mask = X[:, f] <= thr
        self.feature[node] = f
        self.threshold[node] = thr
        self.left[node] = self._grow(X[mask], y[mask], depth + 1)
        self.right[node] = self._grow(X[~mask], y[~mask], depth + 1)
        return node

    def apply(self, X):
        X = _check_dim(self, X)
        node = np.zeros(X.shape[0], dtype=np.int64)
        while True:
            internal = self.feature[node] >= 0
            if not internal.any():
                return node
            i = np.flatnonzero(internal)
            nd = node[i]
            go_left = X[i, self.feature[nd]] <= self.threshold[nd]
            node[i] = np.where(go_left, self.left[nd], self.right[nd])

    def predict(self, X):
        return self.value[self.apply(X)]

    def depth(self):
        def rec(n):
            if self.feature[n] < 0:
                return 0
            return 1 + max(rec(self.left[n]), rec(self.right[n]))
        return rec(0)

    def state(self):
        return {"feature": self.feature, "threshold": self.threshold, "left": self.left,
                "right": self.right, "value": self.value}

    @classmethod
    def from_state(cls, st, meta=None):
        meta = meta or {}
        obj = cls(meta.get("max_depth", 16), meta.get("min_leaf", 4))
        for k in ("feature", "left", "right", "value"):
            setattr(obj, k, st[k].astype(np.int64))
        obj.threshold = st["threshold"]
        obj.n_features = int(meta.get("n_features", 32))
        obj.n_classes = int(meta.get("n_classes", int(obj.value.max()) + 1))
        return obj

    def meta(self):
        return {"max_depth": self.max_depth, "min_leaf": self.min_leaf,
                "n_features": self.n_features, "n_classes": self.n_classes}


def rbf_kernel(A, B, gamma):
    sq = (np.einsum("ij,ij->i", A, A)[:, None] + np.einsum("ij,ij->i", B, B)[None, :]
          - 2.0 * A @ B.T)
    return np.exp(-gamma * np.maximum(sq, 0.0))


def smo_binary(K, y, C, tol=1e-3, max_iter=None):
    """Dual soft-margin SVM by SMO with maximal-violating-pair selection.

    ``y`` in {-1, +1}.  Returns ``(alpha, b, converged, iterations)``.
    Stops when the KKT gap ``max_up - min_low`` drops below ``tol``.
    """
    n = y.size
    max_iter = max_iter or max(10000, 100 * n)
    alpha = np.zeros(n)
    grad = -np.ones(n)  # gradient of 0.5 a'Qa - e'a with Q = yy'K
    yf = y.astype(np.float64)
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        # I_up / I_low index sets (Keerthi et al.)
        up = ((yf > 0) & (alpha < C)) | ((yf < 0) & (alpha > 0))
        low = ((yf > 0) & (alpha > 0)) | ((yf < 0) & (alpha < C))
        score = -yf * grad
        s_up = np.where(up, score, -np.inf)
        s_low = np.where(low, score, np.inf)
        i = int(np.argmax(s_up))
        j = int(np.argmin(s_low))
        if s_up[i] - s_low[j] < tol:
            converged = True
            break
        # analytic two-variable step along y_i d_i = -y_j d_j
        kii, kjj, kij = K[i, i], K[j, j], K[i, j]
        eta = max(kii + kjj - 2.0 * kij, 1e-12)
        step = (s_up[i] - s_low[j]) / eta
        # box limits for t where alpha_i += y_i t, alpha_j -= y_j t
        hi_i = C - alpha[i] if yf[i] > 0 else alpha[i]
        hi_j = alpha[j] if yf[j] > 0 else C - alpha[j]
        t = min(step, hi_i, hi_j)
        alpha[i] += yf[i] * t
        alpha[j] -= yf[j] * t
        alpha[i] = min(max(alpha[i], 0.0), C)
        alpha[j] = min(max(alpha[j], 0.0), C)
        grad += t * yf * (K[:, i] - K[:, j])
    score = -yf * grad
    free = (alpha > 1e-12) & (alpha < C - 1e-12)
    if free.any():
        b = -float(np.mean(score[free]))
    else:
        up = ((yf > 0) & (alpha < C)) | ((yf < 0) & (alpha > 0))
        low = ((yf > 0) & (alpha > 0)) | ((yf < 0) & (alpha < C))
        b = -0.5 * (np.max(score[up]) + np.min(score[low])) if up.any() and low.any() else 0.0
    return alpha, b, converged, it


class RbfSVM:
    """One-vs-rest RBF SVM; predict is argmax of the per-class decision values."""

    kind = "svm"

    def __init__(self, C: float = 1.0, gamma: float | None = None, tol: float = 1e-3,
                 max_iter: int | None = None):
        self.C = C
        self.gamma = gamma
        self.tol = tol
        self.max_iter = max_iter
        self.warnings: list[str] = []

    def fit(self, X, y):
        X = np.asarray(X, dtype=np.float64)
        y = np.asarray(y, dtype=np.int64)
        self.classes = np.unique(y)
        if self.classes.size < 2:
            raise ValueError("svm needs at least two classes")
        self.n_features = X.shape[1]
        if self.gamma is None:
            self.gamma = 1.0 / self.n_features
        K = rbf_kernel(X, X, self.gamma)
        self.X = X
        self.alpha = np.zeros((self.classes.size, X.shape[0]))
        self.ylab = np.zeros((self.classes.size, X.shape[0]))
        self.b = np.zeros(self.classes.size)
        for k, c in enumerate(self.classes):
            yb = np.where(y == c, 1.0, -1.0)
            a, b, ok, it = smo_binary(K, yb, self.C, self.tol, self.max_iter)
            if not ok:
                msg = f"SMO for class {c} stopped after {it} iterations without meeting tol={self.tol}"
                self.warnings.append(msg)
                warnings.warn(msg, RuntimeWarning, stacklevel=2)
            self.alpha[k], self.ylab[k], self.b[k] = a, yb, b
        self._compress()
        return self

    def _compress(self):
        sv = np.flatnonzero(np.any(self.alpha > 0, axis=0))
        self.X, self.alpha, self.ylab = self.X[sv], self.alpha[:, sv], self.ylab[:, sv]

    def decision_function(self, X):
        X = _check_dim(self, X)
        K = rbf_kernel(X, self.X, self.gamma)
        return K @ (self.alpha * self.ylab).T - self.b[None, :]

    def predict(self, X):
        return self.classes[np.argmax(self.decision_function(X), axis=1)]

    def state(self):
        return {"X": self.X, "alpha": self.alpha, "ylab": self.ylab, "b": self.b,
                "classes": self.classes}

    def meta(self):
        return {"C": self.C, "gamma": self.gamma, "tol": self.tol, "warnings": self.warnings}

    @classmethod
    def from_state(cls, st, meta=None):
        meta = meta or {}
        obj = cls(meta.get("C", 1.0), meta.get("gamma"), meta.get("tol", 1e-3))
        obj.warnings = list(meta.get("warnings", []))
        obj.X, obj.alpha, obj.ylab, obj.b = st["X"], st["alpha"], st["ylab"], st["b"]
        obj.classes = st["classes"].astype(np.int64)
        obj.n_features = obj.X.shape[1]
        return obj


def make_blobs(n_classes: int = 4, n_per_class: int = 100, n_features: int = 32,
               separation: float = 8.0, seed: int = 0):
    """Isotropic unit-variance Gaussian blobs with centres ``separation`` apart.

    Centres sit on scaled coordinate axes, so every pair is exactly
    ``separation`` apart and the classes are well separated.
    """
    if n_classes > n_features:
        raise ValueError("need n_features >= n_classes")
    g = np.random.default_rng(seed)
    centres = np.eye(n_features)[:n_classes] * separation / np.sqrt(2.0)
    y = np.repeat(np.arange(n_classes), n_per_class)
    X = centres[y] + g.standard_normal((y.size, n_features))
    perm = g.permutation(y.size)
    return X[perm], y[perm]


CLASSIFIERS = {"knn1": KNN1, "gnb": GaussianNB, "tree": DecisionTree, "svm": RbfSVM}


def make_classifier(kind: str, **kw):
    try:
        cls = CLASSIFIERS[kind]
    except KeyError:
        raise ValueError(f"unknown classifier {kind!r}; choose from {sorted(CLASSIFIERS)}") from None
    return cls(**kw)
