"""Pixel losses and the per-image discriminative embedding optimizer.

Without a trained network, the embedding of an image is obtained by optimizing
the per-pixel vectors directly against the discriminative loss, starting from a
seeded random affine projection of the pixel features and coordinates.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

EPS = 1e-7


class DivergenceError(FloatingPointError):
    def __init__(self, step: int, value: float):
        super().__init__(f"non-finite loss {value} at step {step}")
        self.step = step


@dataclass(frozen=True)
class DiscriminativeParams:
    delta_v: float = 0.1
    delta_d: float = 1.5
    alpha: float = 1.0
    beta: float = 1.0
    gamma: float = 0.001

    def __post_init__(self):
        if not (self.delta_v > 0 and self.delta_d > 0):
            raise ValueError("margins must be positive")
        if not 2 * self.delta_d > self.delta_v:
            raise ValueError("need 2*delta_d > delta_v")


@dataclass(frozen=True)
class LossValue:
    total: float
    variance_term: float
    distance_term: float
    regularization_term: float


@dataclass
class EmbeddingField:
    vectors: np.ndarray  # (height, width, dim)

    def __post_init__(self):
        self.vectors = np.asarray(self.vectors, dtype=float)
        if self.vectors.ndim != 3 or self.vectors.shape[2] < 2:
            raise ValueError("embedding must have shape (height, width, dim>=2)")
        if not np.all(np.isfinite(self.vectors)):
            raise ValueError("embedding contains non-finite values")

    @property
    def height(self) -> int:
        return self.vectors.shape[0]

    @property
    def width(self) -> int:
        return self.vectors.shape[1]

    @property
    def dim(self) -> int:
        return self.vectors.shape[2]


# --------------------------------------------------------------------------
# cross-entropy losses

def binary_ce(p, y, eps: float = EPS) -> float:
    p = np.asarray(p, dtype=float)
    y = np.asarray(getattr(y, "pixels", y), dtype=float)
    if p.shape != y.shape:
        raise ValueError(f"shape mismatch {p.shape} vs {y.shape}")
    p = np.clip(p, eps, 1 - eps)
    return float(-np.mean(y * np.log(p) + (1 - y) * np.log(1 - p)))


def one_hot(labels, n_classes: int) -> np.ndarray:
    labels = np.asarray(getattr(labels, "pixels", labels))
    return np.eye(n_classes)[labels]


def categorical_ce(x, t, eps: float = EPS) -> float:
    """Mean over pixels of -sum_j t_j log x_j.

    ``x`` has a trailing class axis. ``t`` is either a one-hot array of the same
    shape or an integer label image (then one-hot encoded here).
    """
    x = np.asarray(x, dtype=float)
    if x.shape[-1] < 2:
        raise ValueError("need at least two classes")
    if not np.allclose(x.sum(axis=-1), 1.0, atol=1e-6):
        raise ValueError("class probabilities must sum to 1 per pixel")
    t = np.asarray(getattr(t, "pixels", t))
    if t.shape != x.shape:
        t = one_hot(t, x.shape[-1])
    n = x.size // x.shape[-1]
    return float(-np.sum(t * np.log(np.clip(x, eps, 1.0))) / n)


def sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def softmax(z):
    z = z - z.max(axis=-1, keepdims=True)
    ez = np.exp(z)
    return ez / ez.sum(axis=-1, keepdims=True)


# --------------------------------------------------------------------------
# discriminative loss

def _clusters(labels: np.ndarray, include_background: bool):
    ids = np.unique(labels)
    if not include_background:
        ids = ids[ids != 0]
    if ids.size == 0:
        raise ValueError("no non-empty cluster")
    sel = np.isin(labels, ids)
    idx = np.searchsorted(ids, labels[sel])
    return ids, sel, idx


def _prepare(f, inst):
    x = np.asarray(getattr(f, "vectors", f), dtype=float)
    labels = np.asarray(getattr(inst, "pixels", inst))
    if x.shape[:-1] != labels.shape:
        raise ValueError(f"embedding {x.shape[:-1]} and labels {labels.shape} differ in shape")
    return x.reshape(-1, x.shape[-1]), labels.reshape(-1)


def _cluster_sums(idx, values, C):
    return np.stack([np.bincount(idx, values[:, d], minlength=C)
                     for d in range(values.shape[1])], axis=1)


def _forward(x, labels, params, include_background):
    ids, sel, idx = _clusters(labels, include_background)
    C = ids.size
    xs = x[sel]
    counts = np.bincount(idx, minlength=C).astype(float)
    mu = _cluster_sums(idx, xs, C) / counts[:, None]

    diff = mu[idx] - xs
    hv = np.maximum(np.abs(diff).sum(axis=1) - params.delta_v, 0.0)
    l_var = float(np.sum(np.bincount(idx, hv * hv, minlength=C) / counts) / C)

    if C > 1:
        mdiff = mu[:, None, :] - mu[None, :, :]
        hd = np.maximum(2 * params.delta_d - np.abs(mdiff).sum(axis=2), 0.0)
        np.fill_diagonal(hd, 0.0)
        l_dist = float(np.sum(hd * hd) / (C * (C - 1)))
    else:
        mdiff = hd = None
        l_dist = 0.0

    l_reg = float(np.abs(mu).sum() / C)
    total = params.alpha * l_var + params.beta * l_dist + params.gamma * l_reg
    cache = (sel, idx, counts, mu, diff, hv, mdiff, hd, C)
    return LossValue(total, l_var, l_dist, l_reg), cache


def discriminative_loss(f, inst, params: DiscriminativeParams = DiscriminativeParams(),
                        include_background: bool = True) -> LossValue:
    """Variance, distance and regularization terms (L1 norms, squared hinges).

    ``include_background`` makes label 0 one more cluster; otherwise its pixels
    are ignored. With a single cluster the distance term is 0.
    """
    x, labels = _prepare(f, inst)
    return _forward(x, labels, params, include_background)[0]


def _backward(x, cache, params):
    sel, idx, counts, mu, diff, hv, mdiff, hd, C = cache
    grad = np.zeros_like(x)

    # variance: g_i = dL/d(mu_c - x_i)
    g = (params.alpha * 2.0 / C) * (hv / counts[idx])[:, None] * np.sign(diff)
    g_mu = _cluster_sums(idx, g, C)

    if C > 1:
        # each unordered pair appears twice in the ordered sum
        coef = (params.beta * 4.0 / (C * (C - 1))) * hd
        g_mu -= np.einsum("ab,abd->ad", coef, np.sign(mdiff))

    g_mu += (params.gamma / C) * np.sign(mu)

    grad[sel] = (g_mu / counts[:, None])[idx] - g
    return grad


def discriminative_gradient(f, inst, params: DiscriminativeParams = DiscriminativeParams(),
                            include_background: bool = True) -> np.ndarray:
    """Subgradient of the total loss w.r.t. every embedding vector (same shape as ``f``)."""
    x, labels = _prepare(f, inst)
    _, cache = _forward(x, labels, params, include_background)
    shape = np.asarray(getattr(f, "vectors", f)).shape
    return _backward(x, cache, params).reshape(shape)


def loss_and_gradient(f, inst, params: DiscriminativeParams = DiscriminativeParams(),
                      include_background: bool = True):
    x, labels = _prepare(f, inst)
    value, cache = _forward(x, labels, params, include_background)
    shape = np.asarray(getattr(f, "vectors", f)).shape
    return value, _backward(x, cache, params).reshape(shape)


# --------------------------------------------------------------------------
# optimizer

class Adam:
    def __init__(self, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m = None
        self.v = None
        self.t = 0

    def step(self, param: np.ndarray, grad: np.ndarray) -> np.ndarray:
        if self.m is None:
            self.m = np.zeros_like(param)
            self.v = np.zeros_like(param)
        self.t += 1
        self.m = self.beta1 * self.m + (1 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1 - self.beta2) * grad * grad
        m_hat = self.m / (1 - self.beta1 ** self.t)
        v_hat = self.v / (1 - self.beta2 ** self.t)
        return param - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


@dataclass(frozen=True)
class OptimizerSettings:
    steps: int = 500
    lr: float = 1e-4
    seed: int = 0
    dim: int = 8
    init_scale: float = 1.0


@dataclass
class EmbeddingResult:
    field: EmbeddingField
    losses: list[float]
    snapshots: dict[int, np.ndarray] = field(default_factory=dict)

    def window_violations(self, window: int = 10, warmup: int = 10) -> int:
        """Number of 10-step windows after warmup whose loss went up (reported, not enforced)."""
        l = np.asarray(self.losses[warmup:])
        if len(l) <= window:
            return 0
        return int(np.sum(l[window:] > l[:-window]))


def pixel_inputs(features) -> np.ndarray:
    """Per-pixel inputs: feature channels followed by coordinates scaled to [0, 1]."""
    feats = np.asarray(features, dtype=float)
    if feats.ndim == 2:
        feats = feats[..., None]
    if not np.all(np.isfinite(feats)):
        raise ValueError("features must be finite")
    h, w = feats.shape[:2]
    rows, cols = np.indices((h, w), dtype=float)
    return np.concatenate([feats, (cols / max(w - 1, 1))[..., None],
                           (rows / max(h - 1, 1))[..., None]], axis=2)


def initial_embedding(features, dim: int = 8, seed: int = 0, init_scale: float = 1.0) -> np.ndarray:
    inp = pixel_inputs(features)
    rng = np.random.default_rng(seed)
    n_in = inp.shape[2]
    W = rng.normal(0.0, init_scale / np.sqrt(n_in), size=(n_in, dim))
    b = rng.normal(0.0, 0.1 * init_scale, size=dim)
    return inp @ W + b


def optimize_embedding(features, inst, params: DiscriminativeParams = DiscriminativeParams(),
                       opt: OptimizerSettings = OptimizerSettings(),
                       include_background: bool = True,
                       snapshot_steps=()) -> EmbeddingResult:
    """Fit a pixel embedding of one image to its instance labels with Adam.

    ``losses[k]`` is the loss evaluated before update k+1; ``snapshots[s]`` holds
    the embedding after ``s`` updates for each requested ``s``.
    """
    emb = initial_embedding(features, opt.dim, opt.seed, opt.init_scale)
    labels = np.asarray(getattr(inst, "pixels", inst))
    wanted = set(int(s) for s in snapshot_steps)
    snapshots = {0: emb.copy()} if 0 in wanted else {}
    adam = Adam(lr=opt.lr)
    losses = []
    # overflow shows up as a non-finite loss and is reported as DivergenceError
    with np.errstate(over="ignore", invalid="ignore"):
        for step in range(1, opt.steps + 1):
            value, grad = loss_and_gradient(emb, labels, params, include_background)
            if not np.isfinite(value.total):
                raise DivergenceError(step, value.total)
            losses.append(value.total)
            emb = adam.step(emb, grad)
            if step in wanted:
                snapshots[step] = emb.copy()
        final = discriminative_loss(emb, labels, params, include_background).total
    if not np.isfinite(final):
        raise DivergenceError(opt.steps, final)
    losses.append(final)
    return EmbeddingResult(EmbeddingField(emb), losses, snapshots)


# --------------------------------------------------------------------------
# per-pixel classifier (binary / categorical heads without a backbone)

def _design(features) -> np.ndarray:
    f = np.asarray(features, dtype=float)
    if f.ndim == 2:
        f = f[..., None]
    return np.concatenate([f, f * f, np.ones(f.shape[:2] + (1,))], axis=2)


class PixelClassifier:
    """Logistic (2 classes) or softmax regression on per-pixel features and their squares.

    Trained by Adam on the binary or categorical cross-entropy.
    """

    def __init__(self, n_classes: int = 2, steps: int = 300, lr: float = 0.1, seed: int = 0):
        self.n_classes = n_classes
        self.steps = steps
        self.lr = lr
        self.seed = seed
        self.weights = None
        self.losses: list[float] = []

    def fit(self, features, labels) -> "PixelClassifier":
        X = _design(features).reshape(-1, _design(features).shape[-1])
        y = np.asarray(getattr(labels, "pixels", labels)).reshape(-1)
        rng = np.random.default_rng(self.seed)
        n_out = 1 if self.n_classes == 2 else self.n_classes
        W = rng.normal(0.0, 0.01, size=(X.shape[1], n_out))
        adam = Adam(lr=self.lr)
        self.losses = []
        T = None if n_out == 1 else one_hot(y, self.n_classes)
        for _ in range(self.steps):
            z = X @ W
            if n_out == 1:
                p = sigmoid(z[:, 0])
                self.losses.append(binary_ce(p, y))
                g = X.T @ (p - y)[:, None] / len(y)
            else:
                p = softmax(z)
                self.losses.append(categorical_ce(p, T))
                g = X.T @ (p - T) / len(y)
            W = adam.step(W, g)
        self.weights = W
        return self

    def predict_proba(self, features) -> np.ndarray:
        X = _design(features)
        z = X @ self.weights
        if self.n_classes == 2:
            return sigmoid(z[..., 0])
        return softmax(z)

    def predict(self, features, threshold: float = 0.5) -> np.ndarray:
        p = self.predict_proba(features)
        if self.n_classes == 2:
            return (p > threshold).astype(np.int32)
        return p.argmax(axis=-1).astype(np.int32)
