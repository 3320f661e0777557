"""One-hidden-layer SELU network for P(bankrupt or acquired).

The network is ``sigmoid(w2 . selu(W1 z + b1) + b2)`` on standardized inputs
``z``, trained with Adam on binary cross-entropy. The minority class can be
grown to parity beforehand with SMOTE interpolation.
"""

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .errors import ParameterError, ResamplingError, TrainingError

__all__ = [
    "SELU_ALPHA",
    "SELU_LAMBDA",
    "selu",
    "selu_grad",
    "TrainConfig",
    "MlpModel",
    "Adam",
    "smote_resample",
    "train_mlp",
    "predict_proba",
    "classify",
    "MetricsReport",
    "metrics",
]

# Self-normalizing constants (Klambauer et al.).
SELU_ALPHA = 1.6732632423543772
SELU_LAMBDA = 1.0507009873554805

FORMAT_VERSION = 1


def selu(x):
    x = np.asarray(x, dtype=float)
    out = SELU_LAMBDA * np.where(x > 0, x, SELU_ALPHA * np.expm1(np.minimum(x, 0.0)))
    return float(out) if out.ndim == 0 else out


def selu_grad(x):
    x = np.asarray(x, dtype=float)
    return SELU_LAMBDA * np.where(x > 0, 1.0, SELU_ALPHA * np.exp(np.minimum(x, 0.0)))


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 70
    hidden: int = 32
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    batch_size: int = 128
    seed: int = 0
    smote_k: int = 5
    resample: bool = True

    def __post_init__(self):
        if self.epochs < 1 or self.hidden < 1 or self.batch_size < 1 or self.smote_k < 1:
            raise ParameterError("epochs, hidden, batch_size and smote_k must be >= 1")
        if not (self.learning_rate > 0 and self.eps > 0 and 0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ParameterError("learning rate / Adam constants out of range")


@dataclass
class MlpModel:
    W1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: float
    center: np.ndarray
    spread: np.ndarray
    config: TrainConfig = field(default_factory=TrainConfig)
    loss_history: list = field(default_factory=list)

    @property
    def n_inputs(self):
        return self.W1.shape[1]

    def params(self):
        return [self.W1, self.b1, self.w2, np.array([self.b2])]

    def to_dict(self):
        return {
            "format_version": FORMAT_VERSION,
            "shapes": {"W1": list(self.W1.shape), "b1": [self.b1.size], "w2": [self.w2.size]},
            "W1": self.W1.ravel().tolist(), "b1": self.b1.tolist(), "w2": self.w2.tolist(),
            "b2": float(self.b2), "center": self.center.tolist(), "spread": self.spread.tolist(),
            "config": asdict(self.config), "loss_history": [float(v) for v in self.loss_history],
        }

    @classmethod
    def from_dict(cls, d):
        if d.get("format_version") != FORMAT_VERSION:
            raise ParameterError(f"unsupported classifier format {d.get('format_version')!r}")
        h, k = d["shapes"]["W1"]
        return cls(np.array(d["W1"], dtype=float).reshape(h, k), np.array(d["b1"], dtype=float),
                   np.array(d["w2"], dtype=float), float(d["b2"]),
                   np.array(d["center"], dtype=float), np.array(d["spread"], dtype=float),
                   TrainConfig(**d["config"]), list(d.get("loss_history", [])))

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh)

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def _forward(W1, b1, w2, b2, Z):
    a = Z @ W1.T + b1
    h = selu(a)
    logit = h @ w2 + b2
    return a, h, logit


def bce_loss_and_grad(W1, b1, w2, b2, Z, y):
    """Mean binary cross-entropy and its gradients (W1, b1, w2, b2)."""
    a, h, logit = _forward(W1, b1, w2, b2, Z)
    # log(1 + e^z) - y z, stable in both tails
    loss = float(np.mean(np.logaddexp(0.0, logit) - y * logit))
    n = Z.shape[0]
    dlogit = (_sigmoid(logit) - y) / n
    gw2 = h.T @ dlogit
    gb2 = float(np.sum(dlogit))
    dh = np.outer(dlogit, w2) * selu_grad(a)
    gW1 = dh.T @ Z
    gb1 = dh.sum(axis=0)
    return loss, (gW1, gb1, gw2, gb2)


class Adam:
    """Adam with bias-corrected first and second moments."""

    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = [np.zeros_like(np.asarray(p, dtype=float)) for p in params]
        self.v = [np.zeros_like(np.asarray(p, dtype=float)) for p in params]
        self.t = 0

    def step(self, params, grads):
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        out = []
        for i, (p, g) in enumerate(zip(params, grads)):
            g = np.asarray(g, dtype=float)
            self.m[i] = self.beta1 * self.m[i] + (1 - self.beta1) * g
            self.v[i] = self.beta2 * self.v[i] + (1 - self.beta2) * g * g
            out.append(p - self.lr * (self.m[i] / c1) / (np.sqrt(self.v[i] / c2) + self.eps))
        return out


def smote_resample(X, y, k=5, seed=0):
    """Grow the minority class to parity by interpolating towards minority neighbours.

    Each synthetic point is ``x_i + u (x_nn - x_i)`` with ``u ~ U(0, 1)`` and
    ``x_nn`` one of the ``k`` nearest minority neighbours of a random minority
    point ``x_i``. The original rows come first, unchanged.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y).ravel()
    if k < 1:
        raise ParameterError("k must be >= 1")
    labels, counts = np.unique(y, return_counts=True)
    if labels.size < 2 or counts[0] == counts[1]:
        return X.copy(), y.copy()
    minority = labels[np.argmin(counts)]
    Xm = X[y == minority]
    n_new = int(counts.max() - counts.min())
    if Xm.shape[0] < 2:
        raise ResamplingError("SMOTE needs at least 2 minority samples")
    k_eff = min(k, Xm.shape[0] - 1)
    _, nn = cKDTree(Xm).query(Xm, k=k_eff + 1)
    nn = nn[:, 1:] if k_eff > 0 else nn
    rng = np.random.default_rng(seed)
    base = rng.integers(0, Xm.shape[0], size=n_new)
    pick = nn[base, rng.integers(0, k_eff, size=n_new)]
    u = rng.random(n_new)[:, None]
    synth = Xm[base] + u * (Xm[pick] - Xm[base])
    return np.vstack([X, synth]), np.concatenate([y, np.full(n_new, minority, dtype=y.dtype)])


def standardization(X):
    center = X.mean(axis=0)
    spread = X.std(axis=0)
    # Constant columns carry no information; map them to 0 instead of dividing by 0.
    spread = np.where(spread > 0, spread, 1.0)
    return center, spread


def init_params(n_inputs, hidden, rng):
    # LeCun normal, the initialization SELU's fixed point assumes.
    W1 = rng.normal(0.0, 1.0 / math.sqrt(n_inputs), size=(hidden, n_inputs))
    w2 = rng.normal(0.0, 1.0 / math.sqrt(hidden), size=hidden)
    return W1, np.zeros(hidden), w2, 0.0


def train_mlp(X, y, cfg=None):
    """Train on ``(X, y)`` (labels 1 = BA). Deterministic for a given ``cfg.seed``.

    Inputs are standardized with constants from ``X``; with ``cfg.resample``
    the standardized training set is rebalanced by :func:`smote_resample`.
    """
    cfg = cfg or TrainConfig()
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float).ravel()
    if X.shape[0] < 2 or X.shape[0] != y.size:
        raise ParameterError("need at least 2 labelled rows")
    center, spread = standardization(X)
    Z = (X - center) / spread
    if cfg.resample and 0 < y.sum() < y.size:
        Z, y = smote_resample(Z, y, cfg.smote_k, cfg.seed)
    rng = np.random.default_rng(cfg.seed)
    W1, b1, w2, b2 = init_params(Z.shape[1], cfg.hidden, rng)
    opt = Adam([W1, b1, w2, np.array(b2)], cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.eps)
    history = []
    n = Z.shape[0]
    for epoch in range(cfg.epochs):
        perm = rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            idx = perm[start:start + cfg.batch_size]
            loss, (gW1, gb1, gw2, gb2) = bce_loss_and_grad(W1, b1, w2, b2, Z[idx], y[idx])
            if not math.isfinite(loss):
                raise TrainingError(f"non-finite loss at epoch {epoch + 1}")
            W1, b1, w2, b2a = opt.step([W1, b1, w2, np.array(b2)], [gW1, gb1, gw2, np.array(gb2)])
            b2 = float(b2a)
        epoch_loss, _ = bce_loss_and_grad(W1, b1, w2, b2, Z, y)
        if not math.isfinite(epoch_loss):
            raise TrainingError(f"non-finite loss at epoch {epoch + 1}")
        history.append(epoch_loss)
    return MlpModel(W1, b1, w2, b2, center, spread, cfg, history)


def predict_proba(model, X):
    """P(BA) for one feature vector or a matrix of them."""
    X = np.asarray(X, dtype=float)
    single = X.ndim == 1
    X = np.atleast_2d(X)
    if X.shape[1] != model.n_inputs:
        raise ParameterError(f"expected {model.n_inputs} features, got {X.shape[1]}")
    Z = (X - model.center) / model.spread
    p = _sigmoid(_forward(model.W1, model.b1, model.w2, model.b2, Z)[2])
    return float(p[0]) if single else p


def classify(p, threshold=0.5):
    """1 (BA) iff ``p > threshold``."""
    p = np.asarray(p, dtype=float)
    out = (p > threshold).astype(int)
    return int(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class MetricsReport:
    precision_pos: float
    recall_pos: float
    precision_neg: float
    recall_neg: float
    accuracy: float
    tp: int
    fp: int
    fn: int
    tn: int
    undefined: tuple = ()

    def to_dict(self):
        return asdict(self) | {"undefined": list(self.undefined)}


def metrics(predicted, actual):
    """Per-class precision/recall and accuracy; 0 (flagged) for empty denominators."""
    pred = np.asarray(predicted).astype(int).ravel()
    act = np.asarray(actual).astype(int).ravel()
    if pred.size != act.size:
        raise ParameterError("predicted and actual differ in length")
    if pred.size == 0:
        raise ParameterError("metrics need at least one label")
    tp = int(np.sum((pred == 1) & (act == 1)))
    fp = int(np.sum((pred == 1) & (act == 0)))
    fn = int(np.sum((pred == 0) & (act == 1)))
    tn = int(np.sum((pred == 0) & (act == 0)))
    undefined = []

    def ratio(num, den, name):
        if den == 0:
            undefined.append(name)
            return 0.0
        return num / den

    return MetricsReport(
        precision_pos=ratio(tp, tp + fp, "precision_pos"),
        recall_pos=ratio(tp, tp + fn, "recall_pos"),
        precision_neg=ratio(tn, tn + fn, "precision_neg"),
        recall_neg=ratio(tn, tn + fp, "recall_neg"),
        accuracy=(tp + tn) / pred.size,
        tp=tp, fp=fp, fn=fn, tn=tn, undefined=tuple(undefined),
    )
