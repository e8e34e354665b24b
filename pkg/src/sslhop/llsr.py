"""Multi-class linear least-squares regression onto one-hot targets."""
from dataclasses import dataclass

import numpy as np

from .errors import SSLError

VARIANCE_FLOOR = 1e-12
DEFAULT_RIDGE_SCALE = 1e-4
_SINGULAR_RCOND = 1e-12


@dataclass(frozen=True, eq=False)
class LLSRModel:
    """Weights act on standardized features ``(f - feature_mean) / feature_scale``."""

    weights: np.ndarray  # (n_classes, n_features)
    intercept: np.ndarray  # (n_classes,)
    ridge: float
    feature_mean: np.ndarray
    feature_scale: np.ndarray

    @property
    def n_features(self):
        return self.weights.shape[1]

    @property
    def n_classes(self):
        return self.weights.shape[0]

    def scores(self, features):
        x = np.asarray(features, dtype=np.float64)
        single = x.ndim == 1
        x = np.atleast_2d(x)
        if x.shape[1] != self.n_features:
            raise SSLError("shape mismatch")
        z = (x - self.feature_mean) / self.feature_scale
        s = z @ self.weights.T + self.intercept
        return s[0] if single else s


def standardize(features):
    mean = features.mean(axis=0)
    scale = np.sqrt(np.maximum(features.var(axis=0), VARIANCE_FLOOR))
    return mean, scale


def one_hot(labels, n_classes):
    y = np.zeros((len(labels), n_classes))
    y[np.arange(len(labels)), labels] = 1.0
    return y


def default_ridge(z):
    # floor of 1 keeps all-constant feature sets solvable (weights become 0)
    d = z.shape[1]
    per_feature = float(np.einsum("ij,ij->", z, z)) / d if d else 0.0
    return DEFAULT_RIDGE_SCALE * max(per_feature, 1.0)


def _solve_spd(a, b):
    """Solve ``a x = b`` for symmetric PSD ``a``; refuse numerically singular systems."""
    if a.shape[0] == 0:
        return np.zeros((0,) + b.shape[1:])
    vals = np.linalg.eigvalsh(a)
    if vals[-1] <= 0 or vals[0] <= _SINGULAR_RCOND * vals[-1]:
        raise SSLError("singular system; set ridge > 0")
    return np.linalg.solve(a, b)


def fit_llsr(features, labels, n_classes, ridge=None):
    """Fit on standardized features; ``ridge=None`` picks 1e-4 * max(trace(Z'Z) / D, 1)."""
    x = np.asarray(features, dtype=np.float64)
    y_idx = np.asarray(labels)
    if x.ndim != 2 or y_idx.shape != (x.shape[0],):
        raise SSLError("shape mismatch")
    if not np.all(np.isfinite(x)):
        raise SSLError("non-finite input")
    n, d = x.shape
    if n < 2:
        raise SSLError("insufficient samples")
    if n_classes < 1 or np.any(y_idx < 0) or np.any(y_idx >= n_classes) or not np.all(y_idx == np.round(y_idx)):
        raise SSLError("invalid label")
    y_idx = y_idx.astype(np.int64)

    mean, scale = standardize(x)
    z = (x - mean) / scale
    if ridge is None:
        ridge = default_ridge(z)
    ridge = float(ridge)
    if not ridge >= 0:
        raise SSLError("ridge must be nonnegative")

    y = one_hot(y_idx, n_classes)
    y_mean = y.mean(axis=0)
    yc = y - y_mean
    if d <= n:
        gram = z.T @ z + ridge * np.eye(d)
        w = _solve_spd(gram, z.T @ yc)
    else:
        # dual form: same minimizer, n x n system
        gram = z @ z.T + ridge * np.eye(n)
        w = z.T @ _solve_spd(gram, yc)
    # z has zero column means, so the optimal intercept is the target mean
    return LLSRModel(np.ascontiguousarray(w.T), y_mean, ridge, mean, scale)


def predict(model, feature):
    """Class (lowest index among ties) and raw score vector for one feature vector."""
    scores = model.scores(np.asarray(feature, dtype=np.float64).reshape(-1))
    return int(np.argmax(scores)), scores


def predict_batch(model, features):
    scores = model.scores(np.atleast_2d(features))
    return np.argmax(scores, axis=1), scores
