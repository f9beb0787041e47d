"""Exact Gaussian-process regression with an ARD squared-exponential kernel.

Inference follows the Cholesky recipe: factor ``K + s2 I = L L^T``, solve
``alpha = L^T \\ (L \\ y)``, predict ``mu = k^T alpha`` and
``var = k(x, x) - ||L \\ k||^2``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.linalg import cholesky, solve_triangular

from .errors import DimensionMismatch, NotPositiveDefinite

JITTER_MIN = 1e-8
JITTER_MAX = 1e-2


@dataclass(frozen=True)
class Kernel:
    signal_variance: float
    lengthscales: tuple[float, ...]
    noise_variance: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "lengthscales", tuple(float(v) for v in self.lengthscales))
        if not self.signal_variance > 0:
            raise ValueError("signal_variance must be positive")
        if not all(v > 0 for v in self.lengthscales):
            raise ValueError("lengthscales must be positive")
        if not self.noise_variance >= 0:
            raise ValueError("noise_variance must be non-negative")

    @property
    def dim(self) -> int:
        return len(self.lengthscales)

    def matrix(self, X: np.ndarray, Y: np.ndarray) -> np.ndarray:
        """Cross-covariance ``k(X_i, Y_j)``."""
        u = (X[:, None, :] - Y[None, :, :]) / np.asarray(self.lengthscales)
        return self.signal_variance * np.exp(-0.5 * (u * u).sum(axis=-1))


def kernel_eval(kernel: Kernel, x, y) -> float:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != (kernel.dim,) or y.shape != (kernel.dim,):
        raise DimensionMismatch(f"kernel expects vectors of length {kernel.dim}")
    u = (x - y) / np.asarray(kernel.lengthscales)
    return float(kernel.signal_variance * math.exp(-0.5 * float(u @ u)))


@dataclass(frozen=True, eq=False)
class SurrogateModel:
    kernel: Kernel
    inputs: np.ndarray
    targets: np.ndarray
    chol: np.ndarray
    alpha: np.ndarray
    jitter: float = 0.0

    @property
    def effective_noise(self) -> float:
        return self.kernel.noise_variance + self.jitter

    def log_marginal_likelihood(self) -> float:
        n = len(self.targets)
        return float(
            -0.5 * self.targets @ self.alpha - np.log(np.diag(self.chol)).sum() - 0.5 * n * math.log(2 * math.pi)
        )

    def predict_many(self, X) -> tuple[np.ndarray, np.ndarray]:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.inputs.shape[1]:
            raise DimensionMismatch("test inputs have the wrong dimension")
        Ks = self.kernel.matrix(self.inputs, X)
        mean = Ks.T @ self.alpha
        v = solve_triangular(self.chol, Ks, lower=True, check_finite=False)
        var = self.kernel.signal_variance - (v * v).sum(axis=0)
        return mean, np.maximum(var, 0.0)


def _factor(K: np.ndarray, noise: float):
    n = K.shape[0]
    jitter = 0.0
    while True:
        try:
            return cholesky(K + (noise + jitter) * np.eye(n), lower=True, check_finite=False), jitter
        except np.linalg.LinAlgError:
            jitter = JITTER_MIN if jitter == 0.0 else 2.0 * jitter
            if jitter > JITTER_MAX:
                raise NotPositiveDefinite("covariance not positive definite after jitter escalation") from None


def fit(kernel: Kernel, inputs, targets) -> SurrogateModel:
    X = np.atleast_2d(np.asarray(inputs, dtype=float))
    y = np.asarray(targets, dtype=float).reshape(-1)
    if X.shape[0] < 1:
        raise ValueError("need at least one observation")
    if X.shape[0] != y.shape[0]:
        raise DimensionMismatch("inputs and targets differ in length")
    if X.shape[1] != kernel.dim:
        raise DimensionMismatch(f"kernel has {kernel.dim} lengthscales, inputs have {X.shape[1]} columns")
    if not np.isfinite(y).all():
        raise ValueError("targets must be finite")
    L, jitter = _factor(kernel.matrix(X, X), kernel.noise_variance)
    alpha = solve_triangular(L.T, solve_triangular(L, y, lower=True, check_finite=False), lower=False, check_finite=False)
    return SurrogateModel(kernel, X, y, L, alpha, jitter)


def predict(model: SurrogateModel, x) -> tuple[float, float]:
    x = np.asarray(x, dtype=float)
    if x.shape != (model.inputs.shape[1],):
        raise DimensionMismatch("test input has the wrong dimension")
    mean, var = model.predict_many(x[None, :])
    return float(mean[0]), float(var[0])


def fit_hyperparams(inputs, targets, grid: Sequence[Kernel]) -> Kernel:
    """Grid candidate with the highest exact log marginal likelihood (first wins ties)."""
    if not grid:
        raise ValueError("empty hyperparameter grid")
    best, best_lml, last_error = None, -math.inf, None
    for kernel in grid:
        try:
            lml = fit(kernel, inputs, targets).log_marginal_likelihood()
        except NotPositiveDefinite as exc:
            last_error = exc
            continue
        if best is None or lml > best_lml:
            best, best_lml = kernel, lml
    if best is None:
        raise last_error
    return best


def default_grid(dim: int, noise: float = 1e-6) -> list[Kernel]:
    """Isotropic candidates for inputs scaled to the unit box and standardized targets."""
    return [
        Kernel(sf2, (ell,) * dim, noise)
        for sf2 in (0.5, 1.0, 2.0)
        for ell in (0.05, 0.1, 0.2, 0.35, 0.6, 1.0)
    ]
