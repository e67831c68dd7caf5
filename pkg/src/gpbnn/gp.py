"""Exact Gaussian-process regression with a Gaussian likelihood.

Serves as the analytic ground truth the finite-network posteriors are
checked against.  Fitting factorizes K_XX + sigma2_n I (plus graded jitter
when needed) once; prediction and the log marginal likelihood reuse the
factor.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_solve, solve_triangular

from .kernels import Kernel

__all__ = ["GPModel", "GPPosterior", "GPFitError", "gp_fit", "gp_predict", "gp_log_marginal"]

# Graded regularization for composed, near-degenerate kernels.
_JITTER_LADDER = (0.0, 1e-10, 1e-8, 1e-6)


class GPFitError(RuntimeError):
    """Gram matrix could not be factorized within the jitter budget."""

    def __init__(self, message, min_eigenvalue=None):
        super().__init__(message)
        self.min_eigenvalue = min_eigenvalue


@dataclass(frozen=True)
class GPModel:
    """A kernel plus the observation-noise variance."""

    kernel: Kernel
    noise_var: float = 0.0

    def __post_init__(self):
        if self.noise_var < 0:
            raise ValueError(f"noise_var must be non-negative, got {self.noise_var}")


class GPPosterior:
    """Factorized training state: lower Cholesky factor of K + sigma2_n I
    (+ jitter I) and the precomputed solve against the targets."""

    def __init__(self, model, X, y, L, alpha, jitter):
        self.model = model
        self.X = X
        self.y = y
        self.L = L
        self.alpha = alpha
        self.jitter = jitter

    @property
    def n(self):
        return self.X.shape[0]


def _as_inputs(X):
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X.reshape(-1, 1)
    if X.ndim != 2:
        raise ValueError(f"inputs must be a list of vectors, got shape {X.shape}")
    return X


def gp_fit(model: GPModel, X, y) -> GPPosterior:
    """Factorize the training covariance, walking the jitter ladder if needed."""
    X = _as_inputs(X)
    y = np.asarray(y, dtype=float).reshape(-1)
    if X.shape[0] != y.shape[0]:
        raise ValueError(f"got {X.shape[0]} inputs but {y.shape[0]} targets")
    if X.shape[0] < 1:
        raise ValueError("need at least one training point")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise ValueError("training data must be finite")

    K = model.kernel.gram(X)
    K = 0.5 * (K + K.T)  # enforce exact symmetry before factorizing
    scale = float(np.mean(np.diag(K)) + model.noise_var)
    A = K + model.noise_var * np.eye(X.shape[0])
    for level in _JITTER_LADDER:
        jitter = level * scale
        try:
            L = np.linalg.cholesky(A + jitter * np.eye(X.shape[0]))
        except np.linalg.LinAlgError:
            continue
        alpha = cho_solve((L, True), y)
        return GPPosterior(model, X, y, L, alpha, jitter)
    min_eig = float(np.linalg.eigvalsh(A)[0])
    raise GPFitError(
        f"Gram matrix is not positive definite within the jitter budget "
        f"(min eigenvalue {min_eig:.3e}, mean diagonal {scale:.3e})",
        min_eigenvalue=min_eig,
    )


def gp_predict(post: GPPosterior, Xstar):
    """Predictive mean vector and covariance matrix at query points."""
    Xstar = np.asarray(Xstar, dtype=float)
    if Xstar.size == 0:
        return np.zeros(0), np.zeros((0, 0))
    Xstar = _as_inputs(Xstar)
    if Xstar.shape[1] != post.X.shape[1]:
        raise ValueError(
            f"query dimension {Xstar.shape[1]} does not match training dimension {post.X.shape[1]}"
        )
    ks = post.model.kernel.gram(post.X, Xstar)
    kss = post.model.kernel.gram(Xstar)
    mean = ks.T @ post.alpha
    V = solve_triangular(post.L, ks, lower=True)
    cov = kss - V.T @ V
    return mean, cov


def gp_log_marginal(post: GPPosterior) -> float:
    """Log marginal likelihood: -y'alpha/2 - sum log L_ii - (n/2) log 2 pi."""
    return float(
        -0.5 * post.y @ post.alpha
        - np.sum(np.log(np.diag(post.L)))
        - 0.5 * post.n * math.log(2.0 * math.pi)
    )


def predictive_std(post: GPPosterior, Xstar, include_noise=True):
    """Pointwise predictive standard deviations (clipping tiny negative
    variances from roundoff), optionally widened by the observation noise."""
    _, cov = gp_predict(post, Xstar)
    var = np.clip(np.diag(cov), 0.0, None)
    if include_noise:
        var = var + post.model.noise_var
    return np.sqrt(var)
