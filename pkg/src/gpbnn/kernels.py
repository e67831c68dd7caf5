"""Analytic covariance functions and the kernel-combination algebra.

Leaf kernels
    SEKernel          sigma^2 exp(-||x-x'||^2 / l^2)
    ESSKernel         sigma^2 exp(-2 sin^2(pi (x-x') / p) / l^2)        (1-D)
    ReLUKernel        arc-cosine form of an infinitely wide ReLU layer
    ERFKernel         arcsine form of an infinitely wide erf layer
    RBFNetKernel      kernel of an infinitely wide RBF-unit layer
    CosNetKernel      kernel of an infinitely wide cosine-activation layer
    PeriodicReLUKernel  ReLU layer on circle-warped 1-D inputs (unit diagonal)
    ConstantKernel    c (use value 0 for the additive identity)

Combinators
    SumKernel, ProductKernel, PowerKernel, WarpedKernel, ProjectedKernel,
    HiddenSumKernel (sum kernel plus the mean-function artefact term picked
    up when hidden units are summed pointwise under a shared output layer).

Every kernel is immutable after construction and evaluation is pure, so
instances may be shared freely across threads.  ``k(x, x')`` evaluates one
pair; ``k.gram(X, Xp)`` evaluates matrices of pairs.
"""

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "SEParams",
    "ESSParams",
    "PriorSpec",
    "RBFLayerParams",
    "Kernel",
    "SEKernel",
    "ESSKernel",
    "ReLUKernel",
    "ERFKernel",
    "RBFNetKernel",
    "CosNetKernel",
    "PeriodicReLUKernel",
    "ConstantKernel",
    "SumKernel",
    "ProductKernel",
    "PowerKernel",
    "WarpedKernel",
    "ProjectedKernel",
    "HiddenSumKernel",
    "k_se",
    "k_ess",
    "k_relu",
    "k_erf",
    "k_rbf_bnn",
    "k_cos_bnn",
    "k_relu_periodic",
    "kernel_add",
    "kernel_mul",
    "kernel_pow",
    "kernel_warp",
    "kernel_project",
    "hidden_add_kernel",
    "zero_mean",
    "constant_mean",
    "relu_mean",
]


# ---------------------------------------------------------------------------
# parameter records
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SEParams:
    """Amplitude sigma^2 and length scale l of the squared-exponential kernel."""

    sigma2: float
    length_scale: float

    def __post_init__(self):
        if self.sigma2 <= 0:
            raise ValueError(f"sigma2 must be positive, got {self.sigma2}")
        if self.length_scale <= 0:
            raise ValueError(f"length_scale must be positive, got {self.length_scale}")


@dataclass(frozen=True)
class ESSParams:
    """Amplitude, warp-space length scale and period of the periodic kernel."""

    sigma2: float
    length_scale: float
    period: float

    def __post_init__(self):
        if self.sigma2 <= 0:
            raise ValueError(f"sigma2 must be positive, got {self.sigma2}")
        if self.length_scale <= 0:
            raise ValueError(f"length_scale must be positive, got {self.length_scale}")
        if self.period <= 0:
            raise ValueError(f"period must be positive, got {self.period}")


@dataclass(frozen=True)
class PriorSpec:
    """Gaussian prior variances of a single hidden layer plus its output layer.

    ``sigma2_w2`` is the kernel-level output variance: a finite network of
    width H draws its output weights from N(0, sigma2_w2 / H), so analytic
    kernels are width-independent.
    """

    sigma2_w1: float
    sigma2_b1: float
    sigma2_w2: float

    def __post_init__(self):
        if self.sigma2_w1 < 0 or self.sigma2_b1 < 0:
            raise ValueError("first-layer prior variances must be non-negative")
        if self.sigma2_w2 <= 0:
            raise ValueError(f"sigma2_w2 must be positive, got {self.sigma2_w2}")


@dataclass(frozen=True)
class RBFLayerParams:
    """Bandwidth sigma2_g and center-prior variance sigma2_u of an RBF layer.

    The derived quantities obey 1/sigma2_e = 2/sigma2_g + 1/sigma2_u,
    sigma2_s = 2 sigma2_g + sigma2_g^2 / sigma2_u and
    sigma2_m = 2 sigma2_u + sigma2_g.
    """

    sigma2_g: float
    sigma2_u: float

    def __post_init__(self):
        if self.sigma2_g <= 0:
            raise ValueError(f"sigma2_g must be positive, got {self.sigma2_g}")
        if self.sigma2_u <= 0:
            raise ValueError(f"sigma2_u must be positive, got {self.sigma2_u}")

    @property
    def sigma2_e(self):
        return 1.0 / (2.0 / self.sigma2_g + 1.0 / self.sigma2_u)

    @property
    def sigma2_s(self):
        return 2.0 * self.sigma2_g + self.sigma2_g**2 / self.sigma2_u

    @property
    def sigma2_m(self):
        return 2.0 * self.sigma2_u + self.sigma2_g


# ---------------------------------------------------------------------------
# evaluation helpers
# ---------------------------------------------------------------------------


def _as_matrix(X, input_dim, what="input"):
    X = np.asarray(X, dtype=float)
    if X.ndim == 0:
        X = X.reshape(1, 1)
    elif X.ndim == 1:
        # A 1-D array is a list of scalar inputs for 1-D kernels, except when
        # the kernel expects exactly one vector of that length.
        if input_dim is not None and input_dim == X.shape[0] and input_dim > 1:
            X = X.reshape(1, -1)
        else:
            X = X.reshape(-1, 1)
    elif X.ndim != 2:
        raise ValueError(f"{what} must be at most 2-D, got shape {X.shape}")
    if input_dim is not None and X.shape[1] != input_dim:
        raise ValueError(
            f"{what} has dimension {X.shape[1]}, kernel expects {input_dim}"
        )
    return X


def _sqdist(X, Xp):
    diff = X[:, None, :] - Xp[None, :, :]
    return np.einsum("nmd,nmd->nm", diff, diff)


def _merge_dims(a, b, what="kernels"):
    if a is None:
        return b
    if b is None or a == b:
        return a
    raise ValueError(f"input-dimension mismatch between {what}: {a} vs {b}")


class Kernel:
    """A positive-semidefinite covariance function.

    Subclasses implement ``gram(X, Xp)`` on row-stacked inputs; ``input_dim``
    is an int for dimension-locked kernels and None when any dimension is
    accepted.
    """

    input_dim = None

    def gram(self, X, Xp=None):
        X = _as_matrix(X, self.input_dim, "X")
        Xp = X if Xp is None else _as_matrix(Xp, self.input_dim, "Xp")
        if X.shape[1] != Xp.shape[1]:
            raise ValueError(
                f"X and Xp dimensions differ: {X.shape[1]} vs {Xp.shape[1]}"
            )
        return self._gram(X, Xp)

    def _gram(self, X, Xp):
        raise NotImplementedError

    def __call__(self, x, xp):
        X = _as_vector_row(x)
        Xp = _as_vector_row(xp)
        if X.shape[1] != Xp.shape[1]:
            raise ValueError(
                f"inputs have mismatched dimensions {X.shape[1]} vs {Xp.shape[1]}"
            )
        return float(self.gram(X, Xp)[0, 0])

    def __add__(self, other):
        return SumKernel(self, other)

    def __mul__(self, other):
        return ProductKernel(self, other)

    def __pow__(self, n):
        return PowerKernel(self, n)


def _as_vector_row(x):
    x = np.asarray(x, dtype=float)
    if x.ndim == 0:
        return x.reshape(1, 1)
    if x.ndim == 1:
        return x.reshape(1, -1)
    raise ValueError(f"expected a scalar or vector input, got shape {x.shape}")


# ---------------------------------------------------------------------------
# leaf kernels
# ---------------------------------------------------------------------------


class SEKernel(Kernel):
    """Squared exponential, ``sigma^2 exp(-||x - x'||^2 / l^2)``.

    Note the plain ``l^2`` denominator (no factor 2), matching the convention
    used everywhere else in this package.
    """

    def __init__(self, params: SEParams):
        self.params = params

    def _gram(self, X, Xp):
        p = self.params
        return p.sigma2 * np.exp(-_sqdist(X, Xp) / p.length_scale**2)


class ESSKernel(Kernel):
    """Exponential sine squared, ``sigma^2 exp(-2 sin^2(pi (x-x')/p) / l^2)``.

    Exactly p-periodic in x - x'; defined for scalar inputs.
    """

    input_dim = 1

    def __init__(self, params: ESSParams):
        self.params = params

    def _gram(self, X, Xp):
        p = self.params
        delta = X[:, 0][:, None] - Xp[:, 0][None, :]
        s = np.sin(np.pi * delta / p.period)
        return p.sigma2 * np.exp(-2.0 * s * s / p.length_scale**2)


def _pre_activation_cov(X, Xp, priors):
    """s(a, b) = sigma2_b1 + sigma2_w1 a.b, the layer pre-activation covariance."""
    return priors.sigma2_b1 + priors.sigma2_w1 * (X @ Xp.T)


def _pre_activation_diag(X, priors):
    return priors.sigma2_b1 + priors.sigma2_w1 * np.einsum("nd,nd->n", X, X)


def _check_nondegenerate(diag, X, priors):
    bad = np.flatnonzero(diag <= 0)
    if bad.size:
        raise ValueError(
            "degenerate pre-activation variance s(x,x) <= 0 for input "
            f"{X[bad[0]]} (sigma2_b1={priors.sigma2_b1})"
        )


class ReLUKernel(Kernel):
    """Infinitely wide ReLU layer: the degree-1 arc-cosine form.

        K(x,x') = (sigma2_w2 / 2 pi) sqrt(s(x,x) s(x',x'))
                  (sin w + (pi - w) cos w),
        w = arccos( s(x,x') / sqrt(s(x,x) s(x',x')) ),

    with s(a,b) = sigma2_b1 + sigma2_w1 a.b folding the bias into the
    pre-activation covariance.
    """

    def __init__(self, priors: PriorSpec):
        self.priors = priors

    def _gram(self, X, Xp):
        pr = self.priors
        dx = _pre_activation_diag(X, pr)
        dxp = _pre_activation_diag(Xp, pr)
        _check_nondegenerate(dx, X, pr)
        _check_nondegenerate(dxp, Xp, pr)
        cross = _pre_activation_cov(X, Xp, pr)
        norm = np.sqrt(np.outer(dx, dxp))
        omega = np.arccos(np.clip(cross / norm, -1.0, 1.0))
        return (
            pr.sigma2_w2
            / (2.0 * np.pi)
            * norm
            * (np.sin(omega) + (np.pi - omega) * np.cos(omega))
        )


class ERFKernel(Kernel):
    """Infinitely wide erf layer:

        K(x,x') = (2 sigma2_w2 / pi)
                  arcsin( 2 s(x,x') / sqrt((1 + 2 s(x,x)) (1 + 2 s(x',x'))) ).

    Bounded by sigma2_w2 in absolute value.
    """

    def __init__(self, priors: PriorSpec):
        self.priors = priors

    def _gram(self, X, Xp):
        pr = self.priors
        dx = _pre_activation_diag(X, pr)
        dxp = _pre_activation_diag(Xp, pr)
        cross = _pre_activation_cov(X, Xp, pr)
        denom = np.sqrt(np.outer(1.0 + 2.0 * dx, 1.0 + 2.0 * dxp))
        arg = np.clip(2.0 * cross / denom, -1.0, 1.0)
        return 2.0 * pr.sigma2_w2 / np.pi * np.arcsin(arg)


class RBFNetKernel(Kernel):
    """Infinitely wide layer of RBF units exp(-||x - c||^2 / (2 sigma2_g))
    with centers c ~ N(0, sigma2_u I):

        K(x,x') = (sigma_e/sigma_u)^d exp(-x.x / 2 sigma2_m)
                  exp(-||x-x'||^2 / 2 sigma2_s) exp(-x'.x' / 2 sigma2_m).

    Unit output-weight variance; scale with a ConstantKernel factor if an
    amplitude is needed.
    """

    def __init__(self, params: RBFLayerParams):
        self.params = params

    def _gram(self, X, Xp):
        p = self.params
        d = X.shape[1]
        ratio = math.sqrt(p.sigma2_e / p.sigma2_u) ** d
        ax = np.exp(-np.einsum("nd,nd->n", X, X) / (2.0 * p.sigma2_m))
        axp = np.exp(-np.einsum("nd,nd->n", Xp, Xp) / (2.0 * p.sigma2_m))
        mid = np.exp(-_sqdist(X, Xp) / (2.0 * p.sigma2_s))
        return ratio * ax[:, None] * mid * axp[None, :]


class CosNetKernel(Kernel):
    """Infinitely wide cosine-activation layer:

        K(x,x') = (sigma2_w2 / 2) [ exp(-||x-x'||^2 sigma2_w1 / 2)
                  + exp(-||x+x'||^2 sigma2_w1 / 2 - 2 sigma2_b1) ].

    The first term is a squared exponential; the second depends on x + x',
    so the kernel is not stationary and not periodic.
    """

    def __init__(self, priors: PriorSpec):
        self.priors = priors

    def _gram(self, X, Xp):
        pr = self.priors
        se = np.exp(-_sqdist(X, Xp) * pr.sigma2_w1 / 2.0)
        mirrored = np.exp(-_sqdist(X, -Xp) * pr.sigma2_w1 / 2.0 - 2.0 * pr.sigma2_b1)
        return pr.sigma2_w2 / 2.0 * (se + mirrored)


class PeriodicReLUKernel(Kernel):
    """ReLU layer on circle-warped 1-D inputs, normalized to unit diagonal:

        K(x,x') = (sigma2_w2 / pi) (sin w + (pi - w) cos w),
        w = arccos( (sigma2_b1 + sigma2_w1 cos(2 pi (x-x')/p))
                    / (sigma2_b1 + sigma2_w1) ).

    Exactly p-periodic in x - x' with K(x,x) = sigma2_w2.  Coincides with
    ReLUKernel composed with the periodic warp when sigma2_w1 + sigma2_b1 = 2
    (the two forms differ by the constant factor (sigma2_w1 + sigma2_b1)/2).
    """

    input_dim = 1

    def __init__(self, period, priors: PriorSpec):
        if period <= 0:
            raise ValueError(f"period must be positive, got {period}")
        if priors.sigma2_w1 + priors.sigma2_b1 <= 0:
            raise ValueError("sigma2_w1 + sigma2_b1 must be positive")
        self.period = float(period)
        self.priors = priors

    def _gram(self, X, Xp):
        pr = self.priors
        delta = X[:, 0][:, None] - Xp[:, 0][None, :]
        total = pr.sigma2_b1 + pr.sigma2_w1
        c = (pr.sigma2_b1 + pr.sigma2_w1 * np.cos(2.0 * np.pi * delta / self.period)) / total
        omega = np.arccos(np.clip(c, -1.0, 1.0))
        return pr.sigma2_w2 / np.pi * (np.sin(omega) + (np.pi - omega) * np.cos(omega))


class ConstantKernel(Kernel):
    """K(x,x') = c for all inputs; c = 0 is the additive identity."""

    def __init__(self, value):
        if value < 0:
            raise ValueError(f"constant kernel value must be >= 0, got {value}")
        self.value = float(value)

    def _gram(self, X, Xp):
        return np.full((X.shape[0], Xp.shape[0]), self.value)


# ---------------------------------------------------------------------------
# combinators
# ---------------------------------------------------------------------------


class SumKernel(Kernel):
    def __init__(self, a: Kernel, b: Kernel):
        self.a = a
        self.b = b
        self.input_dim = _merge_dims(a.input_dim, b.input_dim)

    def _gram(self, X, Xp):
        return self.a.gram(X, Xp) + self.b.gram(X, Xp)


class ProductKernel(Kernel):
    def __init__(self, a: Kernel, b: Kernel):
        self.a = a
        self.b = b
        self.input_dim = _merge_dims(a.input_dim, b.input_dim)

    def _gram(self, X, Xp):
        return self.a.gram(X, Xp) * self.b.gram(X, Xp)


class PowerKernel(Kernel):
    def __init__(self, base: Kernel, exponent):
        if int(exponent) != exponent or exponent < 1:
            raise ValueError(
                f"exponent must be a positive integer, got {exponent!r} "
                "(use ConstantKernel for the zeroth power)"
            )
        self.base = base
        self.exponent = int(exponent)
        self.input_dim = base.input_dim

    def _gram(self, X, Xp):
        return self.base.gram(X, Xp) ** self.exponent


class WarpedKernel(Kernel):
    """K(x,x') = base(u(x), u(x')) for a warping u with output dimension m."""

    def __init__(self, base: Kernel, warp, out_dim=None):
        if out_dim is None:
            out_dim = getattr(warp, "out_dim", None)
        if out_dim is None:
            raise ValueError("warp output dimension must be given")
        if base.input_dim is not None and base.input_dim != out_dim:
            raise ValueError(
                f"warp output dimension {out_dim} does not match "
                f"kernel input dimension {base.input_dim}"
            )
        self.base = base
        self.warp = warp
        self.out_dim = int(out_dim)
        self.input_dim = getattr(warp, "in_dim", None)

    def _apply(self, X):
        U = np.asarray(self.warp(X), dtype=float)
        if U.ndim != 2 or U.shape != (X.shape[0], self.out_dim):
            raise ValueError(
                f"warp returned shape {U.shape}, expected {(X.shape[0], self.out_dim)}"
            )
        return U

    def _gram(self, X, Xp):
        return self.base.gram(self._apply(X), self._apply(Xp))


class ProjectedKernel(Kernel):
    """K(x,x') = base(x[dims], x'[dims]) on a subset of input coordinates."""

    def __init__(self, base: Kernel, dims):
        dims = tuple(int(d) for d in dims)
        if len(dims) == 0 or len(set(dims)) != len(dims):
            raise ValueError("dims must be a non-empty set of unique indices")
        if any(d < 0 for d in dims):
            raise ValueError(f"negative index in dims: {dims}")
        if base.input_dim is not None and base.input_dim != len(dims):
            raise ValueError(
                f"kernel expects dimension {base.input_dim}, got {len(dims)} indices"
            )
        self.base = base
        self.dims = dims

    def _gram(self, X, Xp):
        hi = max(self.dims)
        if X.shape[1] <= hi:
            raise ValueError(
                f"index {hi} out of range for inputs of dimension {X.shape[1]}"
            )
        return self.base.gram(X[:, self.dims], Xp[:, self.dims])


class HiddenSumKernel(Kernel):
    """Kernel of two unit families summed pointwise under one output layer:

        K_A + K_B + sigma2_w2 (m_A(x) m_B(x') + m_A(x') m_B(x)),

    where m_A, m_B are the unit mean functions E[psi(x)].  The artefact term
    vanishes when either mean is identically zero, recovering plain addition.
    """

    def __init__(self, k_a: Kernel, k_b: Kernel, m_a, m_b, sigma2_w2):
        if sigma2_w2 <= 0:
            raise ValueError("sigma2_w2 must be positive")
        self.k_a = k_a
        self.k_b = k_b
        self.m_a = m_a
        self.m_b = m_b
        self.sigma2_w2 = float(sigma2_w2)
        self.input_dim = _merge_dims(k_a.input_dim, k_b.input_dim)

    def _mean(self, fn, X):
        m = np.asarray(fn(X), dtype=float).reshape(-1)
        if m.shape[0] != X.shape[0]:
            raise ValueError("mean function returned wrong number of values")
        return m

    def _gram(self, X, Xp):
        base = self.k_a.gram(X, Xp) + self.k_b.gram(X, Xp)
        ma_x = self._mean(self.m_a, X)
        mb_x = self._mean(self.m_b, X)
        ma_xp = self._mean(self.m_a, Xp)
        mb_xp = self._mean(self.m_b, Xp)
        artefact = np.outer(ma_x, mb_xp) + np.outer(mb_x, ma_xp)
        return base + self.sigma2_w2 * artefact


# ---------------------------------------------------------------------------
# mean functions for HiddenSumKernel
# ---------------------------------------------------------------------------


def zero_mean(X):
    """Unit mean of any odd activation under zero-centered priors."""
    return np.zeros(np.asarray(X).shape[0])


def constant_mean(c):
    """Unit mean of a saturating sigmoid (0.5) or any other constant."""

    def mean(X):
        return np.full(np.asarray(X).shape[0], float(c))

    return mean


def relu_mean(priors: PriorSpec):
    """Unit mean of a ReLU: E[max(z, 0)] = sqrt(s(x,x) / (2 pi))."""

    def mean(X):
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X.reshape(-1, 1)
        return np.sqrt(_pre_activation_diag(X, priors) / (2.0 * np.pi))

    return mean


# ---------------------------------------------------------------------------
# functional surface
# ---------------------------------------------------------------------------


def k_se(x, x_p, params: SEParams):
    """Squared-exponential kernel evaluated at one pair."""
    return SEKernel(params)(x, x_p)


def k_ess(x, x_p, params: ESSParams):
    """Exponential-sine-squared kernel evaluated at one scalar pair."""
    return ESSKernel(params)(x, x_p)


def k_relu(x, x_p, priors: PriorSpec):
    """Arc-cosine ReLU kernel evaluated at one pair."""
    return ReLUKernel(priors)(x, x_p)


def k_erf(x, x_p, priors: PriorSpec):
    """Arcsine erf kernel evaluated at one pair."""
    return ERFKernel(priors)(x, x_p)


def k_rbf_bnn(x, x_p, params: RBFLayerParams):
    """Infinite-width RBF-layer kernel evaluated at one pair."""
    return RBFNetKernel(params)(x, x_p)


def k_cos_bnn(x, x_p, priors: PriorSpec):
    """Infinite-width cosine-layer kernel evaluated at one pair."""
    return CosNetKernel(priors)(x, x_p)


def k_relu_periodic(x, x_p, p, priors: PriorSpec):
    """Periodic ReLU kernel (circle-warped inputs) at one scalar pair."""
    return PeriodicReLUKernel(p, priors)(x, x_p)


def kernel_add(k_a: Kernel, k_b: Kernel) -> Kernel:
    """Pointwise sum of two kernels."""
    return SumKernel(k_a, k_b)


def kernel_mul(k_a: Kernel, k_b: Kernel) -> Kernel:
    """Pointwise product of two kernels."""
    return ProductKernel(k_a, k_b)


def kernel_pow(k_a: Kernel, n) -> Kernel:
    """Pointwise n-th power of a kernel, n >= 1."""
    return PowerKernel(k_a, n)


def kernel_warp(k_a: Kernel, u, m) -> Kernel:
    """Kernel on warped inputs, (x, x') -> k_a(u(x), u(x')) with u: R^d -> R^m."""
    return WarpedKernel(k_a, u, m)


def kernel_project(k_a: Kernel, dims) -> Kernel:
    """Kernel on an index subset of the inputs, (x, x') -> k_a(x[dims], x'[dims])."""
    return ProjectedKernel(k_a, dims)


def hidden_add_kernel(k_a: Kernel, k_b: Kernel, m_a, m_b, sigma2_w2) -> Kernel:
    """Sum kernel plus the pointwise-hidden-sum artefact term.

    ``k_a`` and ``k_b`` must be the component kernels carrying the shared
    output variance ``sigma2_w2``; ``m_a``/``m_b`` map row-stacked inputs to
    the unit means E[psi(x)].
    """
    return HiddenSumKernel(k_a, k_b, m_a, m_b, sigma2_w2)
