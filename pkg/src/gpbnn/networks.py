"""Finite-width Bayesian network architectures mirroring kernel combinations.

An architecture is a tree of nodes:

    Basic       one hidden layer of iid units, psi(w1 x + b1), own output layer
    Deep        a stack of hidden layers, own output layer
    HiddenMul   children's hidden units multiplied pointwise, shared output layer
    HiddenAdd   children's hidden units summed pointwise, shared output layer
    OutputSum   children's outputs summed (children own their output layers)
    OutputProduct  children's outputs multiplied (not a GP; kept for the
                   negative test of output-level multiplication)

Basic and Deep nodes may project onto a subset of the ambient input
coordinates (``dims``) and/or warp their inputs (``warp``) before the first
layer.  All nodes are immutable; parameters live in a separate nested-dict
``ParamSet`` produced by :func:`sample_params`, so a single architecture can
be evaluated under many draws.

Output weights are drawn N(0, sigma2_w2 / H): the kernel-level variance
``sigma2_w2`` is divided by the width feeding the output layer, so the
equivalent kernel is width-independent.  Hidden-to-hidden weights in Deep
stacks are scaled the same way by their fan-in; first-layer weights are
unscaled, matching the pre-activation covariance s(a,b) = sigma2_b1 +
sigma2_w1 a.b.  There is no output bias unless ``sigma2_b2 > 0``.

:func:`empirical_kernel` is the universal Monte-Carlo oracle: an unbiased
estimate of E[f(x) f(x')] over parameter draws, exact in expectation at any
width.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import erf as _erf

from .kernels import PriorSpec
from .rng import substream
from .warping import PeriodicWarp, warp_periodic

__all__ = [
    "Activation",
    "Basic",
    "LayerSpec",
    "Deep",
    "HiddenMul",
    "HiddenAdd",
    "OutputSum",
    "OutputProduct",
    "PeriodicWarp",
    "warp_periodic",
    "node_in_dim",
    "node_out_dim",
    "unit_width",
    "n_params",
    "prior_variances",
    "pack_params",
    "unpack_params",
    "sample_params",
    "forward",
    "forward_batch",
    "forward_vjp",
    "value_and_vjp",
    "sample_prior_functions",
    "draw_output_samples",
    "empirical_kernel",
    "empirical_unit_mean",
]

_MIN_MC_SAMPLES = 1000
_MC_CHUNK = 65536


# ---------------------------------------------------------------------------
# activations
# ---------------------------------------------------------------------------

_ACTIVATION_NAMES = ("relu", "leaky_relu", "erf", "tanh", "cos", "rbf")


@dataclass(frozen=True)
class Activation:
    """Unit nonlinearity tag.

    ``leaky_relu`` carries its slope; ``rbf`` carries the bandwidth
    sigma2_g of exp(-||x - c||^2 / (2 sigma2_g)) units whose centers are
    drawn N(0, sigma2_u I) with sigma2_u taken from the layer's weight
    prior variance.
    """

    name: str
    slope: float = 0.1
    sigma2_g: float = 1.0

    def __post_init__(self):
        if self.name not in _ACTIVATION_NAMES:
            raise ValueError(f"unknown activation {self.name!r}, expected one of {_ACTIVATION_NAMES}")
        if self.name == "leaky_relu" and not 0.0 < self.slope < 1.0:
            raise ValueError(f"leaky_relu slope must be in (0, 1), got {self.slope}")
        if self.name == "rbf" and self.sigma2_g <= 0:
            raise ValueError(f"rbf sigma2_g must be positive, got {self.sigma2_g}")


def _act_apply(act: Activation, Z):
    if act.name == "relu":
        return np.maximum(Z, 0.0)
    if act.name == "leaky_relu":
        return np.where(Z > 0, Z, act.slope * Z)
    if act.name == "erf":
        return _erf(Z)
    if act.name == "tanh":
        return np.tanh(Z)
    if act.name == "cos":
        return np.cos(Z)
    raise ValueError(f"activation {act.name} has no pre-activation form")


def _act_deriv(act: Activation, Z):
    if act.name == "relu":
        return (Z > 0).astype(float)
    if act.name == "leaky_relu":
        return np.where(Z > 0, 1.0, act.slope)
    if act.name == "erf":
        return 2.0 / math.sqrt(math.pi) * np.exp(-Z * Z)
    if act.name == "tanh":
        t = np.tanh(Z)
        return 1.0 - t * t
    if act.name == "cos":
        return -np.sin(Z)
    raise ValueError(f"activation {act.name} has no pre-activation form")


# ---------------------------------------------------------------------------
# architecture nodes
# ---------------------------------------------------------------------------


def _check_input_plumbing(in_dim, dims, warp):
    if in_dim < 1:
        raise ValueError("in_dim must be >= 1")
    if dims is not None:
        dims = tuple(int(d) for d in dims)
        if len(dims) == 0 or len(set(dims)) != len(dims):
            raise ValueError("dims must be non-empty and unique")
        if any(d < 0 or d >= in_dim for d in dims):
            raise ValueError(f"dims {dims} out of range for in_dim={in_dim}")
    selected = len(dims) if dims is not None else in_dim
    if warp is not None and warp.in_dim != selected:
        raise ValueError(
            f"warp expects {warp.in_dim} inputs but the node selects {selected}"
        )
    return dims


@dataclass(frozen=True)
class Basic:
    """Single hidden layer of iid units under Gaussian priors."""

    activation: Activation
    priors: PriorSpec
    width: int
    in_dim: int = 1
    dims: tuple = None
    warp: PeriodicWarp = None
    out_dim: int = 1
    sigma2_b2: float = 0.0

    def __post_init__(self):
        if self.width < 1:
            raise ValueError("width must be >= 1")
        if self.out_dim < 1:
            raise ValueError("out_dim must be >= 1")
        if self.sigma2_b2 < 0:
            raise ValueError("sigma2_b2 must be non-negative")
        object.__setattr__(
            self, "dims", _check_input_plumbing(self.in_dim, self.dims, self.warp)
        )
        if self.activation.name == "rbf" and self.priors.sigma2_b1 != 0.0:
            raise ValueError("rbf units have no first-layer bias; set sigma2_b1 = 0")

    @property
    def layer_in(self):
        selected = len(self.dims) if self.dims is not None else self.in_dim
        return self.warp.out_dim if self.warp is not None else selected


@dataclass(frozen=True)
class LayerSpec:
    """One hidden layer of a Deep stack."""

    activation: Activation
    width: int
    sigma2_w: float
    sigma2_b: float

    def __post_init__(self):
        if self.width < 1:
            raise ValueError("width must be >= 1")
        if self.sigma2_w < 0 or self.sigma2_b < 0:
            raise ValueError("layer prior variances must be non-negative")
        if self.activation.name == "rbf" and self.sigma2_b != 0.0:
            raise ValueError("rbf layers have no bias; set sigma2_b = 0")


@dataclass(frozen=True)
class Deep:
    """Stack of hidden layers with one output layer.

    First-layer weights use the unscaled variance ``layers[0].sigma2_w``
    (centers variance for an rbf first layer); every later layer scales by
    its fan-in.
    """

    layers: tuple
    in_dim: int = 1
    dims: tuple = None
    warp: PeriodicWarp = None
    sigma2_w2: float = 1.0
    sigma2_b2: float = 0.0
    out_dim: int = 1

    def __post_init__(self):
        layers = tuple(self.layers)
        if len(layers) == 0:
            raise ValueError("Deep needs at least one layer")
        if any(l.activation.name == "rbf" for l in layers[1:]):
            raise ValueError("rbf units are only supported in the first layer")
        if self.sigma2_w2 <= 0:
            raise ValueError("sigma2_w2 must be positive")
        if self.sigma2_b2 < 0:
            raise ValueError("sigma2_b2 must be non-negative")
        if self.out_dim < 1:
            raise ValueError("out_dim must be >= 1")
        object.__setattr__(self, "layers", layers)
        object.__setattr__(
            self, "dims", _check_input_plumbing(self.in_dim, self.dims, self.warp)
        )

    @property
    def layer_in(self):
        selected = len(self.dims) if self.dims is not None else self.in_dim
        return self.warp.out_dim if self.warp is not None else selected


def _check_combinator_children(children, unit_role):
    children = tuple(children)
    if len(children) == 0:
        raise ValueError("combinator needs at least one child")
    allowed = (Basic, Deep, HiddenMul, HiddenAdd)
    if not unit_role:
        allowed = allowed + (OutputSum, OutputProduct)
    for c in children:
        if not isinstance(c, allowed):
            raise ValueError(f"invalid child node {type(c).__name__}")
    dims = {node_in_dim(c) for c in children}
    if len(dims) != 1:
        raise ValueError(f"children accept different input dimensions: {sorted(dims)}")
    if unit_role:
        widths = {unit_width(c) for c in children}
        if len(widths) != 1:
            raise ValueError(f"hidden-combinator children must share a width, got {sorted(widths)}")
    return children


@dataclass(frozen=True)
class HiddenMul:
    """Children's hidden units multiplied pointwise under a shared output layer."""

    children: tuple
    sigma2_w2: float
    out_dim: int = 1
    sigma2_b2: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "children", _check_combinator_children(self.children, True))
        if self.sigma2_w2 <= 0:
            raise ValueError("sigma2_w2 must be positive")
        if self.sigma2_b2 < 0:
            raise ValueError("sigma2_b2 must be non-negative")
        if self.out_dim < 1:
            raise ValueError("out_dim must be >= 1")


@dataclass(frozen=True)
class HiddenAdd:
    """Children's hidden units summed pointwise under a shared output layer."""

    children: tuple
    sigma2_w2: float
    out_dim: int = 1
    sigma2_b2: float = 0.0

    __post_init__ = HiddenMul.__post_init__


@dataclass(frozen=True)
class OutputSum:
    """Sum of independent child networks, each owning its output layer."""

    children: tuple

    def __post_init__(self):
        children = _check_combinator_children(self.children, False)
        if len({node_out_dim(c) for c in children}) != 1:
            raise ValueError("children must share an output dimension")
        object.__setattr__(self, "children", children)


@dataclass(frozen=True)
class OutputProduct:
    """Product of independent child network outputs.

    The resulting process is not a GP; this node exists for the negative
    test of output-level multiplication.
    """

    children: tuple

    __post_init__ = OutputSum.__post_init__


def node_in_dim(node):
    if isinstance(node, (Basic, Deep)):
        return node.in_dim
    return node_in_dim(node.children[0])


def node_out_dim(node):
    if isinstance(node, (Basic, Deep, HiddenMul, HiddenAdd)):
        return node.out_dim
    return node_out_dim(node.children[0])


def unit_width(node):
    if isinstance(node, Basic):
        return node.width
    if isinstance(node, Deep):
        return node.layers[-1].width
    if isinstance(node, (HiddenMul, HiddenAdd)):
        return unit_width(node.children[0])
    raise ValueError(f"{type(node).__name__} does not expose hidden units")


def _output_variance(node):
    if isinstance(node, Basic):
        return node.priors.sigma2_w2
    if isinstance(node, (Deep, HiddenMul, HiddenAdd)):
        return node.sigma2_w2
    raise ValueError(f"{type(node).__name__} does not own an output layer")


# ---------------------------------------------------------------------------
# parameter layout
# ---------------------------------------------------------------------------


def _unit_slots(node):
    """Ordered (path, shape, variance) slots for a node in unit role."""
    if isinstance(node, Basic):
        slots = [(("w1",), (node.width, node.layer_in), node.priors.sigma2_w1)]
        if node.activation.name != "rbf":
            slots.append((("b1",), (node.width,), node.priors.sigma2_b1))
        return slots
    if isinstance(node, Deep):
        slots = []
        fan_in = node.layer_in
        for i, layer in enumerate(node.layers):
            var_w = layer.sigma2_w if i == 0 else layer.sigma2_w / fan_in
            slots.append((("w", i), (layer.width, fan_in), var_w))
            if layer.activation.name != "rbf":
                slots.append((("b", i), (layer.width,), layer.sigma2_b))
            fan_in = layer.width
        return slots
    if isinstance(node, (HiddenMul, HiddenAdd)):
        slots = []
        for i, child in enumerate(node.children):
            slots.extend(
                (("children", i) + path, shape, var)
                for path, shape, var in _unit_slots(child)
            )
        return slots
    raise ValueError(f"{type(node).__name__} does not expose hidden units")


def _scalar_slots(node):
    """Ordered (path, shape, variance) slots for a node owning its output."""
    if isinstance(node, (OutputSum, OutputProduct)):
        slots = []
        for i, child in enumerate(node.children):
            slots.extend(
                (("children", i) + path, shape, var)
                for path, shape, var in _scalar_slots(child)
            )
        return slots
    slots = list(_unit_slots(node))
    width = unit_width(node)
    slots.append((("w2",), (width, node.out_dim), _output_variance(node) / width))
    if node.sigma2_b2 > 0:
        slots.append((("b2",), (node.out_dim,), node.sigma2_b2))
    return slots


def _skeleton(node):
    if isinstance(node, (OutputSum, OutputProduct)):
        return {"children": [_skeleton(c) for c in node.children]}
    tree = _unit_skeleton(node)
    tree["w2"] = None
    if node.sigma2_b2 > 0:
        tree["b2"] = None
    return tree


def _unit_skeleton(node):
    if isinstance(node, Basic):
        return {"w1": None, "b1": None}
    if isinstance(node, Deep):
        return {"w": [None] * len(node.layers), "b": [None] * len(node.layers)}
    return {"children": [_unit_skeleton(c) for c in node.children]}


def _tree_get(tree, path):
    cur = tree
    for p in path:
        cur = cur[p]
    return cur


def _tree_set(tree, path, value):
    cur = tree
    for p in path[:-1]:
        cur = cur[p]
    cur[path[-1]] = value


def n_params(arch):
    """Total number of scalar parameters of an architecture."""
    return sum(int(np.prod(shape)) for _, shape, _ in _scalar_slots(arch))


def prior_variances(arch):
    """Flat per-parameter prior variance vector, aligned with pack_params."""
    parts = [np.full(int(np.prod(shape)), var) for _, shape, var in _scalar_slots(arch)]
    return np.concatenate(parts) if parts else np.zeros(0)


def unpack_params(arch, flat):
    """Nested ParamSet from a flat vector (inverse of pack_params)."""
    flat = np.asarray(flat, dtype=float)
    if flat.shape != (n_params(arch),):
        raise ValueError(f"expected {n_params(arch)} parameters, got {flat.shape}")
    tree = _skeleton(arch)
    offset = 0
    for path, shape, _ in _scalar_slots(arch):
        size = int(np.prod(shape))
        _tree_set(tree, path, flat[offset : offset + size].reshape(shape))
        offset += size
    return tree


def pack_params(arch, params):
    """Flat vector from a nested ParamSet (or a matching gradient tree)."""
    parts = []
    for path, shape, _ in _scalar_slots(arch):
        arr = np.asarray(_tree_get(params, path), dtype=float)
        if arr.shape != shape:
            raise ValueError(f"parameter at {path} has shape {arr.shape}, expected {shape}")
        parts.append(arr.ravel())
    return np.concatenate(parts) if parts else np.zeros(0)


def sample_params(arch, seed):
    """One draw of every weight and bias from the architecture's priors.

    Deterministic for a fixed seed.  Output weights come out N(0,
    sigma2_w2 / H) per the width-scaling convention.
    """
    rng = substream(seed)
    std = np.sqrt(prior_variances(arch))
    return unpack_params(arch, rng.standard_normal(std.shape[0]) * std)


# ---------------------------------------------------------------------------
# forward evaluation and parameter gradients
# ---------------------------------------------------------------------------


def _node_input(node, X):
    Xs = X[:, node.dims] if node.dims is not None else X
    return node.warp(Xs) if node.warp is not None else Xs


def _rbf_units(Xw, centers, sigma2_g):
    d2 = (
        np.einsum("nd,nd->n", Xw, Xw)[:, None]
        - 2.0 * Xw @ centers.T
        + np.einsum("hd,hd->h", centers, centers)[None, :]
    )
    return np.exp(-d2 / (2.0 * sigma2_g))


def _unit_forward(node, params, X):
    if isinstance(node, Basic):
        Xw = _node_input(node, X)
        if node.activation.name == "rbf":
            U = _rbf_units(Xw, params["w1"], node.activation.sigma2_g)
            return U, ("rbf", Xw, U)
        Z = Xw @ params["w1"].T + params["b1"]
        return _act_apply(node.activation, Z), ("basic", Xw, Z)
    if isinstance(node, Deep):
        Xw = _node_input(node, X)
        A = Xw
        steps = []
        for i, layer in enumerate(node.layers):
            if layer.activation.name == "rbf":
                U = _rbf_units(A, params["w"][i], layer.activation.sigma2_g)
                steps.append(("rbf", A, U))
                A = U
            else:
                Z = A @ params["w"][i].T + params["b"][i]
                steps.append(("dense", A, Z))
                A = _act_apply(layer.activation, Z)
        return A, ("deep", steps)
    if isinstance(node, (HiddenMul, HiddenAdd)):
        outs = []
        caches = []
        for child, cp in zip(node.children, params["children"]):
            U, cache = _unit_forward(child, cp, X)
            outs.append(U)
            caches.append(cache)
        if isinstance(node, HiddenMul):
            U = outs[0].copy()
            for o in outs[1:]:
                U *= o
        else:
            U = np.sum(outs, axis=0)
        return U, ("combo", caches, outs)
    raise ValueError(f"{type(node).__name__} does not expose hidden units")


def _unit_vjp(node, params, cache, G):
    if isinstance(node, Basic):
        kind, Xw, stored = cache
        if kind == "rbf":
            U = stored
            W = G * U / node.activation.sigma2_g
            dC = W.T @ Xw - W.sum(axis=0)[:, None] * params["w1"]
            return {"w1": dC, "b1": None}
        Z = stored
        dZ = G * _act_deriv(node.activation, Z)
        return {"w1": dZ.T @ Xw, "b1": dZ.sum(axis=0)}
    if isinstance(node, Deep):
        _, steps = cache
        gw = [None] * len(node.layers)
        gb = [None] * len(node.layers)
        for i in range(len(node.layers) - 1, -1, -1):
            layer = node.layers[i]
            kind, A_prev, stored = steps[i]
            if kind == "rbf":
                # rbf layers are restricted to the first position, so no
                # gradient needs to flow further back.
                U = stored
                W = G * U / layer.activation.sigma2_g
                gw[i] = W.T @ A_prev - W.sum(axis=0)[:, None] * params["w"][i]
            else:
                Z = stored
                dZ = G * _act_deriv(layer.activation, Z)
                gw[i] = dZ.T @ A_prev
                gb[i] = dZ.sum(axis=0)
                if i > 0:
                    G = dZ @ params["w"][i]
        return {"w": gw, "b": gb}
    if isinstance(node, (HiddenMul, HiddenAdd)):
        _, caches, outs = cache
        grads = []
        for i, (child, cp, cc) in enumerate(zip(node.children, params["children"], caches)):
            if isinstance(node, HiddenMul):
                Gc = G
                for j, o in enumerate(outs):
                    if j != i:
                        Gc = Gc * o
            else:
                Gc = G
            grads.append(_unit_vjp(child, cp, cc, Gc))
        return {"children": grads}
    raise ValueError(f"{type(node).__name__} does not expose hidden units")


def _scalar_forward(node, params, X):
    if isinstance(node, (OutputSum, OutputProduct)):
        ys = []
        caches = []
        for child, cp in zip(node.children, params["children"]):
            y, cache = _scalar_forward(child, cp, X)
            ys.append(y)
            caches.append(cache)
        if isinstance(node, OutputSum):
            Y = np.sum(ys, axis=0)
        else:
            Y = ys[0].copy()
            for y in ys[1:]:
                Y *= y
        return Y, ("agg", caches, ys)
    U, ucache = _unit_forward(node, params, X)
    Y = U @ params["w2"]
    if params.get("b2") is not None:
        Y = Y + params["b2"]
    return Y, ("head", ucache, U)


def _scalar_vjp(node, params, cache, G):
    if isinstance(node, (OutputSum, OutputProduct)):
        _, caches, ys = cache
        grads = []
        for i, (child, cp, cc) in enumerate(zip(node.children, params["children"], caches)):
            if isinstance(node, OutputProduct):
                Gc = G
                for j, y in enumerate(ys):
                    if j != i:
                        Gc = Gc * y
            else:
                Gc = G
            grads.append(_scalar_vjp(child, cp, cc, Gc))
        return {"children": grads}
    _, ucache, U = cache
    grad = {"w2": U.T @ G}
    if params.get("b2") is not None:
        grad["b2"] = G.sum(axis=0)
    GU = G @ params["w2"].T
    grad.update(_unit_vjp(node, params, ucache, GU))
    return grad


def forward_batch(arch, params, X):
    """Evaluate the network on row-stacked inputs.

    Returns shape (n,) for single-output architectures and (n, out_dim)
    otherwise.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X.reshape(-1, 1)
    if X.shape[1] != node_in_dim(arch):
        raise ValueError(
            f"inputs have dimension {X.shape[1]}, architecture expects {node_in_dim(arch)}"
        )
    Y, _ = _scalar_forward(arch, params, X)
    return Y[:, 0] if node_out_dim(arch) == 1 else Y


def forward(arch, params, x):
    """Evaluate the network at a single input vector."""
    x = np.asarray(x, dtype=float).reshape(1, -1)
    y = forward_batch(arch, params, x)
    return float(y[0]) if y.ndim == 1 else y[0]


def value_and_vjp(arch, params, X):
    """Outputs plus a closure mapping output cotangents to parameter gradients.

    The closure reuses the forward caches, so evaluating the outputs and one
    gradient costs a single forward and a single backward pass.  Gradients
    come back as a tree matching the ParamSet, ready for
    :func:`pack_params`.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X.reshape(-1, 1)
    Y, cache = _scalar_forward(arch, params, X)

    def vjp(cotangent):
        G = np.asarray(cotangent, dtype=float)
        if G.ndim == 1:
            G = G.reshape(-1, 1)
        if G.shape != Y.shape:
            raise ValueError(f"cotangent shape {G.shape} does not match outputs {Y.shape}")
        return _scalar_vjp(arch, params, cache, G)

    out = Y[:, 0] if node_out_dim(arch) == 1 else Y
    return out, vjp


def forward_vjp(arch, params, X, cotangent):
    """Outputs plus the parameter gradient of sum(cotangent * outputs)."""
    out, vjp = value_and_vjp(arch, params, X)
    return out, vjp(cotangent)


# ---------------------------------------------------------------------------
# prior-function sampling
# ---------------------------------------------------------------------------


def sample_prior_functions(arch, grid, n_draws, seed):
    """Matrix of prior function draws over a grid.

    Row i is the network evaluated under ``sample_params(arch, seed + i)``,
    so individual rows can be reproduced in isolation.
    """
    if n_draws < 1:
        raise ValueError("n_draws must be >= 1")
    grid = np.asarray(grid, dtype=float)
    if grid.ndim == 1:
        grid = grid.reshape(-1, 1)
    out = np.empty((n_draws, grid.shape[0]))
    for i in range(n_draws):
        out[i] = forward_batch(arch, sample_params(arch, seed + i), grid)
    return out


# ---------------------------------------------------------------------------
# Monte-Carlo kernel estimation
# ---------------------------------------------------------------------------


def _iid_units(node):
    """True when the node's hidden units are iid across width, so a single
    unit per draw is a faithful sample."""
    if isinstance(node, Basic):
        return True
    if isinstance(node, (HiddenMul, HiddenAdd)):
        return all(isinstance(c, Basic) for c in node.children)
    return False


def _draw_units_reduced(node, X, size, rng):
    """(size, nX) values of one fresh hidden unit per draw."""
    if isinstance(node, Basic):
        Xw = _node_input(node, X)
        if node.activation.name == "rbf":
            c = rng.standard_normal((size, Xw.shape[1])) * math.sqrt(node.priors.sigma2_w1)
            d2 = (
                np.einsum("sd,sd->s", c, c)[:, None]
                - 2.0 * c @ Xw.T
                + np.einsum("nd,nd->n", Xw, Xw)[None, :]
            )
            return np.exp(-d2 / (2.0 * node.activation.sigma2_g))
        w = rng.standard_normal((size, Xw.shape[1])) * math.sqrt(node.priors.sigma2_w1)
        b = rng.standard_normal(size) * math.sqrt(node.priors.sigma2_b1)
        return _act_apply(node.activation, w @ Xw.T + b[:, None])
    # HiddenMul / HiddenAdd over Basic children
    vals = [_draw_units_reduced(c, X, size, rng) for c in node.children]
    if isinstance(node, HiddenMul):
        out = vals[0]
        for v in vals[1:]:
            out = out * v
        return out
    return np.sum(vals, axis=0)


def _contains_deep(node):
    if isinstance(node, Deep):
        return True
    if isinstance(node, (Basic,)):
        return False
    return any(_contains_deep(c) for c in node.children)


def _draw_scalar_batched(node, X, size, rng):
    """(size, nX) full network outputs, parameters redrawn per sample."""
    if isinstance(node, (OutputSum, OutputProduct)):
        vals = [_draw_scalar_batched(c, X, size, rng) for c in node.children]
        if isinstance(node, OutputSum):
            return np.sum(vals, axis=0)
        out = vals[0]
        for v in vals[1:]:
            out = out * v
        return out
    U = _draw_batched_units(node, X, size, rng)  # (size, nX, H)
    width = unit_width(node)
    w2 = rng.standard_normal((size, width)) * math.sqrt(_output_variance(node) / width)
    Y = np.einsum("sxh,sh->sx", U, w2)
    if node.sigma2_b2 > 0:
        Y = Y + (rng.standard_normal(size) * math.sqrt(node.sigma2_b2))[:, None]
    return Y


def _draw_batched_units(node, X, size, rng):
    if isinstance(node, Basic):
        Xw = _node_input(node, X)
        H = node.width
        if node.activation.name == "rbf":
            c = rng.standard_normal((size, H, Xw.shape[1])) * math.sqrt(node.priors.sigma2_w1)
            d2 = (
                np.einsum("shd,shd->sh", c, c)[:, None, :]
                - 2.0 * np.einsum("xd,shd->sxh", Xw, c)
                + np.einsum("xd,xd->x", Xw, Xw)[None, :, None]
            )
            return np.exp(-d2 / (2.0 * node.activation.sigma2_g))
        w = rng.standard_normal((size, H, Xw.shape[1])) * math.sqrt(node.priors.sigma2_w1)
        b = rng.standard_normal((size, H)) * math.sqrt(node.priors.sigma2_b1)
        Z = np.einsum("xd,shd->sxh", Xw, w) + b[:, None, :]
        return _act_apply(node.activation, Z)
    if isinstance(node, (HiddenMul, HiddenAdd)):
        vals = [_draw_batched_units(c, X, size, rng) for c in node.children]
        if isinstance(node, HiddenMul):
            out = vals[0]
            for v in vals[1:]:
                out = out * v
            return out
        return np.sum(vals, axis=0)
    raise ValueError(f"{type(node).__name__} has no batched unit sampler")


def draw_output_samples(arch, X, n_samples, seed):
    """(n_samples, nX) matrix of network outputs under fresh parameter draws.

    Draws are chunked with chunk boundaries fixed by sample index, so the
    result is independent of how the work would be split across workers.
    Requires a single-output architecture.
    """
    if node_out_dim(arch) != 1:
        raise ValueError("draw_output_samples requires out_dim == 1")
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X.reshape(-1, 1)
    chunked_ok = not _contains_deep(arch)
    chunk = 4096 if chunked_ok else 512
    out = np.empty((n_samples, X.shape[0]))
    start = 0
    ci = 0
    while start < n_samples:
        size = min(chunk, n_samples - start)
        rng = substream(seed, ci)
        if chunked_ok:
            out[start : start + size] = _draw_scalar_batched(arch, X, size, rng)
        else:
            std = np.sqrt(prior_variances(arch))
            for s in range(size):
                params = unpack_params(arch, rng.standard_normal(std.shape[0]) * std)
                out[start + s] = forward_batch(arch, params, X)
        start += size
        ci += 1
    return out


def empirical_kernel(arch, x, x_p, n_samples, seed, method="auto"):
    """Monte-Carlo estimate of E[f(x) f(x')] with its standard error.

    ``method="reduced"`` integrates the output layer out analytically and
    averages sigma2_w2 * psi(x) psi(x') over single hidden-unit draws; it is
    available for trees whose units are iid across width (Basic, and
    HiddenMul/HiddenAdd over Basic children).  ``method="draws"`` averages
    f(x) f(x') over full parameter draws at the architecture's declared
    widths.  ``"auto"`` picks the reduced form when it applies.
    """
    if n_samples < _MIN_MC_SAMPLES:
        raise ValueError(f"n_samples must be >= {_MIN_MC_SAMPLES}, got {n_samples}")
    if method not in ("auto", "reduced", "draws"):
        raise ValueError(f"unknown method {method!r}")
    if method == "auto":
        method = "reduced" if _iid_units(arch) else "draws"
    if method == "reduced" and not _iid_units(arch):
        raise ValueError("reduced estimator needs iid hidden units (single-layer trees)")

    X = np.stack(
        [np.atleast_1d(np.asarray(x, dtype=float)), np.atleast_1d(np.asarray(x_p, dtype=float))]
    )
    total = 0
    acc = 0.0
    acc_sq = 0.0
    start = 0
    ci = 0
    while start < n_samples:
        size = min(_MC_CHUNK, n_samples - start)
        rng = substream(seed, ci)
        if method == "reduced":
            units = _draw_units_reduced(arch, X, size, rng)
            draws = _output_variance(arch) * units[:, 0] * units[:, 1] + arch.sigma2_b2
        else:
            if not _contains_deep(arch):
                outs = _draw_scalar_batched(arch, X, size, rng)
            else:
                std = np.sqrt(prior_variances(arch))
                outs = np.empty((size, 2))
                for s in range(size):
                    params = unpack_params(arch, rng.standard_normal(std.shape[0]) * std)
                    outs[s] = forward_batch(arch, params, X)
            draws = outs[:, 0] * outs[:, 1]
        acc += draws.sum()
        acc_sq += (draws * draws).sum()
        total += size
        start += size
        ci += 1
    mean = acc / total
    var = max(acc_sq - total * mean * mean, 0.0) / (total - 1)
    return mean, math.sqrt(var / total)


def empirical_unit_mean(node, X, n_samples, seed):
    """Monte-Carlo estimate of the unit mean E[psi(x)] on row-stacked inputs.

    Companion to hidden_add_kernel for activations without an analytic mean.
    """
    if not _iid_units(node):
        raise ValueError("unit means need iid hidden units")
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X.reshape(-1, 1)
    total = 0
    acc = np.zeros(X.shape[0])
    start = 0
    ci = 0
    while start < n_samples:
        size = min(_MC_CHUNK, n_samples - start)
        rng = substream(seed, ci)
        acc += _draw_units_reduced(node, X, size, rng).sum(axis=0)
        total += size
        start += size
        ci += 1
    return acc / total
