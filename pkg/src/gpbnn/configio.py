"""Declarative JSON configuration for kernels and architectures.

One versioned schema drives the CLI, the time-series harness and the
snapshot formats.  Kernels and architectures serialize as mirrored trees::

    {"type": "sum", "children": [
        {"type": "relu", "sigma2_w1": 1.0, "sigma2_b1": 1.0, "sigma2_w2": 1.0},
        {"type": "periodic_warp", "period": 12.0,
         "child": {"type": "rbf_net", "sigma2_g": 1.0, "sigma2_u": 1.0}}]}

Errors raise :class:`ConfigError` carrying the JSON path of the offending
field.
"""

import hashlib
import json

from . import kernels as K
from . import networks as N
from .warping import PeriodicWarp

__all__ = [
    "SCHEMA_VERSION",
    "ConfigError",
    "load_config",
    "dump_config",
    "config_hash",
    "kernel_from_config",
    "kernel_to_config",
    "arch_from_config",
    "arch_to_config",
]

SCHEMA_VERSION = 1


class ConfigError(ValueError):
    """Configuration rejected; message carries the JSON path."""

    def __init__(self, path, message):
        self.path = path
        super().__init__(f"at {path or '$'}: {message}")


def _need(doc, key, path, types=None):
    if not isinstance(doc, dict):
        raise ConfigError(path, f"expected an object, got {type(doc).__name__}")
    if key not in doc:
        raise ConfigError(path, f"missing required field {key!r}")
    value = doc[key]
    if types is not None and not isinstance(value, types):
        raise ConfigError(f"{path}.{key}", f"expected {types}, got {type(value).__name__}")
    return value


def _number(doc, key, path, default=None):
    if default is not None and key not in doc:
        return default
    v = _need(doc, key, path)
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{path}.{key}", f"expected a number, got {v!r}")
    return float(v)


def load_config(path):
    """Parse a config file, checking the schema version envelope."""
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except FileNotFoundError:
        raise ConfigError("$", f"config file not found: {path}")
    except json.JSONDecodeError as e:
        raise ConfigError("$", f"invalid JSON in {path}: {e}")
    if not isinstance(doc, dict):
        raise ConfigError("$", "top-level config must be an object")
    version = doc.get("schema_version")
    if version != SCHEMA_VERSION:
        raise ConfigError("$.schema_version", f"expected {SCHEMA_VERSION}, got {version!r}")
    return doc


def dump_config(doc, path):
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def config_hash(doc):
    """Stable hash of a config document (canonical JSON, sha256)."""
    canon = json.dumps(doc, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()[:16]


# ---------------------------------------------------------------------------
# kernels
# ---------------------------------------------------------------------------


def _priors_from(doc, path):
    try:
        return K.PriorSpec(
            sigma2_w1=_number(doc, "sigma2_w1", path),
            sigma2_b1=_number(doc, "sigma2_b1", path),
            sigma2_w2=_number(doc, "sigma2_w2", path),
        )
    except ValueError as e:
        raise ConfigError(path, str(e))


def kernel_from_config(doc, path="$.kernel"):
    kind = _need(doc, "type", path, str)
    try:
        if kind == "se":
            return K.SEKernel(K.SEParams(_number(doc, "sigma2", path), _number(doc, "length_scale", path)))
        if kind == "ess":
            return K.ESSKernel(
                K.ESSParams(
                    _number(doc, "sigma2", path),
                    _number(doc, "length_scale", path),
                    _number(doc, "period", path),
                )
            )
        if kind == "relu":
            return K.ReLUKernel(_priors_from(doc, path))
        if kind == "erf":
            return K.ERFKernel(_priors_from(doc, path))
        if kind == "cos_net":
            return K.CosNetKernel(_priors_from(doc, path))
        if kind == "rbf_net":
            return K.RBFNetKernel(
                K.RBFLayerParams(_number(doc, "sigma2_g", path), _number(doc, "sigma2_u", path))
            )
        if kind == "relu_periodic":
            return K.PeriodicReLUKernel(_number(doc, "period", path), _priors_from(doc, path))
        if kind == "constant":
            return K.ConstantKernel(_number(doc, "value", path))
        if kind in ("sum", "product"):
            children = _need(doc, "children", path, list)
            if len(children) < 2:
                raise ConfigError(f"{path}.children", "needs at least two children")
            out = kernel_from_config(children[0], f"{path}.children[0]")
            for i, c in enumerate(children[1:], start=1):
                nxt = kernel_from_config(c, f"{path}.children[{i}]")
                out = K.SumKernel(out, nxt) if kind == "sum" else K.ProductKernel(out, nxt)
            return out
        if kind == "power":
            base = kernel_from_config(_need(doc, "base", path, dict), f"{path}.base")
            return K.PowerKernel(base, int(_number(doc, "exponent", path)))
        if kind == "periodic_warp":
            child = kernel_from_config(_need(doc, "child", path, dict), f"{path}.child")
            in_dim = int(_number(doc, "in_dim", path, default=1))
            dims = tuple(doc.get("warp_dims", (0,)))
            warp = PeriodicWarp(_number(doc, "period", path), in_dim=in_dim, warp_dims=dims)
            return K.WarpedKernel(child, warp, warp.out_dim)
        if kind == "project":
            child = kernel_from_config(_need(doc, "child", path, dict), f"{path}.child")
            dims = _need(doc, "dims", path, list)
            return K.ProjectedKernel(child, dims)
    except ConfigError:
        raise
    except ValueError as e:
        raise ConfigError(path, str(e))
    raise ConfigError(f"{path}.type", f"unknown kernel type {kind!r}")


def kernel_to_config(kernel):
    if isinstance(kernel, K.SEKernel):
        return {"type": "se", "sigma2": kernel.params.sigma2, "length_scale": kernel.params.length_scale}
    if isinstance(kernel, K.ESSKernel):
        p = kernel.params
        return {"type": "ess", "sigma2": p.sigma2, "length_scale": p.length_scale, "period": p.period}
    if isinstance(kernel, K.ReLUKernel):
        return {"type": "relu", **_priors_to(kernel.priors)}
    if isinstance(kernel, K.ERFKernel):
        return {"type": "erf", **_priors_to(kernel.priors)}
    if isinstance(kernel, K.CosNetKernel):
        return {"type": "cos_net", **_priors_to(kernel.priors)}
    if isinstance(kernel, K.RBFNetKernel):
        return {"type": "rbf_net", "sigma2_g": kernel.params.sigma2_g, "sigma2_u": kernel.params.sigma2_u}
    if isinstance(kernel, K.PeriodicReLUKernel):
        return {"type": "relu_periodic", "period": kernel.period, **_priors_to(kernel.priors)}
    if isinstance(kernel, K.ConstantKernel):
        return {"type": "constant", "value": kernel.value}
    if isinstance(kernel, K.SumKernel):
        return {"type": "sum", "children": [kernel_to_config(kernel.a), kernel_to_config(kernel.b)]}
    if isinstance(kernel, K.ProductKernel):
        return {"type": "product", "children": [kernel_to_config(kernel.a), kernel_to_config(kernel.b)]}
    if isinstance(kernel, K.PowerKernel):
        return {"type": "power", "base": kernel_to_config(kernel.base), "exponent": kernel.exponent}
    if isinstance(kernel, K.WarpedKernel):
        warp = kernel.warp
        if not isinstance(warp, PeriodicWarp):
            raise ValueError("only periodic warps are serializable")
        return {
            "type": "periodic_warp",
            "period": warp.period,
            "in_dim": warp.in_dim,
            "warp_dims": list(warp.warp_dims),
            "child": kernel_to_config(kernel.base),
        }
    if isinstance(kernel, K.ProjectedKernel):
        return {"type": "project", "dims": list(kernel.dims), "child": kernel_to_config(kernel.base)}
    raise ValueError(f"kernel {type(kernel).__name__} is not serializable")


def _priors_to(priors):
    return {
        "sigma2_w1": priors.sigma2_w1,
        "sigma2_b1": priors.sigma2_b1,
        "sigma2_w2": priors.sigma2_w2,
    }


# ---------------------------------------------------------------------------
# architectures
# ---------------------------------------------------------------------------


def _activation_from(doc, path):
    name = _need(doc, "name", path, str)
    try:
        if name == "leaky_relu":
            return N.Activation(name, slope=_number(doc, "slope", path, default=0.1))
        if name == "rbf":
            return N.Activation(name, sigma2_g=_number(doc, "sigma2_g", path))
        return N.Activation(name)
    except ValueError as e:
        raise ConfigError(path, str(e))


def _activation_to(act):
    doc = {"name": act.name}
    if act.name == "leaky_relu":
        doc["slope"] = act.slope
    if act.name == "rbf":
        doc["sigma2_g"] = act.sigma2_g
    return doc


def _warp_from(doc, path, default_in_dim):
    in_dim = int(_number(doc, "in_dim", path, default=default_in_dim))
    dims = tuple(doc.get("warp_dims", (0,)))
    try:
        return PeriodicWarp(_number(doc, "period", path), in_dim=in_dim, warp_dims=dims)
    except ValueError as e:
        raise ConfigError(path, str(e))


def _common_fields(doc, path):
    dims = doc.get("dims")
    if dims is not None:
        dims = tuple(int(d) for d in dims)
    in_dim = int(_number(doc, "in_dim", path, default=1))
    selected = len(dims) if dims is not None else in_dim
    warp = None
    if doc.get("warp") is not None:
        warp = _warp_from(doc["warp"], f"{path}.warp", selected)
    return in_dim, dims, warp


def arch_from_config(doc, path="$.arch"):
    kind = _need(doc, "type", path, str)
    try:
        if kind == "basic":
            in_dim, dims, warp = _common_fields(doc, path)
            return N.Basic(
                activation=_activation_from(_need(doc, "activation", path, dict), f"{path}.activation"),
                priors=_priors_from(doc, path),
                width=int(_number(doc, "width", path)),
                in_dim=in_dim,
                dims=dims,
                warp=warp,
                out_dim=int(_number(doc, "out_dim", path, default=1)),
                sigma2_b2=_number(doc, "sigma2_b2", path, default=0.0),
            )
        if kind == "deep":
            in_dim, dims, warp = _common_fields(doc, path)
            layer_docs = _need(doc, "layers", path, list)
            layers = tuple(
                N.LayerSpec(
                    activation=_activation_from(_need(l, "activation", f"{path}.layers[{i}]", dict),
                                                f"{path}.layers[{i}].activation"),
                    width=int(_number(l, "width", f"{path}.layers[{i}]")),
                    sigma2_w=_number(l, "sigma2_w", f"{path}.layers[{i}]"),
                    sigma2_b=_number(l, "sigma2_b", f"{path}.layers[{i}]"),
                )
                for i, l in enumerate(layer_docs)
            )
            return N.Deep(
                layers=layers,
                in_dim=in_dim,
                dims=dims,
                warp=warp,
                sigma2_w2=_number(doc, "sigma2_w2", path),
                sigma2_b2=_number(doc, "sigma2_b2", path, default=0.0),
                out_dim=int(_number(doc, "out_dim", path, default=1)),
            )
        if kind in ("hidden_mul", "hidden_add"):
            children = tuple(
                arch_from_config(c, f"{path}.children[{i}]")
                for i, c in enumerate(_need(doc, "children", path, list))
            )
            cls = N.HiddenMul if kind == "hidden_mul" else N.HiddenAdd
            return cls(
                children=children,
                sigma2_w2=_number(doc, "sigma2_w2", path),
                out_dim=int(_number(doc, "out_dim", path, default=1)),
                sigma2_b2=_number(doc, "sigma2_b2", path, default=0.0),
            )
        if kind in ("output_sum", "output_product"):
            children = tuple(
                arch_from_config(c, f"{path}.children[{i}]")
                for i, c in enumerate(_need(doc, "children", path, list))
            )
            cls = N.OutputSum if kind == "output_sum" else N.OutputProduct
            return cls(children=children)
    except ConfigError:
        raise
    except (ValueError, TypeError) as e:
        raise ConfigError(path, str(e))
    raise ConfigError(f"{path}.type", f"unknown architecture type {kind!r}")


def arch_to_config(node):
    if isinstance(node, N.Basic):
        doc = {
            "type": "basic",
            "activation": _activation_to(node.activation),
            **_priors_to(node.priors),
            "width": node.width,
            "in_dim": node.in_dim,
        }
        _attach_common(doc, node)
        return doc
    if isinstance(node, N.Deep):
        doc = {
            "type": "deep",
            "layers": [
                {
                    "activation": _activation_to(l.activation),
                    "width": l.width,
                    "sigma2_w": l.sigma2_w,
                    "sigma2_b": l.sigma2_b,
                }
                for l in node.layers
            ],
            "sigma2_w2": node.sigma2_w2,
            "in_dim": node.in_dim,
        }
        _attach_common(doc, node)
        return doc
    if isinstance(node, (N.HiddenMul, N.HiddenAdd)):
        doc = {
            "type": "hidden_mul" if isinstance(node, N.HiddenMul) else "hidden_add",
            "children": [arch_to_config(c) for c in node.children],
            "sigma2_w2": node.sigma2_w2,
        }
        if node.out_dim != 1:
            doc["out_dim"] = node.out_dim
        if node.sigma2_b2 > 0:
            doc["sigma2_b2"] = node.sigma2_b2
        return doc
    if isinstance(node, (N.OutputSum, N.OutputProduct)):
        return {
            "type": "output_sum" if isinstance(node, N.OutputSum) else "output_product",
            "children": [arch_to_config(c) for c in node.children],
        }
    raise ValueError(f"architecture node {type(node).__name__} is not serializable")


def _attach_common(doc, node):
    if node.dims is not None:
        doc["dims"] = list(node.dims)
    if node.warp is not None:
        doc["warp"] = {
            "period": node.warp.period,
            "in_dim": node.warp.in_dim,
            "warp_dims": list(node.warp.warp_dims),
        }
    if node.out_dim != 1:
        doc["out_dim"] = node.out_dim
    if node.sigma2_b2 > 0:
        doc["sigma2_b2"] = node.sigma2_b2
