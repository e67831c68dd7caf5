"""JSON schema round trips and validation messages."""

import json

import numpy as np
import pytest

from gpbnn import configio
from gpbnn import kernels as K
from gpbnn import networks as N
from gpbnn.warping import PeriodicWarp

PR = K.PriorSpec(1.0, 0.5, 2.0)


def _roundtrip_kernel(kernel):
    doc = configio.kernel_to_config(kernel)
    back = configio.kernel_from_config(json.loads(json.dumps(doc)))
    rng = np.random.default_rng(0)
    dim = kernel.input_dim or 2
    for _ in range(5):
        x, xp = rng.normal(size=dim), rng.normal(size=dim)
        assert back(x, xp) == pytest.approx(kernel(x, xp), abs=1e-14)


class TestKernelConfig:
    def test_leaf_round_trips(self):
        for kernel in (
            K.SEKernel(K.SEParams(1.2, 0.7)),
            K.ESSKernel(K.ESSParams(1.0, 0.9, 3.0)),
            K.ReLUKernel(PR),
            K.ERFKernel(PR),
            K.CosNetKernel(PR),
            K.RBFNetKernel(K.RBFLayerParams(0.8, 1.5)),
            K.PeriodicReLUKernel(2.0, K.PriorSpec(1.0, 1.0, 1.0)),
            K.ConstantKernel(0.4),
        ):
            _roundtrip_kernel(kernel)

    def test_composite_round_trip(self):
        kernel = K.SumKernel(
            K.ProductKernel(K.ConstantKernel(0.5), K.ReLUKernel(PR)),
            K.WarpedKernel(K.RBFNetKernel(K.RBFLayerParams(1.0, 1.0)), PeriodicWarp(2.5), 2),
        )
        _roundtrip_kernel(kernel)

    def test_power_and_project_round_trip(self):
        kernel = K.SumKernel(
            K.PowerKernel(K.ProjectedKernel(K.ERFKernel(PR), (0,)), 2),
            K.ProjectedKernel(K.SEKernel(K.SEParams(1.0, 1.0)), (1,)),
        )
        _roundtrip_kernel(kernel)

    def test_unknown_type(self):
        with pytest.raises(configio.ConfigError, match="unknown kernel type"):
            configio.kernel_from_config({"type": "matern"})

    def test_missing_field_names_path(self):
        with pytest.raises(configio.ConfigError, match=r"\$\.kernel"):
            configio.kernel_from_config({"type": "se", "sigma2": 1.0})

    def test_invalid_value_carries_path(self):
        with pytest.raises(configio.ConfigError, match="positive"):
            configio.kernel_from_config({"type": "se", "sigma2": -1.0, "length_scale": 1.0})


class TestArchConfig:
    def test_round_trips(self):
        archs = [
            N.Basic(N.Activation("relu"), PR, 8),
            N.Basic(
                N.Activation("rbf", sigma2_g=0.7),
                K.PriorSpec(1.0, 0.0, 1.0),
                16,
                in_dim=2,
                dims=(1,),
                warp=PeriodicWarp(3.0),
                out_dim=2,
                sigma2_b2=0.1,
            ),
            N.Deep(
                (
                    N.LayerSpec(N.Activation("relu"), 8, 1.0, 1.0),
                    N.LayerSpec(N.Activation("tanh"), 8, 0.5, 0.2),
                ),
                in_dim=2,
                warp=PeriodicWarp(6.28, in_dim=2, warp_dims=(0,)),
                sigma2_w2=2.0,
                out_dim=3,
                sigma2_b2=1.0,
            ),
            N.OutputSum((N.Basic(N.Activation("relu"), PR, 8), N.Basic(N.Activation("erf"), PR, 8))),
            N.HiddenMul(
                (N.Basic(N.Activation("relu"), PR, 8), N.Basic(N.Activation("cos"), PR, 8)),
                sigma2_w2=1.5,
            ),
            N.HiddenAdd(
                (N.Basic(N.Activation("leaky_relu", slope=0.2), PR, 8),
                 N.Basic(N.Activation("tanh"), PR, 8)),
                sigma2_w2=1.0,
            ),
            N.OutputProduct((N.Basic(N.Activation("relu"), PR, 8),
                             N.Basic(N.Activation("relu"), PR, 8))),
        ]
        for arch in archs:
            doc = configio.arch_to_config(arch)
            back = configio.arch_from_config(json.loads(json.dumps(doc)))
            assert back == arch

    def test_bad_child_path_reported(self):
        doc = {
            "type": "output_sum",
            "children": [
                {"type": "basic", "activation": {"name": "relu"}, "width": 4,
                 "sigma2_w1": 1.0, "sigma2_b1": 1.0, "sigma2_w2": 1.0},
                {"type": "basic", "activation": {"name": "nope"}, "width": 4,
                 "sigma2_w1": 1.0, "sigma2_b1": 1.0, "sigma2_w2": 1.0},
            ],
        }
        with pytest.raises(configio.ConfigError, match=r"children\[1\]"):
            configio.arch_from_config(doc)

    def test_unknown_type(self):
        with pytest.raises(configio.ConfigError, match="unknown architecture"):
            configio.arch_from_config({"type": "transformer"})


class TestEnvelope:
    def test_load_rejects_bad_json(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text("{not json")
        with pytest.raises(configio.ConfigError, match="invalid JSON"):
            configio.load_config(path)

    def test_load_rejects_wrong_version(self, tmp_path):
        path = tmp_path / "v9.json"
        path.write_text(json.dumps({"schema_version": 9}))
        with pytest.raises(configio.ConfigError, match="schema_version"):
            configio.load_config(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(configio.ConfigError, match="not found"):
            configio.load_config(tmp_path / "absent.json")

    def test_config_hash_stable_under_key_order(self):
        a = {"b": 1, "a": {"y": 2, "x": 3}}
        b = {"a": {"x": 3, "y": 2}, "b": 1}
        assert configio.config_hash(a) == configio.config_hash(b)
