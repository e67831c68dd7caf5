"""Series IO, gap splitting, model construction, experiment driver."""

import csv

import numpy as np
import pytest

from gpbnn import kernels as K
from gpbnn import networks as N
from gpbnn import timeseries as TS


def _write_csv(path, rows, header=("t", "y")):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


class TestLoadSeries:
    def test_valid_file(self, tmp_path):
        path = tmp_path / "s.csv"
        _write_csv(path, [(t, 0.1 * t) for t in range(120)])
        series = TS.load_series(path)
        assert len(series) == 120

    def test_duplicate_month_rejected(self, tmp_path):
        path = tmp_path / "dup.csv"
        rows = [(t, 1.0) for t in range(30)]
        rows[10] = (9, 1.0)
        _write_csv(path, rows)
        with pytest.raises(ValueError, match="increasing"):
            TS.load_series(path)

    def test_short_series_rejected(self, tmp_path):
        path = tmp_path / "short.csv"
        _write_csv(path, [(t, 1.0) for t in range(23)])
        with pytest.raises(ValueError, match="24"):
            TS.load_series(path)

    def test_missing_value_rejected(self, tmp_path):
        path = tmp_path / "gap.csv"
        with open(path, "w") as fh:
            fh.write("t,y\n0,1.0\n1,\n2,3.0\n" + "\n".join(f"{t},1.0" for t in range(3, 30)))
        with pytest.raises(ValueError, match="missing"):
            TS.load_series(path)

    def test_wrong_header_rejected(self, tmp_path):
        path = tmp_path / "h.csv"
        _write_csv(path, [(t, 1.0) for t in range(30)], header=("month", "value"))
        with pytest.raises(ValueError, match="header"):
            TS.load_series(path)

    def test_synthetic_round_trips_through_save(self, tmp_path):
        t = np.arange(120)
        series = TS.TimeSeries(t, t / 12 + np.sin(2 * np.pi * t / 12), "trended")
        path = tmp_path / "rt.csv"
        TS.save_series(series, path)
        back = TS.load_series(path)
        np.testing.assert_array_equal(back.t, series.t)
        np.testing.assert_allclose(back.y, series.y, rtol=0, atol=0)


class TestGapSplit:
    def test_train_count(self):
        series = TS.make_synthetic_series("additive", n_months=120, seed=0)
        split = TS.make_gap_split(series)
        assert split.train_t.shape[0] == 96  # 120 - 24 deleted months

    def test_gap_grid_inside_window(self):
        split = TS.make_gap_split(TS.make_synthetic_series("additive", seed=0))
        assert split.gap_grid.min() >= 36 and split.gap_grid.max() < 60

    def test_extrapolation_grid_inside_window(self):
        split = TS.make_gap_split(TS.make_synthetic_series("additive", seed=0))
        assert split.extrap_grid.min() > 120 and split.extrap_grid.max() <= 240

    def test_short_series_rejected(self):
        series = TS.TimeSeries(np.arange(60), np.zeros(60))
        with pytest.raises(ValueError, match="120"):
            TS.make_gap_split(series)

    def test_train_excludes_gap(self):
        split = TS.make_gap_split(TS.make_synthetic_series("additive", seed=0))
        assert not np.any((split.train_t >= 36) & (split.train_t < 60))


class TestModelConfig:
    def test_gp_kind_requires_exact_gp(self):
        with pytest.raises(ValueError, match="exact_gp"):
            TS.ModelConfig(kind="combined_gp_add", inference="hmc")

    def test_bnn_kind_rejects_exact_gp(self):
        with pytest.raises(ValueError, match="hmc or ensemble"):
            TS.ModelConfig(kind="relu_bnn", inference="exact_gp")

    def test_unknown_kind(self):
        with pytest.raises(ValueError, match="unknown"):
            TS.ModelConfig(kind="transformer")

    def test_defaults_by_kind(self):
        assert TS.ModelConfig(kind="combined_gp_mul").inference == "exact_gp"
        assert TS.ModelConfig(kind="periodic_bnn").inference == "hmc"


HYPER = {
    "relu_sigma2_w1": 1.0,
    "relu_sigma2_out": 0.8,
    "rbf_sigma2_g": 1.0,
    "per_sigma2_out": 1.2,
    "sigma2_out": 0.9,
}


class TestModelConstruction:
    def test_combined_add_kernel_diagonal(self):
        p_std = 0.4
        kernel = TS.make_kernel("combined_gp_add", HYPER, p_std)
        x = np.array([0.7])
        relu_diag = K.k_relu(x, x, K.PriorSpec(1.0, 1.0, 0.8))
        per = K.kernel_mul(
            K.ConstantKernel(1.2),
            K.kernel_warp(K.RBFNetKernel(K.RBFLayerParams(1.0, 1.0)), TS.PeriodicWarp(p_std), 2),
        )
        assert kernel(x, x) == pytest.approx(relu_diag + per(x, x), abs=1e-14)

    def test_periodic_arch_draws_are_period_locked(self):
        p_std = 0.5
        arch = TS.make_arch("periodic_bnn", HYPER, p_std, width=20)
        grid = np.linspace(-2, 2, 30).reshape(-1, 1)
        for i in range(5):
            params = N.sample_params(arch, 60 + i)
            a = N.forward_batch(arch, params, grid)
            b = N.forward_batch(arch, params, grid + p_std)
            assert np.max(np.abs(a - b)) <= 1e-10

    def test_combined_mul_empirical_matches_kernel_product(self):
        p_std = 0.7
        arch = TS.make_arch("combined_bnn_mul", HYPER, p_std, width=16)
        kernel = TS.make_kernel("combined_bnn_mul", HYPER, p_std)
        x, xp = np.array([0.3]), np.array([-0.6])
        est, sem = N.empirical_kernel(arch, x, xp, 150_000, seed=70)
        assert abs(est - kernel(x, xp)) <= 3.0 * sem

    def test_bnn_and_gp_kernels_match(self):
        # additive variant: network tree and kernel tree share hyperparameters
        p_std = 0.35
        k_gp = TS.make_kernel("combined_gp_add", HYPER, p_std)
        k_bnn = TS.make_kernel("combined_bnn_add", HYPER, p_std)
        rng = np.random.default_rng(0)
        for _ in range(5):
            x, xp = rng.normal(size=1), rng.normal(size=1)
            assert k_gp(x, xp) == pytest.approx(k_bnn(x, xp), abs=1e-14)


@pytest.fixture(scope="module")
def results(tmp_path_factory):
    out = tmp_path_factory.mktemp("exp")
    series = TS.make_synthetic_series("additive", seed=1)
    configs = [
        TS.ModelConfig(kind="combined_gp_add"),
        TS.ModelConfig(kind="combined_gp_mul"),
    ]
    models = TS.run_experiment(series, configs, out, seed=0)
    return out, models


class TestRunExperiment:
    def test_csv_row_count_matches_grid(self, results):
        out, _ = results
        series = TS.make_synthetic_series("additive", seed=1)
        split = TS.make_gap_split(series)
        n_grid = np.unique(
            np.concatenate([split.train_t, split.gap_grid, split.extrap_grid])
        ).shape[0]
        with open(out / "combined_gp_add.csv") as fh:
            rows = list(csv.reader(fh))
        assert len(rows) - 1 == n_grid

    def test_std_nonnegative(self, results):
        out, _ = results
        with open(out / "combined_gp_mul.csv") as fh:
            rows = list(csv.reader(fh))[1:]
        assert all(float(r[2]) >= 0 for r in rows)

    def test_manifest_records_flags(self, results):
        import json

        out, _ = results
        doc = json.loads((out / "manifest.json").read_text())
        assert doc["bands_include_observation_noise"] is True
        assert len(doc["models"]) == 2
        assert all("runtime_seconds" in m for m in doc["models"])

    def test_kernel_argument_order_invariant(self, results):
        _, models = results
        model = models["combined_gp_add"]
        split = TS.make_gap_split(TS.make_synthetic_series("additive", seed=1))
        swapped = TS.TimeseriesModel(TS.ModelConfig(kind="combined_gp_add", priors=model.hyper))
        swapped.fit(split)
        swapped.kernel = K.SumKernel(swapped.kernel.b, swapped.kernel.a)
        from gpbnn import gp

        Xs = swapped.scaler.tx(split.gap_grid).reshape(-1, 1)
        post = gp.gp_fit(gp.GPModel(swapped.kernel, 0.01),
                         swapped.scaler.tx(split.train_t).reshape(-1, 1),
                         swapped.scaler.ty(split.train_y))
        mean_sw, _ = gp.gp_predict(post, Xs)
        mean, _ = models["combined_gp_add"].predict(split.gap_grid)
        mean_sw = swapped.scaler.mu_y + swapped.scaler.sd_y * mean_sw
        np.testing.assert_allclose(mean, mean_sw, atol=1e-8)


class TestPeriodicCannotFitTrend:
    def test_pure_periodic_underfits_trended_series(self):
        t = np.arange(120)
        series = TS.TimeSeries(t, t / 12 + np.sin(2 * np.pi * t / 12), "trended")
        split = TS.make_gap_split(series)
        periodic = TS.build_model(
            TS.ModelConfig(kind="periodic_bnn", hmc_samples=200, hmc_chains=2, seed=1)
        ).fit(split)
        combined = TS.build_model(
            TS.ModelConfig(kind="combined_bnn_add", hmc_samples=200, hmc_chains=2, seed=1)
        ).fit(split)
        p_mean, _ = periodic.predict(split.train_t)
        c_mean, _ = combined.predict(split.train_t)
        rmse_periodic = np.sqrt(np.mean((p_mean - split.train_y) ** 2))
        rmse_combined = np.sqrt(np.mean((c_mean - split.train_y) ** 2))
        assert rmse_periodic > rmse_combined


class TestSynthetic:
    def test_kinds(self):
        add = TS.make_synthetic_series("additive", seed=0)
        mul = TS.make_synthetic_series("multiplicative", seed=0)
        assert len(add) == 120 and len(mul) == 120
        with pytest.raises(ValueError):
            TS.make_synthetic_series("chaotic")

    def test_deterministic(self):
        a = TS.make_synthetic_series("additive", seed=5)
        b = TS.make_synthetic_series("additive", seed=5)
        np.testing.assert_array_equal(a.y, b.y)

    def test_multiplicative_amplitude_grows(self):
        series = TS.make_synthetic_series("multiplicative", seed=3, noise_std=0.0)
        first_cycle = series.y[:12]
        last_cycle = series.y[-12:]
        assert np.ptp(last_cycle) > np.ptp(first_cycle)
