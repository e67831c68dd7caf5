"""Gap-prediction harness for monthly series with trend plus seasonality.

Workflow: load (or synthesize) ten years of monthly data, delete years 3-5,
fit combinations of a trend-friendly ReLU component and an exactly periodic
component (network or the equivalent kernel), and emit predictive bands over
the training range, the gap, and a ten-year extrapolation horizon.

Data are standardized internally (inputs and targets to zero mean, unit
variance); predictions are reported back on the raw scale and the periodic
component's period is rescaled accordingly.  Predictive bands include the
observation noise; the manifest records this.
"""

import csv
import json
import os
import time
from dataclasses import dataclass

import numpy as np

from . import configio, gp, inference, kernels, networks
from .warping import PeriodicWarp

__all__ = [
    "TimeSeries",
    "GapSplit",
    "ModelConfig",
    "TimeseriesModel",
    "load_series",
    "save_series",
    "make_synthetic_series",
    "make_gap_split",
    "make_kernel",
    "make_arch",
    "select_hyperparams",
    "build_model",
    "run_experiment",
]

GAP_RANGE = (36, 60)
EXTRAP_RANGE = (120, 240)

MODEL_KINDS = (
    "relu_bnn",
    "periodic_bnn",
    "combined_bnn_add",
    "combined_bnn_mul",
    "combined_gp_add",
    "combined_gp_mul",
)
_GP_KINDS = ("combined_gp_add", "combined_gp_mul")


@dataclass
class TimeSeries:
    """Monthly observations: integer months since start plus values."""

    t: np.ndarray
    y: np.ndarray
    name: str = "series"

    def __post_init__(self):
        self.t = np.asarray(self.t)
        self.y = np.asarray(self.y, dtype=float)
        if self.t.shape != self.y.shape or self.t.ndim != 1:
            raise ValueError("t and y must be 1-D arrays of equal length")
        if np.any(np.diff(self.t) <= 0):
            raise ValueError("t must be strictly increasing (no duplicate months)")

    def __len__(self):
        return self.t.shape[0]


def load_series(path, name=None):
    """Read a 't,y' CSV; rejects short, non-monotone or incomplete series."""
    try:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
    except FileNotFoundError:
        raise ValueError(f"data file not found: {path}")
    if not rows or [c.strip() for c in rows[0]] != ["t", "y"]:
        raise ValueError(f"{path}: expected header 't,y'")
    t, y = [], []
    for i, row in enumerate(rows[1:], start=2):
        if len(row) != 2 or row[0].strip() == "" or row[1].strip() == "":
            raise ValueError(f"{path}:{i}: missing values")
        try:
            t.append(int(float(row[0])))
            y.append(float(row[1]))
        except ValueError:
            raise ValueError(f"{path}:{i}: could not parse row {row!r}")
    if len(t) < 24:
        raise ValueError(f"{path}: need at least 24 rows, got {len(t)}")
    if not np.all(np.isfinite(y)):
        raise ValueError(f"{path}: non-finite values")
    series = TimeSeries(np.asarray(t), np.asarray(y), name or str(path))
    return series


def save_series(series: TimeSeries, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "y"])
        for ti, yi in zip(series.t, series.y):
            writer.writerow([int(ti), repr(float(yi))])


def make_synthetic_series(kind="additive", n_months=120, seed=0, trend=0.08,
                          amplitude=None, level=5.0, noise_std=0.2, period=12.0):
    """Trend-plus-seasonal toy series.

    ``additive``: y = trend*t + amplitude*sin(2 pi t / period) + noise.
    ``multiplicative``: y = (level + trend*t)*(1 + amplitude*sin(...)) + noise,
    giving seasonal swings that grow with the level.
    """
    if kind not in ("additive", "multiplicative"):
        raise ValueError(f"unknown synthetic kind {kind!r}")
    if amplitude is None:
        amplitude = 2.0 if kind == "additive" else 0.3
    t = np.arange(n_months)
    season = np.sin(2.0 * np.pi * t / period)
    if kind == "additive":
        y = trend * t + amplitude * season
    else:
        y = (level + trend * t) * (1.0 + amplitude * season)
    if noise_std > 0:
        y = y + np.random.default_rng(seed).normal(0.0, noise_std, n_months)
    return TimeSeries(t, y, name=f"synthetic_{kind}")


@dataclass
class GapSplit:
    """Training points outside the deleted window, plus the query grids."""

    train_t: np.ndarray
    train_y: np.ndarray
    gap_grid: np.ndarray
    extrap_grid: np.ndarray
    gap_range: tuple = GAP_RANGE
    extrap_range: tuple = EXTRAP_RANGE


def make_gap_split(series: TimeSeries) -> GapSplit:
    """Delete months [36, 60) from the first ten years; query the gap and
    months 121..240."""
    if series.t.max() < 119:
        raise ValueError("series must cover at least 120 months")
    lo, hi = GAP_RANGE
    keep = (series.t < 120) & ((series.t < lo) | (series.t >= hi))
    return GapSplit(
        train_t=series.t[keep].astype(float),
        train_y=series.y[keep],
        gap_grid=np.arange(lo, hi, dtype=float),
        extrap_grid=np.arange(EXTRAP_RANGE[0] + 1, EXTRAP_RANGE[1] + 1, dtype=float),
    )


# ---------------------------------------------------------------------------
# model configuration and construction
# ---------------------------------------------------------------------------


@dataclass
class ModelConfig:
    kind: str
    inference: str = None  # exact_gp | hmc | ensemble; defaults by kind
    sigma2_n: float = 0.01  # on standardized targets
    period: float = 12.0
    width: int = 50
    seed: int = 0
    priors: dict = None  # hyperparameters; grid-searched when None
    hmc_samples: int = 500
    hmc_chains: int = 4
    ensemble_members: int = 10
    ensemble_steps: int = 1500
    ensemble_lr: float = 0.05
    name: str = None

    def __post_init__(self):
        if self.kind not in MODEL_KINDS:
            raise ValueError(f"unknown model kind {self.kind!r}")
        if self.inference is None:
            self.inference = "exact_gp" if self.kind in _GP_KINDS else "hmc"
        if self.kind in _GP_KINDS and self.inference != "exact_gp":
            raise ValueError(f"{self.kind} requires exact_gp inference, got {self.inference}")
        if self.kind not in _GP_KINDS and self.inference not in ("hmc", "ensemble"):
            raise ValueError(f"{self.kind} requires hmc or ensemble inference, got {self.inference}")
        if self.name is None:
            self.name = self.kind


_DEFAULT_HYPERS = {
    "relu_sigma2_w1": 1.0,
    "relu_sigma2_out": 1.0,
    "rbf_sigma2_g": 1.0,
    "per_sigma2_out": 1.0,
    "sigma2_out": 1.0,
}


def make_kernel(kind, hyper, p_std):
    """Analytic kernel for a model kind on standardized inputs."""
    h = {**_DEFAULT_HYPERS, **(hyper or {})}
    relu = lambda out: kernels.ReLUKernel(
        kernels.PriorSpec(h["relu_sigma2_w1"], h["relu_sigma2_w1"], out)
    )
    periodic = lambda out: kernels.ProductKernel(
        kernels.ConstantKernel(out),
        kernels.WarpedKernel(
            kernels.RBFNetKernel(kernels.RBFLayerParams(h["rbf_sigma2_g"], 1.0)),
            PeriodicWarp(p_std),
            2,
        ),
    )
    if kind == "relu_bnn":
        return relu(h["relu_sigma2_out"])
    if kind == "periodic_bnn":
        return periodic(h["per_sigma2_out"])
    if kind in ("combined_bnn_add", "combined_gp_add"):
        return kernels.SumKernel(relu(h["relu_sigma2_out"]), periodic(h["per_sigma2_out"]))
    if kind in ("combined_bnn_mul", "combined_gp_mul"):
        return kernels.ProductKernel(relu(h["sigma2_out"]), periodic(1.0))
    raise ValueError(f"unknown model kind {kind!r}")


def make_arch(kind, hyper, p_std, width):
    """Finite-width architecture whose infinite-width kernel is make_kernel's."""
    h = {**_DEFAULT_HYPERS, **(hyper or {})}
    relu_act = networks.Activation("relu")
    rbf_act = networks.Activation("rbf", sigma2_g=h["rbf_sigma2_g"])

    def relu_node(out):
        return networks.Basic(relu_act, kernels.PriorSpec(h["relu_sigma2_w1"], h["relu_sigma2_w1"], out), width)

    def periodic_node(out):
        return networks.Basic(
            rbf_act, kernels.PriorSpec(1.0, 0.0, out), width, warp=PeriodicWarp(p_std)
        )

    if kind == "relu_bnn":
        return relu_node(h["relu_sigma2_out"])
    if kind == "periodic_bnn":
        return periodic_node(h["per_sigma2_out"])
    if kind == "combined_bnn_add":
        return networks.OutputSum((relu_node(h["relu_sigma2_out"]), periodic_node(h["per_sigma2_out"])))
    if kind == "combined_bnn_mul":
        return networks.HiddenMul(
            (relu_node(1.0), periodic_node(1.0)), sigma2_w2=h["sigma2_out"]
        )
    raise ValueError(f"no architecture for kind {kind!r}")


_GRID_W1 = (0.3, 1.0, 3.0)
_GRID_OUT = (0.3, 1.0, 3.0)
_GRID_G = (0.5, 1.0, 2.0)


def select_hyperparams(kind, X_std, y_std, sigma2_n, p_std):
    """Coarse grid search maximizing the GP log marginal likelihood.

    Network kinds reuse the values selected for the equivalent kernel.
    """
    if kind == "relu_bnn":
        grid = [{"relu_sigma2_w1": a, "relu_sigma2_out": v} for a in _GRID_W1 for v in _GRID_OUT]
    elif kind == "periodic_bnn":
        grid = [{"rbf_sigma2_g": g, "per_sigma2_out": v} for g in _GRID_G for v in _GRID_OUT]
    elif kind in ("combined_bnn_add", "combined_gp_add"):
        grid = [
            {"relu_sigma2_w1": a, "relu_sigma2_out": v, "rbf_sigma2_g": g, "per_sigma2_out": vp}
            for a in _GRID_W1
            for v in _GRID_OUT
            for g in _GRID_G
            for vp in _GRID_OUT
        ]
    else:
        grid = [
            {"relu_sigma2_w1": a, "rbf_sigma2_g": g, "sigma2_out": v}
            for a in _GRID_W1
            for g in _GRID_G
            for v in _GRID_OUT
        ]
    best, best_lml = None, -np.inf
    for h in grid:
        kernel = make_kernel(kind, h, p_std)
        try:
            post = gp.gp_fit(gp.GPModel(kernel, sigma2_n), X_std, y_std)
        except gp.GPFitError:
            continue
        lml = gp.gp_log_marginal(post)
        if lml > best_lml:
            best, best_lml = h, lml
    if best is None:
        raise RuntimeError(f"no hyperparameter candidate produced a valid fit for {kind}")
    return best


class _Scaler:
    def __init__(self, t, y):
        self.mu_t = float(np.mean(t))
        self.sd_t = float(np.std(t)) or 1.0
        self.mu_y = float(np.mean(y))
        self.sd_y = float(np.std(y)) or 1.0

    def tx(self, t):
        return (np.asarray(t, dtype=float) - self.mu_t) / self.sd_t

    def ty(self, y):
        return (np.asarray(y, dtype=float) - self.mu_y) / self.sd_y


class TimeseriesModel:
    """One configured model: build on fit, predict on the raw month scale."""

    def __init__(self, config: ModelConfig):
        self.config = config
        self.scaler = None
        self.hyper = None
        self.kernel = None
        self.arch = None
        self._posterior = None
        self._chain = None
        self._ensemble = None

    def fit(self, split: GapSplit):
        cfg = self.config
        self.scaler = _Scaler(split.train_t, split.train_y)
        Xs = self.scaler.tx(split.train_t).reshape(-1, 1)
        ys = self.scaler.ty(split.train_y)
        p_std = cfg.period / self.scaler.sd_t
        self.hyper = cfg.priors or select_hyperparams(cfg.kind, Xs, ys, cfg.sigma2_n, p_std)
        self.kernel = make_kernel(cfg.kind, self.hyper, p_std)
        if cfg.inference == "exact_gp":
            self._posterior = gp.gp_fit(gp.GPModel(self.kernel, cfg.sigma2_n), Xs, ys)
        else:
            self.arch = make_arch(cfg.kind, self.hyper, p_std, cfg.width)
            if cfg.inference == "hmc":
                self._chain = inference.run_bnn_hmc(
                    self.arch, Xs, ys, cfg.sigma2_n,
                    n_samples=cfg.hmc_samples, n_chains=cfg.hmc_chains, seed=cfg.seed,
                )
            else:
                self._ensemble = inference.anchored_ensemble_train(
                    self.arch, Xs, ys, cfg.ensemble_members,
                    inference.EnsembleConfig(
                        n_steps=cfg.ensemble_steps,
                        learning_rate=cfg.ensemble_lr,
                        sigma2_n=cfg.sigma2_n,
                    ),
                    seed=cfg.seed,
                )
        return self

    def predict(self, months):
        """Predictive mean and std (with observation noise) on raw scale."""
        if self.scaler is None:
            raise RuntimeError("model must be fitted before predicting")
        cfg = self.config
        Xs = self.scaler.tx(months).reshape(-1, 1)
        if cfg.inference == "exact_gp":
            mean, _ = gp.gp_predict(self._posterior, Xs)
            std = gp.predictive_std(self._posterior, Xs, include_noise=True)
        elif cfg.inference == "hmc":
            mean, std = inference.bnn_predictive_hmc(self.arch, self._chain, Xs, cfg.sigma2_n)
        else:
            mean, std = inference.ensemble_predict(self._ensemble, Xs, include_noise=True)
        return self.scaler.mu_y + self.scaler.sd_y * mean, self.scaler.sd_y * std


def build_model(config: ModelConfig) -> TimeseriesModel:
    """Model handle for a configuration; call ``.fit(split)`` to train."""
    return TimeseriesModel(config)


# ---------------------------------------------------------------------------
# experiment driver
# ---------------------------------------------------------------------------


def run_experiment(series: TimeSeries, configs, out_dir, seed=0):
    """Fit every configured model and write per-model prediction CSVs.

    Each CSV has columns x,mean,std over the train, gap and extrapolation
    grids.  A manifest records configs, selected hyperparameters, seeds and
    runtimes.  Returns the fitted models keyed by name.
    """
    split = make_gap_split(series)
    grid = np.concatenate([split.train_t, split.gap_grid, split.extrap_grid])
    grid = np.unique(grid)
    os.makedirs(out_dir, exist_ok=True)

    models = {}
    manifest_models = []
    for i, cfg in enumerate(configs):
        name = cfg.name if cfg.name not in models else f"{cfg.name}_{i}"
        model = build_model(cfg)
        t0 = time.perf_counter()
        model.fit(split)
        runtime = time.perf_counter() - t0
        mean, std = model.predict(grid)
        csv_path = os.path.join(out_dir, f"{name}.csv")
        with open(csv_path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["x", "mean", "std"])
            for x, m, s in zip(grid, mean, std):
                writer.writerow([repr(float(x)), repr(float(m)), repr(float(s))])
        models[name] = model
        cfg_doc = {
            "kind": cfg.kind,
            "inference": cfg.inference,
            "sigma2_n": cfg.sigma2_n,
            "period": cfg.period,
            "width": cfg.width,
            "seed": cfg.seed,
        }
        manifest_models.append(
            {
                "name": name,
                "config": cfg_doc,
                "selected_hyperparameters": model.hyper,
                "runtime_seconds": round(runtime, 3),
                "csv": os.path.basename(csv_path),
                "config_hash": configio.config_hash(cfg_doc),
            }
        )

    train_path = os.path.join(out_dir, "train.csv")
    with open(train_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["x", "y"])
        for x, yv in zip(split.train_t, split.train_y):
            writer.writerow([repr(float(x)), repr(float(yv))])

    try:
        from importlib.metadata import version as _pkg_version

        version = _pkg_version("gpbnn")
    except Exception:
        version = "0.0.0"
    manifest = {
        "schema_version": configio.SCHEMA_VERSION,
        "series": series.name,
        "n_train": int(split.train_t.shape[0]),
        "gap_range": list(GAP_RANGE),
        "extrapolation_range": list(EXTRAP_RANGE),
        "seed": seed,
        "version": version,
        "config_hash": configio.config_hash([m["config"] for m in manifest_models]),
        "bands_include_observation_noise": True,
        "models": manifest_models,
    }
    with open(os.path.join(out_dir, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return models
