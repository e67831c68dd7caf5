"""Posterior inference for finite-width networks.

Two routes:

* Hamiltonian Monte Carlo over the flattened parameter vector (Gaussian
  likelihood + Gaussian parameter priors), used by the time-series harness.
* Anchored ensembles: members regularized toward independent prior draws,
  trained by gradient descent, used where HMC does not scale.

Chains and members are independent; seeds are split per chain/member so
runs are reproducible and order-independent.
"""

import json
import math
from dataclasses import dataclass

import numpy as np

from . import networks
from .rng import substream

__all__ = [
    "PosteriorTarget",
    "HMCConfig",
    "HMCResult",
    "HMCDivergenceError",
    "leapfrog",
    "hmc_sample",
    "tune_step_size",
    "bnn_predictive_hmc",
    "run_bnn_hmc",
    "EnsembleConfig",
    "EnsembleModel",
    "anchored_ensemble_train",
    "ensemble_predict",
    "chain_to_json",
    "chain_from_json",
    "ensemble_to_json",
    "ensemble_from_json",
]


class PosteriorTarget:
    """Log posterior density (up to a constant) of a network's flat parameters.

    log p(theta) = -||y - f_theta(X)||^2 / (2 sigma2_n)
                   - sum_i theta_i^2 / (2 v_i)

    with v the per-parameter prior variances.  ``grad`` backpropagates
    through the architecture tree.
    """

    def __init__(self, arch, X, y, sigma2_n):
        if networks.node_out_dim(arch) != 1:
            raise ValueError("posterior targets need a single-output architecture")
        if sigma2_n <= 0:
            raise ValueError("sigma2_n must be positive")
        self.arch = arch
        self.X = np.asarray(X, dtype=float)
        if self.X.ndim == 1:
            self.X = self.X.reshape(-1, 1)
        self.y = np.asarray(y, dtype=float).reshape(-1)
        if self.X.shape[0] != self.y.shape[0]:
            raise ValueError("X and y lengths differ")
        self.sigma2_n = float(sigma2_n)
        self.prior_var = networks.prior_variances(arch)
        self.dim = self.prior_var.shape[0]

    def value_and_grad(self, theta):
        theta = np.asarray(theta, dtype=float)
        params = networks.unpack_params(self.arch, theta)
        f, vjp = networks.value_and_vjp(self.arch, params, self.X)
        r = self.y - f
        logp = -0.5 * float(r @ r) / self.sigma2_n - 0.5 * float(theta @ (theta / self.prior_var))
        grad = networks.pack_params(self.arch, vjp(r / self.sigma2_n)) - theta / self.prior_var
        return logp, grad

    def log_density(self, theta):
        return self.value_and_grad(theta)[0]

    def grad(self, theta):
        return self.value_and_grad(theta)[1]


# ---------------------------------------------------------------------------
# Hamiltonian Monte Carlo
# ---------------------------------------------------------------------------


@dataclass
class HMCConfig:
    step_size: float = 0.1
    leapfrog_steps: int = 30
    n_samples: int = 1000
    n_burnin: int = None  # default: 20% of n_samples
    n_chains: int = 4
    seed: int = 0
    mass: np.ndarray = None  # diagonal; identity when None

    def __post_init__(self):
        if self.step_size <= 0:
            raise ValueError("step_size must be positive")
        if self.leapfrog_steps < 1:
            raise ValueError("leapfrog_steps must be >= 1")
        if self.n_burnin is None:
            self.n_burnin = int(math.ceil(0.2 * self.n_samples))


@dataclass
class HMCResult:
    samples: np.ndarray  # (n_chains, n_samples, dim)
    accept_rate: float
    chain_accept_rates: np.ndarray
    step_size: float
    n_divergent: int = 0

    @property
    def flat(self):
        """Chains merged by concatenation: (n_chains * n_samples, dim)."""
        return self.samples.reshape(-1, self.samples.shape[-1])


class HMCDivergenceError(RuntimeError):
    pass


def leapfrog(grad_logp, q, p, step_size, n_steps, inv_mass=None):
    """Leapfrog integration of Hamiltonian dynamics.

    ``grad_logp`` is the gradient of the log density (the negative potential
    gradient).  Returns the final (position, momentum); reversible up to
    floating-point roundoff by negating the momentum.
    """
    if inv_mass is None:
        inv_mass = 1.0
    q = np.array(q, dtype=float)
    p = np.array(p, dtype=float)
    p += 0.5 * step_size * grad_logp(q)
    for i in range(n_steps):
        q += step_size * inv_mass * p
        if i < n_steps - 1:
            p += step_size * grad_logp(q)
    p += 0.5 * step_size * grad_logp(q)
    return q, p


def hmc_sample(target, init, cfg: HMCConfig) -> HMCResult:
    """Standard HMC: leapfrog proposals with a Metropolis correction.

    Keeps ``cfg.n_samples`` states per chain after discarding
    ``cfg.n_burnin``.  Raises on a non-finite starting density or when the
    sampler diverges persistently (acceptance below 1%).
    """
    init = np.asarray(init, dtype=float)
    dim = init.shape[0]
    logp0 = target.log_density(init)
    if not np.isfinite(logp0):
        raise ValueError(f"log density is not finite at the initial point ({logp0})")

    mass = np.ones(dim) if cfg.mass is None else np.asarray(cfg.mass, dtype=float)
    if mass.shape != (dim,) or np.any(mass <= 0):
        raise ValueError("mass must be a positive diagonal matching the dimension")
    inv_mass = 1.0 / mass
    sqrt_mass = np.sqrt(mass)

    total = cfg.n_burnin + cfg.n_samples
    samples = np.empty((cfg.n_chains, cfg.n_samples, dim))
    accepts = np.zeros(cfg.n_chains)
    n_divergent = 0

    # Divergent trajectories overflow before the finiteness checks reject
    # them; silence the intermediate warnings.
    with np.errstate(over="ignore", invalid="ignore"):
        for c in range(cfg.n_chains):
            rng = substream(cfg.seed, c)
            q = init.copy()
            logp, grad = target.value_and_grad(q)
            kept = 0
            for it in range(total):
                p = rng.standard_normal(dim) * sqrt_mass
                h0 = -logp + 0.5 * float(p @ (inv_mass * p))

                q_new = q.copy()
                p_new = p.copy()
                g = grad
                p_new = p_new + 0.5 * cfg.step_size * g
                diverged = False
                for step in range(cfg.leapfrog_steps):
                    q_new = q_new + cfg.step_size * inv_mass * p_new
                    logp_new, g = target.value_and_grad(q_new)
                    if not np.isfinite(logp_new):
                        diverged = True
                        break
                    if step < cfg.leapfrog_steps - 1:
                        p_new = p_new + cfg.step_size * g
                if not diverged:
                    p_new = p_new + 0.5 * cfg.step_size * g
                    h1 = -logp_new + 0.5 * float(p_new @ (inv_mass * p_new))
                    diverged = not np.isfinite(h1)

                if diverged:
                    n_divergent += 1
                    accept = False
                else:
                    accept = math.log(rng.uniform()) < h0 - h1
                if accept:
                    q = q_new
                    logp = logp_new
                    grad = g
                    if it >= cfg.n_burnin:
                        accepts[c] += 1
                if it >= cfg.n_burnin:
                    samples[c, kept] = q
                    kept += 1

    rates = accepts / max(cfg.n_samples, 1)
    result = HMCResult(
        samples=samples,
        accept_rate=float(np.mean(rates)),
        chain_accept_rates=rates,
        step_size=cfg.step_size,
        n_divergent=n_divergent,
    )
    if result.accept_rate < 0.01:
        raise HMCDivergenceError(
            f"HMC diverged: acceptance {result.accept_rate:.4f} with step_size "
            f"{cfg.step_size} over {cfg.n_chains} chains ({n_divergent} divergent "
            "trajectories); reduce the step size"
        )
    return result


def tune_step_size(target, init, seed, initial=0.1, leapfrog_steps=30,
                   target_range=(0.6, 0.8), n_probe=50, max_rounds=12, mass=None):
    """Pre-run step-size search aiming for 60-80% acceptance."""
    eps = initial
    lo, hi = target_range
    for r in range(max_rounds):
        cfg = HMCConfig(
            step_size=eps,
            leapfrog_steps=leapfrog_steps,
            n_samples=n_probe,
            n_burnin=0,
            n_chains=1,
            seed=seed * 10007 + r,
            mass=mass,
        )
        try:
            rate = hmc_sample(target, init, cfg).accept_rate
        except HMCDivergenceError:
            rate = 0.0
        if rate < lo:
            eps /= 1.6
        elif rate > hi:
            eps *= 1.6
        else:
            return eps
    return eps


def bnn_predictive_hmc(arch, chain, Xstar, sigma2_n=0.0):
    """Pointwise predictive mean and std across chain samples.

    ``chain`` is an HMCResult or an (n, dim) array of flat parameter
    vectors; ``sigma2_n`` widens the variance for observation bands.
    """
    draws = chain.flat if isinstance(chain, HMCResult) else np.asarray(chain, dtype=float)
    if draws.ndim != 2 or draws.shape[0] == 0:
        raise ValueError("chain must be a non-empty (n, dim) array")
    Xstar = np.asarray(Xstar, dtype=float)
    if Xstar.ndim == 1:
        Xstar = Xstar.reshape(-1, 1)
    outs = np.empty((draws.shape[0], Xstar.shape[0]))
    for i, theta in enumerate(draws):
        params = networks.unpack_params(arch, theta)
        outs[i] = networks.forward_batch(arch, params, Xstar)
    mean = outs.mean(axis=0)
    var = outs.var(axis=0) + sigma2_n
    return mean, np.sqrt(var)


def run_bnn_hmc(arch, X, y, sigma2_n, n_samples=800, n_chains=4, leapfrog_steps=30,
                seed=0, step_size=None, adapt_mass=True):
    """Turnkey posterior sampling for a network regression model.

    Tunes the step size toward 60-80% acceptance, optionally estimates a
    diagonal mass from a pilot run, then draws the final chains.
    """
    target = PosteriorTarget(arch, X, y, sigma2_n)
    init = networks.pack_params(arch, networks.sample_params(arch, seed)) * 0.1
    eps = step_size or tune_step_size(target, init, seed, leapfrog_steps=leapfrog_steps)
    mass = None
    if adapt_mass:
        pilot = hmc_sample(
            target,
            init,
            HMCConfig(step_size=eps, leapfrog_steps=leapfrog_steps, n_samples=200,
                      n_chains=1, seed=seed * 10007 + 999),
        )
        var = pilot.flat.var(axis=0)
        floor = max(float(np.median(var)), 1e-12)
        mass = 1.0 / np.clip(var, 0.01 * floor, 100.0 * floor)
        init = pilot.flat[-1]
        eps = tune_step_size(target, init, seed + 1, initial=eps,
                             leapfrog_steps=leapfrog_steps, mass=mass)
    cfg = HMCConfig(step_size=eps, leapfrog_steps=leapfrog_steps, n_samples=n_samples,
                    n_chains=n_chains, seed=seed, mass=mass)
    return hmc_sample(target, init, cfg)


# ---------------------------------------------------------------------------
# anchored ensembles
# ---------------------------------------------------------------------------


@dataclass
class EnsembleConfig:
    n_steps: int = 2000
    learning_rate: float = 0.05
    sigma2_n: float = 0.01
    batch_size: int = None  # None = full batch

    def __post_init__(self):
        if self.n_steps < 0:
            raise ValueError("n_steps must be non-negative")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.sigma2_n <= 0:
            raise ValueError("sigma2_n must be positive")


@dataclass
class EnsembleModel:
    arch: object
    members: np.ndarray  # (M, dim) flat parameter vectors
    anchors: np.ndarray  # (M, dim)
    config: EnsembleConfig

    @property
    def n_members(self):
        return self.members.shape[0]


def _anchored_grad(arch, theta, anchor, prior_var, X, y, sigma2_n):
    """Gradient of the anchored objective, and the objective itself.

    The objective is ||y - f||^2 / sigma2_n + ||theta - anchor||^2 / v; the
    gradient is taken of the same objective scaled by sigma2_n / (2n) (same
    minimizer) so step sizes behave like plain per-sample MSE descent.
    """
    n = X.shape[0]
    params = networks.unpack_params(arch, theta)
    f, vjp = networks.value_and_vjp(arch, params, X)
    r = f - y
    data_grad = networks.pack_params(arch, vjp(r))
    reg_grad = sigma2_n * (theta - anchor) / prior_var
    loss = float(r @ r) / sigma2_n + float((theta - anchor) @ ((theta - anchor) / prior_var))
    return (data_grad + reg_grad) / n, loss


def anchored_ensemble_train(arch, X, y, n_members, cfg: EnsembleConfig, seed,
                            member_seeds=None) -> EnsembleModel:
    """Train members toward their own prior-draw anchors by gradient descent.

    Member j minimizes ||y - f(X)||^2 / sigma2_n + sum (theta - anchor_j)^2 /
    prior_var, starting at its anchor.  ``member_seeds`` overrides the
    per-member streams (passing M equal seeds degenerates the ensemble to
    identical members).
    """
    if n_members < 2:
        raise ValueError("an ensemble needs at least 2 members")
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X.reshape(-1, 1)
    y = np.asarray(y, dtype=float).reshape(-1)
    if member_seeds is None:
        member_seeds = [(seed, j) for j in range(n_members)]
    elif len(member_seeds) != n_members:
        raise ValueError("member_seeds length must equal n_members")
    else:
        member_seeds = [(s,) for s in member_seeds]

    prior_var = networks.prior_variances(arch)
    std = np.sqrt(prior_var)
    anchors = np.stack(
        [substream(*ms).standard_normal(std.shape[0]) * std for ms in member_seeds]
    )
    members = anchors.copy()
    if X.shape[0] > 0:
        # An exploding member overflows before the finiteness check trips;
        # the warning is noise, the RuntimeError below is the signal.
        with np.errstate(over="ignore", invalid="ignore"):
            for j in range(n_members):
                theta = members[j]
                for step in range(cfg.n_steps):
                    grad, loss = _anchored_grad(
                        arch, theta, anchors[j], prior_var, X, y, cfg.sigma2_n
                    )
                    if not np.isfinite(loss):
                        raise RuntimeError(
                            f"ensemble member {j} diverged at step {step} (loss={loss})"
                        )
                    theta = theta - cfg.learning_rate * grad
                members[j] = theta
    return EnsembleModel(arch=arch, members=members, anchors=anchors, config=cfg)


def ensemble_predict(model: EnsembleModel, Xstar, include_noise=False):
    """Pointwise mean and std across member predictions.

    ``include_noise`` widens the variance by sigma2_n for observation bands.
    """
    Xstar = np.asarray(Xstar, dtype=float)
    if Xstar.ndim == 1:
        Xstar = Xstar.reshape(-1, 1)
    outs = np.empty((model.n_members, Xstar.shape[0]))
    for j in range(model.n_members):
        params = networks.unpack_params(model.arch, model.members[j])
        outs[j] = networks.forward_batch(model.arch, params, Xstar)
    mean = outs.mean(axis=0)
    var = outs.var(axis=0, ddof=1) if model.n_members > 1 else np.zeros(Xstar.shape[0])
    if include_noise:
        var = var + model.config.sigma2_n
    return mean, np.sqrt(var)


# ---------------------------------------------------------------------------
# binary-free snapshots
# ---------------------------------------------------------------------------


def chain_to_json(result: HMCResult) -> str:
    return json.dumps(
        {
            "schema_version": 1,
            "kind": "hmc_chain",
            "step_size": result.step_size,
            "accept_rate": result.accept_rate,
            "chain_accept_rates": result.chain_accept_rates.tolist(),
            "n_divergent": result.n_divergent,
            "samples": result.samples.tolist(),
        }
    )


def chain_from_json(text: str) -> HMCResult:
    doc = json.loads(text)
    return HMCResult(
        samples=np.asarray(doc["samples"], dtype=float),
        accept_rate=float(doc["accept_rate"]),
        chain_accept_rates=np.asarray(doc["chain_accept_rates"], dtype=float),
        step_size=float(doc["step_size"]),
        n_divergent=int(doc.get("n_divergent", 0)),
    )


def ensemble_to_json(model: EnsembleModel, arch_config=None) -> str:
    doc = {
        "schema_version": 1,
        "kind": "anchored_ensemble",
        "members": model.members.tolist(),
        "anchors": model.anchors.tolist(),
        "config": {
            "n_steps": model.config.n_steps,
            "learning_rate": model.config.learning_rate,
            "sigma2_n": model.config.sigma2_n,
            "batch_size": model.config.batch_size,
        },
    }
    if arch_config is not None:
        doc["arch"] = arch_config
    return json.dumps(doc)


def ensemble_from_json(text: str, arch) -> EnsembleModel:
    doc = json.loads(text)
    cfg = EnsembleConfig(**doc["config"])
    return EnsembleModel(
        arch=arch,
        members=np.asarray(doc["members"], dtype=float),
        anchors=np.asarray(doc["anchors"], dtype=float),
        config=cfg,
    )
