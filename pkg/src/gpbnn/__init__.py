"""gpbnn: expressive Bayesian-network priors from kernel combinations.

Build covariance functions by composing analytic kernels (addition,
multiplication, powers, input warping, input subsets), build finite-width
network architectures whose infinite-width kernels match them, and verify
the correspondence with a Monte-Carlo oracle.  Exact GP regression, HMC and
anchored ensembles provide inference; two experiment harnesses (gap
time-series prediction, pendulum swing-up) exercise the whole stack.

Typical use:

    from gpbnn import kernels, networks

    k = kernels.kernel_add(
        kernels.ReLUKernel(kernels.PriorSpec(1.0, 1.0, 1.0)),
        kernels.ESSKernel(kernels.ESSParams(1.0, 1.0, 12.0)),
    )
    arch = networks.Basic(networks.Activation("relu"),
                          kernels.PriorSpec(1.0, 1.0, 1.0), width=50)
    est, sem = networks.empirical_kernel(arch, [0.5], [1.5], 200_000, seed=0)

The ``gpbnn`` command drives everything from JSON configs; see the README.
"""

from .kernels import (
    ESSParams,
    PriorSpec,
    RBFLayerParams,
    SEParams,
    hidden_add_kernel,
    k_cos_bnn,
    k_erf,
    k_ess,
    k_rbf_bnn,
    k_relu,
    k_relu_periodic,
    k_se,
    kernel_add,
    kernel_mul,
    kernel_pow,
    kernel_project,
    kernel_warp,
)
from .networks import (
    Activation,
    Basic,
    Deep,
    HiddenAdd,
    HiddenMul,
    OutputProduct,
    OutputSum,
    empirical_kernel,
    forward,
    sample_params,
    sample_prior_functions,
    warp_periodic,
)
from .gp import GPModel, gp_fit, gp_log_marginal, gp_predict
from .inference import (
    EnsembleConfig,
    HMCConfig,
    PosteriorTarget,
    anchored_ensemble_train,
    bnn_predictive_hmc,
    ensemble_predict,
    hmc_sample,
)

__all__ = [
    "SEParams",
    "ESSParams",
    "PriorSpec",
    "RBFLayerParams",
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
    "Activation",
    "Basic",
    "Deep",
    "HiddenMul",
    "HiddenAdd",
    "OutputSum",
    "OutputProduct",
    "sample_params",
    "forward",
    "sample_prior_functions",
    "empirical_kernel",
    "warp_periodic",
    "GPModel",
    "gp_fit",
    "gp_predict",
    "gp_log_marginal",
    "PosteriorTarget",
    "HMCConfig",
    "hmc_sample",
    "bnn_predictive_hmc",
    "EnsembleConfig",
    "anchored_ensemble_train",
    "ensemble_predict",
]
