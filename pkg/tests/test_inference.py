"""HMC sampler, posterior targets, and anchored ensembles."""

import numpy as np
import pytest

from gpbnn import gp, inference
from gpbnn import kernels as K
from gpbnn import networks as N

PR = K.PriorSpec(1.0, 1.0, 1.0)


class _Gaussian:
    """N(0, cov) test target."""

    def __init__(self, cov):
        self.cov = np.atleast_2d(np.asarray(cov, dtype=float))
        self.prec = np.linalg.inv(self.cov)

    def log_density(self, q):
        return -0.5 * float(q @ self.prec @ q)

    def grad(self, q):
        return -self.prec @ q

    def value_and_grad(self, q):
        return self.log_density(q), self.grad(q)


class TestPosteriorTarget:
    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(0)
        X = rng.normal(size=(9, 2))
        X = (X - X.mean(0)) / X.std(0)
        y = rng.normal(size=9)
        y = (y - y.mean()) / y.std()
        arch = N.OutputSum(
            (
                N.Basic(N.Activation("relu"), PR, 5, in_dim=2),
                N.Basic(N.Activation("erf"), K.PriorSpec(0.5, 0.2, 2.0), 5, in_dim=2),
            )
        )
        target = inference.PosteriorTarget(arch, X, y, sigma2_n=0.1)
        h = 1e-5
        for k in range(20):
            theta = np.random.default_rng(100 + k).normal(size=target.dim) * 0.5
            _, grad = target.value_and_grad(theta)
            fd = np.empty(target.dim)
            for i in range(target.dim):
                e = np.zeros(target.dim)
                e[i] = h
                fd[i] = (target.log_density(theta + e) - target.log_density(theta - e)) / (2 * h)
            rel = np.max(np.abs(grad - fd) / (np.abs(fd) + 1e-8))
            assert rel < 1e-4

    def test_requires_single_output(self):
        arch = N.Basic(N.Activation("relu"), PR, 4, out_dim=2)
        with pytest.raises(ValueError):
            inference.PosteriorTarget(arch, np.zeros((2, 1)), np.zeros(2), 0.1)


class TestLeapfrog:
    def test_reversibility(self):
        target = _Gaussian(np.diag([1.0, 0.5, 2.0]))
        rng = np.random.default_rng(1)
        q0, p0 = rng.normal(size=3), rng.normal(size=3)
        q1, p1 = inference.leapfrog(target.grad, q0, p0, 0.1, 25)
        q2, p2 = inference.leapfrog(target.grad, q1, -p1, 0.1, 25)
        np.testing.assert_allclose(q2, q0, atol=1e-8)
        np.testing.assert_allclose(-p2, p0, atol=1e-8)

    def test_energy_error_quadratic_in_step(self):
        target = _Gaussian([[1.0]])

        def mean_abs_dh(eps):
            rng = np.random.default_rng(2)
            total = 0.0
            for _ in range(200):
                q, p = rng.normal(size=1), rng.normal(size=1)
                h0 = -target.log_density(q) + 0.5 * float(p @ p)
                qf, pf = inference.leapfrog(target.grad, q, p, eps, 10)
                h1 = -target.log_density(qf) + 0.5 * float(pf @ pf)
                total += abs(h1 - h0)
            return total / 200

        assert mean_abs_dh(0.2) / mean_abs_dh(0.1) >= 3.0


class TestHMC:
    def test_standard_normal_moments(self):
        cfg = inference.HMCConfig(step_size=0.1, leapfrog_steps=20, n_samples=20_000,
                                  n_chains=1, seed=3)
        res = inference.hmc_sample(_Gaussian([[1.0]]), np.zeros(1), cfg)
        assert abs(res.flat.mean()) <= 0.05
        assert abs(res.flat.var() - 1.0) <= 0.05

    def test_single_leapfrog_step_still_samples(self):
        cfg = inference.HMCConfig(step_size=0.9, leapfrog_steps=1, n_samples=30_000,
                                  n_chains=1, seed=4)
        res = inference.hmc_sample(_Gaussian([[1.0]]), np.zeros(1), cfg)
        assert abs(res.flat.mean()) <= 0.06
        assert abs(res.flat.var() - 1.0) <= 0.1

    def test_vanishing_step_always_accepts(self):
        cfg = inference.HMCConfig(step_size=1e-9, leapfrog_steps=5, n_samples=200,
                                  n_chains=1, seed=5)
        res = inference.hmc_sample(_Gaussian([[1.0]]), np.zeros(1), cfg)
        assert res.accept_rate == 1.0

    def test_correlated_2d_covariance(self):
        cov = np.array([[1.0, 0.8], [0.8, 2.0]])
        cfg = inference.HMCConfig(step_size=0.9, leapfrog_steps=20, n_samples=20_000,
                                  n_chains=1, seed=2)
        res = inference.hmc_sample(_Gaussian(cov), np.zeros(2), cfg)
        emp = np.cov(res.flat.T)
        assert np.max(np.abs(emp - cov) / np.abs(cov)) <= 0.10

    def test_nonfinite_init_rejected(self):
        with pytest.raises(ValueError, match="not finite"):
            inference.hmc_sample(
                _Gaussian([[1.0]]),
                np.array([np.inf]),
                inference.HMCConfig(n_samples=10, n_chains=1),
            )

    def test_persistent_divergence_raises(self):
        class Sharp:
            def log_density(self, q):
                return -1e12 * float(q @ q)

            def grad(self, q):
                return -2e12 * q

            def value_and_grad(self, q):
                return self.log_density(q), self.grad(q)

        cfg = inference.HMCConfig(step_size=1.0, leapfrog_steps=10, n_samples=100,
                                  n_chains=1, seed=6)
        with pytest.raises(inference.HMCDivergenceError):
            inference.hmc_sample(Sharp(), np.full(1, 1e-7), cfg)

    def test_chain_moments_deterministic(self):
        cfg = inference.HMCConfig(step_size=0.5, leapfrog_steps=5, n_samples=500,
                                  n_chains=2, seed=7)
        a = inference.hmc_sample(_Gaussian([[1.0]]), np.zeros(1), cfg)
        b = inference.hmc_sample(_Gaussian([[1.0]]), np.zeros(1), cfg)
        np.testing.assert_array_equal(a.samples, b.samples)


class TestPredictiveHMC:
    def test_constant_chain_gives_noise_std(self):
        arch = N.Basic(N.Activation("relu"), PR, 6)
        theta = N.pack_params(arch, N.sample_params(arch, 8))
        chain = np.tile(theta, (50, 1))
        _, std = inference.bnn_predictive_hmc(arch, chain, np.array([[0.4]]), sigma2_n=0.09)
        assert std[0] == pytest.approx(0.3, abs=1e-12)

    def test_permutation_invariant(self):
        arch = N.Basic(N.Activation("relu"), PR, 6)
        rng = np.random.default_rng(9)
        chain = rng.normal(size=(40, N.n_params(arch)))
        Xs = np.array([[0.0], [1.0]])
        m1, s1 = inference.bnn_predictive_hmc(arch, chain, Xs)
        m2, s2 = inference.bnn_predictive_hmc(arch, chain[rng.permutation(40)], Xs)
        np.testing.assert_allclose(m1, m2, atol=1e-12)
        np.testing.assert_allclose(s1, s2, atol=1e-12)

    def test_wide_relu_matches_exact_gp(self):
        X = np.linspace(-2, 2, 8).reshape(-1, 1)
        y = np.sin(1.5 * X[:, 0])
        arch = N.Basic(N.Activation("relu"), PR, 50)
        res = inference.run_bnn_hmc(arch, X, y, 0.01, n_samples=500, n_chains=2, seed=8)
        grid = np.linspace(-2, 2, 40).reshape(-1, 1)
        bnn_mean, _ = inference.bnn_predictive_hmc(arch, res, grid)
        post = gp.gp_fit(gp.GPModel(K.ReLUKernel(PR), 0.01), X, y)
        gp_mean, _ = gp.gp_predict(post, grid)
        rmse = np.sqrt(np.mean((bnn_mean - gp_mean) ** 2))
        assert rmse <= 0.1 * np.std(y)


class TestAnchoredEnsembles:
    def test_zero_data_keeps_anchors_and_prior_variance(self):
        arch = N.Basic(N.Activation("relu"), PR, 2048)
        model = inference.anchored_ensemble_train(
            arch, np.zeros((0, 1)), np.zeros(0), 200, inference.EnsembleConfig(), seed=10
        )
        np.testing.assert_array_equal(model.members, model.anchors)
        Xs = np.array([[0.5], [1.5], [-0.7]])
        _, std = inference.ensemble_predict(model, Xs)
        for i in range(3):
            prior_var = K.k_relu(Xs[i], Xs[i], PR)
            assert abs(std[i] ** 2 - prior_var) <= 0.3 * prior_var

    def test_identical_member_seeds_degenerate(self):
        arch = N.Basic(N.Activation("relu"), PR, 8)
        X = np.linspace(-1, 1, 5).reshape(-1, 1)
        y = X[:, 0] ** 2
        model = inference.anchored_ensemble_train(
            arch, X, y, 4,
            inference.EnsembleConfig(n_steps=50, learning_rate=0.01),
            seed=11, member_seeds=[3, 3, 3, 3],
        )
        _, std = inference.ensemble_predict(model, np.array([[0.3]]))
        assert std[0] == 0.0

    def test_toy_fit_hits_targets(self):
        rng = np.random.default_rng(6)
        X = np.linspace(-2, 2, 12).reshape(-1, 1)
        y = np.sin(X[:, 0]) + 0.05 * rng.normal(size=12)
        model = inference.anchored_ensemble_train(
            arch := N.Basic(N.Activation("relu"), PR, 50), X, y, 10,
            inference.EnsembleConfig(n_steps=1500, learning_rate=0.05, sigma2_n=0.0025),
            seed=7,
        )
        mean, _ = inference.ensemble_predict(model, X)
        assert np.max(np.abs(mean - y)) <= 3 * 0.05

    def test_mean_of_two_members(self):
        arch = N.Basic(N.Activation("relu"), PR, 4)
        model = inference.anchored_ensemble_train(
            arch, np.zeros((0, 1)), np.zeros(0), 2, inference.EnsembleConfig(), seed=12
        )
        x = np.array([[0.7]])
        a = N.forward(arch, N.unpack_params(arch, model.members[0]), x[0])
        b = N.forward(arch, N.unpack_params(arch, model.members[1]), x[0])
        mean, _ = inference.ensemble_predict(model, x)
        assert mean[0] == pytest.approx((a + b) / 2)

    def test_member_permutation_invariant(self):
        arch = N.Basic(N.Activation("relu"), PR, 4)
        model = inference.anchored_ensemble_train(
            arch, np.zeros((0, 1)), np.zeros(0), 5, inference.EnsembleConfig(), seed=13
        )
        Xs = np.array([[0.1], [0.9]])
        m1, s1 = inference.ensemble_predict(model, Xs)
        model.members = model.members[::-1].copy()
        m2, s2 = inference.ensemble_predict(model, Xs)
        np.testing.assert_allclose(m1, m2, atol=1e-12)
        np.testing.assert_allclose(s1, s2, atol=1e-12)

    def test_std_nonnegative(self):
        arch = N.Basic(N.Activation("relu"), PR, 4)
        model = inference.anchored_ensemble_train(
            arch, np.zeros((0, 1)), np.zeros(0), 3, inference.EnsembleConfig(), seed=14
        )
        _, std = inference.ensemble_predict(model, np.linspace(-2, 2, 9).reshape(-1, 1))
        assert np.all(std >= 0)

    def test_divergent_loss_raises(self):
        arch = N.Basic(N.Activation("relu"), PR, 50)
        X = np.linspace(-2, 2, 12).reshape(-1, 1)
        y = np.sin(X[:, 0])
        with pytest.raises(RuntimeError, match="diverged"):
            inference.anchored_ensemble_train(
                arch, X, y, 2,
                inference.EnsembleConfig(n_steps=200, learning_rate=5.0, sigma2_n=0.0025),
                seed=15,
            )

    def test_needs_two_members(self):
        arch = N.Basic(N.Activation("relu"), PR, 4)
        with pytest.raises(ValueError):
            inference.anchored_ensemble_train(
                arch, np.zeros((0, 1)), np.zeros(0), 1, inference.EnsembleConfig(), seed=0
            )


class TestSnapshots:
    def test_chain_round_trip(self):
        cfg = inference.HMCConfig(step_size=0.5, leapfrog_steps=5, n_samples=20,
                                  n_chains=2, seed=16)
        res = inference.hmc_sample(_Gaussian([[1.0]]), np.zeros(1), cfg)
        back = inference.chain_from_json(inference.chain_to_json(res))
        np.testing.assert_array_equal(back.samples, res.samples)
        assert back.accept_rate == res.accept_rate

    def test_ensemble_round_trip(self):
        arch = N.Basic(N.Activation("relu"), PR, 4)
        model = inference.anchored_ensemble_train(
            arch, np.zeros((0, 1)), np.zeros(0), 3, inference.EnsembleConfig(), seed=17
        )
        back = inference.ensemble_from_json(inference.ensemble_to_json(model), arch)
        np.testing.assert_array_equal(back.members, model.members)
        np.testing.assert_array_equal(back.anchors, model.anchors)
