import numpy as np
import pytest

from msgm.rng import Rng
from msgm.sde import (SdeSpec, diffusion, drift, kernel_score, marginal_std,
                      mean_coeff, perturb_kernel, prior_logpdf, prior_sample)

VE = SdeSpec(kind="ve", sigma_min=0.01, sigma_max=50.0)
VP = SdeSpec(kind="vp", beta_min=0.1, beta_max=20.0)


class TestDrift:
    def test_ve_drift_is_zero(self):
        x = np.array([[3.0, -1.0], [0.5, 2.0]])
        np.testing.assert_array_equal(drift(VE, x, 0.5), np.zeros_like(x))

    def test_vp_drift_at_t0(self):
        out = drift(VP, np.array([1.0, 0.0]), 0.0)
        np.testing.assert_allclose(out, [-0.05, 0.0])

    def test_vp_drift_linear_in_x(self):
        np.testing.assert_array_equal(drift(VP, np.zeros(2), 0.3), np.zeros(2))

    def test_rejects_t_outside_horizon(self):
        with pytest.raises(ValueError):
            drift(VP, np.zeros(2), 1.5)
        with pytest.raises(ValueError):
            drift(VP, np.zeros(2), -0.1)


class TestDiffusion:
    def test_vp_endpoint(self):
        assert diffusion(VP, 1.0) == pytest.approx(np.sqrt(20.0))

    def test_ve_at_t0(self):
        expected = 0.01 * np.sqrt(2.0 * np.log(50.0 / 0.01))
        assert diffusion(VE, 0.0) == pytest.approx(expected)

    @pytest.mark.parametrize("spec", [VE, VP])
    def test_monotone_on_grid(self, spec):
        ts = np.linspace(0.0, 1.0, 200)
        gs = np.array([float(diffusion(spec, t)) for t in ts])
        assert np.all(np.diff(gs) > 0)


class TestKernel:
    def test_ve_endpoint_std(self):
        mom = perturb_kernel(VE, np.zeros(2), 1.0)
        assert mom.std == pytest.approx(50.0)
        np.testing.assert_array_equal(mom.mean, np.zeros(2))

    def test_vp_long_horizon_limit(self):
        # effective horizon pushed out: mean to 0, std to 1
        spec = SdeSpec(kind="vp", horizon=10.0, beta_min=0.1, beta_max=20.0)
        mom = perturb_kernel(spec, np.array([3.0, -2.0]), 10.0)
        np.testing.assert_allclose(mom.mean, 0.0, atol=1e-12)
        assert mom.std == pytest.approx(1.0, abs=1e-12)

    def test_rejects_t_below_eps(self):
        with pytest.raises(ValueError):
            perturb_kernel(VP, np.zeros(2), 1e-5)

    @pytest.mark.parametrize("spec", [VE, VP])
    def test_std_strictly_increasing(self, spec):
        ts = np.linspace(spec.t_eps, spec.horizon, 300)
        stds = np.asarray(marginal_std(spec, ts))
        assert np.all(np.diff(stds) > 0)

    def test_vp_moments_match_forward_simulation(self):
        # Euler-Maruyama simulation of the forward dynamics as an
        # independent oracle for the closed-form kernel at t = 0.5
        rng = Rng(77)
        n, n_steps, t_end = 100_000, 2_000, 0.5
        x0 = np.array([1.5, -0.5])
        x = np.tile(x0, (n, 1))
        dt = t_end / n_steps
        for i in range(n_steps):
            t = i * dt
            b = 0.1 + t * (20.0 - 0.1)
            x = x + (-0.5 * b * x) * dt + np.sqrt(b * dt) * rng.normal((n, 2))
        mom = perturb_kernel(VP, x0, t_end)
        se_mean = x.std(axis=0) / np.sqrt(n)
        assert np.all(np.abs(x.mean(axis=0) - mom.mean) < 3 * se_mean)
        # sample std has standard error ~ std / sqrt(2(n-1))
        se_std = x.std(axis=0) / np.sqrt(2 * (n - 1))
        assert np.all(np.abs(x.std(axis=0) - mom.std) < 3 * se_std + 2e-3)

    def test_forward_draws_match_moments(self):
        rng = Rng(5)
        mom = perturb_kernel(VE, np.array([2.0, 2.0]), 0.7)
        z = rng.normal((200_000, 2))
        draws = mom.mean + mom.std * z
        assert np.allclose(draws.mean(axis=0), mom.mean, atol=3 * mom.std / np.sqrt(200_000) + 1e-9)
        assert np.allclose(draws.std(axis=0), mom.std, rtol=0.01)


class TestKernelScore:
    def test_zero_at_mean(self):
        mom = perturb_kernel(VP, np.array([1.0, 2.0]), 0.4)
        out = kernel_score(VP, mom.mean, np.array([1.0, 2.0]), 0.4)
        np.testing.assert_allclose(out, 0.0, atol=1e-14)

    @pytest.mark.parametrize("spec", [VE, VP])
    def test_matches_gaussian_logpdf_gradient(self, spec):
        rng = Rng(9)
        x0 = np.array([0.7, -1.2])
        for _ in range(100):
            t = float(rng.uniform(spec.t_eps, 1.0))
            mom = perturb_kernel(spec, x0, t)
            x = mom.mean + mom.std * rng.normal(2)

            def logpdf(p):
                return -0.5 * ((p - mom.mean) ** 2).sum() / mom.std**2

            h = 1e-5 * (1 + np.abs(x).max())
            fd = np.array([
                (logpdf(x + h * e) - logpdf(x - h * e)) / (2 * h)
                for e in np.eye(2)
            ])
            s = kernel_score(spec, x, x0, t)
            denom = max(np.abs(fd).max(), np.abs(s).max(), 1e-12)
            assert np.abs(s - fd).max() / denom < 1e-6

    def test_linear_in_displacement(self):
        x0 = np.array([0.0, 0.0])
        mom = perturb_kernel(VP, x0, 0.3)
        dx = np.array([0.4, -0.2])
        s1 = kernel_score(VP, mom.mean + dx, x0, 0.3)
        s2 = kernel_score(VP, mom.mean + 2 * dx, x0, 0.3)
        np.testing.assert_allclose(s2, 2 * s1, rtol=1e-12)


class TestPrior:
    def test_vp_at_origin(self):
        assert prior_logpdf(VP, np.zeros(2)) == pytest.approx(-np.log(2 * np.pi))

    def test_ve_at_origin(self):
        expected = -np.log(2 * np.pi) - 2 * np.log(50.0)
        assert prior_logpdf(VE, np.zeros(2)) == pytest.approx(expected)

    @pytest.mark.parametrize("spec,half_width", [(VP, 6.0), (VE, 250.0)])
    def test_integrates_to_one(self, spec, half_width):
        n = 301
        xs = np.linspace(-half_width, half_width, n)
        gx, gy = np.meshgrid(xs, xs)
        pts = np.stack([gx.ravel(), gy.ravel()], axis=1)
        dens = np.exp(prior_logpdf(spec, pts))
        cell = (xs[1] - xs[0]) ** 2
        assert dens.sum() * cell == pytest.approx(1.0, abs=0.01)

    def test_prior_sample_scale(self):
        x = prior_sample(VE, Rng(3), 50_000, 2)
        assert x.std() == pytest.approx(50.0, rel=0.02)


def test_spec_validation():
    with pytest.raises(ValueError):
        SdeSpec(kind="bad")
    with pytest.raises(ValueError):
        SdeSpec(kind="ve", sigma_min=2.0, sigma_max=1.0)
    with pytest.raises(ValueError):
        SdeSpec(kind="vp", beta_min=5.0, beta_max=1.0)
    with pytest.raises(ValueError):
        SdeSpec(t_eps=0.0)
