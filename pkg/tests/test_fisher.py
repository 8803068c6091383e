import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ddwave import (
    NumericalError,
    ParamPrior,
    bcrlb,
    bim,
    efim,
    fim,
    make_config,
    noise_covariance,
    noiseless_receive,
    optimize_spectrum,
    prior_information,
    sensitivity_set,
)
from ddwave.fisher import SensitivitySet, efim_unknown_gain, hermite_rule


def random_spectrum(rng, K, power=1.0):
    x = rng.normal(size=K) + 1j * rng.normal(size=K)
    return np.sqrt(power) * x / np.linalg.norm(x)


@pytest.fixture(scope="module")
def colored():
    """B / fs = 1.495: colored noise, and no band edge within 5 sigma of zero Doppler."""
    cfg = make_config(10e-6, 10e6, 14.95e6, 1e-9, 1.0, gamma=0.8 + 0.6j)
    prior = ParamPrior(10e-9, 5e3)
    cov = noise_covariance(cfg)
    return cfg, prior, cov, sensitivity_set(cfg, cov, prior, 6)


class TestFim:
    def test_zero_spectrum(self, colored):
        cfg, _, cov, _ = colored
        assert not np.any(fim(cfg, cov, (1e-9, 100.0), np.zeros(cfg.K)))

    def test_quadratic_scaling(self, colored, rng):
        cfg, _, cov, _ = colored
        x = random_spectrum(rng, cfg.K)
        theta = (2e-9, -300.0)
        np.testing.assert_allclose(fim(cfg, cov, theta, (2 - 1j) * x), 5 * fim(cfg, cov, theta, x), rtol=1e-12)

    @pytest.mark.parametrize("k", [-50, -7, 1, 49])
    def test_single_harmonic_closed_form(self, k):
        cfg = make_config(10e-6, 10e6, 10e6, 2e-9, 3.0, gamma=0.5)
        x = np.zeros(cfg.K, dtype=complex)
        x[k + cfg.K // 2] = np.sqrt(cfg.P)
        j = fim(cfg, noise_covariance(cfg), (0.0, 0.0), x)
        expected = 2 * cfg.N * abs(cfg.gamma) ** 2 * cfg.P * (k * cfg.omega0) ** 2 / (cfg.N0 * cfg.B)
        assert j[0, 0] == pytest.approx(expected, rel=1e-12)

    def test_dimension_mismatch(self, colored):
        cfg, _, cov, _ = colored
        with pytest.raises(ValueError):
            fim(cfg, cov, (0, 0), np.ones(cfg.K + 2))

    def test_matches_expected_negative_hessian(self, colored, rng):
        """Second differences of E[ln p(y | theta')] at theta' = theta."""
        cfg, prior, cov, _ = colored
        x = random_spectrum(rng, cfg.K)
        h = np.array([1e-3 / (cfg.omega0 * cfg.K / 2), 1e-3 * cfg.f0])
        for _ in range(20):
            theta = np.array([rng.normal(0, prior.sigma_tau), rng.normal(0, prior.sigma_nu)])
            v0 = noiseless_receive(cfg, theta, x)

            def mean_loglik(t):
                d = v0 - noiseless_receive(cfg, t, x)
                return -np.real(cov.quad(d))

            hess = np.empty((2, 2))
            e = np.eye(2) * h
            for i in range(2):
                hess[i, i] = (mean_loglik(theta + e[i]) - 2 * mean_loglik(theta) + mean_loglik(theta - e[i])) / h[i] ** 2
            hess[0, 1] = hess[1, 0] = (
                mean_loglik(theta + e[0] + e[1])
                - mean_loglik(theta + e[0] - e[1])
                - mean_loglik(theta - e[0] + e[1])
                + mean_loglik(theta - e[0] - e[1])
            ) / (4 * h[0] * h[1])
            j = fim(cfg, cov, theta, x)
            scale = np.sqrt(np.outer(np.diag(j), np.diag(j)))
            assert np.abs(-hess - j).max() / scale.max() < 1e-4
            assert np.all(np.abs(-hess - j) / scale < 1e-4)


class TestPrior:
    def test_scenario_values(self):
        j = prior_information(ParamPrior(10e-9, 5e3))
        np.testing.assert_allclose(j, np.diag([1e16, 4e-8]), rtol=1e-12)

    def test_unit(self):
        assert np.array_equal(prior_information(ParamPrior(1.0, 1.0)), np.eye(2))

    def test_inverse_square(self):
        a = prior_information(ParamPrior(3.0, 1.0))
        b = prior_information(ParamPrior(6.0, 1.0))
        assert b[0, 0] == pytest.approx(a[0, 0] / 4)


class TestQuadrature:
    @pytest.mark.parametrize("order", [1, 2, 5, 10, 20])
    def test_rule_normalized(self, order):
        tau, nu, w = hermite_rule(ParamPrior(2.0, 3.0), order)
        assert w.sum() == pytest.approx(1.0, rel=1e-13)
        assert tau.shape == nu.shape == (order * order,)

    def test_rule_moments(self):
        tau, nu, w = hermite_rule(ParamPrior(2.0, 3.0), 6)
        assert w @ tau**2 == pytest.approx(4.0, rel=1e-12)
        assert w @ nu**4 == pytest.approx(3 * 81.0, rel=1e-12)
        assert w @ (tau * nu) == pytest.approx(0.0, abs=1e-12)

    def test_rejects_zero_order(self, colored):
        cfg, prior, cov, _ = colored
        with pytest.raises(ValueError):
            sensitivity_set(cfg, cov, prior, 0)

    def test_single_node_is_mean_integrand(self, colored, rng):
        cfg, prior, cov, _ = colored
        sens = sensitivity_set(cfg, cov, prior, 1)
        x = random_spectrum(rng, cfg.K)
        np.testing.assert_allclose(efim(sens, x), fim(cfg, cov, (0.0, 0.0), x), rtol=1e-12)

    def test_order_convergence(self, rho2_config, prior, rho2_sensitivity):
        fine = sensitivity_set(rho2_config, noise_covariance(rho2_config), prior, 20)
        for i in range(2):
            for j in range(2):
                a, b = rho2_sensitivity[i, j], fine[i, j]
                # entries at round-off level of the matrix carry no relative meaning
                floor = 1e-12 * np.abs(b).max()
                assert np.all(np.abs(a - b) <= 1e-3 * np.abs(b) + floor)

    def test_threads_do_not_change_result(self, colored):
        cfg, prior, cov, sens = colored
        par = sensitivity_set(cfg, cov, prior, 6, threads=3)
        for i in range(2):
            for j in range(2):
                assert np.array_equal(par[i, j], sens[i, j])


class TestSensitivityInvariants:
    def test_hermitian_pairs(self, colored):
        sens = colored[3]
        scale = max(np.abs(sens[i, j]).max() for i in range(2) for j in range(2))
        assert np.abs(sens.g12.conj().T - sens.g21).max() <= 1e-12 * scale
        for g in (sens.g11, sens.g22):
            assert np.abs(g.conj().T - g).max() <= 1e-12 * np.abs(g).max()
            assert np.linalg.eigvalsh(0.5 * (g + g.conj().T)).min() >= -1e-10 * np.abs(g).max()

    def test_broken_pair_detected(self, colored, rng):
        sens = colored[3]
        bad = SensitivitySet(sens.g11, sens.g12, 2 * sens.g21, sens.g22, sens.config, sens.prior, sens.order)
        with pytest.raises(NumericalError, match="imaginary residue"):
            efim(bad, random_spectrum(rng, sens.K))


class TestEfim:
    def test_equals_average_fim(self, colored, rng):
        cfg, prior, cov, sens = colored
        x = random_spectrum(rng, cfg.K)
        tau, nu, w = hermite_rule(prior, sens.order)
        avg = sum(wi * fim(cfg, cov, (t, n), x) for t, n, wi in zip(tau, nu, w))
        np.testing.assert_allclose(efim(sens, x), avg, rtol=1e-11)

    def test_zero(self, colored):
        sens = colored[3]
        assert not np.any(efim(sens, np.zeros(sens.K)))

    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=25, deadline=None)
    def test_symmetric_psd(self, colored, seed):
        sens = colored[3]
        j = efim(sens, random_spectrum(np.random.default_rng(seed), sens.K))
        assert np.array_equal(j, j.T)
        assert j[0, 0] >= 0 and j[1, 1] >= 0
        assert j[0, 0] * j[1, 1] >= j[0, 1] ** 2 * (1 - 1e-12)

    @given(st.floats(0, 2 * np.pi))
    @settings(max_examples=20, deadline=None)
    def test_global_phase_invariance(self, colored, phi):
        sens = colored[3]
        x = random_spectrum(np.random.default_rng(9), sens.K)
        np.testing.assert_allclose(efim(sens, np.exp(1j * phi) * x), efim(sens, x), rtol=1e-10)

    def test_scales_with_inverse_noise(self, colored, rng):
        cfg, prior, cov, sens = colored
        x = random_spectrum(rng, cfg.K)
        cfg4 = cfg.replace(N0=4 * cfg.N0)
        direct = sensitivity_set(cfg4, noise_covariance(cfg4), prior, 6)
        np.testing.assert_allclose(efim(direct, x), efim(sens, x) / 4, rtol=1e-10)
        np.testing.assert_allclose(efim(sens.for_noise_level(cfg4.N0), x), efim(direct, x), rtol=1e-10)

    def test_unknown_gain_loses_information(self, colored, rng):
        cfg, prior, cov, sens = colored
        x = random_spectrum(rng, cfg.K)
        known = efim(sens, x)
        unknown = efim_unknown_gain(cfg, cov, prior, x, sens.order)
        assert np.linalg.eigvalsh(known - unknown).min() >= -1e-9 * np.abs(known).max()


class TestBound:
    def test_prior_only(self, colored):
        sens = colored[3]
        prior = sens.prior
        bound = bcrlb(bim(efim(sens, np.zeros(sens.K)), prior_information(prior)))
        np.testing.assert_allclose(bound, prior.covariance, rtol=1e-12)

    def test_never_exceeds_prior(self, colored, rng):
        sens = colored[3]
        for _ in range(10):
            bound = bcrlb(bim(efim(sens, random_spectrum(rng, sens.K)), prior_information(sens.prior)))
            # Loewner order, compared in prior-normalized coordinates
            s = np.diag(1.0 / sens.prior.sigmas)
            assert np.linalg.eigvalsh(s @ (sens.prior.covariance - bound) @ s).min() >= -1e-12

    def test_singular_rejected(self):
        with pytest.raises(NumericalError):
            bcrlb(np.zeros((2, 2)))

    def test_decreases_with_power(self, rho2_sensitivity):
        sens = rho2_sensitivity
        weighting = np.diag([1 / np.trace(sens.g11).real, 1 / np.trace(sens.g22).real])
        pim = prior_information(sens.prior)
        diag = []
        for P in np.logspace(0, 2, 9):
            x = optimize_spectrum(sens, weighting, P)
            diag.append(np.diag(bcrlb(bim(efim(sens, x), pim))))
        diag = np.array(diag)
        assert np.all(np.diff(diag, axis=0) < 0)
