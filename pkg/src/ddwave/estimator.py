"""Hybrid ML-MAP estimation of (gamma, tau, nu) and the Monte-Carlo NMSE harness."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .exceptions import ConfigError
from .fisher import SensitivitySet, bcrlb, bim, efim, prior_information, sensitivity_set
from .noise_model import NoiseCovariance, draw_noise, noise_covariance
from .signal_model import (
    ChannelParams,
    ParamPrior,
    SystemConfig,
    _doppler_diag,
    _filter_diag,
    as_spectrum,
    channel_matrix,
    dft_matrix,
    harmonic_orders,
)

__all__ = [
    "EstimatorConfig",
    "TrialResult",
    "NmseRow",
    "MapSearch",
    "ProfileLikelihood",
    "gamma_ml",
    "ml_map_search",
    "ml_map_estimate",
    "run_trial",
    "monte_carlo_nmse",
]


@dataclass(frozen=True)
class EstimatorConfig:
    """Grid-search controls. Spans are in prior standard deviations."""

    tau_span: float = 4.0
    nu_span: float = 4.0
    tau_points: int = 61
    nu_points: int = 61
    refine_iterations: int = 6
    contraction: float = 5.0

    def __post_init__(self):
        if not (self.tau_span > 0 and self.nu_span > 0):
            raise ConfigError("grid spans must be positive")
        if self.tau_points < 2 or self.nu_points < 2:
            raise ConfigError("grids need at least 2 points per axis")
        if self.refine_iterations < 0:
            raise ConfigError("refine_iterations must be >= 0")
        if not self.contraction > 1:
            raise ConfigError("contraction factor must exceed 1")


@dataclass(frozen=True)
class TrialResult:
    theta: ChannelParams
    estimate: ChannelParams
    gamma_hat: complex
    sq_error_tau: float
    sq_error_nu: float


@dataclass(frozen=True)
class NmseRow:
    snr_db: float
    nmse_tau: float
    nmse_nu: float
    bcrlb_tau_norm: float
    bcrlb_nu_norm: float
    se_tau: float
    se_nu: float
    trials: int
    mse: np.ndarray = field(repr=False)
    bound: np.ndarray = field(repr=False)


def _unit_gain(config: SystemConfig) -> SystemConfig:
    return config if config.gamma == 1 else config.replace(gamma=1.0)


def gamma_ml(config: SystemConfig, covariance: NoiseCovariance, theta, spectrum, y) -> complex:
    """Closed-form ML gain for fixed ``theta``: ``(s^H R^-1 y) / (s^H R^-1 s)``."""
    y = np.asarray(y, dtype=complex)
    if y.shape != (config.N,):
        raise ValueError(f"y must have length {config.N}, got shape {y.shape}")
    s = channel_matrix(_unit_gain(config), theta) @ as_spectrum(config, spectrum)
    energy = np.real(covariance.quad(s))
    if energy <= 0:
        raise ValueError("zero signal energy at this theta; gain is not identifiable")
    return complex(covariance.quad(s, y) / energy)


class ProfileLikelihood:
    """``ln p(y | theta, gamma_hat(theta))`` on tensor grids of (tau, nu).

    For white noise the grid is evaluated with a handful of matrix products by
    folding aliased harmonics; otherwise each Doppler column is whitened
    explicitly.
    """

    def __init__(self, config: SystemConfig, covariance: NoiseCovariance, spectrum):
        self.config = _unit_gain(config)
        self.covariance = covariance
        self.x = as_spectrum(config, spectrum)
        self.k = harmonic_orders(config)
        self.idft = np.sqrt(config.N) * dft_matrix(config).conj().T  # N x K, entries exp(+j2pi kn/N)
        diag = np.diag(covariance.matrix)
        off = covariance.matrix - np.diag(diag)
        self.white = not np.any(off) and np.all(diag == diag[0]) and diag[0].real > 0
        self.noise_var = float(diag[0].real)

    def _delay_phases(self, taus):
        return np.exp(-1j * self.config.omega0 * np.outer(self.k, taus))  # K x Gt

    def _weighted_coeffs(self, nus):
        return np.stack([_filter_diag(self.config, nu) for nu in nus], axis=1) * self.x[:, None]  # K x Gn

    def _doppler(self, nus):
        return np.stack([_doppler_diag(self.config, nu) for nu in nus], axis=1)  # N x Gn

    def correlation_energy(self, taus, nus, y):
        """Return ``(s^H R^-1 y, s^H R^-1 s)`` with shape ``(len(taus), len(nus))``."""
        taus = np.atleast_1d(np.asarray(taus, dtype=float))
        nus = np.atleast_1d(np.asarray(nus, dtype=float))
        phases = self._delay_phases(taus)
        coeffs = self._weighted_coeffs(nus)
        doppler = self._doppler(nus)
        if self.white:
            return self._white(phases, coeffs, doppler, y)
        return self._colored(phases, coeffs, doppler, y)

    def _white(self, phases, coeffs, doppler, y):
        n = self.config.N
        z = np.asarray(y, dtype=complex) / self.noise_var
        # u[k, nu] = sum_n conj(E[n, k] d_n(nu)) z_n
        u = self.idft.conj().T @ (doppler.conj() * z[:, None])
        corr = phases.conj().T @ (coeffs.conj() * u)  # Gt x Gn

        reps = math.ceil(self.config.K / n)
        pad = reps * n - self.config.K
        p = np.pad(phases, ((0, pad), (0, 0))).reshape(reps, n, -1)
        c = np.pad(coeffs, ((0, pad), (0, 0))).reshape(reps, n, -1)
        energy = np.zeros((phases.shape[1], coeffs.shape[1]))
        for r in range(reps):
            for q in range(reps):
                term = (p[r].conj() * p[q]).T @ (c[r].conj() * c[q])
                energy += term.real
        return corr, energy * n / self.noise_var

    def _colored(self, phases, coeffs, doppler, y):
        zw = self.covariance.whiten(np.asarray(y, dtype=complex))
        corr = np.empty((phases.shape[1], coeffs.shape[1]), dtype=complex)
        energy = np.empty(corr.shape)
        for col in range(coeffs.shape[1]):
            basis = self.covariance.whiten(doppler[:, col, None] * self.idft * coeffs[None, :, col])
            s = basis @ phases  # N x Gt
            corr[:, col] = s.conj().T @ zw
            energy[:, col] = np.sum(np.abs(s) ** 2, axis=0)
        return corr, energy

    def evaluate(self, taus, nus, y):
        """Profile log-likelihood grid and the matching gain estimates."""
        corr, energy = self.correlation_energy(taus, nus, y)
        base = -float(np.real(self.covariance.quad(np.asarray(y, dtype=complex))))
        safe = np.where(energy > 0, energy, 1.0)
        gain = np.where(energy > 0, np.abs(corr) ** 2 / safe, 0.0)
        gamma_hat = np.where(energy > 0, corr / safe, 0.0)
        return base + gain, gamma_hat


@dataclass(frozen=True)
class MapSearch:
    gamma_hat: complex
    theta: ChannelParams
    objective: float
    history: tuple


def _axis(center, step, count):
    return center + step * (np.arange(count) - (count - 1) / 2.0)


def ml_map_search(
    config: SystemConfig,
    covariance: NoiseCovariance,
    prior: ParamPrior,
    spectrum,
    y,
    est_config: EstimatorConfig = EstimatorConfig(),
    likelihood: ProfileLikelihood | None = None,
) -> MapSearch:
    """Coarse grid over the prior followed by contracting local grids."""
    model = likelihood if likelihood is not None else ProfileLikelihood(config, covariance, spectrum)
    y = np.asarray(y, dtype=complex)
    if y.shape != (config.N,):
        raise ValueError(f"y must have length {config.N}, got shape {y.shape}")

    step_tau = 2.0 * est_config.tau_span * prior.sigma_tau / (est_config.tau_points - 1)
    step_nu = 2.0 * est_config.nu_span * prior.sigma_nu / (est_config.nu_points - 1)
    taus = _axis(0.0, step_tau, est_config.tau_points)
    nus = _axis(0.0, step_nu, est_config.nu_points)

    def best_on(taus, nus):
        loglik, gains = model.evaluate(taus, nus, y)
        objective = loglik + prior.log_density(taus[:, None], nus[None, :])
        i, j = np.unravel_index(np.argmax(objective), objective.shape)
        return taus[i], nus[j], float(objective[i, j]), complex(gains[i, j])

    tau, nu, obj, gain = best_on(taus, nus)
    history = [obj]
    half = math.ceil(est_config.contraction)
    for _ in range(est_config.refine_iterations):
        step_tau /= est_config.contraction
        step_nu /= est_config.contraction
        cand = best_on(_axis(tau, step_tau, 2 * half + 1), _axis(nu, step_nu, 2 * half + 1))
        # the centre node is the incumbent, so the objective cannot drop
        if cand[2] > obj:
            tau, nu, obj, gain = cand
        history.append(obj)
    return MapSearch(gain, ChannelParams(float(tau), float(nu)), obj, tuple(history))


def ml_map_estimate(config, covariance, prior, spectrum, y, est_config=EstimatorConfig()):
    """Return ``(gamma_hat, theta_hat)`` maximizing ``ln p(y|theta,gamma) + ln p(theta)``."""
    result = ml_map_search(config, covariance, prior, spectrum, y, est_config)
    return result.gamma_hat, result.theta


def run_trial(config, covariance, prior, spectrum, est_config, rng, likelihood=None) -> TrialResult:
    """Draw theta and noise, observe, estimate."""
    rng = np.random.default_rng(rng)
    tau, nu = prior.sample(rng)
    theta = ChannelParams(float(tau), float(nu))
    y = channel_matrix(config, theta) @ spectrum + draw_noise(covariance, rng)
    found = ml_map_search(config, covariance, prior, spectrum, y, est_config, likelihood)
    return TrialResult(
        theta,
        found.theta,
        found.gamma_hat,
        (found.theta.tau - theta.tau) ** 2,
        (found.theta.nu - theta.nu) ** 2,
    )


def monte_carlo_nmse(
    config: SystemConfig,
    prior: ParamPrior,
    spectrum,
    est_config: EstimatorConfig,
    snr_list,
    trials: int,
    seed: int,
    threads: int = 1,
    sensitivity: SensitivitySet | None = None,
    quadrature_order: int = 10,
) -> list[NmseRow]:
    """Empirical NMSE of the ML-MAP estimator and the normalized BCRLB per SNR [dB].

    ``N0`` is set from ``SNR = P / (B N0)``. Trial ``t`` at SNR index ``i``
    uses the seed sequence ``(seed, i, t)``, so results do not depend on
    ``threads``. The true gain is ``config.gamma``; the receiver treats it as
    unknown.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    snr_list = list(snr_list)
    if not snr_list:
        raise ValueError("empty SNR list")
    x = as_spectrum(config, spectrum)
    sigma2 = np.array([prior.sigma_tau**2, prior.sigma_nu**2])
    if sensitivity is None:
        base = config.with_snr_db(0.0)
        sensitivity = sensitivity_set(base, noise_covariance(base), prior, quadrature_order)
    pim = prior_information(prior)

    rows = []
    for i, snr_db in enumerate(snr_list):
        cfg = config.with_snr_db(snr_db)
        cov = noise_covariance(cfg)
        model = ProfileLikelihood(cfg, cov, x)
        bound = bcrlb(bim(efim(sensitivity.for_noise_level(cfg.N0), x), pim))

        def work(t, i=i, cfg=cfg, cov=cov, model=model):
            rng = np.random.default_rng(np.random.SeedSequence([seed, i, t]))
            return run_trial(cfg, cov, prior, x, est_config, rng, model)

        if threads > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                results = list(pool.map(work, range(trials)))
        else:
            results = [work(t) for t in range(trials)]

        err = np.array([[r.estimate.tau - r.theta.tau, r.estimate.nu - r.theta.nu] for r in results])
        sq = err**2
        mse = err.T @ err / trials
        nmse = sq.mean(axis=0) / sigma2
        se = sq.std(axis=0, ddof=1) / np.sqrt(trials) / sigma2 if trials > 1 else np.full(2, np.nan)
        rows.append(
            NmseRow(
                float(snr_db),
                float(nmse[0]),
                float(nmse[1]),
                float(bound[0, 0] / sigma2[0]),
                float(bound[1, 1] / sigma2[1]),
                float(se[0]),
                float(se[1]),
                trials,
                mse,
                bound,
            )
        )
    return rows
