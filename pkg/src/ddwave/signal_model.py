"""Frequency-domain receive model of a periodic pilot through a delay-Doppler channel.

The sampled, noiseless receive vector is ``v(theta) = C(theta) @ x`` with the
channel matrix

    C(theta) = gamma * sqrt(N) * D(nu) @ W^H @ T(tau) @ H(nu)

where ``x`` holds the K Fourier coefficients of the transmit waveform. Sample
index ``i`` (0-based) corresponds to time ``(i - N/2) * Ts`` and coefficient
index ``i`` to harmonic order ``k = i - K/2``; this is the 1-based offset
convention ``i - N/2 - 1`` shifted to Python indexing.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .exceptions import ConfigError

__all__ = [
    "SystemConfig",
    "ChannelParams",
    "ParamPrior",
    "make_config",
    "as_spectrum",
    "sample_indices",
    "harmonic_orders",
    "doppler_matrix",
    "dft_matrix",
    "delay_matrix",
    "filter_matrix",
    "channel_matrix",
    "noiseless_receive",
    "channel_matrix_derivatives",
]

MAX_HARMONICS = 1 << 16
# products like T0*fs are snapped to the nearest integer within a few ulps
_ULPS = 8


def _snap_integer(value: float) -> float:
    nearest = round(value)
    if abs(value - nearest) <= _ULPS * np.spacing(max(abs(value), 1.0)):
        return float(nearest)
    return value


@dataclass(frozen=True)
class SystemConfig:
    """Physical constants of the link plus the derived sizes N and K.

    Units: ``T0`` [s], ``fs`` [Hz], ``B`` two-sided bandwidth [Hz], ``N0``
    [W/Hz], ``P`` [W]; ``gamma`` is the dimensionless complex channel gain.
    """

    T0: float
    fs: float
    B: float
    N0: float
    P: float
    gamma: complex = 1.0 + 0.0j
    N: int = field(init=False)
    K: int = field(init=False)

    def __post_init__(self):
        for name in ("T0", "fs", "B", "P"):
            value = getattr(self, name)
            if not (np.isfinite(value) and value > 0):
                raise ConfigError(f"{name} must be a positive finite number, got {value!r}")
        if not (np.isfinite(self.N0) and self.N0 >= 0):
            raise ConfigError(f"N0 must be non-negative and finite, got {self.N0!r}")
        gamma = complex(self.gamma)
        if gamma == 0 or not np.isfinite(gamma):
            raise ConfigError(f"gamma must be a nonzero finite complex number, got {self.gamma!r}")
        object.__setattr__(self, "gamma", gamma)

        n_exact = _snap_integer(self.T0 * self.fs)
        if n_exact != round(n_exact) or round(n_exact) < 2 or round(n_exact) % 2:
            raise ConfigError(
                f"T0*fs = {self.T0 * self.fs!r} is not a positive even integer sample count"
            )
        k_exact = _snap_integer(self.B * self.T0)
        K = math.ceil(k_exact)
        K += K % 2
        if K > MAX_HARMONICS:
            raise ConfigError(f"harmonic count K = {K} exceeds the supported maximum {MAX_HARMONICS}")
        object.__setattr__(self, "N", int(round(n_exact)))
        object.__setattr__(self, "K", int(K))

    @property
    def f0(self) -> float:
        return 1.0 / self.T0

    @property
    def omega0(self) -> float:
        return 2.0 * np.pi / self.T0

    @property
    def Ts(self) -> float:
        return 1.0 / self.fs

    @property
    def snr(self) -> float:
        """Linear SNR ``P / (B * N0)``."""
        return self.P / (self.B * self.N0) if self.N0 > 0 else np.inf

    def replace(self, **changes) -> "SystemConfig":
        return dataclasses.replace(self, **changes)

    def with_snr_db(self, snr_db: float) -> "SystemConfig":
        """Same link with N0 chosen so that ``P / (B * N0)`` equals ``snr_db``."""
        return self.replace(N0=self.P / (self.B * 10.0 ** (snr_db / 10.0)))


def make_config(T0, fs, B, N0, P, gamma=1.0) -> SystemConfig:
    return SystemConfig(T0=float(T0), fs=float(fs), B=float(B), N0=float(N0), P=float(P), gamma=gamma)


class ChannelParams(NamedTuple):
    """One delay-Doppler realization: ``tau`` [s], ``nu`` [Hz]."""

    tau: float
    nu: float


@dataclass(frozen=True)
class ParamPrior:
    """Independent zero-mean Gaussian prior on delay [s] and Doppler [Hz]."""

    sigma_tau: float
    sigma_nu: float

    def __post_init__(self):
        for name in ("sigma_tau", "sigma_nu"):
            value = getattr(self, name)
            if not (np.isfinite(value) and value > 0):
                raise ConfigError(f"{name} must be strictly positive, got {value!r}")

    @property
    def covariance(self) -> np.ndarray:
        return np.diag([self.sigma_tau**2, self.sigma_nu**2])

    @property
    def sigmas(self) -> np.ndarray:
        return np.array([self.sigma_tau, self.sigma_nu])

    def log_density(self, tau, nu):
        """Quadratic part of ``ln p(theta)``; normalizing constants dropped."""
        return -0.5 * ((np.asarray(tau) / self.sigma_tau) ** 2 + (np.asarray(nu) / self.sigma_nu) ** 2)

    def sample(self, rng: np.random.Generator, size=None):
        tau = rng.normal(0.0, self.sigma_tau, size)
        nu = rng.normal(0.0, self.sigma_nu, size)
        return tau, nu


def as_spectrum(config: SystemConfig, spectrum) -> np.ndarray:
    """Validate a coefficient vector against ``config`` and return it as complex128."""
    x = np.asarray(spectrum, dtype=complex)
    if x.ndim != 1 or x.shape[0] != config.K:
        raise ValueError(f"spectrum must be a length-{config.K} vector, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ValueError("spectrum contains non-finite coefficients")
    return x


def sample_indices(config: SystemConfig) -> np.ndarray:
    """Sample offsets ``n = -N/2, ..., N/2 - 1``."""
    return np.arange(config.N) - config.N // 2


def harmonic_orders(config: SystemConfig) -> np.ndarray:
    """Harmonic orders ``k = -K/2, ..., K/2 - 1``."""
    return np.arange(config.K) - config.K // 2


def _doppler_diag(config, nu):
    return np.exp(2j * np.pi * sample_indices(config) * nu * config.Ts)


def _delay_diag(config, tau):
    return np.exp(-1j * harmonic_orders(config) * config.omega0 * tau)


def _filter_diag(config, nu):
    # |k f0 + nu| <= B/2 evaluated in units of f0; closed passband
    shifted = np.abs(harmonic_orders(config) + nu * config.T0)
    edge = 0.5 * config.B * config.T0
    return (shifted <= edge * (1.0 + 1e-12)).astype(float)


def doppler_matrix(config: SystemConfig, nu: float) -> np.ndarray:
    return np.diag(_doppler_diag(config, nu))


def dft_matrix(config: SystemConfig) -> np.ndarray:
    """The K x N matrix ``W`` with ``W[k, n] = exp(-j 2 pi k n / N) / sqrt(N)``."""
    k = harmonic_orders(config)
    n = sample_indices(config)
    return np.exp(-2j * np.pi * np.outer(k, n) / config.N) / np.sqrt(config.N)


def delay_matrix(config: SystemConfig, tau: float) -> np.ndarray:
    return np.diag(_delay_diag(config, tau))


def filter_matrix(config: SystemConfig, nu: float) -> np.ndarray:
    """Ideal low-pass response of two-sided width B, shifted by the Doppler ``nu``."""
    return np.diag(_filter_diag(config, nu))


def _theta(theta):
    tau, nu = theta
    return float(tau), float(nu)


def channel_matrix(config: SystemConfig, theta) -> np.ndarray:
    tau, nu = _theta(theta)
    idft = dft_matrix(config).conj().T
    right = _delay_diag(config, tau) * _filter_diag(config, nu)
    return config.gamma * np.sqrt(config.N) * (_doppler_diag(config, nu)[:, None] * idft * right[None, :])


def noiseless_receive(config: SystemConfig, theta, spectrum) -> np.ndarray:
    x = as_spectrum(config, spectrum)
    return channel_matrix(config, theta) @ x


def channel_matrix_derivatives(config: SystemConfig, theta) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(dC/dtau, dC/dnu)``.

    The ideal filter is piecewise constant in ``nu``, so its derivative term is
    taken as zero.
    """
    tau, nu = _theta(theta)
    n = sample_indices(config)
    k = harmonic_orders(config)
    scale = config.gamma * np.sqrt(config.N)
    idft = dft_matrix(config).conj().T

    d = _doppler_diag(config, nu)
    dd = 2j * np.pi * n * config.Ts * d
    t = _delay_diag(config, tau)
    dt = -1j * k * config.omega0 * t
    h = _filter_diag(config, nu)

    dc_dtau = scale * (d[:, None] * idft * (dt * h)[None, :])
    dc_dnu = scale * (dd[:, None] * idft * (t * h)[None, :])
    return dc_dtau, dc_dnu
