"""Sampled covariance of white noise behind the ideal low-pass receive filter."""

from __future__ import annotations

import logging

import numpy as np
from scipy import linalg

from .exceptions import NumericalError
from .signal_model import SystemConfig

__all__ = ["NoiseCovariance", "noise_covariance", "draw_noise"]

log = logging.getLogger(__name__)

MAX_CONDITION = 1e12
DIAGONAL_LOADING = 1e-12


class NoiseCovariance:
    """Hermitian Toeplitz covariance ``R`` together with its lower Cholesky factor.

    ``R^-1`` is never formed; all products go through triangular solves.
    A zero covariance (``N0 = 0``) is allowed for noiseless simulation but
    cannot be inverted.
    """

    def __init__(self, matrix: np.ndarray):
        matrix = np.array(matrix, dtype=complex)
        matrix.setflags(write=False)
        self.matrix = matrix
        self.size = matrix.shape[0]
        if not np.any(matrix):
            self._chol = None
            return
        try:
            chol = linalg.cholesky(matrix, lower=True, check_finite=True)
        except linalg.LinAlgError as exc:
            raise NumericalError(f"noise covariance is not positive definite: {exc}") from exc
        chol.setflags(write=False)
        self._chol = chol

    @property
    def is_zero(self) -> bool:
        return self._chol is None

    @property
    def cholesky(self) -> np.ndarray:
        if self._chol is None:
            raise NumericalError("zero noise covariance has no factorization")
        return self._chol

    def whiten(self, x: np.ndarray) -> np.ndarray:
        """Apply ``L^-1``, so that ``whiten(a)^H whiten(b) = a^H R^-1 b``."""
        return linalg.solve_triangular(self.cholesky, x, lower=True, check_finite=False)

    def solve(self, x: np.ndarray) -> np.ndarray:
        """``R^-1 x`` via the cached factorization."""
        return linalg.cho_solve((self.cholesky, True), x, check_finite=False)

    def quad(self, a: np.ndarray, b: np.ndarray | None = None):
        """``a^H R^-1 b`` (``b`` defaults to ``a``)."""
        wa = self.whiten(a)
        wb = wa if b is None else self.whiten(b)
        return wa.conj().T @ wb

    def scaled(self, factor: float) -> "NoiseCovariance":
        out = object.__new__(NoiseCovariance)
        out.matrix = self.matrix * factor
        out.matrix.setflags(write=False)
        out.size = self.size
        out._chol = None if self._chol is None or factor == 0 else self._chol * np.sqrt(factor)
        return out

    def draw(self, rng) -> np.ndarray:
        return draw_noise(self, rng)


def noise_covariance(config: SystemConfig) -> NoiseCovariance:
    """``R[m, n] = N0 * B * sinc(B * (m - n) * Ts)``.

    Sampling below the filter bandwidth leaves the sampled noise spectrum
    non-vanishing, so the matrix is well conditioned for ``B >= fs``. For
    ``B < fs`` the spectrum has gaps; a tiny diagonal load is added in that case.
    """
    power = config.N0 * config.B
    lags = np.arange(config.N) * (config.B / config.fs)
    column = power * np.sinc(lags)
    # sinc at nonzero integer lags is exactly zero
    column[1:][np.isclose(lags[1:], np.round(lags[1:]), rtol=0, atol=1e-12)] = 0.0
    matrix = linalg.toeplitz(column)
    if power > 0:
        cond = np.linalg.cond(matrix)
        if not np.isfinite(cond) or cond > MAX_CONDITION:
            log.warning(
                "noise covariance condition number %.3g exceeds %.0e at B/fs = %.4g; "
                "adding diagonal loading",
                cond,
                MAX_CONDITION,
                config.B / config.fs,
            )
            matrix = matrix + DIAGONAL_LOADING * power * np.eye(config.N)
    return NoiseCovariance(matrix)


def draw_noise(covariance: NoiseCovariance, rng_seed) -> np.ndarray:
    """One circularly-symmetric complex Gaussian draw with covariance ``R``.

    ``rng_seed`` is anything :func:`numpy.random.default_rng` accepts,
    including an existing generator.
    """
    rng = np.random.default_rng(rng_seed)
    white = (rng.standard_normal(covariance.size) + 1j * rng.standard_normal(covariance.size)) / np.sqrt(2.0)
    if covariance.is_zero:
        return np.zeros(covariance.size, dtype=complex)
    return covariance.cholesky @ white
