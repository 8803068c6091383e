"""Fisher, expected Fisher, prior and Bayesian information for (tau, nu).

All 2x2 information matrices are plain ``numpy`` arrays ordered
``(tau, nu)``: entry ``[0, 0]`` in s^-2, ``[1, 1]`` in Hz^-2.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .exceptions import NumericalError
from .noise_model import NoiseCovariance
from .signal_model import (
    ParamPrior,
    SystemConfig,
    as_spectrum,
    channel_matrix,
    channel_matrix_derivatives,
)

__all__ = [
    "SensitivitySet",
    "fim",
    "prior_information",
    "hermite_rule",
    "sensitivity_set",
    "efim",
    "efim_unknown_gain",
    "bim",
    "bcrlb",
]

DEFAULT_ORDER = 10
IMAG_TOLERANCE = 1e-9
HERMITIAN_TOLERANCE = 1e-12


def _information_pair(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """``2 Re{[a b]^H [a b]}`` for whitened derivative vectors."""
    stacked = np.stack([a, b], axis=-1)
    return 2.0 * np.real(stacked.conj().T @ stacked)


def fim(config: SystemConfig, covariance: NoiseCovariance, theta, spectrum) -> np.ndarray:
    """Fisher information of ``theta`` for known gain ``gamma``."""
    x = as_spectrum(config, spectrum)
    dc_dtau, dc_dnu = channel_matrix_derivatives(config, theta)
    a = covariance.whiten(dc_dtau @ x)
    b = covariance.whiten(dc_dnu @ x)
    return _information_pair(a, b)


def prior_information(prior: ParamPrior) -> np.ndarray:
    return np.diag([1.0 / prior.sigma_tau**2, 1.0 / prior.sigma_nu**2])


def hermite_rule(prior: ParamPrior, order: int):
    """Tensor Gauss-Hermite nodes ``(tau, nu)`` and normalized weights for the prior.

    Returns arrays of shape ``(order**2,)`` whose weights sum to one.
    """
    if order < 1:
        raise ValueError(f"quadrature order must be >= 1, got {order}")
    q, w = np.polynomial.hermite.hermgauss(order)
    w = w / np.sqrt(np.pi)
    tau = np.sqrt(2.0) * prior.sigma_tau * q
    nu = np.sqrt(2.0) * prior.sigma_nu * q
    tt, nn = np.meshgrid(tau, nu, indexing="ij")
    ww = np.outer(w, w)
    return tt.ravel(), nn.ravel(), ww.ravel()


@dataclass(frozen=True)
class SensitivitySet:
    """Prior-averaged channel sensitivities ``G[i][j] = E[dC_i^H R^-1 dC_j]``."""

    g11: np.ndarray
    g12: np.ndarray
    g21: np.ndarray
    g22: np.ndarray
    config: SystemConfig
    prior: ParamPrior
    order: int

    def __getitem__(self, index):
        i, j = index
        return ((self.g11, self.g12), (self.g21, self.g22))[i][j]

    @property
    def K(self) -> int:
        return self.g11.shape[0]

    def scaled(self, factor: float, config: SystemConfig | None = None) -> "SensitivitySet":
        """Rescale all four matrices, e.g. after changing N0 (sensitivities scale with 1/N0)."""
        return SensitivitySet(
            self.g11 * factor,
            self.g12 * factor,
            self.g21 * factor,
            self.g22 * factor,
            config if config is not None else self.config,
            self.prior,
            self.order,
        )

    def for_noise_level(self, N0: float) -> "SensitivitySet":
        return self.scaled(self.config.N0 / N0, self.config.replace(N0=N0))


def _node_integrand(config, covariance, tau, nu):
    dc_dtau, dc_dnu = channel_matrix_derivatives(config, (tau, nu))
    k = config.K
    white = covariance.whiten(np.concatenate([dc_dtau, dc_dnu], axis=1))
    a, b = white[:, :k], white[:, k:]
    ah, bh = a.conj().T, b.conj().T
    return ah @ a, ah @ b, bh @ a, bh @ b


def sensitivity_set(
    config: SystemConfig,
    covariance: NoiseCovariance,
    prior: ParamPrior,
    Q: int = DEFAULT_ORDER,
    threads: int = 1,
) -> SensitivitySet:
    """Gauss-Hermite average of the sensitivity integrand over the Gaussian prior."""
    taus, nus, weights = hermite_rule(prior, Q)

    def work(node):
        return _node_integrand(config, covariance, taus[node], nus[node])

    nodes = range(len(weights))
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(work, nodes))
    else:
        parts = [work(node) for node in nodes]

    totals = [np.zeros((config.K, config.K), dtype=complex) for _ in range(4)]
    for weight, terms in zip(weights, parts):
        for total, term in zip(totals, terms):
            total += weight * term
    g11, g12, g21, g22 = totals

    for name, gij, gji in (("12/21", g12, g21), ("11", g11, g11), ("22", g22, g22)):
        if np.abs(gij.conj().T - gji).max() > HERMITIAN_TOLERANCE * np.abs(gij).max():
            raise NumericalError(f"sensitivity pair {name} violates G_ij^H = G_ji")
    return SensitivitySet(g11, g12, g21, g22, config, prior, Q)


def efim(sensitivity: SensitivitySet, spectrum) -> np.ndarray:
    """Expected Fisher information ``[J]_ij = x^H (G_ij + G_ji) x``."""
    x = as_spectrum(sensitivity.config, spectrum)
    raw = np.empty((2, 2), dtype=complex)
    for i in range(2):
        for j in range(2):
            raw[i, j] = x.conj() @ ((sensitivity[i, j] + sensitivity[j, i]) @ x)
    # residues are judged against the Cauchy-Schwarz bound of each entry
    scale = np.sqrt(np.outer(np.abs(np.diag(raw)), np.abs(np.diag(raw))))
    bad = np.abs(raw.imag) > IMAG_TOLERANCE * np.maximum(scale, np.finfo(float).tiny)
    if np.any(bad):
        i, j = np.argwhere(bad)[0]
        raise NumericalError(
            f"EFIM entry ({i}, {j}) has imaginary residue {raw[i, j].imag:.3e}; "
            "sensitivity matrices are not a Hermitian pair"
        )
    out = raw.real
    return 0.5 * (out + out.T)


def bim(efim_matrix: np.ndarray, pim: np.ndarray) -> np.ndarray:
    return np.asarray(efim_matrix) + np.asarray(pim)


def bcrlb(bim_matrix: np.ndarray) -> np.ndarray:
    """Inverse of the Bayesian information matrix."""
    bim_matrix = np.asarray(bim_matrix, dtype=float)
    try:
        chol = np.linalg.cholesky(bim_matrix)
    except np.linalg.LinAlgError as exc:
        raise NumericalError("Bayesian information matrix is singular or indefinite") from exc
    inv_chol = np.linalg.inv(chol)
    bound = inv_chol.T @ inv_chol
    return 0.5 * (bound + bound.T)


def efim_unknown_gain(
    config: SystemConfig,
    covariance: NoiseCovariance,
    prior: ParamPrior,
    spectrum,
    Q: int = DEFAULT_ORDER,
) -> np.ndarray:
    """Expected information on (tau, nu) when the gain is a deterministic unknown.

    The 4x4 expected FIM over ``(tau, nu, Re gamma, Im gamma)`` is averaged with
    the same Gauss-Hermite rule and the gain block is removed by a Schur
    complement. Equals :func:`efim` minus the information lost to the gain.
    """
    x = as_spectrum(config, spectrum)
    unit_gain = config.replace(gamma=1.0)
    taus, nus, weights = hermite_rule(prior, Q)
    total = np.zeros((4, 4))
    for tau, nu, weight in zip(taus, nus, weights):
        dc_dtau, dc_dnu = channel_matrix_derivatives(config, (tau, nu))
        # v is linear in gamma: dv/dRe(gamma) = v/gamma, dv/dIm(gamma) = j v/gamma
        s = channel_matrix(unit_gain, (tau, nu)) @ x
        cols = np.stack([dc_dtau @ x, dc_dnu @ x, s, 1j * s], axis=1)
        white = covariance.whiten(cols)
        total += weight * 2.0 * np.real(white.conj().T @ white)
    theta_block = total[:2, :2]
    cross = total[:2, 2:]
    gain_block = total[2:, 2:]
    if not np.any(gain_block):
        return theta_block
    out = theta_block - cross @ np.linalg.solve(gain_block, cross.T)
    return 0.5 * (out + out.T)
