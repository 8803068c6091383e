"""Transmit-spectrum design by weighted EFIM-trace maximization and Pareto sweeps."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
import functools
from dataclasses import dataclass, field

import numpy as np

from .exceptions import ConfigError, NumericalError
from .fisher import SensitivitySet, bcrlb, bim, efim, efim_unknown_gain, prior_information
from .noise_model import noise_covariance
from .signal_model import SystemConfig, as_spectrum, harmonic_orders

__all__ = [
    "Reference",
    "TradeoffPoint",
    "check_weighting",
    "weighted_sensitivity",
    "principal_design",
    "optimize_spectrum",
    "chi_relative",
    "chi_unknown_gain",
    "mls_chips",
    "reference_rect",
    "tradeoff_point",
    "pareto_sweep",
    "select_design",
    "SELECTION_RULES",
]

DEGENERACY_TOLERANCE = 1e-9
DUPLICATE_TOLERANCE = 1e-8

# Fibonacci LFSR taps of primitive polynomials, indexed by register length
_LFSR_TAPS = {
    2: (2, 1), 3: (3, 2), 4: (4, 3), 5: (5, 3), 6: (6, 5), 7: (7, 6), 8: (8, 6, 5, 4),
    9: (9, 5), 10: (10, 7), 11: (11, 9), 12: (12, 11, 10, 4), 13: (13, 12, 11, 8),
    14: (14, 13, 12, 2), 15: (15, 14), 16: (16, 15, 13, 4),
}


def check_weighting(weighting) -> np.ndarray:
    m = np.asarray(weighting, dtype=float)
    if m.shape != (2, 2) or not np.all(np.isfinite(m)):
        raise ValueError(f"weighting must be a finite 2x2 matrix, got shape {m.shape}")
    scale = np.abs(m).max()
    if scale == 0:
        raise ValueError("weighting must not be the zero matrix")
    if abs(m[0, 1] - m[1, 0]) > 1e-12 * scale:
        raise ValueError("weighting must be symmetric")
    if np.linalg.eigvalsh(m).min() < -1e-12 * scale:
        raise ValueError("weighting must be positive semi-definite")
    return m


def weighted_sensitivity(sensitivity: SensitivitySet, weighting) -> np.ndarray:
    """``G = sum_ij M[j, i] (G_ij + G_ji)``, so that ``x^H G x = tr(M J_D)``."""
    m = check_weighting(weighting)
    total = np.zeros((sensitivity.K, sensitivity.K), dtype=complex)
    for i in range(2):
        for j in range(2):
            if m[j, i] != 0:
                total += m[j, i] * (sensitivity[i, j] + sensitivity[j, i])
    return 0.5 * (total + total.conj().T)


def _canonical_phase(vector: np.ndarray) -> np.ndarray:
    """Rotate so the first non-negligible entry is real positive."""
    mags = np.abs(vector)
    lead = np.flatnonzero(mags > 1e-8 * mags.max())[0]
    return vector * np.exp(-1j * np.angle(vector[lead]))


def principal_design(gamma: np.ndarray, power: float) -> tuple[np.ndarray, float]:
    """Principal eigenvector of the Hermitian ``gamma`` scaled to ``power``.

    Returns ``(x, lambda_max)``. Within a degenerate top eigenspace the basis
    vector with the lexicographically largest real parts (after phase
    canonicalization) is chosen so repeated runs agree.
    """
    if power <= 0:
        raise ValueError(f"power must be positive, got {power}")
    try:
        values, vectors = np.linalg.eigh(gamma)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"eigen-decomposition did not converge: {exc}") from exc
    top = values[-1]
    tied = np.flatnonzero(values >= top - DEGENERACY_TOLERANCE * max(abs(top), np.finfo(float).tiny))
    candidates = [_canonical_phase(vectors[:, i]) for i in tied]
    best = candidates[0]
    for cand in candidates[1:]:
        diff = np.round(cand.real - best.real, 12)
        nz = np.flatnonzero(diff)
        if nz.size and diff[nz[0]] > 0:
            best = cand
    best = best / np.linalg.norm(best)
    return np.sqrt(power) * best, float(top)


def optimize_spectrum(sensitivity: SensitivitySet, weighting, P: float) -> np.ndarray:
    """Power-``P`` coefficient vector maximizing ``tr(M J_D)``."""
    x, _ = principal_design(weighted_sensitivity(sensitivity, weighting), P)
    return x


@dataclass(frozen=True)
class Reference:
    """Baseline system against which relative gains are reported."""

    sensitivity: SensitivitySet
    spectrum: np.ndarray
    crlb_diag: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "spectrum", as_spectrum(self.sensitivity.config, self.spectrum))
        object.__setattr__(self, "crlb_diag", _efim_inverse_diag(efim(self.sensitivity, self.spectrum)))

    @functools.cached_property
    def unknown_gain_crlb_diag(self) -> np.ndarray:
        return _unknown_gain_inverse_diag(self.sensitivity, self.spectrum)


def _efim_inverse_diag(j: np.ndarray) -> np.ndarray:
    det = j[0, 0] * j[1, 1] - j[0, 1] * j[1, 0]
    if not (np.isfinite(det) and det > 1e-13 * j[0, 0] * j[1, 1]) or j[0, 0] <= 0 or j[1, 1] <= 0:
        raise NumericalError("expected Fisher information is singular for this spectrum")
    return np.array([j[1, 1] / det, j[0, 0] / det])


def chi_relative(sensitivity: SensitivitySet, spectrum, reference: Reference) -> tuple[float, float]:
    """Gains in dB of the unaided (EFIM-only) bound over the reference, per parameter."""
    ours = _efim_inverse_diag(efim(sensitivity, spectrum))
    chi = 10.0 * np.log10(reference.crlb_diag / ours)
    return float(chi[0]), float(chi[1])


def _unknown_gain_inverse_diag(sensitivity: SensitivitySet, spectrum) -> np.ndarray:
    config = sensitivity.config
    j = efim_unknown_gain(config, noise_covariance(config), sensitivity.prior, spectrum, sensitivity.order)
    return _efim_inverse_diag(j)


def chi_unknown_gain(sensitivity: SensitivitySet, spectrum, reference: Reference) -> tuple[float, float]:
    """Like :func:`chi_relative`, but with the gain treated as unknown by both receivers."""
    ours = _unknown_gain_inverse_diag(sensitivity, spectrum)
    chi = 10.0 * np.log10(reference.unknown_gain_crlb_diag / ours)
    return float(chi[0]), float(chi[1])


def mls_chips(length: int) -> np.ndarray:
    """First ``length`` chips (+/-1) of a maximal-length LFSR sequence."""
    degree = max(2, int(np.ceil(np.log2(length + 1))))
    if degree not in _LFSR_TAPS:
        raise ValueError(f"no LFSR table entry for {length} chips")
    taps = _LFSR_TAPS[degree]
    register = [1] * degree
    bits = []
    for _ in range(length):
        bits.append(register[-1])
        feedback = 0
        for tap in taps:
            feedback ^= register[tap - 1]
        register = [feedback] + register[:-1]
    return 1.0 - 2.0 * np.array(bits, dtype=float)


def reference_rect(config_ref: SystemConfig, shape: str = "chips", chips=None) -> np.ndarray:
    """Coefficients of the rectangular-pulse reference occupying ``B = fs``.

    ``shape="chips"`` (default) is a BPSK train of N/2 rectangular chips of
    width ``2 Ts``, so the main lobe spans exactly ``B = fs``; chip signs come
    from :func:`mls_chips` unless given. ``shape="flat"`` puts equal real
    coefficients ``sqrt(P/K)`` on every harmonic. Both are scaled to power P.
    """
    if not np.isclose(config_ref.B, config_ref.fs, rtol=1e-12, atol=0):
        raise ConfigError(f"reference system needs B = fs, got B={config_ref.B}, fs={config_ref.fs}")
    K = config_ref.K
    if shape == "flat":
        return np.full(K, np.sqrt(config_ref.P / K), dtype=complex)
    if shape != "chips":
        raise ValueError(f"unknown reference shape {shape!r}")

    n_chips = config_ref.N // 2
    code = mls_chips(n_chips) if chips is None else np.asarray(chips, dtype=float)
    if code.shape != (n_chips,):
        raise ValueError(f"expected {n_chips} chips, got shape {code.shape}")
    chip = 2.0 * config_ref.Ts
    k = harmonic_orders(config_ref)
    centers = -0.5 * config_ref.T0 + (np.arange(n_chips) + 0.5) * chip
    phases = np.exp(-1j * config_ref.omega0 * np.outer(k, centers))
    x = (chip / config_ref.T0) * np.sinc(k * config_ref.f0 * chip) * (phases @ code)
    return np.sqrt(config_ref.P) * x / np.linalg.norm(x)


@dataclass(frozen=True)
class TradeoffPoint:
    alpha: float
    weighting: np.ndarray
    spectrum: np.ndarray
    chi_tau: float
    chi_nu: float
    objective: float
    efim: np.ndarray
    bcrlb: np.ndarray

    @property
    def chi(self) -> np.ndarray:
        return np.array([self.chi_tau, self.chi_nu])


def _balance(sensitivity: SensitivitySet) -> tuple[float, float]:
    s_tau = 1.0 / np.trace(sensitivity.g11 + sensitivity.g11.conj().T).real
    s_nu = 1.0 / np.trace(sensitivity.g22 + sensitivity.g22.conj().T).real
    return s_tau, s_nu


def _design_point(sensitivity, reference, alpha, s_tau, s_nu) -> TradeoffPoint:
    weighting = np.diag([alpha * s_tau, (1.0 - alpha) * s_nu])
    gamma = weighted_sensitivity(sensitivity, weighting)
    x, lam = principal_design(gamma, sensitivity.config.P)
    j_d = efim(sensitivity, x)
    chi_tau, chi_nu = chi_relative(sensitivity, x, reference)
    bound = bcrlb(bim(j_d, prior_information(sensitivity.prior)))
    objective = float(np.real(x.conj() @ gamma @ x))
    return TradeoffPoint(float(alpha), weighting, x, chi_tau, chi_nu, objective, j_d, bound)


def tradeoff_point(sensitivity: SensitivitySet, reference: Reference, alpha: float) -> TradeoffPoint:
    """Single design at sweep position ``alpha`` (1 is pure delay, 0 pure Doppler)."""
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must lie in [0, 1], got {alpha}")
    return _design_point(sensitivity, reference, alpha, *_balance(sensitivity))


def pareto_sweep(
    sensitivity: SensitivitySet, reference: Reference, grid_size: int, threads: int = 1
) -> list[TradeoffPoint]:
    """Trace the (chi_tau, chi_nu) frontier over diagonal weightings.

    The weighting ``diag(alpha * s_tau, (1 - alpha) * s_nu)`` uses
    ``s = 1 / tr(G_ii + G_ii^H)`` to put delay and Doppler on a common
    scale. Spectra equal up to a global phase are merged (lowest alpha kept)
    and points beaten in both coordinates by another point are dropped.
    """
    if grid_size < 2:
        raise ValueError(f"grid_size must be >= 2, got {grid_size}")
    s_tau, s_nu = _balance(sensitivity)
    alphas = np.linspace(0.0, 1.0, grid_size)

    def work(alpha):
        return _design_point(sensitivity, reference, alpha, s_tau, s_nu)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            points = list(pool.map(work, alphas))
    else:
        points = [work(a) for a in alphas]

    power = sensitivity.config.P
    merged: list[TradeoffPoint] = []
    for point in points:
        if any(abs(np.vdot(kept.spectrum, point.spectrum)) / power > 1.0 - DUPLICATE_TOLERANCE for kept in merged):
            continue
        merged.append(point)
    return [
        p
        for p in merged
        if not any(q.chi_tau > p.chi_tau and q.chi_nu > p.chi_nu for q in merged if q is not p)
    ]


def _max_distance(points, context):
    return max(points, key=lambda p: float(np.hypot(p.chi_tau, p.chi_nu)))


def _max_distance_positive(points, context):
    positive = [p for p in points if p.chi_tau > 0 and p.chi_nu > 0]
    return _max_distance(positive or points, context)


def _equal_weight(points, context):
    return min(points, key=lambda p: (abs(p.alpha - 0.5), p.alpha))


def _maximin(points, context):
    return max(points, key=lambda p: min(p.chi_tau, p.chi_nu))


def _robust_maximin(points, context):
    sensitivity, reference = context
    if sensitivity is None or reference is None:
        raise ValueError("robust_maximin needs the sensitivity set and the reference")
    return max(points, key=lambda p: min(chi_unknown_gain(sensitivity, p.spectrum, reference)))


SELECTION_RULES = {
    "robust_maximin": _robust_maximin,
    "maximin": _maximin,
    "equal_weight": _equal_weight,
    "max_distance": _max_distance,
    "max_distance_positive": _max_distance_positive,
}


def select_design(
    points: list[TradeoffPoint],
    rule: str = "robust_maximin",
    sensitivity: SensitivitySet | None = None,
    reference: Reference | None = None,
) -> TradeoffPoint:
    """Pick one frontier point for simulation.

    ``robust_maximin`` maximizes the smaller of the two gains recomputed with
    the channel gain unknown at the receiver (as in the simulated estimator);
    ``maximin`` does the same with the known-gain gains; ``equal_weight``
    takes alpha nearest 0.5; ``max_distance`` the point farthest from the
    origin of the dB plane and ``max_distance_positive`` the same among
    points that gain in both parameters.
    """
    if not points:
        raise ValueError("no tradeoff points to select from")
    try:
        chooser = SELECTION_RULES[rule]
    except KeyError:
        raise ValueError(f"unknown selection rule {rule!r}; choose from {sorted(SELECTION_RULES)}") from None
    return chooser(points, (sensitivity, reference))
