"""Waveform design for delay-Doppler estimation with undersampling receivers."""

from .estimator import (
    EstimatorConfig,
    NmseRow,
    ProfileLikelihood,
    TrialResult,
    gamma_ml,
    ml_map_estimate,
    ml_map_search,
    monte_carlo_nmse,
)
from .exceptions import ConfigError, NumericalError
from .fisher import SensitivitySet, bcrlb, bim, efim, fim, prior_information, sensitivity_set
from .noise_model import NoiseCovariance, draw_noise, noise_covariance
from .optimizer import (
    Reference,
    TradeoffPoint,
    chi_relative,
    optimize_spectrum,
    pareto_sweep,
    reference_rect,
    select_design,
    weighted_sensitivity,
)
from .signal_model import (
    ChannelParams,
    ParamPrior,
    SystemConfig,
    channel_matrix,
    channel_matrix_derivatives,
    delay_matrix,
    dft_matrix,
    doppler_matrix,
    filter_matrix,
    make_config,
    noiseless_receive,
)

__version__ = "0.1.0"
