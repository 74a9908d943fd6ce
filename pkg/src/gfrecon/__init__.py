"""Reconstruction of ideal Green's functions from bath-perturbed measurements."""

__version__ = "0.1.0"

from .bath import (BathModel, DiscretizedBath, Lorentzian, OhmicExpCutoff, SpectralDensity, Tabulated,
                   bath_gf_full, bath_gf_lindblad_approx, discretize_bath, eval_spectral_density)
from .chain import ChainModel, dispersion, lindblad_rate, mode_transform, qrt_correlators
from .config import ConfigError, ExperimentConfig
from .estimators import DysonReconstructor, PadeContinuation, WickVerifier
from .greens import (DEFAULT_ETA, FrequencyGrid, GFKind, MatrixGreenFunction, ScalarGreenFunction,
                     SpectralFunction, TimeCorrelator, TimeGrid, fourier_time_to_freq, inverse_fourier,
                     retarded_from_spectral, spectral_from_retarded, timeordered_from_retarded)
from .matsubara import (MatsubaraSeries, PadeApproximant, forward_matsubara, matsubara_frequencies, pade_continue,
                        pade_fit, reconstruct_matsubara)
from .oracle import (FockOracle, FockOracleConfig, LindbladConfig, lindblad_two_time, measure_gsb_from_oracle,
                     normal_modes)
from .reconstruct import (NoiseModel, ReconstructionResult, forward_dyson_matrix, forward_dyson_scalar,
                          monte_carlo_sensitivity, reconstruct_matrix, reconstruct_scalar,
                          sensitivity_bath_first_order, sensitivity_report, sensitivity_system_first_order)
from .wick import (G4Kernel, corrected_two_time, enumerate_pairings, leg_sum, ring_sum, verify_wick, wick_defect,
                   wick_expand)

__all__ = [name for name in dir() if not name.startswith("_")]
