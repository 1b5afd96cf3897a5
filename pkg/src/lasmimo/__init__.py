"""Simulation toolkit for high-rate non-orthogonal space-time block
codes with likelihood-ascent-search detection and training-based
channel estimation."""

from .channel import Frame, SnrModel, draw_channel, make_frame, qam_symbol_energy, transmit
from .detector import (DetectionStats, DetectorConfig, InitialSolution, LasState,
                       SearchBudgetError, initial_solution, k_symbol_substage,
                       local_minimum_check, make_state, ml_oracle, mlas_detect,
                       one_symbol_stage, soft_outputs)
from .estimation import (ChannelEstimate, capacity_bound, ergodic_capacity_csir,
                         iterative_detect_estimate, mmse_estimate, zf_estimate)
from .harness import (BerRecord, ConfigError, ExperimentConfig, emit_results,
                      run_ber_sweep, siso_awgn_reference, trial_rng)
from .modulation import SignalSet, bits_to_symbols, pam_alphabet, symbols_to_bits
from .stbc import CdaCode, WeightMatrixSet, encode, va_adjoint_multiply, weight_matrices
from .system import RealSystem, build_real_system

__version__ = "0.1.0"

__all__ = [
    "BerRecord", "CdaCode", "ChannelEstimate", "ConfigError", "DetectionStats",
    "DetectorConfig", "ExperimentConfig", "Frame", "InitialSolution", "LasState",
    "RealSystem", "SearchBudgetError", "SignalSet", "SnrModel", "WeightMatrixSet",
    "bits_to_symbols", "build_real_system", "capacity_bound", "draw_channel",
    "emit_results", "encode", "ergodic_capacity_csir", "initial_solution",
    "iterative_detect_estimate", "k_symbol_substage", "local_minimum_check",
    "make_frame", "make_state", "ml_oracle", "mlas_detect", "mmse_estimate",
    "one_symbol_stage", "pam_alphabet", "qam_symbol_energy", "run_ber_sweep",
    "siso_awgn_reference", "soft_outputs", "symbols_to_bits", "transmit",
    "trial_rng", "va_adjoint_multiply", "weight_matrices", "zf_estimate",
]
