"""Sparse recovery of polynomial-phase signals from partial samples.

The pipeline: model a signal as a sum of polynomial-phase components,
demodulate candidate chirp rates from a grid, detect concentrated spectral
peaks in the rescaled masked spectrum, correct amplitudes by joint least
squares, and reconstruct.  Windowed variants handle piecewise rates; the
analysis module measures noise behaviour and recovery phase transitions.
"""

from .analysis import (
    PhaseTransitionGrid,
    SnrReport,
    phase_transition,
    snr_db,
    snr_experiment,
    theoretical_snr_out,
)
from .config import ConfigError, ExperimentConfig, Piece, parse_config, parse_config_string
from .experiments import ExperimentOutcome, run_experiment, synthesize_config_signal
from .lpft import (
    LpftRecoveryResult,
    LpftSpectrogram,
    LpftSweepPoint,
    WindowAssignment,
    lpft,
    lpft_cs_estimate,
    lpft_recover,
    lpft_sweep,
)
from .model import (
    MeasurementSet,
    MultiComponentSignal,
    NoiseSpec,
    PolyPhaseComponent,
    apply_noise,
    phase_cycles,
    select_measurements,
    synthesize,
    synthesize_components,
)
from .recovery import (
    COND_LIMIT,
    DetectedComponent,
    GridPoint,
    ParameterGrid,
    RankDeficiencyError,
    RecoverConfig,
    RecoveryResult,
    SweepPoint,
    ThresholdPolicy,
    amplitude_correction,
    cs_spectral_estimate,
    detect_components,
    reconstruct,
    recover,
    sweep,
)
from .transform import (
    DemodulationKernel,
    KernelParams,
    Spectrum,
    dft,
    idft,
    kernel_values_at,
    make_kernel,
    pft,
)

__version__ = "0.1.0"

__all__ = [
    "COND_LIMIT",
    "ConfigError",
    "DemodulationKernel",
    "DetectedComponent",
    "ExperimentConfig",
    "ExperimentOutcome",
    "GridPoint",
    "KernelParams",
    "LpftRecoveryResult",
    "LpftSpectrogram",
    "LpftSweepPoint",
    "MeasurementSet",
    "MultiComponentSignal",
    "NoiseSpec",
    "ParameterGrid",
    "PhaseTransitionGrid",
    "Piece",
    "PolyPhaseComponent",
    "RankDeficiencyError",
    "RecoverConfig",
    "RecoveryResult",
    "SnrReport",
    "Spectrum",
    "SweepPoint",
    "ThresholdPolicy",
    "WindowAssignment",
    "amplitude_correction",
    "apply_noise",
    "cs_spectral_estimate",
    "detect_components",
    "dft",
    "idft",
    "kernel_values_at",
    "lpft",
    "lpft_cs_estimate",
    "lpft_recover",
    "lpft_sweep",
    "make_kernel",
    "parse_config",
    "parse_config_string",
    "pft",
    "phase_cycles",
    "phase_transition",
    "reconstruct",
    "recover",
    "run_experiment",
    "select_measurements",
    "snr_db",
    "snr_experiment",
    "synthesize",
    "synthesize_components",
    "synthesize_config_signal",
    "sweep",
    "theoretical_snr_out",
]
