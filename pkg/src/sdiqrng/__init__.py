"""Desk-scale semi-device-independent CV quantum random number generator.

Simulated homodyne acquisition of vacuum / thermal / squeezed states,
entropic-uncertainty certification of extractable randomness, seeded
Toeplitz-hashing privacy amplification, and a statistical validation
battery, wired into a deterministic end-to-end pipeline and CLI.
"""

from .core import (
    SNL_VARIANCE,
    DEFAULT_ADC_BITS,
    DEFAULT_DELTA,
    DiscretizationGrid,
    EntropyReport,
    NoiseBudget,
    SampleBlock,
    SlotKind,
    StateKind,
    StateModel,
    bin_index,
    gaussian_bin_probs,
    state_variances,
)
from .homodyne import (
    LoModel,
    ProtocolSchedule,
    add_detection_noise,
    lo_leakage_variance,
    propagate_loss,
    quantize,
    run_schedule,
    sample_quadrature,
)
from .entropy import (
    calibrate_noise_budget,
    certify_block,
    curve_entropy_vs_noise,
    curve_entropy_vs_resolution,
    delta_correction,
    eup_bound,
    histogram,
    incompatibility,
    insecure_fraction,
    max_entropy,
    min_entropy,
    smooth_min_entropy_lower,
)
from .extractor import (
    ToeplitzSpec,
    output_length,
    toeplitz_fast,
    toeplitz_naive,
    verify_epsilon_security,
)
from .stattests import run_battery
from .pipeline import RunConfig, RunResult, emit_figures, equivalent_rate, run_protocol

__version__ = "0.1.0"
