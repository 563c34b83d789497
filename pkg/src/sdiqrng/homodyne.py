"""Software stand-in for the optical table.

Generates continuous quadrature outcomes for a chosen state, injects
electronic and LO-fluctuation noise, applies ADC quantization and schedules
data / check / electronic-noise slots.  All noise is modeled as white
Gaussian over the analysis band; phase switching between slots is
instantaneous.

Scheduling: time is divided into windows of ``check_slot_len / check_ratio``
samples.  Every window contains exactly one check slot, and electronic-noise
slots are placed on their own cycle at ``enoise_ratio``; slot *positions*
inside the window are drawn from the private switch seed.  This keeps the
check and electronic-noise sample counts at their configured ratios to
within one slot length while leaving the placement unpredictable.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import (
    SNL_VARIANCE,
    DiscretizationGrid,
    SampleBlock,
    SlotKind,
    StateKind,
    StateModel,
    bin_index,
    state_variances,
)


class SaturationError(RuntimeError):
    """Raised when the saturated-sample fraction exceeds the abort threshold."""

    def __init__(self, fraction: float, threshold: float):
        self.fraction = fraction
        self.threshold = threshold
        super().__init__(
            f"saturation fraction {fraction:.3e} exceeds abort threshold {threshold:.3e}"
        )


@dataclass(frozen=True)
class LoModel:
    """Local-oscillator path: beam-splitter ratio and classical excess noise.

    ``excess_noise_db = 0`` is an unmodulated coherent LO.  The splitter sum
    may exceed 1 by up to 1e-3 to accommodate rounded measured values.
    """

    splitter_r: float = 0.5
    splitter_t: float = 0.5
    excess_noise_db: float = 0.0

    def __post_init__(self) -> None:
        for name, v in (("splitter_r", self.splitter_r), ("splitter_t", self.splitter_t)):
            if not 0.0 < v < 1.0:
                raise ValueError(f"{name} must lie strictly inside (0, 1)")
        if self.splitter_r + self.splitter_t > 1.001 + 1e-9:
            raise ValueError("splitter_r + splitter_t must be <= 1.001")
        if self.excess_noise_db < 0:
            raise ValueError("excess_noise_db must be >= 0")

    @classmethod
    def balanced(cls) -> "LoModel":
        return cls(0.5, 0.5, 0.0)


@dataclass(frozen=True)
class ProtocolSchedule:
    """Slot timing: check/electronic-noise ratios, slot lengths and the
    private-bit price of each random slot decision."""

    check_ratio: float = 1.0 / 20.0
    enoise_ratio: float = 1.0 / 20.0
    check_slot_len: int = 200
    enoise_slot_len: int = 200
    seed_bits_per_switch: int = 5

    def __post_init__(self) -> None:
        if not 0.0 < self.check_ratio < 1.0:
            raise ValueError("check_ratio must be in (0, 1)")
        if not 0.0 <= self.enoise_ratio < 1.0:
            raise ValueError("enoise_ratio must be in [0, 1)")
        if self.check_slot_len < 1 or self.enoise_slot_len < 1:
            raise ValueError("slot lengths must be >= 1")
        if self.enoise_slot_len % self.check_slot_len:
            raise ValueError("enoise_slot_len must be a multiple of check_slot_len")
        k = 1.0 / self.check_ratio
        if abs(k - round(k)) > 1e-9 or round(k) < 2:
            raise ValueError("1/check_ratio must be an integer >= 2")
        if self.enoise_ratio > 0:
            # enoise slots are placed every M windows; M must come out integral
            m = self.enoise_slot_len / self.check_slot_len / (round(k) * self.enoise_ratio)
            if abs(m - round(m)) > 1e-9 or round(m) < 1:
                raise ValueError("enoise_ratio incompatible with slot lengths")
            if self.enoise_slot_len > (round(k) - 1) * self.check_slot_len:
                raise ValueError("enoise slot does not fit beside the check slot")

    @property
    def slots_per_window(self) -> int:
        return round(1.0 / self.check_ratio)

    @property
    def window_len(self) -> int:
        return self.slots_per_window * self.check_slot_len

    @property
    def enoise_window_period(self) -> int:
        """Number of windows between electronic-noise placements (0 = never)."""
        if self.enoise_ratio == 0:
            return 0
        units = self.enoise_slot_len // self.check_slot_len
        return round(units / (self.slots_per_window * self.enoise_ratio))

    @property
    def seed_bits_per_window(self) -> int:
        n = self.seed_bits_per_switch
        return 2 * n if self.enoise_ratio > 0 else n


def sample_quadrature(state: StateModel, which: str, n: int, rng_seed) -> np.ndarray:
    """Draw ``n`` outcomes of quadrature ``which`` ("Q" or "P") of ``state``.

    Zero-mean Gaussian with the variance from :func:`state_variances`;
    deterministic for a fixed seed.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    var_q, var_p = state_variances(state)
    var = {"Q": var_q, "P": var_p}[which.upper()]
    rng = np.random.default_rng(rng_seed)
    return rng.normal(0.0, np.sqrt(var), size=n)


def lo_leakage_variance(lo: LoModel) -> float:
    """Variance of the classical LO noise leaking past the beam splitter.

    Imbalanced-detector common-mode rejection model, in phase-space units::

        var_lo = (R - T)^2 / (4 R T) * (10^(excess_db/10) - 1)

    equivalently ``(R-T)^2/(2RT) * (10^(e/10)-1) * SNL_VARIANCE``.  A balanced
    splitter or a coherent LO gives exactly zero.  The coefficient reproduces
    the imbalanced-splitter reference point (R=21.2%, T=78.9%, +3 dB gives
    var_lo within 1% of the shot-noise variance).
    """
    r, t = lo.splitter_r, lo.splitter_t
    if r in (0.0, 1.0) or t in (0.0, 1.0):
        raise ValueError("splitter reflectivity/transmission must not be 0 or 1")
    if lo.excess_noise_db == 0.0:
        return 0.0
    return (r - t) ** 2 / (4.0 * r * t) * (10.0 ** (lo.excess_noise_db / 10.0) - 1.0)


def add_detection_noise(samples: np.ndarray, var_electronic: float, lo: LoModel,
                        rng_seed) -> np.ndarray:
    """Add independent Gaussian detection noise (electronic + LO leakage).

    With both contributions zero the input array is returned untouched.
    """
    if var_electronic < 0:
        raise ValueError("var_electronic must be >= 0")
    var = var_electronic + lo_leakage_variance(lo)
    if var == 0.0:
        return samples
    rng = np.random.default_rng(rng_seed)
    return samples + rng.normal(0.0, np.sqrt(var), size=len(samples))


def quantize(samples: np.ndarray, grid: DiscretizationGrid) -> tuple[np.ndarray, np.ndarray]:
    """Digitize samples: ``(int16 bin indices, saturation flags)``."""
    idx, sat = bin_index(np.asarray(samples, dtype=np.float64), grid)
    return idx.astype(np.int16), sat


def run_schedule(state: StateModel, lo: LoModel, grid: DiscretizationGrid,
                 schedule: ProtocolSchedule, n_total: int, rng_seed, switch_seed,
                 *, var_electronic: float = 0.0, sample_rate_hz: float = 200e6,
                 saturation_abort_fraction: float | None = 1e-5,
                 signal_blocked: bool = False) -> SampleBlock:
    """Simulate one acquisition: interleaved data/check/electronic-noise slots.

    Slot placement is driven by ``switch_seed`` alone and sample values by
    ``rng_seed`` alone, so identical seeds reproduce the block bit for bit.
    Electronic-noise slots have signal and LO blocked and measure
    ``var_electronic`` only; optical slots additionally carry the LO leakage
    noise.  ``signal_blocked=True`` blocks the optical path everywhere (used
    to probe the no-entropy-source abort).

    Raises :class:`SaturationError` when the saturated fraction exceeds
    ``saturation_abort_fraction`` (pass None to disable).
    """
    if n_total < schedule.window_len:
        raise ValueError("n_total must cover at least one full schedule window")

    slot_len = schedule.check_slot_len
    k_slots = schedule.slots_per_window
    window = schedule.window_len
    n_windows = n_total // window
    enoise_every = schedule.enoise_window_period
    enoise_units = schedule.enoise_slot_len // slot_len

    # slot-kind layout, one entry per slot unit
    switch_rng = np.random.default_rng(switch_seed)
    layout = np.zeros((n_windows, k_slots), dtype=np.uint8)
    check_pos = switch_rng.integers(0, k_slots, size=n_windows)
    layout[np.arange(n_windows), check_pos] = int(SlotKind.CHECK)
    if enoise_every:
        which = np.arange(n_windows) % enoise_every == 0
        for w in np.nonzero(which)[0]:
            free = np.nonzero(layout[w] == int(SlotKind.DATA))[0]
            start = switch_rng.integers(0, len(free) - enoise_units + 1)
            layout[w, free[start:start + enoise_units]] = int(SlotKind.ELECTRONIC_NOISE)
    kinds = np.repeat(layout.reshape(-1), slot_len)
    tail = n_total - len(kinds)
    if tail:
        kinds = np.concatenate([kinds, np.full(tail, int(SlotKind.DATA), dtype=np.uint8)])

    # sample values from independent substreams of the master seed
    ss = np.random.SeedSequence(rng_seed) if not isinstance(rng_seed, np.random.SeedSequence) else rng_seed
    check_ss, data_ss, noise_ss = ss.spawn(3)
    var_q, var_p = state_variances(state)
    if signal_blocked:
        var_q = var_p = 0.0

    values = np.zeros(n_total, dtype=np.float64)
    is_check = kinds == int(SlotKind.CHECK)
    is_data = kinds == int(SlotKind.DATA)
    is_enoise = kinds == int(SlotKind.ELECTRONIC_NOISE)
    if var_q > 0:
        values[is_check] = np.random.default_rng(check_ss).normal(
            0.0, np.sqrt(var_q), np.count_nonzero(is_check))
    if var_p > 0:
        values[is_data] = np.random.default_rng(data_ss).normal(
            0.0, np.sqrt(var_p), np.count_nonzero(is_data))

    var_lo = 0.0 if signal_blocked else lo_leakage_variance(lo)
    noise_rng = np.random.default_rng(noise_ss)
    optical_var = var_electronic + var_lo
    if optical_var > 0:
        optical = ~is_enoise
        values[optical] += noise_rng.normal(0.0, np.sqrt(optical_var),
                                            np.count_nonzero(optical))
    if var_electronic > 0:
        values[is_enoise] = noise_rng.normal(0.0, np.sqrt(var_electronic),
                                             np.count_nonzero(is_enoise))

    indices, saturated = quantize(values, grid)
    block = SampleBlock(indices=indices, kinds=kinds, saturated=saturated,
                        grid=grid, sample_rate_hz=sample_rate_hz)
    if saturation_abort_fraction is not None and \
            block.saturation_fraction > saturation_abort_fraction:
        raise SaturationError(block.saturation_fraction, saturation_abort_fraction)
    return block


def propagate_loss(state: StateModel, distance_km: float,
                   loss_db_per_km: float = 0.35) -> StateModel:
    """Squeezed state after fiber transmission.

    Each quadrature variance v maps to ``eta * v + (1 - eta) * SNL_VARIANCE``
    with ``eta = 10^(-loss_db_per_km * distance / 10)``; the returned state
    carries the re-derived dB levels.  Loss composes: consecutive segments
    equal one segment of the summed length.
    """
    if state.kind is not StateKind.SQUEEZED:
        raise ValueError("propagate_loss applies to squeezed states")
    if distance_km < 0:
        raise ValueError("distance must be >= 0")
    if distance_km == 0.0:
        return state
    eta = 10.0 ** (-loss_db_per_km * distance_km / 10.0)
    var_q, var_p = state_variances(state)
    new_q = eta * var_q + (1.0 - eta) * SNL_VARIANCE
    new_p = eta * var_p + (1.0 - eta) * SNL_VARIANCE
    return StateModel.squeezed(
        squeezing_db=-10.0 * np.log10(new_q / SNL_VARIANCE),
        antisqueezing_db=+10.0 * np.log10(new_p / SNL_VARIANCE),
    )
