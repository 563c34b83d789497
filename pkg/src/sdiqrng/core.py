"""Shared domain types, unit conventions and the coarse-grained measurement grid.

Unit convention used throughout the package: phase-space units in which the
vacuum quadrature variance is 1/2.  The shot-noise level (SNL) therefore sits
at variance ``SNL_VARIANCE = 0.5`` and every dB figure for squeezing or added
noise is relative to that level.  Derived variances::

    squeezed       sigma^2 = 0.5 * 10^(-squeezing_db / 10)
    anti-squeezed  sigma^2 = 0.5 * 10^(+antisqueezing_db / 10)
    thermal        sigma^2 = 0.5 * (1 + excess_noise_snl)     (both quadratures)

The digitizer grid partitions the measurement range into ``2^adc_bits`` bins
of width ``delta``; bin k covers ``(k*delta, (k+1)*delta]`` and a value maps
to ``floor(value / delta)``, clamped to the two extremal bins with a
saturation flag when it falls outside the range.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np
from scipy.special import erf

SNL_VARIANCE = 0.5

# Reference digitizer: delta = 0.01536 on a 10-bit grid, i.e. range +-7.86432.
DEFAULT_DELTA = 0.01536
DEFAULT_ADC_BITS = 10


class StateKind(enum.Enum):
    VACUUM = "vacuum"
    THERMAL = "thermal"
    SQUEEZED = "squeezed"


class SlotKind(enum.IntEnum):
    """Tag for what a digitized sample slot measured."""

    DATA = 0             # data quadrature P, feeds the extractor
    CHECK = 1            # check quadrature Q, feeds the entropy estimate
    ELECTRONIC_NOISE = 2  # signal and LO blocked, detector electronics only


@dataclass(frozen=True)
class StateModel:
    """Parametric description of the signal field.

    ``squeezing_db`` is the noise reduction of the check quadrature below the
    SNL, ``antisqueezing_db`` the excess of the data quadrature above it; both
    apply to squeezed states only.  ``excess_noise_snl`` is the dimensionless
    variance added above shot noise for thermal states.
    """

    kind: StateKind
    excess_noise_snl: float = 0.0
    squeezing_db: float = 0.0
    antisqueezing_db: float = 0.0

    def __post_init__(self) -> None:
        if self.kind is StateKind.THERMAL:
            if self.excess_noise_snl < 0:
                raise ValueError("thermal excess noise must be >= 0")
        elif self.excess_noise_snl != 0.0:
            raise ValueError("excess_noise_snl only applies to thermal states")
        if self.kind is StateKind.SQUEEZED:
            if self.squeezing_db < 0 or self.antisqueezing_db < 0:
                raise ValueError("squeezing levels must be >= 0 dB")
        elif self.squeezing_db != 0.0 or self.antisqueezing_db != 0.0:
            raise ValueError("squeezing levels only apply to squeezed states")

    @classmethod
    def vacuum(cls) -> "StateModel":
        return cls(StateKind.VACUUM)

    @classmethod
    def thermal(cls, excess_noise_snl: float) -> "StateModel":
        return cls(StateKind.THERMAL, excess_noise_snl=excess_noise_snl)

    @classmethod
    def squeezed(cls, squeezing_db: float, antisqueezing_db: float | None = None) -> "StateModel":
        """Squeezed state; omitting ``antisqueezing_db`` gives the pure (minimum
        uncertainty) state with the same level on both quadratures."""
        if antisqueezing_db is None:
            antisqueezing_db = squeezing_db
        return cls(StateKind.SQUEEZED, squeezing_db=squeezing_db,
                   antisqueezing_db=antisqueezing_db)

    def is_pure(self, rtol: float = 1e-9) -> bool:
        vq, vp = state_variances(self)
        return abs(vq * vp / (SNL_VARIANCE * SNL_VARIANCE) - 1.0) <= rtol


def state_variances(state: StateModel) -> tuple[float, float]:
    """Quadrature variances ``(var_q, var_p)`` in phase-space units.

    Q is the check quadrature (squeezed for squeezed states), P the data
    quadrature (anti-squeezed).
    """
    if state.kind is StateKind.VACUUM:
        return SNL_VARIANCE, SNL_VARIANCE
    if state.kind is StateKind.THERMAL:
        v = SNL_VARIANCE * (1.0 + state.excess_noise_snl)
        return v, v
    var_q = SNL_VARIANCE * 10.0 ** (-state.squeezing_db / 10.0)
    var_p = SNL_VARIANCE * 10.0 ** (+state.antisqueezing_db / 10.0)
    return var_q, var_p


@dataclass(frozen=True)
class DiscretizationGrid:
    """Coarse-grained measurement grid: bin width, bit depth and range.

    The range defaults to ``+-2^(adc_bits-1) * delta`` so that ``delta`` and
    ``adc_bits`` jointly determine it and ``delta == 2 * adc_range / 2^adc_bits``
    holds exactly.
    """

    delta: float = DEFAULT_DELTA
    adc_bits: int = DEFAULT_ADC_BITS
    adc_range: float = field(default=0.0)

    def __post_init__(self) -> None:
        if self.delta <= 0:
            raise ValueError("delta must be > 0")
        if self.adc_bits < 1 or self.adc_bits > 16:
            raise ValueError("adc_bits must be in [1, 16]")
        if self.adc_range == 0.0:
            object.__setattr__(self, "adc_range", 2.0 ** (self.adc_bits - 1) * self.delta)
        expected = 2.0 * self.adc_range / 2.0 ** self.adc_bits
        if not np.isclose(self.delta, expected, rtol=1e-9, atol=0.0):
            raise ValueError("delta must equal 2 * adc_range / 2^adc_bits")

    @property
    def bin_count(self) -> int:
        return 2 ** self.adc_bits

    @property
    def min_index(self) -> int:
        return -(2 ** (self.adc_bits - 1))

    @property
    def max_index(self) -> int:
        return 2 ** (self.adc_bits - 1) - 1

    def effective(self, bits: int) -> "DiscretizationGrid":
        """Same range re-partitioned at a coarser bit depth."""
        if not 1 <= bits <= self.adc_bits:
            raise ValueError("effective bit depth must be in [1, adc_bits]")
        return DiscretizationGrid(
            delta=2.0 * self.adc_range / 2.0 ** bits,
            adc_bits=bits,
            adc_range=self.adc_range,
        )


def bin_index(value, grid: DiscretizationGrid):
    """Map quadrature outcomes to signed bin indices with saturation flags.

    ``index = floor(value / delta)`` clamped to ``[-2^(bits-1), 2^(bits-1)-1]``;
    ``saturated`` is True exactly where clamping occurred.  Accepts scalars or
    arrays and is total (never raises on finite input).
    """
    raw = np.floor(np.asarray(value, dtype=np.float64) / grid.delta).astype(np.int64)
    lo, hi = grid.min_index, grid.max_index
    saturated = (raw < lo) | (raw > hi)
    index = np.clip(raw, lo, hi)
    if np.isscalar(value) or np.ndim(value) == 0:
        return int(index), bool(saturated)
    return index, saturated


def gaussian_bin_probs(var: float, delta: float) -> tuple[np.ndarray, np.ndarray]:
    """Exact masses of a zero-mean Gaussian over the bins ``(k*delta, (k+1)*delta]``.

    Returns ``(k, p)`` covering every bin with mass above float underflow
    (the truncation at 14 sigma leaves < 1e-43 outside).  This is the
    analytic companion of :func:`bin_index` used by entropy calculations and
    as the distribution oracle in tests.
    """
    if var <= 0 or delta <= 0:
        raise ValueError("var and delta must be > 0")
    sigma = float(np.sqrt(var))
    kmax = int(np.ceil(14.0 * sigma / delta)) + 2
    edges = np.arange(-kmax, kmax + 1, dtype=np.float64) * delta
    cdf = 0.5 * (1.0 + erf(edges / (sigma * np.sqrt(2.0))))
    p = np.diff(cdf)
    k = np.arange(-kmax, kmax, dtype=np.int64)
    keep = p > 0.0
    return k[keep], p[keep]


@dataclass
class SampleBlock:
    """Tagged stream of digitized quadrature outcomes.

    Arrays are stored read-only; blocks are safe to share across threads.
    """

    indices: np.ndarray          # int16 signed bin indices
    kinds: np.ndarray            # uint8 SlotKind values
    saturated: np.ndarray        # bool
    grid: DiscretizationGrid
    sample_rate_hz: float

    def __post_init__(self) -> None:
        self.indices = np.asarray(self.indices, dtype=np.int16)
        self.kinds = np.asarray(self.kinds, dtype=np.uint8)
        self.saturated = np.asarray(self.saturated, dtype=bool)
        if not (len(self.indices) == len(self.kinds) == len(self.saturated)):
            raise ValueError("indices, kinds and saturated must have equal length")
        for arr in (self.indices, self.kinds, self.saturated):
            arr.flags.writeable = False

    def __len__(self) -> int:
        return len(self.indices)

    def count(self, kind: SlotKind) -> int:
        return int(np.count_nonzero(self.kinds == int(kind)))

    @property
    def saturation_fraction(self) -> float:
        return float(np.count_nonzero(self.saturated)) / max(len(self), 1)

    def bin_indices(self, kind: SlotKind, include_saturated: bool = False) -> np.ndarray:
        sel = self.kinds == int(kind)
        if not include_saturated:
            sel &= ~self.saturated
        return self.indices[sel].astype(np.int64)

    def values(self, kind: SlotKind, include_saturated: bool = False) -> np.ndarray:
        """Mid-bin reconstruction ``(k + 1/2) * delta`` of the selected slots."""
        k = self.bin_indices(kind, include_saturated)
        return (k + 0.5) * self.grid.delta


@dataclass(frozen=True)
class NoiseBudget:
    """Measured total variances and their decomposition into shot noise,
    LO-fluctuation noise and electronic noise (all phase-space units).

    ``var_total_vac = var_snl + var_lo + var_electronic`` holds by
    construction when produced by the calibration operation, and likewise for
    the squeezed and anti-squeezed totals with the state variances.
    """

    var_total_vac: float
    var_total_squ: float
    var_total_ant: float
    var_electronic: float
    var_lo: float

    def __post_init__(self) -> None:
        fields = (self.var_total_vac, self.var_total_squ, self.var_total_ant,
                  self.var_electronic, self.var_lo)
        if any(v < 0 for v in fields):
            raise ValueError("noise budget entries must be >= 0")
        untrusted = self.var_electronic + self.var_lo
        for total in (self.var_total_vac, self.var_total_squ, self.var_total_ant):
            if total < untrusted:
                raise ValueError("total variance below electronic + LO noise (unphysical)")

    @property
    def var_snl(self) -> float:
        return self.var_total_vac - self.var_electronic - self.var_lo

    @property
    def var_squ(self) -> float:
        return self.var_total_squ - self.var_electronic - self.var_lo

    @property
    def var_ant(self) -> float:
        return self.var_total_ant - self.var_electronic - self.var_lo

    @property
    def electronic_fraction(self) -> float:
        """Electronic share of the measured vacuum noise."""
        return self.var_electronic / self.var_total_vac

    @property
    def lo_fraction(self) -> float:
        """LO-fluctuation share of the measured vacuum noise."""
        return self.var_lo / self.var_total_vac


@dataclass(frozen=True)
class EntropyReport:
    """Outcome of the security calculus for one certification grid."""

    h_max: float            # max-entropy of the check quadrature (bits)
    h_min_plain: float      # plain min-entropy of the data distribution (bits)
    c_incompat: float       # incompatibility of the two binned quadratures
    delta_term: float       # finite-size correction Delta (bits * sqrt(samples))
    h_low_smooth: float     # certified smooth min-entropy lower bound (bits/sample)
    epsilon: float          # smoothing security parameter
    n_check: int
    n_data: int

    def __post_init__(self) -> None:
        if not 0.0 < self.epsilon < 1.0:
            raise ValueError("epsilon must be in (0, 1)")
        if self.h_low_smooth > -np.log2(self.c_incompat) - self.h_max + 1e-9:
            raise ValueError("h_low_smooth may not exceed the asymptotic bound")
