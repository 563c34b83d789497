"""Randomness validation battery (NIST SP 800-22 style subset).

Nine tests: monobit frequency, block frequency, runs, longest run of ones,
binary matrix rank, discrete Fourier (spectral), cumulative sums,
approximate entropy and serial.  Statistics and reference distributions
follow the SP 800-22 definitions with the standard parameter defaults
(block frequency M=128, rank 32x32 matrices, ApEn m=10) with two
deviations: the serial block length is reduced to m=5 at desk scale, and
the spectral test uses the corrected variance denominator 3.8 in place of
the original 4, which measurably improves its calibration at alpha=0.01.

Where a category produces several p-values (cumulative sums, serial), the
reported p-value is the smallest; the individual parts stay available on
the result.  A test passes at significance ``alpha`` iff its reported
p-value is >= alpha.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import erfc, gammaincc
from scipy.stats import norm

__all__ = [
    "TestResult", "BatteryReport", "run_battery",
    "monobit", "block_frequency", "runs_test", "longest_run_of_ones",
    "binary_matrix_rank", "spectral", "cumulative_sums",
    "approximate_entropy", "serial",
]


def _as_bits(bits) -> np.ndarray:
    b = np.asarray(bits, dtype=np.uint8)
    if b.ndim != 1 or np.any(b > 1):
        raise ValueError("input must be a 1-D array of 0/1 bits")
    return b


def monobit(bits) -> tuple[float, float]:
    b = _as_bits(bits)
    n = len(b)
    if n < 100:
        raise ValueError("monobit test needs n >= 100")
    s = abs(2.0 * np.count_nonzero(b) - n) / math.sqrt(n)
    return s, float(erfc(s / math.sqrt(2.0)))


def block_frequency(bits, block_len: int = 128) -> tuple[float, float]:
    b = _as_bits(bits)
    n_blocks = len(b) // block_len
    if n_blocks < 1:
        raise ValueError("block frequency test needs at least one full block")
    pi = b[: n_blocks * block_len].reshape(n_blocks, block_len).mean(axis=1)
    chi2 = 4.0 * block_len * np.square(pi - 0.5).sum()
    return float(chi2), float(gammaincc(n_blocks / 2.0, chi2 / 2.0))


def runs_test(bits) -> tuple[float, float]:
    b = _as_bits(bits)
    n = len(b)
    if n < 100:
        raise ValueError("runs test needs n >= 100")
    pi = np.count_nonzero(b) / n
    if abs(pi - 0.5) >= 2.0 / math.sqrt(n):
        return float("inf"), 0.0   # frequency precondition failed
    v = 1 + int(np.count_nonzero(np.diff(b)))
    num = abs(v - 2.0 * n * pi * (1.0 - pi))
    den = 2.0 * math.sqrt(2.0 * n) * pi * (1.0 - pi)
    return float(v), float(erfc(num / den))


_LONGEST_RUN_TABLES = (
    # (min_n, block_len, class_edges, class_probabilities)
    (750000, 10000, (10, 11, 12, 13, 14, 15),
     (0.0882, 0.2092, 0.2483, 0.1933, 0.1208, 0.0675, 0.0727)),
    (6272, 128, (4, 5, 6, 7, 8),
     (0.1174, 0.2430, 0.2493, 0.1752, 0.1027, 0.1124)),
    (128, 8, (1, 2, 3),
     (0.2148, 0.3672, 0.2305, 0.1875)),
)


def longest_run_of_ones(bits) -> tuple[float, float]:
    b = _as_bits(bits)
    n = len(b)
    for min_n, block_len, edges, probs in _LONGEST_RUN_TABLES:
        if n >= min_n:
            break
    else:
        raise ValueError("longest-run test needs n >= 128")
    n_blocks = n // block_len
    blocks = b[: n_blocks * block_len].reshape(n_blocks, block_len)
    run = np.zeros(n_blocks, dtype=np.int64)
    longest = np.zeros(n_blocks, dtype=np.int64)
    for col in range(block_len):
        run = (run + 1) * blocks[:, col]
        np.maximum(longest, run, out=longest)
    # classes: <= edges[0], each intermediate value, >= edges[-1] + 1
    clipped = np.clip(longest, edges[0], edges[-1] + 1)
    v = np.bincount(clipped - edges[0], minlength=len(probs))
    expected = n_blocks * np.asarray(probs)
    chi2 = float((np.square(v - expected) / expected).sum())
    return chi2, float(gammaincc((len(probs) - 1) / 2.0, chi2 / 2.0))


def _gf2_rank_32(rows: list[int]) -> int:
    rank = 0
    for bit in range(31, -1, -1):
        mask = 1 << bit
        pivot = next((i for i in range(rank, len(rows)) if rows[i] & mask), None)
        if pivot is None:
            continue
        rows[rank], rows[pivot] = rows[pivot], rows[rank]
        for i in range(len(rows)):
            if i != rank and rows[i] & mask:
                rows[i] ^= rows[rank]
        rank += 1
    return rank


def binary_matrix_rank(bits, size: int = 32) -> tuple[float, float]:
    b = _as_bits(bits)
    per = size * size
    n_mat = len(b) // per
    if n_mat < 38:
        raise ValueError("matrix rank test needs at least 38 full matrices")
    words = np.packbits(b[: n_mat * per].reshape(n_mat * size, size), axis=1)
    words = words.astype(np.uint32)
    row_ints = (words[:, 0] << 24) | (words[:, 1] << 16) | (words[:, 2] << 8) | words[:, 3]
    row_ints = row_ints.reshape(n_mat, size)
    full = fullm1 = 0
    for m in range(n_mat):
        r = _gf2_rank_32([int(x) for x in row_ints[m]])
        if r == size:
            full += 1
        elif r == size - 1:
            fullm1 += 1
    rest = n_mat - full - fullm1
    probs = np.array([0.2888, 0.5776, 0.1336])
    counts = np.array([full, fullm1, rest])
    expected = n_mat * probs
    chi2 = float((np.square(counts - expected) / expected).sum())
    return chi2, float(math.exp(-chi2 / 2.0))


def spectral(bits) -> tuple[float, float]:
    b = _as_bits(bits)
    n = len(b)
    if n < 1000:
        raise ValueError("spectral test needs n >= 1000")
    x = 2.0 * b.astype(np.float64) - 1.0
    mags = np.abs(np.fft.rfft(x))[: n // 2]
    threshold = math.sqrt(math.log(1.0 / 0.05) * n)
    n1 = int(np.count_nonzero(mags < threshold))
    n0 = 0.95 * n / 2.0
    d = (n1 - n0) / math.sqrt(n * 0.95 * 0.05 / 3.8)
    return float(d), float(erfc(abs(d) / math.sqrt(2.0)))


def cumulative_sums(bits) -> tuple[float, tuple[float, float]]:
    b = _as_bits(bits)
    n = len(b)
    if n < 100:
        raise ValueError("cumulative sums test needs n >= 100")
    x = 2.0 * b.astype(np.int64) - 1

    def one_mode(xs: np.ndarray) -> float:
        z = int(np.abs(np.cumsum(xs)).max())
        if z == 0:
            return 0.0
        sn = math.sqrt(n)
        k1 = np.arange(math.floor((-n / z + 1) / 4), math.floor((n / z - 1) / 4) + 1)
        k2 = np.arange(math.floor((-n / z - 3) / 4), math.floor((n / z - 1) / 4) + 1)
        p = (1.0
             - (norm.cdf((4 * k1 + 1) * z / sn) - norm.cdf((4 * k1 - 1) * z / sn)).sum()
             + (norm.cdf((4 * k2 + 3) * z / sn) - norm.cdf((4 * k2 + 1) * z / sn)).sum())
        return float(min(max(p, 0.0), 1.0))

    p_fwd = one_mode(x)
    p_bwd = one_mode(x[::-1])
    stat = float(np.abs(np.cumsum(x)).max())
    return stat, (p_fwd, p_bwd)


def _pattern_counts(b: np.ndarray, m: int) -> np.ndarray:
    """Counts of overlapping m-bit patterns with wrap-around augmentation."""
    aug = np.concatenate([b, b[: m - 1]]) if m > 1 else b
    windows = np.lib.stride_tricks.sliding_window_view(aug, m)
    weights = (1 << np.arange(m - 1, -1, -1)).astype(np.int64)
    vals = windows @ weights
    return np.bincount(vals, minlength=1 << m)


def approximate_entropy(bits, m: int = 10) -> tuple[float, float]:
    b = _as_bits(bits)
    n = len(b)
    if n < 1 << (m + 5):
        raise ValueError("approximate entropy test needs a longer sequence")

    def phi(mm: int) -> float:
        c = _pattern_counts(b, mm) / n
        c = c[c > 0]
        return float((c * np.log(c)).sum())

    apen = phi(m) - phi(m + 1)
    chi2 = 2.0 * n * (math.log(2.0) - apen)
    return float(chi2), float(gammaincc(2 ** (m - 1), chi2 / 2.0))


def serial(bits, m: int = 5) -> tuple[float, tuple[float, float]]:
    b = _as_bits(bits)
    n = len(b)
    if n < 1 << (m + 5):
        raise ValueError("serial test needs a longer sequence")

    def psi2(mm: int) -> float:
        if mm <= 0:
            return 0.0
        counts = _pattern_counts(b, mm)
        return float((1 << mm) / n * np.square(counts.astype(np.float64)).sum() - n)

    d1 = psi2(m) - psi2(m - 1)
    d2 = psi2(m) - 2.0 * psi2(m - 1) + psi2(m - 2)
    p1 = float(gammaincc(2 ** (m - 2), d1 / 2.0))
    p2 = float(gammaincc(2 ** (m - 3), d2 / 2.0))
    return float(d1), (p1, p2)


@dataclass(frozen=True)
class TestResult:
    name: str
    statistic: float
    p_value: float              # reported (smallest of the category)
    passed: bool
    parts: tuple[float, ...] = field(default_factory=tuple)


@dataclass(frozen=True)
class BatteryReport:
    results: tuple[TestResult, ...]
    alpha: float
    n_bits: int

    @property
    def all_passed(self) -> bool:
        return all(r.passed for r in self.results)

    def to_csv(self) -> str:
        lines = ["test,statistic,p_value,verdict"]
        for r in self.results:
            lines.append(f"{r.name},{r.statistic:.6g},{r.p_value:.6g},"
                         f"{'pass' if r.passed else 'fail'}")
        return "\n".join(lines) + "\n"

    def write_csv(self, path: str | Path) -> None:
        Path(path).write_text(self.to_csv())

    def format_text(self) -> str:
        lines = [f"statistical battery: n_bits={self.n_bits} alpha={self.alpha}"]
        for r in self.results:
            lines.append(f"  {r.name:<22} p={r.p_value:<12.6g} "
                         f"{'pass' if r.passed else 'FAIL'}")
        lines.append(f"  overall: {'pass' if self.all_passed else 'FAIL'}")
        return "\n".join(lines) + "\n"


# (callable, minimum stream length) in fixed report order
_BATTERY = (
    ("monobit", monobit, 100),
    ("block_frequency", block_frequency, 12800),
    ("runs", runs_test, 100),
    ("longest_run_of_ones", longest_run_of_ones, 128),
    ("binary_matrix_rank", binary_matrix_rank, 38 * 1024),
    ("spectral", spectral, 1000),
    ("cumulative_sums", cumulative_sums, 100),
    ("approximate_entropy", approximate_entropy, 1 << 15),
    ("serial", serial, 1 << 10),
)

FULL_BATTERY_MIN_BITS = 1_000_000


def run_battery(bits, alpha: float = 0.01) -> BatteryReport:
    """Run every test the stream is long enough for, in fixed order.

    Streams of >= 1e6 bits exercise the full battery; shorter inputs run the
    subset whose length requirements they meet.  Raises on streams too short
    for any test.
    """
    b = _as_bits(bits)
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must be in (0, 1)")
    results = []
    for name, fn, min_len in _BATTERY:
        if len(b) < min_len:
            continue
        stat, p = fn(b)
        parts = p if isinstance(p, tuple) else (p,)
        reported = min(parts)
        results.append(TestResult(name=name, statistic=stat, p_value=reported,
                                  passed=reported >= alpha, parts=parts))
    if not results:
        raise ValueError("insufficient data for every test in the battery")
    return BatteryReport(results=tuple(results), alpha=alpha, n_bits=len(b))
