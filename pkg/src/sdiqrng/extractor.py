"""Seeded Toeplitz-hashing privacy amplification.

A Toeplitz matrix over GF(2) with ``m_out`` rows and ``n_in`` columns is
defined by a seed of ``n_in + m_out - 1`` bits: entry ``(i, j)`` is
``seed[i - j + n_in - 1]`` (constant along diagonals).  ``toeplitz_naive``
is the bit-exact definitional oracle; ``toeplitz_fast`` computes the same
map through a transform-based GF(2) polynomial product and must agree bit
for bit.

Output-length accounting follows the leftover hash lemma:
``m_out = floor(n_samples * h_low - 2 log2(1/eps_hash))``.  The seed is a
reusable public parameter (strong extractor); the desk-scale
``verify_epsilon_security`` check enumerates small instances exhaustively
against the classical statistical-distance bound.

Bit files: packed bits, little-endian within bytes, next to a JSON sidecar
with lengths, digests and the security budget.
"""

from __future__ import annotations

import hashlib
import json
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.fft import next_fast_len, rfft, irfft


class ExtractorSecurityError(AssertionError):
    """Measured statistical distance exceeded the leftover-hash bound."""


@dataclass(frozen=True)
class ToeplitzSpec:
    """Extractor geometry plus the seed bits (first column and first row)."""

    n_in: int
    m_out: int
    seed: np.ndarray

    def __post_init__(self) -> None:
        if self.n_in < 1 or self.m_out < 1 or self.m_out > self.n_in:
            raise ValueError("need 1 <= m_out <= n_in")
        seed = np.asarray(self.seed, dtype=np.uint8)
        if seed.ndim != 1 or len(seed) != self.n_in + self.m_out - 1:
            raise ValueError("seed length must be n_in + m_out - 1")
        if np.any(seed > 1):
            raise ValueError("seed must be a bit array")
        object.__setattr__(self, "seed", seed)
        seed.flags.writeable = False

    @classmethod
    def from_rng(cls, n_in: int, m_out: int, rng) -> "ToeplitzSpec":
        rng = np.random.default_rng(rng)
        seed = rng.integers(0, 2, size=n_in + m_out - 1, dtype=np.uint8)
        return cls(n_in=n_in, m_out=m_out, seed=seed)

    def matrix(self) -> np.ndarray:
        """Dense 0/1 matrix; intended for small instances and tests."""
        i = np.arange(self.m_out)[:, None]
        j = np.arange(self.n_in)[None, :]
        return self.seed[i - j + self.n_in - 1]

    def seed_sha256(self) -> str:
        return hashlib.sha256(np.packbits(self.seed).tobytes()).hexdigest()


def _check_input(input_bits, spec: ToeplitzSpec) -> np.ndarray:
    x = np.asarray(input_bits, dtype=np.uint8)
    if x.ndim != 1 or len(x) != spec.n_in:
        raise ValueError(f"input length {len(x)} != n_in {spec.n_in}")
    if np.any(x > 1):
        raise ValueError("input must be a bit array")
    return x


def toeplitz_naive(input_bits, spec: ToeplitzSpec) -> np.ndarray:
    """Definitional GF(2) matrix-vector product (the oracle implementation).

    Row i of the matrix is ``seed[i : i + n_in]`` reversed, so the output bit
    is the parity of the AND with the input.
    """
    x = _check_input(input_bits, spec)
    seed_rev = spec.seed[::-1]
    n, L = spec.n_in, len(spec.seed)
    out = np.empty(spec.m_out, dtype=np.uint8)
    for i in range(spec.m_out):
        row = seed_rev[L - n - i: L - i]
        out[i] = np.count_nonzero(row & x) & 1
    return out


def toeplitz_fast(input_bits, spec: ToeplitzSpec) -> np.ndarray:
    """Same map as :func:`toeplitz_naive` via GF(2) polynomial multiplication.

    Output bit i is the coefficient of z^(n_in - 1 + i) in seed(z) * x(z),
    reduced mod 2.  The product is taken with a real FFT; coefficients are
    bounded by n_in, leaving a comfortable exactness margin in float64
    before rounding back to integers.
    """
    x = _check_input(input_bits, spec)
    n, m = spec.n_in, spec.m_out
    size = next_fast_len(len(spec.seed) + n - 1)
    conv = irfft(rfft(spec.seed.astype(np.float64), size)
                 * rfft(x.astype(np.float64), size), size)
    window = conv[n - 1: n - 1 + m]
    rounded = np.rint(window)
    if np.abs(window - rounded).max() > 0.25:
        raise RuntimeError("FFT convolution lost exactness")
    return (rounded.astype(np.int64) & 1).astype(np.uint8)


def benchmark_throughput(n_in: int, m_out: int, seed: int = 0,
                         naive_rows: int = 256) -> dict:
    """Wall-clock comparison of the two implementations at one geometry.

    The naive oracle is linear in output rows, so its full-run time is
    extrapolated from ``naive_rows`` rows; the fast path is timed in full.
    """
    rng = np.random.default_rng(seed)
    spec = ToeplitzSpec.from_rng(n_in, m_out, rng)
    x = rng.integers(0, 2, size=n_in, dtype=np.uint8)

    sub = ToeplitzSpec(n_in=n_in, m_out=naive_rows,
                       seed=spec.seed[: n_in + naive_rows - 1])
    t0 = time.perf_counter()
    toeplitz_naive(x, sub)
    naive_time = (time.perf_counter() - t0) * (m_out / naive_rows)

    t0 = time.perf_counter()
    toeplitz_fast(x, spec)
    fast_time = time.perf_counter() - t0
    return {"n_in": n_in, "m_out": m_out, "naive_seconds_extrapolated": naive_time,
            "fast_seconds": fast_time, "speedup": naive_time / fast_time}


def output_length(n_samples: int, bits_per_sample: int, h_low: float,
                  epsilon_hash: float) -> int:
    """Extractable bits: ``floor(n_samples * h_low - 2 log2(1/eps_hash))``.

    ``bits_per_sample`` bounds the raw input length; the result must stay
    below it for a valid Toeplitz geometry.
    """
    if h_low <= 0:
        raise ValueError("certified entropy must be > 0")
    if not 0.0 < epsilon_hash <= 1.0:
        raise ValueError("epsilon_hash must be in (0, 1]")
    if n_samples < 1 or bits_per_sample < 1:
        raise ValueError("counts must be >= 1")
    m = int(np.floor(n_samples * h_low - 2.0 * np.log2(1.0 / epsilon_hash)))
    if m <= 0:
        raise ValueError("security discount leaves no extractable bits")
    n_in = n_samples * bits_per_sample
    if m > n_in:
        raise ValueError(f"output length {m} exceeds raw input length {n_in}")
    return m


def verify_epsilon_security(n_in: int, m_out: int, source_minentropy: float,
                            max_work: int = 2 ** 26) -> float:
    """Exhaustive desk-scale check of the leftover-hash security bound.

    For a test set of source distributions with min-entropy >= k, enumerate
    every seed and input, and compute the exact statistical distance of
    (output, seed) from (uniform, seed).  Each distance must obey
    ``d <= 0.5 * sqrt(2^(m_out - k))`` (classical specialization); raises
    :class:`ExtractorSecurityError` otherwise and returns the worst distance.
    """
    if n_in > 16 or m_out > 4:
        raise ValueError("instance too large for exhaustive enumeration")
    k = float(source_minentropy)
    if not 0.0 <= k <= n_in:
        raise ValueError("source min-entropy must be in [0, n_in]")
    n_seeds = 2 ** (n_in + m_out - 1)
    n_inputs = 2 ** n_in
    if n_seeds * n_inputs > max_work:
        raise ValueError("instance too large for exhaustive enumeration")

    # all inputs as bit rows, MSB first
    inputs = ((np.arange(n_inputs)[:, None] >> np.arange(n_in - 1, -1, -1)) & 1
              ).astype(np.uint8)

    sources = _source_test_set(n_inputs, k)
    bound = 0.5 * np.sqrt(2.0 ** (m_out - k))
    out_weight = 1 << np.arange(m_out - 1, -1, -1)
    worst = 0.0
    for p in sources:
        dist_sum = 0.0
        for s in range(n_seeds):
            seed = ((s >> np.arange(n_in + m_out - 2, -1, -1)) & 1).astype(np.uint8)
            spec = ToeplitzSpec(n_in=n_in, m_out=m_out, seed=seed)
            y = (inputs @ spec.matrix().T.astype(np.int64)) & 1
            yidx = y @ out_weight
            q = np.bincount(yidx, weights=p, minlength=2 ** m_out)
            dist_sum += 0.5 * np.abs(q - 2.0 ** -m_out).sum()
        d = dist_sum / n_seeds
        worst = max(worst, d)
        if d > bound + 1e-12:
            raise ExtractorSecurityError(
                f"distance {d:.6g} exceeds leftover-hash bound {bound:.6g}")
    return worst


def _source_test_set(n_inputs: int, k: float) -> list[np.ndarray]:
    """Distributions over ``n_inputs`` outcomes with min-entropy >= k."""
    sources = [np.full(n_inputs, 1.0 / n_inputs)]
    support = int(np.ceil(2.0 ** k))
    if support < n_inputs:
        flat = np.zeros(n_inputs)
        flat[:support] = 1.0 / support          # flat source on a subset
        sources.append(flat)
        spread = np.zeros(n_inputs)
        pmax = 2.0 ** -k
        spread[0] = pmax                         # one max-probability atom,
        spread[1:] = (1.0 - pmax) / (n_inputs - 1)  # remainder spread thin
        if spread[1] <= pmax:
            sources.append(spread)
    return sources


# -- symbol packing and bit files --------------------------------------------

def pack_symbols(symbols: np.ndarray, bits_per_symbol: int) -> np.ndarray:
    """Serialize unsigned symbols into a bit array, MSB first per symbol."""
    symbols = np.asarray(symbols)
    if np.any(symbols < 0) or np.any(symbols >= 1 << bits_per_symbol):
        raise ValueError("symbol out of range for the given bit depth")
    shifts = np.arange(bits_per_symbol - 1, -1, -1)
    return ((symbols[:, None] >> shifts) & 1).astype(np.uint8).reshape(-1)


def bits_sha256(bits: np.ndarray) -> str:
    return hashlib.sha256(np.packbits(bits, bitorder="little").tobytes()).hexdigest()


def write_bit_file(path: str | Path, bits: np.ndarray, metadata: dict) -> dict:
    """Write packed bits plus a JSON sidecar; returns the sidecar contents."""
    path = Path(path)
    bits = np.asarray(bits, dtype=np.uint8)
    path.write_bytes(np.packbits(bits, bitorder="little").tobytes())
    sidecar = dict(metadata)
    sidecar["n_bits"] = int(len(bits))
    sidecar["sha256"] = bits_sha256(bits)
    side_path = path.with_suffix(path.suffix + ".json")
    side_path.write_text(json.dumps(sidecar, indent=2, sort_keys=True) + "\n")
    return sidecar


def read_bit_file(path: str | Path) -> tuple[np.ndarray, dict]:
    path = Path(path)
    sidecar = json.loads(path.with_suffix(path.suffix + ".json").read_text())
    packed = np.frombuffer(path.read_bytes(), dtype=np.uint8)
    bits = np.unpackbits(packed, bitorder="little")[: sidecar["n_bits"]]
    if bits_sha256(bits) != sidecar["sha256"]:
        raise ValueError(f"{path}: bit file does not match its sidecar digest")
    return bits, sidecar
