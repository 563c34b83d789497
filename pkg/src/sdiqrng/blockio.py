"""Binary sample-block files.

Byte layout (all little-endian)::

    offset  size  field
    0       4     magic b"QSB1"
    4       2     format version (uint16, currently 1)
    6       2     adc_bits (uint16)
    8       8     delta (float64)
    16      8     adc_range (float64)
    24      8     sample_rate_hz (float64)
    32      8     n_samples (uint64)
    40      2*n   bin indices (int16)
    40+2n   n     slot tags (uint8): bits 0-1 = SlotKind, bit 2 = saturated

The header carries the full grid so a block file is self-describing for
cross-tool use.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .core import DiscretizationGrid, SampleBlock

MAGIC = b"QSB1"
VERSION = 1
_HEADER = struct.Struct("<4sHHdddQ")
_SATURATED_BIT = 0x04
_KIND_MASK = 0x03


def write_sample_block(path: str | Path, block: SampleBlock) -> None:
    header = _HEADER.pack(MAGIC, VERSION, block.grid.adc_bits, block.grid.delta,
                          block.grid.adc_range, block.sample_rate_hz, len(block))
    tags = block.kinds.astype(np.uint8) & _KIND_MASK
    tags = tags | (block.saturated.astype(np.uint8) << 2)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(block.indices.astype("<i2").tobytes())
        fh.write(tags.tobytes())


def read_sample_block(path: str | Path) -> SampleBlock:
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise ValueError(f"{path}: truncated sample-block file")
    magic, version, adc_bits, delta, adc_range, rate, n = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise ValueError(f"{path}: not a sample-block file (bad magic)")
    if version != VERSION:
        raise ValueError(f"{path}: unsupported format version {version}")
    need = _HEADER.size + 3 * n
    if len(raw) != need:
        raise ValueError(f"{path}: expected {need} bytes, found {len(raw)}")
    off = _HEADER.size
    indices = np.frombuffer(raw, dtype="<i2", count=n, offset=off).astype(np.int16)
    tags = np.frombuffer(raw, dtype=np.uint8, count=n, offset=off + 2 * n)
    grid = DiscretizationGrid(delta=delta, adc_bits=adc_bits, adc_range=adc_range)
    return SampleBlock(
        indices=indices,
        kinds=tags & _KIND_MASK,
        saturated=(tags & _SATURATED_BIT) != 0,
        grid=grid,
        sample_rate_hz=rate,
    )
