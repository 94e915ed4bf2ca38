"""
Toeplitz hashing over GF(2)

A Toeplitz matrix is fully specified by its ``m + n - 1`` diagonals with
``entry(i, j) = diagonals[i - j + n - 1]``.  Its first row and first
column are taken from the raw series (row first), and the seed vector is
the next ``n`` raw bits.

"""
from __future__ import annotations

import dataclasses
import logging
import typing

import numpy as np
from numpy.lib import stride_tricks

from bellrand import bits as bitops
from bellrand import errors, models

LOGGER = logging.getLogger(__name__)

DEFAULT_M = 2 ** 14
DEFAULT_N = 2 ** 14
WORD = 64


@dataclasses.dataclass(frozen=True, eq=False)
class ToeplitzMatrix:
    m: int
    n: int
    diagonals: np.ndarray

    def __post_init__(self):
        diagonals = models.as_bits(self.diagonals).copy()
        if self.m < 1 or self.n < 1:
            raise errors.InvalidInput('Matrix dimensions must be positive')
        if diagonals.size != self.m + self.n - 1:
            raise errors.LengthMismatch(
                '%i diagonals supplied for a %ix%i matrix', diagonals.size,
                self.m, self.n)
        diagonals.setflags(write=False)
        object.__setattr__(self, 'diagonals', diagonals)

    def entry(self, i: int, j: int) -> int:
        return int(self.diagonals[i - j + self.n - 1])

    def dense(self) -> np.ndarray:
        rows = np.arange(self.m)[:, None]
        columns = np.arange(self.n)[None, :]
        return self.diagonals[rows - columns + self.n - 1]


def build_toeplitz(raw, m: int = DEFAULT_M, n: int = DEFAULT_N,
                   offset: int = 0) -> typing.Tuple[ToeplitzMatrix, int]:
    """Build a matrix whose first row is ``raw[offset:offset + n]`` and
    whose first column continues with the following ``m - 1`` bits.

    :returns: the matrix and the number of raw bits consumed
    :raises: :exc:`~bellrand.errors.InsufficientBits`

    """
    raw = models.as_bits(raw)
    if m < 1 or n < 1:
        raise errors.InvalidInput('Matrix dimensions must be positive')
    needed = n + m - 1
    if raw.size < offset + needed:
        raise errors.InsufficientBits(
            '%i bits needed from offset %i, only %i available', needed,
            offset, raw.size)
    diagonals = np.empty(needed, dtype=np.uint8)
    diagonals[:n] = raw[offset:offset + n][::-1]
    diagonals[n:] = raw[offset + n:offset + needed]
    return ToeplitzMatrix(m, n, diagonals), needed


def extract(matrix: ToeplitzMatrix, seed) -> np.ndarray:
    """GF(2) product of ``matrix`` and the seed column.

    Row ``i`` is the parity of ``diagonals[i:i + n]`` AND the reversed
    seed, evaluated 64 rows at a time on packed words.

    :raises: :exc:`~bellrand.errors.LengthMismatch`

    """
    seed = models.as_bits(seed)
    m, n = matrix.m, matrix.n
    if seed.size != n:
        raise errors.LengthMismatch('Seed has %i bits, matrix needs %i',
                                    seed.size, n)
    reversed_seed = bitops.pack_words(seed[::-1])
    width = reversed_seed.size
    blocks = -(-m // WORD)
    words = np.zeros(blocks + width + 2, dtype=np.uint64)
    packed = bitops.pack_words(matrix.diagonals)
    words[:packed.size] = packed

    output = np.zeros(m, dtype=np.uint8)
    for shift in range(min(WORD, m)):
        rows = np.arange(shift, m, WORD)
        if shift:
            shifted = (words[:-1] >> np.uint64(shift)) | (
                words[1:] << np.uint64(WORD - shift))
        else:
            shifted = words[:-1]
        windows = stride_tricks.sliding_window_view(
            shifted, width)[:rows.size]
        folded = np.bitwise_xor.reduce(windows & reversed_seed, axis=1)
        output[rows] = (bitops.popcount64(folded) & np.uint64(1)).astype(
            np.uint8)
    return output


def extract_series(raw: typing.Union[models.BitSeries, np.ndarray],
                   m: int = DEFAULT_M, n: int = DEFAULT_N,
                   freeze_matrix: bool = False) -> models.BitSeries:
    """Hash a raw series block by block.

    Each block builds a matrix from ``n + m - 1`` bits and uses the next
    ``n`` bits as seed, consuming ``2n + m - 1`` bits.  With
    ``freeze_matrix`` the first matrix is reused and later blocks only
    consume a seed.

    :raises: :exc:`~bellrand.errors.InsufficientBits`

    """
    provenance = raw.provenance if isinstance(raw, models.BitSeries) \
        else models.UNKNOWN_PROVENANCE
    values = models.as_bits(raw)
    block = 2 * n + m - 1
    if values.size < block:
        raise errors.InsufficientBits(
            'Extraction needs %i bits per block, only %i available', block,
            values.size)
    outputs, offset, matrix = [], 0, None
    while True:
        if matrix is None or not freeze_matrix:
            if values.size - offset < block:
                break
            matrix, used = build_toeplitz(values, m, n, offset)
            offset += used
        elif values.size - offset < n:
            break
        outputs.append(extract(matrix, values[offset:offset + n]))
        offset += n
    LOGGER.debug('Extracted %i blocks of %i bits using %i of %i raw bits',
                 len(outputs), m, offset, values.size)
    return models.BitSeries(np.concatenate(outputs), dataclasses.replace(
        provenance, extracted=True))
