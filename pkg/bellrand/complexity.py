"""
Complexity and entropy estimators

The Lempel-Ziv (1976) phrase count follows the Kaspar-Schuster
exhaustive-history parse: a phrase is the longest prefix of the
remaining input that already starts somewhere earlier (overlap allowed)
plus one new symbol.  Phrase lengths come from the longest-previous-factor
array, computed from a suffix array so long series stay near linear time.

"""
from __future__ import annotations

import dataclasses
import logging
import math
import typing

import numba
import numpy as np
from scipy import special

from bellrand import errors, models

LOGGER = logging.getLogger(__name__)

HURST_MIN_LENGTH = 256
HURST_MIN_WINDOW = 16

_SEED_WIDTH = 39  # base-3 digits that fit in an int64


@dataclasses.dataclass(frozen=True)
class ComplexityResult:
    phrase_count: int
    kc: float
    n: int


@dataclasses.dataclass(frozen=True)
class EntropyResult:
    h_min: float
    shannon: float
    max_prob: float


@dataclasses.dataclass(frozen=True)
class HurstResult:
    h: float
    fit_points: typing.List[typing.Tuple[float, float]]
    fit_r2: float
    clamped: bool = False


@dataclasses.dataclass(frozen=True)
class ZurekResult:
    kc: float
    h_min: float
    satisfied: bool


def _dense_rank(keys: np.ndarray) -> typing.Tuple[np.ndarray, np.ndarray]:
    order = np.argsort(keys, kind='stable')
    ordered = keys[order]
    ranks = np.empty(keys.size, dtype=np.int64)
    ranks[order] = np.cumsum(
        np.concatenate(([1], ordered[1:] != ordered[:-1])))
    return ranks, order


def suffix_array(bits: np.ndarray) -> np.ndarray:
    """Prefix-doubling suffix array of a binary sequence"""
    n = bits.size
    symbols = np.zeros(n + _SEED_WIDTH, dtype=np.int64)
    symbols[:n] = bits.astype(np.int64) + 1  # 0 marks end of input
    keys = np.zeros(n, dtype=np.int64)
    for offset in range(_SEED_WIDTH):
        keys = keys * 3 + symbols[offset:offset + n]
    ranks, order = _dense_rank(keys)
    width = _SEED_WIDTH
    while ranks[order[-1]] < n:
        following = np.zeros(n, dtype=np.int64)
        if width < n:
            following[:n - width] = ranks[width:]
        ranks, order = _dense_rank(ranks * (n + 1) + following)
        width *= 2
    return order


@numba.njit(cache=True, nogil=True)
def _lcp_array(bits: np.ndarray, sa: np.ndarray) -> np.ndarray:
    n = sa.size
    rank = np.empty(n, dtype=np.int64)
    for i in range(n):
        rank[sa[i]] = i
    lcp = np.zeros(n, dtype=np.int64)
    h = 0
    for i in range(n):
        if rank[i] > 0:
            j = sa[rank[i] - 1]
            while i + h < n and j + h < n and bits[i + h] == bits[j + h]:
                h += 1
            lcp[rank[i]] = h
            if h > 0:
                h -= 1
        else:
            h = 0
    return lcp


@numba.njit(cache=True, nogil=True)
def _longest_previous_factor(sa: np.ndarray, lcp: np.ndarray) -> np.ndarray:
    # nearest suffix-array neighbours that start earlier in the text, on
    # each side, with the running minimum of lcp between them
    n = sa.size
    big = n + 1
    lpf = np.zeros(n, dtype=np.int64)
    stack = np.empty(n, dtype=np.int64)
    seg = np.empty(n, dtype=np.int64)
    top = 0
    for r in range(n):
        if top > 0:
            seg[top - 1] = min(seg[top - 1], lcp[r])
        while top > 0 and sa[stack[top - 1]] > sa[r]:
            top -= 1
            if top > 0:
                seg[top - 1] = min(seg[top - 1], seg[top])
        if top > 0:
            lpf[sa[r]] = seg[top - 1]
        stack[top] = r
        seg[top] = big
        top += 1
    top = 0
    for r in range(n - 1, -1, -1):
        if top > 0:
            seg[top - 1] = min(seg[top - 1], lcp[r + 1])
        while top > 0 and sa[stack[top - 1]] > sa[r]:
            top -= 1
            if top > 0:
                seg[top - 1] = min(seg[top - 1], seg[top])
        if top > 0 and seg[top - 1] > lpf[sa[r]]:
            lpf[sa[r]] = seg[top - 1]
        stack[top] = r
        seg[top] = big
        top += 1
    return lpf


@numba.njit(cache=True, nogil=True)
def _count_phrases(lpf: np.ndarray) -> int:
    n = lpf.size
    position = 0
    count = 0
    while position < n:
        count += 1
        position += lpf[position] + 1
    return count


def lz76_phrase_count(bits: typing.Union[models.BitSeries, np.ndarray,
                                         str]) -> int:
    """Number of phrases in the LZ76 production parse of ``bits``.

    The final phrase counts even when it ends without a new symbol.

    :raises: :exc:`~bellrand.errors.EmptySeries`

    """
    bits = models.as_bits(bits)
    if not bits.size:
        raise errors.EmptySeries('Cannot parse an empty series')
    sa = suffix_array(bits)
    lcp = _lcp_array(bits, sa)
    return int(_count_phrases(_longest_previous_factor(sa, lcp)))


def kc(bits) -> ComplexityResult:
    """Normalized Kaspar-Schuster complexity ``c * log2(n) / n``.

    Short series may exceed 1.

    """
    bits = models.as_bits(bits)
    if bits.size < 2:
        raise errors.TooShort('Complexity needs at least 2 bits, got %i',
                              bits.size)
    count = lz76_phrase_count(bits)
    return ComplexityResult(count, count * math.log2(bits.size) / bits.size,
                            int(bits.size))


def min_entropy(bits) -> EntropyResult:
    """Per-bit min-entropy and Shannon entropy from symbol frequencies"""
    bits = models.as_bits(bits)
    if not bits.size:
        raise errors.EmptySeries('Cannot compute entropy of an empty series')
    p1 = np.count_nonzero(bits) / bits.size
    max_prob = max(p1, 1.0 - p1)
    shannon = 0.0
    for p in (p1, 1.0 - p1):
        if p > 0:
            shannon -= p * math.log2(p)
    return EntropyResult(0.0 - math.log2(max_prob), min(shannon, 1.0),
                         max_prob)


def chsh_min_entropy_bound(s: float) -> float:
    """Lower bound on per-bit min-entropy certified by a CHSH value"""
    if s > models.MAX_S_CHSH + 1e-12:
        raise errors.OutOfRange('S_CHSH %.6f exceeds 2*sqrt(2)', s)
    if s < 2.0:
        return 0.0
    radicand = max(0.0, 2.0 - s * s / 4.0)
    return 1.0 - math.log2(1.0 + math.sqrt(radicand))


def _expected_rescaled_range(window: int) -> float:
    """Anis-Lloyd expected R/S of an uncorrelated series"""
    total = np.sqrt((window - np.arange(1, window)) /
                    np.arange(1, window)).sum()
    if window <= 340:
        ratio = math.exp(special.gammaln((window - 1) / 2) -
                         special.gammaln(window / 2)) / math.sqrt(math.pi)
    else:
        ratio = 1.0 / math.sqrt(window * math.pi / 2)
    return (window - 0.5) / window * ratio * total


def hurst_exponent(series, corrected: bool = False) -> HurstResult:
    """Rescaled-range Hurst exponent over power-of-two windows from 16 to
    a quarter of the series.

    :param series: bits or real values
    :param corrected: subtract the Anis-Lloyd small-sample expectation
    :raises: :exc:`~bellrand.errors.TooShort`,
        :exc:`~bellrand.errors.DegenerateVariance`

    """
    if isinstance(series, models.BitSeries):
        series = series.bits
    values = np.asarray(series, dtype=np.float64)
    n = values.size
    if n < HURST_MIN_LENGTH:
        raise errors.TooShort('Hurst analysis needs %i samples, got %i',
                              HURST_MIN_LENGTH, n)
    if np.ptp(values) == 0:
        raise errors.DegenerateVariance('Series is constant')

    windows, rescaled = [], []
    window = HURST_MIN_WINDOW
    while window <= n // 4:
        blocks = values[:n // window * window].reshape(-1, window)
        deviations = np.cumsum(
            blocks - blocks.mean(axis=1, keepdims=True), axis=1)
        ranges = deviations.max(axis=1) - deviations.min(axis=1)
        scales = blocks.std(axis=1)
        usable = scales > 0
        if usable.any():
            windows.append(window)
            rescaled.append(float(np.mean(ranges[usable] / scales[usable])))
        window *= 2
    if len(windows) < 2:
        raise errors.DegenerateVariance(
            'Too few windows with non-zero variance')

    x = np.log2(windows)
    y = np.log2(rescaled)
    design = np.vstack([x, np.ones_like(x)]).T
    (slope, intercept), *_ = np.linalg.lstsq(design, y, rcond=None)
    fitted = design @ np.array([slope, intercept])
    total = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum((y - fitted) ** 2)) / total if total else 1.0
    h = float(slope)
    if corrected:
        expected = np.log2([_expected_rescaled_range(w) for w in windows])
        h = 0.5 + h - float(np.polyfit(x, expected, 1)[0])
    clamped = not 0.0 <= h <= 1.0
    if clamped:
        LOGGER.debug('Hurst estimate %.4f clamped to [0, 1]', h)
    return HurstResult(float(np.clip(h, 0.0, 1.0)),
                       list(zip(x.tolist(), y.tolist())), r2, clamped)


def zurek_check(bits) -> ZurekResult:
    """Check that complexity is not below the per-bit min-entropy"""
    complexity = kc(bits)
    entropy = min_entropy(bits)
    return ZurekResult(complexity.kc, entropy.h_min,
                       complexity.kc >= entropy.h_min)
