"""
Statistical test battery

Nine tests from the NIST SP 800-22 suite.  A series is rejected when at
least one *applicable* test yields a p-value below ``alpha``; tests whose
input-size recommendations are not met are reported as not applicable
and do not take part in the decision.  Every test accepts ``force=True``
to bypass the size gates, which is only meant for checking reference
vectors on tiny inputs.

"""
from __future__ import annotations

import dataclasses
import functools
import logging
import math
import typing

import numba
import numpy as np
from scipy import fft, special

from bellrand import errors, models

LOGGER = logging.getLogger(__name__)

DEFAULT_ALPHA = 0.01
DEFAULT_BLOCK_LEN = 128
DEFAULT_TEMPLATE_LEN = 9
TEMPLATE_BLOCKS = 8

MIN_LENGTH = {
    'frequency': 100,
    'block_frequency': 100,
    'runs': 100,
    'longest_run': 128,
    'non_overlapping_template': 100_000,
    'cumulative_sums': 100,
    'dft': 1000,
}

# (block length, class upper bounds, class probabilities)
_LONGEST_RUN_TABLES = (
    (6272, 8, (1, 2, 3), (0.2148, 0.3672, 0.2305, 0.1875)),
    (750_000, 128, (4, 5, 6, 7, 8),
     (0.1174, 0.2430, 0.2493, 0.1752, 0.1027, 0.1124)),
    (None, 10_000, (10, 11, 12, 13, 14, 15),
     (0.0882, 0.2092, 0.2483, 0.1933, 0.1208, 0.0675, 0.0727)),
)

Bits = typing.Union[models.BitSeries, np.ndarray, str, typing.Sequence[int]]


@dataclasses.dataclass
class TestResult:
    test_name: str
    p_values: typing.List[float]
    applicable: bool
    passed: typing.Optional[bool]
    detail: str = ''
    statistic: typing.Optional[float] = None

    __test__ = False

    def as_dict(self) -> dict:
        return {'test': self.test_name,
                'p_values': self.p_values,
                'applicable': self.applicable,
                'pass': self.passed,
                'detail': self.detail,
                'statistic': self.statistic}


@dataclasses.dataclass
class BatteryReport:
    results: typing.List[TestResult]
    alpha: float
    series_length: int

    @property
    def rejected(self) -> bool:
        return any(r.applicable and not r.passed for r in self.results)

    @property
    def failures(self) -> typing.List[str]:
        return [r.test_name for r in self.results
                if r.applicable and not r.passed]

    def as_dict(self) -> dict:
        return {'alpha': self.alpha,
                'rejected': self.rejected,
                'series_length': self.series_length,
                'tests': [r.as_dict() for r in self.results]}


def _not_applicable(name: str, reason: str, *args) -> TestResult:
    return TestResult(name, [], False, None, reason % args if args else reason)


def _result(name: str, p_values: typing.Sequence[float], alpha: float,
            statistic: typing.Optional[float] = None,
            detail: str = '') -> TestResult:
    p_values = [float(np.clip(p, 0.0, 1.0)) for p in p_values]
    return TestResult(name, p_values, True, all(p >= alpha for p in p_values),
                      detail, None if statistic is None else float(statistic))


def _too_short(name: str, n: int, force: bool) -> typing.Optional[TestResult]:
    if not force and n < MIN_LENGTH[name]:
        return _not_applicable(name, 'requires n >= %i, got %i',
                               MIN_LENGTH[name], n)
    return None


def test_frequency(bits: Bits, alpha: float = DEFAULT_ALPHA,
                   force: bool = False) -> TestResult:
    """Balance of zeros and ones"""
    bits = models.as_bits(bits)
    n = bits.size
    gate = _too_short('frequency', n, force)
    if gate or not n:
        return gate or _not_applicable('frequency', 'empty series')
    s_obs = abs(2 * int(np.count_nonzero(bits)) - n) / math.sqrt(n)
    return _result('frequency', [special.erfc(s_obs / math.sqrt(2))],
                   alpha, s_obs)


def test_block_frequency(bits: Bits, block_len: int = DEFAULT_BLOCK_LEN,
                         alpha: float = DEFAULT_ALPHA,
                         force: bool = False) -> TestResult:
    """Proportion of ones within non-overlapping blocks"""
    if block_len < 1:
        raise errors.BadBlockLen('Block length must be positive, got %i',
                                 block_len)
    bits = models.as_bits(bits)
    n = bits.size
    gate = _too_short('block_frequency', n, force)
    if gate:
        return gate
    blocks = n // block_len
    if blocks < 1:
        return _not_applicable('block_frequency',
                               'block length %i exceeds n=%i', block_len, n)
    proportions = bits[:blocks * block_len].reshape(blocks, block_len).mean(
        axis=1)
    chi2 = 4.0 * block_len * float(np.sum((proportions - 0.5) ** 2))
    return _result('block_frequency',
                   [special.gammaincc(blocks / 2, chi2 / 2)], alpha, chi2,
                   f'M={block_len} N={blocks}')


def test_runs(bits: Bits, alpha: float = DEFAULT_ALPHA,
              force: bool = False) -> TestResult:
    """Total number of runs against the count expected for coin flips.

    The frequency prerequisite is part of the test: a series that is too
    unbalanced is failed with ``p = 0``.

    """
    bits = models.as_bits(bits)
    n = bits.size
    gate = _too_short('runs', n, force)
    if gate or not n:
        return gate or _not_applicable('runs', 'empty series')
    pi = np.count_nonzero(bits) / n
    if abs(pi - 0.5) >= 2.0 / math.sqrt(n):
        return _result('runs', [0.0], alpha, None,
                       'frequency prerequisite failed')
    runs = 1 + int(np.count_nonzero(bits[1:] != bits[:-1]))
    expected = 2.0 * n * pi * (1.0 - pi)
    p = special.erfc(abs(runs - expected) /
                     (2.0 * math.sqrt(2.0 * n) * pi * (1.0 - pi)))
    return _result('runs', [p], alpha, runs)


@numba.njit(cache=True)
def _longest_runs(blocks: np.ndarray) -> np.ndarray:
    longest = np.zeros(blocks.shape[0], dtype=np.int64)
    for row in range(blocks.shape[0]):
        current = 0
        best = 0
        for value in blocks[row]:
            if value:
                current += 1
                if current > best:
                    best = current
            else:
                current = 0
        longest[row] = best
    return longest


def test_longest_run(bits: Bits, alpha: float = DEFAULT_ALPHA,
                     force: bool = False) -> TestResult:
    """Longest run of ones within blocks"""
    bits = models.as_bits(bits)
    n = bits.size
    gate = _too_short('longest_run', n, force)
    if gate:
        return gate
    for limit, block_len, bounds, probabilities in _LONGEST_RUN_TABLES:
        if limit is None or n < limit:
            break
    blocks = n // block_len
    if blocks < 1:
        return _not_applicable('longest_run', 'n=%i is below one block', n)
    longest = _longest_runs(
        bits[:blocks * block_len].reshape(blocks, block_len))
    classes = np.searchsorted(np.array(bounds), longest, side='left')
    observed = np.bincount(classes, minlength=len(probabilities))
    expected = blocks * np.array(probabilities)
    chi2 = float(np.sum((observed - expected) ** 2 / expected))
    return _result('longest_run',
                   [special.gammaincc((len(probabilities) - 1) / 2,
                                      chi2 / 2)],
                   alpha, chi2, f'M={block_len} N={blocks}')


def is_aperiodic(template: typing.Sequence[int]) -> bool:
    """True when no proper shift of ``template`` overlaps itself"""
    template = tuple(template)
    return all(template[:len(template) - k] != template[k:]
               for k in range(1, len(template)))


@functools.lru_cache(maxsize=8)
def aperiodic_templates(m: int) -> typing.Tuple[typing.Tuple[int, ...], ...]:
    """All aperiodic templates of length ``m`` in lexicographic order"""
    templates = []
    for value in range(2 ** m):
        template = tuple((value >> (m - 1 - i)) & 1 for i in range(m))
        if is_aperiodic(template):
            templates.append(template)
    return tuple(templates)


def _window_values(bits: np.ndarray, m: int) -> np.ndarray:
    """Integer value of every length-``m`` window, most significant first"""
    count = bits.size - m + 1
    if count <= 0:
        return np.empty(0, dtype=np.int64)
    values = np.zeros(count, dtype=np.int64)
    for offset in range(m):
        values = (values << 1) | bits[offset:offset + count]
    return values


@numba.njit(cache=True)
def _count_skipping(windows: np.ndarray, target: int, m: int) -> int:
    count = 0
    position = 0
    while position < windows.size:
        if windows[position] == target:
            count += 1
            position += m
        else:
            position += 1
    return count


def count_template(bits: Bits, template: typing.Sequence[int]) -> int:
    """Occurrences of ``template`` found by a sliding scan that jumps past
    every match.

    """
    bits = models.as_bits(bits)
    m = len(template)
    target = int(''.join(str(int(b)) for b in template), 2)
    return int(_count_skipping(_window_values(bits, m), target, m))


def test_non_overlapping_template(
        bits: Bits, template_len: int = DEFAULT_TEMPLATE_LEN,
        templates: typing.Optional[
            typing.Sequence[typing.Sequence[int]]] = None,
        alpha: float = DEFAULT_ALPHA, force: bool = False) -> TestResult:
    """Occurrences of aperiodic templates in eight blocks, one p-value per
    template.

    """
    if templates is None:
        templates = aperiodic_templates(template_len)
    else:
        for template in templates:
            if len(template) != template_len or not is_aperiodic(template):
                raise errors.BadTemplateSet(
                    'Template %s is not an aperiodic template of length %i',
                    ''.join(str(int(b)) for b in template), template_len)
    bits = models.as_bits(bits)
    n = bits.size
    name = 'non_overlapping_template'
    gate = _too_short(name, n, force)
    if gate:
        return gate
    m = template_len
    block_len = n // TEMPLATE_BLOCKS
    if block_len < m:
        return _not_applicable(name, 'blocks of %i bits are shorter than '
                               'the template', block_len)
    mean = (block_len - m + 1) / 2 ** m
    variance = block_len * (1 / 2 ** m - (2 * m - 1) / 2 ** (2 * m))
    windows = [_window_values(bits[i * block_len:(i + 1) * block_len], m)
               for i in range(TEMPLATE_BLOCKS)]
    p_values, worst = [], 0.0
    for template in templates:
        target = int(''.join(str(int(b)) for b in template), 2)
        counts = np.array([_count_skipping(w, target, m) for w in windows])
        chi2 = float(np.sum((counts - mean) ** 2) / variance)
        worst = max(worst, chi2)
        p_values.append(special.gammaincc(TEMPLATE_BLOCKS / 2, chi2 / 2))
    return _result(name, p_values, alpha, worst,
                   f'm={m} templates={len(p_values)}')


def _wrapped_counts(bits: np.ndarray, k: int) -> np.ndarray:
    if k <= 0:
        return np.array([bits.size])
    extended = np.concatenate((bits, bits[:k - 1])).astype(np.int64)
    return np.bincount(_window_values(extended, k), minlength=2 ** k)


def _psi_squared(bits: np.ndarray, k: int) -> float:
    if k <= 0:
        return 0.0
    counts = _wrapped_counts(bits, k).astype(np.float64)
    n = bits.size
    return float(2 ** k / n * np.sum(counts * counts) - n)


def default_serial_m(n: int) -> int:
    return max(2, min(16, int(math.floor(math.log2(max(n, 2)))) - 5))


def default_approx_entropy_m(n: int) -> int:
    return max(1, min(10, int(math.floor(math.log2(max(n, 2)))) - 7))


def test_serial(bits: Bits, m: typing.Optional[int] = None,
                alpha: float = DEFAULT_ALPHA,
                force: bool = False) -> TestResult:
    """Frequencies of every overlapping ``m``-bit pattern, with wrap-around.

    :raises: :exc:`~bellrand.errors.BadM`

    """
    bits = models.as_bits(bits)
    n = bits.size
    m = default_serial_m(n) if m is None else m
    if m < 2 or m > n:
        raise errors.BadM('Serial test needs 2 <= m <= n, got m=%i', m)
    if not force and m >= math.floor(math.log2(n)) - 2:
        raise errors.BadM('Serial test needs m < floor(log2 n) - 2, '
                          'got m=%i for n=%i', m, n)
    psi = [_psi_squared(bits, m - k) for k in range(3)]
    delta1 = psi[0] - psi[1]
    delta2 = psi[0] - 2 * psi[1] + psi[2]
    return _result('serial', [special.gammaincc(2 ** (m - 2), delta1 / 2),
                              special.gammaincc(2 ** (m - 3), delta2 / 2)],
                   alpha, delta1, f'm={m}')


def _phi(bits: np.ndarray, k: int) -> float:
    counts = _wrapped_counts(bits, k)
    counts = counts[counts > 0] / bits.size
    return float(np.sum(counts * np.log(counts)))


def test_approx_entropy(bits: Bits, m: typing.Optional[int] = None,
                        alpha: float = DEFAULT_ALPHA,
                        force: bool = False) -> TestResult:
    """Approximate entropy of overlapping ``m`` and ``m+1`` bit patterns.

    :raises: :exc:`~bellrand.errors.BadM`

    """
    bits = models.as_bits(bits)
    n = bits.size
    m = default_approx_entropy_m(n) if m is None else m
    if m < 1 or m >= n:
        raise errors.BadM('Approximate entropy needs 1 <= m < n, got m=%i',
                          m)
    if not force and m >= math.floor(math.log2(n)) - 5:
        raise errors.BadM('Approximate entropy needs m < floor(log2 n) - 5, '
                          'got m=%i for n=%i', m, n)
    apen = _phi(bits, m) - _phi(bits, m + 1)
    chi2 = 2.0 * n * (math.log(2) - apen)
    return _result('approximate_entropy',
                   [special.gammaincc(2 ** (m - 1), chi2 / 2)], alpha, chi2,
                   f'm={m} ApEn={apen:.6f}')


def _cusum_p_value(n: int, z: int) -> float:
    # C-style truncation toward zero for the summation limits
    root = math.sqrt(n)
    first = sum(
        special.ndtr((4 * k + 1) * z / root) -
        special.ndtr((4 * k - 1) * z / root)
        for k in range(int((-n / z + 1) / 4), int((n / z - 1) / 4) + 1))
    second = sum(
        special.ndtr((4 * k + 3) * z / root) -
        special.ndtr((4 * k + 1) * z / root)
        for k in range(int((-n / z - 3) / 4), int((n / z - 1) / 4) + 1))
    return 1.0 - first + second


def test_cusum(bits: Bits, alpha: float = DEFAULT_ALPHA,
               force: bool = False) -> TestResult:
    """Maximal excursion of the +/-1 random walk, forward and backward"""
    bits = models.as_bits(bits)
    n = bits.size
    gate = _too_short('cumulative_sums', n, force)
    if gate or not n:
        return gate or _not_applicable('cumulative_sums', 'empty series')
    steps = 2 * bits.astype(np.int64) - 1
    forward = int(np.max(np.abs(np.cumsum(steps))))
    backward = int(np.max(np.abs(np.cumsum(steps[::-1]))))
    return _result('cumulative_sums',
                   [_cusum_p_value(n, forward), _cusum_p_value(n, backward)],
                   alpha, max(forward, backward))


def test_dft(bits: Bits, alpha: float = DEFAULT_ALPHA,
             force: bool = False) -> TestResult:
    """Spectral peaks above the 95 % threshold, for hidden periodicities"""
    bits = models.as_bits(bits)
    n = bits.size
    gate = _too_short('dft', n, force)
    if gate or n < 2:
        return gate or _not_applicable('dft', 'too short')
    modulus = np.abs(fft.rfft(2.0 * bits - 1.0)[:n // 2])
    threshold = math.sqrt(math.log(1 / 0.05) * n)
    expected = 0.95 * n / 2
    observed = int(np.count_nonzero(modulus < threshold))
    d = (observed - expected) / math.sqrt(n * 0.95 * 0.05 / 4)
    return _result('dft', [special.erfc(abs(d) / math.sqrt(2))], alpha, d)


def _guarded_m(name: str, test: typing.Callable, bits: np.ndarray,
               m: typing.Optional[int], alpha: float,
               force: bool) -> TestResult:
    try:
        return test(bits, m=m, alpha=alpha, force=force)
    except errors.BadM as error:
        return _not_applicable(name, str(error))


def run_battery(bits: Bits, alpha: float = DEFAULT_ALPHA,
                force: bool = False,
                block_len: int = DEFAULT_BLOCK_LEN,
                serial_m: typing.Optional[int] = None,
                approx_entropy_m: typing.Optional[int] = None) \
        -> BatteryReport:
    """Run all nine tests and apply the any-applicable-failure rule.

    :raises: :exc:`~bellrand.errors.EmptySeries`

    """
    bits = models.as_bits(bits)
    if not bits.size:
        raise errors.EmptySeries('Cannot test an empty series')
    results = [
        test_frequency(bits, alpha, force),
        test_block_frequency(bits, block_len, alpha, force),
        test_runs(bits, alpha, force),
        test_longest_run(bits, alpha, force),
        test_non_overlapping_template(bits, alpha=alpha, force=force),
        _guarded_m('serial', test_serial, bits, serial_m, alpha, force),
        _guarded_m('approximate_entropy', test_approx_entropy, bits,
                   approx_entropy_m, alpha, force),
        test_cusum(bits, alpha, force),
        test_dft(bits, alpha, force),
    ]
    report = BatteryReport(results, alpha, int(bits.size))
    LOGGER.debug('Battery on %i bits: %i applicable, failures %r',
                 bits.size, sum(r.applicable for r in results),
                 report.failures)
    return report
