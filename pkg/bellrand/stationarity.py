"""
Unit-root and trend-stationarity tests

Flags follow the usual reporting convention: ``adf = 1`` means the unit
root is rejected, ``kpss = 1`` means trend-stationarity is rejected.
Bit series are mapped to +/-1 before testing.

"""
import dataclasses
import logging
import math
import typing
import warnings

import numpy as np
from statsmodels.tools import sm_exceptions
from statsmodels.tsa import stattools

from bellrand import errors, models

LOGGER = logging.getLogger(__name__)

DEFAULT_ALPHA = 0.05
MIN_LENGTH = 50

_ADF_LEVELS = {0.01: '1%', 0.05: '5%', 0.10: '10%'}
_KPSS_LEVELS = {0.01: '1%', 0.025: '2.5%', 0.05: '5%', 0.10: '10%'}


class Outcome(typing.NamedTuple):
    stat: float
    flag: int
    lags: int


@dataclasses.dataclass(frozen=True)
class StationarityResult:
    adf_stat: float
    adf_flag: int
    kpss_stat: float
    kpss_flag: int
    lags_used: int
    alpha: float


def _prepare(series) -> np.ndarray:
    if isinstance(series, models.BitSeries):
        return 2.0 * series.bits - 1.0
    values = np.asarray(series)
    if values.dtype in (np.bool_, np.uint8):
        return 2.0 * values - 1.0
    return values.astype(np.float64)


def _checked(series) -> np.ndarray:
    values = _prepare(series)
    if values.size < MIN_LENGTH:
        raise errors.TooShort('Stationarity tests need %i samples, got %i',
                              MIN_LENGTH, values.size)
    if np.ptp(values) == 0:
        raise errors.SingularRegression('Series is constant')
    return values


def _level(levels: typing.Dict[float, str], alpha: float) -> str:
    for value, key in levels.items():
        if math.isclose(alpha, value):
            return key
    raise errors.UnsupportedAlpha(
        'No critical values tabulated for alpha=%s (supported: %s)', alpha,
        ', '.join(str(v) for v in levels))


def adf_test(series, alpha: float = DEFAULT_ALPHA) -> Outcome:
    """Augmented Dickey-Fuller test with a constant and Schwert lag order.

    :returns: statistic, flag (1 when the unit root is rejected) and lags
    :raises: :exc:`~bellrand.errors.TooShort`,
        :exc:`~bellrand.errors.SingularRegression`

    """
    key = _level(_ADF_LEVELS, alpha)
    values = _checked(series)
    max_lag = int(math.floor(12 * (values.size / 100) ** 0.25))
    try:
        with warnings.catch_warnings():
            warnings.simplefilter('ignore')
            result = stattools.adfuller(values, maxlag=max_lag,
                                        regression='c', autolag=None)
    except (np.linalg.LinAlgError, ValueError,
            sm_exceptions.MissingDataError) as error:
        raise errors.SingularRegression('ADF regression failed: %s', error)
    stat = float(result[0])
    if not math.isfinite(stat):
        raise errors.SingularRegression('ADF statistic is not finite')
    LOGGER.debug('ADF statistic %.4f (critical %.4f) with %i lags', stat,
                 result[4][key], result[2])
    return Outcome(stat, int(stat < result[4][key]), int(result[2]))


def kpss_test(series, alpha: float = DEFAULT_ALPHA,
              trend: bool = True) -> Outcome:
    """KPSS test with a Bartlett-kernel long-run variance.

    :returns: statistic, flag (1 when stationarity is rejected) and lags
    :raises: :exc:`~bellrand.errors.TooShort`,
        :exc:`~bellrand.errors.SingularRegression`

    """
    key = _level(_KPSS_LEVELS, alpha)
    values = _checked(series)
    lags = int(math.floor(4 * (values.size / 100) ** 0.25))
    try:
        with warnings.catch_warnings():
            warnings.simplefilter('ignore', sm_exceptions.InterpolationWarning)
            stat, _, used, critical = stattools.kpss(
                values, regression='ct' if trend else 'c', nlags=lags)
    except (np.linalg.LinAlgError, ValueError, ZeroDivisionError) as error:
        raise errors.SingularRegression('KPSS regression failed: %s', error)
    LOGGER.debug('KPSS statistic %.4f (critical %.4f) with %i lags', stat,
                 critical[key], used)
    return Outcome(float(stat), int(stat > critical[key]), int(used))


def stationarity(series, alpha: float = DEFAULT_ALPHA) -> StationarityResult:
    """Run both tests and combine their flags"""
    adf = adf_test(series, alpha)
    kpss = kpss_test(series, alpha)
    return StationarityResult(adf.stat, adf.flag, kpss.stat, kpss.flag,
                              adf.lags, alpha)
