"""
Delay-coordinate reconstruction toolkit

Delay selection by average mutual information, embedding dimension by
false nearest neighbours, the largest Lyapunov exponent from
nearest-neighbour divergence, and an attractor based forecaster that
tries to guess coincidence outcomes from their announced times.

All neighbour searches exclude temporally close points (Theiler window
``tau * d``).

"""
from __future__ import annotations

import dataclasses
import logging
import math
import typing

import numpy as np
from scipy import spatial

from bellrand import errors, models

LOGGER = logging.getLogger(__name__)

AMI_BINS = 16
AMI_FLAT_RATIO = 0.05
AMI_PLATEAU_RTOL = 0.01
DEFAULT_MAX_LAG = 20
DEFAULT_DMAX = 12
FNN_MIN_LENGTH = 1000
FNN_RTOL = 15.0
FNN_ATOL = 2.0
FNN_ACCEPT = 0.01
LYAPUNOV_MAX_K = 20
LYAPUNOV_MIN_RISE = 1.0
LYAPUNOV_MIN_FIT = 5
LYAPUNOV_MIN_R2 = 0.9

Series = typing.Union[models.TimeDiffSeries, np.ndarray,
                      typing.Sequence[float]]


@dataclasses.dataclass(frozen=True)
class EmbeddingResult:
    tau: int
    fnn_fractions: typing.List[typing.Tuple[int, float]]
    d_e: typing.Optional[int]

    @property
    def saturated(self) -> bool:
        return self.d_e is not None


@dataclasses.dataclass(frozen=True)
class LyapunovResult:
    lyapunov: float
    fit_range: typing.Tuple[int, int]
    horizon: typing.Optional[int]
    divergence: typing.List[float]
    fit_r2: float


@dataclasses.dataclass(frozen=True)
class PredictionResult:
    guesses: typing.List[str]
    accuracy: typing.Optional[float]
    embeddings: typing.Dict[str, typing.Optional[typing.Tuple[int, int]]]


def _values(series: Series) -> np.ndarray:
    if isinstance(series, models.TimeDiffSeries):
        series = series.diffs
    return np.asarray(series, dtype=np.float64)


def embed(series: Series, tau: int, d: int) -> np.ndarray:
    """Delay vectors ``(s[i], s[i + tau], ..., s[i + (d - 1) tau])``"""
    values = _values(series)
    if tau < 1 or d < 1:
        raise errors.InvalidInput('tau and d must be positive')
    count = values.size - (d - 1) * tau
    if count < 1:
        raise errors.TooShort('Series too short to embed in %i dimensions',
                              d)
    return np.stack([values[k * tau:k * tau + count] for k in range(d)],
                    axis=1)


def _mutual_information(x: np.ndarray, y: np.ndarray,
                        edges: np.ndarray) -> float:
    joint, _, _ = np.histogram2d(x, y, bins=(edges, edges))
    joint /= joint.sum()
    px = joint.sum(axis=1, keepdims=True)
    py = joint.sum(axis=0, keepdims=True)
    nonzero = joint > 0
    return float(np.sum(joint[nonzero] *
                        np.log(joint[nonzero] / (px @ py)[nonzero])))


def ami_delay(series: Series, max_lag: int = DEFAULT_MAX_LAG) -> int:
    """First local minimum of the average mutual information.  A minimum
    that is flat over several lags, within 1 % of the lag-0 information,
    resolves to its middle lag.

    Falls back to the first lag where the autocorrelation drops below
    ``1/e``, and to 1 when neither exists.

    :raises: :exc:`~bellrand.errors.TooShort`,
        :exc:`~bellrand.errors.Degenerate`

    """
    values = _values(series)
    if max_lag < 1 or values.size < 10 * max_lag:
        raise errors.TooShort('AMI needs %i samples for max_lag=%i, got %i',
                              10 * max_lag, max_lag, values.size)
    if np.ptp(values) == 0:
        raise errors.Degenerate('Series is constant')
    edges = np.histogram_bin_edges(values, bins=AMI_BINS)
    ami = np.array([_mutual_information(values[:values.size - lag],
                                        values[lag:], edges)
                    for lag in range(max_lag + 1)])
    if ami[1] >= AMI_FLAT_RATIO * ami[0]:
        tolerance = AMI_PLATEAU_RTOL * ami[0]
        lag = 1
        while lag < max_lag:
            if ami[lag + 1] < ami[lag] - tolerance:
                lag += 1
                continue
            end = lag
            while end < max_lag and abs(ami[end + 1] - ami[lag]) <= tolerance:
                end += 1
            if end == max_lag:
                break
            if ami[end + 1] > ami[lag]:
                return (lag + end) // 2
            lag = end + 1
    centered = values - values.mean()
    variance = float(np.dot(centered, centered))
    for lag in range(1, max_lag + 1):
        acf = float(np.dot(centered[:-lag], centered[lag:])) / variance
        if acf < 1.0 / math.e:
            return lag
    return 1


def _nearest_outside_window(tree: spatial.cKDTree, points: np.ndarray,
                            window: int) -> typing.Tuple[np.ndarray,
                                                         np.ndarray]:
    """Distance to and index of each point's nearest neighbour that is
    more than ``window`` samples away in time.

    """
    k = min(2 * window + 2, tree.n)
    distances, indices = tree.query(points, k=k, workers=-1)
    distances = distances.reshape(points.shape[0], -1)
    indices = indices.reshape(points.shape[0], -1)
    rows = np.arange(points.shape[0])
    valid = (np.abs(indices - rows[:, None]) > window) \
        & (indices < tree.n)
    first = np.argmax(valid, axis=1)
    found = valid[rows, first]
    return (np.where(found, distances[rows, first], np.inf),
            np.where(found, indices[rows, first], -1))


def false_nearest_neighbors(series: Series, tau: int,
                            d_max: int = DEFAULT_DMAX,
                            rtol: float = FNN_RTOL,
                            atol: float = FNN_ATOL) -> EmbeddingResult:
    """Fraction of false nearest neighbours for ``d = 1 .. d_max``.

    ``d_e`` is the smallest dimension from which the fraction stays below
    1 % up to ``d_max``; it is ``None`` when that never happens, or
    when the series is too short to embed in ``d_max`` dimensions.

    :raises: :exc:`~bellrand.errors.TooShort`

    """
    values = _values(series)
    if values.size < FNN_MIN_LENGTH:
        raise errors.TooShort('FNN needs %i samples, got %i',
                              FNN_MIN_LENGTH, values.size)
    sigma = float(values.std())
    if sigma == 0:
        raise errors.Degenerate('Series is constant')
    fractions = []
    for d in range(1, d_max + 1):
        count = values.size - d * tau
        if count < 2 * (tau * d + 1) + 2:
            break
        points = embed(values, tau, d)[:count]
        distances, neighbours = _nearest_outside_window(
            spatial.cKDTree(points), points, tau * d)
        usable = np.isfinite(distances) & (distances > 0)
        rows = np.flatnonzero(usable)
        extra = np.abs(values[rows + d * tau]
                       - values[neighbours[rows] + d * tau])
        radius = distances[rows]
        false = (extra / radius > rtol) | (
            np.sqrt(radius ** 2 + extra ** 2) / sigma > atol)
        fractions.append((d, float(false.mean()) if rows.size else 1.0))
    d_e = None
    if len(fractions) < d_max:
        LOGGER.debug('FNN stopped at d=%i of %i, series too short',
                     len(fractions), d_max)
    else:
        for d, fraction in reversed(fractions):
            if fraction >= FNN_ACCEPT:
                break
            d_e = d
    LOGGER.debug('FNN fractions %r, d_e=%r', fractions, d_e)
    return EmbeddingResult(tau, fractions, d_e)


def horizon_of_predictability(lyapunov: float) -> typing.Optional[int]:
    """Elements ahead that can be forecast, ``ceil(1 / lambda)``"""
    if lyapunov <= 0:
        return None
    return int(math.ceil(1.0 / lyapunov - 1e-12))


def largest_lyapunov(series: Series, tau: int, d: int,
                     max_k: int = LYAPUNOV_MAX_K) -> LyapunovResult:
    """Largest Lyapunov exponent per sample from the mean logarithmic
    divergence of nearest-neighbour trajectories.

    The slope is fitted from the start of the divergence curve up to half
    of its rise.  A curve that gets there in fewer than
    ``LYAPUNOV_MIN_FIT`` steps has no usable linear region.  Curves that
    barely rise are non-divergent and report a non-positive exponent.

    :raises: :exc:`~bellrand.errors.TooShort`,
        :exc:`~bellrand.errors.NoLinearRegion`

    """
    values = _values(series)
    if d < 1 or tau < 1:
        raise errors.InvalidInput('tau and d must be positive')
    if values.size < FNN_MIN_LENGTH:
        raise errors.TooShort('Lyapunov estimation needs %i samples, got %i',
                              FNN_MIN_LENGTH, values.size)
    points = embed(values, tau, d)
    usable = points.shape[0] - max_k
    window = tau * d
    if usable < 2 * window + 3:
        raise errors.TooShort('Series too short for the divergence horizon')
    reference = points[:usable]
    distances, neighbours = _nearest_outside_window(
        spatial.cKDTree(reference), reference, window)
    rows = np.flatnonzero(np.isfinite(distances))
    steps = np.arange(max_k + 1)
    separation = np.linalg.norm(
        points[rows[:, None] + steps] -
        points[neighbours[rows][:, None] + steps], axis=2)
    with np.errstate(divide='ignore'):
        logs = np.log(separation)
    finite = np.isfinite(logs)
    counts = finite.sum(axis=0)
    if not counts.all():
        LOGGER.debug('Neighbour trajectories never separate')
        return LyapunovResult(0.0, (0, max_k), None, [], 1.0)
    curve = np.where(finite, logs, 0.0).sum(axis=0) / counts

    rise = float(curve.max() - curve[0])
    if rise < LYAPUNOV_MIN_RISE:
        slope, r2 = _fit(steps, curve)
        lyapunov = min(slope, 0.0)
        return LyapunovResult(lyapunov, (0, max_k), None, curve.tolist(), r2)

    end = int(np.argmax(curve >= curve[0] + 0.5 * rise))
    if end < LYAPUNOV_MIN_FIT:
        raise errors.NoLinearRegion(
            'Divergence reaches half its rise within %i steps', end)
    slope, r2 = _fit(steps[:end + 1], curve[:end + 1])
    if r2 < LYAPUNOV_MIN_R2:
        raise errors.NoLinearRegion('Divergence fit r2=%.3f below %.2f', r2,
                                    LYAPUNOV_MIN_R2)
    return LyapunovResult(slope, (0, end), horizon_of_predictability(slope),
                          curve.tolist(), r2)


def _fit(x: np.ndarray, y: np.ndarray) -> typing.Tuple[float, float]:
    slope, intercept = np.polyfit(x, y, 1)
    residual = float(np.sum((y - (slope * x + intercept)) ** 2))
    total = float(np.sum((y - y.mean()) ** 2))
    return float(slope), 1.0 - residual / total if total else 1.0


class _OutcomeModel:
    """Nearest-neighbour forecaster on one outcome's reconstructed
    attractor.

    """

    def __init__(self, td: models.TimeDiffSeries, tau: int, d: int):
        self.tau, self.d = tau, d
        self.history = _values(td).tolist()
        span = (d - 1) * tau
        if len(self.history) < span + 2:
            raise errors.InsufficientHistory(
                'Need %i time differences to forecast, got %i', span + 2,
                len(self.history))
        vectors = embed(np.asarray(self.history), tau, d)[:-1]
        self.successors = np.asarray(self.history[span + 1:])
        self.tree = spatial.cKDTree(vectors)
        self.last_time = int(td.times[-1])

    def predict(self) -> float:
        span = (self.d - 1) * self.tau
        query = np.asarray(self.history[len(self.history) - 1 - span::
                                        self.tau])
        _, index = self.tree.query(query)
        return self.last_time + float(self.successors[index])

    def observe(self, time: int) -> None:
        self.history.append(float(time - self.last_time))
        self.last_time = int(time)


def predict_outcomes(
        co_td_by_outcome: typing.Mapping[str, models.TimeDiffSeries],
        announced_times: typing.Sequence[int],
        truth: typing.Optional[typing.Sequence[str]] = None,
        embedding: typing.Optional[typing.Tuple[int, int]] = None,
        d_max: int = DEFAULT_DMAX,
        max_lag: int = DEFAULT_MAX_LAG) -> PredictionResult:
    """Guess the outcome of each announced coincidence time.

    Every outcome whose time differences embed in a finite dimension
    forecasts its next coincidence; the outcome whose forecast lies
    closest to the announced time is the guess, and the announced time
    is appended to that outcome's history.  ``embedding`` fixes
    ``(tau, d)`` for all outcomes instead of estimating it.

    :raises: :exc:`~bellrand.errors.NoPrediction`,
        :exc:`~bellrand.errors.InsufficientHistory`

    """
    models_by_outcome, embeddings = {}, {}
    for outcome in sorted(co_td_by_outcome):
        td = co_td_by_outcome[outcome]
        if embedding is not None:
            tau, d = embedding
        else:
            try:
                tau = ami_delay(td, max_lag)
                d = false_nearest_neighbors(td, tau, d_max).d_e
            except (errors.TooShort, errors.Degenerate) as error:
                LOGGER.debug('Outcome %s is unpredictable: %s', outcome,
                             error)
                d = None
        if d is None:
            embeddings[outcome] = None
            continue
        embeddings[outcome] = (tau, d)
        models_by_outcome[outcome] = _OutcomeModel(td, tau, d)
    if not models_by_outcome:
        raise errors.NoPrediction(
            'None of the outcome sub-series has a finite embedding '
            'dimension')

    guesses = []
    for time in announced_times:
        forecasts = {outcome: abs(model.predict() - time)
                     for outcome, model in models_by_outcome.items()}
        guess = min(forecasts, key=lambda o: (forecasts[o], o))
        models_by_outcome[guess].observe(time)
        guesses.append(guess)

    accuracy = None
    if truth is not None:
        if len(truth) != len(guesses):
            raise errors.LengthMismatch(
                '%i outcomes supplied for %i announced times', len(truth),
                len(guesses))
        if guesses:
            accuracy = float(np.mean([g == t for g, t in zip(guesses,
                                                            truth)]))
    return PredictionResult(guesses, accuracy, embeddings)
