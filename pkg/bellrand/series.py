"""
Series derivation

Turns one run's detections into the eleven derived series: gate outcome
(OUT) and thresholded time-difference (TD) series for coincidences (CO),
singles (SO) and all detections (AL).  CO+TD is a single joint series
timed by station A; every other series exists once per station.

"""
from __future__ import annotations

import concurrent.futures
import dataclasses
import logging
import typing

import numba
import numpy as np

from bellrand import complexity, errors, models, timetag

LOGGER = logging.getLogger(__name__)

DEFAULT_WINDOW_PS = 10_000
DEFAULT_GRID_QUANTILES = 199
LOW_CONTRAST = 2.0
OUTCOMES = ('00', '01', '10', '11')

Events = typing.Union[models.StationEvents, np.ndarray, typing.Sequence[int]]


@dataclasses.dataclass(frozen=True)
class DelayScan:
    delay: int
    count: int
    low_contrast: bool
    delays: np.ndarray
    counts: np.ndarray


@dataclasses.dataclass(frozen=True)
class ThresholdSpectrum:
    """Complexity and min-entropy of a TD series across thresholds"""
    thresholds: np.ndarray
    kc: np.ndarray
    h_min: np.ndarray
    theta_star: int
    kc_argmax: int
    h_min_argmax: int
    median: float

    @property
    def grid(self) -> typing.List[typing.Tuple[int, float, float]]:
        return list(zip(self.thresholds.tolist(), self.kc.tolist(),
                        self.h_min.tolist()))

    def index_of(self, threshold: int) -> int:
        return int(np.searchsorted(self.thresholds, threshold))

    def median_index(self) -> int:
        """Grid index of the threshold closest to the median"""
        return int(np.argmin(np.abs(self.thresholds - self.median)))

    def as_dict(self) -> dict:
        return {'theta_star': self.theta_star,
                'kc_argmax': self.kc_argmax,
                'h_min_argmax': self.h_min_argmax,
                'median': self.median,
                'grid': self.grid}


@dataclasses.dataclass(frozen=True)
class Subsets:
    """CO, SO and AL detections of one station"""
    co: models.StationEvents
    so: models.StationEvents
    al: models.StationEvents

    def __getitem__(self, series_class: models.SeriesClass) \
            -> models.StationEvents:
        return getattr(self, models.SeriesClass(series_class).value.lower())


@dataclasses.dataclass
class DerivedRun:
    """Everything :func:`derive_all` produced for one run"""
    coincidences: models.CoincidenceSet
    series: typing.Dict[str, models.BitSeries] = dataclasses.field(
        default_factory=dict)
    time_differences: typing.Dict[str, models.TimeDiffSeries] = \
        dataclasses.field(default_factory=dict)
    spectra: typing.Dict[str, ThresholdSpectrum] = dataclasses.field(
        default_factory=dict)
    errors: typing.Dict[str, dict] = dataclasses.field(default_factory=dict)
    delay_scan: typing.Optional[DelayScan] = None


def _timestamps(events: Events) -> np.ndarray:
    if isinstance(events, models.StationEvents):
        return events.timestamps
    return np.asarray(events, dtype=np.int64)


@numba.njit(cache=True, nogil=True)
def _match(t_a: np.ndarray, t_b: np.ndarray, window: int,
           delay: int) -> typing.Tuple[np.ndarray, np.ndarray]:
    size = min(t_a.size, t_b.size)
    index_a = np.empty(size, dtype=np.int64)
    index_b = np.empty(size, dtype=np.int64)
    i = j = count = 0
    while i < t_a.size and j < t_b.size:
        offset = 2 * (t_b[j] - delay - t_a[i])
        if offset < -window:
            j += 1
        elif offset > window:
            i += 1
        else:
            index_a[count] = i
            index_b[count] = j
            count += 1
            i += 1
            j += 1
    return index_a[:count], index_b[:count]


@numba.njit(cache=True, nogil=True)
def _count_matches(t_a: np.ndarray, t_b: np.ndarray, window: int,
                   delay: int) -> int:
    i = j = count = 0
    while i < t_a.size and j < t_b.size:
        offset = 2 * (t_b[j] - delay - t_a[i])
        if offset < -window:
            j += 1
        elif offset > window:
            i += 1
        else:
            count += 1
            i += 1
            j += 1
    return count


def find_coincidences(a_events: Events, b_events: Events,
                      window: int = DEFAULT_WINDOW_PS,
                      delay: int = 0) -> models.CoincidenceSet:
    """Greedy earliest-first one-to-one matching of A and B detections
    with ``|t_b - t_a - delay| <= window / 2``.

    Indices in the result refer to positions within ``a_events`` and
    ``b_events``.

    """
    t_a, t_b = _timestamps(a_events), _timestamps(b_events)
    index_a, index_b = _match(t_a, t_b, int(window), int(delay))
    return models.CoincidenceSet(index_a, index_b, t_a[index_a],
                                 t_b[index_b], int(window), int(delay))


def optimize_delay(a_events: Events, b_events: Events,
                   window: int = DEFAULT_WINDOW_PS,
                   scan: typing.Iterable[int] = range(-20_000, 20_001,
                                                      1_000)) -> DelayScan:
    """Exhaustively scan delays for the largest coincidence count.

    Ties go to the smallest ``|delay|`` and then to the smaller delay.
    The scan is flagged ``low_contrast`` when the peak is less than twice
    the mean count.

    :raises: :exc:`~bellrand.errors.EmptyScan`

    """
    delays = np.fromiter((int(d) for d in scan), dtype=np.int64)
    if not delays.size:
        raise errors.EmptyScan('The delay scan range is empty')
    t_a, t_b = _timestamps(a_events), _timestamps(b_events)
    counts = np.array([_count_matches(t_a, t_b, int(window), int(d))
                       for d in delays], dtype=np.int64)
    best = min(np.flatnonzero(counts == counts.max()),
               key=lambda i: (abs(delays[i]), delays[i]))
    mean = counts.mean()
    low_contrast = bool(mean == 0 or counts[best] / mean < LOW_CONTRAST)
    LOGGER.debug('Delay scan peak %i coincidences at %i ps (mean %.1f)',
                 counts[best], delays[best], mean)
    return DelayScan(int(delays[best]), int(counts[best]), low_contrast,
                     delays, counts)


def classify(stream: models.EventStream,
             coincidences: models.CoincidenceSet) \
        -> typing.Dict[models.Station, Subsets]:
    """Split each station's detections into coincidences and singles.

    :raises: :exc:`~bellrand.errors.InconsistentInputs`

    """
    subsets = {}
    for station, indices in ((models.Station.A, coincidences.index_a),
                             (models.Station.B, coincidences.index_b)):
        events = timetag.station_events(stream, station)
        if indices.size and (indices.min() < 0
                             or indices.max() >= len(events)):
            raise errors.InconsistentInputs(
                'Coincidence index out of range for station %s',
                station.value)
        coincident = np.zeros(len(events), dtype=bool)
        coincident[indices] = True
        subsets[station] = Subsets(events.take(coincident),
                                   events.take(~coincident), events)
    return subsets


def out_series(subset: models.StationEvents,
               station: typing.Optional[models.Station] = None,
               series_class: models.SeriesClass = models.SeriesClass.AL) \
        -> models.BitSeries:
    """Gate bits of the detections in time order"""
    return models.BitSeries(subset.gates, models.Provenance(
        models.SeriesClass(series_class), models.Kind.OUT,
        models.Station(station or subset.station)))


def td_series(subset: Events,
              series_class: models.SeriesClass = models.SeriesClass.AL,
              station: models.Station = models.Station.JOINT) \
        -> models.TimeDiffSeries:
    """Time elapsed between consecutive detections.

    :raises: :exc:`~bellrand.errors.TooShort`

    """
    if isinstance(subset, models.StationEvents) \
            and station == models.Station.JOINT \
            and series_class != models.SeriesClass.CO:
        station = subset.station
    times = _timestamps(subset)
    if times.size < 2:
        raise errors.TooShort('Time differences need 2 detections, got %i',
                              times.size)
    return models.TimeDiffSeries(
        np.diff(times), models.Provenance(models.SeriesClass(series_class),
                                          models.Kind.TD, station),
        int(times[0]))


def binarize(td: models.TimeDiffSeries, threshold: int) -> models.BitSeries:
    """``1`` where the difference is strictly above ``threshold``"""
    if threshold < 0:
        raise errors.InvalidInput('Threshold must not be negative')
    provenance = dataclasses.replace(td.provenance, kind=models.Kind.TD,
                                     threshold_ps=int(threshold))
    return models.BitSeries((td.diffs > threshold).astype(np.uint8),
                            provenance)


def _spectrum_point(diffs: np.ndarray,
                    threshold: int) -> typing.Tuple[float, float]:
    bits = (diffs > threshold).astype(np.uint8)
    return complexity.kc(bits).kc, complexity.min_entropy(bits).h_min


def select_threshold(td: models.TimeDiffSeries,
                     grid_quantiles: int = DEFAULT_GRID_QUANTILES,
                     workers: int = 1) -> ThresholdSpectrum:
    """Sweep thresholds over the quantile grid ``k / (Q + 1)`` and select
    the one maximising the normalized Lempel-Ziv complexity.

    Ties go to the smaller threshold.  The ``H_min`` arg-maximum (nearest
    the median on ties) is reported for comparison.  With a fine grid the
    ``Kc`` maximum wanders a few grid steps around the median, because
    neighbouring thresholds differ by fewer phrases than the estimator
    resolves, so coarse grids give the more balanced selection.

    :raises: :exc:`~bellrand.errors.Degenerate`

    """
    if grid_quantiles < 3:
        raise errors.InvalidInput('At least 3 grid quantiles are required')
    diffs = td.diffs
    if np.unique(diffs).size < 2:
        raise errors.Degenerate('All time differences are equal')
    levels = np.arange(1, grid_quantiles + 1) / (grid_quantiles + 1)
    thresholds = np.unique(np.quantile(diffs, levels,
                                       method='inverted_cdf')).astype(
                                           np.int64)
    if workers > 1:
        with concurrent.futures.ThreadPoolExecutor(workers) as executor:
            points = list(executor.map(
                lambda t: _spectrum_point(diffs, t), thresholds))
    else:
        points = [_spectrum_point(diffs, t) for t in thresholds]
    kc_values = np.array([p[0] for p in points])
    h_values = np.array([p[1] for p in points])
    median = float(np.median(diffs))
    closeness = np.abs(thresholds - median)

    kc_argmax = int(thresholds[int(np.argmax(kc_values))])
    spectrum = ThresholdSpectrum(
        thresholds, kc_values, h_values, kc_argmax, kc_argmax,
        int(thresholds[_best(np.arange(thresholds.size), h_values,
                             closeness)]),
        median)
    LOGGER.debug('Threshold %i ps selected from %i grid points (median %.1f)',
                 spectrum.theta_star, thresholds.size, median)
    return spectrum


def _best(candidates: np.ndarray, values: np.ndarray,
          closeness: np.ndarray) -> int:
    """Candidate with the largest value, nearest the median on ties"""
    return int(min(candidates,
                   key=lambda i: (-values[i], closeness[i], i)))


def split_by_outcome(stream: models.EventStream,
                     coincidences: models.CoincidenceSet) \
        -> typing.Dict[str, models.TimeDiffSeries]:
    """CO time differences between successive coincidences with the same
    joint outcome, keyed ``00``, ``01``, ``10`` and ``11`` (A gate first).

    Outcomes with fewer than two coincidences are omitted.

    """
    gates_a = timetag.station_events(stream, models.Station.A).gates
    gates_b = timetag.station_events(stream, models.Station.B).gates
    codes = (2 * gates_a[coincidences.index_a].astype(np.int64)
             + gates_b[coincidences.index_b])
    result = {}
    for code, outcome in enumerate(OUTCOMES):
        times = coincidences.t_a[codes == code]
        if times.size >= 2:
            result[outcome] = td_series(times, models.SeriesClass.CO,
                                        models.Station.JOINT)
    return result


def derive_all(stream: models.EventStream,
               window: int = DEFAULT_WINDOW_PS,
               delay: typing.Optional[int] = 0,
               scan: typing.Optional[typing.Iterable[int]] = None,
               grid_quantiles: int = DEFAULT_GRID_QUANTILES,
               workers: int = 1) -> DerivedRun:
    """Produce every derived series of a run.

    Failures of individual series are recorded in
    :attr:`DerivedRun.errors` instead of being raised.  When ``scan`` is
    given the delay is optimized first.

    """
    a_events = timetag.station_events(stream, models.Station.A)
    b_events = timetag.station_events(stream, models.Station.B)
    delay_scan = None
    if scan is not None:
        delay_scan = optimize_delay(a_events, b_events, window, scan)
        delay = delay_scan.delay
    coincidences = find_coincidences(a_events, b_events, window, delay or 0)
    run = DerivedRun(coincidences, delay_scan=delay_scan)
    subsets = classify(stream, coincidences)

    classes = [models.SeriesClass.SO, models.SeriesClass.AL]
    if len(coincidences):
        classes.insert(0, models.SeriesClass.CO)
    for series_class in classes:
        for station in (models.Station.A, models.Station.B):
            subset = subsets[station][series_class]
            key = models.Provenance(series_class, models.Kind.OUT,
                                    station).key
            if not len(subset):
                run.errors[key] = errors.EmptySeries(
                    'No %s detections at station %s', series_class.value,
                    station.value).document
                continue
            run.series[key] = out_series(subset, station, series_class)

    sources = []
    if len(coincidences):
        sources.append((models.SeriesClass.CO, models.Station.JOINT,
                        coincidences.t_a))
    for series_class in (models.SeriesClass.SO, models.SeriesClass.AL):
        for station in (models.Station.A, models.Station.B):
            sources.append((series_class, station,
                            subsets[station][series_class].timestamps))
    for series_class, station, times in sources:
        key = models.Provenance(series_class, models.Kind.TD, station).key
        try:
            td = td_series(times, series_class, station)
            spectrum = select_threshold(td, grid_quantiles, workers)
        except errors.ApplicationError as error:
            LOGGER.warning('Failed to derive %s: %s', key, error)
            run.errors[key] = error.document
            continue
        run.time_differences[key] = td
        run.spectra[key] = spectrum
        run.series[key] = binarize(td, spectrum.theta_star)

    LOGGER.info('Derived %i series from %i events (%i coincidences, '
                '%i errors)', len(run.series), len(stream),
                len(coincidences), len(run.errors))
    return run
