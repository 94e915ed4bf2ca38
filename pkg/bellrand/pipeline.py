"""
Analysis orchestration and reporting

Runs every metric on derived series, aggregates the per-series reports
into a per-(class, kind) summary table and writes the JSON report, CSV
tables and plot data files.

"""
from __future__ import annotations

import asyncio
import concurrent.futures
import contextlib
import csv
import dataclasses
import functools
import io
import logging
import math
import pathlib
import typing

import flatdict
import numpy as np
import pydantic

from bellrand import (battery, complexity, errors, models, nonlinear, series,
                      stationarity, stats as stats_module, transcoders)
from bellrand import nonlinear as nonlinear_module

LOGGER = logging.getLogger(__name__)

SCHEMA = 1
METRICS = ('kc', 'hmin', 'hurst', 'stationarity')
ROW_ORDER = (
    (models.SeriesClass.CO, models.Kind.TD),
    (models.SeriesClass.CO, models.Kind.OUT),
    (models.SeriesClass.SO, models.Kind.TD),
    (models.SeriesClass.SO, models.Kind.OUT),
    (models.SeriesClass.AL, models.Kind.TD),
    (models.SeriesClass.AL, models.Kind.OUT),
)
SeriesItem = typing.Tuple[models.BitSeries,
                          typing.Optional[models.TimeDiffSeries]]
SPECTRUM_COLUMNS = ('series', 'threshold_ps', 'kc', 'h_min')
SCATTER_COLUMNS = ('series', 'class', 'kind', 'station', 'extracted',
                   'h_min', 'kc', 'rejected', 'zurek_ok')
TABLE_COLUMNS = ('class', 'kind', 'extracted', 'series', 'mean_kc',
                 'mean_h_min', 'rejection_rate', 'kpss1')


class AnalysisOptions(pydantic.BaseModel):
    alpha: float = battery.DEFAULT_ALPHA
    stationarity_alpha: float = stationarity.DEFAULT_ALPHA
    tests: typing.Literal['nist', 'none'] = 'nist'
    metrics: typing.Tuple[str, ...] = METRICS
    nonlinear: bool = False
    force_nonlinear: bool = False
    dmax: int = nonlinear_module.DEFAULT_DMAX
    tau: typing.Optional[int] = None
    max_lag: int = nonlinear_module.DEFAULT_MAX_LAG
    nonlinear_max_points: int = 20_000
    hurst_corrected: bool = False
    force: bool = False
    workers: int = 1

    class Config:
        allow_mutation = False
        extra = pydantic.Extra.forbid

    @pydantic.validator('metrics', pre=True)
    def _expand_metrics(cls, value):
        if isinstance(value, str):
            value = [v.strip() for v in value.split(',') if v.strip()]
        if 'all' in value:
            return METRICS
        unknown = set(value) - set(METRICS)
        if unknown:
            raise ValueError(f'unknown metrics: {", ".join(sorted(unknown))}')
        return tuple(value)

    @pydantic.validator('alpha')
    def _check_alpha(cls, value: float) -> float:
        if not 0.0 < value < 1.0:
            raise ValueError('alpha must be within (0, 1)')
        return value

    @pydantic.validator('workers', 'dmax', 'max_lag',
                        'nonlinear_max_points')
    def _check_positive(cls, value: int) -> int:
        if value < 1:
            raise ValueError('must be positive')
        return value


@dataclasses.dataclass
class SeriesReport:
    key: str
    provenance: models.Provenance
    length: int
    kc: typing.Optional[float] = None
    h_min: typing.Optional[float] = None
    shannon: typing.Optional[float] = None
    hurst: typing.Optional[float] = None
    adf_flag: typing.Optional[int] = None
    kpss_flag: typing.Optional[int] = None
    battery: typing.Optional[battery.BatteryReport] = None
    chsh_bound: typing.Optional[float] = None
    zurek_ok: typing.Optional[bool] = None
    tau: typing.Optional[int] = None
    d_e: typing.Optional[int] = None
    lyapunov: typing.Optional[float] = None
    horizon: typing.Optional[int] = None
    errors: typing.Dict[str, dict] = dataclasses.field(default_factory=dict)
    skipped: typing.Dict[str, str] = dataclasses.field(default_factory=dict)

    @property
    def extracted(self) -> bool:
        return self.provenance.extracted

    @property
    def rejected(self) -> typing.Optional[bool]:
        return None if self.battery is None else self.battery.rejected

    def as_dict(self) -> dict:
        return {
            'series': self.key,
            'provenance': self.provenance.as_dict(),
            'length': self.length,
            'extracted': self.extracted,
            'kc': self.kc,
            'h_min': self.h_min,
            'shannon': self.shannon,
            'hurst': self.hurst,
            'adf': self.adf_flag,
            'kpss': self.kpss_flag,
            'chsh_bound': self.chsh_bound,
            'zurek_ok': self.zurek_ok,
            'tau': self.tau,
            'd_e': self.d_e,
            'lyapunov': self.lyapunov,
            'horizon': self.horizon,
            'rejected': self.rejected,
            'battery': None if self.battery is None else
            self.battery.as_dict(),
            'errors': self.errors,
            'skipped': self.skipped,
        }

    @classmethod
    def from_dict(cls, value: dict) -> SeriesReport:
        """Rebuild a report from :meth:`as_dict` output"""
        try:
            report = cls(value['series'],
                         models.Provenance.from_dict(value['provenance']),
                         int(value['length']))
        except (KeyError, TypeError, ValueError) as error:
            raise errors.InvalidInput('Malformed series report: %s', error)
        for name in ('kc', 'h_min', 'shannon', 'hurst', 'chsh_bound',
                     'zurek_ok', 'tau', 'd_e', 'lyapunov', 'horizon'):
            setattr(report, name, value.get(name))
        report.adf_flag = value.get('adf')
        report.kpss_flag = value.get('kpss')
        report.errors = dict(value.get('errors') or {})
        report.skipped = dict(value.get('skipped') or {})
        if value.get('battery'):
            document = value['battery']
            report.battery = battery.BatteryReport(
                [battery.TestResult(t['test'], t['p_values'],
                                    t['applicable'], t['pass'],
                                    t.get('detail', ''), t.get('statistic'))
                 for t in document['tests']],
                document['alpha'], document['series_length'])
        return report


@dataclasses.dataclass(frozen=True)
class AggregateRow:
    series_class: models.SeriesClass
    kind: models.Kind
    extracted: bool
    series_count: int
    mean_kc: typing.Optional[float]
    mean_h_min: typing.Optional[float]
    rejection_rate: typing.Optional[float]
    kpss1_count: int

    @property
    def label(self) -> str:
        label = f'{self.series_class.value}+{self.kind.value}'
        return f'{label} (extracted)' if self.extracted else label

    @property
    def kpss1(self) -> str:
        return f'{self.kpss1_count}/{self.series_count}'

    def as_dict(self) -> dict:
        return {'class': self.series_class.value,
                'kind': self.kind.value,
                'extracted': self.extracted,
                'series': self.series_count,
                'mean_kc': self.mean_kc,
                'mean_h_min': self.mean_h_min,
                'rejection_rate': self.rejection_rate,
                'kpss1': self.kpss1}


@dataclasses.dataclass(frozen=True)
class AggregateTable:
    rows: typing.List[AggregateRow]

    def row(self, series_class: models.SeriesClass, kind: models.Kind,
            extracted: bool = False) -> AggregateRow:
        for row in self.rows:
            if (row.series_class, row.kind, row.extracted) == (
                    series_class, kind, extracted):
                return row
        raise KeyError(f'{series_class.value}+{kind.value}')

    def as_dict(self) -> dict:
        return {'schema': SCHEMA, 'rows': [r.as_dict() for r in self.rows]}

    def to_csv(self) -> str:
        handle = io.StringIO()
        writer = csv.DictWriter(handle, TABLE_COLUMNS, lineterminator='\n')
        writer.writeheader()
        for row in self.rows:
            writer.writerow({k: _cell(v) for k, v in row.as_dict().items()})
        return handle.getvalue()


@dataclasses.dataclass(frozen=True)
class ExtractionSummary:
    series_count: int
    mean_kc: typing.Optional[float]
    mean_h_min: typing.Optional[float]
    mean_hurst: typing.Optional[float]
    hurst_dispersion: typing.Optional[float]


@dataclasses.dataclass(frozen=True)
class ExtractionComparison:
    raw: ExtractionSummary
    extracted: ExtractionSummary


@dataclasses.dataclass
class RunAnalysis:
    derived: series.DerivedRun
    reports: typing.List[SeriesReport]

    @property
    def errors(self) -> typing.Dict[str, dict]:
        merged = dict(self.derived.errors)
        for report in self.reports:
            for metric, document in report.errors.items():
                merged[f'{report.key}/{metric}'] = document
        return merged


def _cell(value):
    if value is None:
        return ''
    if isinstance(value, float):
        return repr(value)
    return value


def _mean(values: typing.Iterable[typing.Optional[float]]) \
        -> typing.Optional[float]:
    present = [v for v in values if v is not None]
    return math.fsum(present) / len(present) if present else None


def _record(report: SeriesReport, metric: str, error: errors.ApplicationError,
            stats: typing.Optional[stats_module.Stats]) -> None:
    LOGGER.warning('%s failed for %s: %s', metric, report.key, error)
    report.errors[metric] = error.document
    if stats is not None:
        stats.incr({'metric': metric, 'result': 'error'})


def _timer(stats: typing.Optional[stats_module.Stats], metric: str):
    if stats is None:
        return contextlib.nullcontext()
    return stats.track_duration({'metric': metric})


def analyze_series(bits: models.BitSeries,
                   options: typing.Optional[AnalysisOptions] = None,
                   diffs: typing.Optional[models.TimeDiffSeries] = None,
                   s_chsh: typing.Optional[float] = None,
                   stats: typing.Optional[stats_module.Stats] = None) \
        -> SeriesReport:
    """Run the battery and every scalar metric on one series.

    Nonlinear analysis runs on the real-valued time differences of TD
    series when enabled.  A failing metric is recorded in
    :attr:`SeriesReport.errors` and does not stop the others.

    :raises: :exc:`~bellrand.errors.EmptySeries`

    """
    options = options or AnalysisOptions()
    if not len(bits):
        raise errors.EmptySeries('Cannot analyze an empty series')
    report = SeriesReport(bits.provenance.key, bits.provenance, len(bits))

    if options.tests == 'nist':
        with _timer(stats, 'battery'):
            try:
                report.battery = battery.run_battery(
                    bits, options.alpha, options.force)
            except errors.ApplicationError as error:
                _record(report, 'battery', error, stats)
    else:
        report.skipped['battery'] = 'disabled'

    if 'kc' in options.metrics:
        with _timer(stats, 'kc'):
            try:
                report.kc = complexity.kc(bits).kc
            except errors.ApplicationError as error:
                _record(report, 'kc', error, stats)
    if 'hmin' in options.metrics:
        entropy = complexity.min_entropy(bits)
        report.h_min, report.shannon = entropy.h_min, entropy.shannon
        if report.kc is not None:
            report.zurek_ok = report.kc >= report.h_min
    if s_chsh is not None:
        try:
            report.chsh_bound = complexity.chsh_min_entropy_bound(s_chsh)
        except errors.ApplicationError as error:
            _record(report, 'chsh_bound', error, stats)
    if 'hurst' in options.metrics:
        with _timer(stats, 'hurst'):
            try:
                report.hurst = complexity.hurst_exponent(
                    bits, options.hurst_corrected).h
            except errors.ApplicationError as error:
                _record(report, 'hurst', error, stats)
    if 'stationarity' in options.metrics:
        with _timer(stats, 'stationarity'):
            for metric, test, attribute in (
                    ('adf', stationarity.adf_test, 'adf_flag'),
                    ('kpss', stationarity.kpss_test, 'kpss_flag')):
                try:
                    outcome = test(bits, options.stationarity_alpha)
                except errors.ApplicationError as error:
                    _record(report, metric, error, stats)
                else:
                    setattr(report, attribute, outcome.flag)

    if options.nonlinear:
        with _timer(stats, 'nonlinear'):
            _nonlinear(report, bits, diffs, options, stats)
    else:
        report.skipped['nonlinear'] = 'disabled'
    if stats is not None:
        stats.incr({'kind': bits.provenance.kind.value,
                    'rejected': report.rejected})
    return report


def _nonlinear(report: SeriesReport, bits: models.BitSeries,
               diffs: typing.Optional[models.TimeDiffSeries],
               options: AnalysisOptions,
               stats: typing.Optional[stats_module.Stats]) -> None:
    if diffs is not None:
        values = diffs.diffs[:options.nonlinear_max_points]
    elif options.force_nonlinear:
        values = bits.bits[:options.nonlinear_max_points]
    else:
        report.skipped['nonlinear'] = 'no real-valued time differences'
        return
    try:
        report.tau = options.tau or nonlinear.ami_delay(values,
                                                        options.max_lag)
        embedding = nonlinear.false_nearest_neighbors(
            values, report.tau, options.dmax)
    except errors.ApplicationError as error:
        _record(report, 'embedding', error, stats)
        return
    report.d_e = embedding.d_e
    if embedding.d_e is None:
        report.skipped['lyapunov'] = 'no finite embedding dimension'
        return
    try:
        lyapunov = nonlinear.largest_lyapunov(values, report.tau,
                                              embedding.d_e)
    except errors.ApplicationError as error:
        _record(report, 'lyapunov', error, stats)
        return
    report.lyapunov, report.horizon = lyapunov.lyapunov, lyapunov.horizon


async def _gather(items: typing.Sequence[SeriesItem],
                  options: AnalysisOptions,
                  s_chsh: typing.Optional[float]) -> typing.List[SeriesReport]:
    loop = asyncio.get_running_loop()
    with concurrent.futures.ProcessPoolExecutor(options.workers) as pool:
        return list(await asyncio.gather(*(
            loop.run_in_executor(pool, functools.partial(
                analyze_series, bits, options, diffs, s_chsh))
            for bits, diffs in items)))


def analyze_many(items: typing.Sequence[SeriesItem],
                 options: typing.Optional[AnalysisOptions] = None,
                 s_chsh: typing.Optional[float] = None,
                 stats: typing.Optional[stats_module.Stats] = None) \
        -> typing.List[SeriesReport]:
    """Analyze several series, in worker processes when
    ``options.workers > 1``.  Reports keep the order of ``items``.

    """
    options = options or AnalysisOptions()
    LOGGER.info('Analyzing %i series with %i worker(s)', len(items),
                options.workers)
    if options.workers > 1 and len(items) > 1:
        reports = asyncio.run(_gather(items, options, s_chsh))
        if stats is not None:
            for report in reports:
                stats.incr({'kind': report.provenance.kind.value,
                            'rejected': report.rejected})
        return reports
    return [analyze_series(bits, options, diffs, s_chsh, stats)
            for bits, diffs in items]


def analyze_run(stream: models.EventStream,
                options: typing.Optional[AnalysisOptions] = None,
                window: int = series.DEFAULT_WINDOW_PS,
                delay: int = 0,
                scan: typing.Optional[typing.Iterable[int]] = None,
                grid_quantiles: int = series.DEFAULT_GRID_QUANTILES,
                stats: typing.Optional[stats_module.Stats] = None) \
        -> RunAnalysis:
    """Derive every series of a run and analyze each of them"""
    derived = series.derive_all(stream, window, delay, scan, grid_quantiles)
    items = [(bits, derived.time_differences.get(key))
             for key, bits in sorted(derived.series.items())]
    s_chsh = stream.meta.nominal_s_chsh or None
    return RunAnalysis(derived, analyze_many(items, options, s_chsh, stats))


def aggregate(reports: typing.Sequence[SeriesReport]) -> AggregateTable:
    """Per-(class, kind) means, rejection rates and KPSS=1 counts.

    Extracted series form their own rows.

    :raises: :exc:`~bellrand.errors.EmptyInput`

    """
    if not reports:
        raise errors.EmptyInput('Nothing to aggregate')
    cells: typing.Dict[tuple, typing.List[SeriesReport]] = {}
    for report in reports:
        key = (report.provenance.series_class, report.provenance.kind,
               report.extracted)
        cells.setdefault(key, []).append(report)
    rows = []
    for extracted in (False, True):
        for series_class, kind in ROW_ORDER:
            cell = cells.get((series_class, kind, extracted))
            if not cell:
                continue
            decided = [r.rejected for r in cell if r.rejected is not None]
            rows.append(AggregateRow(
                series_class, kind, extracted, len(cell),
                _mean(r.kc for r in cell), _mean(r.h_min for r in cell),
                sum(decided) / len(decided) if decided else None,
                sum(1 for r in cell if r.kpss_flag == 1)))
    return AggregateTable(rows)


def _summary(reports: typing.Sequence[SeriesReport]) -> ExtractionSummary:
    hurst = [r.hurst for r in reports if r.hurst is not None]
    return ExtractionSummary(
        len(reports), _mean(r.kc for r in reports),
        _mean(r.h_min for r in reports), _mean(hurst),
        float(np.std(hurst, ddof=1)) if len(hurst) > 1 else None)


def compare_raw_extracted(
        raw_reports: typing.Sequence[SeriesReport],
        extracted_reports: typing.Sequence[SeriesReport]) \
        -> ExtractionComparison:
    """Means of complexity, min-entropy and Hurst plus the Hurst
    dispersion for raw and extracted series.  No verdict is drawn.

    """
    return ExtractionComparison(_summary(raw_reports),
                                _summary(extracted_reports))


def write_report(path: typing.Union[str, pathlib.Path],
                 reports: typing.Sequence[SeriesReport],
                 run_errors: typing.Optional[typing.Dict[str, dict]] = None) \
        -> pathlib.Path:
    path = pathlib.Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(transcoders.dumps({
        'schema': SCHEMA,
        'series': [r.as_dict() for r in reports],
        'errors': run_errors or {},
    }, pretty=True) + '\n')
    return path


def read_report(path: typing.Union[str, pathlib.Path]) \
        -> typing.Tuple[typing.List[SeriesReport], typing.Dict[str, dict]]:
    path = pathlib.Path(path)
    try:
        document = transcoders.loads(path.read_text())
    except (OSError, ValueError) as error:
        raise errors.InvalidInput('Failed to read report %s: %s', path,
                                  error)
    if not isinstance(document, dict) or document.get('schema') != SCHEMA:
        raise errors.InvalidInput('Unsupported report schema in %s', path)
    return ([SeriesReport.from_dict(v) for v in document.get('series', [])],
            document.get('errors', {}))


def _write_csv(path: pathlib.Path, columns: typing.Sequence[str],
               rows: typing.Iterable[dict]) -> pathlib.Path:
    with path.open('w', newline='') as handle:
        writer = csv.DictWriter(handle, columns, lineterminator='\n')
        writer.writeheader()
        for row in rows:
            writer.writerow({k: _cell(v) for k, v in row.items()})
    return path


def emit_figures(reports: typing.Sequence[SeriesReport],
                 spectra: typing.Mapping[str, series.ThresholdSpectrum],
                 directory: typing.Union[str, pathlib.Path]) \
        -> typing.List[pathlib.Path]:
    """Write plot data.

    ``spectra.csv`` holds ``series,threshold_ps,kc,h_min`` for every
    threshold sweep and ``scatter.csv`` holds one
    ``series,class,kind,station,extracted,h_min,kc,rejected,zurek_ok``
    row per report.

    """
    directory = pathlib.Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    spectrum_rows = (
        {'series': key, 'threshold_ps': threshold, 'kc': kc, 'h_min': h_min}
        for key in sorted(spectra)
        for threshold, kc, h_min in spectra[key].grid)
    scatter_rows = (
        {'series': r.key,
         'class': r.provenance.series_class.value,
         'kind': r.provenance.kind.value,
         'station': r.provenance.station.value,
         'extracted': r.extracted,
         'h_min': r.h_min, 'kc': r.kc, 'rejected': r.rejected,
         'zurek_ok': r.zurek_ok}
        for r in reports)
    return [_write_csv(directory / 'spectra.csv', SPECTRUM_COLUMNS,
                       spectrum_rows),
            _write_csv(directory / 'scatter.csv', SCATTER_COLUMNS,
                       scatter_rows)]


def _flatten(report: SeriesReport) -> dict:
    document = report.as_dict()
    if document['battery'] is not None:
        document['battery'] = {
            'rejected': document['battery']['rejected'],
            **{t['test']: {'pass': t['pass'],
                           'min_p': min(t['p_values'], default=None)}
               for t in document['battery']['tests']}}
    document['errors'] = {k: v['title'] for k, v in document['errors'].items()}
    flat = flatdict.FlatDict(document, delimiter='.')
    return {k: '' if isinstance(v, flatdict.FlatDict) else v
            for k, v in flat.items()}


def write_series_table(reports: typing.Sequence[SeriesReport],
                       path: typing.Union[str, pathlib.Path]) -> pathlib.Path:
    """One CSV row per report with nested fields joined by ``.``"""
    rows = [_flatten(r) for r in reports]
    columns = sorted({column for row in rows for column in row})
    path = pathlib.Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    return _write_csv(path, columns or ['series'], rows)
