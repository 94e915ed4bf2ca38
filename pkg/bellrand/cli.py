"""
bellrand CLI application

"""
import argparse
import glob
import logging
import pathlib
import sys
import typing
from logging import config as logging_config

import numpy as np
import pydantic
import yaml

from bellrand import (bits, errors, models, pipeline, series, stats, synth,
                      timetag, toeplitz, transcoders, version)

LOGGER = logging.getLogger(__name__)

RUN_FILE = 'run.json'

DEFAULT_LOG_CONFIG = {
    'version': 1,
    'formatters': {
        'verbose': {
            'format':
                '%(levelname) -10s %(asctime)s %(process)-6d '
                '%(name) -20s %(message)s',
            'datefmt': '%Y-%m-%d %H:%M:%S'
        }
    },
    'handlers': {
        'console': {
            'class': 'logging.StreamHandler',
            'formatter': 'verbose'
        }
    },
    'loggers': {
        'bellrand': {
            'level': 'INFO'
        }
    },
    'root': {
        'level': 'WARNING',
        'handlers': ['console']
    },
    'disable_existing_loggers': True,
    'incremental': False
}


class _Section(pydantic.BaseModel):
    class Config:
        allow_mutation = False
        extra = pydantic.Extra.forbid


class DeriveSettings(_Section):
    window_ps: int = series.DEFAULT_WINDOW_PS
    delay_ps: int = 0
    scan: typing.Optional[str] = None
    grid_quantiles: int = series.DEFAULT_GRID_QUANTILES
    workers: int = 1

    @pydantic.validator('window_ps', 'grid_quantiles', 'workers')
    def _check_positive(cls, value: int) -> int:
        if value < 1:
            raise ValueError('must be positive')
        return value

    @pydantic.validator('scan')
    def _check_scan(cls, value: typing.Optional[str]):
        if value is not None:
            parse_scan(value)
        return value


class ExtractSettings(_Section):
    m: int = toeplitz.DEFAULT_M
    n: int = toeplitz.DEFAULT_N
    freeze_matrix: bool = False


class Settings(_Section):
    simulate: synth.SynthConfig = synth.SynthConfig()
    derive: DeriveSettings = DeriveSettings()
    analyze: pipeline.AnalysisOptions = pipeline.AnalysisOptions()
    extract: ExtractSettings = ExtractSettings()
    error_url: typing.Optional[str] = None
    logging: typing.Optional[dict] = None


def parse_scan(value: str) -> range:
    """Parse a ``lo:hi:step`` delay scan in picoseconds, ``hi`` included"""
    try:
        low, high, step = (int(v) for v in value.split(':'))
    except ValueError:
        raise ValueError(f'invalid delay scan {value!r}, expected lo:hi:step')
    if step <= 0 or high < low:
        raise ValueError(f'invalid delay scan {value!r}')
    return range(low, high + 1, step)


def load_configuration(config: typing.Optional[str], debug: bool) \
        -> typing.Tuple[Settings, dict]:
    """Read the optional YAML file into validated :class:`Settings`"""
    document = {}
    if config is not None:
        config_file = pathlib.Path(config)
        if not config_file.exists():
            sys.stderr.write(
                'Configuration file {} not found\n'.format(config))
            sys.exit(1)
        with config_file.open('r') as handle:
            try:
                document = yaml.safe_load(handle)
            except yaml.YAMLError as error:
                sys.stderr.write(
                    'Failed to load configuration file: {}\n'.format(error))
                sys.exit(1)
        if document is None:
            document = {}
        elif not isinstance(document, dict):
            sys.stderr.write(
                'Configuration file {} is not a YAML mapping\n'.format(
                    config_file.name))
            sys.exit(1)

    try:
        settings = Settings(**document)
    except pydantic.ValidationError as error:
        sys.stderr.write('Invalid configuration: {}\n'.format(
            _one_line(error)))
        sys.exit(1)

    log_config = settings.logging or DEFAULT_LOG_CONFIG
    if debug:
        log_config = {
            **log_config,
            'loggers': {
                **log_config.get('loggers', {}),
                'bellrand': {
                    **log_config.get('loggers', {}).get('bellrand', {}),
                    'level': 'DEBUG'
                }
            }
        }
    return settings, log_config


def _one_line(error: Exception) -> str:
    return ' '.join(str(error).split())


def _override(model: pydantic.BaseModel, **values) -> pydantic.BaseModel:
    """Return a validated copy of ``model`` with the non-:data:`None`
    ``values`` applied.

    """
    values = {k: v for k, v in values.items() if v is not None}
    try:
        return type(model)(**{**model.dict(), **values})
    except pydantic.ValidationError as error:
        sys.stderr.write('Invalid arguments: {}\n'.format(_one_line(error)))
        sys.exit(1)


def _series_filename(key: str) -> str:
    """``AL+OUT(A)`` becomes ``AL+OUT_A``"""
    return key.replace('(', '_').replace(')', '').replace(
        '[extracted]', '_extracted')


def _read_stream(paths: typing.Sequence[str]) -> models.EventStream:
    streams = []
    for path in paths:
        try:
            data = pathlib.Path(path).read_bytes()
        except OSError as error:
            raise errors.InvalidInput('Failed to read %s: %s', path, error)
        streams.append(timetag.parse_timetag(data))
    if len(streams) == 1:
        return streams[0]
    return timetag.merge_streams(streams)


def _expand(patterns: typing.Sequence[str]) -> typing.List[pathlib.Path]:
    paths = sorted({pathlib.Path(p) for pattern in patterns
                    for p in glob.glob(pattern)})
    if not paths:
        raise errors.EmptyInput('No files match %s', ', '.join(patterns))
    return paths


def simulate(args: argparse.Namespace, settings: Settings,
             run_stats: stats.Stats) -> int:
    config = _override(
        settings.simulate,
        visibility=args.visibility,
        pair_rate=args.pair_rate,
        background_singles_rate=args.singles_rate,
        efficiency=args.efficiency,
        jitter_sigma=args.jitter_ps,
        duration=args.duration_s,
        rng_seed=args.seed,
        setting=args.setting,
        delay_ps=args.delay_ps)
    with run_stats.track_duration({'command': 'simulate'}):
        stream = synth.simulate_run(config)
    path = pathlib.Path(args.out)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(timetag.write_timetag(stream, args.format))
    run_stats.incr({'events': 'written'}, len(stream))
    LOGGER.info('Wrote %i events to %s', len(stream), path)
    return 0


def derive(args: argparse.Namespace, settings: Settings,
           run_stats: stats.Stats) -> int:
    options = _override(
        settings.derive,
        window_ps=None if args.window_ns is None
        else int(round(args.window_ns * 1000)),
        delay_ps=args.delay_ps,
        scan=args.scan_delay,
        grid_quantiles=args.grid,
        workers=args.workers)
    if args.delay_ps is not None and options.scan is not None:
        options = DeriveSettings(**{**options.dict(), 'scan': None})
    stream = _read_stream(args.inputs)
    scan = None if options.scan is None else parse_scan(options.scan)
    with run_stats.track_duration({'command': 'derive'}):
        derived = series.derive_all(stream, options.window_ps,
                                    options.delay_ps, scan,
                                    options.grid_quantiles, options.workers)
    out_dir = pathlib.Path(args.out_dir)
    for key, value in sorted(derived.series.items()):
        bits.write_series(value, out_dir / _series_filename(key),
                          derived.time_differences.get(key))
        run_stats.incr({'series': 'written'})
    run_document = {
        'schema': pipeline.SCHEMA,
        'meta': stream.meta,
        'coincidences': len(derived.coincidences),
        'window_ps': options.window_ps,
        'delay_ps': derived.coincidences.delay,
        'spectra': {k: v.as_dict() for k, v in derived.spectra.items()},
        'errors': derived.errors,
    }
    if derived.delay_scan is not None:
        run_document['delay_scan'] = {
            'delay': derived.delay_scan.delay,
            'count': derived.delay_scan.count,
            'low_contrast': derived.delay_scan.low_contrast,
            'delays': derived.delay_scan.delays,
            'counts': derived.delay_scan.counts,
        }
    (out_dir / RUN_FILE).write_text(
        transcoders.dumps(run_document, pretty=True) + '\n')
    LOGGER.info('Wrote %i series to %s', len(derived.series), out_dir)
    return 2 if derived.errors else 0


def _read_run(directory: pathlib.Path) -> dict:
    path = directory / RUN_FILE
    if not path.exists():
        return {}
    try:
        return transcoders.loads(path.read_text())
    except ValueError as error:
        raise errors.InvalidMetadata('Invalid run file %s: %s', path, error)


def analyze(args: argparse.Namespace, settings: Settings,
            run_stats: stats.Stats) -> int:
    options = _override(
        settings.analyze,
        alpha=args.alpha,
        tests=args.tests,
        metrics=args.metrics,
        nonlinear=args.nonlinear or None,
        dmax=args.dmax,
        tau=None if args.tau in (None, 'auto') else int(args.tau),
        workers=args.workers,
        force=args.force or None)
    directory = pathlib.Path(args.input)
    paths = sorted(directory.glob('*.bits'))
    if not paths:
        raise errors.EmptyInput('No series found in %s', directory)
    items = [(bits.read_series(p), bits.read_diffs(p)) for p in paths]
    run_document = _read_run(directory)
    s_chsh = args.s_chsh
    if s_chsh is None:
        s_chsh = run_document.get('meta', {}).get('nominal_s_chsh') or None
    with run_stats.track_duration({'command': 'analyze'}):
        reports = pipeline.analyze_many(items, options, s_chsh, run_stats)
    run_errors = dict(run_document.get('errors', {}))
    for report in reports:
        for metric, document in report.errors.items():
            run_errors[f'{report.key}/{metric}'] = document
    pipeline.write_report(args.out, reports, run_errors)
    LOGGER.info('Wrote %i series reports to %s (%i errors)', len(reports),
                args.out, len(run_errors))
    return 2 if run_errors else 0


def extract(args: argparse.Namespace, settings: Settings,
            run_stats: stats.Stats) -> int:
    options = _override(settings.extract, m=args.m, n=args.n,
                        freeze_matrix=args.freeze_matrix or None)
    raw = bits.read_series(args.input)
    with run_stats.track_duration({'command': 'extract'}):
        extracted = toeplitz.extract_series(raw, options.m, options.n,
                                            options.freeze_matrix)
    path = bits.write_series(extracted, args.out)
    LOGGER.info('Extracted %i bits from %i raw bits into %s',
                len(extracted), len(raw), path)
    return 0


def _spectrum(document: dict) -> series.ThresholdSpectrum:
    grid = np.asarray(document['grid'], dtype=np.float64).reshape(-1, 3)
    return series.ThresholdSpectrum(
        grid[:, 0].astype(np.int64), grid[:, 1], grid[:, 2],
        document['theta_star'], document['kc_argmax'],
        document['h_min_argmax'], document['median'])


def report(args: argparse.Namespace, settings: Settings,
           run_stats: stats.Stats) -> int:
    reports, run_errors = [], {}
    for path in _expand(args.aggregate):
        loaded, loaded_errors = pipeline.read_report(path)
        reports.extend(loaded)
        run_errors.update(loaded_errors)
    table = pipeline.aggregate(reports)
    if args.table:
        path = pathlib.Path(args.table)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(table.to_csv())
        LOGGER.info('Wrote %i aggregate rows to %s', len(table.rows), path)
    else:
        sys.stdout.write(table.to_csv())
    if args.series_table:
        pipeline.write_series_table(reports, args.series_table)
    if args.figures:
        spectra = {}
        for path in _expand(args.runs) if args.runs else []:
            for key, value in _read_run(path.parent).get(
                    'spectra', {}).items():
                spectra[key] = _spectrum(value)
        pipeline.emit_figures(reports, spectra, args.figures)
    run_stats.incr({'reports': 'aggregated'}, len(reports))
    return 0


COMMANDS = {
    'simulate': simulate,
    'derive': derive,
    'analyze': analyze,
    'extract': extract,
    'report': report,
}


def _efficiency(value: str) -> typing.Tuple[float, ...]:
    try:
        values = tuple(float(v) for v in value.split(','))
    except ValueError:
        raise argparse.ArgumentTypeError(f'invalid efficiency {value!r}')
    if len(values) != 4:
        raise argparse.ArgumentTypeError(
            'efficiency takes four values: A0,A1,B0,B1')
    return values


def _tau(value: str) -> str:
    if value != 'auto' and not value.isdigit():
        raise argparse.ArgumentTypeError('tau must be "auto" or an integer')
    return value


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        'bellrand',
        formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    parser.add_argument(
        '--debug', action='store_true', help='Enable debug logging')
    parser.add_argument(
        '-c', '--config', metavar='CONFIG FILE', help='Configuration File')
    parser.add_argument('-V', '--version', action='version', version=version)
    commands = parser.add_subparsers(dest='command', required=True)

    sub = commands.add_parser(
        'simulate', help='Generate a synthetic time-tag file',
        formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    sub.add_argument('--visibility', type=float)
    sub.add_argument('--pair-rate', type=float, help='Pairs per second')
    sub.add_argument('--singles-rate', type=float,
                     help='Background singles per second per station')
    sub.add_argument('--efficiency', type=_efficiency,
                     help='Detector efficiencies A0,A1,B0,B1')
    sub.add_argument('--jitter-ps', type=float)
    sub.add_argument('--duration-s', type=float)
    sub.add_argument('--seed', type=int)
    sub.add_argument('--setting', choices=[s.value for s in synth.Setting])
    sub.add_argument('--delay-ps', type=int,
                     help='Fixed latency added to station B')
    sub.add_argument('--format', choices=[f.value for f in timetag.Format],
                     default=timetag.Format.CSV.value)
    sub.add_argument('--out', required=True)

    sub = commands.add_parser(
        'derive', help='Derive binary series from time-tag files',
        formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    sub.add_argument('--in', dest='inputs', nargs='+', required=True,
                     help='Time-tag files, merged when more than one')
    sub.add_argument('--window-ns', type=float,
                     help='Full width of the coincidence window in ns')
    delay = sub.add_mutually_exclusive_group()
    delay.add_argument('--delay-ps', type=int)
    delay.add_argument('--scan-delay', metavar='LO:HI:STEP',
                       help='Optimize the delay over this range')
    sub.add_argument('--grid', type=int, help='Threshold quantile count')
    sub.add_argument('--workers', type=int)
    sub.add_argument('--out-dir', required=True)

    sub = commands.add_parser(
        'analyze', help='Test and measure derived series',
        formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    sub.add_argument('--in', dest='input', required=True,
                     help='Directory written by derive')
    sub.add_argument('--out', required=True, help='Report JSON file')
    sub.add_argument('--tests', choices=['nist', 'none'])
    sub.add_argument('--metrics', help='Comma separated metrics or "all"')
    sub.add_argument('--alpha', type=float)
    sub.add_argument('--nonlinear', action='store_true')
    sub.add_argument('--dmax', type=int)
    sub.add_argument('--tau', type=_tau, help='"auto" or a delay')
    sub.add_argument('--s-chsh', type=float,
                     help='CHSH value for the min-entropy bound')
    sub.add_argument('--workers', type=int)
    sub.add_argument('--force', action='store_true',
                     help='Run battery tests below their minimum length')

    sub = commands.add_parser(
        'extract', help='Toeplitz-hash a packed-bit series',
        formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    sub.add_argument('--m', type=int)
    sub.add_argument('--n', type=int)
    sub.add_argument('--freeze-matrix', action='store_true')
    sub.add_argument('--in', dest='input', required=True)
    sub.add_argument('--out', required=True)

    sub = commands.add_parser(
        'report', help='Aggregate analysis reports',
        formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    sub.add_argument('--aggregate', nargs='+', required=True,
                     help='Report files or glob patterns')
    sub.add_argument('--table', help='Aggregate CSV, stdout when omitted')
    sub.add_argument('--series-table', help='Per-series CSV')
    sub.add_argument('--figures', help='Directory for plot data')
    sub.add_argument('--runs', nargs='+',
                     help='run.json files holding threshold spectra')
    return parser


def _parse_cli_args(argv: typing.Optional[typing.Sequence[str]] = None) \
        -> argparse.Namespace:
    """Parse ``argv``, or ``sys.argv`` when omitted"""
    return _build_parser().parse_args(argv)


def run(argv: typing.Optional[typing.Sequence[str]] = None) -> None:
    args = _parse_cli_args(argv)
    settings, log_config = load_configuration(args.config, args.debug)
    logging_config.dictConfig(log_config)
    if settings.error_url:
        errors.set_error_url(settings.error_url)
    run_stats = stats.Stats()
    try:
        status = COMMANDS[args.command](args, settings, run_stats)
    except errors.InvalidConfig as error:
        sys.stderr.write('{}\n'.format(error))
        status = 1
    except errors.ApplicationError as error:
        LOGGER.error('%s failed: %s', args.command, error)
        status = 2
    run_stats.log_summary()
    sys.exit(status)
