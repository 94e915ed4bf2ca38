from __future__ import annotations

import csv
import json
import pathlib
import tempfile
import uuid

import yaml

from bellrand import bits, cli, models, pipeline
from tests import base


class ConfigurationTestCase(base.TestCase):

    def setUp(self) -> None:
        super().setUp()
        self.mock_stderr = self.patch_object(cli.sys, 'stderr')
        self.temp_file = self._exit_stack.enter_context(
            tempfile.NamedTemporaryFile(mode='w+t', encoding='utf-8'))

    def write_config(self, document) -> str:
        yaml.dump(document, self.temp_file)
        self.temp_file.flush()
        return self.temp_file.name


class LoadConfigurationTests(ConfigurationTestCase):

    def test_missing_configuration_file(self):
        with self.assertRaises(SystemExit):
            cli.load_configuration(str(uuid.uuid4()), False)
        self.mock_stderr.write.assert_called()

    def test_yaml_load_failure(self):
        self.temp_file.write('\x00\x01\x02\x03')
        self.temp_file.flush()
        with self.assertRaises(SystemExit):
            cli.load_configuration(self.temp_file.name, False)
        self.mock_stderr.write.assert_called()

    def test_bad_yaml_doc(self):
        self.temp_file.write('<config/>')
        self.temp_file.flush()
        with self.assertRaises(SystemExit):
            cli.load_configuration(self.temp_file.name, False)
        self.mock_stderr.write.assert_called()

    def test_invalid_settings(self):
        for document in ({'derive': {'window_ps': 0}},
                         {'derive': {'scan': '10:0:5'}},
                         {'analyze': {'metrics': ['kc', 'entropy']}},
                         {'simulate': {'visibility': 1.5}},
                         {'serve': {'port': 8000}}):
            self.temp_file.seek(0)
            self.temp_file.truncate()
            with self.assertRaises(SystemExit, msg=document) as context:
                cli.load_configuration(self.write_config(document), False)
            self.assertEqual(1, context.exception.code)

    def test_defaults_without_file(self):
        settings, log_config = cli.load_configuration(None, False)
        self.assertEqual(cli.DeriveSettings(), settings.derive)
        self.assertEqual(pipeline.METRICS, settings.analyze.metrics)
        self.assertIs(cli.DEFAULT_LOG_CONFIG, log_config)

    def test_empty_file(self):
        settings, _ = cli.load_configuration(self.temp_file.name, False)
        self.assertEqual(cli.Settings(), settings)

    def test_values_are_applied(self):
        settings, _ = cli.load_configuration(self.write_config({
            'derive': {'window_ps': 2_000, 'scan': '-1000:1000:500'},
            'analyze': {'metrics': 'kc', 'tests': 'none'},
            'extract': {'m': 64, 'n': 128}}), False)
        self.assertEqual(2_000, settings.derive.window_ps)
        self.assertEqual(('kc',), settings.analyze.metrics)
        self.assertEqual(64, settings.extract.m)
        self.assertEqual(cli.DeriveSettings().workers,
                         settings.derive.workers)

    def test_example_configuration(self):
        path = pathlib.Path(__file__).parent.parent / 'example.yaml'
        settings, log_config = cli.load_configuration(str(path), False)
        self.assertEqual(pipeline.METRICS, settings.analyze.metrics)
        self.assertEqual('INFO', log_config['loggers']['bellrand']['level'])

    def test_debug_logging(self):
        _, log_config = cli.load_configuration(None, True)
        self.assertEqual('DEBUG', log_config['loggers']['bellrand']['level'])
        self.assertEqual('WARNING', log_config['root']['level'])
        self.assertEqual(
            'INFO', cli.DEFAULT_LOG_CONFIG['loggers']['bellrand']['level'])


class HelperTests(base.TestCase):

    def test_parse_scan(self):
        self.assertListEqual([-1000, -500, 0, 500, 1000],
                             list(cli.parse_scan('-1000:1000:500')))
        for value in ('1:2', 'a:b:c', '0:10:0', '10:0:1'):
            with self.assertRaises(ValueError, msg=value):
                cli.parse_scan(value)

    def test_series_filename(self):
        self.assertEqual('AL+OUT_A', cli._series_filename('AL+OUT(A)'))
        self.assertEqual('CO+TD', cli._series_filename('CO+TD'))
        self.assertEqual('SO+TD_B_extracted',
                         cli._series_filename('SO+TD(B)[extracted]'))

    def test_parser(self):
        args = cli._parse_cli_args(['analyze', '--in', 'series', '--out',
                                    'report.json', '--tau', 'auto'])
        self.assertEqual('analyze', args.command)
        self.assertEqual('auto', args.tau)
        self.assertFalse(args.nonlinear)
        self.patch_object(cli.sys, 'stderr')
        for argv in (['analyze', '--in', 'x', '--out', 'y', '--tau', 'x'],
                     ['derive', '--in', 'x', '--out-dir', 'y',
                      '--delay-ps', '5', '--scan-delay', '0:10:5'],
                     ['simulate', '--out', 'x', '--efficiency', '0.3,0.3'],
                     []):
            with self.assertRaises(SystemExit, msg=argv):
                cli._parse_cli_args(argv)

    def test_window_help_names_full_width(self):
        stdout = self.patch_object(cli.sys, 'stdout')
        with self.assertRaises(SystemExit):
            cli._parse_cli_args(['derive', '--help'])
        text = ' '.join(''.join(
            call.args[0] for call in stdout.write.call_args_list).split())
        self.assertIn('--window-ns WINDOW_NS Full width of the coincidence'
                      ' window in ns', text)


class CommandTests(base.TestCase):

    def setUp(self) -> None:
        super().setUp()
        self.directory = self.temp_dir()
        self.dict_config = self.patch_object(cli.logging_config,
                                             'dictConfig')
        self.mock_stderr = self.patch_object(cli.sys, 'stderr')

    def run_cli(self, *argv) -> int:
        with self.assertRaises(SystemExit) as context:
            cli.run([str(arg) for arg in argv])
        return context.exception.code

    def simulate(self, name: str = 'run.csv', *extra) -> pathlib.Path:
        path = self.directory / name
        self.assertEqual(0, self.run_cli(
            'simulate', '--duration-s', '0.2', '--seed', '3', '--out', path,
            *extra))
        return path

    def test_simulate(self):
        path = self.simulate()
        self.assertTrue(path.read_text().startswith('#'))
        self.dict_config.assert_called_once()
        binary = self.simulate('run.bin', '--format', 'binary')
        self.assertGreater(binary.stat().st_size, 0)

    def test_simulate_invalid_override(self):
        self.assertEqual(1, self.run_cli(
            'simulate', '--visibility', '2', '--out',
            self.directory / 'run.csv'))
        self.mock_stderr.write.assert_called()

    def test_pipeline(self):
        run_file = self.simulate()
        series_dir = self.directory / 'series'
        derive_status = self.run_cli('derive', '--in', run_file,
                                     '--window-ns', '1', '--grid', '49',
                                     '--out-dir', series_dir)
        run_document = json.loads((series_dir / cli.RUN_FILE).read_text())
        self.assertEqual(2 if run_document['errors'] else 0, derive_status)
        self.assertEqual(1_000, run_document['window_ps'])
        self.assertGreater(run_document['coincidences'], 0)
        self.assertIn('CO+TD', run_document['spectra'])
        self.assertTrue((series_dir / 'AL+OUT_A.bits').exists())
        self.assertTrue((series_dir / 'CO+TD.npy').exists())

        report_path = self.directory / 'report.json'
        analyze_status = self.run_cli(
            'analyze', '--in', series_dir, '--out', report_path,
            '--tests', 'none', '--metrics', 'kc,hmin')
        reports, run_errors = pipeline.read_report(report_path)
        self.assertEqual(2 if run_errors else 0, analyze_status)
        self.assertEqual(len(list(series_dir.glob('*.bits'))),
                         len(reports))
        expected = pipeline.analyze_series(
            bits.read_series(series_dir / 'AL+OUT_A.bits'),
            pipeline.AnalysisOptions(metrics='kc,hmin', tests='none'))
        loaded = next(r for r in reports if r.key == 'AL+OUT(A)')
        self.assertEqual(expected.kc, loaded.kc)
        self.assertIsNotNone(loaded.chsh_bound)

        table_path = self.directory / 'table.csv'
        figures = self.directory / 'figures'
        self.assertEqual(0, self.run_cli(
            'report', '--aggregate', str(self.directory / '*.json'),
            '--table', table_path, '--series-table',
            self.directory / 'series.csv', '--figures', figures,
            '--runs', series_dir / cli.RUN_FILE))
        with table_path.open() as handle:
            rows = list(csv.DictReader(handle))
        self.assertEqual(['CO', 'TD'], [rows[0]['class'], rows[0]['kind']])
        self.assertTrue((self.directory / 'series.csv').exists())
        with (figures / 'spectra.csv').open() as handle:
            spectra = {row['series'] for row in csv.DictReader(handle)}
        self.assertEqual(set(run_document['spectra']), spectra)

        stdout = self.patch_object(cli.sys, 'stdout')
        self.assertEqual(0, self.run_cli('report', '--aggregate',
                                         report_path))
        self.assertTrue(stdout.write.call_args[0][0].startswith(
            ','.join(pipeline.TABLE_COLUMNS)))

        extracted_path = self.directory / 'extracted.bits'
        self.assertEqual(0, self.run_cli(
            'extract', '--in', series_dir / 'AL+OUT_A.bits', '--m', '64',
            '--n', '128', '--out', extracted_path))
        extracted = bits.read_series(extracted_path)
        self.assertTrue(extracted.provenance.extracted)
        self.assertEqual(models.SeriesClass.AL,
                         extracted.provenance.series_class)
        self.assertEqual(0, len(extracted) % 64)

    def test_derive_with_delay_scan(self):
        run_file = self.simulate()
        series_dir = self.directory / 'series'
        self.run_cli('derive', '--in', run_file, '--window-ns', '1',
                     '--grid', '19', '--scan-delay', '-2000:2000:1000',
                     '--out-dir', series_dir)
        run_document = json.loads((series_dir / cli.RUN_FILE).read_text())
        self.assertListEqual([-2000, -1000, 0, 1000, 2000],
                             run_document['delay_scan']['delays'])
        self.assertEqual(0, run_document['delay_ps'])

    def test_analyze_without_series(self):
        self.assertEqual(2, self.run_cli(
            'analyze', '--in', self.directory, '--out',
            self.directory / 'report.json'))
        self.assertFalse((self.directory / 'report.json').exists())

    def test_report_without_matches(self):
        self.assertEqual(2, self.run_cli(
            'report', '--aggregate', str(self.directory / '*.json')))

    def test_missing_input_file(self):
        self.assertEqual(2, self.run_cli(
            'derive', '--in', self.directory / 'missing.csv', '--out-dir',
            self.directory / 'series'))
