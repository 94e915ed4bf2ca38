import unittest

import numpy as np

from bellrand import errors, models, timetag
from tests import base


class ParseCSVTests(unittest.TestCase):

    def test_parse(self):
        stream = timetag.parse_timetag(
            b'timestamp_ps,channel\n10,A0\n10,B1\n25,A1\n')
        self.assertEqual([10, 10, 25], stream.timestamps.tolist())
        self.assertEqual([0, 3, 1], stream.channels.tolist())
        self.assertEqual(models.RunMetadata(), stream.meta)

    def test_empty_input(self):
        self.assertEqual(0, len(timetag.parse_timetag(b'')))

    def test_header_only(self):
        self.assertEqual(0, len(timetag.parse_timetag(
            b'timestamp_ps,channel\n')))

    def test_metadata_line(self):
        stream = timetag.parse_timetag(
            b'#meta {"nominal_s_chsh": 2.5, "label": "x"}\n'
            b'timestamp_ps,channel\n1,A0\n')
        self.assertEqual(2.5, stream.meta.nominal_s_chsh)
        self.assertEqual('x', stream.meta.label)

    def test_crlf_line_endings(self):
        stream = timetag.parse_timetag(
            b'timestamp_ps,channel\r\n1,A0\r\n2,B0\r\n')
        self.assertEqual([0, 2], stream.channels.tolist())

    def test_bad_channel_reports_line(self):
        with self.assertRaises(errors.MalformedRecord) as context:
            timetag.parse_timetag(b'timestamp_ps,channel\n1,A0\n2,C3\n')
        self.assertIn('Line 3', str(context.exception))

    def test_bad_timestamp(self):
        for row in (b'-1,A0', b'x,A0', b'1.5,A0', b',A0'):
            with self.subTest(row=row):
                with self.assertRaises(errors.MalformedRecord):
                    timetag.parse_timetag(
                        b'timestamp_ps,channel\n' + row + b'\n')

    def test_bad_header(self):
        with self.assertRaises(errors.MalformedRecord):
            timetag.parse_timetag(b'time,chan\n1,A0\n')

    def test_decreasing_timestamps(self):
        with self.assertRaises(errors.NonMonotonic):
            timetag.parse_timetag(b'timestamp_ps,channel\n5,A0\n4,A0\n')

    def test_invalid_metadata(self):
        with self.assertRaises(errors.InvalidMetadata):
            timetag.parse_timetag(b'#meta {"nominal_s_chsh": 3.5}\n')
        with self.assertRaises(errors.InvalidMetadata):
            timetag.parse_timetag(b'#meta not json\n')


class WriteTests(unittest.TestCase):

    def test_empty_default_stream_is_header_only(self):
        stream = models.EventStream(np.empty(0, np.int64),
                                    np.empty(0, np.uint8))
        self.assertEqual(b'timestamp_ps,channel\n',
                         timetag.write_timetag(stream))

    def test_csv_layout(self):
        stream = models.EventStream([1, 20], [1, 2])
        self.assertEqual(b'timestamp_ps,channel\n1,A1\n20,B0\n',
                         timetag.write_timetag(stream, 'csv'))

    def test_formats_preserve_simulated_run(self):
        stream = base.simulated_run(0.05)
        for fmt in timetag.Format:
            with self.subTest(fmt=fmt):
                self.assertEqual(stream, timetag.parse_timetag(
                    timetag.write_timetag(stream, fmt)))

    def test_binary_truncated(self):
        data = timetag.write_timetag(models.EventStream([1, 2], [0, 1]),
                                     timetag.Format.BINARY)
        with self.assertRaises(errors.MalformedRecord):
            timetag.parse_timetag(data[:-10])

    def test_binary_bad_channel(self):
        data = bytearray(timetag.write_timetag(
            models.EventStream([1], [0]), timetag.Format.BINARY))
        data[len(timetag.MAGIC) + 8 + 8] = 9
        with self.assertRaises(errors.MalformedRecord):
            timetag.parse_timetag(bytes(data))


class StationTests(unittest.TestCase):

    def setUp(self):
        self.stream = models.EventStream([1, 2, 3, 4, 5], [0, 3, 1, 2, 0])

    def test_station_split(self):
        self.assertEqual([(1, 0), (3, 1), (5, 0)],
                         timetag.station_split(self.stream, models.Station.A))
        self.assertEqual([(2, 1), (4, 0)],
                         timetag.station_split(self.stream, models.Station.B))

    def test_station_events_keep_positions(self):
        events = timetag.station_events(self.stream, models.Station.B)
        self.assertEqual([1, 3], events.indices.tolist())

    def test_joint_is_not_a_station(self):
        with self.assertRaises(errors.InvalidInput):
            timetag.station_events(self.stream, models.Station.JOINT)


class MergeTests(unittest.TestCase):

    def test_merge_is_stable(self):
        a = models.EventStream([1, 5, 9], [0, 1, 0])
        b = models.EventStream([5, 7], [2, 3])
        merged = timetag.merge_streams([a, b])
        self.assertEqual([1, 5, 5, 7, 9], merged.timestamps.tolist())
        self.assertEqual([0, 1, 2, 3, 0], merged.channels.tolist())

    def test_metadata_must_agree(self):
        a = models.EventStream([1], [0], models.RunMetadata(label='a'))
        b = models.EventStream([2], [2], models.RunMetadata(label='b'))
        with self.assertRaises(errors.InconsistentInputs):
            timetag.merge_streams([a, b])
