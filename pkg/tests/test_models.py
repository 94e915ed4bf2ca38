import unittest

import numpy as np

from bellrand import errors, models


class ChannelTests(unittest.TestCase):

    def test_station_and_gate(self):
        self.assertEqual(models.Station.A, models.Channel.A1.station)
        self.assertEqual(1, models.Channel.A1.gate)
        self.assertEqual(models.Station.B, models.Channel.B0.station)
        self.assertEqual(0, models.Channel.B0.gate)

    def test_for_station(self):
        self.assertEqual(models.Channel.B1,
                         models.Channel.for_station(models.Station.B, 1))


class RunMetadataTests(unittest.TestCase):

    def test_defaults(self):
        meta = models.RunMetadata()
        self.assertEqual(10, meta.resolution)
        self.assertEqual(0.0, meta.nominal_s_chsh)

    def test_s_chsh_above_tsirelson_bound(self):
        with self.assertRaises(errors.InvalidMetadata):
            models.RunMetadata.build(nominal_s_chsh=2.9)

    def test_unknown_field(self):
        with self.assertRaises(errors.InvalidMetadata):
            models.RunMetadata.build(temperature=4)

    def test_non_positive_resolution(self):
        with self.assertRaises(errors.InvalidMetadata):
            models.RunMetadata.build(resolution=0)


class EventStreamTests(unittest.TestCase):

    def test_from_events(self):
        stream = models.EventStream.from_events([
            models.DetectionEvent(5, models.Channel.A0),
            models.DetectionEvent(9, models.Channel.B1)])
        self.assertEqual(2, len(stream))
        self.assertEqual([5, 9], stream.timestamps.tolist())
        self.assertEqual([models.Channel.A0, models.Channel.B1],
                         [e.channel for e in stream])

    def test_equal_timestamps_are_allowed(self):
        stream = models.EventStream([3, 3, 4], [0, 2, 1])
        self.assertEqual(3, len(stream))

    def test_decreasing_timestamps(self):
        with self.assertRaises(errors.NonMonotonic) as context:
            models.EventStream([3, 7, 6], [0, 1, 2])
        self.assertIn('event 2', str(context.exception))

    def test_invalid_channel(self):
        with self.assertRaises(errors.MalformedRecord):
            models.EventStream([1, 2], [0, 4])

    def test_invalid_event(self):
        with self.assertRaises(errors.MalformedRecord):
            models.DetectionEvent(1, 7)
        with self.assertRaises(errors.MalformedRecord):
            models.DetectionEvent(-1, 0)

    def test_arrays_are_read_only(self):
        stream = models.EventStream([1, 2], [0, 1])
        with self.assertRaises(ValueError):
            stream.timestamps[0] = 5

    def test_equality_includes_metadata(self):
        a = models.EventStream([1, 2], [0, 1])
        b = models.EventStream([1, 2], [0, 1],
                               models.RunMetadata(label='other'))
        self.assertEqual(a, models.EventStream([1, 2], [0, 1]))
        self.assertNotEqual(a, b)


class ProvenanceTests(unittest.TestCase):

    def test_keys(self):
        self.assertEqual('CO+TD', models.Provenance(
            models.SeriesClass.CO, models.Kind.TD,
            models.Station.JOINT, 100).key)
        self.assertEqual('AL+OUT(A)', models.Provenance(
            models.SeriesClass.AL, models.Kind.OUT, models.Station.A).key)
        self.assertEqual('SO+OUT(B)[extracted]', models.Provenance(
            models.SeriesClass.SO, models.Kind.OUT, models.Station.B,
            extracted=True).key)

    def test_dict_round_trip(self):
        value = models.Provenance(models.SeriesClass.SO, models.Kind.TD,
                                  models.Station.B, 1234, label='run 3')
        self.assertEqual(value, models.Provenance.from_dict(value.as_dict()))

    def test_invalid_dict(self):
        with self.assertRaises(errors.InvalidMetadata):
            models.Provenance.from_dict({'class': 'XX', 'kind': 'TD',
                                         'station': 'A'})


class BitSeriesTests(unittest.TestCase):

    def test_from_string(self):
        value = models.BitSeries.from_string('0110')
        self.assertEqual([0, 1, 1, 0], value.bits.tolist())
        self.assertEqual(2, value.ones)
        self.assertEqual('0110', str(value))

    def test_invalid_bits(self):
        for value in ('012', [0, 1, 2], np.zeros((2, 2))):
            with self.subTest(value=value):
                with self.assertRaises(errors.InvalidInput):
                    models.as_bits(value)

    def test_bool_arrays(self):
        self.assertEqual([1, 0], models.as_bits(np.array([True, False]))
                         .tolist())

    def test_td_requires_threshold(self):
        with self.assertRaises(errors.InvalidMetadata):
            models.BitSeries([0, 1], models.Provenance(
                models.SeriesClass.AL, models.Kind.TD, models.Station.A))

    def test_out_rejects_threshold(self):
        with self.assertRaises(errors.InvalidMetadata):
            models.BitSeries([0, 1], models.Provenance(
                models.SeriesClass.AL, models.Kind.OUT, models.Station.A,
                threshold_ps=5))

    def test_packed(self):
        self.assertEqual(b'\xa0',
                         models.BitSeries.from_string('101').packed())


class TimeDiffSeriesTests(unittest.TestCase):

    def test_times(self):
        value = models.TimeDiffSeries([2, 3, 0], models.Provenance(
            models.SeriesClass.AL, models.Kind.TD, models.Station.A), 10)
        self.assertEqual([10, 12, 15, 15], value.times.tolist())

    def test_negative_differences(self):
        with self.assertRaises(errors.InvalidInput):
            models.TimeDiffSeries([2, -1], models.UNKNOWN_PROVENANCE)
