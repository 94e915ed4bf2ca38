import dataclasses
import enum
import math
import pathlib
import unittest

import numpy as np

from bellrand import models, transcoders


class Color(enum.Enum):
    RED = 'red'


@dataclasses.dataclass
class Point:
    x: int
    y: float


class DumpsTests(unittest.TestCase):

    def test_sorted_compact_output(self):
        self.assertEqual('{"a":1,"b":[1,2]}',
                         transcoders.dumps({'b': (1, 2), 'a': 1}))

    def test_numpy_values(self):
        value = {'i': np.int64(3), 'f': np.float32(0.5),
                 'b': np.bool_(True), 'a': np.arange(3)}
        self.assertEqual('{"a":[0,1,2],"b":true,"f":0.5,"i":3}',
                         transcoders.dumps(value))

    def test_non_finite_floats_become_null(self):
        self.assertEqual('[null,null,1.0]', transcoders.dumps(
            [math.nan, np.float64(math.inf), 1.0]))

    def test_enums_dataclasses_models_and_paths(self):
        self.assertEqual('"red"', transcoders.dumps(Color.RED))
        self.assertEqual('{"x":1,"y":null}',
                         transcoders.dumps(Point(1, math.nan)))
        self.assertEqual(models.RunMetadata(label='z'),
                         models.RunMetadata(**transcoders.loads(
                             transcoders.dumps(models.RunMetadata(
                                 label='z')))))
        self.assertEqual('"a/b"', transcoders.dumps(pathlib.Path('a/b')))

    def test_as_dict_is_preferred(self):
        provenance = models.Provenance(models.SeriesClass.CO,
                                       models.Kind.OUT, models.Station.A)
        self.assertEqual(provenance.as_dict(), transcoders.loads(
            transcoders.dumps(provenance)))

    def test_unsupported_type(self):
        with self.assertRaises(TypeError):
            transcoders.dumps(object())

    def test_pretty(self):
        self.assertEqual('{\n  "a": 1\n}', transcoders.dumps({'a': 1},
                                                             pretty=True))
