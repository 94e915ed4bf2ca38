from __future__ import annotations

import contextlib
import functools
import pathlib
import tempfile
import unittest.mock

import numpy as np

from bellrand import models, synth


def random_bits(size: int, seed: int = 0, p: float = 0.5) -> np.ndarray:
    return (np.random.default_rng(seed).random(size) < p).astype(np.uint8)


def bit_series(value, **provenance) -> models.BitSeries:
    provenance.setdefault('series_class', models.SeriesClass.AL)
    provenance.setdefault('kind', models.Kind.OUT)
    provenance.setdefault('station', models.Station.A)
    return models.BitSeries(models.as_bits(value),
                            models.Provenance(**provenance))


@functools.lru_cache(4)
def simulated_run(duration: float = 0.5, seed: int = 7,
                  delay_ps: int = 0) -> models.EventStream:
    """A short synthetic run shared between test modules"""
    return synth.simulate_run(synth.SynthConfig(
        duration=duration, rng_seed=seed, delay_ps=delay_ps))


class TestCase(unittest.TestCase):

    def setUp(self) -> None:
        super().setUp()
        self._exit_stack = contextlib.ExitStack()
        self.addCleanup(self._exit_stack.close)

    def patch_object(self, target: object, attribute: str,
                     **kwargs) -> unittest.mock.MagicMock:
        return self._exit_stack.enter_context(
            unittest.mock.patch.object(target, attribute, **kwargs))

    def temp_dir(self) -> pathlib.Path:
        return pathlib.Path(self._exit_stack.enter_context(
            tempfile.TemporaryDirectory()))
