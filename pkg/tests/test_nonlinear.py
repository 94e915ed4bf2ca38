import unittest

import numpy as np

from bellrand import errors, models, nonlinear
from tests import base


def henon(size: int, a: float = 1.4, b: float = 0.3,
          transient: int = 1_000) -> np.ndarray:
    x, y = 0.0, 0.0
    values = np.empty(size + transient)
    for i in range(values.size):
        x, y = 1.0 - a * x * x + y, b * x
        values[i] = x
    return values[transient:]


def logistic(size: int, r: float = 4.0, transient: int = 1_000) -> np.ndarray:
    x = 0.3
    values = np.empty(size + transient)
    for i in range(values.size):
        x = r * x * (1.0 - x)
        values[i] = x
    return values[transient:]


def sine(size: int, period: float = 40.3) -> np.ndarray:
    return np.sin(2 * np.pi * np.arange(size) / period)


def time_diffs(diffs, start_ps: int = 0) -> models.TimeDiffSeries:
    return models.TimeDiffSeries(
        np.asarray(diffs), models.Provenance(
            models.SeriesClass.CO, models.Kind.TD, models.Station.JOINT),
        start_ps)


class EmbedTests(unittest.TestCase):

    def test_delay_vectors(self):
        vectors = nonlinear.embed(np.arange(10), 2, 3)
        self.assertEqual((6, 3), vectors.shape)
        self.assertListEqual([0, 2, 4], vectors[0].tolist())
        self.assertListEqual([5, 7, 9], vectors[-1].tolist())

    def test_time_diff_series(self):
        vectors = nonlinear.embed(time_diffs([5, 6, 7, 8]), 1, 2)
        self.assertListEqual([[5, 6], [6, 7], [7, 8]], vectors.tolist())

    def test_too_short(self):
        with self.assertRaises(errors.TooShort):
            nonlinear.embed(np.arange(5), 3, 3)

    def test_invalid_parameters(self):
        with self.assertRaises(errors.InvalidInput):
            nonlinear.embed(np.arange(5), 0, 2)


class DelayTests(unittest.TestCase):

    def test_white_noise_falls_back_to_one(self):
        values = np.random.default_rng(1).normal(size=5_000)
        self.assertEqual(1, nonlinear.ami_delay(values))

    def test_sine_near_quarter_period(self):
        self.assertTrue(7 <= nonlinear.ami_delay(sine(20_000)) <= 13)

    def test_flat_minimum_resolves_to_its_middle(self):
        self.assertIn(nonlinear.ami_delay(sine(20_000, period=20)), (4, 5, 6))

    def test_too_short(self):
        with self.assertRaises(errors.TooShort):
            nonlinear.ami_delay(np.arange(100.0), max_lag=20)

    def test_constant(self):
        with self.assertRaises(errors.Degenerate):
            nonlinear.ami_delay(np.ones(1_000), max_lag=5)


class FalseNearestNeighbourTests(unittest.TestCase):

    def test_henon_embeds_in_two_dimensions(self):
        result = nonlinear.false_nearest_neighbors(henon(10_000), 1, 6)
        self.assertEqual(2, result.d_e)
        self.assertTrue(result.saturated)
        self.assertGreater(result.fnn_fractions[0][1], 0.1)

    def test_white_noise_never_saturates(self):
        values = np.random.default_rng(2).normal(size=5_000)
        result = nonlinear.false_nearest_neighbors(values, 1, 12)
        self.assertIsNone(result.d_e)
        self.assertFalse(result.saturated)
        self.assertEqual(list(range(1, 13)),
                         [d for d, _ in result.fnn_fractions])

    def test_truncated_sweep_leaves_dimension_undetermined(self):
        result = nonlinear.false_nearest_neighbors(sine(1_000), 100, 12)
        self.assertEqual([1, 2, 3], [d for d, _ in result.fnn_fractions])
        self.assertIsNone(result.d_e)
        self.assertFalse(result.saturated)

    def test_too_short(self):
        with self.assertRaises(errors.TooShort):
            nonlinear.false_nearest_neighbors(np.arange(500.0), 1)

    def test_constant(self):
        with self.assertRaises(errors.Degenerate):
            nonlinear.false_nearest_neighbors(np.ones(2_000), 1)


class LyapunovTests(unittest.TestCase):

    def test_henon_is_chaotic(self):
        result = nonlinear.largest_lyapunov(henon(5_000), 1, 2)
        self.assertTrue(0.25 <= result.lyapunov <= 0.6, result.lyapunov)
        self.assertIn(result.horizon, (2, 3, 4))
        self.assertGreaterEqual(result.fit_r2, nonlinear.LYAPUNOV_MIN_R2)

    def test_logistic_map_rate(self):
        result = nonlinear.largest_lyapunov(logistic(10_000), 1, 2)
        self.assertAlmostEqual(np.log(2), result.lyapunov,
                               delta=0.1 * np.log(2))
        self.assertEqual(2, result.horizon)
        self.assertGreaterEqual(result.fit_range[1],
                                nonlinear.LYAPUNOV_MIN_FIT)

    def test_time_reversed_henon_has_no_linear_region(self):
        with self.assertRaises(errors.NoLinearRegion):
            nonlinear.largest_lyapunov(henon(10_000)[::-1].copy(), 1, 2)

    def test_sine_does_not_diverge(self):
        result = nonlinear.largest_lyapunov(sine(5_000), 10, 2)
        self.assertLessEqual(result.lyapunov, 0.0)
        self.assertIsNone(result.horizon)

    def test_invalid_parameters(self):
        with self.assertRaises(errors.InvalidInput):
            nonlinear.largest_lyapunov(henon(2_000), 0, 2)

    def test_too_short(self):
        with self.assertRaises(errors.TooShort):
            nonlinear.largest_lyapunov(henon(500), 1, 2)

    def test_horizon_of_predictability(self):
        self.assertEqual(2, nonlinear.horizon_of_predictability(0.5))
        self.assertEqual(3, nonlinear.horizon_of_predictability(0.42))
        self.assertEqual(8, nonlinear.horizon_of_predictability(0.13))
        self.assertEqual(3, nonlinear.horizon_of_predictability(1 / 3))
        self.assertIsNone(nonlinear.horizon_of_predictability(0.0))
        self.assertIsNone(nonlinear.horizon_of_predictability(-0.2))


class PredictionTests(base.TestCase):

    def setUp(self) -> None:
        super().setUp()
        self.outcomes = {'00': time_diffs(np.full(50, 10)),
                         '11': time_diffs(np.full(50, 1_000))}

    def test_nearest_forecast_wins(self):
        result = nonlinear.predict_outcomes(
            self.outcomes, [510, 520, 51_000], ['00', '00', '00'],
            embedding=(1, 2))
        self.assertListEqual(['00', '00', '11'], result.guesses)
        self.assertAlmostEqual(2 / 3, result.accuracy)
        self.assertDictEqual({'00': (1, 2), '11': (1, 2)},
                             result.embeddings)

    def test_no_truth_no_accuracy(self):
        result = nonlinear.predict_outcomes(self.outcomes, [510],
                                            embedding=(1, 2))
        self.assertIsNone(result.accuracy)

    def test_truth_length_mismatch(self):
        with self.assertRaises(errors.LengthMismatch):
            nonlinear.predict_outcomes(self.outcomes, [510], ['00', '11'],
                                       embedding=(1, 2))

    def test_unembeddable_outcomes(self):
        with self.assertRaises(errors.NoPrediction):
            nonlinear.predict_outcomes(self.outcomes, [510])

    def test_estimated_embedding_skips_noise(self):
        false_nearest = self.patch_object(
            nonlinear, 'false_nearest_neighbors',
            side_effect=[nonlinear.EmbeddingResult(1, [], 2),
                         nonlinear.EmbeddingResult(1, [], None)])
        self.patch_object(nonlinear, 'ami_delay', return_value=1)
        result = nonlinear.predict_outcomes(self.outcomes, [510, 51_000])
        self.assertEqual(2, false_nearest.call_count)
        self.assertDictEqual({'00': (1, 2), '11': None}, result.embeddings)
        self.assertListEqual(['00', '00'], result.guesses)

    def test_insufficient_history(self):
        with self.assertRaises(errors.InsufficientHistory):
            nonlinear.predict_outcomes({'00': time_diffs([10])}, [20],
                                       embedding=(1, 3))
