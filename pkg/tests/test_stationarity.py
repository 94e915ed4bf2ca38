import unittest

import numpy as np

from bellrand import errors, models, stationarity
from tests import base


class FlagConventionTests(unittest.TestCase):
    trials = 40
    n = 2_000

    def flags(self, make):
        adf, kpss = [], []
        for seed in range(self.trials):
            values = make(np.random.default_rng(500 + seed))
            adf.append(stationarity.adf_test(values).flag)
            kpss.append(stationarity.kpss_test(values).flag)
        return np.array(adf), np.array(kpss)

    def test_iid_gaussian(self):
        adf, kpss = self.flags(lambda rng: rng.normal(size=self.n))
        self.assertGreaterEqual(adf.mean(), 0.95)
        self.assertGreaterEqual((kpss == 0).mean(), 0.85)
        self.assertGreaterEqual(((adf == 1) & (kpss == 0)).mean(), 0.85)

    def test_random_walk(self):
        adf, kpss = self.flags(
            lambda rng: np.cumsum(rng.normal(size=self.n)))
        self.assertGreaterEqual((adf == 0).mean(), 0.85)
        self.assertGreaterEqual(kpss.mean(), 0.85)

    def test_linear_trend(self):
        rng = np.random.default_rng(3)
        values = 0.01 * np.arange(self.n) + rng.normal(0, 0.1, self.n)
        self.assertEqual(0, stationarity.kpss_test(values).flag)

    def test_level_kpss_rejects_trend(self):
        values = 0.01 * np.arange(self.n) + np.random.default_rng(
            4).normal(0, 0.1, self.n)
        self.assertEqual(1, stationarity.kpss_test(values, trend=False).flag)


class InputTests(unittest.TestCase):

    def test_bits_are_mapped_to_plus_minus_one(self):
        bits = base.random_bits(1_000, 5)
        expected = stationarity.adf_test(2.0 * bits - 1.0)
        self.assertEqual(expected, stationarity.adf_test(bits))
        self.assertEqual(expected, stationarity.adf_test(
            models.BitSeries(bits)))

    def test_lag_orders(self):
        bits = base.random_bits(10_000, 6)
        self.assertEqual(37, stationarity.adf_test(bits).lags)
        self.assertEqual(12, stationarity.kpss_test(bits).lags)

    def test_constant(self):
        with self.assertRaises(errors.SingularRegression):
            stationarity.adf_test(np.ones(100))
        with self.assertRaises(errors.SingularRegression):
            stationarity.kpss_test(np.zeros(100, dtype=np.uint8))

    def test_too_short(self):
        with self.assertRaises(errors.TooShort):
            stationarity.adf_test(np.arange(49.0))

    def test_unsupported_alpha(self):
        with self.assertRaises(errors.UnsupportedAlpha):
            stationarity.adf_test(np.arange(100.0), 0.2)

    def test_combined_result(self):
        result = stationarity.stationarity(base.random_bits(2_000, 7))
        self.assertEqual(1, result.adf_flag)
        self.assertEqual(0.05, result.alpha)
        self.assertEqual(25, result.lags_used)
