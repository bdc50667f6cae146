from unittest import TestCase

import numpy as np
import torch

from data_structure.fixed_point import FixedPointEngine, FxValue, QFormat
from model.activation import (ActivationSet, LutKind, build_lut, exact_sigmoid, exact_sigmoid_derivative,
                              lut_eval, lut_sup_error)
from utils.errors import LutConfigError


Q32_16 = QFormat(32, 16)
ULP = 2.0 ** -16


class TestExactFunctions(TestCase):
    def test_sigmoid(self):
        self.assertAlmostEqual(exact_sigmoid(0.0), 0.5, places=15)
        self.assertAlmostEqual(exact_sigmoid(0.2), 0.549833997312478, places=12)
        for x in (0.1, 1.0, 7.5, 40.0):
            self.assertAlmostEqual(exact_sigmoid(-x) + exact_sigmoid(x), 1.0, places=12)
        self.assertEqual(exact_sigmoid(-1000.0), 0.0)
        self.assertEqual(exact_sigmoid(1000.0), 1.0)

    def test_derivative(self):
        self.assertAlmostEqual(exact_sigmoid_derivative(0.0), 0.25, places=15)
        self.assertAlmostEqual(exact_sigmoid_derivative(2.0), 0.104993585403507, places=12)
        self.assertAlmostEqual(exact_sigmoid_derivative(-3.0), exact_sigmoid_derivative(3.0), places=15)

    def test_arrays(self):
        xs = np.array([-1.0, 0.0, 1.0])
        np.testing.assert_allclose(exact_sigmoid(xs), 1.0 / (1.0 + np.exp(-xs)))


class TestBuildLut(TestCase):
    def test_smallest_table(self):
        lut = build_lut(LutKind.SIGMOID, -8.0, 8.0, 2, Q32_16)
        engine = FixedPointEngine(Q32_16)
        self.assertEqual(lut.entries, (engine.encode_raw(exact_sigmoid(-8.0)), engine.encode_raw(0.5)))

    def test_entries_match_exact_values(self):
        lut = build_lut(LutKind.SIGMOID, depth=1024, fmt=Q32_16)
        for k in range(lut.depth):
            self.assertLessEqual(abs(lut.entry_value(k) - exact_sigmoid(lut.cell_edge(k))), ULP)

    def test_entry_ranges(self):
        sig = build_lut(LutKind.SIGMOID, fmt=Q32_16)
        der = build_lut(LutKind.SIGMOID_DERIVATIVE, fmt=Q32_16)
        quarter = FixedPointEngine(Q32_16).encode_raw(0.25)
        self.assertTrue(all(a <= b for a, b in zip(sig.entries, sig.entries[1:])))
        self.assertTrue(all(0 < e < Q32_16.scale for e in sig.entries))
        self.assertTrue(all(0 < e <= quarter for e in der.entries))

    def test_invalid(self):
        with self.assertRaises(LutConfigError):
            build_lut(LutKind.SIGMOID, 8.0, -8.0, 1024)
        with self.assertRaises(LutConfigError):
            build_lut(LutKind.SIGMOID, -8.0, 8.0, 1000)
        with self.assertRaises(LutConfigError):
            build_lut(LutKind.SIGMOID, -8.0, 8.0, 1)


class TestLutEval(TestCase):
    def setUp(self):
        self.lut = build_lut(LutKind.SIGMOID, -8.0, 8.0, 1024, Q32_16)
        self.engine = FixedPointEngine(Q32_16)

    def test_zero_is_a_cell_edge(self):
        self.assertEqual(lut_eval(self.lut, 0.0).raw, self.engine.encode_raw(0.5))
        self.assertEqual(lut_eval(self.lut, self.engine.encode(0.0)).raw, self.engine.encode_raw(0.5))

    def test_clamping(self):
        self.assertEqual(lut_eval(self.lut, 100.0).raw, self.lut.entries[-1])
        self.assertEqual(lut_eval(self.lut, -100.0).raw, self.lut.entries[0])
        self.assertEqual(lut_eval(self.lut, 8.0).raw, self.lut.entries[-1])
        self.assertEqual(lut_eval(self.lut, -8.0).raw, self.lut.entries[0])

    def test_dense_scan_error_bound(self):
        samples = np.random.RandomState(0).uniform(-8.0, 8.0, size=100000)
        bound = 0.25 * self.lut.cell_width + ULP
        self.assertLessEqual(lut_sup_error(self.lut, samples), bound)
        self.assertLessEqual(bound, 0.005)

    def test_tails(self):
        # the top entry holds sigmoid(hi - cell), so the upper tail is slightly wider than sigmoid(-8)
        upper = exact_sigmoid(-(self.lut.hi - self.lut.cell_width)) + ULP
        lower = exact_sigmoid(-8.0) + ULP
        for x in (8.0, 9.5, 20.0, 1e3):
            self.assertLessEqual(abs(lut_eval(self.lut, x).value - exact_sigmoid(x)), upper)
        for x in (-8.0, -9.5, -20.0, -1e3):
            self.assertLessEqual(abs(lut_eval(self.lut, x).value - exact_sigmoid(x)), lower)
        self.assertAlmostEqual(exact_sigmoid(-(self.lut.hi - self.lut.cell_width)), 3.41e-4, delta=1e-6)

    def test_monotone_in_x(self):
        values = [lut_eval(self.lut, float(x)).raw for x in np.linspace(-10, 10, 5001)]
        self.assertTrue(all(a <= b for a, b in zip(values, values[1:])))

    def test_derivative_consistency(self):
        der = build_lut(LutKind.SIGMOID_DERIVATIVE, -8.0, 8.0, 1024, Q32_16)
        for k in range(der.depth):
            s = self.lut.entry_value(k)
            self.assertLessEqual(abs(der.entry_value(k) - s * (1.0 - s)), 2 * ULP)

    def test_float_table(self):
        lut = build_lut(LutKind.SIGMOID, -8.0, 8.0, 1024)
        self.assertFalse(lut.is_fixed)
        self.assertEqual(lut_eval(lut, 0.0), lut.entries[512])
        self.assertAlmostEqual(lut.entries[512], 0.5, places=15)
        self.assertIsInstance(lut_eval(lut, FxValue(0, Q32_16)), float)


class TestActivationSet(TestCase):
    def test_float_exact_by_default(self):
        acts = ActivationSet()
        self.assertFalse(acts.uses_lut)
        sigma = torch.tensor([-1.0, 0.0, 2.0], dtype=torch.float64)
        torch.testing.assert_close(acts.sigmoid_tensor(sigma), torch.sigmoid(sigma))

    def test_float_through_lut(self):
        acts = ActivationSet(float_uses_lut=True)
        self.assertTrue(acts.uses_lut)
        sigma = torch.tensor([-100.0, 0.0, 0.01, 100.0], dtype=torch.float64)
        out = acts.sigmoid_tensor(sigma).tolist()
        lut = acts.sigmoid_lut
        self.assertEqual(out, [lut.entries[0], lut.entries[512], lut.entries[512], lut.entries[-1]])

    def test_fixed_raw_lookup(self):
        acts = ActivationSet(Q32_16)
        engine = FixedPointEngine(Q32_16)
        self.assertEqual(acts.sigmoid_raw(0), engine.encode_raw(0.5))
        self.assertEqual(acts.derivative_raw(0), engine.encode_raw(0.25))
        self.assertEqual(acts.describe()["lut_depth"], 1024)
