from fractions import Fraction
from unittest import TestCase

import numpy as np

from data_structure.fixed_point import DEFAULT_QFORMAT, FixedPointEngine, FxValue, QFormat, decode, encode
from utils.errors import FormatMismatchError


Q32_16 = QFormat(32, 16)


class TestQFormat(TestCase):
    def test_range_and_resolution(self):
        fmt = QFormat(16, 8)
        self.assertEqual(fmt.ulp, 2.0 ** -8)
        self.assertEqual(fmt.max_value, 2.0 ** 7 - 2.0 ** -8)
        self.assertEqual(fmt.min_value, -2.0 ** 7)
        self.assertEqual(str(Q32_16), 'Q{32,16}')
        self.assertEqual(DEFAULT_QFORMAT, Q32_16)

    def test_invalid_formats(self):
        for word, frac in ((4, 2), (65, 16), (16, 16), (16, -1)):
            with self.assertRaises(ValueError):
                QFormat(word, frac).validate()


class TestEncodeDecode(TestCase):
    def setUp(self):
        self.engine = FixedPointEngine(Q32_16)

    def test_examples(self):
        self.assertEqual(self.engine.encode(0.5).raw, 32768)
        self.assertEqual(self.engine.encode(0.0).raw, 0)
        self.assertEqual(decode(FxValue(32768, Q32_16)), 0.5)
        self.assertEqual(decode(FxValue(-65536, Q32_16)), -1.0)
        self.assertAlmostEqual(self.engine.encode(0.3).value, 0.3, delta=2.0 ** -16)

    def test_saturation_counts(self):
        self.assertEqual(self.engine.encode(2.0 ** 20).raw, Q32_16.raw_max)
        self.assertEqual(self.engine.encode(-2.0 ** 20).raw, Q32_16.raw_min)
        self.assertEqual(self.engine.overflow_count, 2)
        self.engine.reset_overflow()
        self.assertEqual(self.engine.overflow_count, 0)

    def test_non_finite(self):
        self.assertEqual(self.engine.encode(float('inf')).raw, Q32_16.raw_max)
        self.assertEqual(self.engine.encode(float('-inf')).raw, Q32_16.raw_min)
        self.assertEqual(self.engine.encode(float('nan')).raw, 0)
        self.assertEqual(self.engine.overflow_count, 3)

    def test_round_trip_within_half_ulp(self):
        for fmt in (Q32_16, QFormat(16, 8), QFormat(8, 4)):
            engine = FixedPointEngine(fmt)
            for x in np.linspace(fmt.min_value, fmt.max_value, 2001):
                self.assertLessEqual(abs(engine.encode(float(x)).value - x), fmt.ulp / 2 + 1e-12)
            self.assertEqual(engine.overflow_count, 0)

    def test_module_level_encode(self):
        self.assertEqual(encode(0.5, Q32_16), self.engine.encode(0.5))
        self.assertEqual(encode(1000.0, QFormat(8, 4)).raw, 127)

    def test_ties_round_up(self):
        fmt = QFormat(8, 0)
        engine = FixedPointEngine(fmt)
        self.assertEqual(engine.encode_raw(2.5), 3)
        self.assertEqual(engine.encode_raw(-2.5), -2)


class TestArithmetic(TestCase):
    def setUp(self):
        self.engine = FixedPointEngine(Q32_16)
        self.enc = self.engine.encode

    def test_add(self):
        e = self.engine
        self.assertEqual(e.add_sat(self.enc(0.25), self.enc(0.25)).value, 0.5)
        a = self.enc(1.75)
        self.assertEqual(e.add_sat(a, self.enc(0.0)), a)
        top = FxValue(Q32_16.raw_max, Q32_16)
        self.assertEqual(e.add_sat(top, FxValue(1, Q32_16)).raw, Q32_16.raw_max)
        self.assertEqual(e.overflow_count, 1)

    def test_sub(self):
        self.assertEqual(self.engine.sub_sat(self.enc(0.75), self.enc(1.0)).value, -0.25)
        bottom = FxValue(Q32_16.raw_min, Q32_16)
        self.assertEqual(self.engine.sub_sat(bottom, FxValue(1, Q32_16)).raw, Q32_16.raw_min)

    def test_mul(self):
        e = self.engine
        self.assertEqual(e.mul(self.enc(0.5), self.enc(0.5)).value, 0.25)
        x = self.enc(-3.125)
        self.assertEqual(e.mul(x, self.enc(1.0)), x)
        self.assertAlmostEqual(e.mul(self.enc(0.3), self.enc(0.3)).value, 0.09, delta=2.0 ** -16)

    def test_mul_floors(self):
        e = self.engine
        tiny = FxValue(1, Q32_16)
        half = self.enc(0.5)
        self.assertEqual(e.mul(tiny, half).raw, 0)
        self.assertEqual(e.mul(FxValue(-1, Q32_16), half).raw, -1)

    def test_commutative_and_bounded(self):
        rng = np.random.RandomState(3)
        e = self.engine
        for _ in range(500):
            a = FxValue(int(rng.randint(Q32_16.raw_min, Q32_16.raw_max)), Q32_16)
            b = FxValue(int(rng.randint(Q32_16.raw_min, Q32_16.raw_max)), Q32_16)
            self.assertEqual(e.add_sat(a, b), e.add_sat(b, a))
            self.assertEqual(e.mul(a, b), e.mul(b, a))
            for v in (e.add_sat(a, b), e.mul(a, b)):
                self.assertTrue(Q32_16.raw_min <= v.raw <= Q32_16.raw_max)

    def test_format_mismatch(self):
        other = FixedPointEngine(QFormat(16, 8)).encode(0.5)
        with self.assertRaises(FormatMismatchError):
            self.engine.add_sat(self.enc(0.5), other)
        with self.assertRaises(FormatMismatchError):
            self.engine.mul(self.enc(0.5), other)


class TestAccumulator(TestCase):
    def setUp(self):
        self.engine = FixedPointEngine(Q32_16)

    def test_zero_inputs(self):
        e = self.engine
        acc = e.new_accumulator()
        for _ in range(5):
            acc = e.mac(acc, e.encode(0.0), e.encode(0.7))
        self.assertEqual(e.readout(acc).raw, 0)
        self.assertEqual(acc.terms, 5)

    def test_two_exact_terms(self):
        e = self.engine
        a, b, c, d = e.encode(0.5), e.encode(0.25), e.encode(1.5), e.encode(-0.75)
        acc = e.mac(e.mac(e.new_accumulator(), a, b), c, d)
        self.assertEqual(e.readout(acc), e.add_sat(e.mul(a, b), e.mul(c, d)))

    def test_dot_matches_rational_oracle(self):
        rng = np.random.RandomState(11)
        e = self.engine
        for _ in range(50):
            xs = [e.encode(float(v)) for v in rng.uniform(-2, 2, size=20)]
            ws = [e.encode(float(v)) for v in rng.uniform(-2, 2, size=20)]
            acc = e.new_accumulator()
            for x, w in zip(xs, ws):
                acc = e.mac(acc, x, w)
            exact = sum(Fraction(x.raw, 1 << 16) * Fraction(w.raw, 1 << 16) for x, w in zip(xs, ws))
            self.assertLessEqual(abs(Fraction(e.readout(acc).raw, 1 << 16) - exact), Fraction(1, 1 << 16))
            # single rounding of the exact double-width sum
            big = sum(x.raw * w.raw for x, w in zip(xs, ws))
            self.assertEqual(e.readout(acc).raw, big >> 16)
            self.assertEqual(e.dot([x.raw for x in xs], [w.raw for w in ws]), big >> 16)

    def test_dot_bias_alignment(self):
        e = self.engine
        raw = e.dot([e.encode_raw(1.0)], [e.encode_raw(0.5)], e.encode_raw(0.25))
        self.assertEqual(raw, e.encode_raw(0.75))
