# coding=utf-8
"""
Signed two's-complement fixed-point arithmetic with saturation.

Values are plain integers interpreted under a QFormat. Products are formed at
double width and brought back with an arithmetic right shift (floor), so the
datapath behaves like a shift-based FPGA multiply-accumulate unit.
"""

import math
from typing import List, NamedTuple, Sequence

from utils.errors import FormatMismatchError


MIN_WORD_BITS = 8
MAX_WORD_BITS = 64
# mac() accepts at most this many terms before readout
MAX_ACCUMULATED_TERMS = 1 << 16


class QFormat(NamedTuple):
    word_bits: int = 32
    frac_bits: int = 16

    def validate(self):
        if not MIN_WORD_BITS <= self.word_bits <= MAX_WORD_BITS:
            raise ValueError(f'word_bits must lie in [{MIN_WORD_BITS}, {MAX_WORD_BITS}], got {self.word_bits}')
        if not 0 <= self.frac_bits < self.word_bits:
            raise ValueError(f'frac_bits must lie in [0, {self.word_bits}), got {self.frac_bits}')
        return self

    @property
    def scale(self) -> int:
        return 1 << self.frac_bits

    @property
    def raw_max(self) -> int:
        return (1 << (self.word_bits - 1)) - 1

    @property
    def raw_min(self) -> int:
        return -(1 << (self.word_bits - 1))

    @property
    def ulp(self) -> float:
        return math.ldexp(1.0, -self.frac_bits)

    @property
    def max_value(self) -> float:
        return math.ldexp(self.raw_max, -self.frac_bits)

    @property
    def min_value(self) -> float:
        return math.ldexp(self.raw_min, -self.frac_bits)

    @property
    def accumulator_bits(self) -> int:
        # double-width product plus guard bits for MAX_ACCUMULATED_TERMS terms
        return 2 * self.word_bits + 16

    def __str__(self):
        return f'Q{{{self.word_bits},{self.frac_bits}}}'


DEFAULT_QFORMAT = QFormat(32, 16)


class FxValue(NamedTuple):
    raw: int
    fmt: QFormat

    @property
    def value(self) -> float:
        return decode(self)

    def __repr__(self):
        return f'FxValue({decode(self)!r}, raw={self.raw}, {self.fmt})'


class WideAccumulator(NamedTuple):
    """Sum of double-width products (scale 2^(2*frac_bits)), never rounded until readout."""
    raw: int
    fmt: QFormat
    terms: int = 0


def decode(v: FxValue) -> float:
    return math.ldexp(v.raw, -v.fmt.frac_bits)


def _check_same_format(a, b):
    if a.fmt != b.fmt:
        raise FormatMismatchError(a.fmt, b.fmt)


class FixedPointEngine:
    """
    Arithmetic unit for one QFormat. Every saturation increments overflow_count;
    the counter belongs to the engine instance, so concurrent runs never share it.
    """

    def __init__(self, fmt: QFormat = DEFAULT_QFORMAT):
        self.fmt = fmt.validate()
        self.overflow_count = 0
        self._raw_max = fmt.raw_max
        self._raw_min = fmt.raw_min

    def reset_overflow(self):
        self.overflow_count = 0

    def saturate(self, raw: int) -> int:
        if raw > self._raw_max:
            self.overflow_count += 1
            return self._raw_max
        if raw < self._raw_min:
            self.overflow_count += 1
            return self._raw_min
        return raw

    def encode_raw(self, x: float) -> int:
        if math.isnan(x):
            self.overflow_count += 1
            return 0
        if math.isinf(x):
            return self.saturate(self._raw_max + 1 if x > 0 else self._raw_min - 1)
        return self.saturate(math.floor(math.ldexp(x, self.fmt.frac_bits) + 0.5))

    def encode(self, x: float) -> FxValue:
        return FxValue(self.encode_raw(x), self.fmt)

    def decode(self, v: FxValue) -> float:
        return decode(v)

    def from_float_vector(self, xs: Sequence[float]) -> List[int]:
        return [self.encode_raw(float(x)) for x in xs]

    def to_float_vector(self, raws: Sequence[int]) -> List[float]:
        return [math.ldexp(r, -self.fmt.frac_bits) for r in raws]

    def add_sat(self, a: FxValue, b: FxValue) -> FxValue:
        _check_same_format(a, b)
        return FxValue(self.saturate(a.raw + b.raw), self.fmt)

    def sub_sat(self, a: FxValue, b: FxValue) -> FxValue:
        _check_same_format(a, b)
        return FxValue(self.saturate(a.raw - b.raw), self.fmt)

    def mul(self, a: FxValue, b: FxValue) -> FxValue:
        _check_same_format(a, b)
        return FxValue(self.mul_raw(a.raw, b.raw), self.fmt)

    def mul_raw(self, a: int, b: int) -> int:
        # python's >> on negative ints is an arithmetic (floor) shift
        return self.saturate((a * b) >> self.fmt.frac_bits)

    def add_raw(self, a: int, b: int) -> int:
        return self.saturate(a + b)

    def new_accumulator(self) -> WideAccumulator:
        return WideAccumulator(0, self.fmt, 0)

    def mac(self, acc: WideAccumulator, a: FxValue, b: FxValue) -> WideAccumulator:
        _check_same_format(a, b)
        if acc.fmt != a.fmt:
            raise FormatMismatchError(acc.fmt, a.fmt)
        assert acc.terms < MAX_ACCUMULATED_TERMS, 'accumulator guard bits exhausted'
        return WideAccumulator(acc.raw + a.raw * b.raw, acc.fmt, acc.terms + 1)

    def readout(self, acc: WideAccumulator) -> FxValue:
        return FxValue(self.saturate(acc.raw >> self.fmt.frac_bits), acc.fmt)

    def dot(self, xs: Sequence[int], ws: Sequence[int], bias: int = 0) -> int:
        """mac over raw vectors plus a bias aligned to product scale, then a single readout."""
        assert len(xs) == len(ws)
        acc = bias << self.fmt.frac_bits
        for x, w in zip(xs, ws):
            acc += x * w
        return self.saturate(acc >> self.fmt.frac_bits)


def encode(x: float, fmt: QFormat = DEFAULT_QFORMAT) -> FxValue:
    """One-off encode; use an engine where saturations must be counted."""
    return FixedPointEngine(fmt).encode(x)
