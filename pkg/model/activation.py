# coding=utf-8
"""
ROM-style activation tables for the sigmoid and its derivative, plus the exact
reference functions they are built from.

A table stores f at the left edge of each of `depth` equal cells over [lo, hi);
inputs outside the range read the first or last entry.
"""

import math
from enum import Enum
from typing import NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np
import torch

from data_structure.fixed_point import FixedPointEngine, FxValue, QFormat
from utils.errors import LutConfigError


DEFAULT_LUT_LO = -8.0
DEFAULT_LUT_HI = 8.0
DEFAULT_LUT_DEPTH = 1024


class LutKind(Enum):
    SIGMOID = 'sigmoid'
    SIGMOID_DERIVATIVE = 'sigmoid_derivative'


def exact_sigmoid(x):
    """1 / (1 + e^-x), stable for large |x|; accepts scalars or numpy arrays."""
    result = np.exp(-np.logaddexp(0.0, -np.asarray(x, dtype=np.float64)))
    if np.ndim(result) == 0:
        return float(result)
    return result


def exact_sigmoid_derivative(x):
    s = exact_sigmoid(x)
    return s * (1.0 - s)


_EXACT_FUNCTIONS = {
    LutKind.SIGMOID: exact_sigmoid,
    LutKind.SIGMOID_DERIVATIVE: exact_sigmoid_derivative,
}


class ActivationLUT(NamedTuple):
    kind: LutKind
    lo: float
    hi: float
    depth: int
    entries: Tuple
    # None for the float backend
    fmt: Optional[QFormat] = None

    @property
    def cell_width(self) -> float:
        return (self.hi - self.lo) / self.depth

    @property
    def is_fixed(self) -> bool:
        return self.fmt is not None

    def cell_edge(self, k: int) -> float:
        return self.lo + k * (self.hi - self.lo) / self.depth

    def index_of(self, x: float) -> int:
        idx = math.floor((x - self.lo) * self.depth / (self.hi - self.lo))
        return min(max(idx, 0), self.depth - 1)

    def entry_value(self, k: int) -> float:
        if self.is_fixed:
            return math.ldexp(self.entries[k], -self.fmt.frac_bits)
        return self.entries[k]

    def lookup_raw(self, raw: int) -> int:
        assert self.is_fixed
        return self.entries[self.index_of(math.ldexp(raw, -self.fmt.frac_bits))]

    def as_tensor(self, dtype=torch.float64) -> torch.Tensor:
        return torch.tensor([self.entry_value(k) for k in range(self.depth)], dtype=dtype)

    def lookup_tensor(self, t: torch.Tensor, table: Optional[torch.Tensor] = None) -> torch.Tensor:
        if table is None:
            table = self.as_tensor(t.dtype)
        idx = torch.floor((t - self.lo) * (self.depth / (self.hi - self.lo))).long()
        return table[idx.clamp(0, self.depth - 1)]


def build_lut(kind: LutKind, lo: float = DEFAULT_LUT_LO, hi: float = DEFAULT_LUT_HI,
              depth: int = DEFAULT_LUT_DEPTH, fmt: Optional[QFormat] = None) -> ActivationLUT:
    kind = LutKind(kind)
    if not lo < hi:
        raise LutConfigError(f'invalid LUT range: lo={lo} must be below hi={hi}')
    if depth < 2 or depth & (depth - 1) != 0:
        raise LutConfigError(f'invalid LUT depth {depth}: must be a power of two >= 2')
    fn = _EXACT_FUNCTIONS[kind]
    edges = [lo + k * (hi - lo) / depth for k in range(depth)]
    values = [fn(x) for x in edges]
    if fmt is None:
        entries = tuple(values)
    else:
        # table contents are fixed at build time; quantization never saturates for f in (0, 1)
        engine = FixedPointEngine(fmt)
        entries = tuple(engine.encode_raw(v) for v in values)
    return ActivationLUT(kind, float(lo), float(hi), depth, entries, fmt)


def lut_eval(lut: ActivationLUT, x: Union[FxValue, float]) -> Union[FxValue, float]:
    if isinstance(x, FxValue):
        if not lut.is_fixed:
            return lut.entries[lut.index_of(x.value)]
        return FxValue(lut.lookup_raw(x.raw), lut.fmt)
    value = lut.entries[lut.index_of(float(x))]
    if lut.is_fixed:
        return FxValue(value, lut.fmt)
    return value


def lut_sup_error(lut: ActivationLUT, samples: Sequence[float]) -> float:
    fn = _EXACT_FUNCTIONS[lut.kind]
    worst = 0.0
    for x in samples:
        worst = max(worst, abs(lut.entry_value(lut.index_of(float(x))) - fn(float(x))))
    return worst


class ActivationSet:
    """Sigmoid and derivative evaluation for one network backend."""

    def __init__(self, fmt: Optional[QFormat] = None, lo: float = DEFAULT_LUT_LO,
                 hi: float = DEFAULT_LUT_HI, depth: int = DEFAULT_LUT_DEPTH,
                 float_uses_lut: bool = False):
        self.fmt = fmt
        self.float_uses_lut = float_uses_lut
        self.sigmoid_lut = build_lut(LutKind.SIGMOID, lo, hi, depth, fmt)
        self.derivative_lut = build_lut(LutKind.SIGMOID_DERIVATIVE, lo, hi, depth, fmt)
        self._sigmoid_table = self.sigmoid_lut.as_tensor() if float_uses_lut else None
        self._derivative_table = self.derivative_lut.as_tensor() if float_uses_lut else None

    @property
    def uses_lut(self) -> bool:
        return self.fmt is not None or self.float_uses_lut

    def sigmoid_tensor(self, sigma: torch.Tensor) -> torch.Tensor:
        if self.float_uses_lut:
            return self.sigmoid_lut.lookup_tensor(sigma, self._sigmoid_table)
        return torch.sigmoid(sigma)

    def derivative_tensor(self, sigma: torch.Tensor) -> torch.Tensor:
        if self.float_uses_lut:
            return self.derivative_lut.lookup_tensor(sigma, self._derivative_table)
        s = torch.sigmoid(sigma)
        return s * (1.0 - s)

    def sigmoid_raw(self, raw: int) -> int:
        return self.sigmoid_lut.lookup_raw(raw)

    def derivative_raw(self, raw: int) -> int:
        return self.derivative_lut.lookup_raw(raw)

    def describe(self) -> dict:
        lut = self.sigmoid_lut
        return {'lut_lo': lut.lo, 'lut_hi': lut.hi, 'lut_depth': lut.depth,
                'float_uses_lut': self.float_uses_lut}
