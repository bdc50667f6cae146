# coding=utf-8
"""
Cycle-count and throughput model of the Q-learning datapath.

One Q-update = 2A feedforward passes (A for the current state, A for the next
state, each result pushed into a Q-value buffer), a parallel drain of both
buffers, the error capture, and one backpropagation/weight-update pass.

The fixed-point perceptron follows the closed form 7A + 1. Everything else is a
calibrated stage-cost model: the defaults below were fitted so the fixed-point
MLP rows land within 10% of the published throughput and the float rows within
25%; they are not derived from an RTL description. The model never looks at
weights, so timing is data-independent.
"""

import math
from typing import NamedTuple, Optional

from data_structure.q_value_fifo import (CURRENT_BUFFER, NEXT_BUFFER, PUSH, POP, UPDATE, WEIGHT_PORT,
                                         FifoTrace)
from model.q_network import Backend, Topology


DEFAULT_CLOCK_HZ = 150e6

PERCEPTRON = 'perceptron'
MLP = 'mlp'


class CycleModel(NamedTuple):
    arch: str
    backend: str
    # cycles to latch one input vector into the datapath
    input_load: float
    # cycles per multiply-accumulate group of up to mac_lanes terms
    mac: float
    mac_lanes: int
    lut_lookup: float
    # cycles per buffer entry during the parallel drain
    drain: float
    error_capture: float
    # cycles per group of up to update_lanes weights, per layer
    weight_update: float
    update_lanes: int
    # applied to the arithmetic stages (mac, error capture, weight update)
    float_op_multiplier: float = 1.0
    clock_hz: float = DEFAULT_CLOCK_HZ

    def validate(self):
        costs = (self.input_load, self.mac, self.lut_lookup, self.drain, self.error_capture, self.weight_update)
        if any(c < 0 for c in costs):
            raise ValueError(f'stage costs must be non-negative: {self}')
        if self.mac_lanes < 1 or self.update_lanes < 1:
            raise ValueError('lane counts must be at least 1')
        if self.float_op_multiplier < 1.0:
            raise ValueError(f'float_op_multiplier must be >= 1, got {self.float_op_multiplier}')
        if not self.clock_hz > 0:
            raise ValueError(f'clock_hz must be positive, got {self.clock_hz}')
        return self

    @property
    def arithmetic_scale(self) -> float:
        return self.float_op_multiplier if self.backend == Backend.FLOAT.value else 1.0

    def feedforward_cycles(self, topology: Topology) -> float:
        k = self.arithmetic_scale
        sizes = topology.layer_sizes
        total = self.input_load
        for l in range(len(sizes) - 1):
            total += k * self.mac * math.ceil((sizes[l] + 1) / self.mac_lanes) + self.lut_lookup
        return total

    def update_cycles(self, topology: Topology) -> float:
        k = self.arithmetic_scale
        sizes = topology.layer_sizes
        return sum(k * self.weight_update * math.ceil((sizes[l] + 1) * sizes[l + 1] / self.update_lanes)
                   for l in range(len(sizes) - 1))

    def error_cycles(self) -> float:
        return self.arithmetic_scale * self.error_capture

    def total_cycles(self, A: int, topology: Topology) -> int:
        return total_cycles(A, topology, self)

    def to_dict(self):
        return self._asdict()


# stage costs whose sum is exactly 3A + 3A + A + 1 = 7A + 1 for a perceptron
PERCEPTRON_STAGES = dict(input_load=0.0, mac=2.0, mac_lanes=64, lut_lookup=1.0, drain=1.0,
                         error_capture=0.0, weight_update=1.0, update_lanes=128)
MLP_STAGES = dict(input_load=1.0, mac=2.0, mac_lanes=32, lut_lookup=1.0, drain=1.0,
                  error_capture=1.0, weight_update=2.0, update_lanes=128)
FLOAT_OP_MULTIPLIER = {PERCEPTRON: 13.25, MLP: 1.8}


def default_cycle_model(arch: str = PERCEPTRON, backend: str = Backend.FIXED.value,
                        clock_hz: float = DEFAULT_CLOCK_HZ) -> CycleModel:
    backend = Backend(backend).value
    stages = PERCEPTRON_STAGES if arch == PERCEPTRON else MLP_STAGES
    multiplier = FLOAT_OP_MULTIPLIER[arch] if backend == Backend.FLOAT.value else 1.0
    return CycleModel(arch, backend, float_op_multiplier=multiplier, clock_hz=clock_hz, **stages).validate()


def calibration_constants() -> dict:
    return {'perceptron_stages': dict(PERCEPTRON_STAGES), 'mlp_stages': dict(MLP_STAGES),
            'float_op_multiplier': dict(FLOAT_OP_MULTIPLIER), 'clock_hz': DEFAULT_CLOCK_HZ,
            'note': 'calibrated model, fitted to published throughput; not derived from RTL'}


def perceptron_fixed_cycles(A: int) -> int:
    if A < 1:
        raise ValueError(f'need at least one action, got {A}')
    return 7 * A + 1


def stage_cycles(topology: Topology, A: int, model: CycleModel) -> float:
    """Unrounded sum of stage costs for one Q-update."""
    return (2 * A * model.feedforward_cycles(topology) + A * model.drain + model.error_cycles()
            + model.update_cycles(topology))


def mlp_cycles(topology: Topology, A: int, model: CycleModel) -> int:
    if A < 1:
        raise ValueError(f'need at least one action, got {A}')
    return math.ceil(stage_cycles(topology, A, model.validate()))


def total_cycles(A: int, topology: Topology, model: CycleModel) -> int:
    if model.arch == PERCEPTRON and model.backend == Backend.FIXED.value:
        return perceptron_fixed_cycles(A)
    return mlp_cycles(topology, A, model)


def throughput(cycles: int, clock_hz: float = DEFAULT_CLOCK_HZ) -> float:
    """Q-updates per second, in kQ/s."""
    if cycles < 1:
        raise ValueError(f'cycles must be at least 1, got {cycles}')
    return clock_hz / cycles / 1e3


def fpga_update_time_us(cycles: int, clock_hz: float = DEFAULT_CLOCK_HZ) -> float:
    return cycles / clock_hz * 1e6


def simulate_schedule(arch: str, A: int, topology: Topology, model: Optional[CycleModel] = None) -> FifoTrace:
    """
    Event schedule of one Q-update: A pushes into each buffer as the feedforward
    passes finish, a lock-step drain of both buffers, then one update event per layer.
    """
    if A < 1:
        raise ValueError(f'need at least one action, got {A}')
    model = model or default_cycle_model(arch)
    trace = FifoTrace(capacity=A)
    ff = model.feedforward_cycles(topology)
    t = 0.0
    for buffer in (CURRENT_BUFFER, NEXT_BUFFER):
        for a in range(A):
            t += ff
            trace.record(math.ceil(t), buffer, PUSH, a)
    for a in range(A):
        t += model.drain
        trace.record(math.ceil(t), CURRENT_BUFFER, POP, a)
        trace.record(math.ceil(t), NEXT_BUFFER, POP, a)
    t += model.error_cycles()
    sizes = topology.layer_sizes
    k = model.arithmetic_scale
    for l in range(len(sizes) - 1):
        t += k * model.weight_update * math.ceil((sizes[l] + 1) * sizes[l + 1] / model.update_lanes)
        trace.record(math.ceil(t), WEIGHT_PORT, UPDATE, l)
    return trace.validate()


class ThroughputReport(NamedTuple):
    cycles_per_q_update: int
    q_updates_per_second: float
    fifo_peak_occupancy: int
    overflow_count: int = 0

    @property
    def kq_per_second(self) -> float:
        return self.q_updates_per_second / 1e3

    def to_dict(self):
        d = self._asdict()
        d['kq_per_second'] = self.kq_per_second
        return d


def make_throughput_report(model: CycleModel, A: int, topology: Topology, overflow_count: int = 0) -> ThroughputReport:
    cycles = total_cycles(A, topology, model)
    schedule = simulate_schedule(model.arch, A, topology, model)
    return ThroughputReport(cycles, model.clock_hz / cycles, schedule.peak_occupancy(), overflow_count)


class PublishedRow(NamedTuple):
    arch: str
    backend: str
    env: str
    value: float
    # False where no calibration of this model can reach the number
    derivable: bool = True


# kQ/s at 150 MHz, rows in table order: fixed simple, float simple, fixed complex, float complex
PUBLISHED_THROUGHPUT = (
    PublishedRow(PERCEPTRON, 'fixed', 'simple', 2340.0),
    PublishedRow(PERCEPTRON, 'float', 'simple', 290.0),
    PublishedRow(PERCEPTRON, 'fixed', 'complex', 530.0),
    PublishedRow(PERCEPTRON, 'float', 'complex', 10.0, derivable=False),
    PublishedRow(MLP, 'fixed', 'simple', 1060.0),
    PublishedRow(MLP, 'float', 'simple', 745.0),
    PublishedRow(MLP, 'fixed', 'complex', 247.0),
    PublishedRow(MLP, 'float', 'complex', 9.0, derivable=False),
)

# completion time of one Q-update in microseconds; 'cpu' rows are host measurements
PUBLISHED_COMPLETION_US = (
    PublishedRow(PERCEPTRON, 'fixed', 'simple', 0.4),
    PublishedRow(PERCEPTRON, 'float', 'simple', 7.7, derivable=False),
    PublishedRow(PERCEPTRON, 'cpu', 'simple', 20.0, derivable=False),
    PublishedRow(PERCEPTRON, 'fixed', 'complex', 1.8),
    PublishedRow(PERCEPTRON, 'float', 'complex', 102.0, derivable=False),
    PublishedRow(PERCEPTRON, 'cpu', 'complex', 172.0, derivable=False),
    PublishedRow(MLP, 'fixed', 'simple', 0.9),
    PublishedRow(MLP, 'float', 'simple', 13.0, derivable=False),
    PublishedRow(MLP, 'cpu', 'simple', 20.0, derivable=False),
    PublishedRow(MLP, 'fixed', 'complex', 4.0),
    PublishedRow(MLP, 'float', 'complex', 107.0, derivable=False),
    PublishedRow(MLP, 'cpu', 'complex', 172.0, derivable=False),
)


def published_value(table, arch: str, backend: str, env: str) -> Optional[PublishedRow]:
    for row in table:
        if (row.arch, row.backend, row.env) == (arch, backend, env):
            return row
    return None
