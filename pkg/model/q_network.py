# coding=utf-8
"""
Perceptron / MLP Q-function approximators.

Weights are stored as W[i][j], from neuron i of layer A to neuron j of the next
layer B, biases per receiving neuron. The input layer is a pass-through; every
other neuron computes sigma_j = sum_i O_i W_ij + b_j and O_j = f(sigma_j).

FloatQNetwork runs on torch float64 tensors; FixedQNetwork runs on raw integers
through a FixedPointEngine with LUT activations.
"""

import copy
import json
import math
from enum import Enum
from typing import List, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np
import torch

from data_structure.fixed_point import DEFAULT_QFORMAT, FixedPointEngine, FxValue, QFormat, decode
from model.activation import ActivationSet, DEFAULT_LUT_DEPTH, DEFAULT_LUT_HI, DEFAULT_LUT_LO


SNAPSHOT_VERSION = 1
GRADIENT_CHECK_STEP = 1e-5
# gradients smaller than this are compared absolutely
GRADIENT_CHECK_FLOOR = 1e-6


class Backend(str, Enum):
    FIXED = 'fixed'
    FLOAT = 'float'


class UpdateRule(str, Enum):
    TEXTBOOK = 'textbook'
    PAPER_LITERAL = 'paper_literal'

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        return cls(str(value).replace('-', '_'))


class Topology(NamedTuple):
    input_dim: int
    hidden_sizes: Tuple[int, ...] = ()
    output_dim: int = 1

    @classmethod
    def perceptron(cls, input_dim):
        return cls(input_dim, ())

    @classmethod
    def mlp(cls, input_dim, hidden_sizes=(4,)):
        return cls(input_dim, tuple(hidden_sizes))

    @property
    def layer_sizes(self) -> Tuple[int, ...]:
        return (self.input_dim, *self.hidden_sizes, self.output_dim)

    @property
    def is_perceptron(self) -> bool:
        return len(self.hidden_sizes) == 0

    @property
    def neuron_count(self) -> int:
        return sum(self.layer_sizes)

    @property
    def parameter_count(self) -> int:
        sizes = self.layer_sizes
        return sum((sizes[l] + 1) * sizes[l + 1] for l in range(len(sizes) - 1))

    def validate(self):
        if self.output_dim != 1:
            raise ValueError('Q networks have exactly one output neuron')
        if self.input_dim < 1 or any(h < 1 for h in self.hidden_sizes):
            raise ValueError(f'invalid topology {self.layer_sizes}')
        return self

    def to_dict(self):
        return {'input_dim': self.input_dim, 'hidden_sizes': list(self.hidden_sizes),
                'output_dim': self.output_dim}


class ForwardTrace(NamedTuple):
    """
    pre_activations[l] holds sigma for non-input layer l + 1; outputs[0] is the
    input vector and outputs[l] = f(pre_activations[l - 1]). Batched traces carry
    a leading batch dimension in every entry.
    """
    pre_activations: list
    outputs: list

    def row(self, idx):
        return ForwardTrace([p[idx] for p in self.pre_activations], [o[idx] for o in self.outputs])


class QNetworkBase:
    def __init__(self, topology: Topology, activations: ActivationSet):
        self.topology = topology.validate()
        self.activations = activations
        self.feedforward_count = 0

    @property
    def backend(self) -> Backend:
        raise NotImplementedError

    @property
    def layer_count(self):
        return len(self.topology.layer_sizes) - 1

    def _check_input(self, inputs):
        width = len(inputs[0]) if self._is_batch(inputs) else len(inputs)
        if width != self.topology.input_dim:
            raise ValueError(f'input has {width} components, topology expects {self.topology.input_dim}')

    @staticmethod
    def _is_batch(inputs):
        if isinstance(inputs, (torch.Tensor, np.ndarray)):
            return inputs.ndim == 2
        return (len(inputs) > 0 and not isinstance(inputs[0], FxValue)
                and isinstance(inputs[0], (list, tuple, np.ndarray, torch.Tensor)))

    def feedforward(self, inputs) -> ForwardTrace:
        raise NotImplementedError

    def q_native(self, trace: ForwardTrace) -> list:
        """Q-values of a batched trace in the backend's own number representation."""
        raise NotImplementedError

    def q_float(self, trace: ForwardTrace) -> List[float]:
        raise NotImplementedError

    def q_values(self, inputs) -> List[float]:
        """Q estimates for a batch of inputs, e.g. every action of one state."""
        return self.q_float(self.feedforward(inputs))

    def output_delta(self, trace: ForwardTrace, q_error):
        raise NotImplementedError

    def hidden_deltas(self, trace: ForwardTrace, delta_out) -> list:
        raise NotImplementedError

    def apply_update(self, trace: ForwardTrace, deltas, c_rate: float,
                     rule: UpdateRule = UpdateRule.TEXTBOOK) -> 'QNetworkBase':
        raise NotImplementedError

    def weights_float(self) -> Tuple[List[np.ndarray], List[np.ndarray]]:
        raise NotImplementedError

    def clone(self) -> 'QNetworkBase':
        return copy.deepcopy(self)

    def to_dict(self) -> dict:
        raise NotImplementedError

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    def _header(self, qformat):
        return {
            'snapshot_version': SNAPSHOT_VERSION,
            'topology': self.topology.to_dict(),
            'backend': self.backend.value,
            'qformat': None if qformat is None else [qformat.word_bits, qformat.frac_bits],
            'activation': self.activations.describe(),
        }


class FloatQNetwork(QNetworkBase):
    def __init__(self, topology: Topology, weights: List[torch.Tensor], biases: List[torch.Tensor],
                 activations: Optional[ActivationSet] = None):
        super().__init__(topology, activations or ActivationSet())
        self.weights = [w.to(torch.float64) for w in weights]
        self.biases = [b.to(torch.float64) for b in biases]
        sizes = topology.layer_sizes
        for l, (w, b) in enumerate(zip(self.weights, self.biases)):
            assert tuple(w.shape) == (sizes[l], sizes[l + 1]) and tuple(b.shape) == (sizes[l + 1],)

    @property
    def backend(self):
        return Backend.FLOAT

    def _forward(self, inputs: torch.Tensor) -> ForwardTrace:
        pre, outs = [], [inputs]
        o = inputs
        for w, b in zip(self.weights, self.biases):
            sigma = o @ w + b
            o = self.activations.sigmoid_tensor(sigma)
            pre.append(sigma)
            outs.append(o)
        return ForwardTrace(pre, outs)

    def feedforward(self, inputs) -> ForwardTrace:
        self._check_input(inputs)
        x = torch.as_tensor(np.asarray(inputs, dtype=np.float64))
        self.feedforward_count += x.shape[0] if x.ndim == 2 else 1
        return self._forward(x)

    def q_native(self, trace):
        return trace.outputs[-1][:, 0].tolist()

    def q_float(self, trace):
        return trace.outputs[-1][:, 0].tolist()

    def output_delta(self, trace, q_error):
        if isinstance(q_error, FxValue):
            q_error = q_error.value
        return self.activations.derivative_tensor(trace.pre_activations[-1]) * float(q_error)

    def hidden_deltas(self, trace, delta_out):
        deltas = [delta_out]
        for l in range(self.layer_count - 1, 0, -1):
            back = self.weights[l] @ deltas[0]
            deltas.insert(0, self.activations.derivative_tensor(trace.pre_activations[l - 1]) * back)
        return deltas

    def apply_update(self, trace, deltas, c_rate, rule=UpdateRule.TEXTBOOK):
        rule = UpdateRule.parse(rule)
        for l, delta in enumerate(deltas):
            c_delta = c_rate * delta
            if rule == UpdateRule.PAPER_LITERAL and self.topology.is_perceptron:
                self.weights[l] += c_delta.unsqueeze(0).expand_as(self.weights[l])
            else:
                self.weights[l] += torch.outer(trace.outputs[l], c_delta)
            self.biases[l] += c_delta
        return self

    def weights_float(self):
        return [w.numpy().copy() for w in self.weights], [b.numpy().copy() for b in self.biases]

    def clone(self):
        return FloatQNetwork(self.topology, [w.clone() for w in self.weights], [b.clone() for b in self.biases],
                             self.activations)

    def to_dict(self):
        d = self._header(None)
        d['weights'] = [w.tolist() for w in self.weights]
        d['biases'] = [b.tolist() for b in self.biases]
        return d


class FixedQNetwork(QNetworkBase):
    def __init__(self, topology: Topology, weights: List[List[List[int]]], biases: List[List[int]],
                 activations: ActivationSet, engine: Optional[FixedPointEngine] = None):
        assert activations.fmt is not None, 'fixed networks need fixed-point activation tables'
        super().__init__(topology, activations)
        self.fmt = activations.fmt
        self.engine = engine or FixedPointEngine(self.fmt)
        self.weights = weights
        self.biases = biases

    @property
    def backend(self):
        return Backend.FIXED

    def _encode_input(self, x) -> List[int]:
        if len(x) > 0 and isinstance(x[0], FxValue):
            return [v.raw for v in x]
        return self.engine.from_float_vector(x)

    def _forward_one(self, raw_input: List[int]) -> ForwardTrace:
        pre, outs = [], [raw_input]
        o = raw_input
        for w, b in zip(self.weights, self.biases):
            # column j of W holds the fan-in of neuron j
            sigma = [self.engine.dot(o, [row[j] for row in w], b[j]) for j in range(len(b))]
            o = [self.activations.sigmoid_raw(s) for s in sigma]
            pre.append(sigma)
            outs.append(o)
        return ForwardTrace(pre, outs)

    def feedforward(self, inputs) -> ForwardTrace:
        self._check_input(inputs)
        if self._is_batch(inputs):
            traces = [self._forward_one(self._encode_input(list(x))) for x in inputs]
            self.feedforward_count += len(traces)
            return ForwardTrace([[t.pre_activations[l] for t in traces] for l in range(self.layer_count)],
                                [[t.outputs[l] for t in traces] for l in range(self.layer_count + 1)])
        self.feedforward_count += 1
        return self._forward_one(self._encode_input(list(inputs)))

    def q_native(self, trace):
        return [o[0] for o in trace.outputs[-1]]

    def q_float(self, trace):
        return [math.ldexp(o[0], -self.fmt.frac_bits) for o in trace.outputs[-1]]

    def _as_raw(self, v) -> int:
        # raw words travel only inside FxValue; a bare int is a real like any other
        if isinstance(v, FxValue):
            return v.raw
        return self.engine.encode_raw(float(v))

    def output_delta(self, trace, q_error):
        """q_error is an FxValue in fmt or a real to encode."""
        err = self._as_raw(q_error)
        return [self.engine.mul_raw(self.activations.derivative_raw(s), err) for s in trace.pre_activations[-1]]

    def hidden_deltas(self, trace, delta_out):
        deltas = [list(delta_out)]
        for l in range(self.layer_count - 1, 0, -1):
            nxt = deltas[0]
            layer = []
            for i, row in enumerate(self.weights[l]):
                back = self.engine.dot(nxt, row)
                layer.append(self.engine.mul_raw(self.activations.derivative_raw(trace.pre_activations[l - 1][i]), back))
            deltas.insert(0, layer)
        return deltas

    def apply_update(self, trace, deltas, c_rate, rule=UpdateRule.TEXTBOOK):
        rule = UpdateRule.parse(rule)
        c_raw = c_rate.raw if isinstance(c_rate, FxValue) else self.engine.encode_raw(float(c_rate))
        literal = rule == UpdateRule.PAPER_LITERAL and self.topology.is_perceptron
        eng = self.engine
        for l, delta in enumerate(deltas):
            c_delta = [eng.mul_raw(c_raw, d) for d in delta]
            w = self.weights[l]
            for i, o_i in enumerate(trace.outputs[l]):
                row = w[i]
                for j, cd in enumerate(c_delta):
                    row[j] = eng.add_raw(row[j], cd if literal else eng.mul_raw(o_i, cd))
            b = self.biases[l]
            for j, cd in enumerate(c_delta):
                b[j] = eng.add_raw(b[j], cd)
        return self

    def weights_float(self):
        to_f = lambda r: math.ldexp(r, -self.fmt.frac_bits)
        return ([np.array([[to_f(v) for v in row] for row in w]) for w in self.weights],
                [np.array([to_f(v) for v in b]) for b in self.biases])

    def clone(self):
        # the engine (and its overflow counter) stays shared with the run
        return FixedQNetwork(self.topology, copy.deepcopy(self.weights), copy.deepcopy(self.biases),
                             self.activations, self.engine)

    def to_dict(self):
        d = self._header(self.fmt)
        d['weights'] = copy.deepcopy(self.weights)
        d['biases'] = copy.deepcopy(self.biases)
        return d


QNetwork = Union[FloatQNetwork, FixedQNetwork]


def make_activations(backend, fmt=DEFAULT_QFORMAT, lut_lo=DEFAULT_LUT_LO, lut_hi=DEFAULT_LUT_HI,
                     lut_depth=DEFAULT_LUT_DEPTH, float_uses_lut=False) -> ActivationSet:
    if Backend(backend) == Backend.FIXED:
        return ActivationSet(fmt, lut_lo, lut_hi, lut_depth)
    return ActivationSet(None, lut_lo, lut_hi, lut_depth, float_uses_lut=float_uses_lut)


def init_network(topology: Topology, seed: int, scale: float, backend=Backend.FLOAT,
                 activations: Optional[ActivationSet] = None,
                 engine: Optional[FixedPointEngine] = None) -> QNetwork:
    """Weights and biases i.i.d. uniform in [-scale, scale]; both backends draw the same reals."""
    if not scale > 0:
        raise ValueError(f'init scale must be positive, got {scale}')
    backend = Backend(backend)
    topology = topology.validate()
    rng = np.random.RandomState(seed)
    sizes = topology.layer_sizes
    weights, biases = [], []
    for l in range(len(sizes) - 1):
        weights.append(rng.uniform(-scale, scale, size=(sizes[l], sizes[l + 1])))
        biases.append(rng.uniform(-scale, scale, size=(sizes[l + 1],)))
    if activations is None:
        activations = make_activations(backend, engine.fmt if engine is not None else DEFAULT_QFORMAT)
    if backend == Backend.FLOAT:
        return FloatQNetwork(topology, [torch.from_numpy(w) for w in weights],
                             [torch.from_numpy(b) for b in biases], activations)
    engine = engine or FixedPointEngine(activations.fmt)
    return FixedQNetwork(topology,
                         [[engine.from_float_vector(row) for row in w] for w in weights],
                         [engine.from_float_vector(b) for b in biases],
                         activations, engine)


def feedforward(net: QNetwork, inputs) -> ForwardTrace:
    return net.feedforward(inputs)


def output_delta(net: QNetwork, trace: ForwardTrace, q_error):
    return net.output_delta(trace, q_error)


def hidden_deltas(net: QNetwork, trace: ForwardTrace, delta_out):
    return net.hidden_deltas(trace, delta_out)


def apply_update(net: QNetwork, trace: ForwardTrace, deltas, c_rate, rule=UpdateRule.TEXTBOOK) -> QNetwork:
    return net.apply_update(trace, deltas, c_rate, rule)


def network_from_dict(d: dict, engine: Optional[FixedPointEngine] = None) -> QNetwork:
    if d.get('snapshot_version') != SNAPSHOT_VERSION:
        raise ValueError(f'unsupported network snapshot version {d.get("snapshot_version")}')
    topo = d['topology']
    topology = Topology(topo['input_dim'], tuple(topo['hidden_sizes']), topo['output_dim'])
    act = d['activation']
    backend = Backend(d['backend'])
    fmt = QFormat(*d['qformat']) if d['qformat'] is not None else None
    activations = make_activations(backend, fmt, act['lut_lo'], act['lut_hi'], act['lut_depth'],
                                   act['float_uses_lut'])
    if backend == Backend.FLOAT:
        return FloatQNetwork(topology, [torch.tensor(w, dtype=torch.float64) for w in d['weights']],
                             [torch.tensor(b, dtype=torch.float64) for b in d['biases']], activations)
    return FixedQNetwork(topology, copy.deepcopy(d['weights']), copy.deepcopy(d['biases']), activations,
                         engine or FixedPointEngine(fmt))


def network_from_json(text: str, engine: Optional[FixedPointEngine] = None) -> QNetwork:
    return network_from_dict(json.loads(text), engine)


def analytic_gradients(net: FloatQNetwork, inputs, target: float):
    """d(0.5 * (target - Q)^2) / dW and / db, chained through the update deltas."""
    trace = net._forward(torch.as_tensor(np.asarray(inputs, dtype=np.float64)))
    q = float(trace.outputs[-1][0])
    deltas = net.hidden_deltas(trace, net.output_delta(trace, target - q))
    grad_w = [-torch.outer(trace.outputs[l], d) for l, d in enumerate(deltas)]
    grad_b = [-d for d in deltas]
    return grad_w, grad_b


def gradient_check(net: FloatQNetwork, inputs, target: float, step: float = GRADIENT_CHECK_STEP) -> float:
    """Max relative error between analytic gradients and central finite differences."""
    if net.backend != Backend.FLOAT or net.activations.float_uses_lut:
        raise ValueError('gradient_check needs the float backend with exact activations')
    x = torch.as_tensor(np.asarray(inputs, dtype=np.float64))

    def loss():
        q = float(net._forward(x).outputs[-1][0])
        return 0.5 * (target - q) ** 2

    grad_w, grad_b = analytic_gradients(net, inputs, target)
    worst = 0.0
    for params, grads in ((net.weights, grad_w), (net.biases, grad_b)):
        for p, g in zip(params, grads):
            flat_p, flat_g = p.view(-1), g.reshape(-1)
            for k in range(flat_p.numel()):
                saved = float(flat_p[k])
                flat_p[k] = saved + step
                up = loss()
                flat_p[k] = saved - step
                down = loss()
                flat_p[k] = saved
                numeric = (up - down) / (2 * step)
                analytic = float(flat_g[k])
                denom = max(abs(analytic), abs(numeric), GRADIENT_CHECK_FLOOR)
                worst = max(worst, abs(analytic - numeric) / denom)
    return worst


def probe_backend_agreement(n_pairs: int = 1000, seed: int = 0, fmt: QFormat = DEFAULT_QFORMAT,
                            lut_depth: int = DEFAULT_LUT_DEPTH, lut_lo: float = DEFAULT_LUT_LO,
                            lut_hi: float = DEFAULT_LUT_HI, input_dim: int = 6,
                            hidden_sizes: Sequence[int] = ()) -> dict:
    """
    Standard probe set: n_pairs seeded (net, input) pairs, weights in [-1, 1] and
    inputs in [0, 1]. Weights and inputs are snapped to the fixed-point grid first,
    so both backends evaluate exactly the same parameters.
    """
    topology = Topology(input_dim, tuple(hidden_sizes))
    float_act = make_activations(Backend.FLOAT)
    fixed_act = make_activations(Backend.FIXED, fmt, lut_lo, lut_hi, lut_depth)
    engine = FixedPointEngine(fmt)
    rng = np.random.RandomState(seed)
    diffs = []
    for _ in range(n_pairs):
        net_seed = int(rng.randint(0, 2 ** 31 - 1))
        x = engine.to_float_vector(engine.from_float_vector(rng.uniform(0.0, 1.0, size=input_dim)))
        fixed = init_network(topology, net_seed, 1.0, Backend.FIXED, fixed_act, engine)
        weights, biases = fixed.weights_float()
        snapped = FloatQNetwork(topology, [torch.from_numpy(w) for w in weights], [torch.from_numpy(b) for b in biases],
                                float_act)
        q_float = float(snapped.feedforward(x).outputs[-1][0])
        q_fixed = decode(FxValue(fixed.feedforward(x).outputs[-1][0], fmt))
        diffs.append(abs(q_fixed - q_float))
    return {'pairs': n_pairs, 'max_abs_dq': float(np.max(diffs)), 'mean_abs_dq': float(np.mean(diffs)),
            'overflow_count': engine.overflow_count}
