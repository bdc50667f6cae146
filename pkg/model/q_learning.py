# coding=utf-8
"""
Q-learning: the tabular reference update, the neural five-step update flow, the
action policies, and a value-iteration oracle for enumerable environments.
"""

import json
from typing import List, NamedTuple, Optional, Sequence

import numpy as np

from data_structure.fixed_point import FixedPointEngine, FxValue
from data_structure.q_value_fifo import CURRENT_BUFFER, NEXT_BUFFER, FifoTrace, QValueFifo, drain_in_parallel
from environment.tabular_env import EnvState, TabularEnvironment, TabularModel
from model.q_network import Backend, QNetwork, UpdateRule
from utils.errors import EnvironmentSpecError


MAX_VALUE_ITERATION_SWEEPS = 100000


class Hyperparams(NamedTuple):
    alpha: float = 0.5
    gamma: float = 0.9
    c_rate: float = 0.2
    epsilon: float = 0.1

    def validate(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f'alpha must lie in [0, 1], got {self.alpha}')
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError(f'gamma must lie in [0, 1), got {self.gamma}')
        if not self.c_rate > 0.0:
            raise ValueError(f'c_rate must be positive, got {self.c_rate}')
        if not 0.0 <= self.epsilon <= 1.0:
            raise ValueError(f'epsilon must lie in [0, 1], got {self.epsilon}')
        return self


class Transition(NamedTuple):
    state: int
    action: int
    reward: float
    next_state: int
    terminal: bool = False


class EpsilonSchedule(NamedTuple):
    start: float = 1.0
    end: float = 0.05
    decay_steps: int = 10000

    def value(self, step: int) -> float:
        if self.decay_steps <= 0 or step >= self.decay_steps:
            return self.end
        return self.start + (self.end - self.start) * step / self.decay_steps


class UpdateRecord(NamedTuple):
    step: int
    state: int
    action: int
    reward: float
    next_state: int
    terminal: bool
    q_error: float
    q_current: List[float]
    q_next: List[float]

    def to_json_line(self) -> str:
        return json.dumps(self._asdict(), sort_keys=True)


class QTable:
    def __init__(self, state_count: int, action_count: int, init_value: float = 0.0):
        self.values = np.full((state_count, action_count), init_value, dtype=np.float64)

    @property
    def shape(self):
        return self.values.shape

    def check(self, s, a):
        if not 0 <= s < self.shape[0]:
            raise IndexError(f'state index {s} out of range [0, {self.shape[0]})')
        if not 0 <= a < self.shape[1]:
            raise IndexError(f'action index {a} out of range [0, {self.shape[1]})')

    def copy(self) -> 'QTable':
        table = QTable(*self.shape)
        table.values = self.values.copy()
        return table


def greedy_action(q_values: Sequence) -> int:
    """Index of the largest Q-value, lowest index on ties."""
    if len(q_values) == 0:
        raise ValueError('greedy_action needs at least one Q-value')
    return int(np.argmax(np.asarray(q_values)))


def epsilon_greedy(q_values: Sequence, epsilon: float, rng: np.random.RandomState) -> int:
    if not 0.0 <= epsilon <= 1.0:
        raise ValueError(f'epsilon must lie in [0, 1], got {epsilon}')
    # one uniform draw per call keeps the stream aligned whatever epsilon is
    if rng.random_sample() < epsilon:
        return int(rng.randint(len(q_values)))
    return greedy_action(q_values)


def opt_q(q_values_next: Sequence):
    if len(q_values_next) == 0:
        raise ValueError('opt_q needs at least one Q-value')
    return max(q_values_next)


def q_error(r: float, opt_q_next: float, q_current: float, alpha: float, gamma: float,
            terminal: bool = False) -> float:
    bootstrap = 0.0 if terminal else gamma * opt_q_next
    return alpha * (r + bootstrap - q_current)


def q_error_fixed(engine: FixedPointEngine, r: FxValue, opt_q_next: FxValue, q_current: FxValue,
                  alpha: FxValue, gamma: FxValue, terminal: bool = False) -> FxValue:
    target = r if terminal else engine.add_sat(r, engine.mul(gamma, opt_q_next))
    return engine.mul(alpha, engine.sub_sat(target, q_current))


def tabular_update(table: QTable, transition: Transition, hyper: Hyperparams) -> QTable:
    s, a, s_next = transition.state, transition.action, transition.next_state
    table.check(s, a)
    table.check(s_next, 0)
    q = table.values
    q[s, a] += q_error(transition.reward, q[s_next].max(), q[s, a], hyper.alpha, hyper.gamma,
                       transition.terminal)
    return table


def _model_of(env_model) -> TabularModel:
    if isinstance(env_model, TabularModel):
        return env_model
    model = getattr(env_model, 'model', None)
    if not isinstance(model, TabularModel):
        raise EnvironmentSpecError(f'{type(env_model).__name__} does not expose an enumerable model')
    return model


def tabular_sweep(table: QTable, env_model, hyper: Hyperparams) -> QTable:
    """One exhaustive pass of tabular_update over every non-terminal (s, a)."""
    m = _model_of(env_model)
    for s in np.flatnonzero(~m.terminal_states):
        for a in range(m.action_count):
            tabular_update(table, Transition(int(s), a, float(m.reward[s, a]), int(m.next_state[s, a]),
                                             bool(m.terminal[s, a])), hyper)
    return table


def sup_distance(q: np.ndarray, q_star: np.ndarray, states: Sequence[int]) -> float:
    return float(np.abs(q[states] - q_star[states]).max()) if len(states) else 0.0


def train_tabular(env_model, hyper: Hyperparams, q_star: np.ndarray, tol: float = 1e-3,
                  max_sweeps: int = 1000):
    """Repeats sweeps until the table is within tol of q_star; returns (table, distance per sweep)."""
    m = _model_of(env_model)
    states = np.flatnonzero(~m.terminal_states)
    table = QTable(m.state_count, m.action_count)
    history = [sup_distance(table.values, q_star, states)]
    while history[-1] > tol and len(history) <= max_sweeps:
        tabular_sweep(table, m, hyper)
        history.append(sup_distance(table.values, q_star, states))
    return table, history


def value_iteration(env_model, gamma: float, tol: float = 1e-10) -> np.ndarray:
    if not tol > 0:
        raise ValueError(f'tol must be positive, got {tol}')
    m = _model_of(env_model)
    q = np.zeros(m.next_state.shape, dtype=np.float64)
    for _ in range(MAX_VALUE_ITERATION_SWEEPS):
        v = q.max(axis=1)
        v[m.terminal_states] = 0.0
        new_q = m.reward + gamma * np.where(m.terminal, 0.0, v[m.next_state])
        new_q[m.terminal_states] = 0.0
        change = float(np.abs(new_q - q).max())
        q = new_q
        if change <= tol:
            return q
    raise EnvironmentSpecError(f'value iteration did not settle within {MAX_VALUE_ITERATION_SWEEPS} sweeps')


def optimal_action_mask(q_star: np.ndarray, tol: float = 1e-9) -> np.ndarray:
    return q_star >= q_star.max(axis=1, keepdims=True) - tol


def greedy_policy_accuracy(q_matrix: np.ndarray, q_star: np.ndarray, states: Sequence[int]) -> float:
    """Share of states whose greedy action is one of the oracle-optimal actions."""
    if len(states) == 0:
        return 1.0
    optimal = optimal_action_mask(q_star)
    hits = sum(bool(optimal[s, greedy_action(q_matrix[s])]) for s in states)
    return hits / len(states)


def mean_abs_q_error(q_matrix: np.ndarray, q_star: np.ndarray, states: Sequence[int]) -> float:
    if len(states) == 0:
        return 0.0
    return float(np.abs(q_matrix[states] - q_star[states]).mean())


def network_q_matrix(net: QNetwork, env: TabularEnvironment) -> np.ndarray:
    """Q estimates for every (s, a); evaluation passes are not counted as datapath feedforwards."""
    saved = net.feedforward_count
    q = np.array([net.q_float(net.feedforward(env.input_matrix(s))) for s in range(env.state_count)])
    net.feedforward_count = saved
    return q


def neural_q_step(net: QNetwork, env: TabularEnvironment, state, hyper: Hyperparams,
                  rng: np.random.RandomState, rule=UpdateRule.TEXTBOOK, epsilon: Optional[float] = None,
                  step_index: int = 0, fifo_trace: Optional[FifoTrace] = None):
    """
    One neural Q-update: feedforward every action of s_t into the current-state
    buffer, act, feedforward every action of s_t+1 into the next-state buffer,
    drain both to form the Q-error, then backpropagate and update.
    """
    A = env.actions_per_state
    current_buf = QValueFifo(CURRENT_BUFFER, A, fifo_trace)
    next_buf = QValueFifo(NEXT_BUFFER, A, fifo_trace)

    cur_trace = net.feedforward(env.input_matrix(state))
    cur_q = net.q_native(cur_trace)
    for a, q in enumerate(cur_q):
        current_buf.push(q, a)

    eps = hyper.epsilon if epsilon is None else epsilon
    action = epsilon_greedy(cur_q, eps, rng)
    next_state, reward, terminal = env.step(state, action)

    nxt_trace = net.feedforward(env.input_matrix(next_state))
    nxt_q = net.q_native(nxt_trace)
    for a, q in enumerate(nxt_q):
        next_buf.push(q, a)

    q_cur, opt_next = drain_in_parallel(current_buf, next_buf, action)
    if net.backend == Backend.FIXED:
        eng, fmt = net.engine, net.fmt
        err = q_error_fixed(eng, eng.encode(reward), FxValue(opt_next, fmt), FxValue(q_cur, fmt),
                            eng.encode(hyper.alpha), eng.encode(hyper.gamma), terminal)
        err_value = err.value
    else:
        err = q_error(reward, opt_next, q_cur, hyper.alpha, hyper.gamma, terminal)
        err_value = err

    chosen = cur_trace.row(action)
    deltas = net.hidden_deltas(chosen, net.output_delta(chosen, err))
    net.apply_update(chosen, deltas, hyper.c_rate, rule)

    state_index = state.index if isinstance(state, EnvState) else int(state)
    record = UpdateRecord(step_index, state_index, action, reward, next_state.index, terminal,
                          float(err_value), net.q_float(cur_trace), net.q_float(nxt_trace))
    return next_state, record
