# coding=utf-8
"""
Enumerable, deterministic test environments.

Every environment exposes its full transition model (TabularModel) so that the
value-iteration oracle can solve it exactly. Rewards are 1 - gamma_cap on
entering the goal/terminal state and 0 otherwise, which keeps every bootstrap
target inside the sigmoid's (0, 1) codomain for any gamma <= gamma_cap.
"""

import json
import math
from collections import deque
from typing import NamedTuple, Optional, Tuple, Union

import numpy as np

from utils.errors import EnvironmentSpecError


# bump whenever the random model generator changes what a (spec, seed) produces
GENERATOR_VERSION = 2
MAX_BITS_PER_COMPONENT = 8

# action k moves by (d_row, d_col) = (k % 3 - 1, k // 3 - 1): NW, W, SW, N, stay, S, NE, E, SE.
# In two radix-3 action components the code of a move is its offset.
GRID_MOVES = tuple((k % 3 - 1, k // 3 - 1) for k in range(9))
CHAIN_LEFT = 0
CHAIN_RIGHT = 1


class EnvSpec(NamedTuple):
    state_dim: int
    action_dim: int
    actions_per_state: int
    state_space_size: int
    gamma_cap: float = 0.9
    seed: int = 0

    @property
    def input_dim(self) -> int:
        return self.state_dim + self.action_dim

    @property
    def goal_reward(self) -> float:
        return 1.0 - self.gamma_cap

    def validate(self):
        if min(self.state_dim, self.action_dim, self.actions_per_state, self.state_space_size) < 1:
            raise EnvironmentSpecError(f'environment dimensions must be positive: {self}')
        if not 0.0 <= self.gamma_cap < 1.0:
            raise EnvironmentSpecError(f'gamma_cap must lie in [0, 1), got {self.gamma_cap}')
        return self


def simple_spec(actions_per_state=9, state_space_size=36, gamma_cap=0.9, seed=0) -> EnvSpec:
    return EnvSpec(4, 2, actions_per_state, state_space_size, gamma_cap, seed)


def complex_spec(actions_per_state=40, state_space_size=1800, gamma_cap=0.9, seed=0) -> EnvSpec:
    # the total input width 20 is fixed; 6 action components hold 40 actions in binary
    return EnvSpec(14, 6, actions_per_state, state_space_size, gamma_cap, seed)


class EnvState(NamedTuple):
    index: int
    features: Tuple[float, ...]


class TabularModel(NamedTuple):
    next_state: np.ndarray
    reward: np.ndarray
    # terminal[s, a]: taking a in s ends the episode
    terminal: np.ndarray
    terminal_states: np.ndarray

    @property
    def state_count(self):
        return self.next_state.shape[0]

    @property
    def action_count(self):
        return self.next_state.shape[1]


def binary_fraction_encoding(n_items: int, dims: int) -> np.ndarray:
    """
    Row k packs k in base 2^b digits, least significant digit first, one digit per
    component scaled to [0, 1]; b is the fewest bits per component that fits.
    """
    bits = max(1, math.ceil(math.log2(n_items))) if n_items > 1 else 1
    bits_per_component = math.ceil(bits / dims)
    if bits_per_component > MAX_BITS_PER_COMPONENT:
        raise EnvironmentSpecError(f'{n_items} items need {bits_per_component} bits per component '
                                   f'in {dims} components (max {MAX_BITS_PER_COMPONENT})')
    levels = 1 << bits_per_component
    codes = np.zeros((n_items, dims), dtype=np.float64)
    for k in range(n_items):
        rest = k
        for c in range(dims):
            codes[k, c] = (rest % levels) / (levels - 1)
            rest //= levels
    return codes


def digit_radix(n_items: int, dims: int) -> int:
    radix = 2
    while radix ** dims < n_items:
        radix += 1
    return radix


def digit_encoding(n_items: int, dims: int) -> np.ndarray:
    """Row k holds the base-r digits of k, least significant first, scaled to [0, 1]; r is the smallest radix that fits."""
    radix = digit_radix(n_items, dims)
    if radix > 1 << MAX_BITS_PER_COMPONENT:
        raise EnvironmentSpecError(f'{n_items} items do not fit {dims} components of radix '
                                   f'{1 << MAX_BITS_PER_COMPONENT}')
    codes = np.zeros((n_items, dims), dtype=np.float64)
    for k in range(n_items):
        rest = k
        for c in range(dims):
            codes[k, c] = (rest % radix) / (radix - 1)
            rest //= radix
    return codes


def grid_shape(state_space_size: int) -> Tuple[int, int]:
    rows = int(math.isqrt(state_space_size))
    while state_space_size % rows != 0:
        rows -= 1
    return rows, state_space_size // rows


class TabularEnvironment:
    def __init__(self, name: str, spec: EnvSpec, model: TabularModel,
                 state_features: np.ndarray, action_features: np.ndarray, layout: dict):
        self.name = name
        self.spec = spec
        self.model = model
        self.state_features = state_features
        self.action_features = action_features
        self.layout = layout
        self._non_terminal = np.flatnonzero(~model.terminal_states)
        self._inputs = np.concatenate(
            [np.repeat(state_features[:, None, :], spec.actions_per_state, axis=1),
             np.repeat(action_features[None, :, :], spec.state_space_size, axis=0)], axis=2)

    @property
    def actions_per_state(self):
        return self.spec.actions_per_state

    @property
    def state_count(self):
        return self.spec.state_space_size

    @property
    def non_terminal_states(self) -> np.ndarray:
        return self._non_terminal

    def _index(self, state: Union[EnvState, int]) -> int:
        idx = state.index if isinstance(state, EnvState) else int(state)
        if not 0 <= idx < self.state_count:
            raise IndexError(f'state index {idx} out of range [0, {self.state_count})')
        return idx

    def _action(self, action: int) -> int:
        if not 0 <= action < self.actions_per_state:
            raise IndexError(f'action index {action} out of range [0, {self.actions_per_state})')
        return int(action)

    def state(self, index: int) -> EnvState:
        idx = self._index(index)
        return EnvState(idx, tuple(self.state_features[idx].tolist()))

    def reset(self, rng: np.random.RandomState) -> EnvState:
        return self.state(int(self._non_terminal[rng.randint(len(self._non_terminal))]))

    def step(self, state, action) -> Tuple[EnvState, float, bool]:
        s, a = self._index(state), self._action(action)
        m = self.model
        return self.state(int(m.next_state[s, a])), float(m.reward[s, a]), bool(m.terminal[s, a])

    def encode_input(self, state, action) -> np.ndarray:
        return self._inputs[self._index(state), self._action(action)].copy()

    def input_matrix(self, state) -> np.ndarray:
        """Inputs for every action of one state, shape (A, input_dim)."""
        return self._inputs[self._index(state)]

    def to_dict(self) -> dict:
        m = self.model
        return {
            'name': self.name,
            'generator_version': GENERATOR_VERSION,
            'spec': self.spec._asdict(),
            'layout': self.layout,
            'next_state': m.next_state.tolist(),
            'reward': m.reward.tolist(),
            'terminal': m.terminal.astype(int).tolist(),
            'terminal_states': np.flatnonzero(m.terminal_states).tolist(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def make_chain(n: int, gamma: float = 0.9) -> TabularEnvironment:
    """States 0..n-1 on a line; entering n-1 pays 1 - gamma and ends the episode."""
    if n < 2:
        raise EnvironmentSpecError(f'chain needs at least 2 states, got {n}')
    spec = EnvSpec(1, 2, 2, n, gamma, 0).validate()
    goal = n - 1
    next_state = np.zeros((n, 2), dtype=np.int64)
    reward = np.zeros((n, 2), dtype=np.float64)
    terminal = np.zeros((n, 2), dtype=bool)
    for s in range(n):
        if s == goal:
            next_state[s, :] = goal
            terminal[s, :] = True
            continue
        next_state[s, CHAIN_LEFT] = max(s - 1, 0)
        next_state[s, CHAIN_RIGHT] = s + 1
        if s + 1 == goal:
            reward[s, CHAIN_RIGHT] = spec.goal_reward
            terminal[s, CHAIN_RIGHT] = True
    terminal_states = np.zeros(n, dtype=bool)
    terminal_states[goal] = True
    # no (state, action) input is all zeros, and each action owns one weight
    state_features = (np.arange(1, n + 1, dtype=np.float64) / n)[:, None]
    action_features = np.eye(2)
    layout = {'kind': 'chain', 'length': n, 'goal': goal, 'state_encoding': '(s + 1) / n',
              'action_encoding': 'one-hot'}
    return TabularEnvironment('chain', spec, TabularModel(next_state, reward, terminal, terminal_states),
                              state_features, action_features, layout)


def _all_reach(next_state: np.ndarray, goal: int) -> bool:
    preds = [[] for _ in range(next_state.shape[0])]
    for s in range(next_state.shape[0]):
        for t in set(next_state[s].tolist()):
            preds[t].append(s)
    seen = {goal}
    todo = deque([goal])
    while todo:
        for p in preds[todo.popleft()]:
            if p not in seen:
                seen.add(p)
                todo.append(p)
    return len(seen) == next_state.shape[0]


def _grid_state_features(S: int, rows: int, cols: int, state_dim: int) -> Tuple[np.ndarray, str]:
    """Row/col coordinates, then their mirror images 1 - x, then a base-2 index code in what is left."""
    if state_dim < 2:
        return binary_fraction_encoding(S, state_dim), 'base-2 index code'
    coords = np.array([[(s // cols) / max(rows - 1, 1), (s % cols) / max(cols - 1, 1)] for s in range(S)])
    parts, names = [coords], ['row/col coordinates']
    if state_dim >= 4:
        parts.append(1.0 - coords)
        names.append('mirrored coordinates')
    rest = state_dim - 2 * len(parts)
    if rest > 0:
        parts.append(binary_fraction_encoding(S, rest))
        names.append('base-2 index code')
    return np.concatenate(parts, axis=1), ' + '.join(names)


def make_grid(spec: EnvSpec) -> TabularEnvironment:
    """
    Seeded random-goal grid. Actions 0..8 are the king moves plus stay; a move
    into a wall slides along it, each coordinate clipped to the grid. Actions
    9 and up jump to a fixed random state drawn once.
    """
    spec = spec.validate()
    S, A = spec.state_space_size, spec.actions_per_state
    rows, cols = grid_shape(S)
    rng = np.random.RandomState(spec.seed)
    goal = int(rng.randint(S))
    jumps = rng.randint(0, S, size=(S, max(A - len(GRID_MOVES), 0)))

    next_state = np.zeros((S, A), dtype=np.int64)
    for s in range(S):
        r, c = divmod(s, cols)
        for a in range(A):
            if a < len(GRID_MOVES):
                dr, dc = GRID_MOVES[a]
                nr, nc = min(max(r + dr, 0), rows - 1), min(max(c + dc, 0), cols - 1)
                next_state[s, a] = nr * cols + nc
            else:
                next_state[s, a] = jumps[s, a - len(GRID_MOVES)]
    next_state[goal, :] = goal
    if not _all_reach(next_state, goal):
        raise EnvironmentSpecError(f'infeasible spec {spec}: some states cannot reach the goal')

    terminal = next_state == goal
    reward = np.where(terminal, spec.goal_reward, 0.0)
    reward[goal, :] = 0.0
    terminal_states = np.zeros(S, dtype=bool)
    terminal_states[goal] = True

    state_features, state_encoding = _grid_state_features(S, rows, cols, spec.state_dim)
    action_features = digit_encoding(A, spec.action_dim)
    layout = {'kind': 'grid', 'rows': rows, 'cols': cols, 'goal': goal,
              'state_encoding': state_encoding,
              'action_encoding': f'radix-{digit_radix(A, spec.action_dim)} index code',
              'input_split': [spec.state_dim, spec.action_dim]}
    return TabularEnvironment('grid', spec, TabularModel(next_state, reward, terminal, terminal_states),
                              state_features, action_features, layout)


def make_environment(name: str, gamma_cap: float = 0.9, seed: int = 0, chain_length: int = 5,
                     actions_per_state: Optional[int] = None,
                     state_space_size: Optional[int] = None) -> TabularEnvironment:
    if name == 'chain':
        return make_chain(chain_length, gamma_cap)
    presets = {'simple': simple_spec, 'complex': complex_spec}
    if name not in presets:
        raise EnvironmentSpecError(f'unknown environment preset {name!r}')
    kwargs = {'gamma_cap': gamma_cap, 'seed': seed}
    if actions_per_state is not None:
        kwargs['actions_per_state'] = actions_per_state
    if state_space_size is not None:
        kwargs['state_space_size'] = state_space_size
    env = make_grid(presets[name](**kwargs))
    env.name = name
    return env


def step(env: TabularEnvironment, state, action):
    return env.step(state, action)


def encode_input(env: TabularEnvironment, state, action) -> np.ndarray:
    return env.encode_input(state, action)
