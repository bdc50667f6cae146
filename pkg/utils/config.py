# coding=utf-8
"""Experiment configuration: JSON file, CLI overrides, validation."""

import json
from dataclasses import asdict, dataclass, field, fields
from typing import Dict, List, Optional

from data_structure.fixed_point import QFormat
from environment.tabular_env import TabularEnvironment, make_environment
from model.q_learning import EpsilonSchedule, Hyperparams
from model.q_network import Backend, Topology, UpdateRule
from utils.errors import ConfigError, QAccelError


SCHEMA_VERSION = 1
ENV_PRESETS = ('simple', 'complex', 'chain')
ARCHS = ('perceptron', 'mlp')
ENV_OVERRIDE_KEYS = ('actions_per_state', 'state_space_size', 'chain_length', 'env_seed', 'gamma_cap')


@dataclass
class ExperimentConfig:
    schema_version: int = SCHEMA_VERSION
    env: str = 'simple'
    env_overrides: Dict[str, float] = field(default_factory=dict)
    arch: str = 'perceptron'
    # used only when arch is mlp
    hidden_sizes: List[int] = field(default_factory=lambda: [4])
    input_dim: Optional[int] = None
    backend: str = 'float'
    word_bits: int = 32
    frac_bits: int = 16
    lut_depth: int = 1024
    lut_lo: float = -8.0
    lut_hi: float = 8.0
    float_uses_lut: bool = False
    alpha: float = 0.5
    gamma: float = 0.9
    c_rate: float = 0.2
    eps_start: float = 1.0
    eps_end: float = 0.1
    eps_decay_steps: int = 10000
    rule: str = 'textbook'
    seed: int = 0
    init_scale: float = 0.5
    steps: int = 20000
    eval_every: int = 1000
    episode_len: int = 50
    clock_hz: float = 150e6
    accept_accuracy: float = 0.9

    @classmethod
    def from_dict(cls, d: dict) -> 'ExperimentConfig':
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ConfigError(f'unknown config keys: {", ".join(unknown)}')
        if d.get('schema_version', SCHEMA_VERSION) != SCHEMA_VERSION:
            raise ConfigError(f'unsupported schema_version {d["schema_version"]}, expected {SCHEMA_VERSION}')
        return cls(**d)

    @classmethod
    def from_json_file(cls, path: str) -> 'ExperimentConfig':
        try:
            with open(path, mode='r', encoding='utf-8') as f_in:
                d = json.load(f_in)
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigError(f'cannot read config {path}: {e}')
        return cls.from_dict(d)

    def apply_overrides(self, **overrides) -> 'ExperimentConfig':
        """Returns a copy with every non-None override applied; 'paper-literal' is accepted for rule."""
        d = self.to_dict()
        for key, value in overrides.items():
            if value is None:
                continue
            if key not in d:
                raise ConfigError(f'unknown override {key}')
            if key == 'rule':
                try:
                    value = UpdateRule.parse(value).value
                except ValueError:
                    raise ConfigError(f'rule must be textbook or paper_literal, got {value!r}')
            d[key] = value
        return ExperimentConfig.from_dict(d)

    @property
    def qformat(self) -> QFormat:
        return QFormat(self.word_bits, self.frac_bits)

    @property
    def hyperparams(self) -> Hyperparams:
        return Hyperparams(self.alpha, self.gamma, self.c_rate, self.eps_end)

    @property
    def epsilon_schedule(self) -> EpsilonSchedule:
        return EpsilonSchedule(self.eps_start, self.eps_end, self.eps_decay_steps)

    @property
    def update_rule(self) -> UpdateRule:
        return UpdateRule.parse(self.rule)

    @property
    def gamma_cap(self) -> float:
        return float(self.env_overrides.get('gamma_cap', max(self.gamma, 0.9)))

    def build_environment(self) -> TabularEnvironment:
        o = self.env_overrides
        return make_environment(self.env, gamma_cap=self.gamma_cap, seed=int(o.get('env_seed', 0)),
                                chain_length=int(o.get('chain_length', 5)),
                                actions_per_state=o.get('actions_per_state'),
                                state_space_size=o.get('state_space_size'))

    def topology(self, input_dim: int) -> Topology:
        if self.arch == 'perceptron':
            return Topology.perceptron(input_dim)
        return Topology.mlp(input_dim, tuple(self.hidden_sizes))

    def validate(self) -> 'ExperimentConfig':
        problems = []
        if self.env not in ENV_PRESETS:
            problems.append(f'env must be one of {ENV_PRESETS}, got {self.env!r}')
        if self.arch not in ARCHS:
            problems.append(f'arch must be one of {ARCHS}, got {self.arch!r}')
        if self.backend not in [b.value for b in Backend]:
            problems.append(f'backend must be fixed or float, got {self.backend!r}')
        unknown = sorted(set(self.env_overrides) - set(ENV_OVERRIDE_KEYS))
        if unknown:
            problems.append(f'unknown env_overrides: {", ".join(unknown)}')
        if self.arch == 'mlp' and (not self.hidden_sizes or min(self.hidden_sizes) < 1):
            problems.append(f'mlp needs positive hidden_sizes, got {self.hidden_sizes}')
        try:
            UpdateRule.parse(self.rule)
        except ValueError:
            problems.append(f'rule must be textbook or paper_literal, got {self.rule!r}')
        for key in ('steps', 'eps_decay_steps'):
            if getattr(self, key) < 0:
                problems.append(f'{key} must be non-negative')
        for key in ('eval_every', 'episode_len'):
            if getattr(self, key) < 1:
                problems.append(f'{key} must be at least 1')
        if not self.init_scale > 0:
            problems.append('init_scale must be positive')
        if not 0.0 <= self.eps_end <= 1.0 or not 0.0 <= self.eps_start <= 1.0:
            problems.append('epsilon schedule endpoints must lie in [0, 1]')
        if not 0.0 <= self.accept_accuracy <= 1.0:
            problems.append('accept_accuracy must lie in [0, 1]')
        if self.gamma > self.gamma_cap:
            problems.append(f'gamma {self.gamma} exceeds the environment gamma_cap {self.gamma_cap}')
        try:
            self.hyperparams.validate()
            self.qformat.validate()
        except ValueError as e:
            problems.append(str(e))
        if not self.lut_hi > self.lut_lo or self.lut_depth < 2:
            problems.append(f'invalid LUT range [{self.lut_lo}, {self.lut_hi}) depth {self.lut_depth}')
        if not self.clock_hz > 0:
            problems.append('clock_hz must be positive')
        if problems:
            raise ConfigError('; '.join(problems))

        try:
            env = self.build_environment()
        except QAccelError as e:
            raise ConfigError(f'environment: {e}')
        width = env.spec.input_dim
        if self.input_dim is not None and self.input_dim != width:
            raise ConfigError(f'input_dim {self.input_dim} does not match the {self.env} encoding width {width}')
        return self

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json_string(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)
