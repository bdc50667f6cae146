# coding=utf-8

import argparse
import logging
import os
import sys
import time
from typing import Dict, List, NamedTuple, Optional

import numpy as np
from tqdm import trange

from data_structure.fixed_point import FixedPointEngine
from data_structure.q_value_fifo import FifoTrace
from environment.tabular_env import TabularEnvironment
from model.cycle_model import calibration_constants, default_cycle_model, make_throughput_report
from model.q_learning import (EpsilonSchedule, Hyperparams, greedy_policy_accuracy, mean_abs_q_error,
                              network_q_matrix, neural_q_step, value_iteration)
from model.q_network import Backend, QNetwork, UpdateRule, init_network, make_activations
from utils.config import ExperimentConfig
from utils.errors import ConfigError
from utils.misc import set_seed, setup_logger
from utils.report_writer import to_json_string, write_json


HOST_TIMING_UPDATES = 200


class EvalPoint(NamedTuple):
    step: int
    accuracy: float
    mean_abs_q_error: float
    overflow_count: int


class RunReport(NamedTuple):
    config: dict
    environment: dict
    evals: List[EvalPoint]
    overflow_count: int
    throughput: dict
    calibration: dict
    # wall-clock per backend, excluded from the deterministic report; `timing` gives repeated trials
    host_seconds_per_1000: Optional[Dict[str, float]] = None

    @property
    def final_accuracy(self) -> float:
        return self.evals[-1].accuracy

    @property
    def peak_accuracy(self) -> float:
        """Best greedy-policy accuracy seen after training started."""
        trained = [e.accuracy for e in self.evals if e.step > 0]
        return max(trained) if trained else self.evals[0].accuracy

    def to_dict(self) -> dict:
        return {
            'config': self.config,
            'environment': self.environment,
            'evals': [e._asdict() for e in self.evals],
            'overflow_count': self.overflow_count,
            'throughput': self.throughput,
            'calibration': self.calibration,
        }

    def to_json_string(self) -> str:
        return to_json_string(self.to_dict())


class QTrainer(object):
    def __init__(self, net: QNetwork, env: TabularEnvironment, q_star: np.ndarray, logger,
                 engine: Optional[FixedPointEngine] = None):
        self.net = net
        self.env = env
        self.q_star = q_star
        self.logger = logger
        self.engine = engine

    @property
    def overflow_count(self) -> int:
        return self.engine.overflow_count if self.engine is not None else 0

    def evaluate(self, step: int) -> EvalPoint:
        states = self.env.non_terminal_states
        q = network_q_matrix(self.net, self.env)
        return EvalPoint(step, greedy_policy_accuracy(q, self.q_star, states),
                         mean_abs_q_error(q, self.q_star, states), self.overflow_count)

    def train(self, steps: int, hyper: Hyperparams, schedule: EpsilonSchedule, rule: UpdateRule,
              rng: np.random.RandomState, eval_every: int, episode_len: int, trace_path: Optional[str] = None):
        evals = [self.evaluate(0)]
        self.logger.info(f'progress:0/{steps} accuracy: {evals[0].accuracy:.4f}, '
                         f'mean |Q - Q*|: {evals[0].mean_abs_q_error:.6f}')
        trace_file = open(trace_path, mode='w', encoding='utf-8') if trace_path else None
        try:
            state = self.env.reset(rng)
            episode_t = 0
            for step in trange(steps, desc='Q-update', disable=steps == 0):
                # buffer events of the first update are replayed as a FIFO check
                fifo_trace = FifoTrace(self.env.actions_per_state) if step == 0 else None
                next_state, record = neural_q_step(self.net, self.env, state, hyper, rng, rule,
                                                   schedule.value(step), step, fifo_trace)
                if fifo_trace is not None:
                    fifo_trace.validate()
                if trace_file is not None:
                    trace_file.write(record.to_json_line())
                    trace_file.write('\n')
                episode_t += 1
                if record.terminal or episode_t >= episode_len:
                    state = self.env.reset(rng)
                    episode_t = 0
                else:
                    state = next_state
                if (step + 1) % eval_every == 0 or step + 1 == steps:
                    point = self.evaluate(step + 1)
                    evals.append(point)
                    self.logger.info(f'progress:{step + 1}/{steps} accuracy: {point.accuracy:.4f}, '
                                     f'mean |Q - Q*|: {point.mean_abs_q_error:.6f}, '
                                     f'overflow: {point.overflow_count}')
        finally:
            if trace_file is not None:
                trace_file.close()
        if self.overflow_count > 0:
            self.logger.info(f'fixed-point saturation events: {self.overflow_count}')
        return evals


def build_network(config: ExperimentConfig, input_dim: int):
    backend = Backend(config.backend)
    activations = make_activations(backend, config.qformat, config.lut_lo, config.lut_hi, config.lut_depth,
                                   config.float_uses_lut)
    engine = FixedPointEngine(config.qformat) if backend == Backend.FIXED else None
    net = init_network(config.topology(input_dim), config.seed, config.init_scale, backend, activations, engine)
    return net, engine


def time_q_updates(config: ExperimentConfig, updates: int, rng: np.random.RandomState) -> float:
    """Wall-clock seconds of `updates` Q-updates on a fresh network, nothing else timed."""
    env = config.build_environment()
    net, _ = build_network(config, env.spec.input_dim)
    hyper = config.hyperparams
    state = env.reset(rng)
    start = time.perf_counter()
    for step in range(updates):
        next_state, record = neural_q_step(net, env, state, hyper, rng, config.update_rule, hyper.epsilon, step)
        state = env.reset(rng) if record.terminal else next_state
    return time.perf_counter() - start


def host_update_seconds(config: ExperimentConfig) -> Optional[Dict[str, float]]:
    """Host seconds per 1000 Q-updates for each software backend, from one short run apiece."""
    if config.steps == 0:
        return None
    updates = min(config.steps, HOST_TIMING_UPDATES)
    return {backend: time_q_updates(config.apply_overrides(backend=backend), updates,
                                    np.random.RandomState([config.seed, 2])) / updates * 1000
            for backend in ('float', 'fixed')}


def run_training(config: ExperimentConfig, logger=None, trace_path: Optional[str] = None) -> RunReport:
    logger = logger or logging.getLogger(__name__)
    config.validate()
    set_seed(config.seed)
    env = config.build_environment()
    q_star = value_iteration(env, config.gamma)
    net, engine = build_network(config, env.spec.input_dim)
    logger.info(f'{config.arch}/{config.backend} on {env.name}: {env.state_count} states, '
                f'{env.actions_per_state} actions, topology {net.topology.layer_sizes}')

    trainer = QTrainer(net, env, q_star, logger, engine)
    # policy/environment stream, independent of the weight initialisation stream
    rng = np.random.RandomState([config.seed, 1])
    evals = trainer.train(config.steps, config.hyperparams, config.epsilon_schedule, config.update_rule, rng,
                          config.eval_every, config.episode_len, trace_path)

    cycle_model = default_cycle_model(config.arch, config.backend, config.clock_hz)
    throughput = make_throughput_report(cycle_model, env.actions_per_state, net.topology, trainer.overflow_count)
    env_info = {'name': env.name, 'spec': env.spec._asdict(), 'layout': env.layout}
    return RunReport(config.to_dict(), env_info, evals, trainer.overflow_count, throughput.to_dict(),
                     calibration_constants(), host_update_seconds(config))


if __name__ == '__main__':
    cmd = argparse.ArgumentParser('Neural Q-learning on an enumerable environment')
    cmd.add_argument('--config', required=True, type=str, help='experiment config json')
    cmd.add_argument('--seed', default=None, type=int)
    cmd.add_argument('--steps', default=None, type=int)
    cmd.add_argument('--trace', default=None, type=str, help='write one JSON line per Q-update')
    cmd.add_argument('--out', required=True, type=str, help='output directory')
    args = cmd.parse_args(sys.argv[1:])

    logger = setup_logger(args.out)
    try:
        cfg = ExperimentConfig.from_json_file(args.config).apply_overrides(seed=args.seed, steps=args.steps)
        report = run_training(cfg, logger, args.trace)
    except ConfigError as e:
        logger.error(e)
        sys.exit(2)
    write_json(report.to_dict(), os.path.join(args.out, 'report.json'))
