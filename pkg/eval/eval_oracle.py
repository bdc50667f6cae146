# coding=utf-8
"""Value-iteration reference Q* of an environment, and tabular Q-learning converging to it."""

import argparse
import logging
import sys
from typing import List, NamedTuple

import numpy as np
import pandas as pd

from model.q_learning import greedy_action, optimal_action_mask, train_tabular, value_iteration
from utils.config import ExperimentConfig
from utils.errors import AcceptanceError
from utils.misc import setup_logger
from utils.report_writer import format_table


TABULAR_TOL = 1e-3


class OracleResult(NamedTuple):
    q_star: np.ndarray
    table: pd.DataFrame
    # sup-norm distance to Q* after each exhaustive tabular sweep
    tabular_history: List[float]

    @property
    def tabular_distance(self) -> float:
        return self.tabular_history[-1]


def run_oracle(config: ExperimentConfig, logger=None, tol: float = TABULAR_TOL,
               max_sweeps: int = 1000) -> OracleResult:
    logger = logger or logging.getLogger(__name__)
    config.validate()
    env = config.build_environment()
    q_star = value_iteration(env, config.gamma)
    _, history = train_tabular(env, config.hyperparams, q_star, tol, max_sweeps)
    logger.info(f'tabular Q-learning on {env.name}: {len(history) - 1} sweeps, '
                f'sup |Q - Q*| = {history[-1]:.3g}')
    optimal = optimal_action_mask(q_star)
    terminal = env.model.terminal_states
    rows = [{'state': s, 'terminal': bool(terminal[s]), 'v_star': float(q_star[s].max()),
             'greedy_action': greedy_action(q_star[s]),
             'optimal_actions': ' '.join(str(a) for a in np.flatnonzero(optimal[s]))}
            for s in range(env.state_count)]
    return OracleResult(q_star, pd.DataFrame(rows), history)


def check_oracle(result: OracleResult, tol: float = TABULAR_TOL) -> List[str]:
    if result.tabular_distance > tol:
        return [f'tabular Q-learning ended {result.tabular_distance:.3g} from Q*, above {tol}']
    return []


if __name__ == "__main__":
    cmd = argparse.ArgumentParser("Value-iteration oracle")
    cmd.add_argument("--config", required=True, type=str)
    cmd.add_argument("--check", action='store_true')
    args = cmd.parse_args(sys.argv[1:])

    result = run_oracle(ExperimentConfig.from_json_file(args.config), setup_logger())
    print(format_table(result.table))
    if args.check:
        problems = check_oracle(result)
        if problems:
            raise AcceptanceError(problems)
