# coding=utf-8
"""
Host wall-clock per Q-update for both software backends, next to the simulated
FPGA time of the datapath model. The rows come from different machine classes
and are not comparable with each other or with published CPU figures.
"""

import argparse
import logging
import os
import statistics
import sys
from typing import List

import numpy as np
import pandas as pd

from model.cycle_model import default_cycle_model, fpga_update_time_us
from trainer.q_trainer import time_q_updates
from utils.config import ExperimentConfig
from utils.misc import machine_metadata, setup_logger
from utils.report_writer import format_table, write_json, write_table


MIN_TRIALS = 5


class HostTimer:
    def __init__(self, config: ExperimentConfig, logger, trials: int = MIN_TRIALS, updates: int = 200):
        if trials < MIN_TRIALS:
            raise ValueError(f'need at least {MIN_TRIALS} trials, got {trials}')
        self.config = config
        self.logger = logger
        self.trials = trials
        self.updates = updates

    def time_backend(self, backend: str) -> List[float]:
        """Microseconds per Q-update, one entry per trial."""
        cfg = self.config.apply_overrides(backend=backend)
        samples = [time_q_updates(cfg, self.updates, np.random.RandomState([cfg.seed, trial])) / self.updates * 1e6
                   for trial in range(self.trials)]
        self.logger.info(f'{backend} backend: min {min(samples):.1f} us, '
                         f'median {statistics.median(samples):.1f} us per Q-update')
        return samples

    def run(self) -> pd.DataFrame:
        cpu = machine_metadata()['cpu_model']
        rows = []
        for backend in ('float', 'fixed'):
            samples = self.time_backend(backend)
            rows.append({'machine_class': 'host-software', 'machine': cpu, 'arch': self.config.arch,
                         'backend': backend, 'trials': self.trials, 'min_us': min(samples),
                         'median_us': statistics.median(samples)})
        env = self.config.build_environment()
        topology = self.config.topology(env.spec.input_dim)
        for backend in ('fixed', 'float'):
            model = default_cycle_model(self.config.arch, backend, self.config.clock_hz)
            t = fpga_update_time_us(model.total_cycles(env.actions_per_state, topology), self.config.clock_hz)
            rows.append({'machine_class': 'simulated-fpga', 'machine': f'{self.config.clock_hz / 1e6:g} MHz model',
                         'arch': self.config.arch, 'backend': backend, 'trials': 1, 'min_us': t, 'median_us': t})
        return pd.DataFrame(rows)


def run_host_timing(config: ExperimentConfig, logger=None, trials: int = MIN_TRIALS,
                    updates: int = 200) -> pd.DataFrame:
    config.validate()
    return HostTimer(config, logger or logging.getLogger(__name__), trials, updates).run()


if __name__ == "__main__":
    cmd = argparse.ArgumentParser("Host timing of the software Q-update")
    cmd.add_argument("--config", required=True, type=str)
    cmd.add_argument("--trials", default=MIN_TRIALS, type=int)
    cmd.add_argument("--updates", default=200, type=int)
    cmd.add_argument("--out", default=None, type=str)
    args = cmd.parse_args(sys.argv[1:])

    logger = setup_logger(args.out)
    table = run_host_timing(ExperimentConfig.from_json_file(args.config), logger, args.trials, args.updates)
    print(format_table(table))
    if args.out is not None:
        write_table(table, os.path.join(args.out, 'timing.csv'))
        write_json({'machine': machine_metadata(), 'rows': table.to_dict(orient='records')},
                   os.path.join(args.out, 'host_timing.json'))
