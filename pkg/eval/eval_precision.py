# coding=utf-8
"""
Precision sweep: fixed-point word/fraction widths and LUT depths against the
float backend. Each combination reports the probe-set agreement on the base
config's topology and input width, the agreement on the standard 6-input
perceptron probe set, and the final policy accuracy of a fixed-point training
run built from the base config.
"""

import argparse
import itertools
import logging
import multiprocessing
import sys
from typing import List, NamedTuple, Sequence

import pandas as pd

from data_structure.fixed_point import QFormat
from model.q_network import Topology, probe_backend_agreement
from trainer.q_trainer import run_training
from utils.config import ExperimentConfig
from utils.errors import AcceptanceError
from utils.misc import setup_logger
from utils.report_writer import format_table


AGREEMENT_BOUND = 2.0 ** -8
PROBE_PAIRS = 1000
PROBE_SEED = 0
# the agreement bound is stated for 6-input perceptrons
STANDARD_PROBE_TOPOLOGY = Topology.perceptron(6)


class SweepPoint(NamedTuple):
    index: int
    word_bits: int
    frac_bits: int
    lut_depth: int


class SweepResult(NamedTuple):
    table: pd.DataFrame
    # soft expectation: probe error should not grow as frac_bits grows
    monotonicity_violations: List[str]


def probe_topology(base: ExperimentConfig) -> Topology:
    return base.topology(base.build_environment().spec.input_dim)


def _sweep_one(task):
    point, base, n_pairs, train = task
    fmt = QFormat(point.word_bits, point.frac_bits)
    topology = probe_topology(base)
    probe = probe_backend_agreement(n_pairs, PROBE_SEED, fmt, point.lut_depth, base.lut_lo, base.lut_hi,
                                    topology.input_dim, topology.hidden_sizes)
    if topology == STANDARD_PROBE_TOPOLOGY:
        standard = probe
    else:
        standard = probe_backend_agreement(n_pairs, PROBE_SEED, fmt, point.lut_depth, base.lut_lo, base.lut_hi)
    row = point._asdict()
    row.update({'qformat': str(fmt), 'probe_topology': '-'.join(str(n) for n in topology.layer_sizes),
                'max_abs_dq': probe['max_abs_dq'], 'mean_abs_dq': probe['mean_abs_dq'],
                'probe_overflow': probe['overflow_count'], 'standard_max_abs_dq': standard['max_abs_dq']})
    if train:
        cfg = base.apply_overrides(backend='fixed', word_bits=point.word_bits, frac_bits=point.frac_bits,
                                   lut_depth=point.lut_depth)
        report = run_training(cfg, logging.getLogger(__name__))
        row['final_accuracy'] = report.final_accuracy
        row['train_overflow'] = report.overflow_count
    return row


class PrecisionSweeper:
    def __init__(self, base: ExperimentConfig, logger, workers: int = 1, n_pairs: int = PROBE_PAIRS,
                 train: bool = True):
        self.base = base
        self.logger = logger
        self.workers = workers
        self.n_pairs = n_pairs
        self.train = train

    def points(self, word_bits: Sequence[int], frac_bits: Sequence[int], lut_depths: Sequence[int]):
        points = []
        for w, f, d in itertools.product(word_bits, frac_bits, lut_depths):
            if not 0 <= f < w:
                self.logger.info(f'skip Q{{{w},{f}}}: frac_bits must be below word_bits')
                continue
            points.append(SweepPoint(len(points), w, f, d))
        return points

    def run(self, word_bits: Sequence[int], frac_bits: Sequence[int], lut_depths: Sequence[int]) -> SweepResult:
        if not word_bits or not frac_bits or not lut_depths:
            raise ValueError('precision sweep needs non-empty word_bits, frac_bits and lut_depths')
        tasks = [(p, self.base, self.n_pairs, self.train) for p in self.points(word_bits, frac_bits, lut_depths)]
        if self.workers > 1:
            with multiprocessing.Pool(self.workers) as pool:
                rows = pool.map(_sweep_one, tasks)
        else:
            rows = [_sweep_one(t) for t in tasks]
        table = pd.DataFrame(sorted(rows, key=lambda r: r['index'])).drop(columns=['index'])
        violations = monotonicity_violations(table)
        for v in violations:
            self.logger.info(f'non-monotone probe error: {v}')
        return SweepResult(table, violations)


def monotonicity_violations(table: pd.DataFrame) -> List[str]:
    found = []
    for (w, d), group in table.groupby(['word_bits', 'lut_depth'], sort=True):
        group = group.sort_values('frac_bits')
        errors = group['max_abs_dq'].tolist()
        fracs = group['frac_bits'].tolist()
        for k in range(1, len(errors)):
            if errors[k] > errors[k - 1]:
                found.append(f'word_bits={w} lut_depth={d}: frac_bits {fracs[k - 1]} -> {fracs[k]} '
                             f'raised max |dQ| {errors[k - 1]:.3g} -> {errors[k]:.3g}')
    return found


def run_precision_sweep(config: ExperimentConfig, word_bits: Sequence[int], frac_bits: Sequence[int],
                        lut_depths: Sequence[int], workers: int = 1, logger=None, n_pairs: int = PROBE_PAIRS,
                        train: bool = True) -> SweepResult:
    sweeper = PrecisionSweeper(config, logger or logging.getLogger(__name__), workers, n_pairs, train)
    return sweeper.run(word_bits, frac_bits, lut_depths)


def check_sweep(result: SweepResult) -> List[str]:
    rows = result.table[(result.table['word_bits'] == 32) & (result.table['frac_bits'] == 16)
                        & (result.table['lut_depth'] == 1024)]
    return [f'Q{{32,16}} depth 1024 standard-probe max |dQ| {v:.3g} exceeds 2^-8'
            for v in rows['standard_max_abs_dq'] if v > AGREEMENT_BOUND]


def _int_list(text: str) -> List[int]:
    return [int(v) for v in text.split(',') if v]


if __name__ == "__main__":
    cmd = argparse.ArgumentParser("Fixed-point precision sweep")
    cmd.add_argument("--config", required=True, type=str)
    cmd.add_argument("--word_bits", default='32', type=str, help='comma separated')
    cmd.add_argument("--frac_bits", default='4,8,12,16', type=str, help='comma separated')
    cmd.add_argument("--lut_depths", default='256,1024', type=str, help='comma separated')
    cmd.add_argument("--workers", default=1, type=int)
    cmd.add_argument("--check", action='store_true')
    args = cmd.parse_args(sys.argv[1:])

    logger = setup_logger()
    result = run_precision_sweep(ExperimentConfig.from_json_file(args.config), _int_list(args.word_bits),
                                 _int_list(args.frac_bits), _int_list(args.lut_depths), args.workers, logger)
    print(format_table(result.table))
    if args.check:
        problems = check_sweep(result)
        if problems:
            raise AcceptanceError(problems)
