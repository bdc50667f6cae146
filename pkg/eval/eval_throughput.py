# coding=utf-8
"""Throughput tables of the datapath model, one per architecture, rows in published order."""

import argparse
import sys
from typing import List, Sequence

import pandas as pd

from environment.tabular_env import complex_spec, simple_spec
from model.cycle_model import (DEFAULT_CLOCK_HZ, MLP, PERCEPTRON, PUBLISHED_COMPLETION_US, PUBLISHED_THROUGHPUT,
                               default_cycle_model, fpga_update_time_us, make_throughput_report,
                               perceptron_fixed_cycles, published_value, throughput)
from model.q_network import Topology
from utils.errors import AcceptanceError
from utils.report_writer import format_table


ROW_ORDER = (('fixed', 'simple'), ('float', 'simple'), ('fixed', 'complex'), ('float', 'complex'))
PRESET_SPECS = {'simple': simple_spec, 'complex': complex_spec}
BACKEND_LABEL = {'fixed': 'Fixed Point', 'float': 'Floating Point'}
MLP_HIDDEN = (4,)


def preset_topology(arch: str, preset: str) -> Topology:
    spec = PRESET_SPECS[preset]()
    if arch == PERCEPTRON:
        return Topology.perceptron(spec.input_dim)
    return Topology.mlp(spec.input_dim, MLP_HIDDEN)


def run_throughput_table(clock_hz: float = DEFAULT_CLOCK_HZ, presets: Sequence[str] = ('simple', 'complex'),
                         archs: Sequence[str] = (PERCEPTRON, MLP)) -> pd.DataFrame:
    rows = []
    for arch in archs:
        for backend, preset in ROW_ORDER:
            if preset not in presets:
                continue
            A = PRESET_SPECS[preset]().actions_per_state
            topology = preset_topology(arch, preset)
            report = make_throughput_report(default_cycle_model(arch, backend, clock_hz), A, topology)
            published = published_value(PUBLISHED_THROUGHPUT, arch, backend, preset)
            kq = report.kq_per_second
            rows.append({
                'arch': arch,
                'row': f'{BACKEND_LABEL[backend]} {preset.capitalize()}',
                'actions': A,
                'cycles': report.cycles_per_q_update,
                'kq_per_second': round(kq, 4),
                'update_time_us': round(fpga_update_time_us(report.cycles_per_q_update, clock_hz), 4),
                'fifo_peak': report.fifo_peak_occupancy,
                'published_kq_per_second': published.value,
                'relative_error': round(abs(kq - published.value) / published.value, 4),
                'derivable': published.derivable,
            })
    return pd.DataFrame(rows)


def check_throughput(clock_hz: float = DEFAULT_CLOCK_HZ) -> List[str]:
    """Returns the failed acceptance checks (empty when everything holds)."""
    failures = []
    table = run_throughput_table(clock_hz)

    def row(arch, label):
        return table[(table['arch'] == arch) & (table['row'] == label)].iloc[0]

    simple_kq = throughput(perceptron_fixed_cycles(9), clock_hz)
    if perceptron_fixed_cycles(9) != 64:
        failures.append('perceptron_fixed_cycles(9) != 64')
    if abs(simple_kq - 2340.0) / 2340.0 > 0.005:
        failures.append(f'fixed simple perceptron {simple_kq:.2f} kQ/s not within 0.5% of 2340')
    complex_kq = row(PERCEPTRON, 'Fixed Point Complex')['kq_per_second']
    if abs(complex_kq - 530.0) / 530.0 > 0.01:
        failures.append(f'fixed complex perceptron {complex_kq:.2f} kQ/s not within 1% of 530')
    for label in ('Fixed Point Simple', 'Fixed Point Complex'):
        r = row(MLP, label)
        if r['relative_error'] > 0.10:
            failures.append(f'mlp {label} {r["kq_per_second"]:.1f} kQ/s not within 10% of '
                            f'{r["published_kq_per_second"]}')
    fixed_time = fpga_update_time_us(perceptron_fixed_cycles(9), clock_hz)
    published_time = published_value(PUBLISHED_COMPLETION_US, PERCEPTRON, 'fixed', 'simple').value
    if abs(fixed_time - published_time) / published_time > 0.10:
        failures.append(f'fixed simple update time {fixed_time:.3f} us not within 10% of {published_time}')
    return failures


if __name__ == "__main__":
    cmd = argparse.ArgumentParser("Throughput tables of the Q-learning datapath model")
    cmd.add_argument("--clock_hz", default=DEFAULT_CLOCK_HZ, type=float)
    cmd.add_argument("--format", default='text', choices=['text', 'csv'])
    cmd.add_argument("--check", action='store_true')
    args = cmd.parse_args(sys.argv[1:])

    print(format_table(run_throughput_table(args.clock_hz), args.format))
    if args.check:
        problems = check_throughput(args.clock_hz)
        if problems:
            raise AcceptanceError(problems)
