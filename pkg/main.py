# coding=utf-8
"""
Command line entry: train, throughput, sweep, timing, env dump, oracle.

Exit codes: 0 on success, 2 on a configuration error, 3 when a --check fails.
"""

import argparse
import os
import sys

from eval.eval_oracle import check_oracle, run_oracle
from eval.eval_precision import check_sweep, run_precision_sweep
from eval.eval_throughput import check_throughput, run_throughput_table
from eval.eval_timing import run_host_timing
from model.cycle_model import calibration_constants
from trainer.q_trainer import run_training
from utils.config import ENV_PRESETS, ExperimentConfig
from utils.errors import AcceptanceError, ConfigError
from utils.misc import machine_metadata, setup_logger
from utils.report_writer import format_table, make_table, to_json_string, write_json, write_table


EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_ACCEPTANCE = 3


def _int_list(text):
    return [int(v) for v in text.split(',') if v]


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--config', default=None, type=str, help='experiment config json')
    common.add_argument('--seed', default=None, type=int)
    common.add_argument('--backend', default=None, choices=['fixed', 'float'])
    common.add_argument('--arch', default=None, choices=['perceptron', 'mlp'])
    common.add_argument('--env', default=None, choices=list(ENV_PRESETS))
    common.add_argument('--steps', default=None, type=int)
    common.add_argument('--rule', default=None, choices=['textbook', 'paper-literal', 'paper_literal'])
    common.add_argument('--out', default=None, type=str, help='output directory')
    common.add_argument('--check', action='store_true', help='fail with exit code 3 on an acceptance miss')

    cmd = argparse.ArgumentParser('Fixed-point neural Q-learning accelerator model')
    sub = cmd.add_subparsers(dest='command', required=True)

    train = sub.add_parser('train', parents=[common])
    train.add_argument('--trace', default=None, type=str, help='one JSON line per Q-update')

    throughput = sub.add_parser('throughput', parents=[common])
    throughput.add_argument('--format', default='text', choices=['text', 'csv'])
    throughput.add_argument('--clock_hz', default=None, type=float)

    sweep = sub.add_parser('sweep', parents=[common])
    sweep.add_argument('--word_bits', default='32', type=str, help='comma separated')
    sweep.add_argument('--frac_bits', default='4,8,12,16', type=str, help='comma separated')
    sweep.add_argument('--lut_depths', default='256,1024', type=str, help='comma separated')
    sweep.add_argument('--workers', default=1, type=int)
    sweep.add_argument('--format', default='text', choices=['text', 'csv'])

    timing = sub.add_parser('timing', parents=[common])
    timing.add_argument('--trials', default=5, type=int)
    timing.add_argument('--updates', default=200, type=int)

    env = sub.add_parser('env', parents=[common])
    env.add_argument('action', choices=['dump'])

    sub.add_parser('oracle', parents=[common])
    return cmd


def resolve_config(args) -> ExperimentConfig:
    config = ExperimentConfig.from_json_file(args.config) if args.config else ExperimentConfig()
    config = config.apply_overrides(seed=args.seed, backend=args.backend, arch=args.arch, env=args.env,
                                    steps=args.steps, rule=args.rule)
    return config.validate()


def _emit(text, args, name):
    print(text)
    if args.out is not None:
        with open(os.path.join(args.out, name), mode='w', encoding='utf-8') as f_out:
            f_out.write(text)
            f_out.write('\n')


def cmd_train(args, config, logger):
    report = run_training(config, logger, args.trace)
    evals = make_table([e._asdict() for e in report.evals])
    print(format_table(evals))
    if args.out is not None:
        write_json(report.to_dict(), os.path.join(args.out, 'report.json'))
        write_table(evals, os.path.join(args.out, 'evals.csv'))
        if report.host_seconds_per_1000 is not None:
            write_json({'machine': machine_metadata(), 'host_seconds_per_1000_updates': report.host_seconds_per_1000},
                       os.path.join(args.out, 'host_timing.json'))
    if report.final_accuracy < config.accept_accuracy:
        return [f'final accuracy {report.final_accuracy:.3f} below {config.accept_accuracy}']
    return []


def cmd_throughput(args, config, logger):
    clock_hz = args.clock_hz or config.clock_hz
    table = run_throughput_table(clock_hz)
    print(format_table(table, args.format))
    logger.info(f'calibrated stage model: {calibration_constants()}')
    if args.out is not None:
        write_table(table, os.path.join(args.out, 'throughput.csv'))
        write_json(calibration_constants(), os.path.join(args.out, 'calibration.json'))
    return check_throughput(clock_hz)


def cmd_sweep(args, config, logger):
    result = run_precision_sweep(config, _int_list(args.word_bits), _int_list(args.frac_bits),
                                 _int_list(args.lut_depths), args.workers, logger)
    print(format_table(result.table, args.format))
    if args.out is not None:
        write_table(result.table, os.path.join(args.out, 'sweep.csv'))
        write_json({'config': config.to_dict(), 'monotonicity_violations': result.monotonicity_violations},
                   os.path.join(args.out, 'sweep.json'))
    return check_sweep(result)


def cmd_timing(args, config, logger):
    table = run_host_timing(config, logger, args.trials, args.updates)
    print(format_table(table))
    if args.out is not None:
        write_table(table, os.path.join(args.out, 'timing.csv'))
        write_json({'machine': machine_metadata(), 'rows': table.to_dict(orient='records')},
                   os.path.join(args.out, 'host_timing.json'))
    fpga = table[(table['machine_class'] == 'simulated-fpga') & (table['backend'] == 'fixed')]
    if config.arch == 'perceptron' and config.env == 'simple':
        t = float(fpga['min_us'].iloc[0])
        if abs(t - 0.4) / 0.4 > 0.10:
            return [f'simulated fixed update time {t:.3f} us not within 10% of 0.4 us']
    return []


def cmd_env(args, config, logger):
    env = config.build_environment()
    _emit(to_json_string(env.to_dict()), args, 'env.json')
    return []


def cmd_oracle(args, config, logger):
    result = run_oracle(config, logger)
    print(format_table(result.table))
    if args.out is not None:
        write_table(result.table, os.path.join(args.out, 'oracle.csv'))
        write_json({'q_star': result.q_star, 'tabular_history': result.tabular_history},
                   os.path.join(args.out, 'oracle.json'))
    return check_oracle(result)


COMMANDS = {'train': cmd_train, 'throughput': cmd_throughput, 'sweep': cmd_sweep, 'timing': cmd_timing,
            'env': cmd_env, 'oracle': cmd_oracle}


def main(argv=None) -> int:
    args = build_parser().parse_args(sys.argv[1:] if argv is None else argv)
    if args.out is not None:
        os.makedirs(args.out, exist_ok=True)
    logger = setup_logger(args.out)
    try:
        config = resolve_config(args)
        failures = COMMANDS[args.command](args, config, logger)
        if args.check and failures:
            raise AcceptanceError(failures)
    except ConfigError as e:
        logger.error(f'config error: {e}')
        return EXIT_CONFIG
    except AcceptanceError as e:
        logger.error(str(e))
        return EXIT_ACCEPTANCE
    if args.check:
        logger.info(f'{args.command}: all checks passed')
    return EXIT_OK


if __name__ == '__main__':
    sys.exit(main())
