import json
import os
import tempfile
import unittest
from unittest import TestCase

from eval.eval_oracle import check_oracle, run_oracle
from eval.eval_precision import check_sweep, run_precision_sweep
from eval.eval_timing import run_host_timing
from main import EXIT_ACCEPTANCE, EXIT_CONFIG, EXIT_OK, main
from model.q_learning import Hyperparams
from model.q_network import UpdateRule
from trainer.q_trainer import run_training
from utils.config import ExperimentConfig
from utils.errors import AcceptanceError, ConfigError


CONFIG_DIR = os.path.join(os.path.dirname(os.path.abspath(__file__)), '..', 'data', 'config')


def small_config(**overrides):
    base = dict(env='simple', arch='perceptron', backend='fixed', steps=300, eval_every=100, eps_decay_steps=200)
    base.update(overrides)
    return ExperimentConfig().apply_overrides(**base)


class TestConfig(TestCase):
    def test_defaults_validate(self):
        config = ExperimentConfig().validate()
        self.assertEqual(config.qformat.word_bits, 32)
        self.assertEqual(config.hyperparams.epsilon, config.eps_end)
        self.assertEqual(config.c_rate, Hyperparams().c_rate)
        self.assertEqual(config.c_rate, 0.2)

    def test_shipped_configs_validate(self):
        for name in sorted(os.listdir(CONFIG_DIR)):
            config = ExperimentConfig.from_json_file(os.path.join(CONFIG_DIR, name)).validate()
            self.assertEqual(config.c_rate, 0.2, msg=name)

    def test_rejects_bad_values(self):
        for overrides in (dict(env='maze'), dict(backend='double'), dict(frac_bits=40), dict(rule='literal'),
                          dict(alpha=1.5), dict(steps=-1), dict(lut_depth=1), dict(input_dim=7)):
            with self.assertRaises(ConfigError, msg=str(overrides)):
                ExperimentConfig().apply_overrides(**overrides).validate()

    def test_gamma_above_cap(self):
        config = ExperimentConfig(gamma=0.95, env_overrides={'gamma_cap': 0.9})
        with self.assertRaises(ConfigError):
            config.validate()

    def test_unknown_keys_and_schema(self):
        with self.assertRaises(ConfigError):
            ExperimentConfig.from_dict({'learning_rate': 0.1})
        with self.assertRaises(ConfigError):
            ExperimentConfig.from_dict({'schema_version': 2})
        with self.assertRaises(ConfigError):
            ExperimentConfig().apply_overrides(momentum=0.9)
        with self.assertRaises(ConfigError):
            ExperimentConfig.from_json_file(os.path.join(CONFIG_DIR, 'missing.json'))

    def test_overrides(self):
        config = ExperimentConfig().apply_overrides(rule='paper-literal', seed=None, steps=10)
        self.assertEqual(config.update_rule, UpdateRule.PAPER_LITERAL)
        self.assertEqual(config.rule, 'paper_literal')
        self.assertEqual(config.seed, 0)
        self.assertEqual(config.steps, 10)
        self.assertEqual(ExperimentConfig.from_dict(json.loads(config.to_json_string())), config)


class TestTraining(TestCase):
    def test_zero_steps(self):
        report = run_training(small_config(steps=0))
        self.assertEqual(len(report.evals), 1)
        self.assertEqual(report.evals[0].step, 0)
        self.assertIsNone(report.host_seconds_per_1000)
        self.assertEqual(report.throughput['cycles_per_q_update'], 64)

    def test_deterministic_report(self):
        a = run_training(small_config())
        b = run_training(small_config())
        self.assertEqual(a.to_json_string(), b.to_json_string())
        self.assertEqual([e.step for e in a.evals], [0, 100, 200, 300])
        self.assertEqual(a.overflow_count, 0)
        self.assertNotIn('host_seconds_per_1000', a.to_dict())

    def test_trace_file(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, 'trace.jsonl')
            run_training(small_config(steps=25, eval_every=25, backend='float', arch='mlp'), trace_path=path)
            with open(path, mode='r', encoding='utf-8') as f_in:
                records = [json.loads(line) for line in f_in]
        self.assertEqual([r['step'] for r in records], list(range(25)))
        self.assertEqual(len(records[0]['q_current']), 9)

    def test_host_timing_both_backends(self):
        report = run_training(small_config(steps=20, eval_every=20))
        self.assertEqual(sorted(report.host_seconds_per_1000), ['fixed', 'float'])
        self.assertTrue(all(v > 0 for v in report.host_seconds_per_1000.values()))

    def test_peak_accuracy(self):
        report = run_training(small_config())
        self.assertEqual(report.peak_accuracy, max(e.accuracy for e in report.evals[1:]))
        self.assertEqual(run_training(small_config(steps=0)).peak_accuracy, report.evals[0].accuracy)

    @unittest.skipUnless(os.environ.get('QACCEL_SLOW_TESTS') == '1', 'set QACCEL_SLOW_TESTS=1 to run')
    def test_chain_learning(self):
        config = ExperimentConfig.from_json_file(os.path.join(CONFIG_DIR, 'chain_perceptron.json'))
        reached = [run_training(config.apply_overrides(seed=seed)).final_accuracy >= 0.9 for seed in range(5)]
        self.assertGreaterEqual(sum(reached), 4, msg=str(reached))

    @unittest.skipUnless(os.environ.get('QACCEL_SLOW_TESTS') == '1', 'set QACCEL_SLOW_TESTS=1 to run')
    def test_simple_grid_learning(self):
        config = ExperimentConfig.from_json_file(os.path.join(CONFIG_DIR, 'simple_mlp.json'))
        config = config.apply_overrides(backend='float', steps=200000)
        reached = [run_training(config.apply_overrides(seed=seed)).peak_accuracy >= 0.8 for seed in range(5)]
        self.assertGreaterEqual(sum(reached), 3, msg=str(reached))


class TestEvaluations(TestCase):
    def test_oracle(self):
        result = run_oracle(ExperimentConfig(env='chain'))
        self.assertEqual(check_oracle(result), [])
        self.assertEqual(list(result.table['greedy_action'])[:4], [1, 1, 1, 1])
        self.assertTrue(result.table['terminal'].iloc[-1])

    def test_sweep_without_training(self):
        result = run_precision_sweep(ExperimentConfig(), [32], [8, 16], [1024], n_pairs=50, train=False)
        self.assertEqual(list(result.table['qformat']), ['Q{32,8}', 'Q{32,16}'])
        self.assertEqual(check_sweep(result), [])
        self.assertNotIn('final_accuracy', result.table.columns)
        self.assertEqual(list(result.table['probe_topology']), ['6-1', '6-1'])
        self.assertEqual(list(result.table['max_abs_dq']), list(result.table['standard_max_abs_dq']))

    def test_sweep_probes_configured_topology(self):
        config = ExperimentConfig(env='chain', arch='mlp', hidden_sizes=[3])
        result = run_precision_sweep(config, [32], [16], [1024], n_pairs=20, train=False)
        self.assertEqual(list(result.table['probe_topology']), ['3-3-1'])
        self.assertEqual(check_sweep(result), [])

    def test_sweep_skips_impossible_formats(self):
        result = run_precision_sweep(ExperimentConfig(), [16], [8, 16], [256], n_pairs=10, train=False)
        self.assertEqual(list(result.table['frac_bits']), [8])
        with self.assertRaises(ValueError):
            run_precision_sweep(ExperimentConfig(), [], [8], [256], train=False)

    def test_host_timing(self):
        table = run_host_timing(ExperimentConfig(), trials=5, updates=3)
        self.assertEqual(len(table), 4)
        fpga = table[table['machine_class'] == 'simulated-fpga'].set_index('backend')
        self.assertAlmostEqual(fpga.loc['fixed', 'min_us'], 64 / 150.0)
        self.assertTrue((table['min_us'] > 0).all())
        with self.assertRaises(ValueError):
            run_host_timing(ExperimentConfig(), trials=2)


class TestMain(TestCase):
    def test_throughput_check_passes(self):
        with tempfile.TemporaryDirectory() as tmp:
            self.assertEqual(main(['throughput', '--check', '--format', 'csv', '--out', tmp]), EXIT_OK)
            self.assertTrue(os.path.exists(os.path.join(tmp, 'throughput.csv')))
            self.assertTrue(os.path.exists(os.path.join(tmp, 'calibration.json')))

    def test_config_error(self):
        with tempfile.TemporaryDirectory() as tmp:
            bad = os.path.join(tmp, 'bad.json')
            with open(bad, mode='w', encoding='utf-8') as f_out:
                json.dump({'schema_version': 1, 'frac_bits': 40}, f_out)
            self.assertEqual(main(['env', 'dump', '--config', bad]), EXIT_CONFIG)
            self.assertEqual(main(['oracle', '--config', os.path.join(tmp, 'absent.json')]), EXIT_CONFIG)

    def test_acceptance_miss(self):
        # a perceptron's greedy action ignores the state, so no initial net fits 90% of grid states
        with tempfile.TemporaryDirectory() as tmp:
            code = main(['train', '--env', 'simple', '--steps', '0', '--check', '--out', tmp])
            self.assertEqual(code, EXIT_ACCEPTANCE)
            with open(os.path.join(tmp, 'report.json'), mode='r', encoding='utf-8') as f_in:
                self.assertEqual(len(json.load(f_in)['evals']), 1)
            self.assertEqual(main(['train', '--env', 'simple', '--steps', '0', '--out', tmp]), EXIT_OK)

    def test_env_dump_and_oracle(self):
        with tempfile.TemporaryDirectory() as tmp:
            self.assertEqual(main(['env', 'dump', '--env', 'chain', '--out', tmp]), EXIT_OK)
            with open(os.path.join(tmp, 'env.json'), mode='r', encoding='utf-8') as f_in:
                self.assertEqual(json.load(f_in)['layout']['length'], 5)
            self.assertEqual(main(['oracle', '--env', 'chain', '--check']), EXIT_OK)

    def test_acceptance_error_message(self):
        e = AcceptanceError(['a', 'b'])
        self.assertEqual(str(e), 'acceptance check failed: a; b')
        self.assertEqual(e.failures, ['a', 'b'])
