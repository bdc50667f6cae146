from unittest import TestCase

import numpy as np
import torch

from data_structure.fixed_point import FixedPointEngine
from data_structure.q_value_fifo import CURRENT_BUFFER, NEXT_BUFFER, FifoTrace
from environment.tabular_env import CHAIN_LEFT, CHAIN_RIGHT, TabularModel, make_chain, make_environment
from model.q_learning import (EpsilonSchedule, Hyperparams, QTable, Transition, epsilon_greedy,
                              greedy_action, greedy_policy_accuracy, network_q_matrix, neural_q_step,
                              opt_q, optimal_action_mask, q_error, q_error_fixed, tabular_update,
                              train_tabular, value_iteration)
from model.q_network import Backend, FixedQNetwork, FloatQNetwork, Topology, init_network, make_activations


class TestPolicies(TestCase):
    def test_greedy_breaks_ties_low(self):
        self.assertEqual(greedy_action([0.2, 0.5, 0.5]), 1)
        self.assertEqual(greedy_action([0.3]), 0)
        with self.assertRaises(ValueError):
            greedy_action([])

    def test_greedy_ignores_constant_shift(self):
        rng = np.random.RandomState(2)
        for _ in range(50):
            q = rng.uniform(0.0, 1.0, size=9)
            for c in (-0.5, 0.25, 3.0):
                self.assertEqual(greedy_action(q + c), greedy_action(q))

    def test_epsilon_zero_is_greedy(self):
        rng = np.random.RandomState(0)
        for _ in range(100):
            self.assertEqual(epsilon_greedy([0.1, 0.9, 0.3], 0.0, rng), 1)

    def test_epsilon_one_is_uniform(self):
        rng = np.random.RandomState(1)
        counts = np.bincount([epsilon_greedy([0.0] * 9, 1.0, rng) for _ in range(9000)], minlength=9)
        self.assertTrue(np.all(np.abs(counts - 1000) < 150), counts)

    def test_epsilon_range(self):
        with self.assertRaises(ValueError):
            epsilon_greedy([0.1], 1.5, np.random.RandomState(0))

    def test_schedule(self):
        schedule = EpsilonSchedule(1.0, 0.1, 100)
        self.assertEqual(schedule.value(0), 1.0)
        self.assertAlmostEqual(schedule.value(50), 0.55)
        self.assertEqual(schedule.value(100), 0.1)
        self.assertEqual(schedule.value(10 ** 6), 0.1)
        self.assertEqual(EpsilonSchedule(1.0, 0.2, 0).value(0), 0.2)


class TestQError(TestCase):
    def test_examples(self):
        self.assertAlmostEqual(q_error(0.1, 0.0, 0.0, 0.5, 0.9), 0.05)
        self.assertAlmostEqual(q_error(0.0, 0.5, 0.2, 0.5, 0.9), 0.125)
        self.assertEqual(q_error(0.3, 0.7, 0.3 + 0.9 * 0.7, 0.5, 0.9), 0.0)
        self.assertEqual(opt_q([0.1, 0.7, 0.2]), 0.7)

    def test_worked_example(self):
        self.assertAlmostEqual(q_error(0.5, 0.8, 0.4, 0.1, 0.9), 0.082, places=12)

    def test_sign_follows_target(self):
        self.assertGreater(q_error(0.5, 0.8, 0.4, 0.1, 0.9), 0.0)
        self.assertLess(q_error(0.0, 0.1, 0.9, 0.1, 0.9), 0.0)
        self.assertEqual(q_error(0.2, 0.5, 0.3, 0.0, 0.9), 0.0)

    def test_terminal_ignores_bootstrap(self):
        self.assertAlmostEqual(q_error(0.1, 0.8, 0.0, 0.5, 0.9, terminal=True), 0.05)

    def test_fixed_matches_float(self):
        engine = FixedPointEngine()
        rng = np.random.RandomState(4)
        for _ in range(200):
            r, opt, q = (float(v) for v in rng.uniform(0.0, 1.0, size=3))
            terminal = bool(rng.randint(2))
            fixed = q_error_fixed(engine, engine.encode(r), engine.encode(opt), engine.encode(q),
                                  engine.encode(0.5), engine.encode(0.9), terminal)
            self.assertLessEqual(abs(fixed.value - q_error(r, opt, q, 0.5, 0.9, terminal)), 4 * 2.0 ** -16)


class TestTabular(TestCase):
    def test_hyperparams_validate(self):
        Hyperparams().validate()
        for bad in (Hyperparams(alpha=1.5), Hyperparams(gamma=1.0), Hyperparams(c_rate=0.0),
                    Hyperparams(epsilon=-0.1)):
            with self.assertRaises(ValueError):
                bad.validate()

    def test_update_moves_toward_target(self):
        table = QTable(3, 2)
        hyper = Hyperparams(alpha=0.5, gamma=0.9)
        tabular_update(table, Transition(0, 1, 0.1, 2, terminal=True), hyper)
        self.assertAlmostEqual(table.values[0, 1], 0.05)
        tabular_update(table, Transition(0, 1, 0.1, 2, terminal=True), hyper)
        self.assertAlmostEqual(table.values[0, 1], 0.075)
        with self.assertRaises(IndexError):
            tabular_update(table, Transition(3, 0, 0.0, 0), hyper)

    def test_absorbing_state(self):
        # one state looping onto itself with reward r: Q* = r / (1 - gamma)
        model = TabularModel(np.array([[0]]), np.array([[0.1]]), np.array([[False]]), np.array([False]))
        self.assertAlmostEqual(value_iteration(model, 0.9)[0, 0], 1.0, places=8)
        q_star = value_iteration(make_chain(2, 0.9), 0.9)
        self.assertAlmostEqual(q_star[0, CHAIN_RIGHT], 0.1, places=12)
        self.assertAlmostEqual(q_star[0, CHAIN_LEFT], 0.09, places=12)
        np.testing.assert_array_equal(q_star[1], [0.0, 0.0])

    def test_absorbing_state_without_reward(self):
        model = TabularModel(np.zeros((1, 3), dtype=np.int64), np.zeros((1, 3)), np.zeros((1, 3), dtype=bool),
                             np.array([False]))
        np.testing.assert_array_equal(value_iteration(model, 0.9), np.zeros((1, 3)))

    def test_chain_value_iteration(self):
        env = make_chain(5, 0.9)
        q_star = value_iteration(env, 0.9)
        expected_right = [0.1 * 0.9 ** 3, 0.1 * 0.9 ** 2, 0.1 * 0.9, 0.1]
        np.testing.assert_allclose(q_star[:4, CHAIN_RIGHT], expected_right, atol=1e-10)
        self.assertAlmostEqual(q_star[0, CHAIN_LEFT], 0.9 * 0.1 * 0.9 ** 3, places=10)
        self.assertAlmostEqual(q_star[2, CHAIN_LEFT], 0.1 * 0.9 ** 3, places=10)
        mask = optimal_action_mask(q_star)
        self.assertTrue(all(mask[s, CHAIN_RIGHT] and not mask[s, CHAIN_LEFT] for s in range(4)))
        self.assertEqual(greedy_policy_accuracy(q_star, q_star, env.non_terminal_states), 1.0)
        self.assertEqual(greedy_policy_accuracy(np.zeros_like(q_star), q_star, env.non_terminal_states), 0.0)

    def test_value_iteration_tol(self):
        with self.assertRaises(ValueError):
            value_iteration(make_chain(3), 0.9, tol=0.0)

    def test_tabular_converges(self):
        hyper = Hyperparams(alpha=0.5, gamma=0.9)
        for env in (make_chain(5, 0.9), make_environment('simple')):
            q_star = value_iteration(env, 0.9)
            table, history = train_tabular(env, hyper, q_star, tol=1e-3, max_sweeps=1000)
            self.assertLessEqual(history[-1], 1e-3)
            self.assertEqual(greedy_policy_accuracy(table.values, q_star, env.non_terminal_states), 1.0)


    def test_full_step_sweeps_contract(self):
        # with alpha = 1 every update is a gamma-contraction, so the sup distance never grows
        hyper = Hyperparams(alpha=1.0, gamma=0.9)
        for env in (make_chain(5, 0.9), make_environment('simple')):
            q_star = value_iteration(env, 0.9)
            _, history = train_tabular(env, hyper, q_star, tol=1e-6, max_sweeps=200)
            self.assertGreater(len(history), 1)
            for before, after in zip(history, history[1:]):
                self.assertLessEqual(after, before + 1e-12)


class TestNeuralStep(TestCase):
    def setUp(self):
        self.env = make_environment('simple')
        self.hyper = Hyperparams(alpha=0.5, gamma=0.9, c_rate=0.5, epsilon=0.1)

    def _step(self, backend):
        net = init_network(Topology.mlp(self.env.spec.input_dim, (4,)), 0, 0.5, backend)
        trace = FifoTrace(self.env.actions_per_state)
        rng = np.random.RandomState(3)
        state = self.env.reset(rng)
        next_state, record = neural_q_step(net, self.env, state, self.hyper, rng, fifo_trace=trace)
        return net, trace, state, next_state, record

    def test_two_feedforwards_per_action(self):
        A = self.env.actions_per_state
        for backend in (Backend.FLOAT, Backend.FIXED):
            net, trace, _, _, _ = self._step(backend)
            self.assertEqual(net.feedforward_count, 2 * A)
            trace.validate()
            for buffer in (CURRENT_BUFFER, NEXT_BUFFER):
                self.assertEqual(trace.pushes(buffer), A)
                self.assertEqual(trace.pops(buffer), A)
                self.assertEqual(trace.pop_order(buffer), list(range(A)))
            self.assertEqual(trace.peak_occupancy(), A)

    def test_record(self):
        net, _, state, next_state, record = self._step(Backend.FLOAT)
        self.assertEqual(record.state, state.index)
        self.assertEqual(record.next_state, next_state.index)
        self.assertEqual(len(record.q_current), self.env.actions_per_state)
        self.assertEqual(len(record.q_next), self.env.actions_per_state)
        opt = 0.0 if record.terminal else max(record.q_next)
        expected = q_error(record.reward, opt, record.q_current[record.action], 0.5, 0.9, record.terminal)
        self.assertAlmostEqual(record.q_error, expected, places=12)
        self.assertIn('"q_error"', record.to_json_line())

    def test_q_matrix_leaves_count_alone(self):
        net = init_network(Topology.perceptron(self.env.spec.input_dim), 0, 0.5)
        q = network_q_matrix(net, self.env)
        self.assertEqual(q.shape, (self.env.state_count, self.env.actions_per_state))
        self.assertEqual(net.feedforward_count, 0)

    def test_deterministic(self):
        for backend in (Backend.FLOAT, Backend.FIXED):
            runs = []
            for _ in range(2):
                net = init_network(Topology.perceptron(self.env.spec.input_dim), 5, 0.5, backend)
                rng = np.random.RandomState(8)
                state = self.env.reset(rng)
                lines = []
                for k in range(20):
                    state, record = neural_q_step(net, self.env, state, self.hyper, rng, step_index=k)
                    lines.append(record.to_json_line())
                    if record.terminal:
                        state = self.env.reset(rng)
                runs.append((lines, net.to_json()))
            self.assertEqual(runs[0], runs[1])

    def test_zero_alpha_leaves_weights(self):
        hyper = Hyperparams(alpha=0.0, gamma=0.9, c_rate=0.5, epsilon=0.3)
        for backend in (Backend.FLOAT, Backend.FIXED):
            net = init_network(Topology.mlp(self.env.spec.input_dim, (4,)), 2, 0.5, backend)
            before = net.to_json()
            rng = np.random.RandomState(6)
            state = self.env.reset(rng)
            for k in range(10):
                state, record = neural_q_step(net, self.env, state, hyper, rng, step_index=k)
                self.assertEqual(record.q_error, 0.0)
                if record.terminal:
                    state = self.env.reset(rng)
            self.assertEqual(net.to_json(), before, msg=backend)

    def test_zero_weights_pick_first_action(self):
        topology = Topology.perceptron(self.env.spec.input_dim)
        nets = [FloatQNetwork(topology, [torch.zeros(topology.input_dim, 1, dtype=torch.float64)],
                              [torch.zeros(1, dtype=torch.float64)]),
                FixedQNetwork(topology, [[[0] for _ in range(topology.input_dim)]], [[0]],
                              make_activations(Backend.FIXED))]
        hyper = Hyperparams(epsilon=0.0)
        for net in nets:
            rng = np.random.RandomState(0)
            _, record = neural_q_step(net, self.env, self.env.reset(rng), hyper, rng)
            self.assertEqual(len(set(record.q_current)), 1)
            self.assertEqual(record.action, 0)
