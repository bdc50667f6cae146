from unittest import TestCase

import numpy as np

from environment.tabular_env import (CHAIN_LEFT, CHAIN_RIGHT, GENERATOR_VERSION, GRID_MOVES,
                                     binary_fraction_encoding, digit_encoding, digit_radix, encode_input,
                                     grid_shape, make_chain, make_environment, step)
from utils.errors import EnvironmentSpecError


class TestChain(TestCase):
    def setUp(self):
        self.env = make_chain(5, 0.9)

    def test_dynamics(self):
        s, r, done = step(self.env, 0, CHAIN_LEFT)
        self.assertEqual((s.index, r, done), (0, 0.0, False))
        s, r, done = step(self.env, 1, CHAIN_RIGHT)
        self.assertEqual((s.index, r, done), (2, 0.0, False))
        s, r, done = step(self.env, 3, CHAIN_RIGHT)
        self.assertEqual(s.index, 4)
        self.assertAlmostEqual(r, 0.1)
        self.assertTrue(done)

    def test_encoding(self):
        np.testing.assert_allclose(encode_input(self.env, 2, CHAIN_RIGHT), [0.6, 0.0, 1.0])
        np.testing.assert_allclose(self.env.input_matrix(0), [[0.2, 1.0, 0.0], [0.2, 0.0, 1.0]])
        self.assertEqual(self.env.spec.input_dim, 3)
        for s in range(5):
            self.assertTrue(np.all(self.env.input_matrix(s).max(axis=1) > 0.0))

    def test_too_short(self):
        with self.assertRaises(EnvironmentSpecError):
            make_chain(1)


class TestGrid(TestCase):
    def test_simple_preset(self):
        env = make_environment('simple')
        self.assertEqual((env.actions_per_state, env.state_count), (9, 36))
        self.assertEqual((env.spec.state_dim, env.spec.action_dim, env.spec.input_dim), (4, 2, 6))
        self.assertEqual((env.layout['rows'], env.layout['cols']), (6, 6))

    def test_complex_preset(self):
        env = make_environment('complex')
        self.assertEqual((env.actions_per_state, env.state_count), (40, 1800))
        self.assertEqual(env.spec.input_dim, 20)
        self.assertEqual(grid_shape(1800), (40, 45))

    def test_goal_and_rewards(self):
        env = make_environment('simple')
        m = env.model
        goal = env.layout['goal']
        self.assertTrue(m.terminal_states[goal])
        self.assertEqual(int(m.terminal_states.sum()), 1)
        self.assertTrue(np.all(m.next_state[goal] == goal))
        entering = (m.next_state == goal) & ~m.terminal_states[:, None]
        np.testing.assert_allclose(m.reward[entering], 0.1)
        self.assertTrue(np.all(m.reward[~entering] == 0.0))

    def test_encodings_distinct_and_bounded(self):
        for name in ('simple', 'complex'):
            env = make_environment(name)
            rows = np.concatenate([env.input_matrix(s) for s in range(env.state_count)])
            self.assertEqual(rows.shape, (env.state_count * env.actions_per_state, env.spec.input_dim))
            self.assertTrue(np.all((rows >= 0.0) & (rows <= 1.0)))
            self.assertEqual(len(np.unique(rows, axis=0)), len(rows))

    def test_out_of_range(self):
        env = make_environment('simple')
        with self.assertRaises(IndexError):
            env.step(36, 0)
        with self.assertRaises(IndexError):
            env.step(0, 9)
        with self.assertRaises(IndexError):
            env.encode_input(-1, 0)

    def test_reset_avoids_terminal(self):
        env = make_environment('simple')
        rng = np.random.RandomState(0)
        for _ in range(200):
            self.assertFalse(env.model.terminal_states[env.reset(rng).index])

    def test_deterministic(self):
        self.assertEqual(make_environment('complex', seed=3).to_json(), make_environment('complex', seed=3).to_json())
        self.assertNotEqual(make_environment('complex', seed=0).to_json(),
                            make_environment('complex', seed=1).to_json())
        d = make_environment('simple').to_dict()
        self.assertEqual(d['generator_version'], GENERATOR_VERSION)
        self.assertEqual(d['spec']['state_space_size'], 36)

    def test_unknown_preset(self):
        with self.assertRaises(EnvironmentSpecError):
            make_environment('maze')


class TestBinaryFractionEncoding(TestCase):
    def test_levels(self):
        np.testing.assert_allclose(binary_fraction_encoding(4, 1)[:, 0], [0.0, 1 / 3, 2 / 3, 1.0])
        codes = binary_fraction_encoding(9, 2)
        np.testing.assert_allclose(codes[5], [1 / 3, 1 / 3])

    def test_too_many_items(self):
        with self.assertRaises(EnvironmentSpecError):
            binary_fraction_encoding(2 ** 20, 2)


class TestDigitEncoding(TestCase):
    def test_levels(self):
        self.assertEqual(digit_radix(9, 2), 3)
        self.assertEqual(digit_radix(40, 6), 2)
        codes = digit_encoding(9, 2)
        np.testing.assert_allclose(codes[5], [1.0, 0.5])
        np.testing.assert_allclose(codes[0], [0.0, 0.0])
        np.testing.assert_allclose(codes[8], [1.0, 1.0])

    def test_too_many_items(self):
        with self.assertRaises(EnvironmentSpecError):
            digit_encoding(2 ** 20, 2)


class TestGridMoves(TestCase):
    def setUp(self):
        self.env = make_environment('simple')
        self.cols = self.env.layout['cols']

    def test_action_code_is_move_offset(self):
        for a, (dr, dc) in enumerate(GRID_MOVES):
            np.testing.assert_allclose(self.env.action_features[a], [(dr + 1) / 2, (dc + 1) / 2])

    def test_walls_slide(self):
        m = self.env.model
        goal = self.env.layout['goal']
        nw, w, n = GRID_MOVES.index((-1, -1)), GRID_MOVES.index((0, -1)), GRID_MOVES.index((-1, 0))
        for s in range(1, self.cols):
            if goal == s:
                continue
            # top row: north-west slides west
            self.assertEqual(m.next_state[s, nw], m.next_state[s, w])
            self.assertEqual(m.next_state[s, nw], s - 1)
        for s in range(self.cols, self.env.state_count, self.cols):
            if goal == s:
                continue
            # left column: north-west slides north
            self.assertEqual(m.next_state[s, nw], m.next_state[s, n])
            self.assertEqual(m.next_state[s, nw], s - self.cols)
