from unittest import TestCase

import numpy as np
import torch

from data_structure.fixed_point import DEFAULT_QFORMAT, FixedPointEngine, FxValue
from model.activation import exact_sigmoid, exact_sigmoid_derivative
from model.q_network import (Backend, FixedQNetwork, FloatQNetwork, Topology, UpdateRule, apply_update,
                             feedforward, gradient_check, hidden_deltas, init_network, make_activations,
                             network_from_json, output_delta, probe_backend_agreement)


def float_net(weights, biases, hidden_sizes=()):
    topology = Topology(len(weights[0]), tuple(hidden_sizes))
    return FloatQNetwork(topology, [torch.tensor(w, dtype=torch.float64) for w in weights],
                         [torch.tensor(b, dtype=torch.float64) for b in biases])


def fixed_zero_net(topology):
    sizes = topology.layer_sizes
    return FixedQNetwork(topology, [[[0] * sizes[l + 1] for _ in range(sizes[l])] for l in range(len(sizes) - 1)],
                         [[0] * sizes[l + 1] for l in range(len(sizes) - 1)],
                         make_activations(Backend.FIXED))


class TestTopology(TestCase):
    def test_neuron_counts(self):
        self.assertEqual(Topology.mlp(6, (4,)).neuron_count, 11)
        self.assertEqual(Topology.mlp(20, (4,)).neuron_count, 25)
        self.assertEqual(Topology.perceptron(6).layer_sizes, (6, 1))
        self.assertTrue(Topology.perceptron(6).is_perceptron)
        self.assertEqual(Topology.mlp(6, (4,)).parameter_count, 7 * 4 + 5)

    def test_invalid(self):
        with self.assertRaises(ValueError):
            Topology(6, (), 2).validate()
        with self.assertRaises(ValueError):
            Topology(6, (0,)).validate()


class TestInit(TestCase):
    def test_deterministic(self):
        topology = Topology.mlp(6, (4,))
        for backend in (Backend.FLOAT, Backend.FIXED):
            a = init_network(topology, 7, 0.5, backend)
            b = init_network(topology, 7, 0.5, backend)
            self.assertEqual(a.to_json(), b.to_json())
        self.assertNotEqual(init_network(topology, 1, 0.5).to_json(), init_network(topology, 2, 0.5).to_json())

    def test_tiny_scale_gives_half(self):
        net = init_network(Topology.mlp(6, (4,)), 3, 1e-12)
        q = net.q_values(np.random.RandomState(0).uniform(size=(5, 6)))
        np.testing.assert_allclose(q, 0.5, atol=1e-9)

    def test_scale_must_be_positive(self):
        with self.assertRaises(ValueError):
            init_network(Topology.perceptron(2), 0, 0.0)

    def test_both_backends_start_from_the_same_reals(self):
        topology = Topology.mlp(6, (4,))
        w_float, _ = init_network(topology, 5, 0.5, Backend.FLOAT).weights_float()
        w_fixed, _ = init_network(topology, 5, 0.5, Backend.FIXED).weights_float()
        for a, b in zip(w_float, w_fixed):
            np.testing.assert_allclose(a, b, atol=DEFAULT_QFORMAT.ulp)


class TestFeedforward(TestCase):
    def test_zero_net(self):
        net = float_net([[[0.0], [0.0]]], [[0.0]])
        self.assertEqual(net.q_values([[0.3, 0.9]]), [0.5])
        fixed = fixed_zero_net(Topology.mlp(6, (4,)))
        trace = fixed.feedforward([0.1] * 6)
        self.assertEqual(trace.outputs[-1][0], FixedPointEngine().encode_raw(0.5))

    def test_perceptron_example(self):
        net = float_net([[[0.2], [0.4]]], [[0.0]])
        trace = feedforward(net, [0.5, 0.25])
        self.assertAlmostEqual(float(trace.pre_activations[0][0]), 0.2, places=15)
        self.assertAlmostEqual(float(trace.outputs[-1][0]), exact_sigmoid(0.2), places=12)

    def test_dimension_mismatch(self):
        net = float_net([[[0.2], [0.4]]], [[0.0]])
        with self.assertRaises(ValueError):
            net.feedforward([0.5, 0.25, 1.0])
        with self.assertRaises(ValueError):
            fixed_zero_net(Topology.perceptron(2)).feedforward([[0.5]])

    def test_batch_matches_rows_and_counts(self):
        rng = np.random.RandomState(1)
        x = rng.uniform(size=(9, 6))
        for backend in (Backend.FLOAT, Backend.FIXED):
            net = init_network(Topology.mlp(6, (4,)), 2, 1.0, backend)
            batch = net.q_values(x)
            single = [net.q_values(x[k:k + 1])[0] for k in range(9)]
            np.testing.assert_allclose(batch, single, rtol=0, atol=1e-12)
            self.assertEqual(net.feedforward_count, 18)

    def test_outputs_in_open_unit_interval(self):
        rng = np.random.RandomState(2)
        for backend in (Backend.FLOAT, Backend.FIXED):
            net = init_network(Topology.mlp(6, (4,)), 9, 3.0, backend)
            q = net.q_values(rng.uniform(-1, 1, size=(50, 6)))
            self.assertTrue(all(0.0 < v < 1.0 for v in q))


class TestBackprop(TestCase):
    def test_output_delta(self):
        zero = float_net([[[0.0], [0.0]]], [[0.0]])
        trace = zero.feedforward([0.3, 0.9])
        self.assertEqual(float(output_delta(zero, trace, 0.0)[0]), 0.0)
        self.assertAlmostEqual(float(output_delta(zero, trace, 0.4)[0]), 0.1, places=15)
        net = float_net([[[2.0]]], [[0.0]])
        trace = net.feedforward([1.0])
        self.assertAlmostEqual(float(net.output_delta(trace, 0.5)[0]), 0.5 * exact_sigmoid_derivative(2.0),
                               places=12)
        self.assertAlmostEqual(float(net.output_delta(trace, 0.5)[0]), 0.0524968, places=6)

    def test_fixed_output_delta(self):
        net = fixed_zero_net(Topology.perceptron(2))
        trace = net.feedforward([0.3, 0.9])
        delta = net.output_delta(trace, 0.4)
        self.assertLessEqual(abs(delta[0] / DEFAULT_QFORMAT.scale - 0.1), 2 * DEFAULT_QFORMAT.ulp)
        self.assertEqual(net.output_delta(trace, 0.0), [0])
        # a bare int is a real, not a raw word
        self.assertEqual(net.output_delta(trace, 1), net.output_delta(trace, 1.0))
        self.assertEqual(net.output_delta(trace, FxValue(DEFAULT_QFORMAT.scale, DEFAULT_QFORMAT)),
                         net.output_delta(trace, 1.0))

    def test_hidden_deltas(self):
        net = float_net([[[0.0]], [[1.0]]], [[0.0], [0.0]], hidden_sizes=(1,))
        trace = net.feedforward([0.7])
        deltas = hidden_deltas(net, trace, torch.tensor([0.2], dtype=torch.float64))
        self.assertAlmostEqual(float(deltas[0][0]), 0.05, places=15)
        zero = net.hidden_deltas(trace, torch.zeros(1, dtype=torch.float64))
        self.assertEqual(float(zero[0][0]), 0.0)

    def test_fixed_hidden_deltas(self):
        engine = FixedPointEngine()
        net = FixedQNetwork(Topology(1, (1,)), [[[0]], [[engine.encode_raw(1.0)]]], [[0], [0]],
                            make_activations(Backend.FIXED), engine)
        trace = net.feedforward([0.7])
        deltas = net.hidden_deltas(trace, [engine.encode_raw(0.2)])
        self.assertLessEqual(abs(deltas[0][0] / DEFAULT_QFORMAT.scale - 0.05), 2 * DEFAULT_QFORMAT.ulp)


class TestApplyUpdate(TestCase):
    def test_zero_deltas_leave_net_unchanged(self):
        for backend in (Backend.FLOAT, Backend.FIXED):
            net = init_network(Topology.mlp(6, (4,)), 4, 0.5, backend)
            before = net.to_json()
            trace = net.feedforward([0.2] * 6)
            zero_out = net.output_delta(trace, 0.0)
            net.apply_update(trace, net.hidden_deltas(trace, zero_out), 0.5)
            self.assertEqual(net.to_json(), before)

    def test_paper_literal_perceptron(self):
        net = float_net([[[0.0], [0.0]]], [[0.0]])
        trace = net.feedforward([0.3, 0.9])
        apply_update(net, trace, [torch.tensor([0.1], dtype=torch.float64)], 0.5, 'paper-literal')
        np.testing.assert_allclose(net.weights[0].numpy(), [[0.05], [0.05]], atol=1e-15)
        np.testing.assert_allclose(net.biases[0].numpy(), [0.05], atol=1e-15)

    def test_textbook_perceptron(self):
        net = float_net([[[0.0], [0.0]]], [[0.0]])
        trace = net.feedforward([1.0, 0.0])
        net.apply_update(trace, [torch.tensor([0.1], dtype=torch.float64)], 0.5, UpdateRule.TEXTBOOK)
        np.testing.assert_allclose(net.weights[0].numpy(), [[0.05], [0.0]], atol=1e-15)

    def test_rules_coincide_on_all_ones_input(self):
        for backend in (Backend.FLOAT, Backend.FIXED):
            base = init_network(Topology.perceptron(3), 6, 0.5, backend)
            results = []
            for rule in (UpdateRule.TEXTBOOK, UpdateRule.PAPER_LITERAL):
                net = base.clone()
                trace = net.feedforward([1.0, 1.0, 1.0])
                net.apply_update(trace, [net.output_delta(trace, 0.3)], 0.5, rule)
                results.append(net.to_json())
            self.assertEqual(results[0], results[1])

    def test_fixed_matches_float_update(self):
        fixed = init_network(Topology.mlp(6, (4,)), 8, 0.5, Backend.FIXED)
        w, b = fixed.weights_float()
        flt = FloatQNetwork(fixed.topology, [torch.from_numpy(m) for m in w], [torch.from_numpy(v) for v in b])
        x = [0.5, 0.25, 0.75, 0.0, 1.0, 0.125]
        for net in (fixed, flt):
            trace = net.feedforward(x)
            net.apply_update(trace, net.hidden_deltas(trace, net.output_delta(trace, 0.2)), 0.5)
        for a, c in zip(fixed.weights_float()[0], flt.weights_float()[0]):
            np.testing.assert_allclose(a, c, atol=2e-3)

    def test_determinism_after_updates(self):
        rng = np.random.RandomState(12)
        xs = rng.uniform(size=(30, 6))
        errs = rng.uniform(-0.3, 0.3, size=30)
        for backend in (Backend.FLOAT, Backend.FIXED):
            snapshots = []
            for _ in range(2):
                net = init_network(Topology.mlp(6, (4,)), 13, 0.5, backend)
                for x, e in zip(xs, errs):
                    trace = net.feedforward(x)
                    net.apply_update(trace, net.hidden_deltas(trace, net.output_delta(trace, float(e))), 0.3)
                snapshots.append(net.to_json())
            self.assertEqual(snapshots[0], snapshots[1])


class TestGradientCheck(TestCase):
    def test_zero_weight_net(self):
        net = float_net([[[0.0] * 4 for _ in range(6)], [[0.0] for _ in range(4)]], [[0.0] * 4, [0.0]],
                        hidden_sizes=(4,))
        self.assertLessEqual(gradient_check(net, [0.1, 0.2, 0.3, 0.4, 0.5, 0.6], 0.9), 1e-4)

    def test_seeded_instances(self):
        rng = np.random.RandomState(21)
        for k in range(25):
            x = rng.uniform(0.05, 1.0, size=6)
            target = float(rng.uniform(0.0, 1.0))
            perceptron = init_network(Topology.perceptron(6), 100 + k, 1.0)
            self.assertLessEqual(gradient_check(perceptron, x, target), 1e-6)
            mlp = init_network(Topology.mlp(6, (4,)), 200 + k, 1.0)
            self.assertLessEqual(gradient_check(mlp, x, target), 1e-4)

    def test_rejects_lut_and_fixed(self):
        with self.assertRaises(ValueError):
            gradient_check(init_network(Topology.perceptron(2), 0, 0.5, Backend.FIXED), [0.1, 0.2], 0.5)
        lut_net = init_network(Topology.perceptron(2), 0, 0.5, Backend.FLOAT,
                               make_activations(Backend.FLOAT, float_uses_lut=True))
        with self.assertRaises(ValueError):
            gradient_check(lut_net, [0.1, 0.2], 0.5)


class TestSnapshots(TestCase):
    def test_round_trip(self):
        for backend in (Backend.FLOAT, Backend.FIXED):
            net = init_network(Topology.mlp(6, (4,)), 17, 0.7, backend)
            text = net.to_json()
            again = network_from_json(text)
            self.assertEqual(again.to_json(), text)
            x = [0.3] * 6
            self.assertEqual(again.q_values([x]), net.q_values([x]))


class TestBackendAgreement(TestCase):
    def test_standard_probe_set(self):
        probe = probe_backend_agreement(1000, seed=0)
        self.assertLessEqual(probe['max_abs_dq'], 2.0 ** -8)
        self.assertEqual(probe['overflow_count'], 0)
        self.assertGreater(probe['max_abs_dq'], 0.0)

    def test_coarse_format_degrades(self):
        from data_structure.fixed_point import QFormat
        fine = probe_backend_agreement(200, seed=1)
        coarse = probe_backend_agreement(200, seed=1, fmt=QFormat(16, 4))
        self.assertGreater(coarse['mean_abs_dq'], fine['mean_abs_dq'])
