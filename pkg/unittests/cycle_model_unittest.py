from unittest import TestCase

from data_structure.q_value_fifo import CURRENT_BUFFER, NEXT_BUFFER, WEIGHT_PORT, FifoTrace, QValueFifo, \
    drain_in_parallel
from eval.eval_throughput import ROW_ORDER, check_throughput, preset_topology, run_throughput_table
from model.cycle_model import (MLP, PERCEPTRON, PUBLISHED_COMPLETION_US, PUBLISHED_THROUGHPUT, CycleModel,
                               default_cycle_model, fpga_update_time_us, make_throughput_report,
                               perceptron_fixed_cycles, published_value, simulate_schedule, stage_cycles,
                               throughput, total_cycles)
from model.q_network import Topology


SIMPLE_PERCEPTRON = Topology.perceptron(6)
COMPLEX_PERCEPTRON = Topology.perceptron(20)
SIMPLE_MLP = Topology.mlp(6, (4,))
COMPLEX_MLP = Topology.mlp(20, (4,))


class TestPerceptronClosedForm(TestCase):
    def test_simple_and_complex(self):
        self.assertEqual(perceptron_fixed_cycles(9), 64)
        self.assertAlmostEqual(throughput(64), 2343.75)
        self.assertEqual(perceptron_fixed_cycles(40), 281)
        self.assertAlmostEqual(throughput(281), 533.808, places=3)
        self.assertEqual(perceptron_fixed_cycles(1), 8)

    def test_invalid(self):
        with self.assertRaises(ValueError):
            perceptron_fixed_cycles(0)
        with self.assertRaises(ValueError):
            throughput(0)

    def test_stage_model_agrees(self):
        model = default_cycle_model(PERCEPTRON, 'fixed')
        for A in (1, 9, 40, 100):
            self.assertEqual(stage_cycles(SIMPLE_PERCEPTRON, A, model), 7 * A + 1)

    def test_update_time(self):
        self.assertAlmostEqual(fpga_update_time_us(64), 0.4267, places=4)
        self.assertLessEqual(abs(fpga_update_time_us(64) - 0.4) / 0.4, 0.10)

    def test_strictly_decreasing_in_actions(self):
        for arch, topology in ((PERCEPTRON, SIMPLE_PERCEPTRON), (MLP, SIMPLE_MLP)):
            for backend in ('fixed', 'float'):
                model = default_cycle_model(arch, backend)
                rates = [throughput(total_cycles(A, topology, model)) for A in range(1, 60)]
                self.assertTrue(all(a > b for a, b in zip(rates, rates[1:])), (arch, backend))


class TestStageModel(TestCase):
    def test_mlp_fixed_rows(self):
        model = default_cycle_model(MLP, 'fixed')
        self.assertEqual(total_cycles(9, SIMPLE_MLP, model), 140)
        self.assertEqual(total_cycles(40, COMPLEX_MLP, model), 605)
        for A, topology, published in ((9, SIMPLE_MLP, 1060.0), (40, COMPLEX_MLP, 247.0)):
            rate = throughput(total_cycles(A, topology, model))
            self.assertLessEqual(abs(rate - published) / published, 0.10)

    def test_float_rows(self):
        perceptron = default_cycle_model(PERCEPTRON, 'float')
        mlp = default_cycle_model(MLP, 'float')
        self.assertEqual(total_cycles(9, SIMPLE_PERCEPTRON, perceptron), 518)
        self.assertEqual(total_cycles(9, SIMPLE_MLP, mlp), 202)
        for cycles, published in ((518, 290.0), (202, 745.0)):
            self.assertLessEqual(abs(throughput(cycles) - published) / published, 0.25)

    def test_degenerate_config(self):
        model = CycleModel(MLP, 'fixed', input_load=0.0, mac=0.0, mac_lanes=1, lut_lookup=0.0, drain=0.0,
                           error_capture=1.0, weight_update=0.0, update_lanes=1)
        self.assertEqual(total_cycles(9, SIMPLE_MLP, model), 1)

    def test_validate(self):
        base = default_cycle_model(MLP, 'fixed')
        for bad in (base._replace(mac=-1.0), base._replace(mac_lanes=0),
                    base._replace(float_op_multiplier=0.5), base._replace(clock_hz=0.0)):
            with self.assertRaises(ValueError):
                bad.validate()

    def test_clock_linearity(self):
        for cycles in (64, 140, 281, 605):
            self.assertAlmostEqual(throughput(cycles, 75e6), throughput(cycles) / 2)
        full = run_throughput_table(150e6)
        half = run_throughput_table(75e6)
        self.assertEqual(list(full['cycles']), list(half['cycles']))
        for a, b in zip(full['kq_per_second'], half['kq_per_second']):
            self.assertAlmostEqual(b, a / 2, places=3)

    def test_report(self):
        report = make_throughput_report(default_cycle_model(PERCEPTRON, 'fixed'), 9, SIMPLE_PERCEPTRON)
        self.assertEqual(report.cycles_per_q_update, 64)
        self.assertAlmostEqual(report.kq_per_second, 2343.75)
        self.assertEqual(report.fifo_peak_occupancy, 9)
        self.assertEqual(report.to_dict()['overflow_count'], 0)


class TestSchedule(TestCase):
    def test_conservation_and_order(self):
        for arch, A, topology in ((PERCEPTRON, 9, SIMPLE_PERCEPTRON), (PERCEPTRON, 40, COMPLEX_PERCEPTRON),
                                  (MLP, 40, COMPLEX_MLP)):
            trace = simulate_schedule(arch, A, topology)
            for buffer in (CURRENT_BUFFER, NEXT_BUFFER):
                self.assertEqual(trace.pushes(buffer), A)
                self.assertEqual(trace.pops(buffer), A)
                self.assertEqual(trace.push_order(buffer), list(range(A)))
                self.assertEqual(trace.pop_order(buffer), list(range(A)))
                self.assertEqual(trace.final_occupancy(buffer), 0)
            self.assertEqual(trace.peak_occupancy(), A)
            self.assertEqual(trace.updates(), len(topology.layer_sizes) - 1)

    def test_schedule_ends_with_the_cycle_count(self):
        model = default_cycle_model(MLP, 'fixed')
        trace = simulate_schedule(MLP, 9, SIMPLE_MLP, model)
        self.assertEqual(trace.last_cycle, total_cycles(9, SIMPLE_MLP, model))
        perceptron = simulate_schedule(PERCEPTRON, 9, SIMPLE_PERCEPTRON)
        self.assertEqual(perceptron.last_cycle, 64)

    def test_validate_catches_bad_traces(self):
        trace = FifoTrace(2)
        trace.record(0, CURRENT_BUFFER, 'pop', 0)
        with self.assertRaises(ValueError):
            trace.validate()
        trace = FifoTrace(2)
        trace.record(0, CURRENT_BUFFER, 'push', 0)
        trace.record(1, CURRENT_BUFFER, 'push', 1)
        trace.record(2, CURRENT_BUFFER, 'pop', 1)
        with self.assertRaises(ValueError):
            trace.validate()
        trace = FifoTrace(1)
        trace.record(0, CURRENT_BUFFER, 'push', 0)
        trace.record(1, CURRENT_BUFFER, 'push', 1)
        with self.assertRaises(ValueError):
            trace.validate()
        trace = FifoTrace(1)
        trace.record(3, WEIGHT_PORT, 'update', 0)
        trace.record(2, WEIGHT_PORT, 'update', 1)
        with self.assertRaises(ValueError):
            trace.validate()


class TestQValueFifo(TestCase):
    def test_overflow_and_underflow(self):
        fifo = QValueFifo(CURRENT_BUFFER, 2)
        fifo.push(0.1, 0)
        fifo.push(0.2, 1)
        with self.assertRaises(OverflowError):
            fifo.push(0.3, 2)
        self.assertEqual(fifo.pop(0), 0.1)
        self.assertEqual(fifo.pop(1), 0.2)
        with self.assertRaises(IndexError):
            fifo.pop(2)
        self.assertEqual(fifo.peak, 2)

    def test_parallel_drain(self):
        trace = FifoTrace(3)
        current = QValueFifo(CURRENT_BUFFER, 3, trace)
        nxt = QValueFifo(NEXT_BUFFER, 3, trace)
        for a, (q, q_next) in enumerate(((0.1, 0.3), (0.5, 0.9), (0.2, 0.4))):
            current.push(q, a)
            nxt.push(q_next, a)
        self.assertEqual(drain_in_parallel(current, nxt, 2), (0.2, 0.9))
        self.assertEqual((len(current), len(nxt)), (0, 0))
        trace.validate()


class TestPublishedTables(TestCase):
    def test_lookup(self):
        row = published_value(PUBLISHED_THROUGHPUT, PERCEPTRON, 'fixed', 'simple')
        self.assertEqual(row.value, 2340.0)
        self.assertFalse(published_value(PUBLISHED_THROUGHPUT, MLP, 'float', 'complex').derivable)
        self.assertIsNone(published_value(PUBLISHED_THROUGHPUT, MLP, 'cpu', 'simple'))
        self.assertEqual(published_value(PUBLISHED_COMPLETION_US, PERCEPTRON, 'fixed', 'simple').value, 0.4)

    def test_throughput_table(self):
        table = run_throughput_table()
        self.assertEqual(len(table), 8)
        self.assertEqual(list(table[table['arch'] == PERCEPTRON]['cycles']), [64, 518, 281, 2254])
        self.assertEqual(list(table[table['arch'] == MLP]['cycles'])[:3], [140, 202, 605])
        self.assertEqual(len(ROW_ORDER), 4)
        self.assertEqual(preset_topology(MLP, 'complex'), COMPLEX_MLP)
        self.assertEqual(check_throughput(150e6), [])
