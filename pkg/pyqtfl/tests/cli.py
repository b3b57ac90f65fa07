"""
Experiment Harness Config, Artifact and Pipeline UnitTests
"""
import csv
import json
import os
from tempfile import TemporaryDirectory
from typing import Any, Dict, List
from unittest import TestCase, skipUnless

import numpy as np

from ..cli import *
from ..data import DATA_ENV
from ..enum import ErrorCode, Mode
from ..exceptions import InvariantError, UsageError
from .fixtures import synthetic_dataset

#** Variables **#
__all__ = [
    'ConfigTests',
    'ArtifactTests',
    'ExperimentTests',
    'ScalingTests',
    'DeskBenchmarks',
]

#: fashion-mnist directory used by the optional desk-scale benchmarks
DESK_DATA = os.environ.get(DATA_ENV, '')

#** Functions **#

def read_csv(path: str):
    with open(path, newline='', encoding='utf-8') as f:
        return list(csv.reader(f))

def read_bytes(path: str) -> bytes:
    with open(path, 'rb') as f:
        return f.read()

#** Classes **#

class ConfigTests(TestCase):
    """
    Flag, File and Default Resolution UnitTests
    """

    def test_label(self):
        """
        ensure federated grid labels render as r{r}-e{e}-c{c}
        """
        config = parse_config([
            '--mode', 'federated-qt', '--rounds', '70',
            '--local-epochs', '10', '--clients', '10'])
        self.assertEqual(config.label, 'r70-e10-c10')
        self.assertIs(config.mode, Mode.FederatedQT)
        central = parse_config(['--mode', 'centralized-classical', '--epochs', '5'])
        self.assertEqual(central.label, 'centralized-classical-e5')

    def test_defaults(self):
        """
        ensure the reference circuit shape is the default
        """
        config = parse_config([])
        self.assertEqual(config.n_qubits, 13)
        self.assertEqual(config.qnn_blocks, 16)
        self.assertEqual(config.mapping_hidden, 15)

    def test_too_few_qubits(self):
        """
        ensure 2^12 < 6,690 is reported as a usage error
        """
        with self.assertRaises(UsageError) as ctx:
            parse_config(['--mode', 'centralized-qt', '--qubits', '12'])
        self.assertIn('13', str(ctx.exception))
        config = parse_config(['--mode', 'centralized-classical', '--qubits', '12'])
        self.assertEqual(config.n_qubits, 12)
        self.assertEqual(main(['--qubits', '12']), ErrorCode.UsageError)

    def test_file_precedence(self):
        """
        ensure flags override file values which override defaults
        """
        with TemporaryDirectory() as directory:
            path = os.path.join(directory, 'run.json')
            with open(path, 'w', encoding='utf-8') as f:
                json.dump({'rounds': 3, 'seed': 5, 'mode': 'federated-classical'}, f)
            config = parse_config(['--config', path, '--rounds', '4'])
            self.assertEqual((config.rounds, config.seed), (4, 5))
            self.assertIs(config.mode, Mode.FederatedClassical)
            self.assertEqual(config.clients, 5)
            fallback = parse_config([], file=path)
            self.assertEqual(fallback.rounds, 3)
            with open(path, 'w', encoding='utf-8') as f:
                json.dump({'qubitz': 3}, f)
            with self.assertRaises(UsageError):
                parse_config(['--config', path])

    def test_strict_values(self):
        """
        ensure file values are rejected rather than silently coerced
        """
        cases = {
            'fractional_subset': {'subset': 999.9},
            'fractional_seed':   {'seed': 1.5},
            'string_bool':       {'log_gradients': 'no'},
            'int_bool':          {'log_gradients': 1},
            'bool_int':          {'rounds': True},
            'string_int':        {'clients': '5'},
            'string_float':      {'lr': '0.01'},
        }
        with TemporaryDirectory() as directory:
            path = os.path.join(directory, 'run.json')
            for name, values in cases.items():
                with self.subTest(name):
                    with open(path, 'w', encoding='utf-8') as f:
                        json.dump(values, f)
                    with self.assertRaises(UsageError):
                        parse_config(['--config', path])
            with open(path, 'w', encoding='utf-8') as f:
                json.dump({'subset': 1000.0, 'lr': 1, 'log_gradients': True}, f)
            config = parse_config(['--config', path])
        self.assertEqual(config.subset, 1000)
        self.assertIsInstance(config.subset, int)
        self.assertEqual(config.lr, 1.0)
        self.assertIs(config.log_gradients, True)

    def test_unknown_flag(self):
        """
        ensure unknown flags exit with the usage status
        """
        with self.assertRaises(SystemExit) as ctx:
            parse_config(['--bogus'])
        self.assertEqual(ctx.exception.code, 2)

class ArtifactTests(TestCase):
    """
    Metrics and Confusion CSV Writer UnitTests
    """

    def test_metrics(self):
        """
        ensure header layout and one line per row
        """
        row = MetricsRow('r1-e1-c3', 1, 0.5, 1.25, 1489, 11912, (0.4, 0.5, 0.6))
        with TemporaryDirectory() as directory:
            path = os.path.join(directory, 'metrics.csv')
            write_metrics_csv([row], path)
            lines = read_csv(path)
        self.assertEqual(len(lines), 2)
        self.assertEqual(lines[0], [
            'run', 'round', 'global_acc', 'global_loss', 'params',
            'update_bytes', 'client_acc_0', 'client_acc_1', 'client_acc_2'])
        self.assertEqual(lines[1][:2], ['r1-e1-c3', '1'])
        with self.assertRaises(InvariantError):
            write_metrics_csv([], path)

    def test_confusion(self):
        """
        ensure class-name header and ten integer rows
        """
        matrix = np.arange(100).reshape(10, 10)
        with TemporaryDirectory() as directory:
            path = os.path.join(directory, 'confusion.csv')
            write_confusion_csv(matrix, path)
            lines = read_csv(path)
            with self.assertRaises(InvariantError):
                write_confusion_csv(np.zeros((9, 10)), path)
        self.assertEqual(len(lines), 11)
        self.assertEqual(lines[0][0], 'T-shirt/top')
        self.assertEqual(lines[0][6], 'Shirt')
        self.assertEqual(lines[3], [str(v) for v in range(20, 30)])

class ExperimentTests(TestCase):
    """
    End-to-End Pipeline Runs on Synthetic Data
    """

    def setUp(self):
        """
        setup synthetic train/test splits and a scratch output directory
        """
        self.train   = synthetic_dataset(60, seed=1)
        self.test    = synthetic_dataset(40, seed=2)
        self.scratch = TemporaryDirectory()
        self.addCleanup(self.scratch.cleanup)

    def run_config(self, name: str, *args: str) -> RunConfig:
        output = os.path.join(self.scratch.name, name)
        config = parse_config(['--output-dir', output, *args])
        status = run_experiment(config, self.train, self.test)
        self.assertEqual(status, ErrorCode.Success)
        return config

    def test_centralized_classical(self):
        """
        ensure one metrics row per epoch and the reference manifest counts
        """
        config = self.run_config('central',
            '--mode', 'centralized-classical', '--epochs', '2', '--batch', '16')
        rows = read_csv(os.path.join(config.output_dir, METRICS_FILE))
        self.assertEqual(len(rows), 3)
        self.assertEqual([r[4] for r in rows[1:]], ['6690', '6690'])
        with open(os.path.join(config.output_dir, MANIFEST_FILE)) as f:
            manifest = json.load(f)
        self.assertEqual(manifest['classical_params'], 6690)
        self.assertEqual(manifest['qt_params'], 1489)
        self.assertEqual(manifest['qubits_required'], 13)
        self.assertLess(abs(manifest['reduction_pct'] - 77.6), 0.5)
        self.assertEqual(manifest['config']['mode'], 'centralized-classical')
        confusion = read_csv(os.path.join(config.output_dir, CONFUSION_FILE))
        counts    = np.array(confusion[1:], dtype=np.int64)
        np.testing.assert_array_equal(counts.sum(axis=1), self.test.class_counts())

    def test_federated_accounting(self):
        """
        ensure federated rows carry client accuracies and compact update bytes
        """
        grid = ('--rounds', '2', '--local-epochs', '1', '--clients', '3', '--batch', '20')
        qt   = self.run_config('qt', '--mode', 'federated-qt', *grid)
        base = self.run_config('base', '--mode', 'federated-classical', *grid)
        qt_rows   = read_csv(os.path.join(qt.output_dir, METRICS_FILE))
        base_rows = read_csv(os.path.join(base.output_dir, METRICS_FILE))
        self.assertEqual(len(qt_rows), 3)
        self.assertEqual(qt_rows[0][-1], 'client_acc_2')
        for row in qt_rows[1:]:
            self.assertEqual(len(row), 9)
            self.assertEqual(row[0], 'r2-e1-c3')
        self.assertEqual(qt_rows[1][5], str(1489 * 8))
        ratio = int(qt_rows[1][5]) / int(base_rows[1][5])
        self.assertAlmostEqual(ratio, 1489 / 6690)

    def test_determinism(self):
        """
        ensure repeated and threaded runs write byte-identical csv files
        """
        args   = ('--mode', 'federated-classical', '--rounds', '2',
            '--clients', '3', '--batch', '10', '--seed', '7')
        first  = self.run_config('first', *args)
        second = self.run_config('second', *args, '--workers', '3')
        for name in (METRICS_FILE, CONFUSION_FILE):
            with self.subTest(name):
                self.assertEqual(
                    read_bytes(os.path.join(first.output_dir, name)),
                    read_bytes(os.path.join(second.output_dir, name)))

    def test_export(self):
        """
        ensure the exported classical theta reproduces the final evaluation
        """
        path   = os.path.join(self.scratch.name, 'theta.npy')
        config = self.run_config('export', '--mode', 'centralized-classical',
            '--epochs', '1', '--export-model', path)
        with open(os.path.join(config.output_dir, MANIFEST_FILE)) as f:
            manifest = json.load(f)
        result = evaluate_exported(path, self.test)
        self.assertEqual(result.accuracy, manifest['final_accuracy'])
        self.assertEqual(np.load(path).shape, (6690, ))

    def test_failure_cleanup(self):
        """
        ensure a component failure exits 1 and leaves no partial files
        """
        output = os.path.join(self.scratch.name, 'failed')
        config = parse_config(['--output-dir', output, '--clients', '3',
            '--data-dir', os.path.join(self.scratch.name, 'missing')])
        self.assertEqual(run_experiment(config), ErrorCode.Unspecified)
        self.assertFalse(os.path.exists(os.path.join(output, METRICS_FILE)))

class ScalingTests(TestCase):
    """
    Federated Trend and Client-Grid Runs of the Reference Quantum-Train Pair
    """

    def setUp(self):
        """
        setup synthetic train/test splits and a scratch output directory
        """
        self.train   = synthetic_dataset(600, seed=1)
        self.test    = synthetic_dataset(100, seed=2)
        self.scratch = TemporaryDirectory()
        self.addCleanup(self.scratch.cleanup)

    def run_rows(self, name: str, *args: str) -> List[List[str]]:
        output = os.path.join(self.scratch.name, name)
        config = parse_config(['--output-dir', output, *args])
        status = run_experiment(config, self.train, self.test)
        self.assertEqual(status, ErrorCode.Success)
        return read_csv(os.path.join(output, METRICS_FILE))

    def test_federated_trend(self):
        """
        ensure global loss is lower after ten rounds than after the first
        """
        rows = self.run_rows('trend', '--mode', 'federated-qt',
            '--rounds', '10', '--local-epochs', '2', '--clients', '5')
        self.assertEqual([int(r[1]) for r in rows[1:]], list(range(1, 11)))
        losses = [float(r[3]) for r in rows[1:]]
        self.assertTrue(all(np.isfinite(losses)))
        self.assertLess(losses[-1], losses[0])

    def test_client_grid(self):
        """
        ensure 5, 20 and 60 clients emit well-formed per-client columns
        """
        for clients in (5, 20, 60):
            with self.subTest('clients', clients=clients):
                rows = self.run_rows(f'c{clients}', '--mode', 'federated-qt',
                    '--rounds', '3', '--local-epochs', '1',
                    '--clients', str(clients))
                header = rows[0]
                self.assertEqual(len(header), 6 + clients)
                self.assertEqual(header[-1], f'client_acc_{clients - 1}')
                self.assertEqual(len(rows), 4)
                for row in rows[1:]:
                    self.assertEqual(len(row), len(header))
                    self.assertEqual(row[0], f'r3-e1-c{clients}')
                    accuracies = [float(v) for v in row[6:]]
                    self.assertTrue(all(0.0 <= a <= 1.0 for a in accuracies))

@skipUnless(os.path.isdir(DESK_DATA), f'set ${DATA_ENV} to run desk benchmarks')
class DeskBenchmarks(TestCase):
    """
    Desk-Scale Accuracy Checks on the Real FashionMNIST Files
    """

    def setUp(self):
        """
        setup a scratch output directory
        """
        self.scratch = TemporaryDirectory()
        self.addCleanup(self.scratch.cleanup)

    def run_manifest(self, name: str, *args: str) -> Dict[str, Any]:
        output = os.path.join(self.scratch.name, name)
        config = parse_config(['--output-dir', output, *args])
        self.assertEqual(run_experiment(config), ErrorCode.Success)
        with open(os.path.join(output, MANIFEST_FILE)) as f:
            manifest = json.load(f)
        manifest['confusion'] = np.array(
            read_csv(os.path.join(output, CONFUSION_FILE))[1:], dtype=np.int64)
        return manifest

    def test_centralized_classical(self):
        """
        ensure the classical baseline reaches 80% on a 10,000 sample subset
        """
        manifest = self.run_manifest('classical', '--mode', 'centralized-classical',
            '--epochs', '10', '--subset', '10000')
        self.assertGreaterEqual(manifest['final_accuracy'], 0.80)

    def test_centralized_qt(self):
        """
        ensure quantum-train stays within 15 points of the classical baseline
        """
        args      = ('--epochs', '10', '--subset', '10000')
        classical = self.run_manifest('classical', '--mode', 'centralized-classical', *args)
        qt        = self.run_manifest('qt', '--mode', 'centralized-qt', *args)
        self.assertGreaterEqual(
            qt['final_accuracy'], classical['final_accuracy'] - 0.15)
        counts = qt['confusion'].sum(axis=1)
        self.assertEqual(int(counts.sum()), 10000)
        np.testing.assert_array_equal(counts, [1000] * 10)
        self.assertEqual(set(qt['largest_confusion']), {'true', 'predicted', 'count'})

    def test_federated_matches_centralized(self):
        """
        ensure r10-e2-c5 lands within 5 points of seed-matched centralized training
        """
        args    = ('--subset', '5000', '--seed', '3')
        fed     = self.run_manifest('fed', '--mode', 'federated-qt',
            '--rounds', '10', '--local-epochs', '2', '--clients', '5', *args)
        central = self.run_manifest('central', '--mode', 'centralized-qt',
            '--epochs', '20', *args)
        self.assertLess(abs(fed['final_accuracy'] - central['final_accuracy']), 0.05)
