"""
Optimizer, Train Engine and End-to-End Gradient UnitTests
"""
from unittest import TestCase

import numpy as np

from ..cnn import build_dense_model, build_reference_model, forward, init_scale
from ..exceptions import ConfigError, InvariantError, OracleError
from ..qstate import AnsatzSpec
from ..qtmap import MappingModel, qt_param_count
from ..train import *
from .fixtures import pooled_model, synthetic_dataset

#** Variables **#
__all__ = [
    'OptimizerTests',
    'EngineTests',
    'ReferenceTrainingTests',
    'HybridGradientTests',
]

#** Functions **#

def toy_batch(rng: np.random.Generator, size: int = 6) -> Batch:
    """
    scalar-input two-class batch for the 10 parameter dense model
    """
    images = rng.normal(size=(size, 1))
    return Batch(images, (images[:, 0] > 0).astype(np.int64))

#** Classes **#

class OptimizerTests(TestCase):
    """
    Adam and Finite-Difference Oracle UnitTests
    """

    def test_adam_first_step(self):
        """
        ensure the first bias-corrected step moves each coordinate by ~lr
        """
        state  = AdamState(3, lr=0.01)
        params, state = adam_step(state, np.zeros(3), np.array([1.0, -2.0, 0.5]))
        np.testing.assert_allclose(params, [-0.01, 0.01, -0.01], rtol=1e-6)
        self.assertEqual(state.step, 1)

    def test_adam_zero_gradient(self):
        """
        ensure a zero gradient leaves parameters unchanged
        """
        params, _ = adam_step(AdamState(4), np.ones(4), np.zeros(4))
        np.testing.assert_array_equal(params, np.ones(4))
        with self.assertRaises(InvariantError):
            adam_step(AdamState(4), np.ones(3), np.zeros(3))

    def test_adam_quadratic(self):
        """
        ensure repeated steps descend a quadratic bowl
        """
        state  = AdamState(2, lr=0.1)
        params = np.array([3.0, -2.0])
        for _ in range(300):
            params, state = adam_step(state, params, 2.0 * params)
        self.assertLess(np.linalg.norm(params), 0.1)

    def test_finite_difference(self):
        """
        ensure the oracle is exact on quadratics and rejects non-finite values
        """
        x  = np.array([1.0, -2.0, 0.5])
        fd = finite_difference_grad(lambda v: float(v @ v), x)
        np.testing.assert_allclose(fd, 2.0 * x, atol=1e-8)
        partial = finite_difference_grad(lambda v: float(v @ v), x, indices=[1])
        np.testing.assert_allclose(partial, [0.0, -4.0, 0.0], atol=1e-8)
        with self.assertRaises(OracleError):
            finite_difference_grad(lambda v: float(np.log(v[0])), np.zeros(1))

    def test_batches(self):
        """
        ensure seeded shuffling covers the dataset once and reproduces
        """
        dataset = synthetic_dataset(23)
        batches = list(iterate_batches(dataset, 5, epoch_rng(1, 0, 0)))
        self.assertEqual([len(b.labels) for b in batches], [5, 5, 5, 5, 3])
        markers = np.concatenate([b.images[:, 0, 0] for b in batches])
        np.testing.assert_array_equal(
            np.sort(markers), np.sort(dataset.images[:, 0, 0]))
        again = list(iterate_batches(dataset, 5, epoch_rng(1, 0, 0)))
        for first, second in zip(batches, again):
            np.testing.assert_array_equal(first.labels, second.labels)
        with self.assertRaises(ConfigError):
            next(iterate_batches(dataset, 0, epoch_rng(1, 0, 0)))

class EngineTests(TestCase):
    """
    Classical and Quantum-Train Engine UnitTests
    """

    def setUp(self):
        """
        setup compact model and synthetic data
        """
        self.skeleton = pooled_model()
        self.train    = synthetic_dataset(60, seed=1)
        self.test     = synthetic_dataset(30, seed=2)

    def test_classical_step(self):
        """
        ensure a classical step returns the pre-update loss and moves theta
        """
        theta  = build_reference_model(seed=0).theta
        batch  = Batch(self.train.images[:8], self.train.labels[:8])
        opt    = AdamState(theta.size)
        loss, updated = classical_train_step(
            theta, build_reference_model(seed=None), batch, opt)
        self.assertGreater(loss, 0.0)
        self.assertEqual(updated.shape, theta.shape)
        self.assertFalse(np.array_equal(updated, theta))

    def test_centralized(self):
        """
        ensure centralized training is deterministic and reduces loss
        """
        engine = ClassicalEngine(self.skeleton)
        first, history = train_centralized(
            engine, self.train, self.test, epochs=5, batch_size=10, lr=0.05, seed=4)
        second, _      = train_centralized(
            engine, self.train, self.test, epochs=5, batch_size=10, lr=0.05, seed=4)
        np.testing.assert_array_equal(first, second)
        self.assertEqual([m.epoch for m in history], [1, 2, 3, 4, 5])
        self.assertLess(history[-1].train_loss, history[0].train_loss)
        self.assertGreater(history[-1].evaluation.accuracy, 0.5)

    def test_quantum_capacity(self):
        """
        ensure too few qubits for the classical model are rejected
        """
        with self.assertRaises(ConfigError):
            QuantumTrainEngine(AnsatzSpec(8, 1), self.skeleton)
        engine = QuantumTrainEngine(AnsatzSpec(9, 1), self.skeleton, 4)
        self.assertEqual(engine.n_params, qt_param_count(9, 1, 4))

    def test_quantum_counters(self):
        """
        ensure initialization and each gradient evaluation simulate the circuit once
        """
        engine = QuantumTrainEngine(AnsatzSpec(9, 1), self.skeleton, 4)
        vector = engine.initial_vector(np.random.default_rng(0))
        batch  = Batch(self.train.images[:8], self.train.labels[:8])
        loss, grads = engine.loss_and_gradient(vector, batch)
        self.assertEqual(grads.shape, (engine.n_params, ))
        self.assertEqual((engine.circuit_runs, engine.circuit_backwards), (2, 1))
        model = engine.materialize(vector)
        self.assertEqual(model.parameter_count, self.skeleton.parameter_count)
        self.assertTrue(np.all(np.abs(model.theta) < 1.0))
        self.assertEqual(engine.circuit_runs, 3)

    def test_initial_scale(self):
        """
        ensure generated weights start centered at the classical init scale
        """
        skeleton = build_reference_model(seed=None)
        engine   = QuantumTrainEngine(AnsatzSpec(13, 16), skeleton)
        self.assertAlmostEqual(engine.theta_scale, init_scale(skeleton))
        self.assertLess(engine.theta_scale, 0.2)
        vector   = engine.initial_vector(np.random.default_rng(3))
        theta    = engine.generate(vector)
        rms      = float(np.sqrt(np.mean(theta ** 2)))
        self.assertLess(abs(float(theta.mean())), 0.05)
        self.assertGreater(rms, 0.5 * engine.theta_scale)
        self.assertLessEqual(rms, np.arctanh(engine.theta_scale) + 1e-9)
        logits, _ = forward(skeleton.with_theta(theta), self.train.images[:16])
        self.assertLess(float(np.abs(logits).mean()), 50.0)

    def test_trainable_split(self):
        """
        ensure the concatenated vector splits into beta then gamma
        """
        spec   = AnsatzSpec(4, 2)
        gamma  = MappingModel.init(4, 3, np.random.default_rng(1))
        beta   = np.arange(spec.n_params, dtype=np.float64)
        split  = QtTrainable.from_vector(
            QtTrainable(beta, gamma).vector(), spec, 3)
        np.testing.assert_array_equal(split.beta, beta)
        np.testing.assert_array_equal(split.gamma.w1, gamma.w1)
        self.assertEqual(len(split), spec.n_params + gamma.n_params)
        with self.assertRaises(ConfigError):
            QtTrainable.from_vector(np.zeros(5), spec, 3)

class ReferenceTrainingTests(TestCase):
    """
    Learning Checks for the Reference Network on Synthetic Data
    """

    def setUp(self):
        """
        setup synthetic train/test splits
        """
        self.train = synthetic_dataset(1000, seed=1)
        self.test  = synthetic_dataset(200, seed=2)

    def test_classical(self):
        """
        ensure ten classical epochs on 1,000 samples clear 60% accuracy
        """
        engine = ClassicalEngine(build_reference_model(seed=None))
        _, history = train_centralized(
            engine, self.train, self.test, epochs=10, batch_size=64, seed=0)
        self.assertGreater(history[-1].evaluation.accuracy, 0.6)

    def test_quantum_train(self):
        """
        ensure the reference quantum-train pair learns well above chance
        """
        engine = QuantumTrainEngine(
            AnsatzSpec(13, 16), build_reference_model(seed=None))
        _, history = train_centralized(engine, self.train.take(range(640)),
            self.test, epochs=8, batch_size=32, lr=1e-2, seed=0)
        self.assertLess(history[-1].train_loss, history[0].train_loss)
        self.assertGreater(history[-1].evaluation.accuracy, 0.3)
        predicted = history[-1].evaluation.confusion.sum(axis=0)
        self.assertGreater(np.count_nonzero(predicted), 1)

class HybridGradientTests(TestCase):
    """
    End-to-End d(loss)/d(beta, gamma) through Circuit, Mapping and Network
    """

    def test_gradient(self):
        """
        ensure hybrid gradients match finite differences on random instances
        """
        skeleton = build_dense_model((1, 2, 2), seed=None)
        self.assertEqual(skeleton.parameter_count, 10)
        rng = np.random.default_rng(21)
        for n in range(50):
            spec   = AnsatzSpec(4, int(rng.integers(1, 3)))
            engine = QuantumTrainEngine(spec, skeleton, 3)
            vector = engine.initial_vector(rng)
            vector[spec.n_params:] += rng.normal(scale=0.3, size=engine.n_params - spec.n_params)
            batch  = toy_batch(rng)
            loss   = lambda v: engine.loss_and_gradient(v, batch)[0]
            with self.subTest('instance', n=n):
                _, grads = engine.loss_and_gradient(vector, batch)
                fd    = finite_difference_grad(loss, vector)
                error = np.linalg.norm(grads - fd) / max(np.linalg.norm(fd), 1e-12)
                self.assertLess(error, 1e-5)

    def test_train_step(self):
        """
        ensure repeated quantum-train steps reduce the loss on a fixed batch
        """
        skeleton  = build_dense_model((1, 2, 2), seed=None)
        spec      = AnsatzSpec(4, 2)
        rng       = np.random.default_rng(8)
        engine    = QuantumTrainEngine(spec, skeleton, 3)
        trainable = engine.split(engine.initial_vector(rng))
        batch     = toy_batch(rng, size=16)
        opt       = AdamState(len(trainable), lr=0.05)
        losses    = []
        for _ in range(50):
            loss, trainable = qt_train_step(trainable, spec, skeleton, batch, opt)
            losses.append(loss)
        self.assertLess(losses[-1], losses[0])
        self.assertEqual(opt.step, 50)
