"""
Quantum-Train Engine (beta and gamma optimized, theta generated each step)
"""
from logging import Logger, getLogger
from threading import Lock
from typing import ClassVar, Optional, Tuple

import numpy as np
from pyderive import dataclass, field

from . import AdamState, Batch, Engine, adam_step
from ..cnn import ClassicalModel, backward, forward, init_scale, loss_and_grad
from ..exceptions import ConfigError
from ..qstate import AnsatzSpec, ansatz_backward, probabilities, run_ansatz
from ..qtmap import (
    DEFAULT_HIDDEN, MappingModel, calibrate_output, generate_theta,
    mapping_backward, qt_param_count, qubits_required)

#** Variables **#
__all__ = [
    'BETA_SCALE',
    'MAX_THETA_SCALE',

    'QtTrainable',
    'QuantumTrainEngine',
    'qt_train_step',
]

#: standard deviation of the near-identity beta initialization
BETA_SCALE = 0.1

#: ceiling on the initial root-mean-square of generated weights
MAX_THETA_SCALE = 0.5

#** Classes **#

@dataclass(slots=True)
class QtTrainable:
    """
    Compact Quantum-Train Trainable Set (circuit angles + mapping model)
    """
    beta:  np.ndarray
    gamma: MappingModel

    def __len__(self) -> int:
        return self.beta.size + self.gamma.n_params

    def vector(self) -> np.ndarray:
        """
        concatenated (beta, gamma) vector as optimized and communicated
        """
        return np.concatenate([self.beta, self.gamma.flatten()])

    @classmethod
    def from_vector(cls,
        vector: np.ndarray, spec: AnsatzSpec, hidden_dim: int) -> 'QtTrainable':
        """
        split a concatenated (beta, gamma) vector

        :param vector:     flat trainable vector
        :param spec:       circuit layout
        :param hidden_dim: mapping model hidden width
        :return:           structured trainable set
        """
        vector = np.asarray(vector, dtype=np.float64)
        size   = qt_param_count(spec.n_qubits, spec.n_blocks, hidden_dim)
        if vector.shape != (size, ):
            raise ConfigError(
                f'trainable length mismatch: expected {size}, got {vector.size}')
        beta  = vector[:spec.n_params]
        gamma = MappingModel.unflatten(
            vector[spec.n_params:], spec.n_qubits, hidden_dim)
        return cls(beta, gamma)

@dataclass(slots=True)
class QuantumTrainEngine(Engine):
    """
    Generates Classical Weights from a Simulated Circuit and Mapping Model
    """
    mode: ClassVar[str] = 'qt'

    spec:          AnsatzSpec
    skeleton:      ClassicalModel
    hidden_dim:    int    = DEFAULT_HIDDEN
    beta_scale:    float  = BETA_SCALE
    theta_scale:   Optional[float] = None
    log_gradients: bool   = False
    logger:        Logger = field(default_factory=lambda: getLogger('pyqtfl'))

    circuit_runs:      int  = field(init=False, default=0)
    circuit_backwards: int  = field(init=False, default=0)
    mutex:             Lock = field(init=False, default_factory=Lock)

    def __post_init__(self):
        self.logger = self.logger.getChild(self.mode)
        if self.theta_scale is None:
            self.theta_scale = min(init_scale(self.skeleton), MAX_THETA_SCALE)
        target = self.skeleton.parameter_count
        if target > self.spec.dim:
            raise ConfigError(
                f'{self.spec.n_qubits} qubits address {self.spec.dim} weights '
                f'but the model has {target}; N = ceil(log2 M) requires '
                f'{qubits_required(target)} qubits')

    @property
    def n_params(self) -> int:
        return qt_param_count(
            self.spec.n_qubits, self.spec.n_blocks, self.hidden_dim)

    def split(self, vector: np.ndarray) -> QtTrainable:
        return QtTrainable.from_vector(vector, self.spec, self.hidden_dim)

    def initial_vector(self, rng: np.random.Generator) -> np.ndarray:
        beta  = rng.normal(0.0, self.beta_scale, size=self.spec.n_params)
        gamma = MappingModel.init(self.spec.n_qubits, self.hidden_dim, rng)
        probs = probabilities(self._simulate(beta))
        gamma = calibrate_output(
            gamma, probs, self.skeleton.parameter_count, self.theta_scale)
        return QtTrainable(beta, gamma).vector()

    def _simulate(self, beta: np.ndarray):
        with self.mutex:
            self.circuit_runs += 1
        return run_ansatz(self.spec, beta)

    def generate(self, vector: np.ndarray) -> np.ndarray:
        """
        generate the classical theta vector for a trainable vector
        """
        trainable = self.split(vector)
        probs     = probabilities(self._simulate(trainable.beta))
        theta, _  = generate_theta(
            probs, trainable.gamma, self.skeleton.parameter_count)
        return theta

    def materialize(self, vector: np.ndarray) -> ClassicalModel:
        return self.skeleton.with_theta(self.generate(vector))

    def loss_and_gradient(self,
        vector: np.ndarray, batch: Batch) -> Tuple[float, np.ndarray]:
        trainable = self.split(vector)
        state     = self._simulate(trainable.beta)
        probs     = probabilities(state)
        theta, mapping = generate_theta(
            probs, trainable.gamma, self.skeleton.parameter_count)
        logits, cache  = forward(self.skeleton.with_theta(theta), batch.images)
        loss, d_logits = loss_and_grad(logits, batch.labels)
        d_theta        = backward(cache, d_logits)
        d_gamma, d_p   = mapping_backward(mapping, d_theta)
        d_beta         = ansatz_backward(
            self.spec, trainable.beta, d_p, state=state)
        with self.mutex:
            self.circuit_backwards += 1
        if self.log_gradients:
            self.logger.debug(
                f'step | loss={loss:.6f} '
                f'grad_beta={np.linalg.norm(d_beta):.3e} '
                f'grad_gamma={np.linalg.norm(d_gamma.flatten()):.3e}')
        return loss, np.concatenate([d_beta, d_gamma.flatten()])

#** Functions **#

def qt_train_step(
    trainable: QtTrainable,
    spec:      AnsatzSpec,
    skeleton:  ClassicalModel,
    batch:     Batch,
    opt:       Optional[AdamState] = None,
) -> Tuple[float, QtTrainable]:
    """
    full hybrid chain and one adam step on the concatenated (beta, gamma)

    :param trainable: current beta and gamma
    :param spec:      circuit layout
    :param skeleton:  classical network architecture
    :param batch:     training minibatch
    :param opt:       optimizer state (mutated, fresh when omitted)
    :return:          (loss before the update, updated trainable)
    """
    engine = QuantumTrainEngine(spec, skeleton, trainable.gamma.hidden_dim)
    vector = trainable.vector()
    opt    = opt or AdamState(vector.size)
    loss, grads = engine.loss_and_gradient(vector, batch)
    vector, _   = adam_step(opt, vector, grads)
    return loss, engine.split(vector)
