"""
Optimization Engines for Classical and Quantum-Train Parameter Vectors
"""
from abc import abstractmethod
from logging import Logger
from typing import (
    Callable, ClassVar, Iterator, List, NamedTuple, Optional, Protocol,
    Sequence, Tuple)

import numpy as np
from pyderive import dataclass, field

from ..cnn import ClassicalModel, Evaluation, evaluate
from ..data import Dataset
from ..exceptions import ConfigError, InvariantError, OracleError

#** Variables **#
__all__ = [
    'DEFAULT_BATCH',
    'DEFAULT_LR',

    'Batch',
    'AdamState',
    'Engine',
    'EpochMetrics',

    'adam_step',
    'finite_difference_grad',
    'epoch_rng',
    'iterate_batches',
    'run_epoch',
    'train_centralized',

    'ClassicalEngine',
    'classical_train_step',

    'MAX_THETA_SCALE',
    'QtTrainable',
    'QuantumTrainEngine',
    'qt_train_step',
]

#: default minibatch size
DEFAULT_BATCH = 64

#: default adam learning rate
DEFAULT_LR = 1e-3

#** Classes **#

class Batch(NamedTuple):
    """
    Minibatch of Images and Labels
    """
    images: np.ndarray
    labels: np.ndarray

@dataclass(slots=True)
class AdamState:
    """
    Bias-Corrected Adam Moments for a Flat Parameter Vector
    """
    size: int
    lr:   float = DEFAULT_LR
    b1:   float = 0.9
    b2:   float = 0.999
    eps:  float = 1e-8
    step: int   = 0
    m:    np.ndarray = field(init=False)
    v:    np.ndarray = field(init=False)

    def __post_init__(self):
        self.m = np.zeros(self.size, dtype=np.float64)
        self.v = np.zeros(self.size, dtype=np.float64)

class EpochMetrics(NamedTuple):
    """
    Centralized Training Progress after One Epoch
    """
    epoch:      int
    train_loss: float
    evaluation: Evaluation

class Engine(Protocol):
    """
    BaseClass Interface for a Trainable Parameterization of the Classical Model
    """
    mode:     ClassVar[str]
    skeleton: ClassicalModel
    logger:   Logger

    @property
    @abstractmethod
    def n_params(self) -> int:
        """
        length of the optimized (and communicated) vector
        """
        raise NotImplementedError

    @abstractmethod
    def initial_vector(self, rng: np.random.Generator) -> np.ndarray:
        """
        Draw a Freshly Initialized Trainable Vector

        :param rng: random generator
        :return:    new trainable vector
        """
        raise NotImplementedError

    @abstractmethod
    def materialize(self, vector: np.ndarray) -> ClassicalModel:
        """
        Produce the Classical Model described by a Trainable Vector

        :param vector: trainable vector
        :return:       classical model used for inference
        """
        raise NotImplementedError

    @abstractmethod
    def loss_and_gradient(self,
        vector: np.ndarray, batch: Batch) -> Tuple[float, np.ndarray]:
        """
        Compute Mean Batch Loss and its Gradient w.r.t. the Trainable Vector

        :param vector: trainable vector
        :param batch:  training minibatch
        :return:       (loss, gradient)
        """
        raise NotImplementedError

    def step(self, vector: np.ndarray,
        opt: AdamState, batch: Batch) -> Tuple[float, np.ndarray]:
        """
        Single Optimizer Step on One Minibatch

        :param vector: trainable vector
        :param opt:    optimizer state (mutated)
        :param batch:  training minibatch
        :return:       (loss before the update, updated vector)
        """
        loss, grads = self.loss_and_gradient(vector, batch)
        vector, _   = adam_step(opt, vector, grads)
        return loss, vector

#** Functions **#

def adam_step(state: AdamState,
    params: np.ndarray, grads: np.ndarray) -> Tuple[np.ndarray, AdamState]:
    """
    standard bias-corrected adam update

    :param state:  optimizer state (mutated)
    :param params: current parameters
    :param grads:  gradient of the loss w.r.t. params
    :return:       (updated parameters, optimizer state)
    """
    params = np.asarray(params, dtype=np.float64)
    grads  = np.asarray(grads, dtype=np.float64)
    if params.shape != (state.size, ) or grads.shape != (state.size, ):
        raise InvariantError(
            f'adam length mismatch: state={state.size} '
            f'params={params.size} grads={grads.size}')
    state.step += 1
    state.m = state.b1 * state.m + (1.0 - state.b1) * grads
    state.v = state.b2 * state.v + (1.0 - state.b2) * grads * grads
    m_hat   = state.m / (1.0 - state.b1 ** state.step)
    v_hat   = state.v / (1.0 - state.b2 ** state.step)
    return params - state.lr * m_hat / (np.sqrt(v_hat) + state.eps), state

def finite_difference_grad(
    f:       Callable[[np.ndarray], float],
    x:       np.ndarray,
    h:       float = 1e-5,
    indices: Optional[Sequence[int]] = None,
) -> np.ndarray:
    """
    central finite-difference gradient estimate (universal test oracle)

    :param f:       deterministic scalar function of a vector
    :param x:       evaluation point
    :param h:       step size
    :param indices: coordinate subset to probe (others are left at zero)
    :return:        gradient estimate with the shape of x
    """
    point = np.array(x, dtype=np.float64)
    grad  = np.zeros_like(point)
    flat  = point.reshape(-1)
    probe = range(flat.size) if indices is None else indices
    for i in probe:
        original = flat[i]
        flat[i]  = original + h
        upper    = float(f(point.copy()))
        flat[i]  = original - h
        lower    = float(f(point.copy()))
        flat[i]  = original
        if not (np.isfinite(upper) and np.isfinite(lower)):
            raise OracleError(f'non-finite function value at coordinate {i}')
        grad.reshape(-1)[i] = (upper - lower) / (2.0 * h)
    return grad

def epoch_rng(seed: int, client: int, epoch: int) -> np.random.Generator:
    """
    independent shuffling stream keyed on (seed, client, global epoch)
    """
    return np.random.default_rng([seed, client, epoch])

def iterate_batches(dataset: Dataset,
    batch_size: int, rng: np.random.Generator) -> Iterator[Batch]:
    """
    seeded shuffled minibatches covering the dataset once

    :param dataset:    training data
    :param batch_size: minibatch size (last batch may be smaller)
    :param rng:        shuffling generator
    :return:           minibatch iterator
    """
    if batch_size < 1:
        raise ConfigError(f'batch size must be positive: {batch_size}')
    order = rng.permutation(len(dataset))
    for start in range(0, len(order), batch_size):
        index = order[start:start + batch_size]
        yield Batch(dataset.images[index], dataset.labels[index])

def run_epoch(
    engine:     Engine,
    vector:     np.ndarray,
    opt:        AdamState,
    dataset:    Dataset,
    batch_size: int,
    rng:        np.random.Generator,
) -> Tuple[np.ndarray, float]:
    """
    one shuffled pass over the dataset

    :param engine:     trainable parameterization
    :param vector:     starting vector
    :param opt:        optimizer state (mutated)
    :param dataset:    training data
    :param batch_size: minibatch size
    :param rng:        shuffling generator
    :return:           (updated vector, sample-weighted mean loss)
    """
    total = 0.0
    for batch in iterate_batches(dataset, batch_size, rng):
        loss, vector = engine.step(vector, opt, batch)
        total       += loss * len(batch.labels)
    return vector, total / max(len(dataset), 1)

def train_centralized(
    engine:     Engine,
    train:      Dataset,
    test:       Dataset,
    epochs:     int,
    batch_size: int = DEFAULT_BATCH,
    lr:         float = DEFAULT_LR,
    seed:       int = 0,
) -> Tuple[np.ndarray, List[EpochMetrics]]:
    """
    centralized training with a test evaluation after every epoch

    shuffling uses the client-0 stream so a single-client federation with
    the same seed follows the identical trajectory.

    :param engine:     trainable parameterization
    :param train:      training data
    :param test:       held-out test data
    :param epochs:     number of passes
    :param batch_size: minibatch size
    :param lr:         adam learning rate
    :param seed:       experiment seed
    :return:           (final vector, per-epoch metrics)
    """
    vector  = engine.initial_vector(np.random.default_rng(seed))
    opt     = AdamState(engine.n_params, lr=lr)
    history = []
    for epoch in range(epochs):
        rng          = epoch_rng(seed, 0, epoch)
        vector, loss = run_epoch(engine, vector, opt, train, batch_size, rng)
        result       = evaluate(engine.materialize(vector), test)
        history.append(EpochMetrics(epoch + 1, loss, result))
        engine.logger.info(
            f'{engine.mode} | epoch={epoch + 1} train_loss={loss:.4f} '
            f'test_acc={result.accuracy:.4f} test_loss={result.loss:.4f}')
    return vector, history

#** Imports **#
from .classical import *
from .quantum import *
