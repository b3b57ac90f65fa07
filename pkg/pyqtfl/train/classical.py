"""
Classical Baseline Engine (theta optimized directly)
"""
from logging import Logger, getLogger
from typing import ClassVar, Tuple

import numpy as np
from pyderive import dataclass, field

from . import AdamState, Batch, Engine, adam_step
from ..cnn import ClassicalModel, backward, forward, init_theta, loss_and_grad

#** Variables **#
__all__ = ['ClassicalEngine', 'classical_train_step']

#** Functions **#

def classical_gradient(theta: np.ndarray,
    skeleton: ClassicalModel, batch: Batch) -> Tuple[float, np.ndarray]:
    """
    mean batch loss and dL/dtheta for the classical network
    """
    logits, cache  = forward(skeleton.with_theta(theta), batch.images)
    loss, d_logits = loss_and_grad(logits, batch.labels)
    return loss, backward(cache, d_logits)

def classical_train_step(
    theta:    np.ndarray,
    skeleton: ClassicalModel,
    batch:    Batch,
    opt:      AdamState,
) -> Tuple[float, np.ndarray]:
    """
    forward, loss, backward and one adam step on theta

    :param theta:    classical parameter vector
    :param skeleton: network architecture
    :param batch:    training minibatch
    :param opt:      optimizer state (mutated)
    :return:         (loss before the update, updated theta)
    """
    loss, grads = classical_gradient(theta, skeleton, batch)
    theta, _    = adam_step(opt, theta, grads)
    return loss, theta

#** Classes **#

@dataclass(slots=True)
class ClassicalEngine(Engine):
    """
    Trains and Communicates the Full Classical Parameter Vector
    """
    mode: ClassVar[str] = 'classical'

    skeleton:      ClassicalModel
    log_gradients: bool   = False
    logger:        Logger = field(default_factory=lambda: getLogger('pyqtfl'))

    def __post_init__(self):
        self.logger = self.logger.getChild(self.mode)

    @property
    def n_params(self) -> int:
        return self.skeleton.parameter_count

    def initial_vector(self, rng: np.random.Generator) -> np.ndarray:
        return init_theta(self.skeleton.layers, self.skeleton.layout, rng)

    def materialize(self, vector: np.ndarray) -> ClassicalModel:
        return self.skeleton.with_theta(vector)

    def loss_and_gradient(self,
        vector: np.ndarray, batch: Batch) -> Tuple[float, np.ndarray]:
        loss, grads = classical_gradient(vector, self.skeleton, batch)
        if self.log_gradients:
            self.logger.debug(
                f'step | loss={loss:.6f} grad_theta={np.linalg.norm(grads):.3e}')
        return loss, grads
