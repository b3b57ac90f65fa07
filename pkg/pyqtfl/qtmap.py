"""
Quantum-Train Parameter Generation

Measurement probabilities of the ansatz are turned into the weights of a
classical network by one shared tanh MLP evaluated once per basis index.
"""
import math
from typing import NamedTuple, Optional

import numpy as np
from pyderive import dataclass

from .exceptions import ConfigError, InvariantError

#** Variables **#
__all__ = [
    'DEFAULT_HIDDEN',

    'MappingModel',
    'BasisFeature',
    'MappingCache',

    'qubits_required',
    'basis_features',
    'basis_feature_matrix',
    'generate_theta',
    'calibrate_output',
    'mapping_backward',
    'qt_param_count',
]

#: default hidden width of the mapping model
DEFAULT_HIDDEN = 15

#** Classes **#

class BasisFeature(NamedTuple):
    """
    Mapping Model Input for a Single Basis State
    """
    bits:         np.ndarray
    """+-1 bit pattern of the basis index, most significant bit first"""
    scaled_prob:  float
    """probability scaled by 2^N"""

    def vector(self) -> np.ndarray:
        return np.append(self.bits, self.scaled_prob)

@dataclass(slots=True)
class MappingModel:
    """
    One Hidden-Layer tanh MLP mapping (bits, probability) -> weight
    """
    w1: np.ndarray
    c1: np.ndarray
    w2: np.ndarray
    c2: float

    def __post_init__(self):
        self.w1 = np.asarray(self.w1, dtype=np.float64)
        self.c1 = np.asarray(self.c1, dtype=np.float64)
        self.w2 = np.asarray(self.w2, dtype=np.float64).reshape(1, -1)
        self.c2 = float(self.c2)
        hidden, _ = self.w1.shape
        if self.c1.shape != (hidden, ) or self.w2.shape != (1, hidden):
            raise InvariantError(
                f'mapping shapes disagree: w1={self.w1.shape} '
                f'c1={self.c1.shape} w2={self.w2.shape}')

    @property
    def input_dim(self) -> int:
        return self.w1.shape[1]

    @property
    def hidden_dim(self) -> int:
        return self.w1.shape[0]

    @property
    def n_qubits(self) -> int:
        return self.input_dim - 1

    @property
    def n_params(self) -> int:
        return self.size(self.n_qubits, self.hidden_dim)

    @staticmethod
    def size(n_qubits: int, hidden_dim: int) -> int:
        """
        parameter count for a mapping model of the given shape
        """
        return hidden_dim * (n_qubits + 2) + hidden_dim + 1

    @classmethod
    def zeros(cls, n_qubits: int, hidden_dim: int = DEFAULT_HIDDEN):
        return cls(
            w1=np.zeros((hidden_dim, n_qubits + 1)),
            c1=np.zeros(hidden_dim),
            w2=np.zeros((1, hidden_dim)),
            c2=0.0,
        )

    @classmethod
    def init(cls,
        n_qubits:   int,
        hidden_dim: int = DEFAULT_HIDDEN,
        rng:        Optional[np.random.Generator] = None,
    ) -> 'MappingModel':
        """
        fan-scaled uniform initialization (biases start at zero)

        :param n_qubits:   qubit count of the paired ansatz
        :param hidden_dim: hidden width
        :param rng:        random generator
        :return:           new mapping model
        """
        rng    = rng or np.random.default_rng()
        fan_in = n_qubits + 1
        bound1 = math.sqrt(6.0 / (fan_in + hidden_dim))
        bound2 = math.sqrt(6.0 / (hidden_dim + 1))
        return cls(
            w1=rng.uniform(-bound1, bound1, size=(hidden_dim, fan_in)),
            c1=np.zeros(hidden_dim),
            w2=rng.uniform(-bound2, bound2, size=(1, hidden_dim)),
            c2=0.0,
        )

    def flatten(self) -> np.ndarray:
        """
        flat vector in (w1 row-major, c1, w2, c2) order
        """
        return np.concatenate([
            self.w1.ravel(), self.c1, self.w2.ravel(), [self.c2]])

    @classmethod
    def unflatten(cls,
        vector: np.ndarray, n_qubits: int, hidden_dim: int) -> 'MappingModel':
        """
        rebuild a mapping model from its flat vector

        :param vector:     flat parameters in `flatten` order
        :param n_qubits:   qubit count of the paired ansatz
        :param hidden_dim: hidden width
        :return:           new mapping model
        """
        vector = np.asarray(vector, dtype=np.float64)
        size   = cls.size(n_qubits, hidden_dim)
        if vector.shape != (size, ):
            raise ConfigError(
                f'gamma length mismatch: expected {size}, got {vector.size}')
        fan_in = n_qubits + 1
        n_w1   = hidden_dim * fan_in
        return cls(
            w1=vector[:n_w1].reshape(hidden_dim, fan_in),
            c1=vector[n_w1:n_w1 + hidden_dim],
            w2=vector[n_w1 + hidden_dim:n_w1 + 2 * hidden_dim],
            c2=vector[-1],
        )

class MappingCache(NamedTuple):
    """
    Forward Activations retained for `mapping_backward`
    """
    gamma:    MappingModel
    features: np.ndarray
    hidden:   np.ndarray
    theta:    np.ndarray
    n_probs:  int

#** Functions **#

def qubits_required(n_params: int) -> int:
    """
    qubit count N = ceil(log2 M) needed to address M classical weights
    """
    if n_params < 1:
        raise ConfigError(f'parameter count must be positive: {n_params}')
    return max(1, (n_params - 1).bit_length())

def basis_features(i: int, n_qubits: int, p_i: float) -> BasisFeature:
    """
    encode basis index `i` and its probability for the mapping model

    :param i:        basis index
    :param n_qubits: qubit count
    :param p_i:      measured probability of basis state `i`
    :return:         basis feature record
    """
    if not 0 <= i < (1 << n_qubits):
        raise InvariantError(
            f'basis index {i} outside 0..{(1 << n_qubits) - 1}')
    shifts = np.arange(n_qubits - 1, -1, -1)
    bits   = np.where((i >> shifts) & 1, 1.0, -1.0)
    return BasisFeature(bits, float(p_i) * (1 << n_qubits))

def basis_feature_matrix(probs: np.ndarray, n_qubits: int, count: int):
    """
    stacked `basis_features` vectors for basis indices 0..count-1

    :param probs:    probability vector of length 2^n_qubits
    :param n_qubits: qubit count
    :param count:    number of leading basis indices to encode
    :return:         (count, n_qubits + 1) feature matrix
    """
    index    = np.arange(count)[:, None]
    shifts   = np.arange(n_qubits - 1, -1, -1)[None, :]
    features = np.empty((count, n_qubits + 1), dtype=np.float64)
    features[:, :-1] = np.where((index >> shifts) & 1, 1.0, -1.0)
    features[:, -1]  = probs[:count] * float(1 << n_qubits)
    return features

def generate_theta(probs: np.ndarray, gamma: MappingModel, M: int):
    """
    generate M classical weights from the measurement probabilities

    :param probs: probability vector of length 2^N
    :param gamma: mapping model
    :param M:     number of classical weights
    :return:      (theta vector of length M, forward cache)
    """
    probs    = np.asarray(probs, dtype=np.float64)
    n_qubits = gamma.n_qubits
    if probs.shape != (1 << n_qubits, ):
        raise InvariantError(
            f'probability length {probs.size} != 2^{n_qubits}')
    if M > probs.size:
        raise ConfigError(
            f'M={M} exceeds 2^{n_qubits}={probs.size} probabilities; '
            f'requires N = ceil(log2 M) = {qubits_required(M)} qubits')
    features = basis_feature_matrix(probs, n_qubits, M)
    hidden   = np.tanh(features @ gamma.w1.T + gamma.c1)
    theta    = np.tanh(hidden @ gamma.w2[0] + gamma.c2)
    return theta, MappingCache(gamma, features, hidden, theta, probs.size)

def calibrate_output(gamma: MappingModel,
    probs: np.ndarray, M: int, scale: float) -> MappingModel:
    """
    rescale the output layer so generated weights start at a target scale

    :param gamma: freshly initialized mapping model
    :param probs: probability vector of the initial circuit
    :param M:     number of classical weights
    :param scale: target root-mean-square of the generated theta
    :return:      mapping model with a centered and rescaled output layer
    """
    if not 0.0 < scale < 1.0:
        raise ConfigError(f'theta scale must lie in (0, 1): {scale}')
    probs    = np.asarray(probs, dtype=np.float64)
    features = basis_feature_matrix(probs, gamma.n_qubits, M)
    hidden   = np.tanh(features @ gamma.w1.T + gamma.c1)
    output   = hidden @ gamma.w2[0]
    mean     = float(output.mean())
    rms      = float(np.sqrt(np.mean((output - mean) ** 2)))
    if rms == 0.0:
        raise InvariantError('mapping output is constant across weights')
    gain = math.atanh(scale) / rms
    return MappingModel(
        w1=gamma.w1,
        c1=gamma.c1,
        w2=gamma.w2 * gain,
        c2=-gain * mean,
    )

def mapping_backward(cache: MappingCache, grad_theta: np.ndarray):
    """
    reverse-mode gradients of sum(grad_theta * theta)

    :param cache:      forward cache from `generate_theta`
    :param grad_theta: dL/dtheta
    :return:           (dL/dgamma as MappingModel, dL/dprobs)
    """
    grad_theta = np.asarray(grad_theta, dtype=np.float64)
    if grad_theta.shape != cache.theta.shape:
        raise InvariantError(
            f'grad_theta shape {grad_theta.shape} != {cache.theta.shape}')
    gamma = cache.gamma
    d_out = grad_theta * (1.0 - cache.theta ** 2)
    d_w2  = d_out @ cache.hidden
    d_c2  = d_out.sum()
    d_hid = np.outer(d_out, gamma.w2[0]) * (1.0 - cache.hidden ** 2)
    d_w1  = d_hid.T @ cache.features
    d_c1  = d_hid.sum(axis=0)
    d_x   = d_hid @ gamma.w1[:, -1]
    grad_probs = np.zeros(cache.n_probs, dtype=np.float64)
    grad_probs[:d_x.size] = d_x * float(cache.n_probs)
    grad_gamma = MappingModel(w1=d_w1, c1=d_c1, w2=d_w2, c2=d_c2)
    return grad_gamma, grad_probs

def qt_param_count(n_qubits: int, n_blocks: int, hidden_dim: int) -> int:
    """
    trainable parameters of the quantum-train pair (circuit beta + gamma)

    :param n_qubits:   ansatz qubits
    :param n_blocks:   ansatz blocks
    :param hidden_dim: mapping model hidden width
    :return:           total trainable parameter count
    """
    return n_blocks * n_qubits * 6 + MappingModel.size(n_qubits, hidden_dim)
