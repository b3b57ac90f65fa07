"""
Classical Network Model, Canonical Theta Layout, and Training Primitives
"""
import math
from typing import (
    TYPE_CHECKING, Any, List, NamedTuple, Optional, Sequence, Tuple,
    overload)

import numpy as np
from pyderive import dataclass, field

from ..abc import Layer, Shape
from ..enum import TensorRole
from ..exceptions import ConfigError, DataError, InvariantError
from .layers import Conv2d, Dense, Flatten, MaxPool2, ReLU

if TYPE_CHECKING:
    from ..data import Dataset

#** Variables **#
__all__ = [
    'REFERENCE_PARAMS',
    'IMAGE_SHAPE',

    'ThetaEntry',
    'ThetaLayout',
    'ClassicalModel',
    'ForwardCache',
    'Evaluation',

    'reference_layers',
    'build_reference_model',
    'build_dense_model',
    'init_theta',
    'init_scale',
    'flatten',
    'unflatten',
    'forward',
    'loss_and_grad',
    'backward',
    'evaluate',
]

#: exact parameter count of the reference network
REFERENCE_PARAMS = 6690

#: per-sample input shape of the reference network
IMAGE_SHAPE = (28, 28)

Tensors = List[List[np.ndarray]]

#** Classes **#

class ThetaEntry(NamedTuple):
    """
    Location of One Parameter Tensor within the Flat Theta Vector
    """
    layer:  int
    role:   TensorRole
    shape:  Shape
    offset: int

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    @property
    def end(self) -> int:
        return self.offset + self.size

class ThetaLayout(NamedTuple):
    """
    Ordered Contiguous Layout (layer order, weights before biases, row-major)
    """
    entries: Tuple[ThetaEntry, ...]
    total:   int

    @classmethod
    def build(cls, layers: Sequence[Layer]) -> 'ThetaLayout':
        offset  = 0
        entries = []
        for index, layer in enumerate(layers):
            for role, shape in layer.param_specs():
                entry = ThetaEntry(index, role, shape, offset)
                entries.append(entry)
                offset = entry.end
        return cls(tuple(entries), offset)

    def find(self, layer: int, role: TensorRole) -> ThetaEntry:
        for entry in self.entries:
            if entry.layer == layer and entry.role == role:
                return entry
        raise KeyError((layer, role))

@dataclass(slots=True)
class ClassicalModel:
    """
    Sequential Classical Network whose Parameters live in one Flat Vector
    """
    layers:       List[Layer]
    input_shape:  Shape
    """accepted per-sample input shape"""
    tensor_shape: Shape
    """per-sample shape handed to the first layer"""
    theta:        Optional[np.ndarray] = None
    layout:       ThetaLayout          = field(init=False)
    output_shape: Shape                = field(init=False)

    def __post_init__(self):
        if int(np.prod(self.input_shape)) != int(np.prod(self.tensor_shape)):
            raise ConfigError(
                f'input {self.input_shape} cannot feed {self.tensor_shape}')
        shape = tuple(self.tensor_shape)
        for layer in self.layers:
            shape = layer.output_shape(shape)
        self.output_shape = shape
        self.layout       = ThetaLayout.build(self.layers)
        if self.theta is None:
            self.theta = np.zeros(self.layout.total, dtype=np.float64)
        self.theta = _check_theta(self.theta, self.layout)

    @property
    def parameter_count(self) -> int:
        return self.layout.total

    @property
    def n_classes(self) -> int:
        return self.output_shape[0]

    def tensors(self) -> Tensors:
        """
        per-layer parameter tensors as views into `theta`
        """
        assert self.theta is not None
        return unflatten(self.theta, self.layout)

    def with_theta(self, theta: np.ndarray) -> 'ClassicalModel':
        """
        same architecture carrying a different parameter vector
        """
        return ClassicalModel(
            layers=self.layers,
            input_shape=self.input_shape,
            tensor_shape=self.tensor_shape,
            theta=theta,
        )

class ForwardCache(NamedTuple):
    """
    Per-Layer Activations retained for `backward`
    """
    model:   ClassicalModel
    params:  Tensors
    caches:  List[Any]
    batch:   int

class Evaluation(NamedTuple):
    """
    Test-Set Evaluation Result
    """
    accuracy:  float
    loss:      float
    confusion: np.ndarray

#** Functions **#

def _check_theta(theta: np.ndarray, layout: ThetaLayout) -> np.ndarray:
    theta = np.asarray(theta, dtype=np.float64)
    if theta.shape != (layout.total, ):
        raise ConfigError(
            f'theta length mismatch: expected {layout.total}, got {theta.size}')
    return theta

def reference_layers() -> List[Layer]:
    """
    VGG-like stack with exactly 6,690 parameters for 28x28 inputs
    """
    return [
        Conv2d(1, 10),
        ReLU(),
        MaxPool2(),
        Conv2d(10, 4),
        ReLU(),
        MaxPool2(),
        Flatten(),
        Dense(100, 56),
        ReLU(),
        Dense(56, 10),
    ]

def init_theta(layers: Sequence[Layer],
    layout: ThetaLayout, rng: np.random.Generator) -> np.ndarray:
    """
    fan-in scaled uniform weights and zero biases

    :param layers: network layers
    :param layout: matching theta layout
    :param rng:    random generator
    :return:       new flat parameter vector
    """
    theta = np.zeros(layout.total, dtype=np.float64)
    for entry in layout.entries:
        if entry.role != TensorRole.Weight:
            continue
        bound = math.sqrt(6.0 / layers[entry.layer].fan_in)
        theta[entry.offset:entry.end] = \
            rng.uniform(-bound, bound, size=entry.size)
    return theta

def init_scale(model: ClassicalModel) -> float:
    """
    root-mean-square parameter value produced by `init_theta` for a model
    """
    total = 0.0
    for entry in model.layout.entries:
        if entry.role == TensorRole.Weight:
            total += entry.size * 2.0 / model.layers[entry.layer].fan_in
    return math.sqrt(total / model.parameter_count)

def build_reference_model(seed: Optional[int] = 0) -> ClassicalModel:
    """
    build the 6,690 parameter reference network

    :param seed: initialization seed (None leaves theta at zero)
    :return:     new classical model
    """
    layers = reference_layers()
    model  = ClassicalModel(layers, IMAGE_SHAPE, (1, *IMAGE_SHAPE))
    if seed is not None:
        rng = np.random.default_rng(seed)
        model.theta = init_theta(layers, model.layout, rng)
    return model

def build_dense_model(widths: Sequence[int],
    seed: Optional[int] = 0) -> ClassicalModel:
    """
    build a small fully connected ReLU network (used for toy problems)

    :param widths: layer widths from input features to classes
    :param seed:   initialization seed (None leaves theta at zero)
    :return:       new classical model
    """
    if len(widths) < 2:
        raise ConfigError(f'dense model needs >= 2 widths: {widths!r}')
    layers: List[Layer] = []
    for n, (fan_in, fan_out) in enumerate(zip(widths, widths[1:])):
        if n:
            layers.append(ReLU())
        layers.append(Dense(fan_in, fan_out))
    model = ClassicalModel(layers, (widths[0], ), (widths[0], ))
    if seed is not None:
        rng = np.random.default_rng(seed)
        model.theta = init_theta(layers, model.layout, rng)
    return model

@overload
def flatten(source: ClassicalModel) -> np.ndarray:
    ...

@overload
def flatten(source: Tensors, layout: ThetaLayout) -> np.ndarray:
    ...

def flatten(source, layout = None):
    """
    pack per-layer tensors into the canonical flat theta vector

    :param source: classical model or per-layer tensors
    :param layout: theta layout (required for raw tensors)
    :return:       flat parameter vector
    """
    if isinstance(source, ClassicalModel):
        source, layout = source.tensors(), source.layout
    if layout is None:
        raise ConfigError('flatten of raw tensors requires a layout')
    theta    = np.zeros(layout.total, dtype=np.float64)
    position = {}
    for entry in layout.entries:
        index  = position.get(entry.layer, 0)
        tensor = np.asarray(source[entry.layer][index], dtype=np.float64)
        position[entry.layer] = index + 1
        if tensor.shape != entry.shape:
            raise ConfigError(
                f'layer {entry.layer} {entry.role.value} shape '
                f'{tensor.shape} != {entry.shape}')
        theta[entry.offset:entry.end] = tensor.ravel()
    return theta

def unflatten(theta: np.ndarray, layout: ThetaLayout) -> Tensors:
    """
    split a flat theta vector into per-layer tensor views

    :param theta:  flat parameter vector
    :param layout: theta layout
    :return:       list (one per layer) of parameter tensors
    """
    theta   = _check_theta(theta, layout)
    n_layer = max((e.layer for e in layout.entries), default=-1) + 1
    tensors: Tensors = [[] for _ in range(n_layer)]
    for entry in layout.entries:
        tensors[entry.layer].append(
            theta[entry.offset:entry.end].reshape(entry.shape))
    return tensors

def _layer_params(tensors: Tensors, index: int) -> List[np.ndarray]:
    return tensors[index] if index < len(tensors) else []

def forward(model: ClassicalModel, batch: np.ndarray):
    """
    batched inference

    :param model: classical model
    :param batch: inputs of shape (B, *model.input_shape)
    :return:      (logits of shape (B, classes), forward cache)
    """
    batch = np.asarray(batch, dtype=np.float64)
    if batch.ndim != len(model.input_shape) + 1 \
        or tuple(batch.shape[1:]) != tuple(model.input_shape):
        raise InvariantError(
            f'input shape {batch.shape} != (B, *{model.input_shape})')
    params = model.tensors()
    caches = []
    x      = batch.reshape((batch.shape[0], *model.tensor_shape))
    for index, layer in enumerate(model.layers):
        x, cache = layer.forward(x, _layer_params(params, index))
        caches.append(cache)
    return x, ForwardCache(model, params, caches, batch.shape[0])

def loss_and_grad(logits: np.ndarray, labels: np.ndarray):
    """
    mean softmax cross-entropy and its gradient w.r.t. logits

    :param logits: (B, classes) logits
    :param labels: (B, ) integer labels
    :return:       (loss, dL/dlogits)
    """
    logits = np.asarray(logits, dtype=np.float64)
    labels = np.asarray(labels)
    batch, classes = logits.shape
    if labels.shape != (batch, ):
        raise InvariantError(f'labels shape {labels.shape} != ({batch}, )')
    if batch and (labels.min() < 0 or labels.max() >= classes):
        raise DataError(f'labels outside 0..{classes - 1}')
    rows    = np.arange(batch)
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_p   = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    loss    = float(-log_p[rows, labels].mean())
    grad    = np.exp(log_p)
    grad[rows, labels] -= 1.0
    return loss, grad / batch

def backward(cache: ForwardCache, d_logits: np.ndarray) -> np.ndarray:
    """
    reverse-mode gradient of the loss w.r.t. the flat theta vector

    :param cache:    forward cache from `forward`
    :param d_logits: dL/dlogits
    :return:         dL/dtheta in canonical layout order
    """
    model    = cache.model
    d_logits = np.asarray(d_logits, dtype=np.float64)
    expected = (cache.batch, *model.output_shape)
    if d_logits.shape != expected:
        raise InvariantError(f'd_logits shape {d_logits.shape} != {expected}')
    grads = np.zeros(model.parameter_count, dtype=np.float64)
    slots = unflatten(grads, model.layout)
    grad  = d_logits
    for index in reversed(range(len(model.layers))):
        layer  = model.layers[index]
        params = _layer_params(cache.params, index)
        grad, d_params = layer.backward(
            cache.caches[index], grad, params, need_input=index > 0)
        for slot, d_param in zip(_layer_params(slots, index), d_params):
            slot[...] = d_param
    return grads

def evaluate(model: ClassicalModel,
    dataset: 'Dataset', batch_size: int = 500) -> Evaluation:
    """
    accuracy, mean loss and confusion matrix over a dataset

    :param model:      classical model
    :param dataset:    labeled dataset
    :param batch_size: evaluation batch size
    :return:           evaluation record (confusion[true][predicted])
    """
    total = len(dataset)
    if total == 0:
        raise DataError('cannot evaluate an empty dataset')
    classes   = model.n_classes
    confusion = np.zeros((classes, classes), dtype=np.int64)
    loss_sum  = 0.0
    for start in range(0, total, batch_size):
        images = dataset.images[start:start + batch_size]
        labels = dataset.labels[start:start + batch_size]
        logits, _ = forward(model, images)
        loss, _   = loss_and_grad(logits, labels)
        loss_sum += loss * len(labels)
        np.add.at(confusion, (labels, logits.argmax(axis=1)), 1)
    accuracy = float(np.trace(confusion)) / total
    return Evaluation(accuracy, loss_sum / total, confusion)
