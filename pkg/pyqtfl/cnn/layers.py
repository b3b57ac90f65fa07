"""
Numpy Layer Implementations for the Classical Network
"""
from typing import Any, List, Optional, Sequence, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from pyderive import dataclass

from ..abc import Layer, ParamSpec, Shape
from ..enum import TensorRole
from ..exceptions import InvariantError

#** Variables **#
__all__ = ['Conv2d', 'ReLU', 'MaxPool2', 'Flatten', 'Dense']

Grads = Tuple[Optional[np.ndarray], List[np.ndarray]]

#** Functions **#

def _stack(rows: List[np.ndarray], batch: int, shape: Shape) -> np.ndarray:
    """
    stack per-sample outputs (an empty batch keeps the per-sample shape)
    """
    if not rows:
        return np.zeros((batch, *shape), dtype=np.float64)
    return np.stack(rows)

#** Classes **#

@dataclass(slots=True)
class Conv2d(Layer):
    """
    Valid (unpadded) Stride-1 2D Convolution with Bias
    """
    in_channels:  int
    out_channels: int
    kernel:       int = 3

    @property
    def fan_in(self) -> int:
        return self.in_channels * self.kernel * self.kernel

    def param_specs(self) -> List[ParamSpec]:
        k = self.kernel
        return [
            (TensorRole.Weight, (self.out_channels, self.in_channels, k, k)),
            (TensorRole.Bias,   (self.out_channels, )),
        ]

    def output_shape(self, shape: Shape) -> Shape:
        if len(shape) != 3 or shape[0] != self.in_channels:
            raise InvariantError(
                f'conv expects ({self.in_channels}, H, W) got {shape}')
        _, height, width = shape
        k = self.kernel
        return (self.out_channels, height - k + 1, width - k + 1)

    def _windows(self, x: np.ndarray) -> np.ndarray:
        k = self.kernel
        return sliding_window_view(x, (k, k), axis=(2, 3))

    def forward(self,
        x: np.ndarray, params: Sequence[np.ndarray]) -> Tuple[np.ndarray, Any]:
        weight, bias = params
        shape = self.output_shape(x.shape[1:])
        # per-sample contraction; outputs are independent of batch composition
        rows  = [
            np.tensordot(weight, window, axes=([1, 2, 3], [0, 3, 4]))
            for window in self._windows(x)
        ]
        return _stack(rows, len(x), shape) + bias[None, :, None, None], x

    def backward(self,
        cache:      Any,
        grad:       np.ndarray,
        params:     Sequence[np.ndarray],
        need_input: bool = True,
    ) -> Grads:
        x         = cache
        weight, _ = params
        d_weight  = np.einsum('bchwij,bohw->ocij',
            self._windows(x), grad, optimize=True)
        d_bias    = grad.sum(axis=(0, 2, 3))
        if not need_input:
            return None, [d_weight, d_bias]
        d_x = np.zeros_like(x)
        out_h, out_w = grad.shape[2:]
        for i in range(self.kernel):
            for j in range(self.kernel):
                d_x[:, :, i:i + out_h, j:j + out_w] += np.einsum(
                    'bohw,oc->bchw', grad, weight[:, :, i, j], optimize=True)
        return d_x, [d_weight, d_bias]

@dataclass(slots=True)
class ReLU(Layer):
    """
    Rectifier (gradient is zero at exactly-zero activations)
    """
    def output_shape(self, shape: Shape) -> Shape:
        return shape

    def forward(self,
        x: np.ndarray, params: Sequence[np.ndarray]) -> Tuple[np.ndarray, Any]:
        mask = x > 0
        return np.where(mask, x, 0.0), mask

    def backward(self,
        cache:      Any,
        grad:       np.ndarray,
        params:     Sequence[np.ndarray],
        need_input: bool = True,
    ) -> Grads:
        return np.where(cache, grad, 0.0), []

@dataclass(slots=True)
class MaxPool2(Layer):
    """
    2x2 Stride-2 Max Pooling (floor on odd sizes, first-occurrence argmax)
    """
    def output_shape(self, shape: Shape) -> Shape:
        if len(shape) != 3:
            raise InvariantError(f'maxpool expects (C, H, W) got {shape}')
        channels, height, width = shape
        return (channels, height // 2, width // 2)

    def forward(self,
        x: np.ndarray, params: Sequence[np.ndarray]) -> Tuple[np.ndarray, Any]:
        batch, channels, height, width = x.shape
        ph, pw = height // 2, width // 2
        blocks = x[:, :, :ph * 2, :pw * 2] \
            .reshape(batch, channels, ph, 2, pw, 2) \
            .transpose(0, 1, 2, 4, 3, 5) \
            .reshape(batch, channels, ph, pw, 4)
        argmax = blocks.argmax(axis=-1)
        out    = np.take_along_axis(blocks, argmax[..., None], axis=-1)
        return out[..., 0], (x.shape, argmax)

    def backward(self,
        cache:      Any,
        grad:       np.ndarray,
        params:     Sequence[np.ndarray],
        need_input: bool = True,
    ) -> Grads:
        shape, argmax = cache
        batch, channels, ph, pw = argmax.shape
        d_blocks = np.zeros(argmax.shape + (4, ), dtype=grad.dtype)
        np.put_along_axis(d_blocks, argmax[..., None], grad[..., None], axis=-1)
        d_x = np.zeros(shape, dtype=grad.dtype)
        d_x[:, :, :ph * 2, :pw * 2] = d_blocks \
            .reshape(batch, channels, ph, pw, 2, 2) \
            .transpose(0, 1, 2, 4, 3, 5) \
            .reshape(batch, channels, ph * 2, pw * 2)
        return d_x, []

@dataclass(slots=True)
class Flatten(Layer):
    """
    Collapse Per-Sample Tensors into Vectors (C-order)
    """
    def output_shape(self, shape: Shape) -> Shape:
        return (int(np.prod(shape)), )

    def forward(self,
        x: np.ndarray, params: Sequence[np.ndarray]) -> Tuple[np.ndarray, Any]:
        return x.reshape(x.shape[0], -1), x.shape

    def backward(self,
        cache:      Any,
        grad:       np.ndarray,
        params:     Sequence[np.ndarray],
        need_input: bool = True,
    ) -> Grads:
        return grad.reshape(cache), []

@dataclass(slots=True)
class Dense(Layer):
    """
    Fully Connected Layer (weight is out x in, row-major)
    """
    in_features:  int
    out_features: int

    @property
    def fan_in(self) -> int:
        return self.in_features

    def param_specs(self) -> List[ParamSpec]:
        return [
            (TensorRole.Weight, (self.out_features, self.in_features)),
            (TensorRole.Bias,   (self.out_features, )),
        ]

    def output_shape(self, shape: Shape) -> Shape:
        if shape != (self.in_features, ):
            raise InvariantError(
                f'dense expects ({self.in_features}, ) got {shape}')
        return (self.out_features, )

    def forward(self,
        x: np.ndarray, params: Sequence[np.ndarray]) -> Tuple[np.ndarray, Any]:
        weight, bias = params
        rows = [weight @ sample for sample in x]
        return _stack(rows, len(x), (self.out_features, )) + bias, x

    def backward(self,
        cache:      Any,
        grad:       np.ndarray,
        params:     Sequence[np.ndarray],
        need_input: bool = True,
    ) -> Grads:
        x         = cache
        weight, _ = params
        d_x       = grad @ weight if need_input else None
        return d_x, [grad.T @ x, grad.sum(axis=0)]
