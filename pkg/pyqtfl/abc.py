"""
Abstract Baseclasses for the Classical Network Layers
"""
from abc import ABC, abstractmethod
from typing import Any, List, Optional, Sequence, Tuple

import numpy as np

from .enum import TensorRole

#** Variables **#
__all__ = ['Shape', 'ParamSpec', 'Layer']

Shape     = Tuple[int, ...]
ParamSpec = Tuple[TensorRole, Shape]

#** Classes **#

class Layer(ABC):
    """
    BaseClass for a Differentiable Network Layer over Batched Tensors
    """
    def param_specs(self) -> List[ParamSpec]:
        """
        ordered parameter tensors owned by the layer (weights before biases)
        """
        return []

    @property
    def fan_in(self) -> int:
        """
        inputs feeding each output unit (used for weight initialization)
        """
        return 0

    @abstractmethod
    def output_shape(self, shape: Shape) -> Shape:
        """
        per-sample output shape for the given per-sample input shape

        :param shape: per-sample input shape
        :return:      per-sample output shape
        """
        raise NotImplementedError

    @abstractmethod
    def forward(self,
        x: np.ndarray, params: Sequence[np.ndarray]) -> Tuple[np.ndarray, Any]:
        """
        compute batched layer output

        :param x:      batched input
        :param params: parameter tensors in `param_specs` order
        :return:       (output, cache for backward)
        """
        raise NotImplementedError

    @abstractmethod
    def backward(self,
        cache:      Any,
        grad:       np.ndarray,
        params:     Sequence[np.ndarray],
        need_input: bool = True,
    ) -> Tuple[Optional[np.ndarray], List[np.ndarray]]:
        """
        reverse-mode gradients for the layer

        :param cache:      cache returned by `forward`
        :param grad:       gradient w.r.t. layer output
        :param params:     parameter tensors in `param_specs` order
        :param need_input: compute the gradient w.r.t. the layer input
        :return:           (input gradient or None, parameter gradients)
        """
        raise NotImplementedError
