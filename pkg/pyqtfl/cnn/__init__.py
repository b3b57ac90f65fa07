"""
Classical Target Network (numpy forward/backward, flat theta layout)
"""

#** Variables **#
__all__ = [
    'Conv2d',
    'ReLU',
    'MaxPool2',
    'Flatten',
    'Dense',

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

#** Imports **#
from .layers import *
from .model import *
