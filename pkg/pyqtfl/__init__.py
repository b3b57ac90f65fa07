"""
Quantum-Train Federated Learning Simulator
"""

#** Variables **#
__all__ = [
    'ErrorCode',
    'Mode',
    'Split',
    'TensorRole',
    'FashionLabel',

    'QtflError',
    'ConfigError',
    'UsageError',
    'InvariantError',
    'DataError',
    'ParseError',
    'OracleError',
]

#** Imports **#
from .enum import *
from .exceptions import *
