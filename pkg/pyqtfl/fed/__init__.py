"""
In-Process Federated Averaging over Compact Trainable Vectors
"""

#** Variables **#
__all__ = [
    'ClientUpdate',
    'Client',
    'local_train',

    'BYTES_PER_PARAM',
    'FedConfig',
    'RoundMetrics',
    'FederatedServer',
    'partition',
    'aggregation_weights',
    'aggregate',
    'run_federated',
]

#** Imports **#
from .client import *
from .server import *
