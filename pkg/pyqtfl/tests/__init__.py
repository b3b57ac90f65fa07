"""
Quantum-Train Federated Learning UnitTests
"""

#** Variables **#
__all__ = [
    'StatevectorTests',
    'AnsatzGradientTests',
    'MappingTests',
    'LayoutTests',
    'NetworkTests',
    'OptimizerTests',
    'EngineTests',
    'ReferenceTrainingTests',
    'HybridGradientTests',
    'ShardingTests',
    'AggregationTests',
    'FederationTests',
    'IdxTests',
    'DatasetTests',
    'ConfigTests',
    'ArtifactTests',
    'ExperimentTests',
    'ScalingTests',
    'DeskBenchmarks',
]

#** Imports **#
from .qstate import *
from .qtmap import *
from .cnn import *
from .train import *
from .fed import *
from .data import *
from .cli import *
