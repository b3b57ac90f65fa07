"""
Global Enum Types for Quantum-Train Federated Learning
"""
from enum import Enum, IntEnum

#** Variables **#
__all__ = ['ErrorCode', 'Mode', 'Split', 'TensorRole', 'FashionLabel']

#** Classes **#

class ErrorCode(IntEnum):
    """
    Process Exit/Status Codes reported by Experiment Runs
    """
    Success     = 0
    Unspecified = 1
    UsageError  = 2

class Mode(str, Enum):
    """
    Experiment Pipeline Selection
    """
    CentralizedClassical = 'centralized-classical'
    CentralizedQT        = 'centralized-qt'
    FederatedQT          = 'federated-qt'
    FederatedClassical   = 'federated-classical'

    @property
    def federated(self) -> bool:
        return self in (Mode.FederatedQT, Mode.FederatedClassical)

    @property
    def quantum(self) -> bool:
        return self in (Mode.CentralizedQT, Mode.FederatedQT)

class Split(str, Enum):
    """
    Dataset Partition Name
    """
    Train = 'train'
    Test  = 'test'

class TensorRole(str, Enum):
    """
    Role of a Parameter Tensor within the Flat Theta Layout
    """
    Weight = 'weight'
    Bias   = 'bias'

class FashionLabel(IntEnum):
    """
    FashionMNIST Class Labels (dataset label order)
    """
    TShirtTop = 0
    Trouser   = 1
    Pullover  = 2
    Dress     = 3
    Coat      = 4
    Sandal    = 5
    Shirt     = 6
    Sneaker   = 7
    Bag       = 8
    AnkleBoot = 9

    @property
    def title(self) -> str:
        return FASHION_TITLES[self]

#** Init **#

#: human readable class names used as csv headers
FASHION_TITLES = {
    FashionLabel.TShirtTop: 'T-shirt/top',
    FashionLabel.Trouser:   'Trouser',
    FashionLabel.Pullover:  'Pullover',
    FashionLabel.Dress:     'Dress',
    FashionLabel.Coat:      'Coat',
    FashionLabel.Sandal:    'Sandal',
    FashionLabel.Shirt:     'Shirt',
    FashionLabel.Sneaker:   'Sneaker',
    FashionLabel.Bag:       'Bag',
    FashionLabel.AnkleBoot: 'Ankle boot',
}
