"""
Shared Synthetic Datasets and Compact Models for the UnitTests
"""
import numpy as np

from ..cnn import ClassicalModel, Dense, Flatten, MaxPool2, IMAGE_SHAPE
from ..data import N_CLASSES, Dataset
from ..enum import Split

#** Variables **#
__all__ = ['synthetic_dataset', 'pooled_model']

#** Functions **#

def synthetic_dataset(n: int,
    seed: int = 0, split: Split = Split.Train) -> Dataset:
    """
    learnable images: a bright 4x4 patch whose position encodes the label

    pixel (0, 0) stores the sample index so shards can be traced back.
    """
    rng    = np.random.default_rng(seed)
    labels = np.arange(n) % N_CLASSES
    images = rng.uniform(0.0, 0.1, size=(n, *IMAGE_SHAPE))
    for i, label in enumerate(labels):
        row = 4 * (1 + 3 * (int(label) // 5))
        col = 4 * (1 + int(label) % 5)
        images[i, row:row + 4, col:col + 4] = 0.9
    images[:, 0, 0] = np.arange(n) / max(n, 1)
    return Dataset(split, images, labels)

def pooled_model() -> ClassicalModel:
    """
    500 parameter network on 28x28 inputs (two poolings then one dense layer)
    """
    layers = [MaxPool2(), MaxPool2(), Flatten(), Dense(49, N_CLASSES)]
    return ClassicalModel(layers, IMAGE_SHAPE, (1, *IMAGE_SHAPE))
