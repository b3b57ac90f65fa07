"""
FashionMNIST IDX Ingestion, Normalization and Stratified Subsets
"""
import gzip
import os
from typing import Dict, Iterator, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from pyderive import dataclass
from pystructs import U32, Context, Struct

from .enum import Split
from .exceptions import ConfigError, DataError, ParseError

#** Variables **#
__all__ = [
    'IMAGE_MAGIC',
    'LABEL_MAGIC',
    'N_CLASSES',
    'DATA_ENV',

    'LabeledImage',
    'Dataset',

    'parse_idx_images',
    'parse_idx_labels',
    'pack_idx_images',
    'pack_idx_labels',
    'load_idx',
    'find_idx_files',
    'load_split',
    'subset',
]

#: idx magic for unsigned-byte rank-3 tensors (images)
IMAGE_MAGIC = 0x00000803

#: idx magic for unsigned-byte rank-1 tensors (labels)
LABEL_MAGIC = 0x00000801

#: fashion-mnist image rows/cols
IMAGE_DIMS = (28, 28)

#: number of fashion-mnist classes
N_CLASSES = 10

#: environment variable overriding the data directory
DATA_ENV = 'PYQTFL_DATA'

GZIP_MAGIC = b'\x1f\x8b'

#: standard distribution filenames per split (optionally `.gz` suffixed)
IDX_FILES: Dict[Split, Tuple[str, str]] = {
    Split.Train: ('train-images-idx3-ubyte', 'train-labels-idx1-ubyte'),
    Split.Test:  ('t10k-images-idx3-ubyte', 't10k-labels-idx1-ubyte'),
}

#** Classes **#

class IdxHeader(Struct):
    magic: U32
    count: U32

class IdxImageDims(Struct):
    rows: U32
    cols: U32

class LabeledImage(NamedTuple):
    """
    Single Normalized Image and its Class Label
    """
    pixels: np.ndarray
    label:  int

@dataclass(slots=True)
class Dataset:
    """
    Ordered Immutable Collection of Labeled 28x28 Images
    """
    split:  Split
    images: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        self.images = np.asarray(self.images, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.images.ndim != 3 or self.images.shape[1:] != IMAGE_DIMS:
            raise DataError(f'images shape {self.images.shape} != (N, 28, 28)')
        if len(self.images) != len(self.labels):
            raise DataError(
                f'{len(self.images)} images vs {len(self.labels)} labels')
        if len(self.labels) and \
            (self.labels.min() < 0 or self.labels.max() >= N_CLASSES):
            raise DataError(f'labels outside 0..{N_CLASSES - 1}')
        if self.images.size and \
            (self.images.min() < 0.0 or self.images.max() > 1.0):
            raise DataError('pixels outside [0, 1]')
        self.images.setflags(write=False)
        self.labels.setflags(write=False)

    def __len__(self) -> int:
        return len(self.labels)

    def __getitem__(self, index: int) -> LabeledImage:
        return LabeledImage(self.images[index], int(self.labels[index]))

    def __iter__(self) -> Iterator[LabeledImage]:
        return (self[i] for i in range(len(self)))

    def take(self, indices: Sequence[int]) -> 'Dataset':
        """
        new dataset holding the given sample indices in the given order
        """
        indices = np.asarray(indices, dtype=np.int64)
        return Dataset(self.split, self.images[indices], self.labels[indices])

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=N_CLASSES)

#** Functions **#

def _header(raw: bytes, ctx: Context, magic: int, what: str) -> IdxHeader:
    if len(raw) - ctx.index < 8:
        raise ParseError(
            f'truncated {what} header', ctx.index, expected='8 bytes')
    offset = ctx.index
    header = IdxHeader.unpack(raw, ctx)
    if header.magic != magic:
        raise ParseError(
            f'bad {what} magic 0x{header.magic:08x}', offset,
            expected=f'0x{magic:08x}')
    return header

def _payload(raw: bytes, ctx: Context, size: int, what: str) -> np.ndarray:
    if len(raw) - ctx.index < size:
        raise ParseError(
            f'truncated {what} data: {len(raw) - ctx.index} bytes left',
            ctx.index, expected=f'{size} bytes')
    return np.frombuffer(raw, dtype=np.uint8, count=size, offset=ctx.index)

def parse_idx_images(raw: bytes) -> np.ndarray:
    """
    parse a big-endian idx3 image file body

    :param raw: uncompressed file content
    :return:    uint8 array of shape (count, 28, 28)
    """
    ctx    = Context()
    header = _header(raw, ctx, IMAGE_MAGIC, 'image')
    if len(raw) - ctx.index < 8:
        raise ParseError(
            'truncated image dimensions', ctx.index, expected='8 bytes')
    offset = ctx.index
    dims   = IdxImageDims.unpack(raw, ctx)
    if (dims.rows, dims.cols) != IMAGE_DIMS:
        raise ParseError(
            f'image dims {dims.rows}x{dims.cols}', offset, expected='28x28')
    size = header.count * dims.rows * dims.cols
    data = _payload(raw, ctx, size, 'pixel')
    return data.reshape(header.count, dims.rows, dims.cols)

def parse_idx_labels(raw: bytes) -> np.ndarray:
    """
    parse a big-endian idx1 label file body

    :param raw: uncompressed file content
    :return:    uint8 array of shape (count, )
    """
    ctx    = Context()
    header = _header(raw, ctx, LABEL_MAGIC, 'label')
    return _payload(raw, ctx, header.count, 'label')

def pack_idx_images(pixels: np.ndarray) -> bytes:
    """
    serialize uint8 images of shape (count, 28, 28) into idx3 bytes
    """
    pixels = np.asarray(pixels, dtype=np.uint8)
    count, rows, cols = pixels.shape
    return IdxHeader(magic=IMAGE_MAGIC, count=count).pack() \
        + IdxImageDims(rows=rows, cols=cols).pack() \
        + pixels.tobytes()

def pack_idx_labels(labels: np.ndarray) -> bytes:
    """
    serialize uint8 labels into idx1 bytes
    """
    labels = np.asarray(labels, dtype=np.uint8)
    return IdxHeader(magic=LABEL_MAGIC, count=len(labels)).pack() \
        + labels.tobytes()

def _read(path: str) -> bytes:
    with open(path, 'rb') as f:
        raw = f.read()
    if raw[:2] == GZIP_MAGIC:
        raw = gzip.decompress(raw)
    return raw

def load_idx(images_path: str,
    labels_path: str, split: Split = Split.Train) -> Dataset:
    """
    load an image/label idx file pair (gzip accepted transparently)

    :param images_path: idx3 image file
    :param labels_path: idx1 label file
    :param split:       split name recorded on the dataset
    :return:            normalized dataset
    """
    images = parse_idx_images(_read(images_path))
    labels = parse_idx_labels(_read(labels_path))
    if len(images) != len(labels):
        raise ParseError(
            f'{len(labels)} labels for {len(images)} images', 4,
            expected=f'{len(images)} labels')
    return Dataset(split, images / 255.0, labels)

def find_idx_files(directory: str, split: Split) -> Tuple[str, str]:
    """
    locate the standard idx files of a split within a directory

    :param directory: data directory
    :param split:     dataset split
    :return:          (images path, labels path)
    """
    paths: List[str] = []
    for name in IDX_FILES[split]:
        candidates = [os.path.join(directory, name + ext) for ext in ('', '.gz')]
        found      = next((p for p in candidates if os.path.isfile(p)), None)
        if found is None:
            raise ConfigError(f'missing {name}[.gz] in {directory!r}')
        paths.append(found)
    return paths[0], paths[1]

def load_split(directory: str, split: Split) -> Dataset:
    """
    load a standard fashion-mnist split from a data directory
    """
    images, labels = find_idx_files(directory, split)
    return load_idx(images, labels, split)

def subset(dataset: Dataset, n: int, seed: Optional[int] = 0) -> Dataset:
    """
    seeded class-stratified sample of `n` items (in shuffled order)

    :param dataset: source dataset
    :param n:       subset size
    :param seed:    random seed
    :return:        new dataset
    """
    if not 0 <= n <= len(dataset):
        raise ConfigError(f'subset size {n} outside 0..{len(dataset)}')
    rng     = np.random.default_rng(seed)
    classes = np.unique(dataset.labels)
    pools   = {c: rng.permutation(np.flatnonzero(dataset.labels == c))
        for c in classes}
    quota: Dict[int, int] = {}
    remain  = n
    # ascending class size; short classes are exhausted first
    order   = sorted(classes, key=lambda c: (len(pools[c]), c))
    for position, label in enumerate(order):
        share        = remain // (len(order) - position)
        quota[label] = min(share, len(pools[label]))
        remain      -= quota[label]
    chosen = np.concatenate(
        [pools[c][:quota[c]] for c in classes] or [np.zeros(0, np.int64)])
    return dataset.take(rng.permutation(chosen))
