"""
MNIST-family ingestion: IDX parsing (raw or gzip), nearest-neighbor resizing,
amplitude encoding and seeded batching.

IDX layout (big-endian):
    images: 0x00000803 | count | rows | cols | count*rows*cols unsigned bytes
    labels: 0x00000801 | count | count unsigned bytes
"""

import gzip
import os
import struct
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np
import torch

from .config import IDX_FILES, NUM_CLASSES
from .exceptions import DatasetNotFoundError, IdxConsistencyError, IdxFormatError, IdxTruncatedError
from .field_core import DTYPE, REAL_DTYPE, ComplexField
from .logger import logger
from .seeding import STREAM_SHUFFLE, derive_generator

IMAGES_MAGIC = 0x00000803
LABELS_MAGIC = 0x00000801
GZIP_MAGIC = b"\x1f\x8b"


@dataclass(frozen=True, eq=False)
class Dataset:
    images: np.ndarray   # (N, rows, cols) uint8
    labels: np.ndarray   # (N,) uint8
    name: str = "mnist"
    split: str = "train"

    def __post_init__(self):
        if len(self.images) != len(self.labels):
            raise IdxConsistencyError(f"{len(self.images)} images but {len(self.labels)} labels")
        if len(self.labels) and int(self.labels.max()) >= NUM_CLASSES:
            raise IdxConsistencyError(f"Label {int(self.labels.max())} outside 0..{NUM_CLASSES - 1}")

    def __len__(self) -> int:
        return len(self.labels)

    def head(self, limit: Optional[int]) -> "Dataset":
        """First `limit` items (all when limit is None or larger than the split)."""
        if limit is None or limit >= len(self):
            return self
        return Dataset(self.images[:limit], self.labels[:limit], self.name, self.split)


def read_idx_bytes(path: str) -> bytes:
    """File contents, gunzipped when the gzip magic is present."""
    with open(path, "rb") as f:
        raw = f.read()
    if raw[:2] == GZIP_MAGIC:
        try:
            return gzip.decompress(raw)
        except (EOFError, gzip.BadGzipFile) as e:
            raise IdxTruncatedError(f"Corrupt or truncated gzip stream in {path}: {e}") from e
    return raw


def _header(blob: bytes, path: str, fields: int) -> Tuple[int, ...]:
    size = 4 * fields
    if len(blob) < size:
        raise IdxTruncatedError(f"{path} is shorter than its IDX header")
    return struct.unpack(f">{fields}I", blob[:size])


def parse_idx_images(blob: bytes, path: str = "<images>") -> np.ndarray:
    magic = _header(blob, path, 1)[0]
    if magic != IMAGES_MAGIC:
        raise IdxFormatError(f"{path}: expected image magic 0x{IMAGES_MAGIC:08X}, found 0x{magic:08X}")
    _, count, rows, cols = _header(blob, path, 4)
    expected = 16 + count * rows * cols
    if len(blob) < expected:
        raise IdxTruncatedError(f"{path}: {len(blob)} bytes, header promises {expected}")
    return np.frombuffer(blob, dtype=np.uint8, count=count * rows * cols, offset=16).reshape(count, rows, cols).copy()


def parse_idx_labels(blob: bytes, path: str = "<labels>") -> np.ndarray:
    magic = _header(blob, path, 1)[0]
    if magic != LABELS_MAGIC:
        raise IdxFormatError(f"{path}: expected label magic 0x{LABELS_MAGIC:08X}, found 0x{magic:08X}")
    _, count = _header(blob, path, 2)
    if len(blob) < 8 + count:
        raise IdxTruncatedError(f"{path}: {len(blob)} bytes, header promises {8 + count}")
    return np.frombuffer(blob, dtype=np.uint8, count=count, offset=8).copy()


def load_idx(images_path: str, labels_path: str, name: str = "mnist", split: str = "train") -> Dataset:
    images = parse_idx_images(read_idx_bytes(images_path), images_path)
    labels = parse_idx_labels(read_idx_bytes(labels_path), labels_path)
    if len(images) != len(labels):
        raise IdxConsistencyError(f"{images_path} holds {len(images)} images but {labels_path} holds {len(labels)} labels")
    dataset = Dataset(images=images, labels=labels, name=name, split=split)
    logger.debug(f"Loaded {len(dataset)} {name}/{split} items of {images.shape[1]}x{images.shape[2]}")
    return dataset


def encode_idx(dataset: Dataset) -> Tuple[bytes, bytes]:
    count, rows, cols = dataset.images.shape
    images = struct.pack(">4I", IMAGES_MAGIC, count, rows, cols) + dataset.images.astype(np.uint8).tobytes()
    labels = struct.pack(">2I", LABELS_MAGIC, count) + dataset.labels.astype(np.uint8).tobytes()
    return images, labels


def write_idx(dataset: Dataset, images_path: str, labels_path: str, compress: bool = False):
    for path, blob in zip((images_path, labels_path), encode_idx(dataset)):
        with open(path, "wb") as f:
            f.write(gzip.compress(blob, mtime=0) if compress else blob)


def split_paths(dataset_dir: str, split: str) -> Tuple[str, str]:
    """Locate the IDX pair of a split, preferring `.gz` files."""
    paths = []
    for stem in IDX_FILES[split]:
        candidates = [os.path.join(dataset_dir, stem + ".gz"), os.path.join(dataset_dir, stem)]
        found = next((c for c in candidates if os.path.exists(c)), None)
        if found is None:
            expected = ", ".join(f"{s}[.gz]" for s in IDX_FILES[split])
            raise DatasetNotFoundError(f"Missing {stem}[.gz] in {dataset_dir}; expected files: {expected}")
        paths.append(found)
    return paths[0], paths[1]


def load_split(dataset_dir: str, split: str, name: str = "mnist", limit: Optional[int] = None) -> Dataset:
    images_path, labels_path = split_paths(dataset_dir, split)
    return load_idx(images_path, labels_path, name=name, split=split).head(limit)


def resize_nearest(img: np.ndarray, n: int) -> np.ndarray:
    """Nearest-neighbor resize of the trailing two axes to n×n; integer factors give exact blocks."""
    if n < 1:
        raise ValueError(f"Target side must be at least 1, got {n}")
    rows, cols = img.shape[-2:]
    row_idx = (np.arange(n) * rows) // n
    col_idx = (np.arange(n) * cols) // n
    return img[..., row_idx[:, None], col_idx[None, :]]


def encode_amplitude(img: np.ndarray) -> ComplexField:
    """Byte value b becomes the real amplitude b/255 (phase 0)."""
    amplitude = torch.from_numpy(np.ascontiguousarray(img)).to(REAL_DTYPE) / 255.0
    return ComplexField(amplitude.to(DTYPE))


def encode_batch(dataset: Dataset, indices, n: int) -> Tuple[ComplexField, torch.Tensor]:
    """Input fields (B, n, n) and labels (B,) for the given item indices."""
    indices = np.asarray(indices, dtype=np.int64)
    fields = encode_amplitude(resize_nearest(dataset.images[indices], n))
    labels = torch.from_numpy(dataset.labels[indices].astype(np.int64))
    return fields, labels


def batches(ds: Dataset, batch_size: int, seed: int, epoch: int) -> List[np.ndarray]:
    """Seeded permutation split into batches; the last partial batch is kept."""
    if batch_size < 1:
        raise ValueError(f"batch_size must be at least 1, got {batch_size}")
    order = torch.randperm(len(ds), generator=derive_generator(seed, STREAM_SHUFFLE, epoch)).numpy()
    return [order[start:start + batch_size] for start in range(0, len(order), batch_size)]
