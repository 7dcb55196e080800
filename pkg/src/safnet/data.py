"""Dataset ingestion (MNIST IDX, CIFAR-10 binary) and checkpoint persistence.

All parses fail closed: a truncated or malformed file raises before any
partially populated Dataset can escape. Pixels are kept in their stored
0..255 range; scaling to network units happens inside the model, and the
loaders never download anything (paths are supplied).
"""

import gzip
import hashlib
import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError, IntegrityError, MetadataMismatchError
from .models import build_model

MNIST_IMAGE_MAGIC = 2051
MNIST_LABEL_MAGIC = 2049
MNIST_FILES = {
    "train_images": "train-images-idx3-ubyte",
    "train_labels": "train-labels-idx1-ubyte",
    "test_images": "t10k-images-idx3-ubyte",
    "test_labels": "t10k-labels-idx1-ubyte",
}
CIFAR_TRAIN_FILES = [f"data_batch_{i}.bin" for i in range(1, 6)]
CIFAR_TEST_FILE = "test_batch.bin"
CIFAR_RECORD_LEN = 1 + 3 * 32 * 32

MNIST_CATEGORIES = tuple(str(d) for d in range(10))
CIFAR_CATEGORIES = ("airplane", "automobile", "bird", "cat", "deer",
                    "dog", "frog", "horse", "ship", "truck")


@dataclass
class Dataset:
    name: str
    train_images: np.ndarray  # (N, C, H, W) float32, values in [0, 255]
    train_labels: np.ndarray  # (N,) int64
    test_images: np.ndarray
    test_labels: np.ndarray
    categories: tuple


def _read_file(path):
    path = Path(path)
    if not path.exists():
        gz = path.with_name(path.name + ".gz")
        if gz.exists():
            path = gz
        else:
            raise DataError(f"dataset file not found: {path}")
    raw = path.read_bytes()
    if raw[:2] == b"\x1f\x8b":  # transparently accept gzipped originals
        raw = gzip.decompress(raw)
    return raw


def _parse_idx_images(raw, path):
    if len(raw) < 16:
        raise DataError(f"{path}: truncated IDX image header ({len(raw)} bytes)")
    magic, count, rows, cols = struct.unpack(">iiii", raw[:16])
    if magic != MNIST_IMAGE_MAGIC:
        raise DataError(f"{path}: bad IDX image magic {magic} (expected {MNIST_IMAGE_MAGIC})")
    if (rows, cols) != (28, 28):
        raise DataError(f"{path}: image geometry {rows}x{cols}, expected 28x28")
    expected = 16 + count * rows * cols
    if len(raw) != expected:
        raise DataError(f"{path}: payload is {len(raw)} bytes, header declares {expected}")
    data = np.frombuffer(raw, dtype=np.uint8, offset=16)
    return data.reshape(count, 1, rows, cols).astype(np.float32)


def _parse_idx_labels(raw, path):
    if len(raw) < 8:
        raise DataError(f"{path}: truncated IDX label header ({len(raw)} bytes)")
    magic, count = struct.unpack(">ii", raw[:8])
    if magic != MNIST_LABEL_MAGIC:
        raise DataError(f"{path}: bad IDX label magic {magic} (expected {MNIST_LABEL_MAGIC})")
    if len(raw) != 8 + count:
        raise DataError(f"{path}: payload is {len(raw)} bytes, header declares {8 + count}")
    labels = np.frombuffer(raw, dtype=np.uint8, offset=8)
    if labels.size and labels.max() > 9:
        raise DataError(f"{path}: label {labels.max()} out of range [0, 9]")
    return labels.astype(np.int64)


def load_mnist(directory, strict_counts=True):
    """Load the four standard IDX files from a directory.

    ``strict_counts`` enforces the canonical 60,000/10,000 split; disable it
    only for small smoke-test fixtures in the same format.
    """
    directory = Path(directory)
    parts = {}
    for key, fname in MNIST_FILES.items():
        raw = _read_file(directory / fname)
        parser = _parse_idx_images if "images" in key else _parse_idx_labels
        parts[key] = parser(raw, directory / fname)
    for split in ("train", "test"):
        n_img = len(parts[f"{split}_images"])
        n_lab = len(parts[f"{split}_labels"])
        if n_img != n_lab:
            raise DataError(f"mnist {split}: {n_img} images but {n_lab} labels")
    if strict_counts and (len(parts["train_images"]), len(parts["test_images"])) != (60000, 10000):
        raise DataError(
            f"mnist: expected 60000 train / 10000 test samples, found "
            f"{len(parts['train_images'])}/{len(parts['test_images'])}"
        )
    return Dataset("mnist", parts["train_images"], parts["train_labels"],
                   parts["test_images"], parts["test_labels"], MNIST_CATEGORIES)


def _parse_cifar_batch(raw, path):
    if len(raw) == 0 or len(raw) % CIFAR_RECORD_LEN != 0:
        raise DataError(f"{path}: size {len(raw)} is not a multiple of the {CIFAR_RECORD_LEN}-byte record")
    records = np.frombuffer(raw, dtype=np.uint8).reshape(-1, CIFAR_RECORD_LEN)
    labels = records[:, 0]
    if labels.max() > 9:
        raise DataError(f"{path}: label {labels.max()} out of range [0, 9]")
    images = records[:, 1:].reshape(-1, 3, 32, 32).astype(np.float32)
    return images, labels.astype(np.int64)


def serialize_cifar_records(images, labels):
    """Inverse of the batch parser; used for round-trip checks and fixtures."""
    images = np.asarray(images)
    n = len(labels)
    out = np.empty((n, CIFAR_RECORD_LEN), dtype=np.uint8)
    out[:, 0] = np.asarray(labels, dtype=np.uint8)
    out[:, 1:] = np.rint(images).astype(np.uint8).reshape(n, -1)
    return out.tobytes()


def load_cifar10(directory, strict_counts=True):
    """Load the CIFAR-10 binary batches (3073-byte records, channel-planar)."""
    directory = Path(directory)
    train_parts = [_parse_cifar_batch(_read_file(directory / f), directory / f)
                   for f in CIFAR_TRAIN_FILES]
    test_images, test_labels = _parse_cifar_batch(
        _read_file(directory / CIFAR_TEST_FILE), directory / CIFAR_TEST_FILE)
    train_images = np.concatenate([p[0] for p in train_parts])
    train_labels = np.concatenate([p[1] for p in train_parts])
    if strict_counts and (len(train_images), len(test_images)) != (50000, 10000):
        raise DataError(
            f"cifar10: expected 50000 train / 10000 test samples, found "
            f"{len(train_images)}/{len(test_images)}"
        )
    return Dataset("cifar10", train_images, train_labels, test_images, test_labels,
                   CIFAR_CATEGORIES)


def load_dataset(name, directory, strict_counts=True):
    if name == "mnist":
        return load_mnist(directory, strict_counts)
    if name == "cifar10":
        return load_cifar10(directory, strict_counts)
    raise DataError(f"unknown dataset {name!r}")


# ---- checkpoints -------------------------------------------------------

CHECKPOINT_MAGIC = b"SAFCKPT1"
CHECKPOINT_VERSION = 1


def save_checkpoint(model, path):
    """Write a versioned, checksummed container: metadata + named tensor blobs."""
    tensors = model.named_tensors()
    header = {
        "meta": {
            "dataset": model.dataset,
            "variant": model.variant,
            "seed": model.seed,
            "epoch": model.epoch,
            "dtype": np.dtype(model.dtype).name,
            "batchnorm": any(l.__class__.__name__ == "BatchNorm" for l in model.layers),
        },
        "tensors": [
            {"name": name, "dtype": arr.dtype.name, "shape": list(arr.shape)}
            for name, arr in tensors.items()
        ],
    }
    head = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    body = bytearray()
    body += CHECKPOINT_MAGIC
    body += struct.pack("<II", CHECKPOINT_VERSION, len(head))
    body += head
    for arr in tensors.values():
        body += np.ascontiguousarray(arr).tobytes()
    body += hashlib.sha256(bytes(body)).digest()
    Path(path).write_bytes(bytes(body))


def checkpoint_hash(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def read_checkpoint_meta(path):
    raw = Path(path).read_bytes()
    if raw[:8] != CHECKPOINT_MAGIC:
        raise IntegrityError(f"{path}: not a checkpoint (bad magic)")
    version, head_len = struct.unpack("<II", raw[8:16])
    if version != CHECKPOINT_VERSION:
        raise IntegrityError(f"{path}: unsupported checkpoint version {version}")
    return json.loads(raw[16:16 + head_len]), raw


def load_checkpoint(path, model=None):
    """Restore a model from a checkpoint; builds the right graph when model is None.

    Refuses corrupted payloads (checksum) and metadata that does not match
    the receiving model.
    """
    header, raw = read_checkpoint_meta(path)
    digest = raw[-32:]
    if hashlib.sha256(raw[:-32]).digest() != digest:
        raise IntegrityError(f"{path}: checksum mismatch (corrupted checkpoint)")
    meta = header["meta"]
    if model is None:
        model = build_model(meta["dataset"], meta["variant"], seed=meta["seed"],
                            dtype=np.dtype(meta["dtype"]), batchnorm=meta["batchnorm"])
    else:
        if (model.dataset, model.variant) != (meta["dataset"], meta["variant"]):
            raise MetadataMismatchError(
                f"{path}: checkpoint is {meta['dataset']}/{meta['variant']} but the "
                f"model is {model.dataset}/{model.variant}"
            )
    model.epoch = meta["epoch"]
    model.seed = meta["seed"]
    tensors = model.named_tensors()
    declared = header["tensors"]
    if [t["name"] for t in declared] != list(tensors.keys()):
        raise MetadataMismatchError(f"{path}: tensor names do not match the receiving model")
    _, head_len = struct.unpack("<II", raw[8:16])
    offset = 16 + head_len
    for spec in declared:
        arr = tensors[spec["name"]]
        if list(arr.shape) != spec["shape"] or arr.dtype.name != spec["dtype"]:
            raise MetadataMismatchError(
                f"{path}: tensor {spec['name']} is {spec['dtype']}{spec['shape']}, "
                f"model expects {arr.dtype.name}{list(arr.shape)}"
            )
        nbytes = arr.nbytes
        blob = np.frombuffer(raw, dtype=arr.dtype, count=arr.size, offset=offset)
        arr[...] = blob.reshape(arr.shape)
        offset += nbytes
    return model
