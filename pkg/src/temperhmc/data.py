"""MNIST-format ingestion, 16x16 downsampling, and stratified subsets.

Images arrive as IDX files (gzip or plain).  Each 28x28 image is mapped to
[0, 1], resized to 16x16 by area-weighted averaging, flattened to 256
features, and standardised per feature using statistics over the full
combined (train + test) set.  Training subsets D_n are stratified: n/10
examples per class; everything not selected is appended to the test split.
Every generated subset is persisted so later runs reuse identical data.
"""

from __future__ import annotations

import gzip
import hashlib
import json
import os
import struct
from dataclasses import dataclass

import numpy as np

from .errors import (BadMagic, IndivisibleSize, InsufficientClassCount,
                     TruncatedPayload)

IMAGE_MAGIC = 2051
LABEL_MAGIC = 2049

N_CLASSES = 10
SOURCE_SIDE = 28
TARGET_SIDE = 16
VARIANCE_FLOOR = 1e-8

SNAPSHOT_MAGIC = b"THMCDS01"


@dataclass(frozen=True)
class RawImageSet:
    """Decoded IDX contents: uint8 images (n, 28, 28) and labels (n,)."""

    images: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        if len(self.images) != len(self.labels):
            raise TruncatedPayload(
                f"{len(self.images)} images but {len(self.labels)} labels"
            )
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() > 9):
            raise TruncatedPayload("labels outside [0, 9]")


@dataclass(frozen=True)
class Dataset:
    """Normalised feature matrix (n, 256) plus integer labels and provenance."""

    inputs: np.ndarray
    labels: np.ndarray
    provenance: dict

    def __post_init__(self):
        object.__setattr__(self, "inputs", np.ascontiguousarray(self.inputs, dtype=float))
        object.__setattr__(self, "labels", np.ascontiguousarray(self.labels, dtype=np.int64))
        self.inputs.setflags(write=False)
        self.labels.setflags(write=False)

    def __len__(self):
        return len(self.labels)


def _parse_idx_array(data: bytes) -> np.ndarray:
    if len(data) < 4:
        raise BadMagic("file shorter than an IDX magic word")
    zeros, dtype_code, ndim = data[0] << 8 | data[1], data[2], data[3]
    magic = struct.unpack(">i", data[:4])[0]
    if zeros != 0 or magic not in (IMAGE_MAGIC, LABEL_MAGIC):
        raise BadMagic(f"magic word {magic} is not an IDX image/label file")
    del dtype_code
    header_len = 4 + 4 * ndim
    if len(data) < header_len:
        raise TruncatedPayload("IDX header truncated")
    dims = struct.unpack(f">{ndim}i", data[4:header_len])
    expected = int(np.prod(dims))
    payload = np.frombuffer(data, dtype=np.uint8, offset=header_len)
    if payload.size != expected:
        raise TruncatedPayload(
            f"payload has {payload.size} bytes, header promises {expected}"
        )
    return payload.reshape(dims).copy()


def parse_idx(image_bytes: bytes, label_bytes: bytes) -> RawImageSet:
    """Decode a matching pair of IDX image/label byte streams."""
    images = _parse_idx_array(image_bytes)
    labels = _parse_idx_array(label_bytes)
    if images.ndim != 3:
        raise BadMagic("image file does not hold a 3-D tensor")
    if labels.ndim != 1:
        raise BadMagic("label file does not hold a 1-D tensor")
    return RawImageSet(images, labels.astype(np.int64))


def _read_maybe_gzip(path) -> bytes:
    with open(path, "rb") as fh:
        head = fh.read(2)
        fh.seek(0)
        if head == b"\x1f\x8b":
            return gzip.decompress(fh.read())
        return fh.read()


_MNIST_NAMES = {
    "train": ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
    "test": ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
}


def load_idx_split(mnist_dir, split: str) -> RawImageSet:
    """Load one MNIST split from a directory of (optionally gzipped) IDX files."""
    img_name, lab_name = _MNIST_NAMES[split]
    paths = []
    for name in (img_name, lab_name):
        for candidate in (name, name + ".gz"):
            p = os.path.join(mnist_dir, candidate)
            if os.path.exists(p):
                paths.append(p)
                break
        else:
            raise FileNotFoundError(f"{name}[.gz] not found in {mnist_dir}")
    return parse_idx(_read_maybe_gzip(paths[0]), _read_maybe_gzip(paths[1]))


def resize_weights(n_src: int = SOURCE_SIDE, n_dst: int = TARGET_SIDE) -> np.ndarray:
    """(n_dst, n_src) matrix of fractional source-pixel overlaps per target cell.

    Row i holds the lengths of the intersections of source pixel intervals
    [j, j+1) with the target cell [i*s, (i+1)*s), s = n_src/n_dst.  Rows sum
    to s, so W @ img @ W.T / s**2 averages intensity over each target cell.
    """
    scale = n_src / n_dst
    weights = np.zeros((n_dst, n_src))
    for i in range(n_dst):
        lo, hi = i * scale, (i + 1) * scale
        for j in range(int(np.floor(lo)), min(int(np.ceil(hi)), n_src)):
            weights[i, j] = min(hi, j + 1) - max(lo, j)
    return weights


def resize_images(images: np.ndarray) -> np.ndarray:
    """Area-weighted resize of (n, 28, 28) images to (n, 16, 16).

    Linear in the pixel values and mass-conserving up to the (16/28)^2
    area factor.
    """
    wmat = resize_weights()
    scale = SOURCE_SIDE / TARGET_SIDE
    return np.einsum("ij,njk,lk->nil", wmat, images, wmat) / scale**2


def transform(train_raw: RawImageSet, test_raw: RawImageSet):
    """Resize, flatten, and standardise both splits jointly.

    Standardisation statistics are computed per feature over the combined
    train + test set (recorded in provenance), with a variance floor for
    near-constant border pixels.  Returns (train, test) Datasets.
    """
    feats = []
    for raw in (train_raw, test_raw):
        scaled = raw.images.astype(float) / 255.0
        feats.append(resize_images(scaled).reshape(len(raw.images), -1))
    combined = np.concatenate(feats, axis=0)
    mean = combined.mean(axis=0)
    var = np.maximum(combined.var(axis=0), VARIANCE_FLOOR)
    std = np.sqrt(var)
    meta = {
        "normalisation": "per-feature over combined train+test",
        "variance_floor": VARIANCE_FLOOR,
        "n_combined": int(len(combined)),
    }
    out = []
    for split, raw, f in zip(("train", "test"), (train_raw, test_raw), feats):
        prov = dict(meta, source_split=split)
        out.append(Dataset((f - mean) / std, raw.labels, prov))
    return tuple(out)


def stratified_subset(train: Dataset, test: Dataset, n: int, seed: int):
    """Stratified D_n and its complement-augmented test set.

    Draws n/10 examples per class from the training split without
    replacement; unused training examples are appended to the test split.
    Fully determined by (n, seed).
    """
    if n % N_CLASSES != 0:
        raise IndivisibleSize(f"subset size {n} is not a multiple of {N_CLASSES}")
    per_class = n // N_CLASSES
    rng = np.random.default_rng(seed)
    chosen = []
    for c in range(N_CLASSES):
        idx = np.flatnonzero(train.labels == c)
        if len(idx) < per_class:
            raise InsufficientClassCount(
                f"class {c} has {len(idx)} examples, need {per_class}"
            )
        chosen.append(rng.choice(idx, size=per_class, replace=False))
    chosen = np.sort(np.concatenate(chosen))
    mask = np.zeros(len(train), dtype=bool)
    mask[chosen] = True

    prov = {"size": n, "seed": seed, "source": "stratified train subset"}
    sub = Dataset(train.inputs[chosen], train.labels[chosen], prov)
    rest_inputs = np.concatenate([test.inputs, train.inputs[~mask]])
    rest_labels = np.concatenate([test.labels, train.labels[~mask]])
    test_prov = {"size": n, "seed": seed,
                 "source": "test split plus unused train examples"}
    return sub, Dataset(rest_inputs, rest_labels, test_prov)


def _checksum(inputs: np.ndarray, labels: np.ndarray) -> str:
    h = hashlib.sha256()
    h.update(np.ascontiguousarray(inputs, dtype="<f8").tobytes())
    h.update(np.ascontiguousarray(labels, dtype="<i8").tobytes())
    return h.hexdigest()


def save_dataset(path, ds: Dataset) -> None:
    """Versioned binary snapshot + JSON provenance sidecar; atomic write."""
    inputs = np.ascontiguousarray(ds.inputs, dtype="<f8")
    labels = np.ascontiguousarray(ds.labels, dtype="<i8")
    digest = _checksum(inputs, labels)
    tmp = str(path) + ".tmp"
    with open(tmp, "wb") as fh:
        fh.write(SNAPSHOT_MAGIC)
        fh.write(struct.pack("<qq", inputs.shape[0], inputs.shape[1]))
        fh.write(inputs.tobytes())
        fh.write(labels.tobytes())
        fh.write(bytes.fromhex(digest))
    os.replace(tmp, path)
    sidecar = dict(ds.provenance, checksum=digest, n=int(len(ds)))
    tmp_json = str(path) + ".json.tmp"
    with open(tmp_json, "w") as fh:
        json.dump(sidecar, fh, indent=2)
    os.replace(tmp_json, str(path) + ".json")


def load_dataset(path) -> Dataset:
    with open(path, "rb") as fh:
        if fh.read(len(SNAPSHOT_MAGIC)) != SNAPSHOT_MAGIC:
            raise BadMagic(f"{path} is not a dataset snapshot")
        n, d = struct.unpack("<qq", fh.read(16))
        inputs = np.frombuffer(fh.read(n * d * 8), dtype="<f8").reshape(n, d)
        labels = np.frombuffer(fh.read(n * 8), dtype="<i8")
        stored = fh.read(32).hex()
    if _checksum(inputs, labels) != stored:
        raise TruncatedPayload(f"{path}: checksum mismatch")
    prov = {}
    sidecar = str(path) + ".json"
    if os.path.exists(sidecar):
        with open(sidecar) as fh:
            prov = json.load(fh)
    return Dataset(inputs.copy(), labels.copy(), prov)


class DatasetStore:
    """Directory of persisted (size, seed) train/test snapshot pairs."""

    def __init__(self, directory):
        self.directory = str(directory)
        os.makedirs(self.directory, exist_ok=True)

    def _paths(self, n, seed):
        stem = os.path.join(self.directory, f"d{n}_seed{seed}")
        return stem + "_train.bin", stem + "_test.bin"

    def has(self, n, seed):
        return all(os.path.exists(p) for p in self._paths(n, seed))

    def load(self, n, seed):
        train_p, test_p = self._paths(n, seed)
        return load_dataset(train_p), load_dataset(test_p)

    def save(self, n, seed, train, test):
        train_p, test_p = self._paths(n, seed)
        save_dataset(train_p, train)
        save_dataset(test_p, test)

    def get_or_create(self, full_train: Dataset, full_test: Dataset,
                      n: int, seed: int):
        """Load the persisted D_n for (n, seed), generating it on first use."""
        if self.has(n, seed):
            return self.load(n, seed)
        train, test = stratified_subset(full_train, full_test, n, seed)
        self.save(n, seed, train, test)
        return train, test
