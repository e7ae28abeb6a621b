"""Synthetic digit-like image corpus in IDX format.

Generates a 10-class 28x28 grayscale dataset whose files are byte-level
drop-in replacements for the usual IDX pairs, so the full ingestion
pipeline (parsing, resizing, normalisation, stratified subsets) can run
in environments without the real image corpus.  Each class is a fixed
arrangement of Gaussian blobs; samples add random sub-pixel shifts,
amplitude jitter, and pixel noise, giving classes that are learnable but
overlap enough for small training sets to overfit.
"""

from __future__ import annotations

import gzip
import os
import struct

import numpy as np

SIDE = 28
N_CLASSES = 10


def _class_templates(rng):
    yy, xx = np.mgrid[0:SIDE, 0:SIDE]
    templates = []
    for _ in range(N_CLASSES):
        n_blobs = rng.integers(2, 5)
        img = np.zeros((SIDE, SIDE))
        for _ in range(n_blobs):
            cy, cx = rng.uniform(6, SIDE - 6, size=2)
            sy, sx = rng.uniform(2.0, 5.0, size=2)
            amp = rng.uniform(0.6, 1.0)
            img += amp * np.exp(-((yy - cy) ** 2 / (2 * sy**2)
                                  + (xx - cx) ** 2 / (2 * sx**2)))
        templates.append(img / img.max())
    return templates


def _render(template, rng):
    dy, dx = rng.uniform(-2.0, 2.0, size=2)
    img = np.roll(template, (int(round(dy)), int(round(dx))), axis=(0, 1))
    img = img * rng.uniform(0.7, 1.0)
    img = img + rng.normal(0.0, 0.12, size=img.shape)
    return np.clip(img, 0.0, 1.0)


def make_images(n: int, seed: int, template_seed: int = 7):
    """n images and labels; labels cycle through classes for balance."""
    rng = np.random.default_rng(seed)
    templates = _class_templates(np.random.default_rng(template_seed))
    labels = np.arange(n) % N_CLASSES
    rng.shuffle(labels)
    images = np.empty((n, SIDE, SIDE), dtype=np.uint8)
    for i, lab in enumerate(labels):
        images[i] = np.round(255 * _render(templates[lab], rng)).astype(np.uint8)
    return images, labels.astype(np.int64)


def idx_image_bytes(images: np.ndarray) -> bytes:
    n, rows, cols = images.shape
    return struct.pack(">iiii", 2051, n, rows, cols) + \
        images.astype(np.uint8).tobytes()


def idx_label_bytes(labels: np.ndarray) -> bytes:
    return struct.pack(">ii", 2049, len(labels)) + \
        labels.astype(np.uint8).tobytes()


def write_corpus(directory, n_train: int = 6000, n_test: int = 1000,
                 seed: int = 0, compress: bool = True):
    """Write train/test IDX pairs with the standard file names."""
    os.makedirs(directory, exist_ok=True)
    train_imgs, train_labels = make_images(n_train, seed)
    test_imgs, test_labels = make_images(n_test, seed + 1)
    files = {
        "train-images-idx3-ubyte": idx_image_bytes(train_imgs),
        "train-labels-idx1-ubyte": idx_label_bytes(train_labels),
        "t10k-images-idx3-ubyte": idx_image_bytes(test_imgs),
        "t10k-labels-idx1-ubyte": idx_label_bytes(test_labels),
    }
    for name, payload in files.items():
        if compress:
            with gzip.open(os.path.join(directory, name + ".gz"), "wb") as fh:
                fh.write(payload)
        else:
            with open(os.path.join(directory, name), "wb") as fh:
                fh.write(payload)
    return directory
