"""MNIST ingestion (IDX container) and pixel-rate spike encoding."""
from __future__ import annotations

import gzip
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

IMAGE_MAGIC = 0x00000803
LABEL_MAGIC = 0x00000801
N_PIXELS = 784


class IdxFormatError(ValueError):
    pass


class InsufficientSamplesError(ValueError):
    pass


@dataclass
class Dataset:
    images: np.ndarray  # (N, 28, 28) uint8
    labels: np.ndarray  # (N,) uint8

    def __post_init__(self):
        if len(self.images) != len(self.labels):
            raise ValueError("images and labels differ in length")

    def __len__(self):
        return len(self.labels)


def _read_bytes(path) -> bytes:
    path = Path(path)
    with open(path, "rb") as fh:
        head = fh.read(2)
    opener = gzip.open if head == b"\x1f\x8b" else open
    with opener(path, "rb") as fh:
        return fh.read()


def _parse_idx(path, expected_magic: int, ndim: int) -> np.ndarray:
    data = _read_bytes(path)
    header = 4 + 4 * ndim
    if len(data) < 4:
        raise IdxFormatError(f"{path}: file too short for IDX magic (offset 0)")
    (magic,) = struct.unpack(">I", data[:4])
    if magic != expected_magic:
        raise IdxFormatError(f"{path}: bad magic 0x{magic:08x} at offset 0, expected 0x{expected_magic:08x}")
    if len(data) < header:
        raise IdxFormatError(f"{path}: truncated header at offset {len(data)}")
    dims = struct.unpack(f">{ndim}I", data[4:header])
    size = int(np.prod(dims))
    if len(data) - header < size:
        raise IdxFormatError(
            f"{path}: truncated payload at offset {len(data)}, expected {header + size} bytes"
        )
    return np.frombuffer(data, dtype=np.uint8, count=size, offset=header).reshape(dims)


def load_idx(images_path, labels_path) -> Dataset:
    """Read an IDX image/label pair; gzip-compressed files are detected."""
    images = _parse_idx(images_path, IMAGE_MAGIC, 3)
    labels = _parse_idx(labels_path, LABEL_MAGIC, 1)
    if len(images) != len(labels):
        raise IdxFormatError(
            f"{labels_path}: {len(labels)} labels but {images_path} holds {len(images)} images"
        )
    return Dataset(images.copy(), labels.copy())


def write_idx(images: np.ndarray, labels: np.ndarray, images_path, labels_path, compress=False):
    images = np.asarray(images, dtype=np.uint8)
    labels = np.asarray(labels, dtype=np.uint8)
    opener = gzip.open if compress else open
    with opener(images_path, "wb") as fh:
        fh.write(struct.pack(">IIII", IMAGE_MAGIC, *images.shape))
        fh.write(images.tobytes())
    with opener(labels_path, "wb") as fh:
        fh.write(struct.pack(">II", LABEL_MAGIC, len(labels)))
        fh.write(labels.tobytes())


@dataclass
class Split:
    indices: np.ndarray  # positions in the source dataset
    images: np.ndarray
    labels: np.ndarray

    def __len__(self):
        return len(self.labels)


def _balanced_counts(total: int, k: int) -> list[int]:
    base, extra = divmod(total, k)
    return [base + (1 if i < extra else 0) for i in range(k)]


def select_subset(dataset: Dataset, classes, n_train: int, n_test: int, seed: int) -> tuple[Split, Split]:
    """Class-balanced, disjoint train/test draw.

    Remainders go to the lowest classes first. The training split is
    shuffled; the test split is kept grouped by class.
    """
    classes = [int(c) for c in classes]
    if len(set(classes)) != len(classes):
        raise ValueError(f"classes must be distinct: {classes}")
    if not classes:
        raise ValueError("no classes given")
    rng = np.random.default_rng(seed)
    train_counts = _balanced_counts(n_train, len(classes))
    test_counts = _balanced_counts(n_test, len(classes))
    train_idx, test_idx = [], []
    for c, k_tr, k_te in zip(classes, train_counts, test_counts):
        pool = np.flatnonzero(dataset.labels == c)
        need = k_tr + k_te
        if len(pool) < need:
            raise InsufficientSamplesError(
                f"class {c}: need {need} samples ({k_tr} train + {k_te} test), "
                f"only {len(pool)} available (short by {need - len(pool)})"
            )
        pick = rng.permutation(pool)[:need]
        train_idx.append(pick[:k_tr])
        test_idx.append(pick[k_tr:])
    tr = rng.permutation(np.concatenate(train_idx))
    te = np.concatenate(test_idx)

    def split(idx):
        return Split(idx, dataset.images[idx], dataset.labels[idx].astype(np.int64))

    return split(tr), split(te)


@dataclass(frozen=True)
class EncodingParams:
    f_min: float = 5.0  # Hz
    f_max: float = 70.0  # Hz
    duration: float = 100.0  # ms
    dt: float = 1.0  # ms
    mode: str = "bernoulli"  # or "periodic"

    def __post_init__(self):
        if not (self.f_max > self.f_min >= 0):
            raise ValueError("require f_max > f_min >= 0")
        steps = self.duration / self.dt
        if self.dt <= 0 or abs(steps - round(steps)) > 1e-9:
            raise ValueError("duration must be an integral multiple of dt")
        if self.mode not in ("bernoulli", "periodic"):
            raise ValueError(f"unknown encoding mode {self.mode!r}")

    @property
    def n_steps(self) -> int:
        return int(round(self.duration / self.dt))


def pixel_to_frequency(p, params: EncodingParams = EncodingParams()):
    """Linear map of normalized intensity in [0, 1] to a firing rate in Hz."""
    arr = np.asarray(p, dtype=float)
    if np.any(arr < 0) or np.any(arr > 1) or np.any(np.isnan(arr)):
        raise ValueError("pixel intensity must lie in [0, 1]")
    f = arr * (params.f_max - params.f_min) + params.f_min
    return float(f) if np.ndim(p) == 0 else f


def spike_probabilities(image, params: EncodingParams = EncodingParams()) -> np.ndarray:
    p = np.asarray(image, dtype=float).reshape(-1) / 255.0
    return pixel_to_frequency(p, params) * params.dt / 1000.0


def encode_image(image, params: EncodingParams = EncodingParams(), seed=0, key=0) -> np.ndarray:
    """Binary (784, T) spike matrix for one image.

    The random stream is derived from ``(seed, key)``; pass the image's
    dataset index as ``key`` so every image gets its own reproducible train.
    """
    image = np.asarray(image)
    if image.size != N_PIXELS:
        raise ValueError(f"expected a 28x28 image, got shape {image.shape}")
    T = params.n_steps
    if params.mode == "periodic":
        freq = pixel_to_frequency(image.reshape(-1) / 255.0, params)
        period = np.maximum(np.rint(1000.0 / (freq * params.dt)), 1).astype(int)
        return (np.arange(T)[None, :] % period[:, None]) == 0
    prob = spike_probabilities(image, params)
    rng = np.random.default_rng([int(seed), int(key)])
    return rng.random((N_PIXELS, T)) < prob[:, None]


def encode_split(split: Split, params: EncodingParams, seed: int) -> np.ndarray:
    """Stack encodings of every image in a split: (N, 784, T) bool."""
    out = np.empty((len(split), N_PIXELS, params.n_steps), dtype=bool)
    for k, (img, key) in enumerate(zip(split.images, split.indices)):
        out[k] = encode_image(img, params, seed, key)
    return out
