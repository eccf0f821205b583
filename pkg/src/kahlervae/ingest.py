"""Dataset acquisition and parsing: IDX, CIFAR-10 batches, synthetic corpora.

No download code lives here; binary files are user-supplied paths (see
docs/datasets.md for official sources).  Real pixels enter the complex VAE as
Re = pixel, Im = 0; parsing normalizes to [0, 1].
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, replace

import numpy as np

from .errors import BadMagic, BadRecordLength, CountTooLarge, TruncatedFile

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801
CIFAR_RECORD_LEN = 3073  # 1 label byte + 3 * 32 * 32 pixels


@dataclass(frozen=True)
class Dataset:
    items: np.ndarray  # (m, h*w*c) float64 in [0, 1]
    shape: tuple[int, int, int]  # (h, w, channels)
    labels: np.ndarray | None
    provenance: str

    def __post_init__(self):
        items = np.atleast_2d(np.asarray(self.items, dtype=float))
        h, w, c = self.shape
        if items.shape[1] != h * w * c:
            raise BadRecordLength(
                f"item length {items.shape[1]} != {h}*{w}*{c}"
            )
        if items.size and (items.min() < 0 or items.max() > 1):
            raise ValueError("pixel values must lie in [0, 1]")
        object.__setattr__(self, "items", items)

    def __len__(self) -> int:
        return self.items.shape[0]

    @property
    def dim(self) -> int:
        return self.items.shape[1]


def parse_idx(data: bytes) -> Dataset:
    """Parse an IDX image file (big-endian header, magic 0x00000803)."""
    if len(data) < 4:
        raise TruncatedFile("file shorter than the magic field", offset=len(data))
    (magic,) = struct.unpack(">I", data[:4])
    if magic == IDX_LABELS_MAGIC:
        raise BadMagic(
            "labels magic 0x00000801: use parse_idx_labels for label files"
        )
    if magic != IDX_IMAGES_MAGIC:
        raise BadMagic(f"bad IDX magic 0x{magic:08x}")
    if len(data) < 16:
        raise TruncatedFile("truncated IDX image header", offset=len(data))
    count, rows, cols = struct.unpack(">III", data[4:16])
    need = 16 + count * rows * cols
    if len(data) < need:
        raise TruncatedFile(
            f"need {need} bytes for {count} images, have {len(data)}",
            offset=len(data),
        )
    pixels = np.frombuffer(data, dtype=np.uint8, count=count * rows * cols, offset=16)
    items = pixels.reshape(count, rows * cols).astype(float) / 255.0
    return Dataset(
        items=items,
        shape=(rows, cols, 1),
        labels=None,
        provenance=f"idx-images({count}x{rows}x{cols})",
    )


def parse_idx_labels(data: bytes) -> np.ndarray:
    if len(data) < 4:
        raise TruncatedFile("file shorter than the magic field", offset=len(data))
    (magic,) = struct.unpack(">I", data[:4])
    if magic != IDX_LABELS_MAGIC:
        raise BadMagic(f"bad IDX labels magic 0x{magic:08x}")
    if len(data) < 8:
        raise TruncatedFile("truncated IDX label header", offset=len(data))
    (count,) = struct.unpack(">I", data[4:8])
    if len(data) < 8 + count:
        raise TruncatedFile(f"need {8 + count} bytes, have {len(data)}", offset=len(data))
    return np.frombuffer(data, dtype=np.uint8, count=count, offset=8).astype(int)


def load_mnist(images_path, labels_path=None) -> Dataset:
    with open(images_path, "rb") as fh:
        ds = parse_idx(fh.read())
    if labels_path is not None:
        with open(labels_path, "rb") as fh:
            labels = parse_idx_labels(fh.read())
        if labels.size != len(ds):
            raise BadRecordLength(
                f"{labels.size} labels for {len(ds)} images"
            )
        ds = replace(ds, labels=labels)
    return ds


def parse_cifar10_batch(data: bytes) -> Dataset:
    """Parse a CIFAR-10 binary batch: 3073-byte records, channel-major pixels."""
    if len(data) % CIFAR_RECORD_LEN != 0:
        raise BadRecordLength(
            f"file length {len(data)} is not a multiple of {CIFAR_RECORD_LEN}"
        )
    count = len(data) // CIFAR_RECORD_LEN
    raw = np.frombuffer(data, dtype=np.uint8).reshape(count, CIFAR_RECORD_LEN)
    labels = raw[:, 0].astype(int) if count else None
    items = raw[:, 1:].astype(float) / 255.0
    return Dataset(
        items=items.reshape(count, 3072) if count else np.empty((0, 3072)),
        shape=(32, 32, 3),
        labels=labels,
        provenance=f"cifar10-batch({count})",
    )


def synthetic_clusters(
    n_clusters: int,
    dim: int,
    separation: float,
    seed: int,
    per_cluster: int = 100,
    cluster_sigma: float = 0.05,
) -> Dataset:
    """Deterministic Gaussian-cluster dataset clipped to [0, 1].

    Cluster centers are rescaled around their mean so the minimum pairwise
    center distance equals separation * cluster_sigma; labels record cluster
    membership.
    """
    rng = np.random.default_rng(seed)
    centers = rng.uniform(0.3, 0.7, size=(n_clusters, dim))
    if n_clusters > 1:
        dists = np.linalg.norm(centers[:, None] - centers[None, :], axis=-1)
        np.fill_diagonal(dists, np.inf)
        min_dist = dists.min()
        if min_dist > 0 and separation > 0:
            target = separation * cluster_sigma
            mid = centers.mean(axis=0)
            centers = mid + (centers - mid) * (target / min_dist)
    items = []
    labels = []
    for k in range(n_clusters):
        pts = centers[k] + cluster_sigma * rng.standard_normal((per_cluster, dim))
        items.append(pts)
        labels.extend([k] * per_cluster)
    items = np.clip(np.concatenate(items), 0.0, 1.0)
    return Dataset(
        items=items,
        shape=(1, dim, 1),
        labels=np.asarray(labels),
        provenance=f"synthetic-clusters(k={n_clusters},dim={dim},sep={separation},seed={seed})",
    )


def subset_and_downsample(
    ds: Dataset, count: int, target_shape: tuple[int, int] | None, seed: int
) -> Dataset:
    """Deterministic subset plus integer-factor box-filter downsampling."""
    if count > len(ds):
        raise CountTooLarge(f"requested {count} of {len(ds)} items")
    rng = np.random.default_rng(seed)
    idx = np.sort(rng.choice(len(ds), size=count, replace=False))
    items = ds.items[idx]
    labels = ds.labels[idx] if ds.labels is not None else None
    h, w, c = ds.shape
    if target_shape is None or (h, w) == tuple(target_shape):
        out_shape = ds.shape
    else:
        th, tw = target_shape
        if h % th or w % tw:
            raise ValueError(
                f"target {th}x{tw} must divide source {h}x{w} for the box filter"
            )
        fh, fw = h // th, w // tw
        imgs = items.reshape(count, h, w, c)
        imgs = imgs.reshape(count, th, fh, tw, fw, c).mean(axis=(2, 4))
        items = imgs.reshape(count, th * tw * c)
        out_shape = (th, tw, c)
    return Dataset(
        items=items,
        shape=out_shape,
        labels=labels,
        provenance=f"{ds.provenance} | subset(count={count},seed={seed},shape={out_shape[:2]})",
    )


def bundled_digits() -> Dataset:
    """The 8x8 handwritten-digits corpus bundled with scikit-learn.

    Serves as the desk-scale stand-in when no MNIST IDX files are supplied;
    real digit strokes at 64 pixels, values normalized from the 0..16 range.
    """
    from sklearn.datasets import load_digits  # local import: optional extra

    raw = load_digits()
    items = raw.data / 16.0
    return Dataset(
        items=items,
        shape=(8, 8, 1),
        labels=raw.target.astype(int),
        provenance="sklearn-digits(1797x8x8)",
    )
