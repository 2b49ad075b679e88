"""Samples, datasets, stratified splits, and the on-disk dataset format.

A sample is one image (float32, channel-first, intensities in [0, 255]),
its dense segmentation label map (uint8, 255 = unlabeled), and an optional
class label. Datasets are in-memory lists with the task metadata needed by
the trainer.

File format (little-endian)::

    magic    4 bytes  b"TDS1"
    version  u16      currently 1
    dim      u8       2 or 3
    count    u32
    n_labels u8       segmentation labels (including background)
    n_class  u8       classification classes (0 when absent)
    spatial  u32 x dim
    samples  per sample: image float32 raw, seg uint8 raw, class u8
             (255 = no class label)

Round trips are bit-exact. Sample uids are positions within their dataset;
split manifests pair them with the dataset tag, which is how the harness
asserts train/test hygiene.
"""

import struct
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError

MAGIC = b"TDS1"
VERSION = 1
NO_CLASS = 255


@dataclass
class Sample:
    uid: int
    image: np.ndarray  # float32 (1, *spatial)
    seg: np.ndarray  # uint8 (*spatial)
    cls: int | None = None


@dataclass
class Dataset:
    dim: int
    spatial: tuple
    num_labels: int
    num_classes: int
    task: str = ""
    tag: str = ""
    samples: list = field(default_factory=list)

    def __len__(self):
        return len(self.samples)

    def images(self):
        return np.stack([s.image for s in self.samples]).astype(np.float32)

    def seg_stack(self):
        return np.stack([s.seg for s in self.samples])

    def class_vector(self):
        if any(s.cls is None for s in self.samples):
            raise DataError(f"dataset {self.tag or '<unnamed>'} has samples without class labels")
        return np.array([s.cls for s in self.samples], dtype=np.int64)

    def subset(self, indices):
        picked = [self.samples[i] for i in indices]
        return Dataset(self.dim, self.spatial, self.num_labels, self.num_classes, self.task, self.tag, picked)


def split_by_class(dataset, train_per_class, rng, test_per_class=None):
    """Stratified split; returns (train_indices, test_indices), both sorted.

    Every class contributes ``train_per_class`` training samples (all of
    them, with a warning, if it has fewer) and the remainder, optionally
    capped at ``test_per_class``, goes to the test side.
    """
    labels = dataset.class_vector()
    train, test = [], []
    for cls in range(dataset.num_classes):
        idx = np.flatnonzero(labels == cls)
        if idx.size < train_per_class:
            warnings.warn(
                f"class {cls} has only {idx.size} samples, requested {train_per_class} for training",
                stacklevel=2,
            )
        perm = rng.permutation(idx.size)
        take = min(train_per_class, idx.size)
        train.extend(int(i) for i in idx[perm[:take]])
        rest = idx[perm[take:]]
        if test_per_class is not None:
            rest = rest[:test_per_class]
        test.extend(int(i) for i in rest)
    if not test:
        warnings.warn("test split is empty", stacklevel=2)
    return sorted(train), sorted(test)


def save_dataset(path, dataset):
    """Write ``dataset`` in the TDS1 format described in the module docstring."""
    if len(dataset.spatial) != dataset.dim:
        raise DataError(f"dataset dim {dataset.dim} does not match spatial {dataset.spatial}")
    head = [
        MAGIC,
        struct.pack("<HBIBB", VERSION, dataset.dim, len(dataset), dataset.num_labels, dataset.num_classes),
        struct.pack(f"<{dataset.dim}I", *dataset.spatial),
    ]
    body = []
    shape = (1,) + tuple(dataset.spatial)
    for s in dataset.samples:
        if tuple(s.image.shape) != shape or tuple(s.seg.shape) != tuple(dataset.spatial):
            raise DataError(f"sample {s.uid} has shape {s.image.shape}/{s.seg.shape}, expected {shape}")
        body.append(np.ascontiguousarray(s.image, dtype="<f4").tobytes())
        body.append(np.ascontiguousarray(s.seg, dtype=np.uint8).tobytes())
        body.append(struct.pack("<B", NO_CLASS if s.cls is None else int(s.cls)))
    with open(path, "wb") as fh:
        fh.write(b"".join(head + body))


def load_dataset(path, task="", tag=""):
    """Read a TDS1 file back into a Dataset; bit-exact with what was saved."""
    with open(path, "rb") as fh:
        blob = fh.read()
    offset = 0

    def take(n, what):
        nonlocal offset
        if offset + n > len(blob):
            raise DataError(
                f"{path}: truncated dataset, needed {n} bytes for {what} at offset {offset} "
                f"but only {len(blob) - offset} remain"
            )
        out = blob[offset : offset + n]
        offset += n
        return out

    if take(4, "magic") != MAGIC:
        raise DataError(f"{path}: not a dataset file (bad magic)")
    version, dim, count, num_labels, num_classes = struct.unpack("<HBIBB", take(9, "header"))
    if version != VERSION:
        raise DataError(f"{path}: unsupported dataset version {version}, expected {VERSION}")
    if dim not in (2, 3):
        raise DataError(f"{path}: dim must be 2 or 3, got {dim}")
    spatial = struct.unpack(f"<{dim}I", take(4 * dim, "spatial dims"))
    voxels = int(np.prod(spatial))
    ds = Dataset(dim, tuple(int(n) for n in spatial), num_labels, num_classes, task=task, tag=tag)
    for uid in range(count):
        image = np.frombuffer(take(4 * voxels, f"sample {uid} image"), dtype="<f4")
        seg = np.frombuffer(take(voxels, f"sample {uid} labels"), dtype=np.uint8)
        (cls,) = struct.unpack("<B", take(1, f"sample {uid} class"))
        ds.samples.append(
            Sample(
                uid=uid,
                image=image.reshape((1,) + ds.spatial).copy(),
                seg=seg.reshape(ds.spatial).copy(),
                cls=None if cls == NO_CLASS else int(cls),
            )
        )
    if offset != len(blob):
        raise DataError(f"{path}: {len(blob) - offset} trailing bytes after the last sample")
    return ds
