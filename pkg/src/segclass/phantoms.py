"""Synthetic phantom generation.

A phantom anatomy is a fixed set of ellipsoidal structures in the unit
cube, each with its own label and intensity band; the layout is a pure
function of ``layout_seed``. Every sample renders that anatomy after a
small per-sample rigid jitter, then adds Gaussian noise, so samples vary
while structure identity (position, rough size, intensity band) stays
recognizable.

Tasks:

* ``plain``: uniformly placed 2-d slices (or full 3-d volumes) with dense
  segmentation labels and no class label; used for backbone pretraining.
* ``level``: 2-d slices drawn from ``levels`` equal-width bands of slice
  positions; the class is the band index (band = slice_index * levels //
  depth, so band widths differ by at most one slice when levels does not
  divide the depth).
* ``anomaly``: class 0 samples are clean; class 1 adds a homogeneous dark
  blob; class 2 a heterogeneous bright one. The blob only overwrites
  intensities, never the segmentation labels, and nearby structures are
  pushed slightly outward, mimicking a mass effect.

All randomness comes from ``numpy.random.SeedSequence(seed, spawn_key=
(sample_index,))``, so sample ``i`` of a generation call is reproducible
in isolation.
"""

from dataclasses import dataclass

import numpy as np

from .dataset import Dataset, Sample
from .errors import ConfigError

TASKS = ("plain", "level", "anomaly")
ANOMALY_CLASSES = 3
MIN_BAND_GAP = 20.0


@dataclass(frozen=True)
class PhantomConfig:
    """Geometry and intensity layout of the synthetic anatomy."""

    dim: int = 2
    size: int = 64
    num_structures: int = 8
    levels: int = 9
    noise_sigma: float = 8.0
    background: float = 25.0
    intensity_base: float = 60.0
    intensity_step: float = 22.0
    layout_seed: int = 0

    def __post_init__(self):
        if self.dim not in (2, 3):
            raise ConfigError(f"dim must be 2 or 3, got {self.dim}")
        if self.size < 16 or self.size % 16:
            raise ConfigError(f"size must be a multiple of 16 (needed by the nets), got {self.size}")
        if not 1 <= self.num_structures <= 32:
            raise ConfigError(f"num_structures must be in [1, 32], got {self.num_structures}")
        if not 2 <= self.levels <= self.size:
            raise ConfigError(f"levels must be in [2, size], got {self.levels}")
        if self.intensity_step < MIN_BAND_GAP or self.intensity_base - self.background < MIN_BAND_GAP:
            raise ConfigError(
                f"intensity bands must stay at least {MIN_BAND_GAP} units apart, got "
                f"step {self.intensity_step} over background gap {self.intensity_base - self.background}"
            )
        top = self.intensity_base + self.intensity_step * (self.num_structures - 1)
        if top > 255.0:
            raise ConfigError(f"{self.num_structures} structures do not fit under 255: top band {top}")
        if self.noise_sigma < 0:
            raise ConfigError(f"noise_sigma must be non-negative, got {self.noise_sigma}")

    @property
    def num_labels(self):
        return self.num_structures + 1

    @property
    def intensities(self):
        return self.intensity_base + self.intensity_step * np.arange(self.num_structures)


@dataclass
class Anatomy:
    centers: np.ndarray  # (M, 3) in unit coordinates (z, y, x)
    axes: np.ndarray  # (M, 3) semi-axes
    angles: np.ndarray  # (M,) in-plane orientation, radians


def build_anatomy(config):
    """Deterministic structure layout for ``config.layout_seed``."""
    rng = np.random.default_rng(np.random.SeedSequence(config.layout_seed))
    m = config.num_structures
    cz = (np.arange(m) + 0.5) / m + rng.uniform(-0.05, 0.05, m)
    cy = rng.uniform(0.25, 0.75, m)
    cx = rng.uniform(0.25, 0.75, m)
    az = rng.uniform(0.14, 0.30, m)
    ay = rng.uniform(0.10, 0.24, m)
    ax = rng.uniform(0.10, 0.24, m)
    centers = np.stack([np.clip(cz, 0.08, 0.92), cy, cx], axis=1)
    axes = np.stack([az, ay, ax], axis=1)
    # shrink any axis that would poke outside the unit cube margins
    axes = np.minimum(axes, centers - 0.02)
    axes = np.minimum(axes, 0.98 - centers)
    angles = rng.uniform(-np.pi, np.pi, m)
    return Anatomy(centers=centers, axes=axes, angles=angles)


def _jitter(anatomy, rng):
    """Small rigid perturbation of the whole anatomy (per sample)."""
    phi = rng.uniform(-np.deg2rad(6.0), np.deg2rad(6.0))
    scale = rng.uniform(0.96, 1.04)
    shift = rng.uniform(-0.03, 0.03, 3)
    c, s = np.cos(phi), np.sin(phi)
    centers = anatomy.centers.copy()
    rel = centers[:, 1:] - 0.5
    centers[:, 1] = 0.5 + (c * rel[:, 0] - s * rel[:, 1]) * scale
    centers[:, 2] = 0.5 + (s * rel[:, 0] + c * rel[:, 1]) * scale
    centers[:, 0] = 0.5 + (centers[:, 0] - 0.5) * scale
    centers += shift
    return Anatomy(centers=centers, axes=anatomy.axes * scale, angles=anatomy.angles + phi)


def _push_structures(anatomy, center, radius):
    """Mass effect: push structures near ``center`` radially outward."""
    delta = anatomy.centers - center
    dist = np.linalg.norm(delta, axis=1)
    near = dist < radius + 0.12
    moved = anatomy.centers.copy()
    safe = np.maximum(dist[near], 1e-6)[:, None]
    moved[near] += delta[near] / safe * 0.025
    return Anatomy(centers=moved, axes=anatomy.axes, angles=anatomy.angles)


def _render2d(config, anatomy, z, rng, anomaly_kind):
    size = config.size
    coords = (np.arange(size) + 0.5) / size
    gy, gx = np.meshgrid(coords, coords, indexing="ij")
    anomaly = None
    if anomaly_kind:
        host = int(rng.integers(config.num_structures))
        hc = anatomy.centers[host]
        acz = z  # keep the blob centered on the rendered slice
        acy = np.clip(hc[1] + rng.uniform(-0.08, 0.08), 0.15, 0.85)
        acx = np.clip(hc[2] + rng.uniform(-0.08, 0.08), 0.15, 0.85)
        radius = rng.uniform(0.07, 0.13)
        anatomy = _push_structures(anatomy, np.array([acz, acy, acx]), radius)
        anomaly = (acy, acx, radius)

    image = np.full((size, size), config.background, dtype=np.float64)
    labels = np.zeros((size, size), dtype=np.uint8)
    intensities = config.intensities
    for m in range(config.num_structures):
        cz, cy, cx = anatomy.centers[m]
        az, ay, ax = anatomy.axes[m]
        dz = (z - cz) / az
        if abs(dz) >= 1.0:
            continue
        shrink = np.sqrt(1.0 - dz * dz)
        ey, ex = ay * shrink, ax * shrink
        c, s = np.cos(anatomy.angles[m]), np.sin(anatomy.angles[m])
        u = c * (gy - cy) + s * (gx - cx)
        v = -s * (gy - cy) + c * (gx - cx)
        inside = (u / ey) ** 2 + (v / ex) ** 2 <= 1.0
        image[inside] = intensities[m]
        labels[inside] = m + 1

    if anomaly is not None:
        acy, acx, radius = anomaly
        inside = (gy - acy) ** 2 + (gx - acx) ** 2 <= radius * radius
        if anomaly_kind == 1:
            image[inside] = 10.0
        else:
            image[inside] = 228.0 + rng.normal(0.0, 12.0, int(inside.sum()))
    if config.noise_sigma > 0:
        image += rng.normal(0.0, config.noise_sigma, image.shape)
    return np.clip(image, 0.0, 255.0), labels


def _render3d(config, anatomy, rng, anomaly_kind):
    size = config.size
    coords = (np.arange(size) + 0.5) / size
    gz, gy, gx = np.meshgrid(coords, coords, coords, indexing="ij")
    anomaly = None
    if anomaly_kind:
        host = int(rng.integers(config.num_structures))
        hc = anatomy.centers[host]
        center = np.clip(hc + rng.uniform(-0.08, 0.08, 3), 0.15, 0.85)
        radius = rng.uniform(0.09, 0.16)
        anatomy = _push_structures(anatomy, center, radius)
        anomaly = (center, radius)

    image = np.full((size,) * 3, config.background, dtype=np.float64)
    labels = np.zeros((size,) * 3, dtype=np.uint8)
    intensities = config.intensities
    for m in range(config.num_structures):
        cz, cy, cx = anatomy.centers[m]
        az, ay, ax = anatomy.axes[m]
        c, s = np.cos(anatomy.angles[m]), np.sin(anatomy.angles[m])
        u = c * (gy - cy) + s * (gx - cx)
        v = -s * (gy - cy) + c * (gx - cx)
        inside = ((gz - cz) / az) ** 2 + (u / ay) ** 2 + (v / ax) ** 2 <= 1.0
        image[inside] = intensities[m]
        labels[inside] = m + 1

    if anomaly is not None:
        center, radius = anomaly
        inside = (gz - center[0]) ** 2 + (gy - center[1]) ** 2 + (gx - center[2]) ** 2 <= radius * radius
        if anomaly_kind == 1:
            image[inside] = 10.0
        else:
            image[inside] = 228.0 + rng.normal(0.0, 12.0, int(inside.sum()))
    if config.noise_sigma > 0:
        image += rng.normal(0.0, config.noise_sigma, image.shape)
    return np.clip(image, 0.0, 255.0), labels


def band_of_slice(slice_index, depth, levels):
    """Equal-width level bands over slice positions (up to one-slice slack)."""
    return int(slice_index) * levels // depth


def _band_slices(depth, levels, band):
    lo = -(-band * depth // levels)  # ceil
    hi = -(-(band + 1) * depth // levels)
    return np.arange(lo, hi)


def generate_phantoms(config, count, task, seed, class_counts=None, tag=""):
    """Render ``count`` samples (or exact per-class counts) into a Dataset.

    ``class_counts`` (a sequence of per-class sizes) overrides ``count``
    for the class-labeled tasks; generation interleaves classes so sample
    index and class stay aligned with the derived RNG streams.
    """
    if task not in TASKS:
        raise ConfigError(f"task must be one of {TASKS}, got {task!r}")
    if task == "level" and config.dim != 2:
        raise ConfigError("the level task slices a 3-d anatomy and is only defined for dim=2")
    num_classes = {"plain": 0, "level": config.levels, "anomaly": ANOMALY_CLASSES}[task]
    if class_counts is not None:
        if task == "plain":
            raise ConfigError("class_counts does not apply to the plain task")
        if hasattr(class_counts, "keys"):
            class_counts = [class_counts.get(c, 0) for c in range(num_classes)]
        if len(class_counts) != num_classes:
            raise ConfigError(f"need {num_classes} class counts, got {len(class_counts)}")
        plan = [c for c, n in enumerate(class_counts) for _ in range(n)]
    else:
        plan = [None] * count

    anatomy = build_anatomy(config)
    root = np.random.SeedSequence(seed)
    ds = Dataset(
        dim=config.dim,
        spatial=(config.size,) * config.dim,
        num_labels=config.num_labels,
        num_classes=num_classes,
        task=task,
        tag=tag,
    )
    for index, wanted in enumerate(plan):
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(index,)))
        jittered = _jitter(anatomy, rng)
        if config.dim == 2:
            if task == "level":
                if wanted is None:
                    slice_index = int(rng.integers(config.size))
                    cls = band_of_slice(slice_index, config.size, config.levels)
                else:
                    cls = wanted
                    slice_index = int(rng.choice(_band_slices(config.size, config.levels, cls)))
                z = (slice_index + 0.5) / config.size
                kind = 0
            else:
                z = rng.uniform(0.3, 0.7)
                kind = 0 if task == "plain" else (wanted if wanted is not None else int(rng.integers(ANOMALY_CLASSES)))
                cls = None if task == "plain" else kind
            image, labels = _render2d(config, jittered, z, rng, kind)
        else:
            kind = 0 if task == "plain" else (wanted if wanted is not None else int(rng.integers(ANOMALY_CLASSES)))
            cls = None if task == "plain" else kind
            image, labels = _render3d(config, jittered, rng, kind)
        ds.samples.append(
            Sample(uid=index, image=image[None].astype(np.float32), seg=labels, cls=cls)
        )
    return ds
