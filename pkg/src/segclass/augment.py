"""Rigid-body data augmentation for images with aligned label maps.

One augmentation draw is: with probability ``probability`` apply a random
in-plane rotation, per-axis shift, and isotropic zoom, then independent
coin-flip mirror flips along the configured axes. Images resample with
bilinear interpolation, label maps with nearest neighbor so labels stay
members of the original label set. Flips are exact array reversals; the
resampling step is skipped entirely when rotation, shift, and zoom all
come out at identity, so a flip-only draw changes no pixel values.

Volumes rotate about the axial (first) axis only, matching how slice
stacks are acquired; shifts apply to every axis and zoom is isotropic.
"""

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import ConfigError


@dataclass(frozen=True)
class AugmentPolicy:
    probability: float = 0.6
    max_rotate_deg: float = 10.0
    max_shift_frac: float = 0.10
    zoom_range: tuple = (0.9, 1.1)
    flip_axes: tuple = (-1,)

    def __post_init__(self):
        if not 0.0 <= self.probability <= 1.0:
            raise ConfigError(f"probability must lie in [0, 1], got {self.probability}")
        if self.zoom_range[0] > self.zoom_range[1] or self.zoom_range[0] <= 0:
            raise ConfigError(f"zoom_range must be positive and ordered, got {self.zoom_range}")


def apply_rigid(image, labels, angle_deg, shifts, zoom, flips):
    """Transform ``image`` (float) and ``labels`` (int map or None) together.

    ``shifts`` holds one fractional offset per spatial axis; ``flips`` one
    bool per spatial axis. Rotation is within the last two axes. Returns
    (image, labels) copies; inputs are never modified.
    """
    image = np.asarray(image)
    dim = image.ndim
    if labels is not None and np.asarray(labels).shape != image.shape:
        raise ConfigError(f"labels shape {np.asarray(labels).shape} does not match image shape {image.shape}")
    if len(shifts) != dim or len(flips) != dim:
        raise ConfigError(f"need {dim} shifts and flips for a {dim}-d image")

    identity = angle_deg == 0.0 and zoom == 1.0 and not any(shifts)
    if identity:
        out_img = image.copy()
        out_lab = None if labels is None else np.asarray(labels).copy()
    else:
        matrix, offset = _affine(image.shape, angle_deg, shifts, zoom)
        out_img = ndimage.affine_transform(image, matrix, offset=offset, order=1, mode="constant", cval=0.0)
        out_lab = None
        if labels is not None:
            out_lab = ndimage.affine_transform(np.asarray(labels), matrix, offset=offset, order=0, mode="constant", cval=0)

    for axis, flip in enumerate(flips):
        if flip:
            out_img = np.flip(out_img, axis=axis)
            if out_lab is not None:
                out_lab = np.flip(out_lab, axis=axis)
    if out_lab is not None:
        out_lab = np.ascontiguousarray(out_lab)
    return np.ascontiguousarray(out_img), out_lab


def _affine(shape, angle_deg, shifts, zoom):
    # output->input map: x_in = M @ (x_out - c) + c - t, rotation in the
    # trailing two axes, isotropic 1/zoom scale
    dim = len(shape)
    theta = np.deg2rad(angle_deg)
    rot = np.eye(dim)
    rot[dim - 2, dim - 2] = np.cos(theta)
    rot[dim - 2, dim - 1] = -np.sin(theta)
    rot[dim - 1, dim - 2] = np.sin(theta)
    rot[dim - 1, dim - 1] = np.cos(theta)
    matrix = rot / zoom
    center = (np.asarray(shape, dtype=np.float64) - 1.0) / 2.0
    t = np.asarray(shifts, dtype=np.float64) * np.asarray(shape, dtype=np.float64)
    offset = center - matrix @ center - matrix @ t
    return matrix, offset


def augment_sample(image, labels, policy, rng):
    """Randomly transformed copies of one (image, labels) pair.

    The geometric part (rotation, shift, zoom) triggers as a unit with
    ``policy.probability``; each flip axis then flips independently with
    probability 0.5. ``labels`` may be None for image-only pipelines.
    """
    image = np.asarray(image)
    dim = image.ndim
    if rng.random() < policy.probability:
        angle = float(rng.uniform(-policy.max_rotate_deg, policy.max_rotate_deg))
        shifts = [float(rng.uniform(-policy.max_shift_frac, policy.max_shift_frac)) for _ in range(dim)]
        zoom = float(rng.uniform(policy.zoom_range[0], policy.zoom_range[1]))
    else:
        angle, shifts, zoom = 0.0, [0.0] * dim, 1.0
    flips = [False] * dim
    for axis in policy.flip_axes:
        flips[axis % dim] = bool(rng.random() < 0.5)
    return apply_rigid(image, labels, angle, shifts, zoom, flips)
