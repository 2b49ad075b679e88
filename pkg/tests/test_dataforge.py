"""Synthetic data pipeline: phantom rendering, CLAHE, k-means, augmentation,
dataset splitting and serialization."""

import numpy as np
import pytest

from segclass.augment import AugmentPolicy, apply_rigid, augment_sample
from segclass.dataset import Dataset, Sample, load_dataset, save_dataset, split_by_class
from segclass.errors import ConfigError, DataError
from segclass.phantoms import (
    ANOMALY_CLASSES,
    PhantomConfig,
    band_of_slice,
    generate_phantoms,
)
from segclass.preprocess import clahe, kmeans_labels

CFG2 = PhantomConfig(dim=2, size=64)


# -- phantoms -------------------------------------------------------------


def test_generation_is_deterministic():
    a = generate_phantoms(CFG2, 3, "plain", seed=9)
    b = generate_phantoms(CFG2, 3, "plain", seed=9)
    for sa, sb in zip(a.samples, b.samples):
        assert np.array_equal(sa.image, sb.image)
        assert np.array_equal(sa.seg, sb.seg)
    c = generate_phantoms(CFG2, 3, "plain", seed=10)
    assert not np.array_equal(a.samples[0].image, c.samples[0].image)


def test_sample_streams_are_index_local():
    # extending the dataset must not change earlier samples
    short = generate_phantoms(CFG2, 2, "plain", seed=5)
    long = generate_phantoms(CFG2, 6, "plain", seed=5)
    for i in range(2):
        assert np.array_equal(short.samples[i].image, long.samples[i].image)


def test_shapes_ranges_and_labels():
    ds = generate_phantoms(CFG2, 4, "plain", seed=1)
    assert ds.spatial == (64, 64) and ds.num_labels == CFG2.num_structures + 1
    for s in ds.samples:
        assert s.image.shape == (1, 64, 64) and s.image.dtype == np.float32
        assert s.seg.shape == (64, 64) and s.seg.dtype == np.uint8
        assert s.image.min() >= 0.0 and s.image.max() <= 255.0
        assert s.seg.max() <= CFG2.num_structures
        assert s.cls is None


def test_noiseless_plain_image_takes_only_band_intensities():
    cfg = PhantomConfig(dim=2, size=64, noise_sigma=0.0)
    ds = generate_phantoms(cfg, 2, "plain", seed=3)
    allowed = {cfg.background} | set(cfg.intensities.tolist())
    for s in ds.samples:
        assert set(np.unique(s.image).tolist()) <= allowed


def test_structure_labels_match_intensity_bands_when_noiseless():
    cfg = PhantomConfig(dim=2, size=64, noise_sigma=0.0)
    ds = generate_phantoms(cfg, 2, "plain", seed=4)
    for s in ds.samples:
        for lab in np.unique(s.seg):
            vals = set(np.unique(s.image[0][s.seg == lab]).tolist())
            if lab == 0:
                assert cfg.background in vals
            else:
                assert vals == {cfg.intensities[lab - 1]}


def test_level_task_classes_follow_slice_bands():
    cfg = PhantomConfig(dim=2, size=64, levels=9)
    ds = generate_phantoms(cfg, 20, "level", seed=7)
    assert ds.num_classes == 9
    for s in ds.samples:
        assert 0 <= s.cls < 9


def test_band_of_slice_partitions_depth():
    depth, levels = 64, 9
    bands = [band_of_slice(i, depth, levels) for i in range(depth)]
    assert bands == sorted(bands)
    assert bands[0] == 0 and bands[-1] == levels - 1
    # 64 = 9 * 7 + 1, so band widths are 7 or 8 slices
    widths = np.bincount(bands)
    assert set(widths.tolist()) <= {7, 8} and widths.sum() == depth


def test_class_counts_interleave_and_align():
    ds = generate_phantoms(CFG2, 0, "anomaly", seed=2, class_counts=[2, 2, 2])
    assert [s.cls for s in ds.samples] == [0, 0, 1, 1, 2, 2]
    mapping = generate_phantoms(CFG2, 0, "anomaly", seed=2, class_counts={0: 2, 1: 2, 2: 2})
    for a, b in zip(ds.samples, mapping.samples):
        assert np.array_equal(a.image, b.image) and a.cls == b.cls


def test_anomaly_never_adds_segmentation_labels():
    ds = generate_phantoms(CFG2, 0, "anomaly", seed=8, class_counts=[3, 3, 3])
    assert ds.num_classes == ANOMALY_CLASSES
    for s in ds.samples:
        assert s.seg.max() <= CFG2.num_structures


def test_level_task_requires_2d():
    cfg3 = PhantomConfig(dim=3, size=32)
    with pytest.raises(ConfigError):
        generate_phantoms(cfg3, 2, "level", seed=0)


def test_3d_generation_basics():
    cfg3 = PhantomConfig(dim=3, size=16)
    ds = generate_phantoms(cfg3, 2, "anomaly", seed=11)
    for s in ds.samples:
        assert s.image.shape == (1, 16, 16, 16)
        assert s.seg.shape == (16, 16, 16)
        assert 0 <= s.cls < ANOMALY_CLASSES


def test_phantom_config_validation():
    with pytest.raises(ConfigError):
        PhantomConfig(dim=4)
    with pytest.raises(ConfigError):
        PhantomConfig(size=60)  # not a multiple of 16
    with pytest.raises(ConfigError):
        PhantomConfig(num_structures=12, intensity_step=22.0)  # tops out over 255


def test_unknown_task_rejected():
    with pytest.raises(ConfigError):
        generate_phantoms(CFG2, 1, "mystery", seed=0)


# -- CLAHE ----------------------------------------------------------------


def test_clahe_constant_image_unchanged():
    img = np.full((32, 32), 77.0)
    out = clahe(img, tiles=4, clip=2.0)
    assert np.array_equal(out, img)
    assert out is not img


def test_clahe_two_level_oracle():
    # an unclipped 50/50 two-level image maps to {128, 255}: the CDF puts
    # mass 0.5 at the low level and 1.0 at the high one
    img = np.zeros((16, 16))
    img[:, 8:] = 255.0
    out = clahe(img, tiles=1, clip=256.0)
    assert set(np.unique(out).tolist()) == {128.0, 255.0}
    assert np.all(out[:, :8] == 128.0) and np.all(out[:, 8:] == 255.0)


def test_clahe_single_tile_is_monotone():
    rng = np.random.default_rng(12)
    img = rng.uniform(0, 255, (32, 32))
    out = clahe(img, tiles=1, clip=4.0)
    order = np.argsort(img.reshape(-1), kind="stable")
    mapped = out.reshape(-1)[order]
    assert np.all(np.diff(mapped) >= 0)


def test_clahe_output_range_and_input_untouched():
    rng = np.random.default_rng(13)
    img = rng.uniform(10, 90, (64, 64))
    snap = img.copy()
    out = clahe(img, tiles=8, clip=2.0)
    assert np.array_equal(img, snap)
    assert out.min() >= 0.0 and out.max() <= 255.0
    assert out.dtype == np.float64


def test_clahe_spreads_low_contrast_histograms():
    rng = np.random.default_rng(14)
    img = rng.uniform(100, 140, (64, 64))
    out = clahe(img, tiles=4, clip=8.0)
    assert out.std() > img.std()


def test_clahe_3d_equals_per_slice_2d():
    rng = np.random.default_rng(15)
    vol = rng.uniform(0, 255, (3, 32, 32))
    out = clahe(vol, tiles=4, clip=2.0)
    for k in range(3):
        assert np.allclose(out[k], clahe(vol[k], tiles=4, clip=2.0), atol=1e-12)


def test_clahe_validates_arguments():
    img = np.zeros((32, 32))
    with pytest.raises(ConfigError):
        clahe(img, tiles=0)
    with pytest.raises(ConfigError):
        clahe(img, tiles=4, clip=0.0)
    with pytest.raises(ConfigError):
        clahe(np.zeros((30, 30)), tiles=4)  # 30 not divisible by 4


# -- k-means ---------------------------------------------------------------


def test_kmeans_recovers_clean_intensity_regions():
    cfg = PhantomConfig(dim=2, size=64, num_structures=3, noise_sigma=0.0)
    img = generate_phantoms(cfg, 1, "plain", seed=6).samples[0].image[0]
    k = len(np.unique(img))
    labels, centroids = kmeans_labels(img, k)
    assert np.all(np.diff(centroids) > 0)
    # one cluster per intensity level, in ascending order
    for i, v in enumerate(np.unique(img)):
        assert np.all(labels[img == v] == i)
        assert centroids[i] == pytest.approx(float(v), abs=1e-6)


def test_kmeans_bimodal_split_at_midpoint():
    img = np.array([[0.0, 1.0, 9.0, 10.0]] * 4)
    labels, centroids = kmeans_labels(img, 2)
    assert np.array_equal(labels[0], [0, 0, 1, 1])
    assert centroids == pytest.approx([0.5, 9.5])


def test_kmeans_deterministic():
    rng = np.random.default_rng(16)
    img = rng.uniform(0, 255, (32, 32))
    la, ca = kmeans_labels(img, 4)
    lb, cb = kmeans_labels(img, 4)
    assert np.array_equal(la, lb) and np.array_equal(ca, cb)


def test_kmeans_label_dtype_and_range():
    rng = np.random.default_rng(17)
    img = rng.uniform(0, 255, (16, 16))
    labels, centroids = kmeans_labels(img, 5)
    assert labels.dtype == np.uint8
    assert set(np.unique(labels).tolist()) <= set(range(5))
    assert centroids.shape == (5,)


def test_kmeans_degenerate_inputs():
    with pytest.raises(ConfigError):
        kmeans_labels(np.zeros((4, 4)), 1)
    with pytest.raises(DataError):
        kmeans_labels(np.full((4, 4), 3.0), 2)  # fewer distinct values than k


# -- augmentation ----------------------------------------------------------


def test_identity_transform_is_exact():
    rng = np.random.default_rng(18)
    img = rng.uniform(0, 255, (32, 32))
    lab = rng.integers(0, 5, (32, 32)).astype(np.uint8)
    out_img, out_lab = apply_rigid(img, lab, 0.0, (0.0, 0.0), 1.0, (False, False))
    assert np.array_equal(out_img, img) and out_img is not img
    assert np.array_equal(out_lab, lab)


def test_flip_is_exact_and_involutive():
    rng = np.random.default_rng(19)
    img = rng.uniform(0, 255, (16, 16))
    once, _ = apply_rigid(img, None, 0.0, (0.0, 0.0), 1.0, (False, True))
    assert np.array_equal(once, np.flip(img, axis=1))
    twice, _ = apply_rigid(once, None, 0.0, (0.0, 0.0), 1.0, (False, True))
    assert np.array_equal(twice, img)


def test_rotation_keeps_labels_in_set():
    rng = np.random.default_rng(20)
    img = rng.uniform(0, 255, (32, 32))
    lab = rng.integers(0, 4, (32, 32)).astype(np.uint8)
    out_img, out_lab = apply_rigid(img, lab, 7.5, (0.02, -0.03), 1.05, (False, False))
    assert out_img.shape == img.shape and out_lab.shape == lab.shape
    assert set(np.unique(out_lab).tolist()) <= set(np.unique(lab).tolist()) | {0}
    assert not np.array_equal(out_img, img)


def test_shift_moves_content_the_right_way():
    img = np.zeros((16, 16))
    img[8, 8] = 100.0
    # a +1/16 shift along the last axis moves content one pixel toward
    # higher indices
    out, _ = apply_rigid(img, None, 0.0, (0.0, 1.0 / 16.0), 1.0, (False, False))
    assert out[8, 9] == pytest.approx(100.0)
    assert out[8, 8] == pytest.approx(0.0)


def test_3d_rotation_spares_leading_axis():
    rng = np.random.default_rng(21)
    vol = rng.uniform(0, 255, (8, 16, 16))
    out, _ = apply_rigid(vol, None, 12.0, (0.0, 0.0, 0.0), 1.0, (False, False, False))
    # rotation mixes only the trailing two axes, so each slice transforms alone
    for k in range(8):
        alone, _ = apply_rigid(vol[k], None, 12.0, (0.0, 0.0), 1.0, (False, False))
        assert np.allclose(out[k], alone, atol=1e-9)


def test_augment_sample_determinism_and_off_switch():
    rng = np.random.default_rng(22)
    img = rng.uniform(0, 255, (32, 32))
    lab = rng.integers(0, 3, (32, 32)).astype(np.uint8)
    policy = AugmentPolicy()
    a_img, a_lab = augment_sample(img, lab, policy, np.random.default_rng(100))
    b_img, b_lab = augment_sample(img, lab, policy, np.random.default_rng(100))
    assert np.array_equal(a_img, b_img) and np.array_equal(a_lab, b_lab)
    off = AugmentPolicy(probability=0.0, flip_axes=())
    c_img, c_lab = augment_sample(img, lab, off, np.random.default_rng(0))
    assert np.array_equal(c_img, img) and np.array_equal(c_lab, lab)


def test_policy_validation():
    with pytest.raises(ConfigError):
        AugmentPolicy(probability=1.5)
    with pytest.raises(ConfigError):
        AugmentPolicy(zoom_range=(1.1, 0.9))
    with pytest.raises(ConfigError):
        apply_rigid(np.zeros((4, 4)), np.zeros((5, 5)), 0.0, (0, 0), 1.0, (False, False))
    with pytest.raises(ConfigError):
        apply_rigid(np.zeros((4, 4)), None, 0.0, (0.0,), 1.0, (False,))


# -- dataset splitting and serialization ------------------------------------


def _toy_dataset(per_class, num_classes=3, side=16):
    rng = np.random.default_rng(23)
    ds = Dataset(2, (side, side), 4, num_classes, task="anomaly", tag="toy")
    uid = 0
    for cls in range(num_classes):
        for _ in range(per_class):
            ds.samples.append(
                Sample(
                    uid=uid,
                    image=rng.uniform(0, 255, (1, side, side)).astype(np.float32),
                    seg=rng.integers(0, 4, (side, side)).astype(np.uint8),
                    cls=cls,
                )
            )
            uid += 1
    return ds


def test_split_is_stratified_and_disjoint():
    ds = _toy_dataset(6)
    train, test = split_by_class(ds, 2, np.random.default_rng(0), test_per_class=3)
    assert len(train) == 6 and len(test) == 9
    assert not set(train) & set(test)
    cls = ds.class_vector()
    for c in range(3):
        assert sum(1 for i in train if cls[i] == c) == 2
        assert sum(1 for i in test if cls[i] == c) == 3


def test_split_warns_when_class_is_short():
    ds = _toy_dataset(2)
    with pytest.warns(UserWarning):
        train, _ = split_by_class(ds, 5, np.random.default_rng(1))
    assert len(train) == 6  # everything available


def test_split_warns_on_empty_test_side():
    ds = _toy_dataset(2)
    with pytest.warns(UserWarning):
        _, test = split_by_class(ds, 2, np.random.default_rng(2))
    assert test == []


def test_subset_preserves_sample_identity():
    ds = _toy_dataset(3)
    sub = ds.subset([1, 4])
    assert [s.uid for s in sub.samples] == [1, 4]
    assert sub.num_classes == ds.num_classes and sub.spatial == ds.spatial


def test_roundtrip_is_bit_exact(tmp_path):
    ds = _toy_dataset(2)
    path = tmp_path / "toy.tds"
    save_dataset(path, ds)
    back = load_dataset(path, task=ds.task, tag=ds.tag)
    assert len(back) == len(ds)
    for a, b in zip(ds.samples, back.samples):
        assert np.array_equal(a.image, b.image)
        assert np.array_equal(a.seg, b.seg)
        assert a.cls == b.cls


def test_roundtrip_keeps_missing_class_labels(tmp_path):
    ds = generate_phantoms(CFG2, 2, "plain", seed=1)
    path = tmp_path / "plain.tds"
    save_dataset(path, ds)
    back = load_dataset(path)
    assert all(s.cls is None for s in back.samples)
    assert np.array_equal(back.samples[1].image, ds.samples[1].image)


def test_truncated_and_corrupt_files_are_rejected(tmp_path):
    ds = _toy_dataset(1)
    path = tmp_path / "toy.tds"
    save_dataset(path, ds)
    blob = path.read_bytes()

    clipped = tmp_path / "clipped.tds"
    clipped.write_bytes(blob[:-5])
    with pytest.raises(DataError):
        load_dataset(clipped)

    padded = tmp_path / "padded.tds"
    padded.write_bytes(blob + b"\x00")
    with pytest.raises(DataError):
        load_dataset(padded)

    wrong = tmp_path / "wrong.tds"
    wrong.write_bytes(b"XXXX" + blob[4:])
    with pytest.raises(DataError):
        load_dataset(wrong)


def test_class_vector_requires_labels():
    ds = generate_phantoms(CFG2, 1, "plain", seed=1)
    with pytest.raises(DataError):
        ds.class_vector()
