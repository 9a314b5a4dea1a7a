"""
Tests for patch sampling and prefetching.
"""
import pytest
import numpy as np

from src.data import (
    LabelVolume,
    PatchPrefetcher,
    PatchSampler,
    SamplerConfig,
    SamplingStrategy,
    Volume,
    sample_batch,
    sample_patches,
)
from src.tensor import ShapeError


@pytest.fixture
def rare_class_volume():
    """Class 1 is a single voxel, class 2 a thin slab."""
    labels = np.zeros((12, 12, 12), dtype=np.uint8)
    labels[6, 6, 6] = 1
    labels[:, :, 3] = 2
    data = np.arange(12 ** 3, dtype=np.float32).reshape(1, 12, 12, 12)
    return Volume(data, id="rare"), LabelVolume(labels, num_classes=3, id="rare")


class TestPatchSampler:
    def test_patch_shapes(self, small_dataset):
        volume, labels = small_dataset[0]
        image, lab = PatchSampler(8, seed=1).sample(volume, labels)
        assert image.shape == (2, 8, 8, 8)
        assert lab.shape == (8, 8, 8)

    def test_patch_is_window_of_volume(self, rare_class_volume):
        volume, labels = rare_class_volume
        sampler = PatchSampler(4, seed=0, strategy=SamplingStrategy.UNIFORM)
        corner = sampler.corner(labels)
        image, lab = sampler.extract(volume, labels, corner)
        d, h, w = corner
        assert np.array_equal(image, volume.data[:, d:d + 4, h:h + 4, w:w + 4])
        assert np.array_equal(lab, labels.labels[d:d + 4, h:h + 4, w:w + 4])

    def test_same_seed_same_sequence(self, small_dataset):
        volume, labels = small_dataset[0]
        a = sample_patches(volume, labels, PatchSampler(8, seed=3), 5)
        b = sample_patches(volume, labels, PatchSampler(8, seed=3), 5)
        for (ia, la), (ib, lb) in zip(a, b):
            assert np.array_equal(ia, ib)
            assert np.array_equal(la, lb)

    def test_class_balanced_centers(self, rare_class_volume):
        volume, labels = rare_class_volume
        sampler = PatchSampler(4, seed=0)
        centers = []
        for _ in range(300):
            corner = sampler.corner(labels)
            centers.append(labels.labels[tuple(c + 2 for c in corner)])
        counts = np.bincount(centers, minlength=3)
        # each present class is chosen with probability 1/3
        assert all(60 < c < 140 for c in counts)

    def test_balanced_skips_classes_without_valid_center(self):
        labels = np.zeros((8, 8, 8), dtype=np.uint8)
        labels[0, 0, 0] = 1
        sampler = PatchSampler(4, seed=0)
        lab = LabelVolume(labels, num_classes=2, id="edge")
        for _ in range(20):
            corner = sampler.corner(lab)
            assert lab.labels[tuple(c + 2 for c in corner)] == 0

    def test_uniform_corners_in_range(self, rare_class_volume):
        _, labels = rare_class_volume
        sampler = PatchSampler(5, seed=2, strategy="uniform")
        for _ in range(50):
            assert all(0 <= c <= 12 - 5 for c in sampler.corner(labels))

    def test_patch_larger_than_volume(self, rare_class_volume):
        volume, labels = rare_class_volume
        with pytest.raises(ShapeError):
            PatchSampler(16).sample(volume, labels)

    def test_extent_mismatch(self, rare_class_volume):
        volume, _ = rare_class_volume
        other = LabelVolume(np.zeros((12, 12, 10)), num_classes=1)
        with pytest.raises(ShapeError):
            PatchSampler(4).sample(volume, other)

    def test_from_config(self):
        sampler = PatchSampler.from_config(SamplerConfig(patch_size=8, strategy="uniform", seed=4))
        assert sampler.patch_size == 8
        assert sampler.strategy is SamplingStrategy.UNIFORM


class TestBatches:
    def test_batch_shapes(self, small_dataset):
        images, labels = sample_batch(small_dataset, PatchSampler(8, seed=0), batch_size=3)
        assert images.shape == (3, 2, 8, 8, 8)
        assert labels.shape == (3, 8, 8, 8)

    def test_prefetcher_matches_foreground(self, small_dataset):
        foreground = PatchSampler(8, seed=9)
        expected = [sample_batch(small_dataset, foreground, 2) for _ in range(4)]
        with PatchPrefetcher(small_dataset, PatchSampler(8, seed=9), batch_size=2, num_batches=4) as prefetcher:
            got = list(prefetcher)
        assert len(got) == 4
        for (ei, el), (gi, gl) in zip(expected, got):
            assert np.array_equal(ei, gi)
            assert np.array_equal(el, gl)

    def test_prefetcher_propagates_errors(self, rare_class_volume):
        prefetcher = PatchPrefetcher([rare_class_volume], PatchSampler(32), num_batches=2)
        with pytest.raises(ShapeError):
            list(prefetcher)
        prefetcher.close()

    def test_prefetcher_exhaustion(self, small_dataset):
        with PatchPrefetcher(small_dataset, PatchSampler(8), num_batches=1) as prefetcher:
            prefetcher.next_batch()
            with pytest.raises(StopIteration):
                prefetcher.next_batch()

    def test_empty_dataset(self):
        with pytest.raises(ValueError):
            PatchPrefetcher([], PatchSampler(4))
