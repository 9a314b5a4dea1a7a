"""
Tests for Dice score and Hausdorff distance.
"""
import itertools

import pytest
import numpy as np

from src.losses import boundary_voxels, dice_score, hausdorff_distance
from src.tensor import ShapeError


def _brute_hausdorff(a, b, spacing):
    pa = np.argwhere(a) * np.asarray(spacing)
    pb = np.argwhere(b) * np.asarray(spacing)

    def directed(x, y):
        return max(min(np.linalg.norm(p - q) for q in y) for p in x)

    return max(directed(pa, pb), directed(pb, pa))


def _brute_boundary(mask):
    points = []
    for idx in itertools.product(*(range(n) for n in mask.shape)):
        if not mask[idx]:
            continue
        for axis, step in itertools.product(range(3), (-1, 1)):
            near = list(idx)
            near[axis] += step
            if not 0 <= near[axis] < mask.shape[axis] or not mask[tuple(near)]:
                points.append(idx)
                break
    return np.array(points, dtype=np.float64)


class TestDiceScore:
    def test_identical(self, rng):
        mask = rng.random((4, 4, 4)) > 0.5
        assert dice_score(mask, mask) == 1.0

    def test_both_empty(self):
        empty = np.zeros((3, 3, 3), dtype=bool)
        assert dice_score(empty, empty) == 1.0

    def test_partial_overlap(self):
        a = np.zeros((1, 1, 4), dtype=bool)
        b = np.zeros((1, 1, 4), dtype=bool)
        a[0, 0, :2] = True
        b[0, 0, 1:] = True
        assert dice_score(a, b) == pytest.approx(2 * 1 / (2 + 3))

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            dice_score(np.zeros((2, 2, 2)), np.zeros((2, 2, 3)))


class TestBoundary:
    def test_solid_cube_interior_excluded(self):
        mask = np.zeros((5, 5, 5), dtype=bool)
        mask[1:4, 1:4, 1:4] = True
        boundary = {tuple(p) for p in boundary_voxels(mask)}
        assert (2, 2, 2) not in boundary
        assert len(boundary) == 26

    def test_edge_voxels_are_boundary(self):
        mask = np.ones((3, 3, 3), dtype=bool)
        assert len(boundary_voxels(mask)) == 26


class TestHausdorff:
    def test_single_voxels(self):
        a = np.zeros((4, 5, 2), dtype=bool)
        b = np.zeros((4, 5, 2), dtype=bool)
        a[0, 0, 0] = True
        b[3, 4, 0] = True
        assert hausdorff_distance(a, b) == pytest.approx(5.0)
        assert hausdorff_distance(a, b, spacing=(2.0, 1.0, 1.0)) == pytest.approx(np.sqrt(52.0))

    def test_identical_masks(self, rng):
        mask = rng.random((6, 6, 6)) > 0.6
        assert hausdorff_distance(mask, mask) == 0.0

    def test_empty_is_undefined(self):
        a = np.zeros((3, 3, 3), dtype=bool)
        b = a.copy()
        b[1, 1, 1] = True
        assert hausdorff_distance(a, b) is None
        assert hausdorff_distance(b, a) is None

    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_matches_brute_force_on_thin_masks(self, seed):
        # Masks without interior voxels: every voxel is a boundary voxel.
        rng = np.random.default_rng(seed)
        a = np.zeros((6, 6, 1), dtype=bool)
        b = np.zeros((6, 6, 1), dtype=bool)
        for i, j in itertools.product(range(6), range(6)):
            a[i, j, 0] = rng.random() < 0.3
            b[i, j, 0] = rng.random() < 0.3
        a[0, 0, 0] = b[5, 5, 0] = True
        spacing = (1.0, 0.5, 2.0)
        assert hausdorff_distance(a, b, spacing) == pytest.approx(_brute_hausdorff(a, b, spacing))

    def test_matches_brute_force_on_random_masks(self, rng):
        spacing = np.array([1.0, 0.7, 1.5])
        for _ in range(200):
            density = rng.uniform(0.1, 0.9)
            a = rng.random((5, 6, 4)) < density
            b = rng.random((5, 6, 4)) < density
            a[tuple(rng.integers(0, 4, size=3))] = True
            b[tuple(rng.integers(0, 4, size=3))] = True
            pa = _brute_boundary(a) * spacing
            pb = _brute_boundary(b) * spacing
            d = np.linalg.norm(pa[:, None, :] - pb[None, :, :], axis=-1)
            expected = max(d.min(axis=1).max(), d.min(axis=0).max())
            assert hausdorff_distance(a, b, tuple(spacing)) == pytest.approx(expected)

    def test_spacing_rank(self):
        mask = np.ones((2, 2, 2), dtype=bool)
        with pytest.raises(ShapeError):
            hausdorff_distance(mask, mask, spacing=(1.0, 1.0))
