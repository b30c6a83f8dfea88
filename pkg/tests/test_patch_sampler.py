import numpy as np
import pytest
from numpy.testing import assert_allclose

from src.core.errors import ConfigError, DomainError, GeometryError, OutOfFOVError, ShapeError
from src.core.patch_sampler import (
    PatchGridConfig,
    corner_angles,
    extract_patches,
    grid_points,
    hand_crop_grid,
    patch_centers,
    precompute_grid,
    tangent_frame,
)


@pytest.fixture(scope="module")
def full_grid(grid_camera):
    return precompute_grid(grid_camera, PatchGridConfig())


class TestPatchCenters:
    def test_cell_centers(self):
        centers = patch_centers((256, 256), 16)
        assert centers.shape == (256, 2)
        assert_allclose(centers[0], [8.0, 8.0])
        # 第 i*N + j 列
        assert_allclose(centers[1 * 16 + 2], [24.0, 40.0])


class TestTangentFrame:
    def test_axes_are_right_handed_orthonormal(self, grid_camera):
        frame = tangent_frame((60.0, 200.0), 8.0, grid_camera)
        axes = frame.axes
        assert_allclose(axes.T @ axes, np.eye(3), atol=1e-12)
        assert np.linalg.det(axes) == pytest.approx(1.0)

    def test_offset_point_lies_on_tangent_plane(self, grid_camera):
        frame = tangent_frame((60.0, 200.0), 8.0, grid_camera)
        assert np.dot(frame.offset_point - frame.sphere_point, frame.z_axis) == pytest.approx(0.0, abs=1e-12)

    def test_offset_point_projects_to_shifted_pixel(self, grid_camera):
        frame = tangent_frame((100.0, 30.0), 8.0, grid_camera)
        assert_allclose(grid_camera.project(frame.offset_point), [108.0, 30.0], atol=0.1)

    def test_center_outside_fov(self, camera):
        # 半徑 170 像素，約 97 度
        with pytest.raises(OutOfFOVError):
            tangent_frame((128.0 + 170.0, 128.0), 8.0, camera)


class TestGridPoints:
    def test_symmetric_ladder(self, grid_camera):
        frame = tangent_frame((128.0, 128.0), 8.0, grid_camera)
        points = grid_points(frame, 4, 0.2)
        assert points.shape == (16, 3)
        assert_allclose(points.mean(axis=0), frame.sphere_point, atol=1e-12)
        # m = -(M-1)/2，步距 l / M
        assert_allclose(points[0], frame.sphere_point - 0.075 * frame.x_axis - 0.075 * frame.y_axis)


class TestPrecomputeGrid:
    def test_shape(self, full_grid):
        assert full_grid.pixel_coords.shape == (256 * 256, 2)
        assert full_grid.patch_coords.shape == (256, 16, 16, 2)
        assert len(full_grid.frames) == 256

    def test_orientation_offset_projects_exactly(self, full_grid, grid_camera):
        centers = patch_centers((256, 256), 16)
        for frame, center in zip(full_grid.frames, centers):
            assert_allclose(grid_camera.project(frame.offset_point), center + [8.0, 0.0], atol=0.1)

    def test_corner_angle_is_uniform(self, full_grid):
        angles = corner_angles(full_grid)
        assert angles is not None
        assert np.ptp(angles) <= 1e-9

    def test_deterministic(self, grid_camera, full_grid):
        again = precompute_grid(grid_camera, PatchGridConfig())
        assert np.array_equal(again.pixel_coords, full_grid.pixel_coords)

    def test_size_mismatch(self, grid_camera):
        with pytest.raises(ShapeError):
            precompute_grid(grid_camera, PatchGridConfig(image_height=128, image_width=128))

    def test_corner_patch_outside_fov_names_the_patch(self, camera):
        with pytest.raises(OutOfFOVError, match="patch 0,0"):
            precompute_grid(camera, PatchGridConfig())


class TestPatchGridConfig:
    def test_rejects_indivisible_image(self):
        with pytest.raises(ConfigError):
            PatchGridConfig(n_patches_per_side=3)

    def test_rejects_small_offset(self):
        with pytest.raises(ConfigError):
            PatchGridConfig(orientation_offset=0.5)

    def test_from_settings_overrides(self):
        cfg = PatchGridConfig.from_settings(n_patches_per_side=4, patch_resolution=None)
        assert cfg.n_patches_per_side == 4
        assert cfg.patch_resolution == 16


class TestExtractPatches:
    def test_constant_image(self, grid_camera):
        grid = precompute_grid(grid_camera, PatchGridConfig(n_patches_per_side=4, patch_resolution=8))
        image = np.full((256, 256, 3), 0.25)
        patches = extract_patches(image, grid)
        assert patches.shape == (16, 8, 8, 3)
        inside = (grid.pixel_coords >= 0).all(axis=1) & (grid.pixel_coords[:, 0] <= 255) & (grid.pixel_coords[:, 1] <= 255)
        flat = patches.reshape(-1, 3)
        assert_allclose(flat[inside], 0.25)
        assert_allclose(flat[~inside], 0.0)

    def test_bilinear_on_linear_ramp(self, grid_camera):
        grid = precompute_grid(grid_camera, PatchGridConfig(n_patches_per_side=2, patch_resolution=4))
        v, u = np.mgrid[0:256, 0:256].astype(np.float64)
        image = 0.001 * u + 0.002 * v
        patches = extract_patches(image, grid)[..., 0].reshape(-1)
        coords = grid.pixel_coords
        inside = (coords[:, 0] >= 0) & (coords[:, 0] <= 255) & (coords[:, 1] >= 0) & (coords[:, 1] <= 255)
        expected = 0.001 * coords[:, 0] + 0.002 * coords[:, 1]
        assert_allclose(patches[inside], expected[inside], atol=1e-9)

    def test_image_size_mismatch(self, grid_camera):
        grid = precompute_grid(grid_camera, PatchGridConfig(n_patches_per_side=2, patch_resolution=4))
        with pytest.raises(ShapeError):
            extract_patches(np.zeros((128, 128)), grid)


class TestHandCrop:
    def test_single_patch_covering_the_box(self, camera):
        grid, frame = hand_crop_grid((150.0, 140.0), 40.0, camera, 32)
        assert grid.config.n_patches == 1
        assert grid.pixel_coords.shape == (32 * 32, 2)
        side = 2.0 * np.linalg.norm(frame.offset_point - frame.sphere_point)
        assert grid.config.patch_side == pytest.approx(side)
        # 網格覆蓋偵測框的寬度
        span = np.ptp(grid.pixel_coords[:, 0])
        assert span == pytest.approx(40.0, rel=0.1)

    def test_tiny_box_still_valid(self, camera):
        grid, _ = hand_crop_grid((128.0, 128.0), 1.0, camera, 8)
        assert grid.config.orientation_offset == 1.0

    def test_rejects_empty_box(self, camera):
        with pytest.raises(DomainError):
            hand_crop_grid((128.0, 128.0), 0.0, camera, 8)


class TestDegenerate:
    def test_geometry_error_carries_patch(self):
        err = GeometryError("bad", patch=(2, 3))
        assert err.patch == (2, 3)
        assert "patch 2,3" in str(err)
