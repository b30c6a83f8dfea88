import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from src.core.errors import CameraError, CameraValidationError, DomainError, OutOfFOVError
from src.core.fisheye_camera import (
    FisheyeCamera,
    eval_poly,
    fov_directions,
    make_equidistant_camera,
    validate,
)


class TestEvalPoly:
    def test_ascending_coefficients(self):
        assert eval_poly([1.0, 2.0, 3.0], 2.0) == pytest.approx(17.0)

    def test_vectorized(self):
        assert_allclose(eval_poly([0.0, 1.0], np.array([1.0, 2.0])), [1.0, 2.0])


class TestProjection:
    def test_optical_axis_hits_principal_point(self, camera):
        assert_allclose(camera.project([0.0, 0.0, 2.0]), [128.0, 128.0])

    def test_equidistant_radius(self, camera):
        theta = math.pi / 4
        uv = camera.project([math.sin(theta), 0.0, math.cos(theta)])
        assert uv[0] - 128.0 == pytest.approx(100.0 * theta, abs=1e-9)
        assert uv[1] == pytest.approx(128.0)

    def test_vertical_axis(self, camera):
        uv = camera.project([0.0, -1.0, 1.0])
        assert_allclose(uv, [128.0, 128.0 - 100.0 * math.pi / 4], atol=1e-9)
        assert uv[1] == pytest.approx(49.46, abs=5e-3)

    def test_radial_symmetry(self, camera):
        theta = math.radians(60.0)
        radii = []
        for phi in np.linspace(0.0, 2.0 * math.pi, 13):
            direction = [math.sin(theta) * math.cos(phi), math.sin(theta) * math.sin(phi), math.cos(theta)]
            offset = camera.project(direction) - camera.principal_point
            radii.append(np.linalg.norm(offset))
            assert_allclose(offset / np.linalg.norm(offset), [math.cos(phi), math.sin(phi)], atol=1e-9)
        assert_allclose(radii, radii[0], atol=1e-9)

    def test_point_beyond_ninety_degrees_projects(self, camera):
        theta = math.radians(93.0)
        uv = camera.project([math.sin(theta), 0.0, math.cos(theta)])
        assert uv[0] - 128.0 == pytest.approx(100.0 * theta, abs=1e-9)

    def test_outside_fov_raises_with_rho(self, camera):
        with pytest.raises(OutOfFOVError) as info:
            camera.project([0.0, 0.0, -1.0])
        assert info.value.rho == pytest.approx(-math.pi / 2)

    def test_origin_is_a_domain_error(self, camera):
        with pytest.raises(DomainError):
            camera.project([0.0, 0.0, 0.0])

    def test_non_finite_point(self, camera):
        with pytest.raises(DomainError):
            camera.project([np.nan, 0.0, 1.0])


class TestUnprojection:
    def test_principal_point_is_optical_axis(self, camera):
        assert_allclose(camera.unproject([128.0, 128.0], 1.5), [0.0, 0.0, 1.5], atol=1e-12)

    def test_norm_equals_distance(self, camera):
        pixels = np.array([[10.0, 200.0], [128.0, 50.0], [240.0, 240.0]])
        points = camera.unproject(pixels, np.array([0.5, 1.0, 2.0]))
        assert_allclose(np.linalg.norm(points, axis=-1), [0.5, 1.0, 2.0])

    @pytest.mark.parametrize("distance", [0.0, -1.0, np.inf])
    def test_bad_distance(self, camera, distance):
        with pytest.raises(DomainError):
            camera.unproject([128.0, 128.0], distance)

    def test_round_trip_within_tolerance(self, camera):
        report = validate(camera, samples=1000, tol_px=0.1)
        assert report.passed
        assert report.max_err <= 0.1

    def test_pixel_in_fov(self, camera):
        assert camera.pixel_in_fov([128.0, 128.0])
        # 半徑 1.7 f_c 超過 95 度
        assert not camera.pixel_in_fov([128.0 + 170.0, 128.0])


class TestFovDirections:
    def test_first_on_axis_last_on_rim(self):
        dirs = fov_directions(100, math.radians(95.0))
        assert_allclose(dirs[0], [0.0, 0.0, 1.0])
        assert math.acos(dirs[-1, 2]) == pytest.approx(math.radians(95.0))
        assert_allclose(np.linalg.norm(dirs, axis=-1), 1.0)


class TestConstruction:
    def test_theta_max_is_half_fov(self, camera):
        assert camera.theta_max == pytest.approx(math.radians(95.0))
        assert camera.image_size == (256, 256)

    def test_rejects_non_positive_derivative(self):
        with pytest.raises(CameraValidationError):
            FisheyeCamera(width=256, height=256, cx=128.0, cy=128.0,
                          forward_poly=(1.0,), backward_poly=(-1.0, 0.0))

    def test_rejects_empty_polynomial(self):
        with pytest.raises(CameraValidationError):
            FisheyeCamera(width=256, height=256, cx=128.0, cy=128.0,
                          forward_poly=(), backward_poly=(1.0,))

    def test_factory_rejects_bad_arguments(self):
        with pytest.raises(CameraError):
            make_equidistant_camera(-1.0, 256, 6)
        with pytest.raises(CameraError):
            make_equidistant_camera(100.0, 256, 1)

    def test_to_dict_round_trips(self, camera):
        rebuilt = FisheyeCamera(**camera.to_dict())
        assert rebuilt == camera
