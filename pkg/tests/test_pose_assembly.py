import numpy as np
import pytest
from numpy.testing import assert_allclose

from src.core.errors import DomainError, GeometryError, ShapeError
from src.core.patch_sampler import TangentFrame
from src.core.pose_assembly import (
    HandEstimate,
    assemble,
    attach_hand,
    hand_frame,
    hand_rotation,
    rest_hand_offsets,
)
from src.core.skeleton import L_WRIST, LEFT_HAND, R_WRIST, RIGHT_HAND, body_layout, hand_layout


@pytest.fixture
def body():
    return body_layout().rest_pose(root=(0.0, 0.0, 1.0))


@pytest.fixture
def local_hand():
    rest = hand_layout().rest_pose()
    return rest + np.array([0.01, -0.02, 0.3])


class TestAttachHand:
    def test_wrist_lands_on_body_wrist(self, local_hand):
        out = attach_hand(local_hand, np.eye(3), [1.0, 2.0, 3.0])
        assert_allclose(out[0], [1.0, 2.0, 3.0])

    def test_rigid(self, local_hand):
        angle = 0.7
        rotation = np.array([[np.cos(angle), -np.sin(angle), 0.0], [np.sin(angle), np.cos(angle), 0.0], [0.0, 0.0, 1.0]])
        out = attach_hand(local_hand, rotation, np.zeros(3))
        assert_allclose(out, (local_hand - local_hand[0]) @ rotation.T, atol=1e-12)

    def test_shape(self):
        with pytest.raises(ShapeError):
            attach_hand(np.zeros((20, 3)), np.eye(3), np.zeros(3))


class TestHandRotation:
    def test_frame_at_principal_point(self, camera):
        rotation = hand_rotation(hand_frame((128.0, 128.0), 40.0, camera))
        assert_allclose(rotation[:, 2], [0.0, 0.0, 1.0], atol=1e-12)
        assert_allclose(rotation[:, 0], [1.0, 0.0, 0.0], atol=1e-9)

    def test_rejects_skewed_frame(self):
        frame = TangentFrame(
            center_pixel=(0.0, 0.0),
            sphere_point=np.array([0.0, 0.0, 1.0]),
            x_axis=np.array([1.0, 0.0, 0.0]),
            y_axis=np.array([1.0, 1.0, 0.0]) / np.sqrt(2.0),
            z_axis=np.array([0.0, 0.0, 1.0]),
            offset_point=np.array([0.1, 0.0, 1.0]),
        )
        with pytest.raises(GeometryError):
            hand_rotation(frame)

    def test_rejects_left_handed_frame(self):
        frame = TangentFrame(
            center_pixel=(0.0, 0.0),
            sphere_point=np.array([0.0, 0.0, 1.0]),
            x_axis=np.array([1.0, 0.0, 0.0]),
            y_axis=np.array([0.0, -1.0, 0.0]),
            z_axis=np.array([0.0, 0.0, 1.0]),
            offset_point=np.array([0.1, 0.0, 1.0]),
        )
        with pytest.raises(GeometryError):
            hand_rotation(frame)


class TestAssemble:
    def test_missing_hands_use_rest_pose(self, body):
        pose = assemble(body, np.full(15, 0.001), None, None)
        assert pose.joints.shape == (57, 3)
        assert pose.valid == {"body": True, "left": False, "right": False}
        assert_allclose(pose.joints[LEFT_HAND], body[L_WRIST] + rest_hand_offsets(LEFT_HAND))
        assert_allclose(pose.uncertainty[LEFT_HAND], 0.05)
        assert_allclose(pose.uncertainty[RIGHT_HAND], 0.05)
        assert_allclose(pose.uncertainty[:15], 0.001)

    def test_wrists_are_identical(self, body, local_hand, camera):
        frame = hand_frame((100.0, 150.0), 30.0, camera)
        estimate = HandEstimate(joints=local_hand, uncertainty=np.full(21, 0.002), frame=frame)
        pose = assemble(body, np.zeros(15), estimate, None)
        assert np.array_equal(pose.joints[LEFT_HAND.start], body[L_WRIST])
        assert np.array_equal(pose.joints[RIGHT_HAND.start], body[R_WRIST])
        assert pose.valid["left"] and not pose.valid["right"]
        assert_allclose(pose.uncertainty[LEFT_HAND], 0.002)

    def test_present_hand_keeps_its_shape(self, body, local_hand, camera):
        frame = hand_frame((160.0, 90.0), 30.0, camera)
        estimate = HandEstimate(joints=local_hand, uncertainty=np.zeros(21), frame=frame)
        pose = assemble(body, np.zeros(15), None, estimate)
        hand = pose.joints[RIGHT_HAND]
        assert_allclose(np.linalg.norm(hand - hand[0], axis=-1),
                        np.linalg.norm(local_hand - local_hand[0], axis=-1), atol=1e-12)

    def test_respects_configured_ceiling(self, body):
        from src.core.settings import settings
        settings.set("heatmap.max_uncertainty", 0.1)
        pose = assemble(body, np.zeros(15), None, None)
        assert_allclose(pose.uncertainty[LEFT_HAND], 0.1)

    def test_uncertainty_is_clipped_to_the_ceiling(self, body, local_hand, camera):
        hand_u = np.linspace(-0.1, 0.3, 21)
        estimate = HandEstimate(joints=local_hand, uncertainty=hand_u, frame=hand_frame((100.0, 150.0), 30.0, camera))
        body_u = np.full(15, 0.2)
        body_u[0] = -1.0
        pose = assemble(body, body_u, estimate, None)
        assert pose.uncertainty.min() == 0.0
        assert pose.uncertainty.max() == 0.05
        assert_allclose(pose.uncertainty[LEFT_HAND], np.clip(hand_u, 0.0, 0.05))

    def test_non_finite_uncertainty(self, body):
        body_u = np.zeros(15)
        body_u[3] = np.nan
        with pytest.raises(DomainError, match="body"):
            assemble(body, body_u, None, None)

    def test_bad_body_shape(self):
        with pytest.raises(ShapeError):
            assemble(np.zeros((14, 3)), np.zeros(14), None, None)

    def test_bad_hand_estimate(self, camera):
        with pytest.raises(ShapeError):
            HandEstimate(joints=np.zeros((20, 3)), uncertainty=np.zeros(20),
                         frame=hand_frame((128.0, 128.0), 20.0, camera))

    def test_to_dict(self, body):
        data = assemble(body, np.zeros(15), None, None).to_dict()
        assert data["layout_version"] == 1
        assert len(data["joints"]) == 57
        assert data["valid"]["left"] is False
