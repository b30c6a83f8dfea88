import numpy as np
import pytest
from numpy.testing import assert_allclose
from scipy.spatial.transform import Rotation

from src.core.errors import AlignmentError, DomainError, MetricError, ShapeError
from src.core.metrics import (
    ba_mpjpe,
    evaluate_samples,
    evaluate_sequence,
    hand_root_mpjpe,
    layout_for,
    mpjpe,
    pa_mpjpe,
    procrustes_align,
)
from src.core.skeleton import R_HIP, L_HIP, body_layout, hand_layout


@pytest.fixture
def pose(rng):
    return rng.normal(0.0, 0.3, size=(15, 3))


class TestMpjpe:
    def test_three_four_five(self):
        pred = np.zeros((2, 3))
        gt = np.array([[0.003, 0.004, 0.0], [0.0, 0.0, 0.0]])
        assert mpjpe(pred, gt) == pytest.approx(2.5)

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            mpjpe(np.zeros((15, 3)), np.zeros((14, 3)))


class TestProcrustes:
    def test_similarity_copy_aligns_exactly(self, pose):
        rotation = Rotation.from_rotvec([0.3, -1.2, 0.5]).as_matrix()
        pred = 1.7 * pose @ rotation.T + np.array([0.4, -0.2, 1.0])
        result = procrustes_align(pred, pose)
        assert result.residual_mm == pytest.approx(0.0, abs=1e-9)
        assert result.scale == pytest.approx(1.0 / 1.7)
        assert_allclose(result.apply(pred), pose, atol=1e-12)
        assert pa_mpjpe(pred, pose) == pytest.approx(0.0, abs=1e-9)

    def test_rigid_alignment_keeps_scale_error(self, pose):
        result = procrustes_align(1.5 * pose, pose, with_scale=False)
        assert result.scale is None
        assert result.residual_mm > 1.0

    def test_never_reflects(self, pose):
        mirrored = pose * np.array([-1.0, 1.0, 1.0])
        result = procrustes_align(mirrored, pose)
        assert np.linalg.det(result.rotation) == pytest.approx(1.0)
        assert result.residual_mm > 0.0

    def test_collinear_points(self):
        line = np.outer(np.arange(5.0), [1.0, 2.0, 3.0])
        with pytest.raises(AlignmentError, match="collinear"):
            procrustes_align(line, line)

    def test_too_few_points(self):
        with pytest.raises(AlignmentError):
            procrustes_align(np.eye(3)[:2], np.eye(3)[:2])

    def test_sequence_is_aligned_per_frame(self, pose):
        rotations = Rotation.from_rotvec([[0.0, 0.5, 0.0], [1.0, 0.0, 0.0]]).as_matrix()
        pred = np.stack([pose @ r.T for r in rotations])
        gt = np.stack([pose, pose])
        assert pa_mpjpe(pred, gt) == pytest.approx(0.0, abs=1e-9)


class TestBoneAligned:
    def test_rescaled_bones_score_zero(self):
        layout = body_layout()
        gt = layout.rest_pose() @ Rotation.from_rotvec([0.2, 0.9, -0.1]).as_matrix().T
        factors = np.linspace(0.8, 1.3, 15)
        factors[[R_HIP, L_HIP]] = 1.1
        pred = layout.normalize_bones(gt, layout.bone_lengths * factors)
        assert mpjpe(pred, gt) > 1.0
        assert ba_mpjpe(pred, gt) == pytest.approx(0.0, abs=1e-6)

    def test_hand_layout(self):
        layout = hand_layout()
        gt = layout.rest_pose()
        gt[:, 2] += np.linspace(0.0, 0.01, 21)
        factors = np.full(21, 1.2)
        pred = layout.normalize_bones(gt, layout.bone_lengths * factors)
        assert ba_mpjpe(pred, gt) == pytest.approx(0.0, abs=1e-6)

    def test_zero_length_bone(self):
        gt = body_layout().rest_pose()
        pred = gt.copy()
        pred[5] = pred[4]
        with pytest.raises(MetricError):
            ba_mpjpe(pred, gt)

    def test_unknown_layout(self):
        with pytest.raises(ShapeError):
            layout_for(10)


class TestHandRoot:
    def test_translation_is_ignored(self, rng):
        hand = rng.normal(0.0, 0.05, size=(21, 3))
        err, pa = hand_root_mpjpe(hand + np.array([0.3, 0.1, -0.2]), hand)
        assert err == pytest.approx(0.0, abs=1e-9)
        assert pa == pytest.approx(0.0, abs=1e-6)

    def test_wrong_joint_count(self):
        with pytest.raises(ShapeError):
            hand_root_mpjpe(np.zeros((15, 3)), np.zeros((15, 3)))


class TestReports:
    def test_plain_metric_has_no_alignment(self, pose):
        report = evaluate_sequence(np.stack([pose, pose]), np.stack([pose, pose + 0.001]), per_frame=True)
        assert report.alignment == "none"
        assert report.n_frames == 2
        assert report.per_frame[0] == pytest.approx(0.0)
        assert report.value_mm == pytest.approx(0.5 * np.sqrt(3.0))

    def test_alignment_names(self, pose):
        seq = pose[None]
        assert evaluate_sequence(seq, seq, "pa_mpjpe").alignment == "similarity"
        assert evaluate_sequence(seq, seq, "pa_mpjpe", with_scale=False).alignment == "rigid"

    def test_unknown_metric(self, pose):
        with pytest.raises(DomainError):
            evaluate_sequence(pose, pose, "nope")

    def test_samples(self, pose):
        gt = pose[None]
        preds = [gt + 0.001, gt + 0.003]
        report = evaluate_samples(preds, gt)
        assert report.samples == 2
        assert report.mean_mm == pytest.approx(2.0 * np.sqrt(3.0))
        assert report.std_mm == pytest.approx(np.sqrt(3.0))
        assert report.to_dict()["samples"] == 2

    def test_no_samples(self, pose):
        with pytest.raises(DomainError):
            evaluate_samples([], pose[None])
