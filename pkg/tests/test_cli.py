import json
import struct

import numpy as np
import pytest

from src.cli import run
from src.core.fisheye_camera import make_equidistant_camera
from src.core.motion_prior import MotionSequence
from src.core.skeleton import whole_body_layout
from src.core.storage import StorageManager
from src.core.synth import render_heatmap
from src.utils.binary_formats import read_patches, write_heatmap
from src.utils.image_io import save_image


@pytest.fixture
def storage():
    return StorageManager()


@pytest.fixture
def camera_file(tmp_path):
    path = tmp_path / "cam.json"
    assert run(["camera", "make-equidistant", "--focal", "120", "--size", "256", "-o", str(path)]) == 0
    return path


def _motion(offset: float = 0.0) -> MotionSequence:
    rest = whole_body_layout().rest_pose(root=(0.0, 0.0, 1.0))
    frames = np.stack([rest, rest + [0.0, 0.0, 0.01]]) + [offset, 0.0, 0.0]
    return MotionSequence(frames=frames, fps=30.0)


class TestUsage:
    def test_version(self, capsys):
        assert run(["--version"]) == 0
        assert "ego_mocap" in capsys.readouterr().out

    def test_no_command(self):
        assert run([]) == 2

    def test_unknown_flag(self):
        assert run(["camera", "make-equidistant", "--focal", "100", "--size", "256", "-o", "x.json", "--bogus"]) == 2

    def test_refine_requires_seed(self, tmp_path):
        assert run(["prior", "refine", str(tmp_path / "m.json"), "--model", "p.egdm", "-o", "out.json"]) == 2

    def test_bad_config_file(self, tmp_path, capsys):
        assert run(["--config", str(tmp_path / "none.json"), "prior", "weight-curve"]) == 1
        assert "ConfigError" in capsys.readouterr().err


class TestCameraCommands:
    def test_make_then_validate(self, camera_file, tmp_path, capsys):
        report = tmp_path / "report.json"
        assert run(["camera", "validate", str(camera_file), "--tol-px", "0.5", "-o", str(report)]) == 0
        assert "Round trip OK" in capsys.readouterr().out
        assert json.loads(report.read_text(encoding="utf-8"))["passed"] is True

    def test_mismatched_polynomials_fail(self, tmp_path, storage, capsys):
        good = make_equidistant_camera(120.0, 256, 6).to_dict()
        good["forward_poly"] = list(make_equidistant_camera(100.0, 256, 6).forward_poly)
        path = tmp_path / "bad.json"
        storage.write_json(path, good)
        assert run(["camera", "validate", str(path)]) == 1
        assert "CameraValidationError" in capsys.readouterr().err


class TestPatchCommands:
    def test_grid_then_extract(self, camera_file, tmp_path):
        grid = tmp_path / "grid.egsg"
        image = save_image(np.full((256, 256), 0.5), tmp_path / "img.png")
        out = tmp_path / "p.egpt"
        preview = tmp_path / "preview.png"
        assert run(["grid", "precompute", "--camera", str(camera_file), "--patches", "4", "--resolution", "4",
                    "-o", str(grid)]) == 0
        assert run(["patches", "extract", str(image), "--grid", str(grid), "--preview", str(preview),
                    "-o", str(out)]) == 0
        patches = read_patches(out)
        assert patches.shape == (16, 4, 4, 1)
        assert preview.exists()

    def test_grid_version_mismatch(self, camera_file, tmp_path, capsys):
        grid = tmp_path / "grid.egsg"
        image = save_image(np.zeros((256, 256)), tmp_path / "img.png")
        run(["grid", "precompute", "--camera", str(camera_file), "--patches", "2", "--resolution", "2",
             "-o", str(grid)])
        data = bytearray(grid.read_bytes())
        struct.pack_into("<I", data, 4, 9)
        grid.write_bytes(bytes(data))
        assert run(["patches", "extract", str(image), "--grid", str(grid), "-o", str(tmp_path / "p.egpt")]) == 1
        assert "FormatVersionError" in capsys.readouterr().err

    def test_hand_crop(self, camera_file, tmp_path):
        image = save_image(np.full((256, 256, 3), 0.25), tmp_path / "img.png")
        out = tmp_path / "hand.egpt"
        assert run(["patches", "hand-crop", str(image), "--camera", str(camera_file), "--center", "150", "140",
                    "--bbox", "40", "--resolution", "8", "-o", str(out)]) == 0
        assert read_patches(out).shape == (1, 8, 8, 3)


class TestHeatmapAndAssemble:
    def test_decode_then_assemble(self, camera_file, tmp_path, storage):
        camera = storage.load_camera(camera_file)
        joints = whole_body_layout().rest_pose(root=(0.0, 0.0, 1.0))[:15]
        joints[:, 2] = 1.0
        heatmap, valid = render_heatmap(joints, camera, (16, 16, 16), 1.0, (0.1, 2.1))
        assert valid.all()
        write_heatmap(tmp_path / "hm" / "frame_00000.eghm", heatmap)

        decoded = tmp_path / "decoded.json"
        assert run(["heatmap", "decode", str(tmp_path / "hm"), "--camera", str(camera_file), "-o", str(decoded)]) == 0
        frames = storage.load_decoded(decoded)
        assert frames[0]["xyz"].shape == (15, 3)

        hands = tmp_path / "hands.json"
        storage.save_hand_estimates([{"left": None, "right": None}], hands)
        motion = tmp_path / "motion.json"
        assert run(["assemble", "--decoded", str(decoded), "--hands", str(hands), "--camera", str(camera_file),
                    "--poses-dir", str(tmp_path / "poses"), "-o", str(motion)]) == 0
        seq = storage.load_motion(motion)
        assert seq.frames.shape == (1, 57, 3)
        assert np.allclose(seq.up_axis, [0.0, 0.0, -1.0])
        assert np.allclose(seq.uncertainty[0, 15:], 0.05)
        assert (tmp_path / "poses" / "pose_00000.json").exists()

    def test_frame_count_mismatch(self, camera_file, tmp_path, storage, capsys):
        decoded = tmp_path / "decoded.json"
        storage.write_json(decoded, {
            "format": "decoded_joints", "version": 1, "image_size": [256, 256],
            "frames": [{"uvd": [[0, 0, 1]] * 15, "xyz": [[0, 0, 1]] * 15, "uncertainty": [0.0] * 15}],
        })
        hands = tmp_path / "hands.json"
        storage.save_hand_estimates([{}, {}], hands)
        assert run(["assemble", "--decoded", str(decoded), "--hands", str(hands), "--camera", str(camera_file),
                    "-o", str(tmp_path / "m.json")]) == 1
        assert "ShapeError" in capsys.readouterr().err


    def test_decoded_frame_without_xyz(self, camera_file, tmp_path, storage, capsys):
        decoded = tmp_path / "decoded.json"
        storage.write_json(decoded, {
            "format": "decoded_joints", "version": 1, "image_size": [256, 256],
            "frames": [{"uvd": [[0, 0, 1]] * 15, "uncertainty": [0.0] * 15}],
        })
        assert run(["assemble", "--decoded", str(decoded), "--camera", str(camera_file),
                    "-o", str(tmp_path / "m.json")]) == 1
        assert "FormatError" in capsys.readouterr().err

    def test_hand_entry_without_joints(self, camera_file, tmp_path, storage, capsys):
        decoded = tmp_path / "decoded.json"
        storage.write_json(decoded, {
            "format": "decoded_joints", "version": 1, "image_size": [256, 256],
            "frames": [{"uvd": [[0, 0, 1]] * 15, "xyz": [[0, 0, 1]] * 15, "uncertainty": [0.0] * 15}],
        })
        hands = tmp_path / "hands.json"
        storage.save_hand_estimates([{"right": {"center": [150.0, 140.0], "bbox": 40.0}}], hands)
        assert run(["assemble", "--decoded", str(decoded), "--hands", str(hands), "--camera", str(camera_file),
                    "-o", str(tmp_path / "m.json")]) == 1
        assert "FormatError" in capsys.readouterr().err


class TestSynthCommands:
    def test_motion_dataset_is_reproducible(self, tmp_path, storage):
        for name in ("a", "b"):
            assert run(["synth", "motion", "--n", "2", "--seed", "5", "--length", "12",
                        "-o", str(tmp_path / name)]) == 0
        for rel in ("manifest.json", "seq_000/motion.json", "seq_001/motion.json"):
            assert (tmp_path / "a" / rel).read_bytes() == (tmp_path / "b" / rel).read_bytes()
        manifest = json.loads((tmp_path / "a" / "manifest.json").read_text(encoding="utf-8"))
        assert [s["family"] for s in manifest["sequences"]] == ["walk", "reach"]

    def test_unknown_family_is_a_usage_error(self, tmp_path):
        assert run(["synth", "motion", "--n", "1", "--seed", "0", "--families", "dance",
                    "-o", str(tmp_path)]) == 2

    def test_heatmaps(self, camera_file, tmp_path):
        data = tmp_path / "data"
        run(["synth", "motion", "--n", "1", "--seed", "5", "--length", "3", "-o", str(data)])
        assert run(["synth", "heatmaps", str(data), "--camera", str(camera_file), "--seed", "1",
                    "--dims", "8", "8", "8"]) == 0
        manifest = json.loads((data / "manifest.json").read_text(encoding="utf-8"))
        entry = manifest["sequences"][0]
        assert entry["heatmaps"] == "seq_000/heatmaps"
        assert len(list((data / "seq_000" / "heatmaps").iterdir())) == 3
        assert (data / entry["hands"]).exists()
        assert manifest["camera"] == str(camera_file)


class TestPriorAndEval:
    def test_weight_curve(self, tmp_path, capsys):
        out = tmp_path / "curve.json"
        assert run(["prior", "weight-curve", "--k", "1", "--u", "0.05", "--steps", "1000",
                    "--t", "50", "1000", "-o", str(out)]) == 0
        lines = capsys.readouterr().out.strip().splitlines()
        assert lines[0] == "Weight w(t) for u=0.05, T=1000"
        assert lines[1] == "t\tk=1"
        assert lines[2] == "50\t0.5000"
        assert lines[3] == "1000\t1.0000"
        assert json.loads(out.read_text(encoding="utf-8"))["curves"]["1"][0] == pytest.approx(0.5)

    def test_smooth(self, tmp_path, storage):
        src = storage.save_motion(_motion(), tmp_path / "m.json")
        out = tmp_path / "s.json"
        assert run(["prior", "smooth", str(src), "--sigma", "1", "-o", str(out)]) == 0
        assert storage.load_motion(out).frames.shape == (2, 57, 3)

    def test_eval(self, tmp_path, storage, capsys):
        gt = storage.save_motion(_motion(), tmp_path / "gt.json")
        pred = storage.save_motion(_motion(0.003), tmp_path / "pred.json")
        report = tmp_path / "report.json"
        assert run(["eval", "--pred", str(pred), "--gt", str(gt), "--per-frame", "-o", str(report)]) == 0
        assert "mpjpe: 3.000 mm over 2 frames" in capsys.readouterr().out
        data = json.loads(report.read_text(encoding="utf-8"))
        assert data["alignment"] == "none"
        assert data["per_frame"] == pytest.approx([3.0, 3.0])

    def test_eval_samples(self, tmp_path, storage, capsys):
        gt = storage.save_motion(_motion(), tmp_path / "gt.json")
        preds = [str(storage.save_motion(_motion(d), tmp_path / f"p{i}.json")) for i, d in enumerate((0.001, 0.003))]
        assert run(["eval", "--pred", *preds, "--gt", str(gt), "--joints", "body"]) == 0
        assert "2 samples: mean 2.000 mm, std 1.000 mm" in capsys.readouterr().out

    def test_eval_shape_mismatch(self, tmp_path, storage):
        gt = storage.save_motion(_motion(), tmp_path / "gt.json")
        short = MotionSequence(frames=_motion().frames[:1])
        pred = storage.save_motion(short, tmp_path / "pred.json")
        assert run(["eval", "--pred", str(pred), "--gt", str(gt)]) == 1

    def test_messages_follow_language(self, tmp_path, capsys):
        assert run(["--lang", "zh_TW", "prior", "smooth", str(tmp_path / "none.json"), "--sigma", "1",
                    "-o", str(tmp_path / "o.json")]) == 1
        assert "錯誤" in capsys.readouterr().err
