"""
camera 子命令：建立合成等距相機、驗證校正檔
"""
import logging

from src.cli.commands import add_output, emit, storage
from src.core.errors import CameraValidationError
from src.core.fisheye_camera import make_equidistant_camera, validate
from src.core.settings import settings

logger = logging.getLogger(__name__)


def register(subparsers) -> None:
    camera = subparsers.add_parser("camera", help="fisheye camera tools")
    actions = camera.add_subparsers(dest="action", required=True)

    make = actions.add_parser("make-equidistant", help="build a synthetic equidistant fisheye camera")
    make.add_argument("--focal", type=float, required=True, help="focal length f_c in pixels")
    make.add_argument("--size", type=int, required=True, help="square image side in pixels")
    make.add_argument("--degree", type=int, default=6, help="backward polynomial degree")
    make.add_argument("--fov", type=float, default=None, help="full field of view in degrees")
    add_output(make)
    make.set_defaults(handler=make_equidistant)

    check = actions.add_parser("validate", help="project/unproject round trip over the field of view")
    check.add_argument("camera", help="calibration JSON")
    check.add_argument("--samples", type=int, default=None, help="number of directions")
    check.add_argument("--tol-px", type=float, default=0.1, help="maximum allowed error in pixels")
    add_output(check, required=False, help_text="optional report JSON")
    check.set_defaults(handler=validate_camera)


def make_equidistant(args) -> int:
    camera = make_equidistant_camera(args.focal, args.size, args.degree, fov_deg=args.fov)
    storage.save_camera(camera, args.output)
    emit("cli.camera.created", path=args.output, fov=camera.fov_deg)
    return 0


def validate_camera(args) -> int:
    """
    Raises:
        CameraValidationError: 最大誤差超過容許值
    """
    camera = storage.load_camera(args.camera)
    samples = args.samples or int(settings.get("camera.validate_samples", 1000))
    report = validate(camera, samples=samples, tol_px=args.tol_px)
    if args.output:
        storage.write_json(args.output, {
            "max_err": report.max_err,
            "mean_err": report.mean_err,
            "tol_px": report.tol_px,
            "samples": report.samples,
            "passed": report.passed,
        })

    if not report.passed:
        raise CameraValidationError(
            f"round-trip error {report.max_err:.4f} px exceeds {report.tol_px} px"
        )
    emit("cli.camera.validate_pass", max_err=f"{report.max_err:.4f}", mean_err=f"{report.mean_err:.4f}",
         samples=report.samples)
    return 0
