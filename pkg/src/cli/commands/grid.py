"""
grid 子命令：預先計算切平面區塊取樣網格
"""
from src.cli.commands import add_output, emit, storage
from src.core.patch_sampler import PatchGridConfig, precompute_grid
from src.utils.binary_formats import write_grid


def register(subparsers) -> None:
    grid = subparsers.add_parser("grid", help="patch sampling grids")
    actions = grid.add_subparsers(dest="action", required=True)

    pre = actions.add_parser("precompute", help="precompute the N x N tangent-plane sampling grid")
    pre.add_argument("--camera", required=True, help="calibration JSON")
    pre.add_argument("--patches", type=int, default=None, help="patches per side N")
    pre.add_argument("--resolution", type=int, default=None, help="samples per patch side M")
    pre.add_argument("--offset", type=float, default=None, help="orientation offset d in pixels")
    pre.add_argument("--side", type=float, default=None, help="tangent-plane patch side l")
    add_output(pre)
    pre.set_defaults(handler=precompute)


def precompute(args) -> int:
    camera = storage.load_camera(args.camera)
    config = PatchGridConfig.from_settings(
        n_patches_per_side=args.patches,
        patch_resolution=args.resolution,
        orientation_offset=args.offset,
        patch_side=args.side,
        image_height=camera.height,
        image_width=camera.width,
    )
    grid = precompute_grid(camera, config)
    write_grid(args.output, grid)
    emit("cli.grid.written", path=args.output, patches=config.n_patches, resolution=config.patch_resolution)
    return 0
