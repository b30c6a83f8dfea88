"""
eval 子命令：以 MPJPE 系列指標比較預測與真值動作
"""
from src.cli.commands import add_output, emit, storage
from src.core.errors import ShapeError
from src.core.metrics import METRICS, evaluate_samples, evaluate_sequence
from src.core.skeleton import LEFT_HAND, N_BODY, RIGHT_HAND

JOINT_SETS = {
    "all": slice(None),
    "body": slice(0, N_BODY),
    "left_hand": LEFT_HAND,
    "right_hand": RIGHT_HAND,
}


def register(subparsers) -> None:
    parser = subparsers.add_parser("eval", help="evaluate predicted motions against ground truth")
    parser.add_argument("--pred", nargs="+", required=True, help="predicted motion JSON (several = samples)")
    parser.add_argument("--gt", required=True, help="ground-truth motion JSON")
    parser.add_argument("--metric", choices=METRICS, default="mpjpe")
    parser.add_argument("--joints", choices=sorted(JOINT_SETS), default="all", help="joint subset")
    parser.add_argument("--rigid", action="store_true", help="Procrustes alignment without scale")
    parser.add_argument("--per-frame", action="store_true", help="include per-frame values")
    add_output(parser, required=False, help_text="optional report JSON")
    parser.set_defaults(handler=evaluate_command)


def evaluate_command(args) -> int:
    """
    Raises:
        ShapeError: 預測與真值的幀數或關節數不同
    """
    subset = JOINT_SETS[args.joints]
    gt = storage.load_motion(args.gt).frames[:, subset]
    preds = [storage.load_motion(p).frames[:, subset] for p in args.pred]
    for path, pred in zip(args.pred, preds):
        if pred.shape != gt.shape:
            raise ShapeError(f"{path} has shape {pred.shape}, ground truth has {gt.shape}")

    with_scale = None if not args.rigid else False
    if len(preds) == 1:
        report = evaluate_sequence(preds[0], gt, args.metric, with_scale, per_frame=args.per_frame)
    else:
        report = evaluate_samples(preds, gt, args.metric, with_scale)

    if args.output:
        storage.save_report(report, args.output)
    emit("cli.eval.result", metric=report.metric, value=f"{report.value_mm:.3f}", frames=report.n_frames)
    if report.samples:
        emit("cli.eval.samples", samples=report.samples, mean=f"{report.mean_mm:.3f}", std=f"{report.std_mm:.3f}")
    return 0
