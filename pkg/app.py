"""
主程序入口
命令行工具：synth / train / eval / predict / roc
"""

import argparse
import json
import logging
import os
import sys

from dotenv import load_dotenv

load_dotenv()

logger = logging.getLogger("genconvit")

THREAD_ENV_VARS = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS", "NUMEXPR_NUM_THREADS")
DEFAULT_THREADS = 1

# 命令行参数到配置项（点分路径）的对应关系
FLAG_KEYS = {
    "preset": "model.preset",
    "seed": "seed",
    "threads": "threads",
    "data": "data.root",
    "epochs": "train.epochs",
    "lr": "train.lr",
    "weight_decay": "train.weight_decay",
    "batch_a": "train.batch_a",
    "batch_b": "train.batch_b",
    "aug_rate": "train.aug_rate",
    "workers": "train.workers",
    "frames_train": "data.frames_train",
    "frames_eval": "data.frames_eval",
    "sample_mode": "data.sample_mode",
    "split": "data.eval_split",
    "checkpoint_dir": "io.checkpoint_dir",
    "metrics_dir": "io.metrics_dir",
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="genconvit", description="GenConViT 深度伪造视频检测")
    parser.add_argument("--config", help="JSON 配置文件")
    parser.add_argument("--seed", type=int, help="随机种子")
    parser.add_argument("--preset", choices=("tiny", "toy"), help="模型规模预设")
    parser.add_argument("--threads", type=int, help="数学库线程数")
    parser.add_argument("--log-level", default=None, help="日志级别，默认读取 GENCONVIT_LOG_LEVEL")
    parser.add_argument("--no-progress", action="store_true", help="关闭进度条")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="生成合成数据集")
    p.add_argument("--videos", type=int, default=100, help="每个类别的视频数")
    p.add_argument("--frames", type=int, default=15, help="每个视频的帧数")
    p.add_argument("--out", required=True, help="输出目录")
    p.add_argument("--size", type=int, default=64, help="图片边长")
    p.add_argument("--real-multiplier", type=int, default=1, help="真实视频帧数倍数")

    p = sub.add_parser("train", help="训练网络 A 和 B")
    p.add_argument("--data", help="数据集根目录")
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--weight-decay", type=float)
    p.add_argument("--batch-a", type=int)
    p.add_argument("--batch-b", type=int)
    p.add_argument("--aug-rate", type=float)
    p.add_argument("--frames-train", type=int)
    p.add_argument("--frames-eval", type=int)
    p.add_argument("--sample-mode", choices=("uniform", "first", "random"))
    p.add_argument("--workers", type=int)
    p.add_argument("--checkpoint-dir")
    p.add_argument("--metrics-dir")
    p.add_argument("--resume", help="从检查点续训")

    p = sub.add_parser("eval", help="在带标签的划分上评估")
    p.add_argument("--checkpoint", help="检查点路径，默认 <checkpoint_dir>/last.ckpt")
    p.add_argument("--data", help="数据集根目录")
    p.add_argument("--split", choices=("train", "valid", "test"))
    p.add_argument("--frames-eval", type=int)
    p.add_argument("--sample-mode", choices=("uniform", "first", "random"))
    p.add_argument("--workers", type=int)
    p.add_argument("--metrics-dir", help="报告输出目录")
    p.add_argument("--checkpoint-dir")

    p = sub.add_parser("predict", help="预测一个视频的帧目录")
    p.add_argument("video_dir", help="帧目录")
    p.add_argument("--checkpoint", help="检查点路径，默认 <checkpoint_dir>/last.ckpt")
    p.add_argument("--net", choices=("a", "b", "both"), default="both")
    p.add_argument("--frames-eval", type=int)
    p.add_argument("--sample-mode", choices=("uniform", "first", "random"))
    p.add_argument("--checkpoint-dir")

    p = sub.add_parser("roc", help="由 scores.csv 重新计算 ROC/AUC")
    p.add_argument("--scores", required=True, help="eval 输出的 scores.csv")
    p.add_argument("--out", required=True, help="输出目录")
    p.add_argument("--column", default="score", help="使用的分数列")
    return parser


def resolve_threads(args: argparse.Namespace) -> int:
    """
    在导入 numpy 之前确定线程数，优先级与 load_run_config 一致：
    --threads > 配置文件 threads > GENCONVIT_THREADS > 1
    """
    if args.threads is not None:
        return args.threads
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as f:
                value = json.load(f).get("threads")
            if value is not None:
                return int(value)
        except (OSError, ValueError, TypeError, AttributeError):
            pass  # 配置文件的问题由 load_run_config 报告
    return int(os.environ.get("GENCONVIT_THREADS") or DEFAULT_THREADS)


def set_thread_env(threads: int) -> None:
    """限制底层数学库线程数；须在导入 numpy 之前调用才生效"""
    for var in THREAD_ENV_VARS:
        os.environ[var] = str(threads)


def collect_overrides(args: argparse.Namespace) -> dict:
    return {key: getattr(args, flag) for flag, key in FLAG_KEYS.items() if getattr(args, flag, None) is not None}


def _checkpoint_path(args, run) -> str:
    from services.train_service import LAST_CHECKPOINT

    return args.checkpoint or os.path.join(run.io.checkpoint_dir, LAST_CHECKPOINT)


def cmd_synth(args, run) -> int:
    from services.synth_service import SynthService

    result = SynthService().generate(args.out, args.videos, args.frames, run.seed,
                                     size=args.size, split_ratios=run.data.split,
                                     real_multiplier=args.real_multiplier)
    if not result["success"]:
        print(f"错误: {result['error']}", file=sys.stderr)
        return result["exit_code"]
    print(f"real_images={result['real_images']} fake_images={result['fake_images']} "
          f"videos={result['videos']} manifest={result['manifest']}")
    print(result["summary"].to_string(index=False))
    print(f"tree_hash={result['tree_hash']}")
    return 0


def cmd_train(args, run) -> int:
    from services.train_service import TrainService

    result = TrainService(run, progress=not args.no_progress).run(resume=args.resume)
    if not result["success"]:
        print(f"错误: {result['error']}", file=sys.stderr)
        return result["exit_code"]
    print(f"metrics={result['metrics_csv']} checkpoint={result['checkpoint']} epochs_run={result['epochs_run']}")
    return 0


def _load_model(path):
    from services.model_factory import ModelFactory
    from utils.errors import exit_code_for

    try:
        return ModelFactory.load_model(path), 0
    except Exception as e:
        logger.error(f"无法载入检查点 {path}: {e}")
        print(f"错误: {e}", file=sys.stderr)
        return None, exit_code_for(e)


def cmd_eval(args, run) -> int:
    from services.eval_service import EvalService

    model, code = _load_model(_checkpoint_path(args, run))
    if model is None:
        return code
    service = EvalService(model, workers=max(run.train.workers, 1), progress=not args.no_progress)
    result = service.evaluate_split(run.data.root, run.io.metrics_dir, run.data.eval_split,
                                    run.data.split, run.seed, run.data.frames_eval, run.data.sample_mode)
    if not result["success"]:
        print(f"错误: {result['error']}", file=sys.stderr)
        return result["exit_code"]
    combined = result["report"]["combined"]
    auc = combined["auc"]
    print(f"videos={result['report']['videos']} accuracy={combined['accuracy']:.4f} f1={combined['f1']:.4f} "
          f"auc={'n/a' if auc is None else f'{auc:.4f}'} report={result['report_path']}")
    return 0


def cmd_predict(args, run) -> int:
    from services.predict_service import PredictService

    model, code = _load_model(_checkpoint_path(args, run))
    if model is None:
        return code
    result = PredictService(model).predict_directory(args.video_dir, run.data.frames_eval, args.net,
                                                     run.data.sample_mode, run.seed)
    if not result["success"]:
        print(f"错误: {result['error']}", file=sys.stderr)
        return result["exit_code"]
    print(result["line"])
    return 0


def cmd_roc(args, run) -> int:
    from services.eval_service import roc_from_scores

    result = roc_from_scores(args.scores, args.out, args.column)
    if not result["success"]:
        print(f"错误: {result['error']}", file=sys.stderr)
        return result["exit_code"]
    print(f"auc={result['auc']:.6f} svg={result['roc']['svg']} csv={result['roc']['csv']}")
    return 0


COMMANDS = {
    "synth": cmd_synth,
    "train": cmd_train,
    "eval": cmd_eval,
    "predict": cmd_predict,
    "roc": cmd_roc,
}


def main(argv=None) -> int:
    """
    命令行入口

    返回:
        int: 退出码 0 成功，1 未预期错误，2 参数或路径无效，3 空目录，4 缺少数据或检查点，5 损失非有限
    """
    parser = build_parser()
    args = parser.parse_args(argv)
    set_thread_env(resolve_threads(args))

    import config
    from utils.errors import exit_code_for

    logging.basicConfig(level=(args.log_level or config.LOG_LEVEL).upper(), format=config.LOG_FORMAT)
    try:
        run = config.load_run_config(args.config, collect_overrides(args))
    except Exception as e:
        print(f"错误: {e}", file=sys.stderr)
        return exit_code_for(e)
    logger.info(f"命令 {args.command}: preset={run.model.preset} seed={run.seed} threads={run.threads}")
    try:
        return COMMANDS[args.command](args, run)
    except Exception as e:
        logger.exception(f"未预期的错误: {e}")
        return exit_code_for(e)


if __name__ == "__main__":
    sys.exit(main())
