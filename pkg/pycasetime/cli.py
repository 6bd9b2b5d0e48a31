"""
pycasetime 命令行入口

子命令: validate, synth, train, predict, evaluate, sweep, figures
退出码: 0 成功，1 数据/校验失败，2 用法错误（参数、配置、文件缺失）
"""
import argparse
import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import pandas as pd

from . import __version__
from .config import RunConfig, load_run_config
from .core import CaseTimeStudy
from .data_model import read_dataset, scan_dataset, write_dataset
from .errors import CaseTimeError, InvalidConfig
from .predictors import MethodId, TreePredictor, load_predictor, save_predictor
from .synth import synth_generate, write_ground_truth
from .utils import ensure_dir, write_csv, write_json

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2

# validate 最多列出的行错误数
MAX_LISTED_ERRORS = 20


def _comma_list(text: str) -> List[str]:
    return [item.strip() for item in text.split(",") if item.strip()]


def _float_list(text: str) -> List[float]:
    try:
        return [float(item) for item in _comma_list(text)]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _add_data_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--data", help="input CSV (default: paths.input, else synthetic data)")
    parser.add_argument("--min-count", type=int, dest="min_count",
                        help="drop procedures with fewer cases (default 40)")


def _add_cv_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--methods", type=_comma_list, help="comma-separated methods, e.g. AVG,SCH,RFR-SCH")
    parser.add_argument("--repeats", type=int, help="CV repeats (default 5)")
    parser.add_argument("--folds", type=int, help="CV folds k (default 5)")
    parser.add_argument("--seed", type=int, help="random seed (default 0)")
    parser.add_argument("--no-stratify", action="store_true", help="plain shuffled folds")
    parser.add_argument("--jobs", type=int, help="parallel CV cells (-1 = all cores)")
    parser.add_argument("--p", type=float, help="relative tolerance p (default 0.2)")
    parser.add_argument("--m", type=float, help="tolerance floor m in minutes (default 15)")
    parser.add_argument("--M", type=float, dest="cap", help="tolerance cap M in minutes (default 60)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pycasetime",
        description="Surgical case duration prediction with tree ensembles",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-c", "--config", help="YAML run configuration")
    parser.add_argument("-v", "--verbose", action="count", default=0, help="-v info, -vv debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check a case CSV and report row errors")
    p.add_argument("csv", help="case CSV")
    p.add_argument("--lenient", action="store_true", help="allow empty expert predictions")

    p = sub.add_parser("synth", help="write a synthetic case CSV and its ground truth")
    p.add_argument("--out", required=True, help="output CSV")
    p.add_argument("--truth", help="ground-truth sidecar (default: <out>.truth.csv)")
    p.add_argument("--seed", type=int)
    p.add_argument("--n-procedures", type=int, dest="n_procedures")
    p.add_argument("--cases-per-procedure", type=int, dest="cases_per_procedure")
    p.add_argument("--n-surgeons", type=int, dest="n_surgeons")
    p.add_argument("--noise", type=float, dest="log_noise_sigma", help="log-duration noise sigma")
    p.add_argument("--expert-noise", type=float, dest="expert_noise_sigma")
    p.add_argument("--expert-bias", type=float, dest="expert_bias")

    p = sub.add_parser("train", help="fit one method and save the model")
    _add_data_args(p)
    p.add_argument("--method", required=True, help="method id, e.g. RFR-SCH")
    p.add_argument("--out", required=True, help="model file")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--export-tree", dest="export_tree", help="write the fitted tree as JSON (DTR only)")

    p = sub.add_parser("predict", help="apply a saved model to a case CSV")
    p.add_argument("--model", required=True, help="model file from 'train'")
    p.add_argument("--data", required=True, help="case CSV")
    p.add_argument("--out", required=True, help="predictions CSV (case_id, predicted_min)")

    p = sub.add_parser("evaluate", help="repeated k-fold cross-validation of all methods")
    _add_data_args(p)
    _add_cv_args(p)
    p.add_argument("--out-dir", dest="out_dir", help="report directory (default: paths.output_dir)")

    p = sub.add_parser("sweep", help="accuracy of each method across a grid of p")
    _add_data_args(p)
    _add_cv_args(p)
    p.add_argument("--grid", type=_float_list, help="comma-separated p values")
    p.add_argument("--out", required=True, help="sweep CSV")

    p = sub.add_parser("figures", help="write plot-ready data")
    _add_data_args(p)
    p.add_argument("--bins", type=int)
    p.add_argument("--procedure", help="histogram a single procedure")
    p.add_argument("--p", type=float)
    p.add_argument("--m", type=float)
    p.add_argument("--M", type=float, dest="cap")
    p.add_argument("--out-dir", dest="out_dir")

    return parser


def _overrides(args: argparse.Namespace) -> Dict[str, Any]:
    """命令行参数 -> RunConfig 覆盖项（None 表示未给出）"""
    get = lambda name: getattr(args, name, None)  # noqa: E731
    return {
        "methods": get("methods"),
        "min_procedure_count": get("min_count"),
        "metric": {"p": get("p"), "m": get("m"), "M": get("cap")},
        "cv": {
            "repeats": get("repeats"),
            "k": get("folds"),
            "seed": get("seed") if args.command in ("evaluate", "sweep") else None,
            "stratify": False if get("no_stratify") else None,
            "n_jobs": get("jobs"),
        },
        "synth": {
            "seed": get("seed") if args.command == "synth" else None,
            "n_procedures": get("n_procedures"),
            "cases_per_procedure": get("cases_per_procedure"),
            "n_surgeons": get("n_surgeons"),
            "log_noise_sigma": get("log_noise_sigma"),
            "expert_noise_sigma": get("expert_noise_sigma"),
            "expert_bias": get("expert_bias"),
        },
        "paths": {"input": get("data"), "output_dir": get("out_dir")},
        "sweep": {"p_grid": get("grid")},
        "figures": {"bins": get("bins"), "procedure": get("procedure")},
    }


def _make_study(cfg: RunConfig) -> CaseTimeStudy:
    kwargs = dict(
        metric=cfg.metric_params(),
        hyperparams=cfg.hyperparams(),
        min_procedure_count=cfg.min_procedure_count,
    )
    methods = cfg.method_ids()
    if cfg.paths.input is not None:
        require_expert = any(method.uses_expert for method in methods)
        study = CaseTimeStudy.from_csv(cfg.paths.input, require_expert=require_expert, **kwargs)
    else:
        print("No input CSV given, using synthetic data")
        study = CaseTimeStudy.from_synthetic(cfg.synth_config(), **kwargs)
    study.set_methods(methods)
    return study


def _evaluate(study: CaseTimeStudy, cfg: RunConfig):
    return study.evaluate(
        repeats=cfg.cv.repeats,
        k=cfg.cv.k,
        seed=cfg.cv.seed,
        stratify=cfg.cv.stratify,
        n_jobs=cfg.cv.n_jobs,
    )


# ==================== 子命令 ====================

def cmd_validate(args: argparse.Namespace, cfg: RunConfig) -> int:
    path = Path(args.csv)
    if not path.exists():
        raise FileNotFoundError(f"Dataset file not found: {path}")
    with open(path, "rb") as f:
        scan = scan_dataset(f, require_expert=not args.lenient)
    print(f"{path}: {scan.n_rows} rows, {len(scan.cases)} valid, {len(scan.errors)} errors")
    for error in scan.errors[:MAX_LISTED_ERRORS]:
        print(f"  {error}")
    if len(scan.errors) > MAX_LISTED_ERRORS:
        print(f"  ... {len(scan.errors) - MAX_LISTED_ERRORS} more")
    return EXIT_OK if scan.ok else EXIT_FAILURE


def cmd_synth(args: argparse.Namespace, cfg: RunConfig) -> int:
    result = synth_generate(cfg.synth_config())
    out = Path(args.out)
    truth = Path(args.truth) if args.truth else out.with_suffix(".truth.csv")
    ensure_dir(out.parent)
    with open(out, "w", encoding="utf-8", newline="") as f:
        write_dataset(result.dataset, f)
    ensure_dir(truth.parent)
    with open(truth, "w", encoding="utf-8", newline="") as f:
        write_ground_truth(result, f)
    print(f"Wrote {len(result.dataset)} synthetic cases to {out}")
    print(f"Ground truth: {truth}")
    return EXIT_OK


def cmd_train(args: argparse.Namespace, cfg: RunConfig) -> int:
    try:
        method = MethodId.parse(args.method)
    except CaseTimeError as e:
        print(f"--method: {e}", file=sys.stderr)
        return EXIT_USAGE
    if args.export_tree and method.family != "tree":
        print(f"--export-tree requires DTR or DTR-SCH, got {method.label}", file=sys.stderr)
        return EXIT_USAGE

    study = _make_study(cfg.model_copy(update={"methods": [method.value]}))
    predictor = study.train(method, seed=args.seed)
    save_predictor(predictor, args.out)
    print(f"Trained {method.label} on {len(study.dataset)} cases -> {args.out}")

    if args.export_tree:
        assert isinstance(predictor, TreePredictor)
        write_json(predictor.export(), args.export_tree)
        print(f"Tree structure: {args.export_tree}")
    return EXIT_OK


def cmd_predict(args: argparse.Namespace, cfg: RunConfig) -> int:
    predictor = load_predictor(args.model)
    ds = read_dataset(args.data, require_expert=predictor.method.uses_expert)
    predicted = predictor.predict_many(ds.cases)
    frame = pd.DataFrame({"case_id": [case.case_id for case in ds], "predicted_min": predicted})
    write_csv(frame, args.out)
    print(f"Wrote {len(frame)} {predictor.method.label} predictions to {args.out}")
    return EXIT_OK


def cmd_evaluate(args: argparse.Namespace, cfg: RunConfig) -> int:
    study = _make_study(cfg)
    report = _evaluate(study, cfg)
    out_dir = ensure_dir(cfg.paths.output_dir)
    write_json(report.to_dict(), out_dir / "report.json")
    write_csv(report.accuracy_frame(), out_dir / "accuracy.csv")
    write_csv(report.wins_frame(), out_dir / "wins.csv")
    if report.importance:
        write_csv(report.importance_frame(grouped=True), out_dir / "importance.csv")
        write_csv(report.importance_frame(grouped=False), out_dir / "importance_features.csv")
    study.print_summary()
    print(f"Report written to {out_dir}")
    return EXIT_OK


def cmd_sweep(args: argparse.Namespace, cfg: RunConfig) -> int:
    study = _make_study(cfg)
    _evaluate(study, cfg)
    frame = study.sweep(cfg.sweep.p_grid)
    write_csv(frame, args.out)
    print(f"Wrote p-sweep ({len(frame)} grid points, m={cfg.metric.m}, M={cfg.metric.M}) to {args.out}")
    return EXIT_OK


def cmd_figures(args: argparse.Namespace, cfg: RunConfig) -> int:
    study = _make_study(cfg)
    frames = study.figures(bins=cfg.figures.bins, procedure=cfg.figures.procedure)
    out_dir = ensure_dir(cfg.paths.output_dir)
    for name, frame in frames.items():
        write_csv(frame, out_dir / f"{name}.csv")
    print(f"Wrote {len(frames)} figure data files to {out_dir}")
    return EXIT_OK


COMMANDS = {
    "validate": cmd_validate,
    "synth": cmd_synth,
    "train": cmd_train,
    "predict": cmd_predict,
    "evaluate": cmd_evaluate,
    "sweep": cmd_sweep,
    "figures": cmd_figures,
}


def _configure_logging(verbosity: int) -> None:
    level = logging.WARNING if verbosity == 0 else logging.INFO if verbosity == 1 else logging.DEBUG
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")


def main(argv: Optional[Sequence[str]] = None) -> int:
    """
    命令行主函数

    Args:
        argv: 参数列表，None 表示 sys.argv[1:]

    Returns:
        退出码
    """
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code in (0, None) else EXIT_USAGE

    _configure_logging(args.verbose)
    try:
        cfg = load_run_config(args.config, _overrides(args))
        return COMMANDS[args.command](args, cfg)
    except InvalidConfig as e:
        print(f"Configuration error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except FileNotFoundError as e:
        print(f"Error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except CaseTimeError as e:
        print(f"Error: {e}", file=sys.stderr)
        return EXIT_FAILURE
    except KeyboardInterrupt:
        print("\nInterrupted", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
