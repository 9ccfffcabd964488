"""Command line interface.

    semfi data synth|filter|score|cut|annotate|all --config F --seed N --out D
    semfi train  --config F --data D --out D
    semfi sample --ckpt F --first IMG --last IMG --text S --frames N --seed N
    semfi bench  --ckpt F --testset MANIFEST --config F --out D
    semfi ablate --config F --out D
    semfi report --report F --out D

Exit codes: 0 success, 2 configuration error, 3 data error, 1 anything else.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import harness
from .bench import BenchConfig
from .data import DataPipelineConfig, run_all, run_stage, STAGES
from .errors import ConfigurationError, DataError, SemfiError


def _load_json(path: str) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as f:
            return json.load(f)
    except FileNotFoundError as e:
        raise ConfigurationError(f"config file not found: {path}") from e
    except json.JSONDecodeError as e:
        raise ConfigurationError(f"config {path} is not valid JSON: {e}") from e


def _data_config(path: str | None) -> DataPipelineConfig:
    if path is None:
        return DataPipelineConfig()
    d = _load_json(path)
    # Accept either a bare pipeline config or a full experiment config.
    if "data" in d and "schema_version" in d:
        return harness.ExperimentConfig.from_dict(d).data
    return DataPipelineConfig.from_dict(d)


def _bench_config(path: str | None) -> BenchConfig:
    if path is None:
        return BenchConfig()
    d = _load_json(path)
    if "bench" in d and "schema_version" in d:
        return harness.ExperimentConfig.from_dict(d).bench
    return BenchConfig.from_dict(d)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="semfi",
        description="Desk-scale semantic frame interpolation toolkit",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("data", help="run the data pipeline")
    p.add_argument("stage", choices=STAGES + ("all",))
    p.add_argument("--config", help="pipeline or experiment config JSON")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)

    p = sub.add_parser("train", help="train a model on a prepared manifest")
    p.add_argument("--config", required=True)
    p.add_argument("--data", required=True, help="pipeline output directory")
    p.add_argument("--out", required=True)

    p = sub.add_parser("sample", help="generate a clip from two endpoint frames")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--first", required=True,
                   help="frame file: .npy, .clip, or file.clip[k]")
    p.add_argument("--last", required=True)
    p.add_argument("--text", default="")
    p.add_argument("--frames", type=int, required=True)
    p.add_argument("--steps", type=int, default=25)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="sample.clip")
    p.add_argument("--no-clamp", action="store_true",
                   help="do not pin the endpoint frames exactly")
    p.add_argument("--fps", type=int, default=8)

    p = sub.add_parser("bench", help="run the benchmark suite")
    p.add_argument("--ckpt", help="checkpoint (omit with --source gt)")
    p.add_argument("--testset", required=True, help="testset manifest.jsonl")
    p.add_argument("--config", help="bench or experiment config JSON")
    p.add_argument("--out", required=True)
    p.add_argument("--source", choices=("model", "gt"), default="model")
    p.add_argument("--charts", action="store_true")

    p = sub.add_parser("ablate", help="train and compare the ablation variants")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("report", help="re-emit report files from report.json")
    p.add_argument("--report", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--charts", action="store_true")
    return parser


def run(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "data":
        cfg = _data_config(args.config)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        if args.stage == "all":
            path = run_all(out, cfg, args.seed)
        else:
            path = run_stage(args.stage, out, cfg, args.seed)
        harness.write_run_record(
            out, f"data_{args.stage}", cfg.to_dict(), args.seed,
            outputs={"manifest": path},
        )
        print(path)
        return 0
    if args.command == "train":
        cfg = harness.ExperimentConfig.load(args.config)
        outputs = harness.cmd_train(cfg, args.data, args.out)
        print(outputs["checkpoint"])
        return 0
    if args.command == "sample":
        path = harness.cmd_sample(
            args.ckpt,
            args.first,
            args.last,
            args.text,
            args.frames,
            args.steps,
            args.seed,
            args.out,
            clamp=not args.no_clamp,
            fps=args.fps,
        )
        print(path)
        return 0
    if args.command == "bench":
        cfg = _bench_config(args.config)
        harness.cmd_bench(
            args.ckpt,
            args.testset,
            cfg,
            args.out,
            source=args.source,
            charts=args.charts,
        )
        print(Path(args.out) / "report.md")
        return 0
    if args.command == "ablate":
        cfg = harness.ExperimentConfig.load(args.config)
        harness.cmd_ablate(cfg, args.out)
        print(Path(args.out) / "ablation.md")
        return 0
    if args.command == "report":
        harness.cmd_report(args.report, args.out, charts=args.charts)
        print(Path(args.out) / "report.md")
        return 0
    raise ConfigurationError(f"unknown command {args.command!r}")


def main(argv: list[str] | None = None) -> None:
    try:
        sys.exit(run(argv))
    except ConfigurationError as e:
        print(f"configuration error: {e}", file=sys.stderr)
        sys.exit(2)
    except DataError as e:
        print(f"data error: {e}", file=sys.stderr)
        sys.exit(3)
    except SemfiError as e:
        print(f"error: {e}", file=sys.stderr)
        sys.exit(1)


if __name__ == "__main__":
    main()
