"""Command-line front end.

Exit codes: 0 success, 1 validation error, 2 runtime failure, 3 divergence.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import runner
from .config import ConfigError, load_config, preset_names
from .stability import (ChainSpec, case_analysis, chain_gradient, convergence_blowup_demo,
                        trained_chain_experiment, write_csv)
from .transforms import TransformPipeline

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME, EXIT_DIVERGED = 0, 1, 2, 3


def _floats(text: str) -> list[float]:
    return [float(v) for v in text.split(",") if v.strip()]


def _load(args):
    if not args.config:
        raise ConfigError("--config is required")
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = cfg.with_overrides(seed=args.seed)
    return cfg


def _out_dir(args) -> Path | None:
    if not args.out:
        return None
    Path(args.out).mkdir(parents=True, exist_ok=True)
    return Path(args.out)


def cmd_train(args) -> int:
    cfg = _load(args)
    out = _out_dir(args)
    log_path = (out / f"{cfg.name}.jsonl") if out else cfg.output.log
    ckpt = (out / f"{cfg.name}.ckpt") if out else cfg.output.checkpoint
    result = runner.train(cfg, log_path=log_path, checkpoint_path=ckpt)
    final = result.final("test") or result.final("train")
    if not args.quiet:
        if final is not None:
            print(f"{cfg.name}: epoch {final.epoch} {final.split} loss={final.loss:.6f} "
                  + " ".join(f"{k}={v:.4f}" for k, v in final.metrics.items() if isinstance(v, float)))
        if log_path:
            print(f"log: {log_path}")
        if ckpt:
            print(f"checkpoint: {ckpt}")
    if result.diverged:
        print(f"divergence detected at epoch {result.diverged_at[0]}, batch {result.diverged_at[1]}",
              file=sys.stderr)
        return EXIT_DIVERGED
    return EXIT_OK


def cmd_eval(args) -> int:
    if not args.checkpoint:
        raise ConfigError("--checkpoint is required")
    cfg = _load(args) if args.config else None
    if cfg is None and not args.dataset:
        raise ConfigError("eval needs --config or --dataset")
    rec = runner.eval_checkpoint(args.checkpoint, cfg=cfg, dataset_path=args.dataset)
    print(rec.to_json())
    return EXIT_OK


def cmd_compare(args) -> int:
    cfg = _load(args)
    methods = [m.strip() for m in (args.methods or "").split(",") if m.strip()]
    if args.methods == "all":
        methods = list(runner.METHODS)
    if not methods:
        raise ConfigError(f"compare: --methods needs at least one of {', '.join(runner.METHODS)} (or 'all')")
    out = _out_dir(args)
    rows = runner.compare(cfg, methods, out_dir=out)
    table = runner.format_table(rows, runner.task_of(cfg))
    print(table)
    if out:
        (out / "compare.md").write_text(table + "\n")
        (out / "compare.json").write_text(json.dumps(rows, indent=2, sort_keys=True))
    return EXIT_DIVERGED if any(r["diverged"] for r in rows) else EXIT_OK


def cmd_gradcheck(args) -> int:
    cfg = _load(args)
    report = runner.run_gradcheck(cfg)
    lines = report.lines()
    print("\n".join(lines if not args.quiet else lines[-1:]))
    return EXIT_OK if report.passed else EXIT_RUNTIME


def _emit_rows(args, rows, name):
    if args.out:
        path = Path(args.out)
        path.mkdir(parents=True, exist_ok=True)
        write_csv(rows, path / f"{name}.csv")
        print(f"csv: {path / f'{name}.csv'}")


def cmd_stability(args) -> int:
    sub = args.stability_cmd
    if sub == "case":
        rep = case_analysis(args.sigma, args.eps)
        print(f"sigma={rep.sigma:g} eps={args.eps:g} scale_factor={rep.scale_factor:.10g} regime={rep.regime}")
        _emit_rows(args, [{"step": 0, "grad_std": rep.sigma, "scale_factor": rep.scale_factor}], "case")
    elif sub == "chain":
        rows = []
        print("depth,no_skip,skip")
        for depth in range(1, args.depth + 1):
            plain = chain_gradient(ChainSpec(depth, args.gain, False, args.delta))
            skip = chain_gradient(ChainSpec(depth, args.gain, True, args.delta))
            print(f"{depth},{plain:.10g},{skip:.10g}")
            rows.append({"step": depth, "layer": "no_skip", "grad_std": plain})
            rows.append({"step": depth, "layer": "skip", "grad_std": skip})
        _emit_rows(args, rows, "chain")
    elif sub == "blowup":
        table = convergence_blowup_demo(_floats(args.sigmas), args.eps)
        print("sigma,scale_factor")
        for s, f in table:
            print(f"{s:g},{f:.10g}")
        _emit_rows(args, [{"step": i, "grad_std": s, "scale_factor": f} for i, (s, f) in enumerate(table)],
                   "blowup")
    elif sub == "trained":
        pipeline = TransformPipeline.from_config([{"name": n} for n in args.pipeline.split(",") if n])
        traj = trained_chain_experiment(args.depth, not args.no_skip, pipeline, args.steps,
                                        args.seed if args.seed is not None else 0)
        print(f"steps_run={len(traj.losses)} first_loss={traj.losses[0]:.6g} "
              f"final_loss={traj.losses[-1]:.6g} diverged_at={traj.diverged_at}")
        _emit_rows(args, traj.rows, "trained")
        if traj.diverged_at is not None:
            return EXIT_DIVERGED
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help=f"config file or preset name ({', '.join(preset_names())})")
    common.add_argument("--seed", type=int, help="override the root seed")
    common.add_argument("--out", help="output directory")
    common.add_argument("--quiet", action="store_true")

    p = argparse.ArgumentParser(prog="znorm-lab", description=__doc__)
    sub = p.add_subparsers(dest="cmd", required=True)
    sub.add_parser("train", parents=[common], help="train from a config")
    ev = sub.add_parser("eval", parents=[common], help="evaluate a checkpoint")
    ev.add_argument("--checkpoint")
    ev.add_argument("--dataset", help="dataset container (.npz)")
    cp = sub.add_parser("compare", parents=[common], help="compare gradient methods")
    cp.add_argument("--methods", help=f"comma list of {', '.join(runner.METHODS)} or 'all'")
    sub.add_parser("gradcheck", parents=[common], help="finite-difference gradient check")

    st = sub.add_parser("stability", help="stability analyses")
    ssub = st.add_subparsers(dest="stability_cmd", required=True)
    case = ssub.add_parser("case", parents=[common])
    case.add_argument("--sigma", type=float, required=True)
    case.add_argument("--eps", type=float, default=1e-8)
    chain = ssub.add_parser("chain", parents=[common])
    chain.add_argument("--depth", type=int, default=10)
    chain.add_argument("--gain", type=float, default=0.5)
    chain.add_argument("--delta", type=float, default=1.0)
    blow = ssub.add_parser("blowup", parents=[common])
    blow.add_argument("--sigmas", default="1e-1,1e-3,1e-6")
    blow.add_argument("--eps", type=float, default=1e-8)
    tr = ssub.add_parser("trained", parents=[common])
    tr.add_argument("--depth", type=int, default=16)
    tr.add_argument("--steps", type=int, default=2000)
    tr.add_argument("--pipeline", default="znorm", help="comma list of transform names")
    tr.add_argument("--no-skip", action="store_true")
    return p


COMMANDS = {"train": cmd_train, "eval": cmd_eval, "compare": cmd_compare,
            "gradcheck": cmd_gradcheck, "stability": cmd_stability}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INVALID if exc.code else EXIT_OK
    logging.basicConfig(level=logging.WARNING if getattr(args, "quiet", False) else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.cmd](args)
    except (ConfigError, ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except Exception as exc:  # noqa: BLE001
        print(f"runtime failure: {exc!r}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
