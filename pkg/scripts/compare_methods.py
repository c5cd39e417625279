"""Compare all six gradient methods on one or more presets and write the tables.

    python scripts/compare_methods.py --out results/compare two_moons_baseline blob_masks_segmentation
"""
import argparse
import json
from pathlib import Path

from znorm_lab import runner
from znorm_lab.config import load_config


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("presets", nargs="+", help="preset names or config files")
    ap.add_argument("--out", default="results/compare")
    ap.add_argument("--seed", type=int)
    args = ap.parse_args()
    for preset in args.presets:
        cfg = load_config(preset)
        if args.seed is not None:
            cfg = cfg.with_overrides(seed=args.seed)
        out = Path(args.out) / cfg.name
        out.mkdir(parents=True, exist_ok=True)
        rows = runner.compare(cfg, list(runner.METHODS), out_dir=out)
        table = runner.format_table(rows, runner.task_of(cfg))
        (out / "compare.md").write_text(table + "\n")
        (out / "compare.json").write_text(json.dumps(rows, indent=2, sort_keys=True))
        print(f"## {cfg.name}\n\n{table}\n")


if __name__ == "__main__":
    main()
