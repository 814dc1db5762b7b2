"""Run every experiment config in demos/configs and print its ratio table.

    python demos/run_all.py [--out DIR]

Artifacts for each config land in DIR/<config name>/ (a temporary
directory by default).
"""
import argparse
import csv
import json
import tempfile
import time
from collections import defaultdict
from pathlib import Path

from compound_tails import cli
from compound_tails.compound_engine import TailCurve

HERE = Path(__file__).resolve().parent


def _mc_ratios(out: Path):
    """Dependent runs have no exact oracle; compare the simulation instead."""
    sim = TailCurve.from_csv(str(out / "mc.csv"))
    rows = defaultdict(list)
    for path in sorted(out.glob("approx_*.csv")):
        table = cli.compare(sim, TailCurve.from_csv(str(path)))
        for x, p, lr in zip(table.x, table.prob_ratio, table.log_ratio):
            rows[path.stem[len("approx_"):]].append({"x": x, "prob_ratio": p, "log_ratio": lr})
    return "monte carlo", rows


def print_table(out: Path) -> None:
    if (out / "ratios.csv").exists():
        label, rows = "oracle", defaultdict(list)
        with open(out / "ratios.csv", newline="") as fh:
            for row in csv.DictReader(fh):
                rows[row["approximation"]].append(row)
    else:
        label, rows = _mc_ratios(out)
    for name, table in rows.items():
        print(f"  {label} / {name}")
        print(f"    {'x':>12}  {'P ratio':>10}  {'log ratio':>10}")
        for row in table:
            print(f"    {float(row['x']):12.4g}  {float(row['prob_ratio']):10.5f}  {float(row['log_ratio']):10.6f}")


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", type=Path, default=None)
    args = ap.parse_args()
    root = args.out or Path(tempfile.mkdtemp(prefix="compound-tails-demo-"))
    for config in sorted((HERE / "configs").glob("*.json")):
        out = root / config.stem
        t0 = time.perf_counter()
        code = cli.run(str(config), str(out))
        dt = time.perf_counter() - t0
        predicted = json.loads((out / "report.json").read_text())["predicted"] if code == 0 else "-"
        print(f"{config.stem}: exit {code}, {dt:.1f} s, predicted regime {predicted}")
        if code == 0:
            print_table(out)
        print()
    print(f"artifacts in {root}")


if __name__ == "__main__":
    main()
