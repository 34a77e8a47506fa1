"""Solver vs long-horizon integration on every bundled network.

Writes one comparison CSV per network and prints timing and residual
summaries (median wall time, residual range per method).

    python scripts/compare_methods.py --starts 50 --horizon 2.5e7 --outdir results/compare
"""

import argparse
import csv
import statistics
from pathlib import Path

from nlpc.cli import main as cli

NETWORKS = Path(__file__).resolve().parents[1] / "src" / "nlpc" / "networks"


def summarize(path):
    rows = list(csv.DictReader(path.open()))
    out = {}
    for method in ("nlpc", "dynamic"):
        sel = [r for r in rows if r["method"] == method]
        t = [float(r["wall_time_s"]) for r in sel]
        res = [float(r["residual_norm"]) for r in sel]
        out[method] = (statistics.median(t), min(res), max(res))
    return out


def main():
    ap = argparse.ArgumentParser(description=__doc__.split("\n\n")[0])
    ap.add_argument("--starts", type=int, default=50)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--horizon", type=float, default=2.5e7)
    ap.add_argument("--outdir", type=Path, default=Path("results/compare"))
    args = ap.parse_args()
    args.outdir.mkdir(parents=True, exist_ok=True)
    print(f"{'network':<10} {'method':<8} {'median s':>10} {'min |f|':>10} {'max |f|':>10}")
    for net in sorted(NETWORKS.glob("*.crn")):
        out = args.outdir / f"{net.stem}.csv"
        cli(["compare", "--network", str(net), "--starts", str(args.starts),
             "--seed", str(args.seed), "--horizon", str(args.horizon), "--out", str(out)])
        for method, (t, lo, hi) in summarize(out).items():
            print(f"{net.stem:<10} {method:<8} {t:>10.4f} {lo:>10.2e} {hi:>10.2e}")


if __name__ == "__main__":
    main()
