"""Non-linear vs orthogonal projection: restarts, zero components, conditioning.

Prints mean and standard deviation per variant over paired starts.

    python scripts/projector_ablation.py --network src/nlpc/networks/stiff.crn --starts 50
"""

import argparse
import contextlib
import csv
import io
import statistics
from pathlib import Path

from nlpc.cli import main as cli

NETWORKS = Path(__file__).resolve().parents[1] / "src" / "nlpc" / "networks"
METRICS = ("restarts", "max_zero_component_pct", "max_cond_estimate_log10")


def main():
    ap = argparse.ArgumentParser(description=__doc__.split("\n\n")[0])
    ap.add_argument("--network", type=Path, default=NETWORKS / "stiff.crn")
    ap.add_argument("--starts", type=int, default=50)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", type=Path, help="also keep the per-start CSV here")
    args = ap.parse_args()
    buf = io.StringIO()
    with contextlib.redirect_stdout(buf):
        cli(["ablation", "--network", str(args.network), "--starts", str(args.starts),
             "--seed", str(args.seed)])
    if args.out:
        args.out.parent.mkdir(parents=True, exist_ok=True)
        args.out.write_text(buf.getvalue(), encoding="utf-8")
    rows = list(csv.DictReader(io.StringIO(buf.getvalue())))
    print(f"{'variant':<11}" + "".join(f"{m:>34}" for m in METRICS) + f"{'converged':>11}")
    for variant in ("nonlinear", "orthogonal"):
        sel = [r for r in rows if r["variant"] == variant]
        cells = []
        for m in METRICS:
            v = [float(r[m]) for r in sel]
            cells.append(f"{statistics.mean(v):>20.3f} +- {statistics.pstdev(v):<9.3f}")
        ok = sum(int(r["converged"]) for r in sel)
        print(f"{variant:<11}" + "".join(f"{c:>34}" for c in cells) + f"{ok:>8}/{len(sel)}")


if __name__ == "__main__":
    main()
