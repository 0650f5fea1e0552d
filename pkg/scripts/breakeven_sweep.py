"""Sweep the number of edge-served exchanges around the break-even count.

Measures per-exchange core bytes saved on the break-even scenario, computes
the break-even count, then runs counts around it and prints the inclusive
reduction, which should change sign exactly at the break-even count.

    python scripts/breakeven_sweep.py [--span 3] [--points 1000,2000]
"""

import argparse
import json

from llmcomm.costmodel import breakeven_messages
from llmcomm.scenario import packaged_path, parse_scenario, set_dotted
from llmcomm.simulation import run_with_baseline


def run(raw, n):
    return run_with_baseline(parse_scenario(set_dotted(raw, "flows.0.count", n)))


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--span", type=int, default=3, help="counts either side of break-even")
    ap.add_argument("--points", default="", help="extra counts to run, comma separated")
    args = ap.parse_args()

    raw = json.loads(packaged_path("breakeven").read_text())
    model_bytes = next(u["model"]["size_bytes"] for u in raw["users"] if "model" in u)
    probe = run(raw, 100)
    per = (probe.baseline_report.core_bytes - probe.report.core_bytes) // probe.report.messages_sent
    b = breakeven_messages(model_bytes, per)
    print(f"model {model_bytes} B, {per} core B saved per exchange, break-even at {b} exchanges")

    counts = sorted({*range(b - args.span, b + args.span + 1),
                     *(int(x) for x in args.points.split(",") if x)})
    print("count,reduction_pct,reduction_pct_with_model_transfer")
    for n in counts:
        exp = run(raw, n)
        print(f"{n},{exp.reduction(False).reduction_pct:.6f},{exp.reduction(True).reduction_pct:.6f}")


if __name__ == "__main__":
    main()
