"""Run the packaged three-user scenario and print the headline numbers.

    python scripts/run_three_users.py [--seed N] [--out DIR]
"""

import argparse
from pathlib import Path

from llmcomm.cli import run_outputs, write_atomically
from llmcomm.scenario import load_packaged


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--seed", type=int)
    ap.add_argument("--out", type=Path)
    args = ap.parse_args()

    sc = load_packaged("three_users")
    if args.seed is not None:
        sc = sc.with_seed(args.seed)
    exp, files = run_outputs(sc, "json", include_model_transfer=False, write_logs=True)
    if args.out:
        write_atomically(args.out, files)

    r, b = exp.report, exp.baseline_report
    print(f"messages        {r.messages_sent}")
    print(f"  direct        {r.delivered_direct}")
    print(f"  llm served    {r.llm_served}  (hit rate {r.llm_hit_rate:.3f})")
    print(f"  forwarded     {r.forwarded}")
    print(f"  held          {r.held}  (drained: {r.drained_human} human, {r.drained_delegated} model)")
    print(f"model versions  C at v{exp.result.registry.latest('C').version}")
    print(f"core bytes      {r.core_bytes} vs baseline {b.core_bytes}")
    print(f"model transfer  {r.model_transfer_bytes} bytes")
    for incl in (False, True):
        red = exp.reduction(incl)
        label = "incl. model" if incl else "excl. model"
        print(f"reduction {label}: {red.reduction_pct:.3f}%")
    print(f"latency p50/p95 {r.latency_p50_s:.3f}s / {r.latency_p95_s:.3f}s (baseline {b.latency_p50_s:.3f}s)")


if __name__ == "__main__":
    main()
