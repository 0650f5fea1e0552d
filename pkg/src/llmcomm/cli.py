"""Command-line entry point: ``llmcomm {run,validate,sweep,cost,routes}``."""

from __future__ import annotations

import argparse
import json
import logging
import os
import shutil
import sys
import tempfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Optional, Sequence

from . import costmodel
from .lifecycle import DEFAULT_FINETUNE_FACTOR
from .netsim import trace_jsonl
from .protocol import routes_csv
from .scenario import Scenario, ScenarioError, load_scenario, packaged_path, parse_scenario, set_dotted
from .serialize import csv_text, dumps
from .simulation import run_with_baseline

log = logging.getLogger("llmcomm")

EXIT_OK, EXIT_FAILURE, EXIT_INVALID = 0, 1, 2


@dataclass(frozen=True)
class CliConfig:
    subcommand: str
    scenario_path: Optional[str] = None
    seed: Optional[int] = None
    out_dir: Optional[str] = None
    format: str = "json"
    include_model_transfer: bool = False
    sweep: Optional[tuple[str, tuple[Any, ...]]] = None
    write_logs: bool = False
    jobs: int = 4


def resolve_scenario_path(path: str) -> Path:
    p = Path(path)
    if p.exists():
        return p
    pkg = packaged_path(path)
    if pkg.exists():
        return pkg
    raise ScenarioError("--scenario", f"no such file {path!r} (and no packaged scenario by that name)")


def load_cfg_scenario(cfg: CliConfig) -> Scenario:
    sc = load_scenario(resolve_scenario_path(cfg.scenario_path))
    return sc.with_seed(cfg.seed) if cfg.seed is not None else sc


def _report_text(obj, fmt: str) -> str:
    return obj.to_csv() if fmt == "csv" else obj.to_json()


def run_outputs(sc: Scenario, fmt: str, include_model_transfer: bool, write_logs: bool = False):
    exp = run_with_baseline(sc)
    files = {
        "trace.jsonl": trace_jsonl(exp.result.trace),
        f"report.{fmt}": _report_text(exp.report, fmt),
        f"baseline_report.{fmt}": _report_text(exp.baseline_report, fmt),
        f"reduction_report.{fmt}": _report_text(exp.reduction(include_model_transfer), fmt),
    }
    if write_logs:
        files["interactions.jsonl"] = exp.result.logs.to_jsonl()
        files["registry.json"] = exp.result.registry.to_json()
    return exp, files


def write_atomically(out_dir: Path, files: dict[str, str]) -> None:
    """All of ``files`` land in ``out_dir`` or none do."""
    out_dir.mkdir(parents=True, exist_ok=True)
    tmp = Path(tempfile.mkdtemp(prefix=".llmcomm-", dir=out_dir))
    try:
        for name, text in files.items():
            with open(tmp / name, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
        for name in files:
            os.replace(tmp / name, out_dir / name)
    finally:
        shutil.rmtree(tmp, ignore_errors=True)


def exec_run(cfg: CliConfig) -> int:
    sc = load_cfg_scenario(cfg)
    exp, files = run_outputs(sc, cfg.format, cfg.include_model_transfer, cfg.write_logs)
    write_atomically(Path(cfg.out_dir), files)
    red = exp.reduction(cfg.include_model_transfer)
    pct = "undefined" if red.reduction_pct is None else f"{red.reduction_pct:.6f}%"
    print(f"{exp.report.messages_sent} messages, core bytes {red.scenario_core_bytes} "
          f"vs baseline {red.baseline_core_bytes} ({pct}); wrote {len(files)} files to {cfg.out_dir}")
    return EXIT_OK


def exec_validate(cfg: CliConfig) -> int:
    sc = load_cfg_scenario(cfg)
    print(f"ok: {len(sc.users)} users, {len(sc.flows)} flows, {len(sc.topology.nodes)} nodes")
    return EXIT_OK


def _sweep_value_label(v: Any) -> str:
    return v if isinstance(v, str) else json.dumps(v)


def exec_sweep(cfg: CliConfig) -> int:
    key, values = cfg.sweep
    base_raw = load_cfg_scenario(cfg).raw
    # Parse every variant up front so a bad value fails before any run starts.
    variants = [(v, parse_scenario(set_dotted(base_raw, key, v))) for v in values]

    def one(item):
        v, sc = item
        exp, files = run_outputs(sc, cfg.format, cfg.include_model_transfer, cfg.write_logs)
        write_atomically(Path(cfg.out_dir) / f"{key}={_sweep_value_label(v)}", files)
        excl, incl = exp.reduction(False), exp.reduction(True)
        return {
            "key": key,
            "value": _sweep_value_label(v),
            "messages_sent": exp.report.messages_sent,
            "llm_served": exp.report.llm_served,
            "core_bytes": exp.report.core_bytes,
            "baseline_core_bytes": exp.baseline_report.core_bytes,
            "model_transfer_bytes": exp.report.model_transfer_bytes,
            "reduction_pct": excl.reduction_pct,
            "reduction_pct_with_model_transfer": incl.reduction_pct,
        }

    with ThreadPoolExecutor(max_workers=max(1, cfg.jobs)) as pool:
        rows = list(pool.map(one, variants))
    write_atomically(Path(cfg.out_dir), {"sweep.csv": csv_text(rows)})
    sys.stdout.write(csv_text(rows))
    return EXIT_OK


def exec_cost(args: argparse.Namespace) -> int:
    params = costmodel.CostParams(args.price, args.tdp_kw, args.carbon_kg_per_kwh)
    gpu_h = args.gpu_hours
    if gpu_h is not None and gpu_h > 0 and args.from_pretrained:
        gpu_h *= args.finetune_factor
    if gpu_h is None or not gpu_h > 0:
        raise costmodel.CostError(f"gpu_hours must be > 0, got {args.gpu_hours!r}")
    print(dumps(costmodel.cost_report(gpu_h, params).to_dict()))
    return EXIT_OK


def exec_routes() -> int:
    sys.stdout.write(routes_csv())
    return EXIT_OK


def parse_sweep(spec: str) -> tuple[str, tuple[Any, ...]]:
    key, sep, vals = spec.partition("=")
    if not sep or not key or not vals:
        raise argparse.ArgumentTypeError("expected KEY=V1,V2,...")
    out = []
    for v in vals.split(","):
        try:
            out.append(json.loads(v))
        except json.JSONDecodeError:
            out.append(v)
    return key, tuple(out)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="llmcomm", description="LLM-mediated messaging simulator")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="subcommand", required=True)

    def scenario_args(sp, out=True):
        sp.add_argument("--scenario", required=True, metavar="PATH",
                        help="scenario JSON file, or a packaged name (three_users, breakeven)")
        sp.add_argument("--seed", type=int)
        if out:
            sp.add_argument("--out", required=True, metavar="DIR")
            sp.add_argument("--format", choices=("json", "csv"), default="json")
            sp.add_argument("--include-model-transfer", action="store_true")
            sp.add_argument("--write-logs", action="store_true",
                            help="also write interactions.jsonl and registry.json")

    scenario_args(sub.add_parser("run", help="simulate a scenario and its all-Active baseline"))
    scenario_args(sub.add_parser("validate", help="check a scenario file"), out=False)
    sw = sub.add_parser("sweep", help="one run per value of a scenario parameter")
    scenario_args(sw)
    sw.add_argument("--sweep", required=True, type=parse_sweep, metavar="KEY=V1,V2,...",
                    help="dotted scenario path, e.g. flows.0.count=100,200")
    sw.add_argument("--jobs", type=int, default=4)

    c = sub.add_parser("cost", help="training cost, energy and carbon for a GPU-hour budget")
    c.add_argument("--gpu-hours", type=float, required=True)
    c.add_argument("--from-pretrained", action="store_true")
    c.add_argument("--finetune-factor", type=float, default=DEFAULT_FINETUNE_FACTOR)
    c.add_argument("--price", type=float, default=costmodel.DEFAULT_PRICE_USD_PER_GPU_HOUR,
                   help="USD per GPU-hour")
    c.add_argument("--tdp-kw", type=float, default=costmodel.DEFAULT_TDP_KW)
    c.add_argument("--carbon-kg-per-kwh", type=float, default=costmodel.DEFAULT_CARBON_KG_PER_KWH)

    r = sub.add_parser("routes", help="print the presence routing decision table")
    r.add_argument("--table", action="store_true", help="CSV table (the default and only format)")
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.subcommand == "routes":
            return exec_routes()
        if args.subcommand == "cost":
            return exec_cost(args)
        cfg = CliConfig(
            subcommand=args.subcommand,
            scenario_path=args.scenario,
            seed=args.seed,
            out_dir=getattr(args, "out", None),
            format=getattr(args, "format", "json"),
            include_model_transfer=getattr(args, "include_model_transfer", False),
            sweep=getattr(args, "sweep", None),
            write_logs=getattr(args, "write_logs", False),
            jobs=getattr(args, "jobs", 4),
        )
        return {"run": exec_run, "validate": exec_validate, "sweep": exec_sweep}[args.subcommand](cfg)
    except ScenarioError as exc:
        print(f"error[{exc.code}] {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (costmodel.CostError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
