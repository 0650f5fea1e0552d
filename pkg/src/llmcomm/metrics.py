"""Run reports and baseline traffic comparison."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Iterable, Optional

from .netsim import ACCESS, CORE, TraceEntry
from .serialize import csv_text, dumps

ACTION_FIELDS = {
    "DeliverDirect": "delivered_direct",
    "LLMServe": "llm_served",
    "ForwardToRecipient": "forwarded",
    "HoldInactive": "held",
}

UNDEFINED_ZERO_BASELINE = "undefined-zero-baseline"


@dataclass(frozen=True)
class RunReport:
    messages_sent: int = 0
    delivered_direct: int = 0
    llm_served: int = 0
    forwarded: int = 0
    held: int = 0
    drained_human: int = 0
    drained_delegated: int = 0
    core_bytes: int = 0
    access_bytes: int = 0
    model_transfer_bytes: int = 0
    latency_mean_s: float = 0.0
    latency_p50_s: float = 0.0
    latency_p95_s: float = 0.0
    llm_hit_rate: float = 0.0
    log_records: int = 0

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return dumps(self.to_dict()) + "\n"

    def to_csv(self) -> str:
        return csv_text([self.to_dict()])


def nearest_rank(sorted_values: list[float], pct: float) -> float:
    if not sorted_values:
        return 0.0
    rank = max(1, math.ceil(pct / 100.0 * len(sorted_values)))
    return sorted_values[rank - 1]


def summarize(trace: Iterable[TraceEntry]) -> RunReport:
    """Single pass over a finished trace."""
    counts = dict.fromkeys(ACTION_FIELDS.values(), 0)
    drained = {"HumanReply": 0, "DelegateToLLM": 0}
    core = access = model_bytes = logs = 0
    latencies: list[float] = []
    for e in trace:
        if e.kind == "transfer-complete":
            model_bytes += e.bytes or 0
        else:
            for _, cls, nbytes in e.charges:
                if cls == CORE:
                    core += nbytes
                elif cls == ACCESS:
                    access += nbytes
        if e.log_ts is not None:
            logs += 1
        if e.kind == "message":
            counts[ACTION_FIELDS[e.action]] += 1
            if e.latency_s is not None:
                latencies.append(e.latency_s)
        elif e.kind == "drain":
            drained[e.action] += 1
    latencies.sort()
    served, fwd = counts["llm_served"], counts["forwarded"]
    return RunReport(
        messages_sent=sum(counts.values()),
        **counts,
        drained_human=drained["HumanReply"],
        drained_delegated=drained["DelegateToLLM"],
        core_bytes=core,
        access_bytes=access,
        model_transfer_bytes=model_bytes,
        latency_mean_s=math.fsum(latencies) / len(latencies) if latencies else 0.0,
        latency_p50_s=nearest_rank(latencies, 50),
        latency_p95_s=nearest_rank(latencies, 95),
        llm_hit_rate=served / (served + fwd) if served + fwd else 0.0,
        log_records=logs,
    )


@dataclass(frozen=True)
class ReductionReport:
    baseline_core_bytes: int
    scenario_core_bytes: int
    reduction_pct: Optional[float]
    includes_model_transfer: bool
    condition: str = "ok"

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return dumps(self.to_dict()) + "\n"

    def to_csv(self) -> str:
        return csv_text([self.to_dict()])


def compare(baseline: RunReport, scenario: RunReport, include_model_transfer: bool = False) -> ReductionReport:
    """Core-byte reduction of ``scenario`` relative to the all-Active ``baseline``.

    A zero baseline against nonzero scenario traffic has no percentage; it is
    reported through ``condition`` with ``reduction_pct`` left as None.
    """
    base = baseline.core_bytes
    scen = scenario.core_bytes + (scenario.model_transfer_bytes if include_model_transfer else 0)
    if base > 0:
        pct = 100.0 * (1.0 - scen / base)
        return ReductionReport(base, scen, pct, include_model_transfer)
    if scen == 0:
        return ReductionReport(base, scen, 0.0, include_model_transfer)
    return ReductionReport(base, scen, None, include_model_transfer, UNDEFINED_ZERO_BASELINE)
