"""Seeded scenario workload: Poisson message flows and status schedules.

All randomness comes from splitmix64 so a seed pins the whole event list.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

from .protocol import Message, PresenceStatus

MASK64 = (1 << 64) - 1
GOLDEN_GAMMA = 0x9E3779B97F4A7C15

# Topic key meaning "something the knowledge base cannot be checked against";
# its answerability is a coin flip with the scenario's p_answerable_unknown.
UNKNOWN_TOPIC = "*"


class WorkloadError(ValueError):
    pass


@dataclass(frozen=True)
class PrngState:
    state: int

    def __post_init__(self):
        object.__setattr__(self, "state", self.state & MASK64)


def prng_next(s: PrngState) -> tuple[PrngState, int]:
    state = (s.state + GOLDEN_GAMMA) & MASK64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return PrngState(state), z ^ (z >> 31)


def exponential_from_uniform(u: float, rate: float) -> float:
    if not rate > 0:
        raise WorkloadError(f"rate must be > 0, got {rate!r}")
    if not 0.0 < u <= 1.0:
        raise WorkloadError(f"u must lie in (0, 1], got {u!r}")
    return -math.log(u) / rate


def sample_exponential(rate: float, s: PrngState) -> tuple[PrngState, float]:
    if not rate > 0:
        raise WorkloadError(f"rate must be > 0, got {rate!r}")
    s, out = prng_next(s)
    u = (out + 1) / 2**64
    return s, exponential_from_uniform(u, rate)


def sample_unit(s: PrngState) -> tuple[PrngState, float]:
    """Uniform in [0, 1) from the top 53 bits."""
    s, out = prng_next(s)
    return s, (out >> 11) * 2.0**-53


@dataclass(frozen=True)
class Flow:
    sender: str
    recipient: str
    rate_per_s: float
    msg_bytes: int
    topics: dict[str, float]
    reply_bytes: Optional[int] = None
    start_s: float = 0.0
    count: Optional[int] = None

    def __post_init__(self):
        if self.sender == self.recipient:
            raise WorkloadError(f"flow {self.sender}->{self.recipient}: sender equals recipient")
        if not self.rate_per_s > 0:
            raise WorkloadError(f"flow {self.sender}->{self.recipient}: rate_per_s must be > 0")
        if self.msg_bytes <= 0:
            raise WorkloadError(f"flow {self.sender}->{self.recipient}: msg_bytes must be > 0")
        if self.start_s < 0:
            raise WorkloadError(f"flow {self.sender}->{self.recipient}: start_s must be >= 0")
        if self.count is not None and self.count < 0:
            raise WorkloadError(f"flow {self.sender}->{self.recipient}: count must be >= 0")
        check_distribution(self.topics, f"flow {self.sender}->{self.recipient}")

    @property
    def response_bytes(self) -> int:
        return self.reply_bytes if self.reply_bytes is not None else self.msg_bytes


def check_distribution(dist: dict[str, float], where: str) -> None:
    if not dist:
        raise WorkloadError(f"{where}: empty topic distribution")
    if any(not (0.0 <= p <= 1.0) for p in dist.values()):
        raise WorkloadError(f"{where}: topic probabilities must lie in [0, 1]")
    total = math.fsum(dist.values())
    if abs(total - 1.0) > 1e-9:
        raise WorkloadError(f"{where}: topic probabilities sum to {total!r}, not 1")


@dataclass(frozen=True)
class StatusChange:
    user: str
    at: float
    status: PresenceStatus


@dataclass(frozen=True)
class ScenarioParams:
    seed: int
    duration_s: float
    flows: list[Flow] = field(default_factory=list)
    status_schedule: list[StatusChange] = field(default_factory=list)
    p_answerable_unknown: float = 0.0

    def __post_init__(self):
        if not 0 <= self.seed <= MASK64:
            raise WorkloadError("seed must be a 64-bit unsigned integer")
        if not self.duration_s > 0:
            raise WorkloadError("duration_s must be > 0")
        if not 0.0 <= self.p_answerable_unknown <= 1.0:
            raise WorkloadError("p_answerable_unknown must lie in [0, 1]")


@dataclass(frozen=True)
class WorkloadEvent:
    at: float
    kind: str  # "message" | "status"
    message: Optional[Message] = None
    status_change: Optional[StatusChange] = None
    flow_index: int = -1
    # Only set for UNKNOWN_TOPIC draws.
    forced_answerable: Optional[bool] = None


def _draw_topic(dist: dict[str, float], u: float) -> str:
    acc = 0.0
    last = None
    for topic, p in dist.items():
        if p <= 0:
            continue
        acc += p
        last = topic
        if u < acc:
            return topic
    return last  # u landed in the rounding gap below 1.0


def flow_stream_seeds(seed: int, n: int) -> list[PrngState]:
    master = PrngState(seed)
    out = []
    for _ in range(n):
        master, sub = prng_next(master)
        out.append(PrngState(sub))
    return out


def generate(params: ScenarioParams) -> list[WorkloadEvent]:
    """Expand ``params`` into a time-ordered event list.

    Each flow draws from its own splitmix64 stream, so editing one flow never
    perturbs another. Ties order status changes first, then by flow index and
    arrival index.
    """
    keyed: list[tuple[tuple, WorkloadEvent]] = []
    for i, sc in enumerate(params.status_schedule):
        if not 0 <= sc.at:
            raise WorkloadError(f"status change for {sc.user} at negative time")
        if sc.at > params.duration_s:
            continue
        keyed.append(((sc.at, -1, i), WorkloadEvent(sc.at, "status", status_change=sc)))

    pending: list[tuple[tuple, Flow, int, str, Optional[bool]]] = []
    for fi, (flow, s) in enumerate(zip(params.flows, flow_stream_seeds(params.seed, len(params.flows)))):
        t = flow.start_s
        k = 0
        while flow.count is None or k < flow.count:
            s, gap = sample_exponential(flow.rate_per_s, s)
            t += gap
            if t > params.duration_s:
                break
            s, u = sample_unit(s)
            topic = _draw_topic(flow.topics, u)
            forced = None
            if topic == UNKNOWN_TOPIC:
                s, coin = sample_unit(s)
                forced = coin < params.p_answerable_unknown
            pending.append(((t, fi, k), flow, fi, topic, forced))
            k += 1

    pending.sort(key=lambda p: p[0])
    for msg_id, (key, flow, fi, topic, forced) in enumerate(pending, start=1):
        body = f"{flow.sender} asks {flow.recipient} about {topic}"
        msg = Message(
            id=msg_id,
            sender=flow.sender,
            recipient=flow.recipient,
            topic=topic,
            body=body,
            size_bytes=max(flow.msg_bytes, len(body.encode("utf-8"))),
            sent_at=key[0],
        )
        keyed.append((key, WorkloadEvent(key[0], "message", message=msg, flow_index=fi, forced_answerable=forced)))

    keyed.sort(key=lambda kv: kv[0])
    return [ev for _, ev in keyed]
