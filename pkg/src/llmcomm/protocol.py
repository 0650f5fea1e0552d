"""Presence-status routing: who handles an inbound message.

Every inbound message is routed by the recipient's presence status to exactly
one of four outcomes: direct delivery, an answer from the recipient's personal
model, a forward for a later human reply, or a hold in the datacenter mailbox.
"""

from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass, field
from typing import Callable, Iterable, Iterator, Optional

DISCLOSURE_LINE = "[This is an AI-generated message]"


class ProtocolError(ValueError):
    """Invalid input to a protocol operation."""


class Status(str, enum.Enum):
    ACTIVE = "Active"
    BUSY = "Busy"
    AWAY = "Away"
    INACTIVE = "Inactive"


class RoutingAction(str, enum.Enum):
    DELIVER_DIRECT = "DeliverDirect"
    LLM_SERVE = "LLMServe"
    FORWARD_TO_RECIPIENT = "ForwardToRecipient"
    HOLD_INACTIVE = "HoldInactive"


class HoldReason(str, enum.Enum):
    FORWARDED_UNANSWERABLE = "forwarded_unanswerable"
    INACTIVE_HOLD = "inactive_hold"
    DIRECT = "direct"


class DrainAction(str, enum.Enum):
    HUMAN_REPLY = "HumanReply"
    DELEGATE_TO_LLM = "DelegateToLLM"


@dataclass(frozen=True)
class Message:
    id: int
    sender: str
    recipient: str
    topic: str
    body: str
    size_bytes: int
    sent_at: float

    def __post_init__(self):
        if self.sender == self.recipient:
            raise ProtocolError(f"message {self.id}: sender equals recipient ({self.sender!r})")
        if self.size_bytes < len(self.body.encode("utf-8")) or self.size_bytes <= 0:
            raise ProtocolError(f"message {self.id}: size_bytes {self.size_bytes} smaller than body")
        if self.sent_at < 0:
            raise ProtocolError(f"message {self.id}: negative sent_at")


@dataclass(frozen=True)
class PresenceStatus:
    variant: Status
    allowlist: frozenset[str] = frozenset()

    def __post_init__(self):
        object.__setattr__(self, "variant", Status(self.variant))
        object.__setattr__(self, "allowlist", frozenset(self.allowlist))
        if self.allowlist and self.variant is not Status.BUSY:
            raise ProtocolError(f"allowlist given for non-Busy status {self.variant.value}")

    @classmethod
    def active(cls) -> "PresenceStatus":
        return cls(Status.ACTIVE)

    @classmethod
    def busy(cls, allowlist: Iterable[str] = ()) -> "PresenceStatus":
        return cls(Status.BUSY, frozenset(allowlist))

    @classmethod
    def away(cls) -> "PresenceStatus":
        return cls(Status.AWAY)

    @classmethod
    def inactive(cls) -> "PresenceStatus":
        return cls(Status.INACTIVE)

    def allows(self, sender: str) -> bool:
        return self.variant is Status.BUSY and sender in self.allowlist


def decide_route(
    status: PresenceStatus | Status,
    sender_allowlisted: bool,
    model_available: bool,
    answerable: bool,
) -> RoutingAction:
    """Route one inbound message.

    ``answerable`` may only be true when ``model_available`` is; anything else
    is rejected rather than silently coerced.
    """
    if answerable and not model_available:
        raise ProtocolError("answerable=True requires model_available=True")
    variant = status.variant if isinstance(status, PresenceStatus) else Status(status)

    if variant is Status.ACTIVE:
        return RoutingAction.DELIVER_DIRECT
    if variant is Status.INACTIVE:
        return RoutingAction.HOLD_INACTIVE
    if variant is Status.BUSY and sender_allowlisted:
        return RoutingAction.DELIVER_DIRECT
    # Busy (not allowlisted) and Away share the model-or-fallback rule.
    if model_available and answerable:
        return RoutingAction.LLM_SERVE
    return RoutingAction.FORWARD_TO_RECIPIENT


def valid_route_inputs() -> Iterator[tuple[Status, bool, bool, bool]]:
    for status, allow, avail, ans in itertools.product(Status, (False, True), (False, True), (False, True)):
        if ans and not avail:
            continue
        yield status, allow, avail, ans


ROUTES_CSV_HEADER = "status,allowlisted,model_available,answerable,action"


def routes_table() -> list[tuple[Status, bool, bool, bool, RoutingAction]]:
    return [(*inputs, decide_route(*inputs)) for inputs in valid_route_inputs()]


def routes_csv() -> str:
    def b(x: bool) -> str:
        return "true" if x else "false"

    lines = [ROUTES_CSV_HEADER]
    for status, allow, avail, ans, action in routes_table():
        lines.append(f"{status.value},{b(allow)},{b(avail)},{b(ans)},{action.value}")
    return "\n".join(lines) + "\n"


def apply_disclosure(body: str) -> str:
    """Append the AI-generated disclosure as its own trailing line.

    Not idempotent: tagging twice yields two note lines.
    """
    if not body:
        raise ProtocolError("cannot tag an empty body")
    return f"{body}\n{DISCLOSURE_LINE}"


def has_disclosure(text: str) -> bool:
    return text.endswith("\n" + DISCLOSURE_LINE)


@dataclass(frozen=True)
class InteractionLogRecord:
    ts: float
    owner: str
    sender: str
    query: str
    response: str
    model_version: int
    owner_status: Status
    serving_node: str

    def to_dict(self) -> dict:
        return {
            "ts": self.ts,
            "owner": self.owner,
            "sender": self.sender,
            "query": self.query,
            "response": self.response,
            "model_version": self.model_version,
            "owner_status": Status(self.owner_status).value,
            "serving_node": self.serving_node,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "InteractionLogRecord":
        return cls(
            ts=float(d["ts"]),
            owner=d["owner"],
            sender=d["sender"],
            query=d["query"],
            response=d["response"],
            model_version=int(d["model_version"]),
            owner_status=Status(d["owner_status"]),
            serving_node=d["serving_node"],
        )


class InteractionLog:
    """Append-only store of model-generated exchanges, kept per serving node."""

    def __init__(self):
        self._records: list[InteractionLogRecord] = []

    def __len__(self) -> int:
        return len(self._records)

    def __iter__(self):
        return iter(self._records)

    def append(self, rec: InteractionLogRecord) -> None:
        if not has_disclosure(rec.response):
            raise ProtocolError("log record response lacks the disclosure line")
        if rec.model_version < 1:
            raise ProtocolError("model_version must be positive")
        self._records.append(rec)

    def by_owner(self, owner: str) -> list[InteractionLogRecord]:
        return [r for r in self._records if r.owner == owner]

    def to_jsonl(self) -> str:
        from .serialize import dumps_lines

        return dumps_lines(r.to_dict() for r in self._records)


def record_interaction(log: InteractionLog, rec: InteractionLogRecord) -> InteractionLog:
    log.append(rec)
    return log


@dataclass
class Inbox:
    owner: str
    held: list[tuple[Message, HoldReason]] = field(default_factory=list)
    drained_at: Optional[float] = None

    def hold(self, msg: Message, reason: HoldReason) -> None:
        if any(m.id == msg.id for m, _ in self.held):
            raise ProtocolError(f"message {msg.id} already held for {self.owner}")
        self.held.append((msg, HoldReason(reason)))

    def __len__(self) -> int:
        return len(self.held)


DrainPolicy = Callable[[Message], DrainAction]


def always_human(msg: Message) -> DrainAction:
    return DrainAction.HUMAN_REPLY


def delegate_if_answerable(answerable: Callable[[Message], bool]) -> DrainPolicy:
    def policy(msg: Message) -> DrainAction:
        return DrainAction.DELEGATE_TO_LLM if answerable(msg) else DrainAction.HUMAN_REPLY

    return policy


def on_status_change(
    user: str,
    new_status: PresenceStatus,
    inbox: Inbox,
    policy: DrainPolicy,
    now: Optional[float] = None,
) -> list[tuple[Message, DrainAction]]:
    """Drain ``inbox`` when its owner becomes Active; otherwise leave it alone."""
    if inbox.owner != user:
        raise ProtocolError(f"inbox belongs to {inbox.owner!r}, not {user!r}")
    if new_status.variant is not Status.ACTIVE:
        return []
    decisions = [(msg, DrainAction(policy(msg))) for msg, _ in inbox.held]
    inbox.held.clear()
    inbox.drained_at = now
    return decisions
