"""Knowledge-base stand-in for a personal LLM.

A model knows a set of topics, each with a canned response and a visibility
rule. Answering is topic membership gated by visibility; learning from a real
reply yields a new, strictly newer model version.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from types import MappingProxyType
from typing import Iterable, Mapping

from .protocol import Message, apply_disclosure


class ResponderError(ValueError):
    pass


class Visibility(str, enum.Enum):
    PUBLIC = "public"
    GROUP = "group"
    PRIVATE = "private"


@dataclass(frozen=True)
class Fact:
    response: str
    visibility: Visibility = Visibility.PUBLIC
    group: frozenset[str] = frozenset()

    def __post_init__(self):
        object.__setattr__(self, "visibility", Visibility(self.visibility))
        object.__setattr__(self, "group", frozenset(self.group))
        if not self.response:
            raise ResponderError("fact response must be non-empty")

    @classmethod
    def public(cls, response: str) -> "Fact":
        return cls(response)

    @classmethod
    def for_group(cls, response: str, members: Iterable[str]) -> "Fact":
        return cls(response, Visibility.GROUP, frozenset(members))

    @classmethod
    def private(cls, response: str) -> "Fact":
        return cls(response, Visibility.PRIVATE)

    def visible_to(self, sender: str, owner: str) -> bool:
        if sender == owner:
            return True
        if self.visibility is Visibility.PUBLIC:
            return True
        if self.visibility is Visibility.GROUP:
            return sender in self.group
        return False


# Measured load and process times: Llama-2-7B-Chat text generation and VITS2 speech.
DEFAULT_LOAD_TIME_S = 6.62
DEFAULT_PROCESS_TIME_S = 9.64
DEFAULT_TTS_LOAD_S = 0.26
DEFAULT_TTS_PROCESS_S = 0.18


@dataclass(frozen=True)
class ServiceProfile:
    load_time_s: float = DEFAULT_LOAD_TIME_S
    process_time_s: float = DEFAULT_PROCESS_TIME_S
    tts_load_s: float = DEFAULT_TTS_LOAD_S
    tts_process_s: float = DEFAULT_TTS_PROCESS_S

    def __post_init__(self):
        for name in ("load_time_s", "process_time_s", "tts_load_s", "tts_process_s"):
            if getattr(self, name) < 0:
                raise ResponderError(f"{name} must be >= 0")


STAGES = frozenset({"text", "tts"})


def service_time(profile: ServiceProfile, stages: Iterable[str], cold: bool) -> float:
    stages = frozenset(stages)
    if not stages:
        raise ResponderError("at least one stage is required")
    unknown = stages - STAGES
    if unknown:
        raise ResponderError(f"unknown stages: {sorted(unknown)}")
    total = 0.0
    if "text" in stages:
        total += profile.process_time_s + (profile.load_time_s if cold else 0.0)
    if "tts" in stages:
        total += profile.tts_process_s + (profile.tts_load_s if cold else 0.0)
    # Calibration values are given to 0.01 s; drop binary-float residue.
    return round(total, 9)


@dataclass(frozen=True)
class PersonalModel:
    owner: str
    version: int = 1
    size_bytes: int = 13_500_000_000
    facts: Mapping[str, Fact] = field(default_factory=dict)
    profile: ServiceProfile = field(default_factory=ServiceProfile)

    def __post_init__(self):
        if self.version < 1:
            raise ResponderError("version must be positive")
        if self.size_bytes <= 0:
            raise ResponderError("size_bytes must be positive")
        object.__setattr__(self, "facts", MappingProxyType(dict(self.facts)))


@dataclass(frozen=True)
class Response:
    body: str
    model_version: int
    service_time_s: float


def answerable(model: PersonalModel, topic: str, sender: str) -> bool:
    fact = model.facts.get(topic)
    return fact is not None and fact.visible_to(sender, model.owner)


def generate(
    model: PersonalModel,
    msg: Message,
    stages: Iterable[str] = ("text",),
    cold: bool = False,
) -> Response:
    if msg.recipient != model.owner:
        raise ResponderError(f"message for {msg.recipient!r} sent to model of {model.owner!r}")
    if not answerable(model, msg.topic, msg.sender):
        raise ResponderError(f"topic {msg.topic!r} is not answerable for sender {msg.sender!r}")
    body = apply_disclosure(model.facts[msg.topic].response)
    return Response(body, model.version, service_time(model.profile, stages, cold))


def learn(model: PersonalModel, topic: str, user_reply: str, sender: str) -> PersonalModel:
    """Fold a real reply into the model as a new version.

    The learned fact is visible only to ``sender``, the person who asked.
    """
    if not user_reply:
        raise ResponderError("cannot learn from an empty reply")
    facts = dict(model.facts)
    facts[topic] = Fact.for_group(user_reply, {sender})
    return replace(model, version=model.version + 1, facts=facts)


def merge_facts(model: PersonalModel, extra: Mapping[str, Fact]) -> PersonalModel:
    facts = dict(model.facts)
    facts.update(extra)
    return replace(model, version=model.version + 1, facts=facts)

