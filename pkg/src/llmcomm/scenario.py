"""Scenario files: parsing, validation and baseline derivation.

A scenario is one JSON document::

    {"seed": 7, "duration_s": 3600,
     "topology": {"nodes": [...], "links": [...], "access": {...}},
     "users": [{"id": "C", "attach": "edge3", "status": "Away",
                "model": {"size_bytes": ..., "facts": {...}, "placements": [...]}}],
     "flows": [{"sender": "A", "recipient": "C", "rate_per_s": 0.5,
                "msg_bytes": 512, "topics": {"lunch": 1.0}}],
     "settings": {...}}

Each user gets a device node named after the user id, linked to its
``attach`` edge node. Unknown keys anywhere are rejected.
"""

from __future__ import annotations

import copy
import json
import math
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Any, Optional

from .lifecycle import DEFAULT_FINETUNE_FACTOR, DEFAULT_PARALLELISM, TrainingSpec
from .netsim import ACCESS, CORE, DATACENTER, DEVICE, EDGE, DisconnectedTopologyError, Link, Topology, TopologyError
from .protocol import PresenceStatus, ProtocolError, Status
from .responder import STAGES, Fact, ResponderError, ServiceProfile, Visibility
from .workload import MASK64, Flow, ScenarioParams, StatusChange, WorkloadError

DRAIN_POLICIES = ("always-human", "delegate-if-answerable", "seeded")
PROPAGATION_MODES = ("immediate", "batch")


class ScenarioError(ValueError):
    code = "invalid-scenario"

    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


class UnknownKeyError(ScenarioError):
    code = "unknown-key"


class InvalidProbabilityError(ScenarioError):
    code = "invalid-probability"


class TopologyConfigError(ScenarioError):
    code = "invalid-topology"


class DisconnectedTopologyConfigError(TopologyConfigError):
    code = "disconnected-topology"


@dataclass(frozen=True)
class Settings:
    control_bytes: int = 64
    reply_delay_s: float = 60.0
    propagation: str = "batch"
    propagation_interval_s: float = 3600.0
    parallelism: float = DEFAULT_PARALLELISM
    finetune_factor: float = DEFAULT_FINETUNE_FACTOR
    stages: tuple[str, ...] = ("text",)
    horizon_s: Optional[float] = None


@dataclass(frozen=True)
class ModelConfig:
    size_bytes: int
    facts: dict[str, Fact]
    profile: ServiceProfile = ServiceProfile()
    placements: tuple[str, ...] = ()
    training: Optional[TrainingSpec] = None
    stages: Optional[tuple[str, ...]] = None


@dataclass(frozen=True)
class UserConfig:
    id: str
    attach: str
    home: str
    status: PresenceStatus
    allowlist: frozenset[str] = frozenset()
    schedule: tuple[StatusChange, ...] = ()
    drain_policy: str = "delegate-if-answerable"
    model: Optional[ModelConfig] = None


@dataclass(frozen=True)
class Scenario:
    seed: int
    duration_s: float
    topology: Topology
    users: dict[str, UserConfig]
    flows: tuple[Flow, ...]
    settings: Settings = Settings()
    p_answerable_unknown: float = 0.0
    raw: dict = field(default_factory=dict, compare=False, repr=False)

    def params(self) -> ScenarioParams:
        schedule = [sc for u in self.users.values() for sc in u.schedule]
        return ScenarioParams(
            seed=self.seed,
            duration_s=self.duration_s,
            flows=list(self.flows),
            status_schedule=schedule,
            p_answerable_unknown=self.p_answerable_unknown,
        )

    def with_seed(self, seed: int) -> "Scenario":
        raw = copy.deepcopy(self.raw)
        raw["seed"] = seed
        return parse_scenario(raw)

    def baseline(self) -> "Scenario":
        """Same workload with every status forced Active and no LLM delegation."""
        active = PresenceStatus.active()
        users = {
            uid: replace(
                u,
                status=active,
                allowlist=frozenset(),
                schedule=tuple(StatusChange(sc.user, sc.at, active) for sc in u.schedule),
                drain_policy="always-human",
            )
            for uid, u in self.users.items()
        }
        return replace(self, users=users)


def _keys(obj: Any, where: str, required: set[str], optional: set[str] = frozenset()) -> dict:
    if not isinstance(obj, dict):
        raise ScenarioError(where, f"expected an object, got {type(obj).__name__}")
    unknown = sorted(set(obj) - required - set(optional))
    if unknown:
        raise UnknownKeyError(f"{where}.{unknown[0]}" if where else unknown[0], "unknown key")
    missing = sorted(required - set(obj))
    if missing:
        raise ScenarioError(f"{where}.{missing[0]}" if where else missing[0], "missing required key")
    return obj


def _num(v: Any, key: str, *, positive: bool = False, nonneg: bool = False) -> float:
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
        raise ScenarioError(key, f"expected a number, got {v!r}")
    if positive and not v > 0:
        raise ScenarioError(key, f"must be > 0, got {v!r}")
    if nonneg and v < 0:
        raise ScenarioError(key, f"must be >= 0, got {v!r}")
    return float(v)


def _int(v: Any, key: str, *, positive: bool = False, nonneg: bool = False) -> int:
    if isinstance(v, bool) or not isinstance(v, int):
        if isinstance(v, float) and v.is_integer():
            v = int(v)
        else:
            raise ScenarioError(key, f"expected an integer, got {v!r}")
    if positive and v <= 0:
        raise ScenarioError(key, f"must be > 0, got {v!r}")
    if nonneg and v < 0:
        raise ScenarioError(key, f"must be >= 0, got {v!r}")
    return v


def _str(v: Any, key: str) -> str:
    if not isinstance(v, str) or not v:
        raise ScenarioError(key, f"expected a non-empty string, got {v!r}")
    return v


def _str_list(v: Any, key: str) -> list[str]:
    if not isinstance(v, list):
        raise ScenarioError(key, "expected a list of strings")
    return [_str(x, f"{key}[{i}]") for i, x in enumerate(v)]


def _status(v: Any, key: str, default_allow: frozenset[str]) -> PresenceStatus:
    if isinstance(v, str):
        variant, allow = v, None
    else:
        d = _keys(v, key, {"variant"}, {"allowlist"})
        variant = d["variant"]
        allow = _str_list(d["allowlist"], f"{key}.allowlist") if "allowlist" in d else None
    try:
        status = Status(variant)
    except ValueError:
        raise ScenarioError(key, f"unknown status {variant!r}") from None
    if status is not Status.BUSY:
        if allow:
            raise ScenarioError(key, "allowlist only applies to Busy")
        return PresenceStatus(status)
    return PresenceStatus.busy(default_allow if allow is None else allow)


def _settings(v: Any) -> Settings:
    d = _keys(v, "settings", set(), {f for f in Settings.__dataclass_fields__})
    kw: dict[str, Any] = {}
    if "control_bytes" in d:
        kw["control_bytes"] = _int(d["control_bytes"], "settings.control_bytes", nonneg=True)
    if "reply_delay_s" in d:
        kw["reply_delay_s"] = _num(d["reply_delay_s"], "settings.reply_delay_s", nonneg=True)
    if "propagation" in d:
        if d["propagation"] not in PROPAGATION_MODES:
            raise ScenarioError("settings.propagation", f"expected one of {PROPAGATION_MODES}")
        kw["propagation"] = d["propagation"]
    if "propagation_interval_s" in d:
        kw["propagation_interval_s"] = _num(d["propagation_interval_s"], "settings.propagation_interval_s", positive=True)
    if "parallelism" in d:
        kw["parallelism"] = _num(d["parallelism"], "settings.parallelism", positive=True)
    if "finetune_factor" in d:
        kw["finetune_factor"] = _num(d["finetune_factor"], "settings.finetune_factor", positive=True)
    if "stages" in d:
        kw["stages"] = _stages(d["stages"], "settings.stages")
    if d.get("horizon_s") is not None:
        kw["horizon_s"] = _num(d["horizon_s"], "settings.horizon_s", nonneg=True)
    return Settings(**kw)


def _stages(v: Any, key: str) -> tuple[str, ...]:
    stages = _str_list(v, key)
    if not stages or set(stages) - STAGES:
        raise ScenarioError(key, f"stages must be a non-empty subset of {sorted(STAGES)}")
    return tuple(sorted(set(stages)))


def _fact(v: Any, key: str) -> Fact:
    if isinstance(v, str):
        return Fact.public(v)
    d = _keys(v, key, {"response"}, {"visibility", "group"})
    vis = d.get("visibility", "public")
    try:
        vis = Visibility(vis)
    except ValueError:
        raise ScenarioError(f"{key}.visibility", f"unknown visibility {vis!r}") from None
    group = _str_list(d.get("group", []), f"{key}.group")
    if group and vis is not Visibility.GROUP:
        raise ScenarioError(f"{key}.group", "group members only apply to group visibility")
    try:
        return Fact(_str(d["response"], f"{key}.response"), vis, frozenset(group))
    except ResponderError as exc:
        raise ScenarioError(key, str(exc)) from None


def _model(v: Any, key: str, owner: str, nodes: dict[str, str]) -> ModelConfig:
    d = _keys(v, key, {"size_bytes"}, {"facts", "profile", "placements", "training", "stages"})
    facts_raw = d.get("facts", {})
    if not isinstance(facts_raw, dict):
        raise ScenarioError(f"{key}.facts", "expected an object")
    facts = {_str(t, f"{key}.facts"): _fact(f, f"{key}.facts.{t}") for t, f in facts_raw.items()}
    profile = ServiceProfile()
    if "profile" in d:
        p = _keys(d["profile"], f"{key}.profile", set(), set(ServiceProfile.__dataclass_fields__))
        profile = ServiceProfile(**{k: _num(x, f"{key}.profile.{k}", nonneg=True) for k, x in p.items()})
    placements = _str_list(d.get("placements", []), f"{key}.placements")
    for i, n in enumerate(placements):
        if n not in nodes:
            raise TopologyConfigError(f"{key}.placements[{i}]", f"unknown node {n!r}")
    if len(set(placements)) != len(placements):
        raise ScenarioError(f"{key}.placements", "duplicate placement")
    size = _int(d["size_bytes"], f"{key}.size_bytes", positive=True)
    training = None
    if "training" in d:
        t = _keys(d["training"], f"{key}.training", {"gpu_hours"}, {"from_pretrained", "target_ppl"})
        fp = t.get("from_pretrained", False)
        if not isinstance(fp, bool):
            raise ScenarioError(f"{key}.training.from_pretrained", "expected a boolean")
        training = TrainingSpec(
            owner=owner,
            gpu_hours=_num(t["gpu_hours"], f"{key}.training.gpu_hours", positive=True),
            from_pretrained=fp,
            target_ppl=_num(t.get("target_ppl", 1.5), f"{key}.training.target_ppl", positive=True),
            result_size_bytes=size,
        )
    stages = _stages(d["stages"], f"{key}.stages") if "stages" in d else None
    return ModelConfig(size, facts, profile, tuple(placements), training, stages)


def _topology(v: Any, users_raw: list) -> tuple[Topology, dict[str, str]]:
    d = _keys(v, "topology", {"nodes", "links"}, {"access"})
    nodes: dict[str, str] = {}
    if not isinstance(d["nodes"], list):
        raise TopologyConfigError("topology.nodes", "expected a list")
    for i, n in enumerate(d["nodes"]):
        nd = _keys(n, f"topology.nodes[{i}]", {"id", "kind"})
        nid = _str(nd["id"], f"topology.nodes[{i}].id")
        if nd["kind"] not in (EDGE, DATACENTER):
            raise TopologyConfigError(f"topology.nodes[{i}].kind", "expected 'edge' or 'datacenter'")
        if nid in nodes:
            raise TopologyConfigError(f"topology.nodes[{i}].id", f"duplicate node {nid!r}")
        nodes[nid] = nd["kind"]
    access = {"latency_s": 0.005, "bandwidth_bps": 100e6}
    if "access" in d:
        a = _keys(d["access"], "topology.access", set(), {"latency_s", "bandwidth_bps"})
        if "latency_s" in a:
            access["latency_s"] = _num(a["latency_s"], "topology.access.latency_s", nonneg=True)
        if "bandwidth_bps" in a:
            access["bandwidth_bps"] = _num(a["bandwidth_bps"], "topology.access.bandwidth_bps", positive=True)

    links: list[Link] = []
    if not isinstance(d["links"], list):
        raise TopologyConfigError("topology.links", "expected a list")
    for i, l in enumerate(d["links"]):
        key = f"topology.links[{i}]"
        ld = _keys(l, key, {"a", "b", "latency_s", "bandwidth_bps"}, {"class"})
        a, b = _str(ld["a"], f"{key}.a"), _str(ld["b"], f"{key}.b")
        for end in ("a", "b"):
            if ld[end] not in nodes:
                raise TopologyConfigError(f"{key}.{end}", f"unknown node {ld[end]!r}")
        if ld.get("class", CORE) != CORE:
            raise TopologyConfigError(f"{key}.class", "links between edge/datacenter nodes are core")
        try:
            links.append(Link(a, b, _num(ld["latency_s"], f"{key}.latency_s", nonneg=True),
                              _num(ld["bandwidth_bps"], f"{key}.bandwidth_bps", positive=True), CORE))
        except TopologyError as exc:
            raise TopologyConfigError(key, str(exc)) from None

    for i, u in enumerate(users_raw):
        if not isinstance(u, dict):
            raise ScenarioError(f"users[{i}]", "expected an object")
        uid, attach = u.get("id"), u.get("attach")
        uid = _str(uid, f"users[{i}].id")
        if uid in nodes:
            raise TopologyConfigError(f"users[{i}].id", f"user id {uid!r} collides with a node id")
        attach = _str(attach, f"users[{i}].attach")
        if nodes.get(attach) != EDGE:
            raise TopologyConfigError(f"users[{i}].attach", f"{attach!r} is not an edge node")
        nodes[uid] = DEVICE
        links.append(Link(uid, attach, access["latency_s"], access["bandwidth_bps"], ACCESS))
    try:
        topo = Topology(nodes, links)
    except DisconnectedTopologyError as exc:
        raise DisconnectedTopologyConfigError("topology", str(exc)) from None
    except TopologyError as exc:
        raise TopologyConfigError("topology", str(exc)) from None
    return topo, nodes


TOP_REQUIRED = {"seed", "duration_s", "topology", "users", "flows"}
TOP_OPTIONAL = {"settings", "p_answerable_unknown", "description"}


def parse_scenario(raw: dict) -> Scenario:
    d = _keys(raw, "", TOP_REQUIRED, TOP_OPTIONAL)
    seed = _int(d["seed"], "seed", nonneg=True)
    if seed > MASK64:
        raise ScenarioError("seed", "must fit in 64 bits")
    duration = _num(d["duration_s"], "duration_s", positive=True)
    p_unknown = _num(d.get("p_answerable_unknown", 0.0), "p_answerable_unknown")
    if not 0.0 <= p_unknown <= 1.0:
        raise InvalidProbabilityError("p_answerable_unknown", "must lie in [0, 1]")
    settings = _settings(d.get("settings", {}))
    if not isinstance(d["users"], list) or not d["users"]:
        raise ScenarioError("users", "expected a non-empty list")
    topo, nodes = _topology(d["topology"], d["users"])
    datacenters = topo.datacenters()
    if not datacenters:
        raise TopologyConfigError("topology.nodes", "at least one datacenter is required")

    users: dict[str, UserConfig] = {}
    for i, u in enumerate(d["users"]):
        key = f"users[{i}]"
        ud = _keys(u, key, {"id", "attach"},
                   {"status", "allowlist", "status_schedule", "drain_policy", "home", "model"})
        uid = ud["id"]
        if uid in users:
            raise ScenarioError(f"{key}.id", f"duplicate user {uid!r}")
        allow = frozenset(_str_list(ud.get("allowlist", []), f"{key}.allowlist"))
        status = _status(ud.get("status", "Active"), f"{key}.status", allow)
        schedule = []
        sched_raw = ud.get("status_schedule", [])
        if not isinstance(sched_raw, list):
            raise ScenarioError(f"{key}.status_schedule", "expected a list")
        for j, s in enumerate(sched_raw):
            skey = f"{key}.status_schedule[{j}]"
            sd = _keys(s, skey, {"at", "status"}, {"allowlist"})
            st = sd["status"] if "allowlist" not in sd else {"variant": sd["status"], "allowlist": sd["allowlist"]}
            schedule.append(StatusChange(uid, _num(sd["at"], f"{skey}.at", nonneg=True),
                                         _status(st, f"{skey}.status", allow)))
        policy = ud.get("drain_policy", "delegate-if-answerable")
        if policy not in DRAIN_POLICIES:
            raise ScenarioError(f"{key}.drain_policy", f"expected one of {DRAIN_POLICIES}")
        home = ud.get("home", datacenters[0])
        if nodes.get(home) != DATACENTER:
            raise TopologyConfigError(f"{key}.home", f"{home!r} is not a datacenter")
        model = _model(ud["model"], f"{key}.model", uid, nodes) if "model" in ud else None
        users[uid] = UserConfig(uid, ud["attach"], home, status, allow, tuple(schedule), policy, model)

    flows = []
    if not isinstance(d["flows"], list):
        raise ScenarioError("flows", "expected a list")
    for i, f in enumerate(d["flows"]):
        key = f"flows[{i}]"
        fd = _keys(f, key, {"sender", "recipient", "rate_per_s", "msg_bytes", "topics"},
                   {"reply_bytes", "start_s", "count"})
        for end in ("sender", "recipient"):
            if fd[end] not in users:
                raise ScenarioError(f"{key}.{end}", f"unknown user {fd[end]!r}")
        topics = fd["topics"]
        if not isinstance(topics, dict) or not topics:
            raise InvalidProbabilityError(f"{key}.topics", "expected a non-empty topic -> probability map")
        probs = {t: _num(p, f"{key}.topics.{t}") for t, p in topics.items()}
        total = math.fsum(probs.values())
        if any(not 0 <= p <= 1 for p in probs.values()) or abs(total - 1.0) > 1e-9:
            raise InvalidProbabilityError(
                f"{key}.topics", f"flow {fd['sender']}->{fd['recipient']} topic probabilities sum to {total:g}, not 1"
            )
        try:
            flows.append(Flow(
                sender=fd["sender"],
                recipient=fd["recipient"],
                rate_per_s=_num(fd["rate_per_s"], f"{key}.rate_per_s", positive=True),
                msg_bytes=_int(fd["msg_bytes"], f"{key}.msg_bytes", positive=True),
                topics=probs,
                reply_bytes=_int(fd["reply_bytes"], f"{key}.reply_bytes", positive=True) if "reply_bytes" in fd else None,
                start_s=_num(fd.get("start_s", 0.0), f"{key}.start_s", nonneg=True),
                count=_int(fd["count"], f"{key}.count", nonneg=True) if fd.get("count") is not None else None,
            ))
        except (WorkloadError, ProtocolError) as exc:
            raise ScenarioError(key, str(exc)) from None

    return Scenario(seed, duration, topo, users, tuple(flows), settings, p_unknown, copy.deepcopy(raw))


def load_scenario(path: str | Path) -> Scenario:
    try:
        raw = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ScenarioError("<file>", f"not valid JSON: {exc}") from None
    return parse_scenario(raw)


def packaged_path(name: str) -> Path:
    """Path of a scenario shipped in ``llmcomm/data`` (``three_users``, ``breakeven``)."""
    return Path(str(resources.files("llmcomm") / "data" / f"{name}.json"))


def load_packaged(name: str) -> Scenario:
    return load_scenario(packaged_path(name))


def set_dotted(raw: dict, dotted: str, value: Any) -> dict:
    """Copy of ``raw`` with ``a.b.0.c`` set to ``value``; list indices are integers."""
    out = copy.deepcopy(raw)
    parts = dotted.split(".")
    cur: Any = out
    for p in parts[:-1]:
        try:
            cur = cur[int(p)] if isinstance(cur, list) else cur[p]
        except (KeyError, IndexError, ValueError):
            raise ScenarioError(dotted, f"no such path component {p!r}") from None
    last = parts[-1]
    if isinstance(cur, list):
        try:
            cur[int(last)] = value
        except (IndexError, ValueError):
            raise ScenarioError(dotted, f"no such index {last!r}") from None
    elif isinstance(cur, dict):
        cur[last] = value
    else:
        raise ScenarioError(dotted, "path does not lead into an object")
    return out
