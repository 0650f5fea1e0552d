"""Scenario driver: feeds a scenario's workload through the routing protocol.

Message handling per recipient status:

* a control-plane status lookup always goes sender device -> its edge node;
* DeliverDirect takes the shortest path to the recipient's device;
* LLMServe runs on the replica closest to the sender (query there, answer back);
* ForwardToRecipient goes via the replica that judged it (if any) to the
  owner's home datacenter, then down to the recipient's device;
* HoldInactive stops at the home datacenter mailbox until the owner is Active.

Humans reply ``reply_delay_s`` after a message reaches their device. A reply
to a message the model could not answer is learned, producing a new model
version that is propagated to stale replicas.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

from .costmodel import CostReport
from .lifecycle import ModelRegistry, Placement, train
from .metrics import ReductionReport, RunReport, compare, summarize
from .netsim import Engine, Event, Link, TraceEntry, TrafficCounters, concat_paths, route_path, transfer
from .protocol import (
    DrainAction,
    HoldReason,
    Inbox,
    InteractionLog,
    InteractionLogRecord,
    Message,
    PresenceStatus,
    RoutingAction,
    Status,
    always_human,
    apply_disclosure,
    decide_route,
    delegate_if_answerable,
    on_status_change,
)
from .responder import PersonalModel, Response, answerable, generate, learn, service_time
from .scenario import Scenario
from .workload import UNKNOWN_TOPIC, PrngState, StatusChange, WorkloadEvent, generate as generate_workload, prng_next


@dataclass
class LearnEvent:
    at: float
    owner: str
    version: int
    n_facts: int


@dataclass
class SimResult:
    scenario: Scenario
    trace: list[TraceEntry]
    logs: InteractionLog
    registry: ModelRegistry
    inboxes: dict[str, Inbox]
    counters: TrafficCounters
    training_costs: dict[str, CostReport] = field(default_factory=dict)
    learn_events: list[LearnEvent] = field(default_factory=list)


def _walk(start: str, links: tuple[Link, ...]) -> list[str]:
    nodes = [start]
    for link in links:
        nodes.append(link.other(nodes[-1]))
    return nodes


class Simulation:
    def __init__(self, scenario: Scenario):
        self.sc = scenario
        self.topo = scenario.topology
        self.settings = scenario.settings
        self.engine = Engine()
        self.registry = ModelRegistry(self.topo)
        self.logs = InteractionLog()
        self.counters = TrafficCounters()
        self.status: dict[str, PresenceStatus] = {uid: u.status for uid, u in scenario.users.items()}
        self.inboxes: dict[str, Inbox] = {uid: Inbox(uid) for uid in scenario.users}
        self.forced: dict[int, bool] = {}
        self.reply_bytes: dict[int, int] = {}
        self.dirty: set[str] = set()
        self.tick_pending = False
        self.training_costs: dict[str, CostReport] = {}
        self.learn_events: list[LearnEvent] = []
        # One splitmix64 stream per user for the "seeded" drain policy.
        self.drain_rng = {
            uid: PrngState(scenario.seed ^ (0xD1B54A32D192ED03 * (i + 1)))
            for i, uid in enumerate(sorted(scenario.users))
        }

    # -- setup ------------------------------------------------------------

    def _setup(self) -> None:
        for uid in sorted(self.sc.users):
            u = self.sc.users[uid]
            if u.model is None:
                continue
            m = u.model
            if m.training is not None:
                res = train(
                    m.training,
                    0.0,
                    facts=m.facts,
                    profile=m.profile,
                    parallelism=self.settings.parallelism,
                    finetune_factor=self.settings.finetune_factor,
                )
                self.training_costs[uid] = res.cost
                self.engine.schedule(res.completion, "training-complete", res.model)
            else:
                self.registry.install(
                    PersonalModel(uid, 1, m.size_bytes, m.facts, m.profile), u.home
                )
                self._place_all(uid, 0.0)
        for wev in generate_workload(self.sc.params()):
            if wev.kind == "status":
                self.engine.schedule(wev.at, "status-change", wev.status_change)
            else:
                msg = wev.message
                if wev.forced_answerable is not None:
                    self.forced[msg.id] = wev.forced_answerable
                self.reply_bytes[msg.id] = self.sc.flows[wev.flow_index].response_bytes
                self.engine.schedule(wev.at, "message-arrival", wev)

    def _place_all(self, owner: str, now: float) -> None:
        for node in self.sc.users[owner].model.placements:
            self._start_transfer(self.registry.offload(owner, node), now)

    def _start_transfer(self, p: Placement, now: float) -> None:
        if p.transfer_bytes == 0:
            return
        home = self.registry.entry(p.owner).home
        path = route_path(self.topo, home, p.node)
        lat, _ = transfer(path, p.transfer_bytes)
        self.engine.schedule(now + lat, "transfer-complete", (p, path, lat))

    # -- helpers ----------------------------------------------------------

    def _stages(self, owner: str) -> tuple[str, ...]:
        m = self.sc.users[owner].model
        return m.stages if m is not None and m.stages else self.settings.stages

    def _answerable(self, model: PersonalModel, msg: Message) -> bool:
        if msg.id in self.forced:
            return self.forced[msg.id]
        return answerable(model, msg.topic, msg.sender)

    def _respond(self, model: PersonalModel, msg: Message, cold: bool) -> Response:
        stages = self._stages(model.owner)
        if msg.id in self.forced:
            body = apply_disclosure(f"{model.owner} would answer about {msg.topic}")
            return Response(body, model.version, service_time(model.profile, stages, cold))
        return generate(model, msg, stages, cold)

    def _drain_policy(self, owner: str):
        name = self.sc.users[owner].drain_policy
        if name == "always-human":
            return always_human

        def can_answer(msg: Message) -> bool:
            return owner in self.registry and self._answerable(self.registry.latest(owner), msg)

        if name == "delegate-if-answerable":
            return delegate_if_answerable(can_answer)

        def seeded(msg: Message) -> DrainAction:
            self.drain_rng[owner], out = prng_next(self.drain_rng[owner])
            if out >> 63 and can_answer(msg):
                return DrainAction.DELEGATE_TO_LLM
            return DrainAction.HUMAN_REPLY

        return seeded

    def _log(self, ts: float, owner: str, msg: Message, resp: Response, node: str) -> None:
        self.logs.append(InteractionLogRecord(
            ts=ts,
            owner=owner,
            sender=msg.sender,
            query=msg.body,
            response=resp.body,
            model_version=resp.model_version,
            owner_status=self.status[owner].variant,
            serving_node=node,
        ))

    def _mark_dirty(self, owner: str, now: float) -> None:
        if self.settings.propagation == "immediate":
            for p in self.registry.propagate(owner, now):
                self._start_transfer(p, now)
            return
        self.dirty.add(owner)
        if not self.tick_pending:
            interval = self.settings.propagation_interval_s
            tick = (math.floor(now / interval) + 1) * interval
            self.engine.schedule(tick, "propagation-tick")
            self.tick_pending = True

    # -- handlers ---------------------------------------------------------

    def handle(self, ev: Event) -> list[TraceEntry]:
        return getattr(self, "_on_" + ev.kind.replace("-", "_"))(ev)

    def _on_training_complete(self, ev: Event) -> list[TraceEntry]:
        model: PersonalModel = ev.payload
        owner = model.owner
        self.registry.install(model, self.sc.users[owner].home)
        self._place_all(owner, ev.at)
        return [TraceEntry(at=ev.at, kind="training-complete", owner=owner,
                           serving_node=self.sc.users[owner].home, model_version=model.version)]

    def _on_transfer_complete(self, ev: Event) -> list[TraceEntry]:
        p, path, lat = ev.payload
        _, charges = transfer(path, p.transfer_bytes, self.counters)
        self.registry.complete(p)
        home = self.registry.entry(p.owner).home
        return [TraceEntry(at=ev.at, kind="transfer-complete", owner=p.owner, serving_node=p.node,
                           model_version=p.version, path=_walk(home, path), charges=charges,
                           network_s=lat, bytes=p.transfer_bytes)]

    def _on_status_change(self, ev: Event) -> list[TraceEntry]:
        sc: StatusChange = ev.payload
        user = sc.user
        self.status[user] = sc.status
        home = self.sc.users[user].home
        entry = TraceEntry(at=ev.at, kind="status-change", owner=user, owner_status=sc.status.variant.value)
        cb = self.settings.control_bytes
        # Publish to the home datacenter, which fans presence out to every edge.
        lat, charges = transfer(route_path(self.topo, user, home), cb, self.counters)
        for edge in self.topo.edges():
            _, ch = transfer(route_path(self.topo, home, edge), cb, self.counters)
            charges += ch
        entry.charges = charges
        entry.network_s = lat
        decisions = on_status_change(user, sc.status, self.inboxes[user], self._drain_policy(user), ev.at)
        for msg, action in decisions:
            self.engine.schedule(ev.at, "drain", (msg, action))
        if decisions:
            entry.note = f"drain {len(decisions)}"
        return [entry]

    def _on_message_arrival(self, ev: Event) -> list[TraceEntry]:
        wev: WorkloadEvent = ev.payload
        msg = wev.message
        sender, owner = msg.sender, msg.recipient
        status = self.status[owner]
        home = self.sc.users[owner].home
        now = ev.at

        edge = self.topo.attachment[sender]
        lookup_lat, charges = transfer((self.topo.link(sender, edge),), self.settings.control_bytes, self.counters)

        allow = status.allows(sender)
        replica: Optional[str] = None
        model: Optional[PersonalModel] = None
        ans = False
        if status.variant in (Status.BUSY, Status.AWAY) and not allow:
            replica = self.registry.resolve_replica(owner, sender, self.topo)
            if replica is not None:
                model = self.registry.model_at(owner, replica)
                ans = self._answerable(model, msg)
        action = decide_route(status, allow, replica is not None, ans)

        entry = TraceEntry(at=now, kind="message", msg_id=msg.id, sender=sender, recipient=owner,
                           topic=msg.topic, action=action.value, owner=owner,
                           owner_status=status.variant.value)

        if action is RoutingAction.DELIVER_DIRECT:
            path = route_path(self.topo, sender, owner)
            lat, ch = transfer(path, msg.size_bytes, self.counters)
            entry.path = _walk(sender, path)
            entry.network_s = lookup_lat + lat
            entry.latency_s = entry.network_s
            self.engine.schedule(now + entry.network_s + self.settings.reply_delay_s, "human-reply", (msg, False))
            charges += ch

        elif action is RoutingAction.LLM_SERVE:
            q_path = concat_paths(self.topo, sender, replica)
            r_path = concat_paths(self.topo, replica, sender)
            q_lat = r_lat = 0.0
            if q_path:
                q_lat, ch = transfer(q_path, msg.size_bytes, self.counters)
                charges += ch
                r_lat, ch = transfer(r_path, self.reply_bytes[msg.id], self.counters)
                charges += ch
            resp = self._respond(model, msg, self.registry.take_cold(owner, replica))
            log_ts = now + lookup_lat + q_lat + resp.service_time_s
            self._log(log_ts, owner, msg, resp, replica)
            entry.path = _walk(sender, q_path + r_path)
            entry.serving_node = replica
            entry.model_version = resp.model_version
            entry.response = resp.body
            entry.log_ts = log_ts
            entry.network_s = lookup_lat + q_lat + r_lat
            entry.service_s = resp.service_time_s
            entry.latency_s = entry.network_s + entry.service_s

        elif action is RoutingAction.FORWARD_TO_RECIPIENT:
            waypoints = (sender, replica, home, owner) if replica is not None else (sender, home, owner)
            path = concat_paths(self.topo, *waypoints)
            lat, ch = transfer(path, msg.size_bytes, self.counters)
            charges += ch
            entry.path = _walk(sender, path)
            entry.serving_node = replica
            entry.model_version = model.version if model is not None else None
            entry.network_s = lookup_lat + lat
            entry.latency_s = entry.network_s
            learnable = model is not None and msg.topic != UNKNOWN_TOPIC
            self.engine.schedule(now + entry.network_s + self.settings.reply_delay_s, "human-reply", (msg, learnable))

        else:  # HoldInactive
            path = route_path(self.topo, sender, home)
            lat, ch = transfer(path, msg.size_bytes, self.counters)
            charges += ch
            entry.path = _walk(sender, path)
            entry.network_s = lookup_lat + lat
            self.inboxes[owner].hold(msg, HoldReason.INACTIVE_HOLD)

        entry.charges = charges
        return [entry]

    def _on_human_reply(self, ev: Event) -> list[TraceEntry]:
        msg, learnable = ev.payload
        replier, asker = msg.recipient, msg.sender
        reply = f"{replier} to {asker} re {msg.topic}: reply #{msg.id}"
        path = route_path(self.topo, replier, asker)
        lat, charges = transfer(path, self.reply_bytes[msg.id], self.counters)
        entry = TraceEntry(at=ev.at, kind="human-reply", msg_id=msg.id, sender=replier, recipient=asker,
                           topic=msg.topic, owner=replier, owner_status=self.status[replier].variant.value,
                           path=_walk(replier, path), charges=charges, network_s=lat)
        if learnable and replier in self.registry:
            new = learn(self.registry.latest(replier), msg.topic, reply, asker)
            self.registry.install(new)
            self.learn_events.append(LearnEvent(ev.at, replier, new.version, len(new.facts)))
            entry.model_version = new.version
            entry.note = "learned"
            self._mark_dirty(replier, ev.at)
        return [entry]

    def _on_propagation_tick(self, ev: Event) -> list[TraceEntry]:
        self.tick_pending = False
        started = []
        for owner in sorted(self.dirty):
            for p in self.registry.propagate(owner, ev.at):
                self._start_transfer(p, ev.at)
                if p.transfer_bytes:
                    started.append(f"{owner}@{p.node}:v{p.version}")
        self.dirty.clear()
        return [TraceEntry(at=ev.at, kind="propagation-tick", note=" ".join(started) or None)]

    def _on_drain(self, ev: Event) -> list[TraceEntry]:
        msg, action = ev.payload
        owner, sender = msg.recipient, msg.sender
        home = self.sc.users[owner].home
        entry = TraceEntry(at=ev.at, kind="drain", msg_id=msg.id, sender=sender, recipient=owner,
                           topic=msg.topic, action=action.value, owner=owner,
                           owner_status=self.status[owner].variant.value)
        if action is DrainAction.HUMAN_REPLY:
            path = route_path(self.topo, home, owner)
            lat, entry.charges = transfer(path, msg.size_bytes, self.counters)
            entry.path = _walk(home, path)
            entry.network_s = lat
            self.engine.schedule(ev.at + lat + self.settings.reply_delay_s, "human-reply", (msg, False))
        else:
            model = self.registry.model_at(owner, home)
            resp = self._respond(model, msg, self.registry.take_cold(owner, home))
            path = route_path(self.topo, home, sender)
            lat, entry.charges = transfer(path, self.reply_bytes[msg.id], self.counters)
            log_ts = ev.at + resp.service_time_s
            self._log(log_ts, owner, msg, resp, home)
            entry.path = _walk(home, path)
            entry.serving_node = home
            entry.model_version = resp.model_version
            entry.response = resp.body
            entry.log_ts = log_ts
            entry.network_s = lat
            entry.service_s = resp.service_time_s
        return [entry]

    # -- run --------------------------------------------------------------

    def run(self) -> SimResult:
        self._setup()
        trace = self.engine.run(self.handle, self.settings.horizon_s)
        return SimResult(
            scenario=self.sc,
            trace=trace,
            logs=self.logs,
            registry=self.registry,
            inboxes=self.inboxes,
            counters=self.counters,
            training_costs=self.training_costs,
            learn_events=self.learn_events,
        )


def simulate(scenario: Scenario) -> SimResult:
    return Simulation(scenario).run()


@dataclass
class Experiment:
    result: SimResult
    baseline: SimResult
    report: RunReport
    baseline_report: RunReport

    def reduction(self, include_model_transfer: bool = False) -> ReductionReport:
        return compare(self.baseline_report, self.report, include_model_transfer)


def run_with_baseline(scenario: Scenario) -> Experiment:
    """Run ``scenario`` and its forced-Active baseline under the same seed."""
    res = simulate(scenario)
    base = simulate(scenario.baseline())
    return Experiment(res, base, summarize(res.trace), summarize(base.trace))
