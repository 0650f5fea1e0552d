"""Topology, byte accounting and the discrete-event engine."""

from __future__ import annotations

import heapq
import itertools
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Any, Callable, Iterable, Optional

DEVICE, EDGE, DATACENTER = "device", "edge", "datacenter"
NODE_KINDS = (DEVICE, EDGE, DATACENTER)
ACCESS, CORE = "access", "core"


class TopologyError(ValueError):
    pass


class DisconnectedTopologyError(TopologyError):
    pass


class SchedulingError(ValueError):
    pass


@dataclass(frozen=True)
class Link:
    a: str
    b: str
    latency_s: float
    bandwidth_bps: float
    cls: str

    def __post_init__(self):
        if self.a == self.b:
            raise TopologyError(f"self-loop link at {self.a!r}")
        if self.latency_s < 0:
            raise TopologyError(f"link {self.a}-{self.b}: negative latency")
        if not self.bandwidth_bps > 0:
            raise TopologyError(f"link {self.a}-{self.b}: bandwidth must be > 0")
        if self.cls not in (ACCESS, CORE):
            raise TopologyError(f"link {self.a}-{self.b}: unknown class {self.cls!r}")
        if self.a > self.b:
            a, b = self.b, self.a
            object.__setattr__(self, "a", a)
            object.__setattr__(self, "b", b)

    @property
    def id(self) -> str:
        return f"{self.a}~{self.b}"

    def other(self, node: str) -> str:
        return self.b if node == self.a else self.a


def link_class(kind_a: str, kind_b: str) -> str:
    return ACCESS if DEVICE in (kind_a, kind_b) else CORE


class Topology:
    """Devices hang off exactly one edge node; edges and datacenters form the core."""

    def __init__(self, nodes: dict[str, str], links: Iterable[Link]):
        self.nodes = dict(nodes)
        for nid, kind in self.nodes.items():
            if kind not in NODE_KINDS:
                raise TopologyError(f"node {nid!r}: unknown kind {kind!r}")
        self.links: dict[tuple[str, str], Link] = {}
        self._adj: dict[str, list[Link]] = {n: [] for n in self.nodes}
        for link in links:
            for end in (link.a, link.b):
                if end not in self.nodes:
                    raise TopologyError(f"link {link.id}: unknown node {end!r}")
            key = (link.a, link.b)
            if key in self.links:
                raise TopologyError(f"duplicate link {link.id}")
            expected = link_class(self.nodes[link.a], self.nodes[link.b])
            if link.cls != expected:
                raise TopologyError(f"link {link.id}: class {link.cls!r}, expected {expected!r}")
            self.links[key] = link
            self._adj[link.a].append(link)
            self._adj[link.b].append(link)
        self.attachment: dict[str, str] = {}
        for nid, kind in self.nodes.items():
            if kind != DEVICE:
                continue
            adj = self._adj[nid]
            if len(adj) != 1 or self.nodes[adj[0].other(nid)] != EDGE:
                raise TopologyError(f"device {nid!r} must have exactly one link, to an edge node")
            self.attachment[nid] = adj[0].other(nid)
        self._check_connected()
        self._paths: dict[tuple[str, str], tuple[Link, ...]] = {}

    def _check_connected(self) -> None:
        if not self.nodes:
            raise TopologyError("topology has no nodes")
        start = min(self.nodes)
        seen = {start}
        stack = [start]
        while stack:
            n = stack.pop()
            for link in self._adj[n]:
                m = link.other(n)
                if m not in seen:
                    seen.add(m)
                    stack.append(m)
        missing = sorted(set(self.nodes) - seen)
        if missing:
            raise DisconnectedTopologyError(f"nodes unreachable from {start!r}: {missing}")

    def kind(self, node: str) -> str:
        return self.nodes[node]

    def link(self, a: str, b: str) -> Link:
        return self.links[(a, b) if a < b else (b, a)]

    def datacenters(self) -> list[str]:
        return sorted(n for n, k in self.nodes.items() if k == DATACENTER)

    def edges(self) -> list[str]:
        return sorted(n for n, k in self.nodes.items() if k == EDGE)

    def path_latency(self, src: str, dst: str) -> float:
        if src == dst:
            return 0.0
        return sum(l.latency_s for l in route_path(self, src, dst))

    def path_nodes(self, src: str, dst: str) -> list[str]:
        nodes = [src]
        for link in route_path(self, src, dst):
            nodes.append(link.other(nodes[-1]))
        return nodes


def _lat_key(x: float) -> float:
    # Summation order differs between candidate paths; compare at nanosecond grain.
    return round(x, 9)


def route_path(topo: Topology, src: str, dst: str) -> tuple[Link, ...]:
    """Minimum-latency path; ties go to fewer hops, then the lexicographically smaller node sequence."""
    if src == dst:
        raise TopologyError(f"route_path needs distinct endpoints, got {src!r} twice")
    for n in (src, dst):
        if n not in topo.nodes:
            raise TopologyError(f"unknown node {n!r}")
    cached = topo._paths.get((src, dst))
    if cached is not None:
        return cached

    best: dict[str, tuple] = {src: (0.0, 0, (src,))}
    heap = [(0.0, 0, (src,), 0.0, ())]
    done = set()
    while heap:
        lat_k, hops, nodes, lat, links = heapq.heappop(heap)
        node = nodes[-1]
        if node in done:
            continue
        done.add(node)
        if node == dst:
            topo._paths[(src, dst)] = links
            return links
        # Devices are leaves: never relay through someone else's device.
        if node != src and topo.kind(node) == DEVICE:
            continue
        for link in topo._adj[node]:
            nxt = link.other(node)
            if nxt in done:
                continue
            nl = lat + link.latency_s
            cand = (_lat_key(nl), hops + 1, nodes + (nxt,))
            if nxt not in best or cand < best[nxt]:
                best[nxt] = cand
                heapq.heappush(heap, (*cand, nl, links + (link,)))
    raise DisconnectedTopologyError(f"no path from {src!r} to {dst!r}")


def concat_paths(topo: Topology, *waypoints: str) -> tuple[Link, ...]:
    """Path visiting ``waypoints`` in order; repeated consecutive points add nothing."""
    out: tuple[Link, ...] = ()
    for a, b in zip(waypoints, waypoints[1:]):
        if a != b:
            out += route_path(topo, a, b)
    return out


@dataclass
class TrafficCounters:
    by_class: dict[str, int] = field(default_factory=lambda: {ACCESS: 0, CORE: 0})
    by_link: dict[str, int] = field(default_factory=lambda: defaultdict(int))

    def charge(self, link: Link, nbytes: int) -> None:
        self.by_class[link.cls] += nbytes
        self.by_link[link.id] += nbytes


Charge = tuple[str, str, int]  # (link id, class, bytes)


def transfer(
    path: Iterable[Link],
    nbytes: int,
    counters: Optional[TrafficCounters] = None,
) -> tuple[float, list[Charge]]:
    """Store-and-forward transfer time of ``nbytes`` over ``path`` plus per-link charges."""
    path = tuple(path)
    if not path:
        raise TopologyError("transfer needs a non-empty path")
    if nbytes < 0:
        raise TopologyError("negative byte count")
    latency = 0.0
    charges: list[Charge] = []
    for link in path:
        latency += link.latency_s + 8.0 * nbytes / link.bandwidth_bps
        if nbytes:
            charges.append((link.id, link.cls, nbytes))
            if counters is not None:
                counters.charge(link, nbytes)
    return latency, charges


@dataclass(frozen=True)
class Event:
    at: float
    seq: int
    kind: str
    payload: Any = None


TRACE_KEYS = (
    "at", "kind", "msg_id", "sender", "recipient", "topic", "action", "owner",
    "owner_status", "serving_node", "model_version", "path", "charges",
    "network_s", "service_s", "latency_s", "response", "log_ts", "bytes", "note",
)


@dataclass
class TraceEntry:
    at: float
    kind: str
    msg_id: Optional[int] = None
    sender: Optional[str] = None
    recipient: Optional[str] = None
    topic: Optional[str] = None
    action: Optional[str] = None
    owner: Optional[str] = None
    owner_status: Optional[str] = None
    serving_node: Optional[str] = None
    model_version: Optional[int] = None
    path: list[str] = field(default_factory=list)
    charges: list[Charge] = field(default_factory=list)
    network_s: float = 0.0
    service_s: float = 0.0
    latency_s: Optional[float] = None
    response: Optional[str] = None
    log_ts: Optional[float] = None
    bytes: Optional[int] = None
    note: Optional[str] = None

    def to_dict(self) -> dict:
        d = {k: getattr(self, k) for k in TRACE_KEYS}
        d["charges"] = [list(c) for c in self.charges]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TraceEntry":
        kw = {k: d.get(k) for k in TRACE_KEYS}
        kw["charges"] = [tuple(c) for c in d.get("charges", [])]
        kw["path"] = list(d.get("path", []))
        kw["network_s"] = float(d.get("network_s", 0.0))
        kw["service_s"] = float(d.get("service_s", 0.0))
        return cls(**kw)


def trace_jsonl(trace: Iterable[TraceEntry]) -> str:
    from .serialize import dumps_lines

    return dumps_lines(e.to_dict() for e in trace)


Handler = Callable[[Event], Optional[Iterable[TraceEntry]]]


class Engine:
    """Single-threaded event loop ordered by (time, insertion sequence)."""

    def __init__(self, start: float = 0.0):
        self.now = start
        self._queue: list[tuple[float, int, Event]] = []
        self._seq = itertools.count()
        self.trace: list[TraceEntry] = []

    def __len__(self) -> int:
        return len(self._queue)

    def schedule(self, at: float, kind: str, payload: Any = None) -> Event:
        if at < self.now:
            raise SchedulingError(f"cannot schedule {kind!r} at {at} before now={self.now}")
        ev = Event(at, next(self._seq), kind, payload)
        heapq.heappush(self._queue, (at, ev.seq, ev))
        return ev

    def run(self, handler: Handler, horizon: Optional[float] = None) -> list[TraceEntry]:
        while self._queue:
            at, _, ev = heapq.heappop(self._queue)
            if horizon is not None and at > horizon:
                self.trace.append(TraceEntry(at=at, kind="horizon-drop", note=ev.kind))
                continue
            self.now = at
            entries = handler(ev)
            if entries:
                self.trace.extend(entries)
        return self.trace
