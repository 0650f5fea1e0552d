import json

import pytest
from hypothesis import given, strategies as st

from llmcomm.netsim import (
    ACCESS,
    CORE,
    DATACENTER,
    DEVICE,
    EDGE,
    DisconnectedTopologyError,
    Engine,
    Link,
    SchedulingError,
    Topology,
    TopologyError,
    TraceEntry,
    TrafficCounters,
    route_path,
    trace_jsonl,
    transfer,
)


def fig_topology(extra_links=()):
    nodes = {"dc": DATACENTER, "edge1": EDGE, "edge2": EDGE, "edge3": EDGE,
             "A": DEVICE, "B": DEVICE, "C": DEVICE}
    links = [
        Link("edge1", "dc", 0.02, 1e10, CORE),
        Link("edge2", "dc", 0.02, 1e10, CORE),
        Link("edge3", "dc", 0.02, 1e10, CORE),
        Link("A", "edge1", 0.005, 1e8, ACCESS),
        Link("B", "edge2", 0.005, 1e8, ACCESS),
        Link("C", "edge3", 0.005, 1e8, ACCESS),
        *extra_links,
    ]
    return Topology(nodes, links)


def walk(src, links):
    nodes = [src]
    for link in links:
        nodes.append(link.other(nodes[-1]))
    return nodes


def test_engine_seq_tiebreak():
    eng = Engine()
    for k in "xyz":
        eng.schedule(5.0, k)
    eng.schedule(1.0, "first")
    trace = eng.run(lambda ev: [TraceEntry(at=ev.at, kind=ev.kind)])
    assert [e.kind for e in trace] == ["first", "x", "y", "z"]


def test_engine_empty():
    assert Engine().run(lambda ev: None) == []


def test_engine_rejects_past():
    eng = Engine()
    eng.schedule(2.0, "a")

    def handler(ev):
        eng.schedule(1.0, "late")

    with pytest.raises(SchedulingError):
        eng.run(handler)


def test_engine_horizon_drop():
    eng = Engine()
    eng.schedule(1.0, "keep")
    eng.schedule(9.0, "gone")
    trace = eng.run(lambda ev: [TraceEntry(at=ev.at, kind=ev.kind)], horizon=5.0)
    assert [(e.kind, e.at, e.note) for e in trace] == [("keep", 1.0, None), ("horizon-drop", 9.0, "gone")]


@given(st.lists(st.floats(min_value=0, max_value=1e6, allow_nan=False), max_size=50))
def test_engine_causality(times):
    eng = Engine()
    for i, t in enumerate(times):
        eng.schedule(t, str(i))
    trace = eng.run(lambda ev: [TraceEntry(at=ev.at, kind=ev.kind)])
    keys = [(e.at, int(e.kind)) for e in trace]
    assert keys == sorted(keys)


def test_route_single_access_link():
    topo = fig_topology()
    assert walk("A", route_path(topo, "A", "edge1")) == ["A", "edge1"]


def test_route_across_datacenter():
    topo = fig_topology()
    assert walk("A", route_path(topo, "A", "B")) == ["A", "edge1", "dc", "edge2", "B"]


def test_route_prefers_direct_peering():
    topo = fig_topology([Link("edge1", "edge2", 0.01, 1e10, CORE)])
    assert walk("A", route_path(topo, "A", "B")) == ["A", "edge1", "edge2", "B"]


def test_route_tiebreak_hops_then_names():
    # two equal-latency two-hop routes edge1->{dcA,dcB}->edge2: lexicographic order wins
    nodes = {"dcB": DATACENTER, "dcA": DATACENTER, "edge1": EDGE, "edge2": EDGE}
    links = [Link(e, d, 0.01, 1e9, CORE) for e in ("edge1", "edge2") for d in ("dcA", "dcB")]
    topo = Topology(nodes, links)
    assert walk("edge1", route_path(topo, "edge1", "edge2")) == ["edge1", "dcA", "edge2"]


def test_route_never_relays_through_device():
    topo = fig_topology()
    for src, dst in [("edge1", "edge2"), ("A", "C")]:
        inner = walk(src, route_path(topo, src, dst))[1:-1]
        assert all(topo.kind(n) != DEVICE for n in inner)


def test_route_same_endpoint():
    with pytest.raises(TopologyError):
        route_path(fig_topology(), "A", "A")


def test_transfer_example():
    path = (Link("x", "y", 0.01, 1e8, CORE), Link("y", "z", 0.01, 1e8, CORE))
    lat, charges = transfer(path, 1_000_000)
    assert lat == pytest.approx(0.18)
    assert [c[2] for c in charges] == [1_000_000, 1_000_000]


def test_transfer_zero_bytes():
    lat, charges = transfer((Link("x", "y", 0.0, 1e8, CORE),), 0)
    assert lat == 0.0 and charges == []


def test_core_counter_direct_message():
    topo = fig_topology()
    counters = TrafficCounters()
    transfer(route_path(topo, "A", "C"), 512, counters)
    assert counters.by_link["dc~edge1"] == counters.by_link["dc~edge3"] == 512
    assert counters.by_class == {ACCESS: 1024, CORE: 1024}


def test_topology_validation():
    with pytest.raises(TopologyError):
        Topology({"a": EDGE, "b": DATACENTER}, [Link("a", "b", 0.1, 1e9, ACCESS)])
    with pytest.raises(TopologyError):  # device on a datacenter
        Topology({"d": DEVICE, "dc": DATACENTER}, [Link("d", "dc", 0.1, 1e9, ACCESS)])
    with pytest.raises(DisconnectedTopologyError):
        Topology({"a": EDGE, "b": DATACENTER, "c": EDGE}, [Link("a", "b", 0.1, 1e9, CORE)])
    with pytest.raises(TopologyError):
        Link("a", "b", -1, 1e9, CORE)


def test_trace_serialization_roundtrip():
    e = TraceEntry(at=1.5, kind="message", msg_id=3, path=["A", "edge1"],
                   charges=[("A~edge1", ACCESS, 64)], latency_s=0.25)
    line = trace_jsonl([e])
    assert line.endswith("\n") and '"at":1.500000' in line
    assert TraceEntry.from_dict(json.loads(line)) == e
