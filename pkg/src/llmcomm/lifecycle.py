"""Personal-model lifecycle: training jobs, replica placement, version propagation."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Mapping, Optional

from .costmodel import CostParams, CostReport, cost_report
from .netsim import Topology
from .responder import Fact, PersonalModel, ServiceProfile

DEFAULT_PARALLELISM = 1024
DEFAULT_FINETUNE_FACTOR = 0.01


class LifecycleError(ValueError):
    pass


@dataclass(frozen=True)
class TrainingSpec:
    owner: str
    gpu_hours: float
    from_pretrained: bool = False
    target_ppl: float = 1.5
    result_size_bytes: int = 13_500_000_000

    def __post_init__(self):
        if not self.gpu_hours > 0:
            raise LifecycleError(f"training for {self.owner}: gpu_hours must be > 0")
        if not self.target_ppl > 0:
            raise LifecycleError(f"training for {self.owner}: target_ppl must be > 0")
        if self.result_size_bytes <= 0:
            raise LifecycleError(f"training for {self.owner}: result_size_bytes must be > 0")


@dataclass(frozen=True)
class TrainingResult:
    model: PersonalModel
    cost: CostReport
    completion: float


def effective_gpu_hours(spec: TrainingSpec, finetune_factor: float = DEFAULT_FINETUNE_FACTOR) -> float:
    return spec.gpu_hours * finetune_factor if spec.from_pretrained else spec.gpu_hours


def train(
    spec: TrainingSpec,
    now: float,
    *,
    previous: Optional[PersonalModel] = None,
    facts: Optional[Mapping[str, Fact]] = None,
    profile: Optional[ServiceProfile] = None,
    parallelism: float = DEFAULT_PARALLELISM,
    finetune_factor: float = DEFAULT_FINETUNE_FACTOR,
    cost_params: CostParams = CostParams(),
) -> TrainingResult:
    """Simulated training job at the owner's datacenter.

    Wall-clock duration is GPU-hours spread over ``parallelism`` concurrent GPUs.
    Retraining keeps every fact the previous version knew.
    """
    if not parallelism > 0:
        raise LifecycleError("parallelism must be > 0")
    if not finetune_factor > 0:
        raise LifecycleError("finetune_factor must be > 0")
    gpu_h = effective_gpu_hours(spec, finetune_factor)
    merged: dict[str, Fact] = dict(previous.facts) if previous else {}
    merged.update(facts or {})
    model = PersonalModel(
        owner=spec.owner,
        version=previous.version + 1 if previous else 1,
        size_bytes=spec.result_size_bytes,
        facts=merged,
        profile=profile or (previous.profile if previous else ServiceProfile()),
    )
    completion = now + gpu_h * 3600.0 / parallelism
    return TrainingResult(model, cost_report(gpu_h, cost_params), completion)


@dataclass(frozen=True)
class Placement:
    owner: str
    node: str
    version: int
    transfer_bytes: int


@dataclass
class RegistryEntry:
    latest: PersonalModel
    home: str
    versions: dict[int, PersonalModel] = field(default_factory=dict)
    replicas: dict[str, int] = field(default_factory=dict)
    in_flight: dict[str, int] = field(default_factory=dict)
    cold: set[str] = field(default_factory=set)


class ModelRegistry:
    """Where every owner's model lives, and at which version.

    The home datacenter always holds the latest version; other replicas only
    advance when a transfer to them completes.
    """

    def __init__(self, topology: Optional[Topology] = None):
        self.topology = topology
        self.entries: dict[str, RegistryEntry] = {}

    def __contains__(self, owner: str) -> bool:
        return owner in self.entries

    def entry(self, owner: str) -> RegistryEntry:
        try:
            return self.entries[owner]
        except KeyError:
            raise LifecycleError(f"no trained model for owner {owner!r}") from None

    def latest(self, owner: str) -> PersonalModel:
        return self.entry(owner).latest

    def _check_node(self, node: str) -> None:
        if self.topology is not None and node not in self.topology.nodes:
            raise LifecycleError(f"unknown node {node!r}")

    def install(self, model: PersonalModel, home: Optional[str] = None) -> None:
        """Make ``model`` the owner's latest version at its home node."""
        e = self.entries.get(model.owner)
        if e is None:
            if home is None:
                raise LifecycleError(f"first install for {model.owner!r} needs a home node")
            self._check_node(home)
            e = self.entries[model.owner] = RegistryEntry(latest=model, home=home)
        elif model.version <= e.latest.version:
            raise LifecycleError(
                f"{model.owner}: version {model.version} does not advance {e.latest.version}"
            )
        e.latest = model
        e.versions[model.version] = model
        e.replicas[e.home] = model.version
        e.cold.add(e.home)

    def offload(self, owner: str, node: str) -> Placement:
        """Start copying the latest version to ``node``; zero bytes if already current."""
        e = self.entry(owner)
        self._check_node(node)
        v = e.latest.version
        if e.replicas.get(node) == v or e.in_flight.get(node) == v:
            return Placement(owner, node, v, 0)
        e.in_flight[node] = v
        return Placement(owner, node, v, e.latest.size_bytes)

    def complete(self, placement: Placement) -> None:
        e = self.entry(placement.owner)
        if e.in_flight.get(placement.node) == placement.version:
            del e.in_flight[placement.node]
        if placement.version > e.replicas.get(placement.node, 0):
            e.replicas[placement.node] = placement.version
            e.cold.add(placement.node)

    def stale_nodes(self, owner: str) -> list[str]:
        e = self.entry(owner)
        v = e.latest.version
        # A node whose first copy is still in flight counts as a replica too.
        nodes = set(e.replicas) | set(e.in_flight)
        return sorted(
            n for n in nodes
            if max(e.replicas.get(n, 0), e.in_flight.get(n, 0)) < v
        )

    def propagate(self, owner: str, now: float = 0.0) -> list[Placement]:
        """Full-model transfer to every stale replica, in node order."""
        if owner not in self.entries:
            return []
        return [self.offload(owner, n) for n in self.stale_nodes(owner)]

    def resolve_replica(self, owner: str, origin: str, topo: Topology) -> Optional[str]:
        e = self.entries.get(owner)
        if e is None or not e.replicas:
            return None
        return min(e.replicas, key=lambda n: (round(topo.path_latency(origin, n), 9), n))

    def model_at(self, owner: str, node: str) -> PersonalModel:
        e = self.entry(owner)
        return e.versions[e.replicas[node]]

    def take_cold(self, owner: str, node: str) -> bool:
        """Report whether the replica at ``node`` is cold, warming it as a side effect."""
        e = self.entry(owner)
        if node in e.cold:
            e.cold.discard(node)
            return True
        return False

    def snapshot(self) -> dict:
        return {
            owner: {
                "version": e.latest.version,
                "size_bytes": e.latest.size_bytes,
                "replicas": dict(sorted(e.replicas.items())),
            }
            for owner, e in sorted(self.entries.items())
        }

    def to_json(self) -> str:
        return json.dumps(self.snapshot(), indent=2, sort_keys=False) + "\n"


def resolve_replica(registry: ModelRegistry, owner: str, origin: str, topo: Topology) -> Optional[str]:
    return registry.resolve_replica(owner, origin, topo)

