"""Intra-domain orchestration: service-chain placement, profiling, scaling, capability ads."""

from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from .access import AccessTech, PowerModel
from .kpi import KpiRequirementSet

EXHAUSTIVE_LIMIT = 100_000
DEFAULT_LAMBDA = 0.001  # W per microsecond
DEFAULT_HOP_PENALTY_US = 500
SCALE_UP_AT = 0.8
SCALE_DOWN_AT = 0.3
SCALE_TARGET = 1.25


class OrchestrationError(RuntimeError):
    pass


class NoFeasiblePlacement(OrchestrationError):
    pass


class EmptyHistory(ValueError):
    pass


class Tier(str, enum.Enum):
    EDGE = "edge"
    CORE = "core"


@dataclass
class ComputeNode:
    id: str
    tier: Tier
    cpu_units: int
    mem_mb: int
    power: PowerModel
    committed_cpu: int = 0
    committed_mem: int = 0

    def __post_init__(self):
        self.tier = Tier(self.tier)
        if self.cpu_units <= 0 or self.mem_mb <= 0:
            raise ValueError(f"{self.id}: capacities must be positive")
        self._check()

    @property
    def free_cpu(self) -> int:
        return self.cpu_units - self.committed_cpu

    @property
    def free_mem(self) -> int:
        return self.mem_mb - self.committed_mem

    def power_w(self) -> float:
        u = self.committed_cpu / self.cpu_units
        return self.power.p_idle_w + (self.power.p_max_w - self.power.p_idle_w) * u

    def marginal_power(self, cpu: int) -> float:
        return (self.power.p_max_w - self.power.p_idle_w) * cpu / self.cpu_units

    def commit(self, cpu: int, mem: int) -> None:
        self.committed_cpu += cpu
        self.committed_mem += mem
        self._check()

    def _check(self) -> None:
        assert 0 <= self.committed_cpu <= self.cpu_units, f"cpu capacity violated on {self.id}"
        assert 0 <= self.committed_mem <= self.mem_mb, f"memory capacity violated on {self.id}"


@dataclass(frozen=True)
class ServiceFunction:
    cpu_units: int
    mem_mb: int
    egress_bps: int

    def __post_init__(self):
        if self.cpu_units <= 0 or self.mem_mb <= 0 or self.egress_bps <= 0:
            raise ValueError("function requirements must be positive")


@dataclass(frozen=True)
class ServiceChain:
    id: str
    functions: tuple
    kpi: Optional[KpiRequirementSet] = None

    def __post_init__(self):
        if not self.functions:
            raise ValueError("a service chain needs at least one function")
        object.__setattr__(self, "functions", tuple(
            f if isinstance(f, ServiceFunction) else ServiceFunction(*f) for f in self.functions
        ))

    def totals(self) -> np.ndarray:
        return np.array([
            sum(f.cpu_units for f in self.functions),
            sum(f.mem_mb for f in self.functions),
            sum(f.egress_bps for f in self.functions),
        ], dtype=float)


@dataclass(frozen=True)
class PlacementPlan:
    chain: str
    assignments: tuple  # node id per function index
    est_latency_us: int
    est_power_w: float
    cost: float
    method: str = "exhaustive"


def plan_cost(chain: ServiceChain, assignment: Sequence[str], nodes: dict,
              lam: float = DEFAULT_LAMBDA, hop_penalty_us: int = DEFAULT_HOP_PENALTY_US):
    """(est_power_w, est_latency_us, cost) of one assignment vector."""
    power = 0.0
    for fn, nid in zip(chain.functions, assignment):
        power += nodes[nid].marginal_power(fn.cpu_units)
    hops = sum(1 for a, b in zip(assignment, assignment[1:]) if a != b)
    latency = hops * hop_penalty_us
    return power, latency, power + lam * latency


def _feasible(chain: ServiceChain, assignment: Sequence[str], nodes: dict) -> bool:
    cpu: dict[str, int] = {}
    mem: dict[str, int] = {}
    for fn, nid in zip(chain.functions, assignment):
        cpu[nid] = cpu.get(nid, 0) + fn.cpu_units
        mem[nid] = mem.get(nid, 0) + fn.mem_mb
    return all(cpu[n] <= nodes[n].free_cpu and mem[n] <= nodes[n].free_mem for n in cpu)


def place_service(c: ServiceChain, nodes: Sequence[ComputeNode], lam: float = DEFAULT_LAMBDA,
                  hop_penalty_us: int = DEFAULT_HOP_PENALTY_US) -> PlacementPlan:
    """Cheapest feasible placement of ``c`` on ``nodes``.

    Cost is marginal power plus ``lam`` times the inter-node hop latency.
    Small instances (at most 1e5 assignments) are solved exhaustively with
    ties broken by the lexicographic assignment vector; larger ones use
    first-fit-decreasing by cpu.
    """
    if not nodes:
        raise NoFeasiblePlacement("no compute nodes")
    by_id = {n.id: n for n in nodes}
    ids = sorted(by_id)
    n_fn = len(c.functions)
    if len(ids) ** n_fn <= EXHAUSTIVE_LIMIT:
        best = None
        for assignment in itertools.product(ids, repeat=n_fn):
            if not _feasible(c, assignment, by_id):
                continue
            power, latency, cost = plan_cost(c, assignment, by_id, lam, hop_penalty_us)
            key = (cost, assignment)
            if best is None or key < best[0]:
                best = (key, power, latency)
        if best is None:
            raise NoFeasiblePlacement(c.id)
        (cost, assignment), power, latency = best
        return PlacementPlan(c.id, assignment, latency, power, cost, "exhaustive")

    free = {n.id: [n.free_cpu, n.free_mem] for n in nodes}
    assignment: list = [None] * n_fn
    order = sorted(range(n_fn), key=lambda i: (-c.functions[i].cpu_units, i))
    for i in order:
        fn = c.functions[i]
        for nid in ids:
            if free[nid][0] >= fn.cpu_units and free[nid][1] >= fn.mem_mb:
                free[nid][0] -= fn.cpu_units
                free[nid][1] -= fn.mem_mb
                assignment[i] = nid
                break
        else:
            raise NoFeasiblePlacement(c.id)
    power, latency, cost = plan_cost(c, assignment, by_id, lam, hop_penalty_us)
    return PlacementPlan(c.id, tuple(assignment), latency, power, cost, "ffd")


@dataclass(frozen=True)
class Profile:
    predicted: tuple  # (cpu_units, mem_mb, egress_bps)
    alpha: float


def profile_predict(history: Sequence[Sequence[float]], alpha: float) -> Profile:
    """EWMA per resource dimension, seeded with the first observation."""
    if len(history) == 0:
        raise EmptyHistory("history is empty")
    if not 0.0 < alpha <= 1.0:
        raise ValueError("alpha must be in (0, 1]")
    hist = np.asarray(history, dtype=float)
    if hist.ndim == 1:
        hist = hist[:, None]
    s = hist[0].copy()
    for x in hist[1:]:
        s = alpha * x + (1.0 - alpha) * s
    return Profile(tuple(float(v) for v in s), alpha)


@dataclass(frozen=True)
class ScaleAction:
    kind: str  # "scale_up", "scale_down" or "re_place"
    chain: str
    target: tuple  # (cpu_units, mem_mb, egress_bps)


@dataclass
class Deployment:
    """A placed chain with its live allocation, per node."""

    chain: ServiceChain
    plan: PlacementPlan
    per_node: dict = field(default_factory=dict)  # node id -> [cpu, mem]
    egress_bps: float = 0.0

    @property
    def allocated(self) -> np.ndarray:
        cpu = sum(v[0] for v in self.per_node.values())
        mem = sum(v[1] for v in self.per_node.values())
        return np.array([cpu, mem, self.egress_bps], dtype=float)


def scale_service(c: ServiceChain, p: Profile, plan: PlacementPlan,
                  nodes: Sequence[ComputeNode], allocated: Optional[Sequence[float]] = None) -> list[ScaleAction]:
    """Scaling decision for a placed chain.

    Above 80% of the allocation on any dimension the chain scales up to
    1.25x the prediction, capped by the free cpu/memory of the plan's nodes
    (re-placement when nothing is free on a short dimension). Below 30% on
    every dimension it scales down to 1.25x the prediction.
    """
    alloc = c.totals() if allocated is None else np.asarray(allocated, dtype=float)
    pred = np.asarray(p.predicted, dtype=float)
    if pred.shape != alloc.shape:
        raise ValueError("prediction and allocation dimensions differ")
    target = SCALE_TARGET * pred
    if np.any(pred > SCALE_UP_AT * alloc):
        used = set(plan.assignments)
        by_id = {n.id: n for n in nodes}
        free = np.array([
            sum(by_id[n].free_cpu for n in used),
            sum(by_id[n].free_mem for n in used),
            np.inf,
        ])
        extra = np.maximum(target - alloc, 0.0)
        short = extra > free
        if np.any(short & (free <= 0)):
            return [ScaleAction("re_place", c.id, tuple(float(v) for v in target))]
        capped = np.where(short, alloc + free, np.maximum(target, alloc))
        return [ScaleAction("scale_up", c.id, tuple(float(v) for v in capped))]
    if np.all(pred < SCALE_DOWN_AT * alloc):
        return [ScaleAction("scale_down", c.id, tuple(float(v) for v in target))]
    return []


@dataclass(frozen=True)
class CapabilityRecord:
    domain: str
    free_bps: int
    min_latency_us: int
    reliability_floor: float
    unit_cost: float
    prefixes: tuple

    def __post_init__(self):
        if min(self.free_bps, self.min_latency_us, self.reliability_floor, self.unit_cost) < 0:
            raise ValueError("capability fields must be non-negative")

    def to_row(self) -> dict:
        return {
            "domain": self.domain, "free_bps": self.free_bps,
            "min_latency_us": self.min_latency_us, "reliability_floor": self.reliability_floor,
            "unit_cost": self.unit_cost, "prefixes": " ".join(self.prefixes),
        }


class IntraOrchestrator:
    """Orchestrator for one domain's compute and access inventory."""

    def __init__(self, domain: str, ats: Iterable[AccessTech], nodes: Iterable[ComputeNode],
                 unit_cost: float = 1.0, lam: float = DEFAULT_LAMBDA,
                 hop_penalty_us: int = DEFAULT_HOP_PENALTY_US):
        self.domain = domain
        self.ats = {a.id: a for a in ats}
        self.nodes = {n.id: n for n in nodes}
        self.unit_cost = unit_cost
        self.lam = lam
        self.hop_penalty_us = hop_penalty_us
        self.deployments: dict[str, Deployment] = {}

    def advertise_capabilities(self) -> CapabilityRecord:
        ats = list(self.ats.values())
        active = [a for a in ats if a.active] or ats
        return CapabilityRecord(
            domain=self.domain,
            free_bps=sum(a.capacity_bps - a.committed_bps for a in ats),
            min_latency_us=min((a.base_latency_us for a in active), default=0),
            reliability_floor=min((1.0 - a.per_error_rate for a in ats), default=0.0),
            unit_cost=self.unit_cost,
            prefixes=self._prefixes(),
        )

    def _prefixes(self) -> tuple:
        key = tuple(a.coverage for a in self.ats.values())
        if getattr(self, "_prefix_key", None) != key:
            self._prefix_key = key
            self._prefix_val = tuple(sorted(set().union(*key))) if key else ()
        return self._prefix_val

    def place(self, c: ServiceChain) -> Deployment:
        plan = place_service(c, list(self.nodes.values()), self.lam, self.hop_penalty_us)
        dep = Deployment(c, plan, egress_bps=float(c.totals()[2]))
        for fn, nid in zip(c.functions, plan.assignments):
            self.nodes[nid].commit(fn.cpu_units, fn.mem_mb)
            slot = dep.per_node.setdefault(nid, [0, 0])
            slot[0] += fn.cpu_units
            slot[1] += fn.mem_mb
        self.deployments[c.id] = dep
        return dep

    def remove(self, chain_id: str) -> None:
        dep = self.deployments.pop(chain_id)
        for nid, (cpu, mem) in dep.per_node.items():
            self.nodes[nid].commit(-cpu, -mem)

    def scale(self, chain_id: str, p: Profile) -> list[ScaleAction]:
        dep = self.deployments[chain_id]
        actions = scale_service(dep.chain, p, dep.plan, list(self.nodes.values()), dep.allocated)
        for act in actions:
            self.apply(dep, act)
        return actions

    def apply(self, dep: Deployment, act: ScaleAction) -> None:
        if act.kind == "re_place":
            chain_id = dep.chain.id
            self.remove(chain_id)
            try:
                self.place(dep.chain)
            except NoFeasiblePlacement:
                self.deployments[chain_id] = dep
                for nid, (cpu, mem) in dep.per_node.items():
                    self.nodes[nid].commit(cpu, mem)
            return
        target_cpu = int(np.ceil(act.target[0]))
        target_mem = int(np.ceil(act.target[1]))
        # Every function keeps at least one unit of cpu and memory.
        floor = len(dep.chain.functions)
        target_cpu = max(target_cpu, floor)
        target_mem = max(target_mem, floor)
        self._resize(dep, 0, target_cpu)
        self._resize(dep, 1, target_mem)
        dep.egress_bps = float(act.target[2])

    def _resize(self, dep: Deployment, dim: int, target: int) -> None:
        current = sum(v[dim] for v in dep.per_node.values())
        delta = target - current
        order = sorted(dep.per_node)
        if delta > 0:
            for nid in order:
                node = self.nodes[nid]
                free = node.free_cpu if dim == 0 else node.free_mem
                take = min(free, delta)
                if take > 0:
                    node.commit(take if dim == 0 else 0, take if dim == 1 else 0)
                    dep.per_node[nid][dim] += take
                    delta -= take
                if delta == 0:
                    break
        elif delta < 0:
            for nid in reversed(order):
                give = min(dep.per_node[nid][dim], -delta)
                if give > 0:
                    self.nodes[nid].commit(-give if dim == 0 else 0, -give if dim == 1 else 0)
                    dep.per_node[nid][dim] -= give
                    delta += give
                if delta == 0:
                    break
