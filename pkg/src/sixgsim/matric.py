"""Per-domain multi-access controller.

Keeps the endpoint registry and telemetry database for one domain, scores
access technologies for a flow, chooses single or split attachments,
applies the QoS action ladder and decides inter-AT handovers.
"""

from __future__ import annotations

import itertools
from collections import deque
from dataclasses import dataclass
from typing import Callable, Iterable, Optional, Sequence

from . import access
from .access import AccessTech, Flow, at_power
from .monitoring import Broker, KpiWindow, MetricSample, required_kpis, window_kpis


class MatricError(RuntimeError):
    pass


class DuplicateId(MatricError):
    pass


class UnknownEndpoint(MatricError):
    pass


class UnknownAt(MatricError):
    pass


class NoCoverage(MatricError):
    pass


class NoFeasibleAt(MatricError):
    pass


@dataclass(frozen=True)
class EndpointRecord:
    id: str
    kind: str  # "ue" or "at"
    registered_at: int = 0
    authorized: bool = True

    def __post_init__(self):
        if self.kind not in ("ue", "at"):
            raise ValueError("endpoint kind must be 'ue' or 'at'")


@dataclass(frozen=True)
class ScoreWeights:
    w_latency: float = 0.5
    w_capacity: float = 0.3
    w_energy: float = 0.2

    def __post_init__(self):
        ws = (self.w_latency, self.w_capacity, self.w_energy)
        if any(w < 0 for w in ws) or abs(sum(ws) - 1.0) > 1e-9:
            raise ValueError("score weights must be non-negative and sum to 1")


@dataclass(frozen=True)
class MobilityConfig:
    hysteresis: float = 0.05
    min_dwell_us: int = 100_000

    def __post_init__(self):
        if self.hysteresis < 0 or self.min_dwell_us < 0:
            raise ValueError("hysteresis and min_dwell_us must be non-negative")


METRICS = {"load": "fraction", "committed_bps": "bps", "power": "watts", "state": "bool"}


class TelemetryDb:
    """Ring buffers of samples keyed by ``(at_id, metric)``."""

    def __init__(self, capacity: int = 1024):
        if capacity <= 0:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self._buffers: dict[tuple[str, str], deque] = {}

    def add_at(self, at_id: str) -> None:
        for m in METRICS:
            self._buffers.setdefault((at_id, m), deque(maxlen=self.capacity))

    def known(self, at_id: str) -> bool:
        return (at_id, "load") in self._buffers

    def append(self, at_id: str, metric: str, sample: MetricSample) -> None:
        buf = self._buffers[(at_id, metric)]
        assert not buf or buf[-1].t <= sample.t, "telemetry must be time-ordered"
        buf.append(sample)

    def query(self, at_id: str, metric: str, since: int) -> list[MetricSample]:
        if not self.known(at_id):
            raise UnknownAt(at_id)
        return [s for s in self._buffers[(at_id, metric)] if s.t >= since]


@dataclass(frozen=True)
class ScoreTerms:
    """Weighted score components for one (AT, flow) pair."""

    latency: float
    capacity: float
    energy: float

    @property
    def raw(self) -> float:
        return self.latency + self.capacity + self.energy

    @property
    def score(self) -> float:
        return min(max(self.raw, 0.0), 1.0)


def score_terms(at: AccessTech, f: Flow, w: ScoreWeights, p_max_ref: Optional[float] = None,
                headroom_bps: Optional[int] = None) -> ScoreTerms:
    if f.zone not in at.coverage:
        raise NoCoverage(f"{at.id} does not cover zone {f.zone}")
    bound = f.kpi.latency_bound_us
    lat = w.w_latency * (1.0 - min(at.base_latency_us / bound, 1.0))
    headroom = at.headroom_bps if headroom_bps is None else headroom_bps
    cap = w.w_capacity * (headroom / at.capacity_bps)
    ref = at.power.p_max_w if p_max_ref is None else p_max_ref
    energy = -w.w_energy * (at.power.p_max_w / ref) if ref > 0 else 0.0
    return ScoreTerms(lat, cap, energy)


def score_at(at: AccessTech, f: Flow, w: ScoreWeights, p_max_ref: Optional[float] = None,
             headroom_bps: Optional[int] = None) -> float:
    """Score in [0, 1] of carrying ``f`` on ``at``.

    ``p_max_ref`` is the largest ``p_max_w`` among the candidates being
    compared; it defaults to the AT's own (the costliest case).
    """
    return score_terms(at, f, w, p_max_ref, headroom_bps).score


def latency_feasible(at: AccessTech, f: Flow) -> bool:
    kpi = f.kpi
    if kpi.latency_strict:
        ok = at.base_latency_us < kpi.latency_bound_us
    else:
        ok = at.base_latency_us <= kpi.latency_bound_us
    if kpi.positioning_cm is not None:
        ok = ok and at.positioning_cm is not None and at.positioning_cm < kpi.positioning_cm
    return ok


@dataclass(frozen=True)
class AttachmentPlan:
    """(at_id, share_bps) pairs; the first entry is the primary attachment."""

    shares: tuple
    scores: tuple

    @property
    def split(self) -> bool:
        return len(self.shares) == 2


def select_at(f: Flow, candidates: Sequence[AccessTech], w: ScoreWeights) -> AttachmentPlan:
    """Attachment plan for ``f`` over ``candidates``.

    The best-scoring AT that can carry the full demand wins. Failing that,
    the pair with the highest score sum whose combined headroom covers the
    demand is split, the higher-scored AT filled to its headroom first.
    Ties go to the lexicographically smallest id (or id pair).
    """
    if not candidates:
        raise NoFeasibleAt(f"no candidates for {f.id}")
    p_ref = max(at.power.p_max_w for at in candidates)
    usable = [at for at in candidates if f.zone in at.coverage and latency_feasible(at, f)]
    scored = {at.id: score_at(at, f, w, p_ref) for at in usable}
    by_id = {at.id: at for at in usable}

    singles = [at for at in usable if at.headroom_bps >= f.demand_bps]
    if singles:
        best = min(singles, key=lambda a: (-scored[a.id], a.id))
        return AttachmentPlan(((best.id, f.demand_bps),), (scored[best.id],))

    best_pair = None
    for a, b in itertools.combinations(sorted(by_id), 2):
        ha, hb = by_id[a].headroom_bps, by_id[b].headroom_bps
        if ha <= 0 or hb <= 0 or ha + hb < f.demand_bps:
            continue
        key = (-(scored[a] + scored[b]), a, b)
        if best_pair is None or key < best_pair[0]:
            best_pair = (key, a, b)
    if best_pair is None:
        raise NoFeasibleAt(f"{f.id}: {f.demand_bps} bps cannot be carried")
    _, a, b = best_pair
    first, second = sorted((a, b), key=lambda i: (-scored[i], i))
    s1 = min(by_id[first].headroom_bps, f.demand_bps)
    return AttachmentPlan(
        ((first, s1), (second, f.demand_bps - s1)),
        (scored[first], scored[second]),
    )


@dataclass(frozen=True)
class QosAction:
    kind: str  # "increase_share", "handover_eval" or "escalate"
    flow: str
    at_id: Optional[str] = None
    amount_bps: int = 0


@dataclass(frozen=True)
class HandoverDecision:
    handover: bool
    target: Optional[str] = None
    current_score: float = 0.0
    best_score: float = 0.0


ScoreFn = Callable[[AccessTech, Flow], float]


class Matric:
    """Controller for one domain's access technologies.

    Parameters
    ----------
    domain : str
        Domain id, used in telemetry topic names.
    ats : iterable of AccessTech
        Access technologies registered at construction time.
    broker : Broker, optional
        Monitoring plane to publish telemetry on.
    """

    def __init__(self, domain: str, ats: Iterable[AccessTech] = (), broker: Optional[Broker] = None,
                 weights: ScoreWeights = ScoreWeights(), mobility: MobilityConfig = MobilityConfig(),
                 telemetry_capacity: int = 1024):
        self.domain = domain
        self.broker = broker
        self.weights = weights
        self.mobility = mobility
        self.endpoints: dict[str, EndpointRecord] = {}
        self.ats: dict[str, AccessTech] = {}
        self.db = TelemetryDb(telemetry_capacity)
        self.handovers: dict[str, int] = {}
        for at in ats:
            self.add_at(at)

    # -- registry --

    def register_endpoint(self, rec: EndpointRecord) -> None:
        if rec.id in self.endpoints:
            raise DuplicateId(rec.id)
        self.endpoints[rec.id] = rec

    def deregister_endpoint(self, id: str) -> None:
        if self.endpoints.pop(id, None) is None:
            raise UnknownEndpoint(id)

    def discover(self, kind: Optional[str] = None) -> list[EndpointRecord]:
        return [r for _, r in sorted(self.endpoints.items()) if kind is None or r.kind == kind]

    def add_at(self, at: AccessTech, t: int = 0) -> None:
        self.register_endpoint(EndpointRecord(at.id, "at", t))
        self.ats[at.id] = at
        self.db.add_at(at.id)
        if self.broker is not None:
            for m, unit in METRICS.items():
                self.broker.ensure(self.topic(at.id, m), f"matric.{self.domain}", unit)

    def topic(self, at_id: str, metric: str) -> str:
        return f"matric.{self.domain}.{at_id}.{metric}"

    # -- monitoring --

    def collect_metrics(self, at: AccessTech | str, t: int) -> list[MetricSample]:
        at_id = at if isinstance(at, str) else at.id
        if at_id not in self.ats:
            raise UnknownAt(at_id)
        at = self.ats[at_id]
        values = {
            "load": at.load_fraction,
            "committed_bps": float(at.committed_bps),
            "power": at_power(at, at.load_fraction),
            "state": 1.0 if at.active else 0.0,
        }
        out = []
        for m, v in values.items():
            s = MetricSample(t, self.topic(at_id, m), v, METRICS[m])
            self.db.append(at_id, m, s)
            if self.broker is not None:
                self.broker.publish(s)
            out.append(s)
        return out

    def query_telemetry(self, at_id: str, kind: str, since: int) -> list[MetricSample]:
        return self.db.query(at_id, kind, since)

    # -- attachment --

    def candidates_for(self, f: Flow) -> list[AccessTech]:
        return [at for _, at in sorted(self.ats.items()) if f.zone in at.coverage]

    def attach(self, f: Flow, plan: AttachmentPlan, t: int) -> None:
        """Admit every share of ``plan``, all or nothing."""
        done = []
        try:
            for at_id, share in plan.shares:
                access.admit_flow(self.ats[at_id], f, share)
                done.append(at_id)
        except access.AccessError:
            for at_id in done:
                access.release_flow(self.ats[at_id], f)
            raise
        f.attached_at_us = t

    def detach(self, f: Flow) -> None:
        for at_id in list(f.attachments):
            access.release_flow(self.ats[at_id], f)

    # -- QoS --

    def enforce_qos(self, f: Flow, window: KpiWindow, kpis: Optional[dict] = None) -> list[QosAction]:
        """QoS action ladder for a flow whose window violates its KPIs.

        Share increase on the primary AT if it has headroom, else a handover
        evaluation if another covering AT can take the flow, else escalation
        to the domain orchestrator. Compliant windows yield no action.
        ``kpis`` may carry estimates already computed on ``window``.
        """
        if kpis is None:
            kpis = window_kpis(window, f.kpi)
        violated = False
        for name, bound, direction in required_kpis(f.kpi, window.span_us):
            v = kpis[name]
            ok = v <= bound if direction == "le" else v < bound if direction == "lt" else v >= bound
            violated = violated or not ok
        if not violated:
            return []
        primary = f.primary
        if primary is not None and self.ats[primary].headroom_bps > 0:
            deficit = max(f.demand_bps - f.allocated_bps, 0)
            amount = min(self.ats[primary].headroom_bps, deficit)
            return [QosAction("increase_share", f.id, primary, amount)]
        others = [
            at for at in self.candidates_for(f)
            if at.id not in f.attachments and at.headroom_bps >= f.demand_bps and latency_feasible(at, f)
        ]
        if primary is not None and others:
            return [QosAction("handover_eval", f.id, primary)]
        return [QosAction("escalate", f.id, primary)]

    # -- mobility --

    def evaluate_handover(self, f: Flow, candidates: Sequence[AccessTech], t: int,
                          cfg: Optional[MobilityConfig] = None, w: Optional[ScoreWeights] = None,
                          score: Optional[ScoreFn] = None) -> HandoverDecision:
        """Stay or move ``f`` to a better AT.

        A handover needs the best alternative to beat the current AT by more
        than the hysteresis, and the flow to have dwelt at least
        ``min_dwell_us`` on its current attachment. Split flows stay.
        """
        cfg = cfg or self.mobility
        w = w or self.weights
        if t < f.attached_at_us:
            raise ValueError("t precedes the attachment time")
        if len(f.attachments) != 1:
            return HandoverDecision(False)
        current_id = f.primary
        if score is None:
            p_ref = max(at.power.p_max_w for at in candidates)

            def score(at, fl):
                own = fl.attachments.get(at.id, 0)
                return score_at(at, fl, w, p_ref, headroom_bps=at.headroom_bps + own)

        by_id = {at.id: at for at in candidates}
        if current_id not in by_id:
            raise ValueError(f"current AT {current_id} not among candidates")
        current = score(by_id[current_id], f)
        alts = [
            (score(at, f), at.id) for at in candidates
            if at.id != current_id and f.zone in at.coverage and at.headroom_bps >= f.demand_bps
            and latency_feasible(at, f)
        ]
        if not alts:
            return HandoverDecision(False, None, current, current)
        best_score, best_id = min(alts, key=lambda x: (-x[0], x[1]))
        dwelt = t - f.attached_at_us >= cfg.min_dwell_us
        if best_score > current + cfg.hysteresis and dwelt:
            return HandoverDecision(True, best_id, current, best_score)
        return HandoverDecision(False, None, current, best_score)

    def handover(self, f: Flow, target: str, t: int) -> None:
        """Move a single-attachment flow to ``target`` atomically."""
        if len(f.attachments) != 1:
            raise ValueError("only single-attachment flows hand over")
        src_id, share = next(iter(f.attachments.items()))
        dst = self.ats[target]
        if dst.headroom_bps < share or not dst.active:
            raise access.InsufficientCapacity(target)
        access.release_flow(self.ats[src_id], f)
        access.admit_flow(dst, f, share)
        assert len(f.attachments) == 1
        f.attached_at_us = t
        self.handovers[f.id] = self.handovers.get(f.id, 0) + 1
