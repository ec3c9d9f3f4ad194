"""Scenario execution: wires the domains, orchestrators and monitoring plane to the kernel."""

from __future__ import annotations

import csv
import io
import json
import math
import warnings
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from . import access, cognition, inter, intra, matric, monitoring
from .access import Flow
from .kernel import Kernel, seconds
from .monitoring import Broker, EnergyLedger, KpiWindow, LinkSample
from .scenario import Scenario
from .workloads import FlowTemplate, UseCaseSpec, generate

REPORT_COLUMNS = ("sla_id", "kpi", "measured", "bound", "pass")
ENERGY_COLUMNS = ("component", "joules")

# Per-user (cpu_units, mem_mb) of each function in a use case's service chain.
CHAIN_TEMPLATES = {
    inter.UseCase.METAVERSE: ((2.0, 2048), (1.0, 512)),
    inter.UseCase.DIGITAL_TWIN: ((1.0, 1024), (2.0, 4096)),
    inter.UseCase.VIRTUAL_PRODUCTION: ((1.0, 1024), (2.0, 2048)),
    inter.UseCase.FACTORY_DT: ((1.0, 2048),),
    inter.UseCase.FACTORY_ROBOTICS: ((0.1, 256),),
}


class SimulationError(RuntimeError):
    """A failure inside the event loop, with the event that triggered it."""


def expected_concurrency(spec: UseCaseSpec) -> int:
    """Users a chain is provisioned for: all of them, or twice the Poisson mean in flight."""
    if spec.arrival.kind == "all_at_start":
        return spec.user_count
    return min(spec.user_count, math.ceil(2 * spec.arrival.rate * spec.duration_s) + 1)


def service_chain(spec: UseCaseSpec, egress_bps: int) -> intra.ServiceChain:
    users = expected_concurrency(spec)
    fns = []
    for cpu, mem in CHAIN_TEMPLATES[spec.kind]:
        fns.append(intra.ServiceFunction(
            max(1, math.ceil(cpu * users)),
            max(1, math.ceil(mem * users)),
            max(1, egress_bps),
        ))
    return intra.ServiceChain(f"chain.{spec.label}", tuple(fns))


@dataclass
class Domain:
    id: str
    matric: matric.Matric
    orch: intra.IntraOrchestrator


@dataclass
class ActiveFlow:
    flow: Flow
    template: FlowTemplate
    sla: inter.E2eSla
    domain: str
    transit_us: int
    group: str
    samples: deque
    carry: int = 0


@dataclass
class SlaSummary:
    """Worst value seen per KPI across every evaluated window."""

    sla_id: str
    bounds: dict
    worst: dict = field(default_factory=dict)
    failed: set = field(default_factory=set)

    def update(self, report: monitoring.ComplianceReport) -> None:
        for row in report.rows:
            prev = self.worst.get(row.kpi)
            if row.kpi in ("latency", "jitter"):
                self.worst[row.kpi] = row.measured if prev is None else max(prev, row.measured)
            else:
                self.worst[row.kpi] = row.measured if prev is None else min(prev, row.measured)
            if not row.passed:
                self.failed.add(row.kpi)


@dataclass
class RunReport:
    scenario_seed: int
    duration_s: float
    sla_rows: list
    ledger: EnergyLedger
    handovers: dict
    violations: list
    summary: dict
    trace_text: str

    def report_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(REPORT_COLUMNS)
        for row in self.sla_rows:
            w.writerow(row)
        return buf.getvalue()

    def energy_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(ENERGY_COLUMNS)
        for comp in sorted(self.ledger.joules):
            w.writerow((comp, _fmt(self.ledger.joules[comp])))
        w.writerow(("total", _fmt(self.ledger.total())))
        return buf.getvalue()

    def summary_json(self) -> str:
        return json.dumps(self.summary, indent=2, sort_keys=True) + "\n"

    def write(self, out_dir: str | Path) -> dict[str, Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        files = {
            "report.csv": self.report_csv(),
            "energy.csv": self.energy_csv(),
            "summary.json": self.summary_json(),
            "trace.txt": self.trace_text,
        }
        paths = {}
        for name, text in files.items():
            p = out / name
            p.write_text(text, encoding="utf-8")
            paths[name] = p
        return paths


def _fmt(x: float) -> str:
    if isinstance(x, int):
        return str(x)
    return format(x, ".12g")


class Simulation:
    """One isolated simulation instance built from a validated scenario."""

    def __init__(self, sc: Scenario, explain: Optional[bool] = None, record_trace: bool = True):
        self.sc = sc
        self.params = sc.params
        self.explain = sc.toggles.explain if explain is None else explain
        self.sleep_policy = sc.toggles.sleep_policy
        self.kernel = Kernel(sc.seed, record_trace=record_trace)
        self.broker = Broker()
        self.ledger = EnergyLedger()
        self.policies = [p.build() for p in sc.policies]
        self.domains: dict[str, Domain] = {}
        self.at_domain: dict[str, str] = {}
        for dcfg in sc.domains:
            ats = [a.build() for a in dcfg.access_techs]
            nodes = [n.build() for n in dcfg.compute_nodes]
            ctl = matric.Matric(dcfg.id, ats, self.broker, self.params.weights(), self.params.mobility(),
                                self.params.telemetry_capacity)
            orch = intra.IntraOrchestrator(dcfg.id, ats, nodes, dcfg.unit_cost,
                                           self.params.placement_lambda, self.params.hop_penalty_us)
            self.domains[dcfg.id] = Domain(dcfg.id, ctl, orch)
            for a in ats:
                self.at_domain[a.id] = dcfg.id

        self.end_us = seconds(sc.duration_s)
        self.active: dict[str, ActiveFlow] = {}
        self.sla_summaries: dict[str, SlaSummary] = {}
        self.rejected: list[dict] = []
        self.violations: list[dict] = []
        self.escalations = 0
        self.qos_actions: dict[str, int] = {}
        self.explanations: list[dict] = []
        self.security: dict[str, dict] = {}
        self.placements: dict[str, dict] = {}
        self.scale_actions: list[dict] = []
        self.group_specs: dict[str, UseCaseSpec] = {}
        self.group_domain: dict[str, str] = {}
        self.group_history: dict[str, list] = {}
        self.saturation_us: Optional[int] = None
        self.window_latency: dict[str, list] = {d: [] for d in self.domains}
        self._meters: dict[str, list] = {}
        self._ue_refs: dict[str, int] = {}
        self.max_committed_fraction = 0.0

        k = self.kernel
        k.register("workload", self._on_workload)
        k.register("monitor", self._on_tick)
        k.register("orch", self._on_window)
        self._setup()

    # -- setup --

    def _components(self):
        for d in self.domains.values():
            for at in d.matric.ats.values():
                yield f"at:{at.id}", lambda at=at: access.at_power(at, at.load_fraction)
            for node in d.orch.nodes.values():
                yield f"node:{node.id}", node.power_w

    def _setup(self) -> None:
        if self.sleep_policy:
            for d in self.domains.values():
                for at in d.matric.ats.values():
                    access.set_sleep(at, True)
        self._power_fns = dict(self._components())
        for comp, fn in self._power_fns.items():
            self._meters[comp] = [0, fn()]

        templates: list[FlowTemplate] = []
        for idx, wcfg in enumerate(self.sc.workloads):
            spec = wcfg.build()
            if spec.name is None and spec.label in self.group_specs:
                spec = UseCaseSpec(**{**spec.__dict__, "name": f"{spec.label}.{idx}"})
            self.group_specs[spec.label] = spec
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                wl = generate(spec, self.kernel.rng(f"workload.{spec.label}"))
            for ft in wl.flows:
                templates.append((spec.label, ft))
        for group, ft in templates:
            if ft.start_us >= self.end_us:
                continue
            self.kernel.schedule(ft.start_us, "workload", "arrive", (group, ft))

        step = self.params.sample_interval_us
        t = step
        while t <= self.end_us:
            self.kernel.schedule(t, "monitor", "tick")
            if t % self.params.window_us == 0:
                self.kernel.schedule(t, "orch", "window")
            t += step

    # -- energy --

    def _meter(self, comp: str, t: int) -> None:
        """Close the constant-power segment of ``comp`` at ``t`` and start a new one."""
        last_t, last_w = self._meters[comp]
        if t > last_t:
            monitoring.account_energy(self.ledger, last_t, t, {comp: [(last_t, last_w)]})
        self._meters[comp] = [t, self._power_fns[comp]()]

    def _meter_ats(self, at_ids, t: int) -> None:
        for a in at_ids:
            self._meter(f"at:{a}", t)

    def _meter_nodes(self, domain: str, t: int) -> None:
        for nid in self.domains[domain].orch.nodes:
            self._meter(f"node:{nid}", t)

    # -- event handlers --

    def _on_workload(self, k: Kernel, ev) -> None:
        try:
            if ev.kind == "arrive":
                self._arrive(k.now, *ev.payload)
            elif ev.kind == "depart":
                self._depart(k.now, ev.payload)
        except (AssertionError, SimulationError):
            raise
        except Exception as e:  # noqa: BLE001 - re-raised with event context
            raise SimulationError(f"{ev.kind} at t={ev.at} us (seq {ev.seq}): {e!r}") from e

    def _reject(self, t: int, sla: inter.E2eSla, reason: str) -> None:
        sla.state = "violated"
        self.rejected.append({"sla_id": sla.id, "t_us": t, "reason": reason})
        summary = self.sla_summaries.setdefault(sla.id, SlaSummary(sla.id, _bounds(sla.kpi)))
        summary.worst["throughput"] = 0.0
        summary.failed.add("throughput")
        self.violations.append({"t_us": t, "sla_id": sla.id, "kpi": "throughput"})
        topic = f"orch.sla.{sla.id}"
        self.broker.ensure(topic, "orch", "bool")
        self.broker.publish(monitoring.MetricSample(t, topic, 1.0, "bool"))
        if self.saturation_us is None:
            self.saturation_us = t

    def _arrive(self, t: int, group: str, ft: FlowTemplate) -> None:
        spec = self.group_specs[group]
        sla = inter.E2eSla(ft.id, ft.kpi)
        caps = [self.domains[d].orch.advertise_capabilities() for d in sorted(self.domains)]
        intent = inter.TaskIntent(spec.kind, spec.user_count, spec.area_m2, ft.zone,
                                  spec.interaction_class, ft.remote_zone)
        cap_by = {c.domain: c for c in caps}
        try:
            choice = inter.select_domains(sla.kpi, caps, self.policies, intent=intent)
            sla.domain_path = choice.path
            parts = inter.decompose_sla(sla, [cap_by[d] for d in choice.path])
        except (inter.NoFeasibleDomain, inter.InfeasibleBudget) as e:
            self._reject(t, sla, type(e).__name__)
            return
        access_dom = self.domains[choice.path[0]]
        transit = sum(cap_by[d].min_latency_us for d in choice.path[1:])
        flow = Flow(ft.id, ft.ue, ft.demand_dl_bps, parts[0].kpi, ft.zone)
        ctl = access_dom.matric
        candidates = ctl.candidates_for(flow)
        try:
            plan = matric.select_at(flow, candidates, ctl.weights)
        except matric.NoFeasibleAt as e:
            self._reject(t, sla, type(e).__name__)
            return
        if self.explain:
            self._explain(flow, plan, candidates, ctl, choice, cap_by)
        for at_id, _ in plan.shares:
            at = ctl.ats[at_id]
            if not at.active:
                self._meter(f"at:{at_id}", t)
                access.set_sleep(at, False)
        ctl.attach(flow, plan, t)
        if self._ue_refs.get(ft.ue, 0) == 0:
            ctl.register_endpoint(matric.EndpointRecord(ft.ue, "ue", t))
        self._ue_refs[ft.ue] = self._ue_refs.get(ft.ue, 0) + 1
        self._meter_ats([a for a, _ in plan.shares], t)
        self._track_saturation(ctl, t)
        sla.activate(choice.path)
        self.security[sla.id] = {
            "path": list(choice.path),
            **vars(inter.select_controls(inter.risk_for_path(choice.path))),
        }
        self.sla_summaries[sla.id] = SlaSummary(sla.id, _bounds(sla.kpi))
        window_len = self.params.window_us // self.params.sample_interval_us + 1
        self.active[ft.id] = ActiveFlow(flow, ft, sla, access_dom.id, transit, group, deque(maxlen=window_len))
        if group not in self.group_domain:
            self._place_group(group, access_dom.id, t)
        if ft.stop_us < self.end_us:
            self.kernel.schedule(ft.stop_us, "workload", "depart", ft.id)

    def _track_saturation(self, ctl: matric.Matric, t: int) -> None:
        for at in ctl.ats.values():
            frac = at.load_fraction
            self.max_committed_fraction = max(self.max_committed_fraction, frac)
            if frac >= 1.0 and self.saturation_us is None:
                self.saturation_us = t

    def _explain(self, flow, plan, candidates, ctl, choice, cap_by) -> None:
        p_ref = max(a.power.p_max_w for a in candidates)
        at = ctl.ats[plan.shares[0][0]]
        terms = matric.score_terms(at, flow, ctl.weights, p_ref)
        ex = cognition.explain_decision(
            f"select_at:{flow.id}->{at.id}",
            {"latency": terms.latency, "capacity": terms.capacity, "energy": terms.energy},
            cognition.clamp01,
        )
        self.explanations.append(ex.to_dict())
        gbps = flow.kpi.throughput_dl_bps / inter.GBPS
        ex = cognition.explain_decision(
            f"select_domains:{flow.id}->{'/'.join(choice.path)}",
            {d: cap_by[d].unit_cost * gbps for d in choice.path},
        )
        self.explanations.append(ex.to_dict())

    def _place_group(self, group: str, domain: str, t: int) -> None:
        spec = self.group_specs[group]
        orch = self.domains[domain].orch
        self.group_domain[group] = domain
        if not orch.nodes:
            return
        egress = inter.translate_intent(spec.intent()).throughput_dl_bps * expected_concurrency(spec)
        chain = service_chain(spec, egress)
        try:
            dep = orch.place(chain)
        except intra.NoFeasiblePlacement:
            self.placements[chain.id] = {"domain": domain, "status": "infeasible"}
            return
        self._meter_nodes(domain, t)
        p = dep.plan
        self.placements[chain.id] = {
            "domain": domain, "status": "placed", "method": p.method,
            "assignments": list(p.assignments), "est_power_w": p.est_power_w,
            "est_latency_us": p.est_latency_us, "cost": p.cost,
        }
        self.group_history[group] = []

    def _depart(self, t: int, flow_id: str) -> None:
        af = self.active.pop(flow_id)
        dom = self.domains[af.domain]
        used = list(af.flow.attachments)
        dom.matric.detach(af.flow)
        self._ue_refs[af.template.ue] -= 1
        if self._ue_refs[af.template.ue] == 0:
            dom.matric.deregister_endpoint(af.template.ue)
        self._meter_ats(used, t)
        if af.sla.state != "violated":
            af.sla.state = "terminated"
        if self.sleep_policy:
            for a in used:
                at = dom.matric.ats[a]
                if at.committed_bps == 0 and at.active:
                    access.set_sleep(at, True)
                    self._meter(f"at:{a}", t)

    def _on_tick(self, k: Kernel, ev) -> None:
        t = k.now
        dt = self.params.sample_interval_us
        # Per-AT link state is fixed within a tick; each AT draws from its own stream.
        links: dict[str, tuple] = {}
        for fid, af in self.active.items():
            if af.template.start_us == t:
                continue
            lat = 0
            lost = False
            for at_id in af.flow.attachments:
                link = links.get(at_id)
                if link is None:
                    at = self.domains[af.domain].matric.ats[at_id]
                    base = access.loaded_latency(at, min(at.load_fraction, 0.999999))
                    link = links[at_id] = (base, at.jitter_span_us, at.per_error_rate,
                                           k.rng(f"link.{at_id}").random)
                base, span, per, draw = link
                # Same draws as access.sample_latency / sample_loss, inlined for speed.
                d = base + int(draw() * (span + 1)) if span else base
                if d > lat:
                    lat = d
                if draw() < per:
                    lost = True
            # Carry sub-bit remainders so a full window delivers exactly rate * span.
            bits, af.carry = divmod(af.flow.allocated_bps * dt + af.carry, 1_000_000)
            af.samples.append(LinkSample(t, fid, lat, bits, lost))
            self.ledger.delivered_bits += bits

    def _on_window(self, k: Kernel, ev) -> None:
        t = k.now
        span = self.params.window_us
        for d in self.domains.values():
            for at_id in sorted(d.matric.ats):
                d.matric.collect_metrics(at_id, t)
        lat_by_domain: dict[str, list] = {d: [] for d in self.domains}
        full = span // self.params.sample_interval_us
        for fid, af in list(self.active.items()):
            w = KpiWindow.from_samples(fid, af.samples, t, span)
            if len(w.samples) < full:
                continue  # only windows the flow fully covers are judged
            lat_by_domain[af.domain].extend(s.latency_us for s in w.samples)
            e2e = w if not af.transit_us else KpiWindow(fid, [
                LinkSample(s.t, s.flow, s.latency_us + af.transit_us, s.delivered_bits, s.lost)
                for s in w.samples
            ], span, t)
            kpis = monitoring.window_kpis(e2e, af.sla.kpi)
            report = monitoring.evaluate_sla(af.sla, kpis, t, self.broker, span)
            self.sla_summaries[fid].update(report)
            for name in report.failed:
                self.violations.append({"t_us": t, "sla_id": fid, "kpi": name})
            self._qos(af, w, t, kpis if e2e is w else None)
        for dom_id, lats in lat_by_domain.items():
            if lats:
                self.window_latency[dom_id].append(sum(lats) / len(lats))
        self._handover_round(t)
        self._scale_round(t)

    def _qos(self, af: ActiveFlow, w: KpiWindow, t: int, kpis: Optional[dict] = None) -> None:
        ctl = self.domains[af.domain].matric
        for act in ctl.enforce_qos(af.flow, w, kpis):
            self.qos_actions[act.kind] = self.qos_actions.get(act.kind, 0) + 1
            if act.kind == "increase_share" and act.amount_bps > 0:
                at = ctl.ats[act.at_id]
                access.resize_share(at, af.flow, af.flow.attachments[at.id] + act.amount_bps)
                self._meter_ats([at.id], t)
            elif act.kind == "handover_eval":
                self._try_handover(af, t)
            elif act.kind == "escalate":
                self.escalations += 1

    def _try_handover(self, af: ActiveFlow, t: int) -> None:
        ctl = self.domains[af.domain].matric
        if len(af.flow.attachments) != 1:
            return
        cands = [a for a in ctl.candidates_for(af.flow) if a.active]
        decision = ctl.evaluate_handover(af.flow, cands, t)
        if decision.handover:
            src = af.flow.primary
            ctl.handover(af.flow, decision.target, t)
            self._meter_ats([src, decision.target], t)

    def _handover_round(self, t: int) -> None:
        dwell = self.params.min_dwell_us
        for af in list(self.active.values()):
            if t - af.flow.attached_at_us >= dwell:
                self._try_handover(af, t)
            assert 1 <= len(af.flow.attachments) <= 2, "admitted flow lost its attachment"

    def _scale_round(self, t: int) -> None:
        counts: dict[str, int] = {}
        for af in self.active.values():
            counts[af.group] = counts.get(af.group, 0) + 1
        for group, history in self.group_history.items():
            spec = self.group_specs[group]
            dom = self.group_domain[group]
            orch = self.domains[dom].orch
            chain_id = f"chain.{spec.label}"
            if chain_id not in orch.deployments:
                continue
            dep = orch.deployments[chain_id]
            frac = counts.get(group, 0) / expected_concurrency(spec)
            history.append(tuple(float(v) * frac for v in dep.chain.totals()))
            profile = intra.profile_predict(history[-8:], self.params.ewma_alpha)
            actions = orch.scale(chain_id, profile)
            if actions:
                self._meter_nodes(dom, t)
                for a in actions:
                    self.scale_actions.append({"t_us": t, "chain": chain_id, "kind": a.kind})

    # -- run --

    def run(self) -> RunReport:
        self.kernel.run_until(self.end_us)
        for comp in self._meters:
            self._meter(comp, self.end_us)
        return self._report()

    def _report(self) -> RunReport:
        rows = []
        for sla_id in sorted(self.sla_summaries):
            s = self.sla_summaries[sla_id]
            for name in ("latency", "jitter", "throughput", "reliability"):
                if name in s.worst:
                    rows.append((sla_id, name, _fmt(s.worst[name]), _fmt(s.bounds[name]),
                                 "false" if name in s.failed else "true"))
        drift = {}
        for dom_id, series in sorted(self.window_latency.items()):
            if len(series) >= 4:
                half = len(series) // 2
                r = cognition.detect_drift(series[:half], series[half:], self.params.drift_k)
                drift[dom_id] = {"mean_shift": r.mean_shift, "threshold": r.threshold, "drifted": r.drifted}
        handovers = {}
        for d in self.domains.values():
            handovers.update(d.matric.handovers)
        trace_text = self.kernel.trace.serialize()
        first_tput = min((v["t_us"] for v in self.violations if v["kpi"] == "throughput"), default=None)
        summary = {
            "seed": self.sc.seed,
            "duration_s": self.sc.duration_s,
            "sla_count": len(self.sla_summaries),
            "violated_slas": sorted(s.sla_id for s in self.sla_summaries.values() if s.failed),
            "violation_events": len(self.violations),
            "violations_by_kpi": _count(v["kpi"] for v in self.violations),
            "first_throughput_violation_us": first_tput,
            "saturation_us": self.saturation_us,
            "rejected": self.rejected,
            "handovers_total": sum(handovers.values()),
            "handovers": dict(sorted(handovers.items())),
            "qos_actions": dict(sorted(self.qos_actions.items())),
            "escalations": self.escalations,
            "placements": dict(sorted(self.placements.items())),
            "scale_actions": self.scale_actions,
            "security_plans": dict(sorted(self.security.items())),
            "capabilities": [d.orch.advertise_capabilities().to_row() for _, d in sorted(self.domains.items())],
            "energy": {
                "total_j": self.ledger.total(),
                "delivered_bits": self.ledger.delivered_bits,
                "efficiency_bit_per_j": self.ledger.efficiency() if self.ledger.total() > 0 else None,
                "per_component_j": dict(sorted(self.ledger.joules.items())),
            },
            "max_at_load_fraction": self.max_committed_fraction,
            "drift": drift,
            "events_delivered": self.kernel.delivered,
            "telemetry_samples": self.broker.published,
            "trace_digest": self.kernel.trace.digest(),
        }
        if self.explain:
            summary["explanations"] = self.explanations
        return RunReport(self.sc.seed, self.sc.duration_s, rows, self.ledger, handovers,
                         self.violations, summary, trace_text)



def _bounds(kpi) -> dict:
    return {name: bound for name, bound, _ in monitoring.required_kpis(kpi)}


def _count(items) -> dict:
    out: dict = {}
    for i in items:
        out[i] = out.get(i, 0) + 1
    return dict(sorted(out.items()))


def run(sc: Scenario, explain: Optional[bool] = None) -> RunReport:
    return Simulation(sc, explain).run()
