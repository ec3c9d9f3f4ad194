"""Decompose an end-to-end SLA across two domains and pick their security controls.

Run with ``python demos/multidomain_sla.py``.
"""

from __future__ import annotations

from sixgsim.inter import (
    E2eSla, TaskIntent, decompose_sla, recompose, risk_for_path, select_controls, select_domains, translate_intent,
)
from sixgsim.intra import CapabilityRecord

GBPS = 1_000_000_000

if __name__ == "__main__":
    caps = [
        CapabilityRecord("campus", 40 * GBPS, 900, 0.9999999, 1.0, ("z0",)),
        CapabilityRecord("metro", 400 * GBPS, 4_000, 0.9999999, 0.4, ("z1",)),
    ]
    intent = TaskIntent("digital_twin", 50, 10.0, "z0", remote_zone="z1")
    kpi = translate_intent(intent)
    choice = select_domains(kpi, caps, intent=intent)
    sla = E2eSla("twin", kpi, choice.path)
    parts = decompose_sla(sla, caps)
    print(f"path {' -> '.join(choice.path)}, cost {choice.cost:.3g}, min latency {choice.latency_us} us")
    for p in parts:
        print(f"  {p.id:14s} latency <= {p.kpi.latency_bound_us} us, reliability >= {p.kpi.reliability_min:.9f}")
    back = recompose(parts)
    print(f"  recomposed: {back.latency_bound_us} us, {back.reliability_min:.9f}")
    controls = select_controls(risk_for_path(choice.path))
    print(f"  controls: {controls}")
