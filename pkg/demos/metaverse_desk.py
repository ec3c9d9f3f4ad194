"""Twenty metaverse users on a LiFi desk, then the same desk with its capacity cut.

Run with ``python demos/metaverse_desk.py``.
"""

from __future__ import annotations

from sixgsim.scenario import bundled_scenarios, load_scenario
from sixgsim.sim import run


def describe(name: str) -> None:
    report = run(load_scenario(bundled_scenarios()[name]))
    s = report.summary
    worst = max(float(r[2]) for r in report.sla_rows if r[1] == "latency")
    print(f"{name}")
    print(f"  SLAs {s['sla_count']}, violated {len(s['violated_slas'])}, worst p99 latency {worst / 1000:.2f} ms")
    print(f"  peak AT load {s['max_at_load_fraction']:.2f}, saturation at {s['saturation_us']} us, "
          f"first throughput violation at {s['first_throughput_violation_us']} us")


if __name__ == "__main__":
    describe("m1_metaverse")
    describe("m2_metaverse_saturated")
