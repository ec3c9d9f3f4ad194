"""Intermittent digital-twin load with and without the AT sleep policy.

Run with ``python demos/energy_sleep.py``.
"""

from __future__ import annotations

from sixgsim.scenario import bundled_scenarios, load_scenario
from sixgsim.sim import run

if __name__ == "__main__":
    for name in ("intermittent_always_on", "intermittent_sleep"):
        e = run(load_scenario(bundled_scenarios()[name])).summary["energy"]
        print(f"{name:24s} {e['total_j']:10.1f} J  {e['delivered_bits']:.4g} bits  "
              f"{e['efficiency_bit_per_j']:.4g} bit/J")
