"""Shapley attributions for access and domain choices in a mixed multi-domain run.

Run with ``python demos/explain_decisions.py``.
"""

from __future__ import annotations

from sixgsim.scenario import bundled_scenarios, load_scenario
from sixgsim.sim import run

if __name__ == "__main__":
    report = run(load_scenario(bundled_scenarios()["mixed_multidomain"]), explain=True)
    seen = set()
    for ex in report.summary["explanations"]:
        kind = ex["decision"].split(":")[0]
        group = ex["decision"].split(":")[1].split(".")[0]
        if (kind, group) in seen:
            continue
        seen.add((kind, group))
        print(f"{ex['decision']}  score {ex['score']:.4g}")
        for feature, phi in ex["attribution"].items():
            print(f"    {feature:10s} {phi:+.4g}")
