#!/usr/bin/env python3
"""Sweep cue-policy thresholds over a scenario and tabulate the awareness gap.

For every (mode, origin, category) cell of the default policy this adjusts
one threshold at a time and re-runs the scenario, printing each user's
immersive-mode G next to the baseline.  Lowered thresholds must never raise
G (the monotonicity the acceptance suite asserts; a violation exits 1);
raised thresholds show where a world's awareness actually hangs on the
policy rather than on subscriptions.

Usage: python3 scripts/sweep_thresholds.py [scenario-path] [--seed N]
"""

import argparse
import dataclasses
import sys
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(ROOT / "src"))

from xri.bridge import NEVER, Rule, default_policy  # noqa: E402
from xri.scenario import PolicyOverride, builtin_rv_traveller, load_scenario  # noqa: E402
from xri.sim import run  # noqa: E402


def single_cell_adjustments():
    """Yields (direction, mode, origin, category, rule) one-cell changes."""
    base = default_policy()
    for (mode, origin, category), rule in sorted(
            base.rules.items(), key=lambda kv: (kv[0][0].value,) + kv[0][1:]):
        for new_full in range(1, rule.full_at):
            yield ("lower", mode, origin, category,
                   Rule(new_full, min(rule.summary_at, new_full)))
        for new_summary in range(1, rule.summary_at):
            yield "lower", mode, origin, category, Rule(rule.full_at, new_summary)
        for new_full in range(rule.full_at + 1, NEVER + 1):
            yield "raise", mode, origin, category, Rule(new_full, rule.summary_at)
        for new_summary in range(rule.summary_at + 1, rule.full_at + 1):
            yield "raise", mode, origin, category, Rule(rule.full_at, new_summary)
        if rule != Rule(NEVER, NEVER):
            yield "mute", mode, origin, category, Rule(NEVER, NEVER)


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("scenario", nargs="?", default=None)
    parser.add_argument("--seed", type=int, default=None)
    args = parser.parse_args()

    scenario = (load_scenario(args.scenario) if args.scenario
                else builtin_rv_traveller())
    if args.seed is not None:
        scenario = dataclasses.replace(scenario, seed=args.seed)

    base = run(scenario)
    users = sorted(base.metrics.awareness_gap)
    base_g = {u: base.metrics.awareness_gap[u]["immersive"] for u in users}
    print(f"scenario={scenario.name} seed={scenario.seed}")
    print("baseline  " + "  ".join(f"G({u})={base_g[u]:.3f}" for u in users))

    moved = 0
    violations = 0
    for direction, mode, origin, category, rule in single_cell_adjustments():
        override = PolicyOverride(mode.value, origin, category,
                                  rule.full_at, rule.summary_at)
        result = run(dataclasses.replace(scenario,
                                         policy_overrides=(override,)))
        gs = {u: result.metrics.awareness_gap[u]["immersive"] for u in users}
        delta = {u: gs[u] - base_g[u] for u in users}
        if any(abs(d) > 1e-12 for d in delta.values()):
            moved += 1
            cells = "  ".join(f"G({u})={gs[u]:.3f} ({delta[u]:+.3f})"
                              for u in users)
            print(f"{direction:5s} {mode.value:9s} {origin:8s} {category:16s} "
                  f"full>={rule.full_at} summary>={rule.summary_at}  {cells}")
        if direction == "lower" and any(d > 1e-12 for d in delta.values()):
            print("  ^ MONOTONICITY VIOLATION", file=sys.stderr)
            violations += 1
    print(f"{moved} adjustments moved G; "
          f"{violations} monotonicity violations")
    return 1 if violations else 0


if __name__ == "__main__":
    sys.exit(main())
