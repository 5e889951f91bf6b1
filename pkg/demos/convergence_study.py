"""Measure the solver's error scaling on the built-in benchmark set.

Three families of runs:

  temporal  heat equation against the exact decaying mode, shrinking dt
  spatial   the same target, shrinking dx at fixed small dt
  self      a rough-coefficient stochastic run against its own finest dt

The fitted slopes should land near 1, 2 and 1: Euler in time, centered
differences in space, and strong order for additive noise.
"""

import math

from spde_lab.report import check_convergence, convergence_rows

rows = convergence_rows()

print(f"{'kind':>9} {'step':>10} {'error':>12} {'ratio':>7}")
prev = {}
for kind, step, err in rows:
    ratio = prev[kind] / err if kind in prev else float("nan")
    prev[kind] = err
    shown = f"{ratio:.2f}" if not math.isnan(ratio) else "-"
    print(f"{kind:>9} {step:>10.2e} {err:>12.5e} {shown:>7}")

result = check_convergence(rows)
print("\nfitted orders:")
for kind, fit in result.details["orders"].items():
    lo, hi = result.details["bands"][kind]
    hi_s = f"{hi:g}" if hi is not None else "inf"
    print(f"  {kind:>9}: {fit:.4f}  (accepted band [{lo:g}, {hi_s}])")
print(f"\nall bands satisfied: {result.passed} (margin {result.margin:.4f})")
