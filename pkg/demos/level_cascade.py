"""Fitted iteration constants and the geometric decay gate, per ensemble.

Two fitted quantities drive the level iteration: the contraction constant
that relates each level energy to the previous one, and the geometric
constant dominating realized quadratic variation.  Both should stay of
order one over the ensemble.  The cascade gate then reports how deep each
path's energies stay under (a/M)^2 gamma^k.
"""

import numpy as np

from spde_lab.ensemble import RunConfig, rows_from_summary, run_ensemble
from spde_lab.verify import cascade_diagnostic, check_qv_bound, iteration_from_rows

cfg = RunConfig.from_dict({
    "problem": {
        "N": 64, "dt": 2e-3, "cell": 4,
        "u0_kind": "bump", "u0_size": 1.0, "radius": 0.25,
        "budget": 1.0, "lam": 0.1, "Lambda": 2.0, "slope_frac": 0.5,
        "normalize": True, "coeff_seed": 3, "u0_seed": 12,
    },
    "ensemble": {"n_paths": 32, "run_seed": 2},
    "diagnostics": {"k_max": 6},
})
res = run_ensemble(cfg)
a = 1.0
n = cfg.problem.n

iter_fits, qv_fits = [], []
rows_by_path = []
for s in res.summaries:
    rows = rows_from_summary(s, a)
    rows_by_path.append(rows)
    it = iteration_from_rows(rows, n)
    qv = check_qv_bound(rows)
    if np.isfinite(it.margin):
        iter_fits.append(it.margin)
    if np.isfinite(qv.margin):
        qv_fits.append(qv.margin)

print(f"{len(res.summaries)} paths at level base a = {a}")
print(f"iteration constant: {len(iter_fits)} active paths,"
      f" median {np.median(iter_fits):.3f}, max {max(iter_fits):.3f}")
print(f"qv constant:        {len(qv_fits)} active paths,"
      f" median {np.median(qv_fits):.3f}, max {max(qv_fits):.3f}")

print("\ncascade gate U_k <= (a/M)^2 gamma^k at M=1, gamma=1/2:")
diag = cascade_diagnostic(rows_by_path, M=1.0, gamma=0.5)
for key in sorted(diag["histogram"], key=lambda s: (s != "survived", s)):
    print(f"  first escape at k={key}: {diag['histogram'][key]} paths"
          if key != "survived" else
          f"  survived every level:  {diag['histogram'][key]} paths")
