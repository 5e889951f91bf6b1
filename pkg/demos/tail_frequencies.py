"""Joint exceedance frequencies against the stretched-exponential bound.

The event counted per path: the solution's positive part exceeds level a
on the late window while M times the mixed space-time norm of the data
stays under a.  The claimed bound exp(-M^delta) kicks in once M passes
an onset that depends on the data; this demo prints both sides of that
comparison for a small ensemble.
"""

from spde_lab.ensemble import RunConfig, run_ensemble
from spde_lab.verify import tail_from_stats

cfg = RunConfig.from_dict({
    "problem": {
        "N": 64, "dt": 2e-3, "cell": 4,
        "u0_kind": "bump", "u0_size": 1.0, "radius": 0.25,
        "budget": 1.0, "lam": 0.1, "Lambda": 2.0, "slope_frac": 0.5,
        "normalize": True, "coeff_seed": 3, "u0_seed": 12,
    },
    "ensemble": {"n_paths": 48, "run_seed": 101},
    # small M added so the joint event actually fires at the onset
    "diagnostics": {"M_grid": [1.0, 2.0, 4.0, 8.0, 16.0, 32.0]},
})
res = run_ensemble(cfg)
print(f"ran {len(res.summaries)} paths (N={cfg.problem.N}, dt={cfg.problem.dt})")
print(f"sup_+ range over paths: [{min(s['sup_plus'] for s in res.summaries):.3f},"
      f" {max(s['sup_plus'] for s in res.summaries):.3f}]")

result = tail_from_stats(
    [s["sup_plus"] for s in res.summaries],
    [s["mixed_42"] for s in res.summaries],
    cfg.problem.n,
    cfg.diagnostics.M_grid,
    cfg.diagnostics.a_grid,
    u0_norm=res.manifest["data_norms"]["u0_l2"],
    K_inf=res.manifest["data_norms"]["K_inf"],
)

delta = result.details["exponent"]
print(f"\nstretching exponent delta = {delta:g} (n = {cfg.problem.n})")
print(f"{'a':>5} {'M':>5} {'frequency':>10} {'bound':>10} {'gap':>10}")
for a, rows in result.details["table"].items():
    for entry in rows:
        print(f"{a:>5} {entry['M']:>5g} {entry['frequency']:>10.4f}"
              f" {entry['bound']:>10.4f} {entry['gap']:>10.4f}")

print(f"\nonset per level: {result.details['onset_M']}")
print(f"bound respected from onset on: {result.passed} (margin {result.margin:.4f})")
