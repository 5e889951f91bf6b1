"""Numerical laboratory for quasilinear stochastic parabolic equations.

The package simulates equations of the form

    d_t u = div(A grad u) + f(x, u) + sum_i g_i(x, u) dW^i

on a periodic box, with rough (merely measurable) random coefficients A,
and measures the quantities that drive level-truncation regularity
arguments: level energies over shrinking time windows, stochastic
integrals of the noise against truncations, tail frequencies, moment
ratios, and Hoelder exponents, over Monte Carlo ensembles of paths.

Modules
-------
grid          periodic grids, fields, norms, divergence-form calculus
coefficients  rough coefficient sampling, growth data, affine nonlinearities
noise         reproducible Wiener increments with exact coarsening
solver        semi-implicit / explicit time stepping, weak residuals
degiorgi      truncation energies, martingale statistics, Hoelder fits
verify        executable checks (exact identities, fitted constants, MC bounds)
ensemble      run configuration, Monte Carlo orchestration, persistence
report        tables, convergence benchmark, check suites over stored runs
cli           the `spde` command line
"""

__version__ = "0.1.0"
