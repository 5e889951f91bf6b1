"""Reproducible Wiener increments and the stream-keying contract.

Every source of randomness in the package draws from a counter-based
generator (Philox) whose key is derived from

    (run_seed, role, path_index, extra...)

via ``SeedSequence`` spawn keys.  Streams for different keys are
independent and order-free: a path's draws never depend on how many other
paths ran, or in what order, which is what makes ensembles reproducible
across worker counts.

Noise increments are generated once at the finest resolution and coarsened
by exact summation, so that runs at dt and 2*dt share a Brownian path
bit-for-bit (the basis of the self-convergence tests).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["ROLE_CODES", "stream_generator", "NoisePath", "generate", "coarsen"]

# stable role -> integer mapping; part of the reproducibility contract,
# recorded in run manifests. Append-only, never reorder.
ROLE_CODES = {
    "noise": 0,
    "coefficient": 1,
    "u0": 2,
    "nonlinearity": 3,
    "reflection": 4,
}


def stream_generator(run_seed: int, role: str, path_index: int = 0, extra=()) -> np.random.Generator:
    """Independent generator for one (seed, role, path, extra...) stream."""
    if role not in ROLE_CODES:
        raise ValueError(f"unknown stream role {role!r}; known: {sorted(ROLE_CODES)}")
    key = (ROLE_CODES[role], int(path_index)) + tuple(int(e) for e in extra)
    ss = np.random.SeedSequence(entropy=int(run_seed), spawn_key=key)
    return np.random.Generator(np.random.Philox(ss))


@dataclass(frozen=True)
class NoisePath:
    """Increments of an m-dimensional Wiener process at resolution dt_fine.

    ``increments[i, j]`` is W^{i+1}(t_{j+1}) - W^{i+1}(t_j), distributed
    N(0, dt_fine).  ``seed_key`` records (run_seed, path_index, "noise") for
    the manifest.
    """

    m: int
    t0: float
    t1: float
    dt_fine: float
    increments: np.ndarray
    seed_key: tuple

    def __post_init__(self):
        steps = (self.t1 - self.t0) / self.dt_fine
        if abs(steps - round(steps)) > 1e-9:
            raise ValueError(f"dt_fine does not divide the span: {steps} steps")
        if self.increments.shape != (self.m, int(round(steps))):
            raise ValueError(
                f"increments shape {self.increments.shape} != {(self.m, int(round(steps)))}"
            )
        self.increments.flags.writeable = False

    @property
    def steps(self) -> int:
        return self.increments.shape[1]

    def totals(self) -> np.ndarray:
        """W^i(t1) - W^i(t0) per mode."""
        return self.increments.sum(axis=1)


def generate(m: int, t0: float, t1: float, dt_fine: float, seed_key) -> NoisePath:
    """Generate increments for modes 1..m from streams keyed per mode.

    ``seed_key`` is (run_seed, path_index).  Mode i draws from the stream
    (run_seed, "noise", path_index, (i,)), so modes are independent and a
    path can be regenerated without touching any other stream.
    """
    if not (dt_fine > 0):
        raise ValueError(f"dt_fine must be positive, got {dt_fine}")
    if m < 1:
        raise ValueError(f"need at least one mode, got m={m}")
    run_seed, path_index = int(seed_key[0]), int(seed_key[1])
    steps = (t1 - t0) / dt_fine
    if abs(steps - round(steps)) > 1e-9:
        raise ValueError(f"dt_fine={dt_fine} does not divide t1-t0={t1 - t0}")
    steps = int(round(steps))
    scale = np.sqrt(dt_fine)
    inc = np.empty((m, steps))
    for i in range(m):
        rng = stream_generator(run_seed, "noise", path_index, extra=(i + 1,))
        inc[i] = rng.standard_normal(steps) * scale
    return NoisePath(
        m=m,
        t0=float(t0),
        t1=float(t1),
        dt_fine=float(dt_fine),
        increments=inc,
        seed_key=(run_seed, path_index, "noise"),
    )


def coarsen(path: NoisePath, factor: int) -> NoisePath:
    """Merge groups of `factor` fine increments into one coarse increment.

    factor must be a power of two dividing the step count.  Summation is by
    repeated pairwise folding, so coarsen(coarsen(p, 2), 2) equals
    coarsen(p, 4) bit-for-bit, and each coarse increment is an exact
    (fixed-order) sum of the fine increments it covers.
    """
    if factor < 1 or (factor & (factor - 1)) != 0:
        raise ValueError(f"factor must be a power of two, got {factor}")
    if factor == 1:
        return path
    if path.steps % factor != 0:
        raise ValueError(f"factor {factor} does not divide step count {path.steps}")
    inc = path.increments
    f = factor
    while f > 1:
        inc = inc[:, 0::2] + inc[:, 1::2]
        f //= 2
    return NoisePath(
        m=path.m,
        t0=path.t0,
        t1=path.t1,
        dt_fine=path.dt_fine * factor,
        increments=inc,
        seed_key=path.seed_key,
    )
