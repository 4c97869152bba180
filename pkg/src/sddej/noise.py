"""Driving noise: shared Brownian/Poisson increments on a fine base grid.

Strong-error measurement needs *coupled* discretisations: every scheme, at
every step size, must consume the same underlying noise.  A ``NoiseBundle``
therefore stores increments on one fine base grid; coarser grids are obtained
by summing consecutive fine increments (exact integer sums for the jump
counts, numpy pairwise summation for the Brownian part).

Streams are counter-based (Philox) and keyed by ``(seed, stream, substream)``
where the substream separates the Brownian from the Poisson draws.  Bundles
are reproducible bit-for-bit from their key and independent of how many are
generated, in which order, or on how many threads.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.random import Generator, Philox

from .errors import DomainError, GridError, InvalidParamError

_SUB_BROWNIAN = 0
_SUB_POISSON = 1


def _stream_key(seed: int, stream: int, substream: int) -> np.ndarray:
    # 2-word Philox key: (seed, 2*stream + substream), each reduced mod 2^64
    return np.array(
        [int(seed) % 2**64, (2 * int(stream) + substream) % 2**64], dtype=np.uint64
    )


def exact_divisor(coarse: float, fine: float, what: str = "step size") -> int:
    """Integer ratio coarse/fine, validated to a relative 1e-9; else GridError."""
    if fine <= 0.0 or coarse <= 0.0:
        raise GridError(f"{what} must be positive")
    ratio = coarse / fine
    k = round(ratio)
    if k < 1 or abs(ratio - k) > 1e-9 * max(1.0, ratio):
        raise GridError(
            f"{what} {coarse} is not an integer multiple of {fine} (ratio {ratio})"
        )
    return k


@dataclass(frozen=True)
class NoiseBundle:
    """Increments of (B, N) on a uniform base grid covering [0, horizon].

    ``d_brownian`` has shape (steps, m) with variance base_dt per entry;
    ``d_jumps`` has shape (steps,) with integer Poisson(lam * base_dt) counts.
    """

    base_dt: float
    horizon: float
    brownian_dim: int
    lam: float
    seed: int
    stream: int
    d_brownian: np.ndarray
    d_jumps: np.ndarray

    @property
    def steps(self) -> int:
        return self.d_jumps.shape[0]

    def brownian_between(self, j0: int, j1: int) -> np.ndarray:
        """B(t_{j1}) - B(t_{j0}) summed from base increments, shape (m,)."""
        if not (0 <= j0 <= j1 <= self.steps):
            raise GridError(f"base index range [{j0}, {j1}] out of bounds")
        if j0 == j1:
            return np.zeros(self.brownian_dim)
        return self.d_brownian[j0:j1].sum(axis=0)

    def jumps_between(self, j0: int, j1: int) -> int:
        """N(t_{j1}) - N(t_{j0}); exact integer count."""
        if not (0 <= j0 <= j1 <= self.steps):
            raise GridError(f"base index range [{j0}, {j1}] out of bounds")
        return int(self.d_jumps[j0:j1].sum())


def generate(
    seed: int,
    stream: int,
    horizon: float,
    base_dt: float,
    brownian_dim: int = 1,
    lam: float = 0.0,
) -> NoiseBundle:
    """Draw one bundle.  Same key -> bit-identical arrays."""
    if brownian_dim < 1:
        raise InvalidParamError("brownian_dim must be >= 1")
    if lam < 0.0:
        raise InvalidParamError("lam must be >= 0")
    steps = exact_divisor(horizon, base_dt, "horizon")
    gen_b = Generator(Philox(key=_stream_key(seed, stream, _SUB_BROWNIAN)))
    gen_p = Generator(Philox(key=_stream_key(seed, stream, _SUB_POISSON)))
    d_brownian = gen_b.normal(0.0, np.sqrt(base_dt), size=(steps, brownian_dim))
    d_jumps = gen_p.poisson(lam * base_dt, size=steps).astype(np.int64)
    return NoiseBundle(
        base_dt=base_dt,
        horizon=horizon,
        brownian_dim=brownian_dim,
        lam=lam,
        seed=seed,
        stream=stream,
        d_brownian=d_brownian,
        d_jumps=d_jumps,
    )


def aggregate(bundle: NoiseBundle, coarse_dt: float):
    """Increments on a coarser nested grid: (dB (k, m), dN (k,)).

    ``coarse_dt`` must be an integer multiple of the base step and divide the
    horizon.  With factor 1 the stored arrays are returned unchanged.  Jump
    counts add exactly; Brownian sums use numpy's pairwise summation, so
    nesting chains agree to reassociation tolerance only.
    """
    factor = exact_divisor(coarse_dt, bundle.base_dt, "coarse step")
    if factor == 1:
        return bundle.d_brownian, bundle.d_jumps
    if bundle.steps % factor != 0:
        raise GridError(
            f"coarse step {coarse_dt} does not divide the horizon "
            f"({bundle.steps} base steps, factor {factor})"
        )
    k = bundle.steps // factor
    d_b = bundle.d_brownian.reshape(k, factor, bundle.brownian_dim).sum(axis=1)
    d_n = bundle.d_jumps.reshape(k, factor).sum(axis=1)
    return d_b, d_n


def poisson_moment_check(bundle: NoiseBundle, p: float) -> float:
    """Sample mean of |dN|**p over the bundle's cells.

    For small lam * base_dt this is close to lam * base_dt for every p > 0
    (the count is almost surely 0 or 1), which is the scaling the error
    analysis leans on.  Returns 0.0 for a jump-free bundle.
    """
    if p <= 0.0:
        raise DomainError("moment order must be positive")
    counts = bundle.d_jumps
    if not counts.any():
        return 0.0
    return float(np.mean(counts.astype(np.float64) ** p))
