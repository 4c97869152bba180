"""Strong-error measurement, rate fits and moment estimates.

The estimator couples every step size to the same driving noise: one fine
base grid per path (step ``ref_delta``), coarser increments by exact
aggregation.  The reference at the horizon is either a model's closed form
(fed with the realised Brownian/jump totals) or the scheme itself on the
fine grid.  Errors are raw p-th moments E|X_ref(T) - X_dt(T)|^p, fitted
against the step size by least squares in log2-log2 coordinates.

Work is split into fixed-size path chunks; chunk results are folded in chunk
order, so estimates are byte-identical for any thread count (threads only
schedule chunks).  Chunk size changes the fold order and may move results in
the last bits - keep it fixed when comparing runs.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy import stats

from .errors import (
    DomainError,
    GridError,
    InsufficientDataError,
    InvalidParamError,
)
from .models import ModelSpec
from .noise import generate
from .scheme import SchemeTag, StepSize, run_batch
from .truncation import TruncationConfig

DEFAULT_CHUNK = 256


# ---------------------------------------------------------------------------
# reports
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RateReport:
    """Per-level p-th moment errors plus the fitted log2-log2 slope."""

    scheme: str
    p: float
    deltas: tuple
    errors: tuple
    stderrs: tuple
    overflow_fractions: tuple
    paths: int
    seed: int
    ref_delta: float
    used_exact: bool
    slope: Optional[float] = None
    slope_ci: Optional[float] = None      # 95% half-width
    theoretical_exponent: Optional[float] = None
    note: str = ""

    def to_dict(self) -> dict:
        return {
            "scheme": self.scheme,
            "p": self.p,
            "deltas": list(self.deltas),
            "errors": list(self.errors),
            "stderrs": list(self.stderrs),
            "overflow_fractions": list(self.overflow_fractions),
            "paths": self.paths,
            "seed": self.seed,
            "ref_delta": self.ref_delta,
            "used_exact": self.used_exact,
            "slope": self.slope,
            "slope_ci": self.slope_ci,
            "theoretical_exponent": self.theoretical_exponent,
            "note": self.note,
        }


@dataclass(frozen=True)
class MomentReport:
    """max_k mean |X(t_k)|^q with the standard error at the maximising k."""

    q: float
    delta: float
    estimate: float
    stderr: float
    overflow_fraction: float
    time_at_max: float
    paths: int
    seed: int

    def to_dict(self) -> dict:
        return {
            "q": self.q,
            "delta": self.delta,
            "estimate": self.estimate,
            "stderr": self.stderr,
            "overflow_fraction": self.overflow_fraction,
            "time_at_max": self.time_at_max,
            "paths": self.paths,
            "seed": self.seed,
        }


# ---------------------------------------------------------------------------
# theoretical rate exponents
# ---------------------------------------------------------------------------


def _check_eps_gamma(epsilon: float, gamma: float):
    if not (0.0 < epsilon <= 0.25):
        raise DomainError(f"epsilon must lie in (0, 1/4], got {epsilon}")
    if not (0.0 < gamma <= 1.0):
        raise DomainError(f"gamma must lie in (0, 1], got {gamma}")


def l2_rate_exponent(q: float, beta: float, epsilon: float, gamma: float) -> float:
    """Guaranteed decay exponent of the squared L2 error (order >= 2 theory).

    The bound is dt raised to

        min( eps*(q - 2*beta - 2)/(1 + beta),  1 - 2*eps,  (q - 2*beta)/q,
             2*gamma ).

    ``q`` is the moment order the estimate borrows, ``beta`` the polynomial
    degree from the local Lipschitz bound.  Raises ``DomainError`` when any
    piece is non-positive (the theory then gives nothing).
    """
    _check_eps_gamma(epsilon, gamma)
    if beta < 0.0:
        raise DomainError("beta must be >= 0")
    pieces = (
        epsilon * (q - 2.0 * beta - 2.0) / (1.0 + beta),
        1.0 - 2.0 * epsilon,
        (q - 2.0 * beta) / q if q > 0 else -1.0,
        2.0 * gamma,
    )
    if min(pieces) <= 0.0:
        raise DomainError(
            f"rate pieces {pieces} are not all positive; "
            "q must exceed 2*beta + 2 and epsilon must be < 1/2"
        )
    return min(pieces)


def sub2_rate_exponent(p: float, epsilon: float, gamma: float) -> float:
    """Guaranteed decay exponent of the p-th moment error for 0 < p < 2:

        p * min(1/4 - epsilon, gamma),

    which is 0 at epsilon = 1/4 (the theory degenerates there).
    """
    if not (0.0 < p < 2.0):
        raise DomainError(f"p must lie in (0, 2), got {p}")
    _check_eps_gamma(epsilon, gamma)
    return p * min(0.25 - epsilon, gamma)


def cap_condition_holds(
    phi,
    c2: float,
    epsilon: float,
    p: float,
    gamma: float,
    delta: float,
    k0: float = 1.0,
) -> bool:
    """Check the cap-vs-envelope condition behind the sub-quadratic rate.

    With cap alpha(dt) = k0 * dt**(-epsilon), the condition is

        alpha(dt) >= phi( c2 * (max(alpha(dt)**p * dt**(p/4), dt**(p*gamma)))
                          ** (-1/(2-p)) ).

    ``c2`` is a free positive constant; ``k0`` defaults to 1 (the
    normalisation the rate statement uses).
    """
    if c2 <= 0.0:
        raise DomainError("c2 must be positive")
    if not (0.0 < p < 2.0):
        raise DomainError(f"p must lie in (0, 2), got {p}")
    if not (0.0 < delta <= 1.0):
        raise DomainError(f"delta must lie in (0, 1], got {delta}")
    _check_eps_gamma(epsilon, gamma)
    cap = k0 * delta ** (-epsilon)
    m_val = max(cap**p * delta ** (p / 4.0), delta ** (p * gamma))
    arg = c2 * m_val ** (-1.0 / (2.0 - p))
    return bool(cap >= float(np.asarray(phi(arg))))


# ---------------------------------------------------------------------------
# regression
# ---------------------------------------------------------------------------


def fit_loglog(deltas: Sequence[float], errors: Sequence[float]):
    """OLS slope of log2(error) against log2(dt) with a 95% half-width.

    Needs at least 3 strictly positive, finite error values.
    """
    deltas = np.asarray(deltas, dtype=np.float64)
    errors = np.asarray(errors, dtype=np.float64)
    if deltas.size < 3:
        raise InsufficientDataError("need at least 3 levels for a slope fit")
    if not np.all(np.isfinite(errors)) or np.any(errors <= 0.0):
        raise InsufficientDataError("errors must be positive and finite to fit")
    x = np.log2(deltas)
    y = np.log2(errors)
    xc = x - x.mean()
    sxx = float(np.dot(xc, xc))
    if sxx == 0.0:
        raise InsufficientDataError("all step sizes identical")
    slope = float(np.dot(xc, y) / sxx)
    intercept = float(y.mean() - slope * x.mean())
    resid = y - (intercept + slope * x)
    dof = deltas.size - 2
    se = math.sqrt(float(np.dot(resid, resid)) / dof / sxx)
    half = float(stats.t.ppf(0.975, dof) * se)
    return slope, half


# ---------------------------------------------------------------------------
# chunked path driver
# ---------------------------------------------------------------------------


def _chunks(paths: int, chunk_size: int):
    return [(lo, min(lo + chunk_size, paths)) for lo in range(0, paths, chunk_size)]


def _map_chunks(fn, paths: int, threads: int, chunk_size: int):
    ranges = _chunks(paths, chunk_size)
    if threads <= 1 or len(ranges) == 1:
        return [fn(lo, hi) for lo, hi in ranges]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        futures = [pool.submit(fn, lo, hi) for lo, hi in ranges]
        return [f.result() for f in futures]  # submission order == chunk order


def _stack_noise(model, paths_range, seed, horizon, base_dt):
    lo, hi = paths_range
    count = hi - lo
    steps = None
    db = dn = None
    for i, stream in enumerate(range(lo, hi)):
        b = generate(seed, stream, horizon, base_dt, model.brownian_dim,
                     model.jump_intensity)
        if db is None:
            steps = b.steps
            db = np.empty((steps, count, model.brownian_dim))
            dn = np.empty((steps, count), dtype=np.int64)
        db[:, i, :] = b.d_brownian
        dn[:, i] = b.d_jumps
    return db, dn


# ---------------------------------------------------------------------------
# strong error
# ---------------------------------------------------------------------------


def strong_error(
    model: ModelSpec,
    trunc: Optional[TruncationConfig],
    scheme: SchemeTag,
    deltas: Sequence[float],
    ref_delta: float,
    horizon: float,
    p: float,
    paths: int,
    seed: int,
    *,
    threads: int = 1,
    chunk_size: int = DEFAULT_CHUNK,
    backend: Optional[str] = None,
    use_exact: Optional[bool] = None,
    theoretical_exponent: Optional[float] = None,
) -> RateReport:
    """Monte Carlo p-th moment error at the horizon for each step size.

    ``deltas`` must be strictly decreasing, each an exact multiple of
    ``ref_delta``, and each of the form tau/M.  With fewer than 3 levels no
    slope is fitted.  A zero error on a >= 3 level grid degenerates the
    regression and raises ``InsufficientDataError``; non-finite errors
    (divergent schemes) skip the fit and set a note instead.
    """
    if p <= 0.0:
        raise DomainError("p must be positive")
    if paths < 2:
        raise InvalidParamError("need at least 2 paths")
    deltas = [float(d) for d in deltas]
    if any(d2 >= d1 for d1, d2 in zip(deltas, deltas[1:])):
        raise InvalidParamError("deltas must be strictly decreasing")
    steps_by_level = []
    for d in deltas:
        m_steps = round(model.delay / d)
        if m_steps < 1 or abs(model.delay / m_steps - d) > 1e-9 * d:
            raise GridError(f"step {d} is not delay/{m_steps}")
        steps_by_level.append(StepSize(m_steps, model.delay, horizon))
    ref_m = round(model.delay / ref_delta)
    if ref_m < 1 or abs(model.delay / ref_m - ref_delta) > 1e-9 * ref_delta:
        raise GridError(f"reference step {ref_delta} is not delay/{ref_m}")
    ref_step = StepSize(ref_m, model.delay, horizon)
    ratios = [
        round(s.delta / ref_step.delta) for s in steps_by_level
    ]
    for s, r in zip(steps_by_level, ratios):
        if abs(s.delta / ref_step.delta - r) > 1e-9 * r or r < 1:
            raise GridError(
                f"step {s.delta} is not an integer multiple of the reference "
                f"{ref_step.delta}"
            )
    exact = model.exact_solution is not None if use_exact is None else use_exact
    if exact and model.exact_solution is None:
        raise InvalidParamError("model has no exact-solution hook")

    k_ref = ref_step.steps
    levels = len(deltas)

    def work(lo, hi):
        db_ref, dn_ref = _stack_noise(model, (lo, hi), seed, horizon, ref_step.delta)
        if exact:
            totals_b = db_ref.sum(axis=0)
            totals_n = dn_ref.sum(axis=0)
            ref = np.asarray(
                model.exact_solution(horizon, totals_b, totals_n)
            ).reshape(hi - lo, model.dim)
        else:
            ref = run_batch(model, trunc, ref_step, db_ref, dn_ref, scheme,
                            backend=backend).final
        sums = np.zeros(levels)
        sqs = np.zeros(levels)
        over = np.zeros(levels, dtype=np.int64)
        for i, (s, r) in enumerate(zip(steps_by_level, ratios)):
            if r == 1:
                db, dn = db_ref, dn_ref
            else:
                k = k_ref // r
                db = db_ref.reshape(k, r, hi - lo, model.brownian_dim).sum(axis=1)
                dn = dn_ref.reshape(k, r, hi - lo).sum(axis=1)
            res = run_batch(model, trunc, s, db, dn, scheme, backend=backend)
            with np.errstate(invalid="ignore", over="ignore"):
                ep = np.linalg.norm(res.final - ref, axis=-1) ** p
            sums[i] = ep.sum()
            sqs[i] = np.square(ep).sum()
            over[i] = int(res.overflow.sum())
        return sums, sqs, over

    parts = _map_chunks(work, paths, threads, chunk_size)
    total = np.zeros(levels)
    total_sq = np.zeros(levels)
    total_over = np.zeros(levels, dtype=np.int64)
    for sums, sqs, over in parts:  # fixed fold order
        total = total + sums
        total_sq = total_sq + sqs
        total_over = total_over + over

    means = total / paths
    with np.errstate(invalid="ignore"):
        variances = np.maximum(total_sq / paths - means**2, 0.0)
    stderrs = np.sqrt(variances / paths)

    slope = half = None
    note = ""
    if levels >= 3:
        if np.all(np.isfinite(means)) and np.any(means == 0.0):
            raise InsufficientDataError(
                "zero error estimate on a full grid: regression is degenerate"
            )
        if np.all(np.isfinite(means)) and np.all(means > 0.0):
            slope, half = fit_loglog(deltas, means)
        else:
            note = "non-finite errors (divergence); no slope fitted"
    return RateReport(
        scheme=scheme.value,
        p=p,
        deltas=tuple(deltas),
        errors=tuple(float(v) for v in means),
        stderrs=tuple(float(v) for v in stderrs),
        overflow_fractions=tuple(float(v) / paths for v in total_over),
        paths=paths,
        seed=seed,
        ref_delta=ref_step.delta,
        used_exact=bool(exact),
        slope=slope,
        slope_ci=half,
        theoretical_exponent=theoretical_exponent,
        note=note,
    )


# ---------------------------------------------------------------------------
# moment estimate
# ---------------------------------------------------------------------------


def moment_estimate(
    model: ModelSpec,
    trunc: Optional[TruncationConfig],
    scheme: SchemeTag,
    step: StepSize,
    q: float,
    paths: int,
    seed: int,
    *,
    threads: int = 1,
    chunk_size: int = DEFAULT_CHUNK,
    backend: Optional[str] = None,
) -> MomentReport:
    """Estimate max over grid points of E|X(t_k)|^q.

    Divergent paths poison the estimate by design: if any per-time mean is
    non-finite the estimate is reported as +inf with the overflow fraction
    carrying the signal.
    """
    if q <= 0.0:
        raise DomainError("q must be positive")
    if paths < 2:
        raise InvalidParamError("need at least 2 paths")

    def work(lo, hi):
        db, dn = _stack_noise(model, (lo, hi), seed, step.horizon, step.delta)
        res = run_batch(model, trunc, step, db, dn, scheme,
                        moment_order=q, backend=backend)
        return res.moment_sums, int(res.overflow.sum())

    parts = _map_chunks(work, paths, threads, chunk_size)
    mom = np.zeros((2, step.steps + 1))
    over = 0
    for sums, count in parts:
        mom = mom + sums
        over += count

    means = mom[0] / paths
    if not np.all(np.isfinite(means)):
        return MomentReport(
            q=q, delta=step.delta, estimate=math.inf, stderr=math.nan,
            overflow_fraction=over / paths, time_at_max=math.nan,
            paths=paths, seed=seed,
        )
    k_max = int(np.argmax(means))
    variance = max(mom[1, k_max] / paths - means[k_max] ** 2, 0.0)
    return MomentReport(
        q=q,
        delta=step.delta,
        estimate=float(means[k_max]),
        stderr=math.sqrt(variance / paths),
        overflow_fraction=over / paths,
        time_at_max=k_max * step.delta,
        paths=paths,
        seed=seed,
    )
