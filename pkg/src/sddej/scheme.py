"""Stepping schemes and interpolants.

The explicit update on the uniform grid t_k = k * dt, dt = tau / M, is

    X(t_{k+1}) = X(t_k) + f*(.) dt + g*(.) dB_k + h*(.) dN_k,

where the coefficient arguments are (X(t_k), X(t_{k-M})) and the starred
coefficients are either raw (plain Euler) or evaluated at radially projected
arguments (truncated schemes; see ``truncation``).  For k <= 0 the chain is
pinned to the history segment.

Two backends produce the same chains: a vectorised numpy engine (always
available, any dimension, arbitrary coefficient callbacks) and an optional
compiled kernel for the scalar built-in coefficient families.  Selection is
automatic; force one with the ``SDDEJ_BACKEND`` environment variable or the
``backend=`` argument.  Within a backend results are deterministic; across
backends they agree to rounding noise (the compiled kernel replays the same
arithmetic but libm/ufunc rounding may differ in the last bits).

Two read-outs of a computed chain are provided: the piecewise-constant
interpolant (left endpoint held on each cell) and the continuous one (the
cell's frozen coefficients integrated against the actual noise inside the
cell).  Both coincide with the chain at grid times by construction.

Divergence is data, not an error: once a path's state exceeds
``OVERFLOW_LIMIT`` in magnitude (or goes non-finite), the path is halted,
its remaining states are NaN and its overflow flag is set.
"""

from __future__ import annotations

import enum
import math
import os
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import GridError, InvalidParamError
from .models import ModelSpec
from .noise import NoiseBundle, exact_divisor
from .truncation import Regime, TruncationConfig, project_to_ball, truncation_radius

try:
    from . import _speedups
except ImportError:  # pragma: no cover - depends on build environment
    _speedups = None

OVERFLOW_LIMIT = 1e150

_KERNEL_FAMILIES = {"scalar_linear": 0, "scalar_cubic": 1}


def compiled_backend_available() -> bool:
    return _speedups is not None


class SchemeTag(enum.Enum):
    TRUNCATED_FG = "tem-fg"    # truncate drift + diffusion arguments
    TRUNCATED_FGH = "tem-fgh"  # truncate all three
    PLAIN_EM = "em"            # no truncation


# ---------------------------------------------------------------------------
# grids and paths
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class StepSize:
    """Uniform grid: dt = tau/M on [-tau, T], with T an exact multiple of dt."""

    m_steps: int
    tau: float
    horizon: float

    def __post_init__(self):
        if self.m_steps < 1:
            raise InvalidParamError("m_steps must be a positive integer")
        if not (self.tau > 0.0 and math.isfinite(self.tau)):
            raise InvalidParamError("tau must be positive")
        if not (self.horizon > 0.0 and math.isfinite(self.horizon)):
            raise InvalidParamError("horizon must be positive")
        ratio = self.horizon / self.delta
        if abs(ratio - round(ratio)) > 1e-9 * max(1.0, ratio) or round(ratio) < 1:
            raise GridError(
                f"horizon {self.horizon} is not an integer number of steps "
                f"dt={self.delta}"
            )

    @property
    def delta(self) -> float:
        return self.tau / self.m_steps

    @property
    def steps(self) -> int:
        return round(self.horizon / self.delta)


@dataclass(frozen=True)
class SolutionPath:
    """One realised chain on [-tau, T]; row i holds the state at times[i]."""

    step: StepSize
    times: np.ndarray
    states: np.ndarray
    scheme: SchemeTag
    overflow_flag: bool

    def state_at(self, k: int) -> np.ndarray:
        """State at grid index k, k in [-M, K] (k <= 0 is the segment)."""
        m = self.step.m_steps
        if not (-m <= k <= self.step.steps):
            raise GridError(f"grid index {k} outside [-{m}, {self.step.steps}]")
        return self.states[k + m]


# ---------------------------------------------------------------------------
# batch engine
# ---------------------------------------------------------------------------


@dataclass
class BatchResult:
    final: np.ndarray                       # (P, n) states at T
    overflow: np.ndarray                    # (P,) bool
    traj: Optional[np.ndarray] = None       # (K+1, P, n) states at t_0..t_K
    moment_sums: Optional[np.ndarray] = None  # (2, K+1): sum |X|^q, sum |X|^(2q)


def _segment_values(model: ModelSpec, step: StepSize) -> np.ndarray:
    dt = step.delta
    m = step.m_steps
    return np.stack([model.initial_value((j - m) * dt) for j in range(m + 1)])


def _resolve_backend(backend: Optional[str]) -> str:
    choice = backend or os.environ.get("SDDEJ_BACKEND", "auto")
    if choice not in ("auto", "python", "compiled"):
        raise InvalidParamError(f"unknown backend {choice!r}")
    if choice == "compiled" and _speedups is None:
        raise InvalidParamError("compiled backend requested but not built")
    return choice


def run_batch(
    model: ModelSpec,
    trunc: Optional[TruncationConfig],
    step: StepSize,
    d_brownian: np.ndarray,
    d_jumps: np.ndarray,
    scheme: SchemeTag,
    *,
    record: bool = False,
    moment_order: Optional[float] = None,
    backend: Optional[str] = None,
) -> BatchResult:
    """Advance a batch of paths through the full grid.

    ``d_brownian`` has shape (K, P, m) and ``d_jumps`` (K, P), already
    aggregated to the scheme's step size.  Moment tracking accumulates
    sum_p |X_p(t_k)| ** q and its square per grid index.
    """
    n, m = model.dim, model.brownian_dim
    k_steps, n_paths = d_jumps.shape
    if k_steps != step.steps:
        raise GridError(f"noise rows {k_steps} != scheme steps {step.steps}")
    if d_brownian.shape != (k_steps, n_paths, m):
        raise GridError(
            f"Brownian array shape {d_brownian.shape} != {(k_steps, n_paths, m)}"
        )
    if scheme is not SchemeTag.PLAIN_EM:
        if trunc is None:
            raise InvalidParamError("truncated schemes need a TruncationConfig")
        radius = truncation_radius(trunc, step.delta)
    else:
        radius = math.inf
    seg = _segment_values(model, step)

    choice = _resolve_backend(backend)
    use_kernel = (
        choice != "python"
        and _speedups is not None
        and model.kernel is not None
        and model.kernel[0] in _KERNEL_FAMILIES
        and n == 1
        and m == 1
    )
    if choice == "compiled" and not use_kernel:
        raise InvalidParamError("compiled backend cannot handle this model")

    if use_kernel:
        return _run_compiled(model, step, seg, d_brownian, d_jumps, scheme, radius,
                             record, moment_order)
    return _run_numpy(model, step, seg, d_brownian, d_jumps, scheme, radius,
                      record, moment_order)


def _run_compiled(model, step, seg, d_brownian, d_jumps, scheme, radius,
                  record, moment_order):
    k_steps, n_paths = d_jumps.shape
    m_steps = step.m_steps
    hist = np.empty((m_steps + 1, n_paths))
    hist[:] = seg[:, 0:1]
    db = np.ascontiguousarray(d_brownian[:, :, 0])
    dn = np.ascontiguousarray(d_jumps, dtype=np.int64)
    overflow = np.zeros(n_paths, dtype=np.uint8)
    final = np.empty(n_paths)
    traj = np.empty((k_steps + 1, n_paths)) if record else None
    mom = np.zeros((2, k_steps + 1)) if moment_order is not None else None
    family = _KERNEL_FAMILIES[model.kernel[0]]
    params = np.asarray(model.kernel[1], dtype=np.float64)
    _speedups.step_scalar(
        hist, db, dn, step.delta, radius,
        scheme is SchemeTag.TRUNCATED_FGH, family, params,
        OVERFLOW_LIMIT, overflow, final,
        traj, mom, 0.0 if moment_order is None else float(moment_order),
    )
    return BatchResult(
        final=final[:, None],
        overflow=overflow.astype(bool),
        traj=traj[:, :, None] if record else None,
        moment_sums=mom,
    )


def _run_numpy(model, step, seg, d_brownian, d_jumps, scheme, radius,
               record, moment_order):
    k_steps, n_paths = d_jumps.shape
    n = model.dim
    m_steps = step.m_steps
    dt = step.delta
    truncated = scheme is not SchemeTag.PLAIN_EM
    jump_truncated = scheme is SchemeTag.TRUNCATED_FGH

    hist = np.empty((m_steps + 1, n_paths, n))
    hist[:] = seg[:, None, :]
    overflow = np.zeros(n_paths, dtype=bool)
    traj = np.empty((k_steps + 1, n_paths, n)) if record else None
    if record:
        traj[0] = hist[m_steps]
    mom = np.zeros((2, k_steps + 1)) if moment_order is not None else None
    if moment_order is not None:
        aq = np.linalg.norm(hist[m_steps], axis=-1) ** moment_order
        mom[0, 0] = aq.sum()
        mom[1, 0] = (aq * aq).sum()

    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(k_steps):
            cur = hist[(k + m_steps) % (m_steps + 1)]
            dly = hist[k % (m_steps + 1)]
            if truncated:
                px = project_to_ball(cur, radius)
                py = project_to_ball(dly, radius)
            else:
                px, py = cur, dly
            f = model.drift(px, py)
            g = model.diffusion(px, py)
            if jump_truncated:
                h = model.jump(px, py)
            else:
                h = model.jump(cur, dly)
            xn = (
                cur
                + f * dt
                + np.einsum("pnm,pm->pn", g, d_brownian[k])
                + h * d_jumps[k][:, None]
            )
            bad = ~np.all(np.isfinite(xn), axis=-1) | (
                np.max(np.abs(xn), axis=-1) > OVERFLOW_LIMIT
            )
            overflow |= bad
            if overflow.any():
                xn[overflow] = np.nan
            hist[k % (m_steps + 1)] = xn
            if record:
                traj[k + 1] = xn
            if moment_order is not None:
                aq = np.linalg.norm(xn, axis=-1) ** moment_order
                mom[0, k + 1] = aq.sum()
                mom[1, k + 1] = (aq * aq).sum()

    final = hist[(k_steps + m_steps) % (m_steps + 1)].copy()
    return BatchResult(final=final, overflow=overflow, traj=traj, moment_sums=mom)


# ---------------------------------------------------------------------------
# single-path fronts
# ---------------------------------------------------------------------------


def _bundle_to_arrays(model: ModelSpec, step: StepSize, noise: NoiseBundle):
    if noise.brownian_dim != model.brownian_dim:
        raise GridError(
            f"noise has {noise.brownian_dim} Brownian components, "
            f"model needs {model.brownian_dim}"
        )
    if abs(noise.horizon - step.horizon) > 1e-9 * max(1.0, step.horizon):
        raise GridError(
            f"noise horizon {noise.horizon} != integration horizon {step.horizon}"
        )
    ratio = exact_divisor(step.delta, noise.base_dt, "scheme step")
    k_steps = step.steps
    if k_steps * ratio != noise.steps:
        raise GridError(
            f"noise grid ({noise.steps} cells) does not tile {k_steps} scheme steps"
        )
    if ratio == 1:
        db = noise.d_brownian
        dn = noise.d_jumps
    else:
        db = noise.d_brownian.reshape(k_steps, ratio, noise.brownian_dim).sum(axis=1)
        dn = noise.d_jumps.reshape(k_steps, ratio).sum(axis=1)
    return db[:, None, :], dn[:, None]


def _path_from_batch(model, step, scheme, result: BatchResult, which: int = 0):
    m_steps = step.m_steps
    seg = _segment_values(model, step)
    states = np.concatenate([seg[:-1], result.traj[:, which, :]], axis=0)
    times = np.arange(-m_steps, step.steps + 1) * step.delta
    return SolutionPath(
        step=step,
        times=times,
        states=states,
        scheme=scheme,
        overflow_flag=bool(result.overflow[which]),
    )


def integrate(
    model: ModelSpec,
    trunc: TruncationConfig,
    step: StepSize,
    noise: NoiseBundle,
    backend: Optional[str] = None,
) -> SolutionPath:
    """Truncated scheme; the regime comes from the truncation config."""
    scheme = (
        SchemeTag.TRUNCATED_FGH if trunc.regime is Regime.FGH else SchemeTag.TRUNCATED_FG
    )
    db, dn = _bundle_to_arrays(model, step, noise)
    result = run_batch(model, trunc, step, db, dn, scheme,
                       record=True, backend=backend)
    return _path_from_batch(model, step, scheme, result)


def integrate_plain_em(
    model: ModelSpec,
    step: StepSize,
    noise: NoiseBundle,
    backend: Optional[str] = None,
) -> SolutionPath:
    """Euler-Maruyama without truncation; may overflow (that is the point)."""
    db, dn = _bundle_to_arrays(model, step, noise)
    result = run_batch(model, None, step, db, dn, SchemeTag.PLAIN_EM,
                       record=True, backend=backend)
    return _path_from_batch(model, step, SchemeTag.PLAIN_EM, result)


def integrate_many(
    model: ModelSpec,
    trunc: Optional[TruncationConfig],
    step: StepSize,
    bundles: Sequence[NoiseBundle],
    scheme: Optional[SchemeTag] = None,
    backend: Optional[str] = None,
) -> list[SolutionPath]:
    """Integrate a family of bundles in one vectorised batch."""
    if scheme is None:
        if trunc is None:
            scheme = SchemeTag.PLAIN_EM
        else:
            scheme = (
                SchemeTag.TRUNCATED_FGH
                if trunc.regime is Regime.FGH
                else SchemeTag.TRUNCATED_FG
            )
    pieces = [_bundle_to_arrays(model, step, b) for b in bundles]
    db = np.concatenate([p[0] for p in pieces], axis=1)
    dn = np.concatenate([p[1] for p in pieces], axis=1)
    result = run_batch(model, trunc, step, db, dn, scheme,
                       record=True, backend=backend)
    return [
        _path_from_batch(model, step, scheme, result, which=i)
        for i in range(len(bundles))
    ]


# ---------------------------------------------------------------------------
# interpolants
# ---------------------------------------------------------------------------


def _cell_index(t: float, delta: float, lo: int, hi: int) -> int:
    """floor(t/dt) with a 1e-9 relative snap onto grid points."""
    r = t / delta
    k = math.floor(r)
    if r - k > 1.0 - 1e-9 * max(1.0, abs(r)):
        k += 1
    if not (lo <= k <= hi):
        raise GridError(f"time {t} outside the path's grid range")
    return k


def interp_pc(path: SolutionPath, t: float):
    """Piecewise-constant read-out on [-tau, T]: the state at floor(t/dt).

    Constant on [t_k, t_{k+1}); t = T returns the final state.
    """
    step = path.step
    slack = 1e-9 * max(1.0, step.horizon)
    if t < -step.tau - slack or t > step.horizon + slack:
        raise GridError(f"time {t} outside [-{step.tau}, {step.horizon}]")
    k = _cell_index(min(t, step.horizon), step.delta, -step.m_steps, step.steps)
    return path.states[min(k, step.steps) + step.m_steps]


def interp_continuous(
    path: SolutionPath,
    model: ModelSpec,
    trunc: Optional[TruncationConfig],
    noise: NoiseBundle,
    t: float,
):
    """Continuous read-out on [0, T] at a noise-base-grid time.

    Inside cell (t_k, t_{k+1}] the cell's frozen coefficients are integrated
    against the realised noise:

        x(t) = X(t_k) + f*(.) (t - t_k) + g*(.) (B(t) - B(t_k))
               + h(.) (N(t) - N(t_k)).

    At grid times all increments vanish, so the read-out coincides with the
    chain bit-for-bit.  ``t`` must lie on the bundle's base grid (that is
    where B and N are known exactly).
    """
    step = path.step
    ratio = exact_divisor(step.delta, noise.base_dt, "scheme step")
    if abs(noise.horizon - step.horizon) > 1e-9 * max(1.0, step.horizon):
        raise GridError("noise horizon does not match the path horizon")
    slack = 1e-9 * max(1.0, step.horizon)
    if t < -slack or t > step.horizon + slack:
        raise GridError(f"time {t} outside [0, {step.horizon}]")
    rb = t / noise.base_dt
    j = round(rb)
    if abs(rb - j) > 1e-9 * max(1.0, abs(rb)):
        raise GridError(f"time {t} is not on the noise base grid")
    j = min(max(j, 0), noise.steps)
    k, rem = divmod(j, ratio)
    m_steps = step.m_steps
    if rem == 0:
        return path.states[k + m_steps]

    x = path.states[k + m_steps]
    y = path.states[k]  # index k - M, shifted by M
    if path.scheme is SchemeTag.PLAIN_EM:
        px, py = x, y
    else:
        if trunc is None:
            raise InvalidParamError("truncated paths need their TruncationConfig")
        radius = truncation_radius(trunc, step.delta)
        px = project_to_ball(x, radius)
        py = project_to_ball(y, radius)
    f = np.asarray(model.drift(px, py), dtype=np.float64).reshape(model.dim)
    g = np.asarray(model.diffusion(px, py), dtype=np.float64).reshape(
        model.dim, model.brownian_dim
    )
    if path.scheme is SchemeTag.TRUNCATED_FGH:
        h = np.asarray(model.jump(px, py), dtype=np.float64).reshape(model.dim)
    else:
        h = np.asarray(model.jump(x, y), dtype=np.float64).reshape(model.dim)
    dt_frac = rem * noise.base_dt
    db = noise.brownian_between(k * ratio, j)
    dn = noise.jumps_between(k * ratio, j)
    return x + f * dt_frac + g @ db + h * float(dn)
