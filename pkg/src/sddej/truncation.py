"""Coefficient truncation: dominating envelopes and radial projection.

The stepping schemes tame super-linear coefficients by projecting both state
arguments onto a closed ball before evaluating f and g (and h in the
jump-truncating regime).  The ball radius grows as the step size shrinks:

    alpha(dt)  = K0 * dt**(-epsilon),        0 < epsilon <= 1/4,
    radius(dt) = phi_inv(alpha(dt)),

where phi is a strictly increasing envelope dominating the coefficient sizes
on every ball:  sup_{|x| v |y| <= r} |f| v |g| (v |h|)  <=  phi(r), r >= 1.
By construction the projected coefficients then obey
|f_trunc| v |g_trunc| <= alpha(dt).

Two envelope builders are provided: an analytic power law ``c * r**k`` and an
empirical envelope sampled from a model's coefficients (monotone-rectified,
inverted by bisection).  The empirical variant is a measurement, not a proof:
its value at r is the maximum over sampled points only.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import DomainError, InvalidParamError, NonFiniteError
from .models import ModelSpec, eval_coefficients


class Regime(enum.Enum):
    """Which coefficients get truncated arguments.

    FG:  drift and diffusion only; the jump coefficient sees raw states
         (appropriate when h grows at most linearly).
    FGH: all three coefficients.
    """

    FG = "fg"
    FGH = "fgh"


# ---------------------------------------------------------------------------
# envelope functions
# ---------------------------------------------------------------------------


class PowerPhi:
    """Analytic envelope phi(r) = c * r**k with exact inverse."""

    kind = "power"

    def __init__(self, c: float, k: float):
        if not (c > 0.0 and k > 0.0):
            raise InvalidParamError("power envelope needs c > 0 and k > 0")
        self.c = float(c)
        self.k = float(k)

    def __call__(self, r):
        return self.c * np.asarray(r, dtype=np.float64) ** self.k

    def inverse(self, v):
        v = np.asarray(v, dtype=np.float64)
        if np.any(v <= 0.0):
            raise DomainError("envelope inverse needs a positive argument")
        return (v / self.c) ** (1.0 / self.k)

    def describe(self) -> dict:
        return {"kind": "power", "c": self.c, "k": self.k}


class EmpiricalPhi:
    """Envelope measured from a model: shell-sampled sup, monotone-rectified.

    ``radii``/``values`` hold the knots; between knots the envelope is linear
    in log-log coordinates and beyond the last knot it extrapolates with the
    final log-log slope.  The inverse is found by bisection to a relative
    tolerance of 1e-12.
    """

    kind = "auto"

    def __init__(self, radii: np.ndarray, values: np.ndarray, meta: dict):
        self._log_r = np.log(radii)
        self._log_v = np.log(values)
        self.radii = radii
        self.values = values
        self._meta = meta

    def __call__(self, r):
        r = np.asarray(r, dtype=np.float64)
        if np.any(r < 1.0 - 1e-12):
            raise DomainError("empirical envelope is defined for r >= 1")
        logr = np.log(np.maximum(r, 1.0))
        # linear interpolation in log-log space; extrapolate with edge slopes
        lv = np.interp(logr, self._log_r, self._log_v)
        tail = logr > self._log_r[-1]
        if np.any(tail):
            slope = (self._log_v[-1] - self._log_v[-2]) / (
                self._log_r[-1] - self._log_r[-2]
            )
            lv = np.where(tail, self._log_v[-1] + slope * (logr - self._log_r[-1]), lv)
        return np.exp(lv)

    def inverse(self, v):
        v = float(v)
        if v < self.values[0] * (1.0 - 1e-12):
            raise DomainError(
                f"envelope inverse asked below phi(1)={self.values[0]:.6g}"
            )
        if v <= self.values[0]:
            return 1.0
        lo, hi = 1.0, float(self.radii[-1])
        while self(hi) < v:  # extrapolated region: widen until bracketed
            hi *= 2.0
            if hi > 1e300:
                raise DomainError("envelope inverse did not bracket")
        for _ in range(200):
            mid = math.sqrt(lo * hi)
            if self(mid) < v:
                lo = mid
            else:
                hi = mid
            if hi - lo <= 1e-12 * hi:
                break
        return 0.5 * (lo + hi)

    def describe(self) -> dict:
        return dict(self._meta, kind="auto")


def fit_empirical_phi(
    model: ModelSpec,
    regime: Regime,
    shells: int = 64,
    r_max: float = 32.0,
    directions: int = 8,
    seed: int = 0,
) -> EmpiricalPhi:
    """Sample a dominating envelope for a model's coefficient sizes.

    For each shell radius r the coefficients are evaluated on axis points,
    sign combinations and a fixed set of random directions, at magnitudes
    {0, r/2, r} for each of the two arguments; the running maximum over
    shells makes the result monotone and a tiny multiplicative nudge makes
    it strictly increasing.
    """
    if shells < 4:
        raise InvalidParamError("need at least 4 shells")
    n = model.dim
    rng = np.random.default_rng(seed)
    dirs = [np.eye(n)[i] * s for i in range(n) for s in (-1.0, 1.0)]
    extra = rng.normal(size=(directions, n))
    extra /= np.linalg.norm(extra, axis=1, keepdims=True)
    dirs = np.array(dirs + list(extra))  # (D, n)
    scales = np.array([0.0, 0.5, 1.0])
    pts = (scales[:, None, None] * dirs[None, :, :]).reshape(-1, n)  # (3D, n)

    radii = np.geomspace(1.0, r_max, shells)
    values = np.empty(shells)
    xs = np.repeat(pts, len(pts), axis=0)
    ys = np.tile(pts, (len(pts), 1))
    for i, r in enumerate(radii):
        f = np.asarray(model.drift(r * xs, r * ys))
        g = np.asarray(model.diffusion(r * xs, r * ys))
        size = np.maximum(
            np.linalg.norm(f, axis=-1),
            np.sqrt(np.sum(g * g, axis=(-2, -1))),
        )
        if regime is Regime.FGH:
            h = np.asarray(model.jump(r * xs, r * ys))
            size = np.maximum(size, np.linalg.norm(h, axis=-1))
        values[i] = size.max()
    if not np.all(np.isfinite(values)) or values[0] <= 0.0:
        raise DomainError("coefficient sampling produced a degenerate envelope")
    values = np.maximum.accumulate(values)
    for i in range(1, shells):  # rectify flat stretches
        if values[i] <= values[i - 1]:
            values[i] = values[i - 1] * (1.0 + 1e-9)
    meta = {
        "shells": shells,
        "r_max": r_max,
        "directions": directions,
        "seed": seed,
        "phi_one": values[0],
    }
    return EmpiricalPhi(radii, values, meta)


# ---------------------------------------------------------------------------
# truncation config and operations
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TruncationConfig:
    """Envelope + step-size exponent + regime for one truncated scheme.

    ``k0`` defaults to max(1, phi(1)), which guarantees alpha(dt) >= phi(1)
    for every dt <= 1 so the truncation radius is always defined.  A caller
    may force a smaller k0 (>= 1); the radius computation then rejects step
    sizes for which alpha(dt) < phi(1).
    """

    phi: Callable
    epsilon: float
    regime: Regime = Regime.FG
    k0: Optional[float] = None
    phi_one: float = field(init=False)

    def __post_init__(self):
        if not (0.0 < self.epsilon <= 0.25):
            raise InvalidParamError(f"epsilon must lie in (0, 1/4], got {self.epsilon}")
        phi_one = float(np.asarray(self.phi(1.0)))
        if not (phi_one > 0.0 and math.isfinite(phi_one)):
            raise InvalidParamError("phi(1) must be positive and finite")
        object.__setattr__(self, "phi_one", phi_one)
        if self.k0 is None:
            object.__setattr__(self, "k0", max(1.0, phi_one))
        elif self.k0 < 1.0:
            raise InvalidParamError(f"k0 must be >= 1, got {self.k0}")

    def describe(self) -> dict:
        phi_desc = (
            self.phi.describe() if hasattr(self.phi, "describe") else {"kind": "custom"}
        )
        return {
            "phi": phi_desc,
            "epsilon": self.epsilon,
            "k0": self.k0,
            "regime": self.regime.value,
        }


def _check_delta(delta: float):
    if not (0.0 < delta <= 1.0):
        raise DomainError(f"step size must lie in (0, 1], got {delta}")


def alpha(config: TruncationConfig, delta: float) -> float:
    """Coefficient cap K0 * dt**(-epsilon); decreasing in dt, >= K0."""
    _check_delta(delta)
    return config.k0 * delta ** (-config.epsilon)


def truncation_radius(config: TruncationConfig, delta: float) -> float:
    """Projection radius phi_inv(alpha(dt)); >= 1 whenever defined."""
    cap = alpha(config, delta)
    if cap < config.phi_one * (1.0 - 1e-12):
        raise DomainError(
            f"alpha({delta})={cap:.6g} is below phi(1)={config.phi_one:.6g}; "
            "increase k0 or decrease the step size"
        )
    if hasattr(config.phi, "inverse"):
        return float(config.phi.inverse(max(cap, config.phi_one)))
    raise InvalidParamError("phi has no inverse() method")


def project_to_ball(x: np.ndarray, radius: float) -> np.ndarray:
    """Radial projection onto the closed ball of given radius (last axis).

    The origin is a fixed point and the map is non-expansive.  Points inside
    the ball are returned unchanged (scaling factor exactly 1).
    """
    x = np.asarray(x, dtype=np.float64)
    norm = np.sqrt(np.sum(x * x, axis=-1, keepdims=True))
    with np.errstate(divide="ignore", invalid="ignore"):
        scale = np.where(norm > radius, radius / norm, 1.0)
    return x * scale


def pi_delta(config: TruncationConfig, delta: float, x) -> np.ndarray:
    """Projection onto the ball of radius truncation_radius(config, dt)."""
    r = truncation_radius(config, delta)
    return project_to_ball(np.atleast_1d(np.asarray(x, dtype=np.float64)), r)


def truncated_coefficients(config: TruncationConfig, model: ModelSpec, delta: float, x, y):
    """Evaluate the tamed coefficient triple at one (current, delayed) pair.

    Drift and diffusion always see projected arguments.  The jump coefficient
    sees raw arguments in regime FG and projected ones in regime FGH.
    """
    r = truncation_radius(config, delta)
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    y = np.atleast_1d(np.asarray(y, dtype=np.float64))
    px, py = project_to_ball(x, r), project_to_ball(y, r)
    f, g, h = eval_coefficients(model, px, py)
    if config.regime is not Regime.FGH:
        # raw arguments for h only: the super-linear f, g must not be touched
        h = np.asarray(model.jump(x, y), dtype=np.float64).reshape(model.dim)
        if not np.all(np.isfinite(h)):
            raise NonFiniteError(f"jump produced a non-finite value at x={x}, y={y}")
    return f, g, h
