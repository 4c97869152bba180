"""Monte Carlo falsification of the structural inequalities.

Each check samples argument tuples and evaluates the margin

    margin = (right-hand side) - (left-hand side)

of one inequality; a strictly negative margin is a violation and the worst
sampled tuple is reported as a witness.  A clean report says "no violation
found on the sampled set" - it is evidence, not a proof.

Sampling mixes four strata: independent uniform draws from the ball, paired
draws with log-spaced offsets, a deterministic axis/corner/zero grid, and a
log-spaced magnitude ladder of paired points along fixed directions.  The
ladder matters: some inequalities only fail when one argument is enormous
and its partner is a small perturbation, a region uniform sampling never
reaches.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import InvalidParamError, MissingConstantError
from .models import AssumptionConstants, ModelSpec


class Assumption(enum.Enum):
    """Checkable inequalities; values double as CLI tokens."""

    SEGMENT_HOLDER = "a31"     # Holder continuity of the history segment
    LOCAL_LIPSCHITZ = "a32"    # polynomially weighted local Lipschitz bound
    MONOTONE_GAP = "a33"       # one-sided monotonicity with gap function
    MOMENT_BOUND = "a34"       # joint growth bound on drift and diffusion
    JUMP_MOMENT_BOUND = "a42"  # jump-aware moment condition
    JUMP_MONOTONE_GAP = "a46"  # jump-aware monotonicity with gap function

    @property
    def arity(self) -> int:
        """Number of state arguments the inequality quantifies over."""
        if self is Assumption.SEGMENT_HOLDER:
            return 0  # samples times, not states
        if self in (Assumption.MOMENT_BOUND, Assumption.JUMP_MOMENT_BOUND):
            return 2  # (x, y)
        return 4      # (x, y, xbar, ybar)


@dataclass(frozen=True)
class CheckReport:
    assumption: str
    samples: int
    violations: int
    worst_margin: float
    witness: dict
    radius: float
    seed: int
    constants: dict

    @property
    def clean(self) -> bool:
        return self.violations == 0

    def to_dict(self) -> dict:
        return {
            "assumption": self.assumption,
            "samples": self.samples,
            "violations": self.violations,
            "worst_margin": self.worst_margin,
            "witness": self.witness,
            "radius": self.radius,
            "seed": self.seed,
            "constants": self.constants,
            "verdict": (
                "no violation found on sampled set"
                if self.violations == 0
                else "violated"
            ),
        }


def _need(constants: AssumptionConstants, *names: str) -> list:
    values = []
    for name in names:
        v = getattr(constants, name)
        if v is None:
            raise MissingConstantError(
                f"assumption check needs constant {name!r} but it is unset"
            )
        values.append(v)
    return values


def _dot(a, b):
    return np.sum(a * b, axis=-1)


def _norm(a):
    return np.sqrt(np.sum(a * a, axis=-1))


def _fro2(a):
    return np.sum(a * a, axis=(-2, -1))


# ---------------------------------------------------------------------------
# margins (vectorised over leading axes)
# ---------------------------------------------------------------------------


def margin_arrays(
    assumption: Assumption,
    model: ModelSpec,
    constants: AssumptionConstants,
    args: tuple,
) -> np.ndarray:
    """Margin rhs - lhs for a batch of argument tuples.

    ``args`` is (x, y) or (x, y, xbar, ybar) of shape (..., n) depending on
    the assumption's arity.  Gap functions default to zero when unset; every
    scalar constant must be present.
    """
    lam = model.jump_intensity
    if assumption is Assumption.LOCAL_LIPSCHITZ:
        k1, beta = _need(constants, "k1", "beta")
        x, y, xb, yb = args
        df = np.asarray(model.drift(x, y)) - np.asarray(model.drift(xb, yb))
        dg = np.asarray(model.diffusion(x, y)) - np.asarray(model.diffusion(xb, yb))
        dh = np.asarray(model.jump(x, y)) - np.asarray(model.jump(xb, yb))
        dist = _norm(x - xb) + _norm(y - yb)
        weight = 1.0 + sum(_norm(v) ** beta for v in (x, y, xb, yb))
        m_fg = k1 * weight * dist - np.maximum(_norm(df), np.sqrt(_fro2(dg)))
        m_h = k1 * dist - _norm(dh)
        return np.minimum(m_fg, m_h)

    if assumption is Assumption.MONOTONE_GAP:
        k2, eta = _need(constants, "k2", "eta_bar")
        gap = constants.gap or (lambda a, b: 0.0)
        x, y, xb, yb = args
        df = np.asarray(model.drift(x, y)) - np.asarray(model.drift(xb, yb))
        dg = np.asarray(model.diffusion(x, y)) - np.asarray(model.diffusion(xb, yb))
        lhs = _dot(x - xb, df) + 0.5 * (eta - 1.0) * _fro2(dg)
        rhs = (
            k2 * (np.sum((x - xb) ** 2, -1) + np.sum((y - yb) ** 2, -1))
            - gap(x, xb)
            + gap(y, yb)
        )
        return rhs - lhs

    if assumption is Assumption.MOMENT_BOUND:
        k3, p_bar = _need(constants, "k3", "p_bar")
        x, y = args
        f = np.asarray(model.drift(x, y))
        g = np.asarray(model.diffusion(x, y))
        lhs = _dot(x, f) + 0.5 * (p_bar - 1.0) * _fro2(g)
        rhs = k3 * (1.0 + np.sum(x**2, -1) + np.sum(y**2, -1))
        return rhs - lhs

    if assumption is Assumption.JUMP_MOMENT_BOUND:
        (k5,) = _need(constants, "k5")
        k6 = constants.k6 or 0.0
        if k6 != 0.0:
            (sigma,) = _need(constants, "sigma")
        x, y = args
        f = np.asarray(model.drift(x, y))
        g = np.asarray(model.diffusion(x, y))
        h = np.asarray(model.jump(x, y))
        lhs = 2.0 * _dot(x, f) + _fro2(g) + lam * (2.0 * _dot(x, h) + np.sum(h**2, -1))
        rhs = k5 * (1.0 + np.sum(x**2, -1) + np.sum(y**2, -1))
        if k6 != 0.0:
            rhs = rhs - k6 * _norm(x) ** sigma + k6 * _norm(y) ** sigma
        return rhs - lhs

    if assumption is Assumption.JUMP_MONOTONE_GAP:
        (k7,) = _need(constants, "k7")
        gap = constants.jump_gap or (lambda a, b: 0.0)
        x, y, xb, yb = args
        df = np.asarray(model.drift(x, y)) - np.asarray(model.drift(xb, yb))
        dg = np.asarray(model.diffusion(x, y)) - np.asarray(model.diffusion(xb, yb))
        dh = np.asarray(model.jump(x, y)) - np.asarray(model.jump(xb, yb))
        lhs = (
            2.0 * _dot(x - xb, df)
            + _fro2(dg)
            + lam * (2.0 * _dot(x - xb, dh) + np.sum(dh**2, -1))
        )
        rhs = (
            k7 * (np.sum((x - xb) ** 2, -1) + np.sum((y - yb) ** 2, -1))
            - gap(x, xb)
            + gap(y, yb)
        )
        return rhs - lhs

    raise InvalidParamError(f"margin_arrays does not handle {assumption}")


def holder_margin(model: ModelSpec, s: float, t: float) -> float:
    """Margin K |t-s|^gamma - |xi(t) - xi(s)| for one time pair."""
    xs = model.initial_value(s)
    xt = model.initial_value(t)
    bound = model.holder_constant * abs(t - s) ** model.holder_exponent
    return float(bound - np.linalg.norm(xt - xs))


# ---------------------------------------------------------------------------
# samplers
# ---------------------------------------------------------------------------


def _uniform_ball(rng, count: int, n: int, radius: float) -> np.ndarray:
    u = rng.normal(size=(count, n))
    u /= np.maximum(np.linalg.norm(u, axis=1, keepdims=True), 1e-300)
    r = radius * rng.uniform(0.0, 1.0, size=(count, 1)) ** (1.0 / n)
    return u * r


def _paired(rng, count: int, n: int, radius: float) -> tuple:
    base = _uniform_ball(rng, count, n, radius)
    direction = rng.normal(size=(count, n))
    direction /= np.maximum(np.linalg.norm(direction, axis=1, keepdims=True), 1e-300)
    eps = radius * 10.0 ** rng.uniform(-9.0, 0.0, size=(count, 1))
    partner = base + eps * direction
    # fold partners back into the ball so the sampled set respects the domain
    nrm = np.linalg.norm(partner, axis=1, keepdims=True)
    partner = np.where(nrm > radius, partner * (radius / nrm), partner)
    return base, partner

def _probe_values(radius: float) -> np.ndarray:
    vals = {0.0, 1.0, -1.0, radius, -radius, radius / 2, -radius / 2}
    return np.array(sorted(vals))


def _corner_grid(n: int, radius: float, arity: int, rng) -> list:
    """Deterministic axis/corner/zero probes for each argument slot."""
    vals = _probe_values(radius)
    if n == 1:
        grids = np.meshgrid(*([vals] * arity), indexing="ij")
        return [g.reshape(-1, 1) for g in grids]
    # higher dimensions: single-axis probes plus a few random corners
    points = [np.zeros(n)]
    for i in range(n):
        for v in vals:
            e = np.zeros(n)
            e[i] = v
            points.append(e)
    corners = radius / np.sqrt(n) * rng.choice([-1.0, 1.0], size=(8, n))
    points = np.array(points + list(corners))
    idx = [rng.integers(0, len(points), size=4 * len(points)) for _ in range(arity)]
    return [points[i] for i in idx]


def _magnitude_ladder(n: int, radius: float, arity: int) -> list:
    """Paired points along a fixed axis with log-spaced magnitudes/offsets.

    Covers the far-field/near-cancellation corner: the second argument of
    each pair sits a small, log-spaced offset away from the first.
    """
    e = np.zeros(n)
    e[0] = 1.0
    scales = np.geomspace(1.0, max(radius, 1.0), 25)
    offs = np.geomspace(1e-3, max(radius**0.5, 1.0), 12)
    rows = []
    for s in scales:
        for d in offs:
            if d > radius:
                continue
            for sign in (1.0, -1.0):
                if arity == 2:
                    rows.append((sign * d * e, s * e))
                    rows.append((s * e, sign * d * e))
                else:
                    # (x, y, xbar, ybar): small x vs 0, big y vs big y - d
                    rows.append((sign * d * e, s * e, 0.0 * e, (s - d) * e))
                    rows.append((s * e, sign * d * e, (s - d) * e, 0.0 * e))
    return [np.array(col) for col in zip(*rows)]


def _assemble_samples(rng, n: int, radius: float, arity: int, budget: int) -> tuple:
    n_pair = max(budget * 2 // 10, 1)
    n_indep = max(budget - n_pair, 1)  # corners and ladder come on top
    slots = []
    indep = [_uniform_ball(rng, n_indep, n, radius) for _ in range(arity)]
    if arity == 4:
        x, xb = _paired(rng, n_pair, n, radius)
        y, yb = _paired(rng, n_pair, n, radius)
        paired = [x, y, xb, yb]
    else:
        paired = list(_paired(rng, n_pair, n, radius))
    corners = _corner_grid(n, radius, arity, rng)
    ladder = _magnitude_ladder(n, radius, arity)
    for i in range(arity):
        slots.append(
            np.concatenate([indep[i], paired[i], corners[i], ladder[i]], axis=0)
        )
    return tuple(slots)


# ---------------------------------------------------------------------------
# driver
# ---------------------------------------------------------------------------


def check_assumption(
    assumption: Assumption,
    model: ModelSpec,
    constants: Optional[AssumptionConstants],
    radius: float = 10.0,
    samples: int = 100_000,
    seed: int = 0,
) -> CheckReport:
    """Hunt for violations of one inequality on a sampled argument set."""
    if radius <= 0.0:
        raise InvalidParamError("radius must be positive")
    if samples < 100:
        raise InvalidParamError("need at least 100 samples")
    rng = np.random.default_rng(seed)

    if assumption is Assumption.SEGMENT_HOLDER:
        times = rng.uniform(-model.delay, 0.0, size=(samples, 2))
        times[0] = (-model.delay, 0.0)
        times[1] = (0.0, 0.0)
        margins = np.array([holder_margin(model, s, t) for s, t in times])
        witness_at = int(np.argmin(margins))
        witness = {
            "s": float(times[witness_at, 0]),
            "t": float(times[witness_at, 1]),
        }
        used = {
            "holder_constant": model.holder_constant,
            "holder_exponent": model.holder_exponent,
        }
    else:
        if constants is None:
            raise MissingConstantError(
                "this assumption check needs an AssumptionConstants record"
            )
        args = _assemble_samples(rng, model.dim, radius, assumption.arity, samples)
        margins = np.asarray(
            margin_arrays(assumption, model, constants, args), dtype=np.float64
        )
        witness_at = int(np.argmin(margins))
        labels = ("x", "y", "xbar", "ybar")[: assumption.arity]
        witness = {
            lbl: [float(v) for v in arg[witness_at]]
            for lbl, arg in zip(labels, args)
        }
        used = {
            name: getattr(constants, name)
            for name in (
                "k1", "beta", "k2", "eta_bar", "k3", "p_bar",
                "k5", "k6", "sigma", "k7",
            )
            if getattr(constants, name) is not None
        }
        used["gap"] = constants.gap is not None
        used["jump_gap"] = constants.jump_gap is not None

    violations = int(np.sum(margins < 0.0))
    return CheckReport(
        assumption=assumption.value,
        samples=int(margins.size),
        violations=violations,
        worst_margin=float(np.min(margins)),
        witness=witness,
        radius=radius,
        seed=seed,
        constants=used,
    )
