import math

import numpy as np
import pytest

from sddej.errors import DomainError, InvalidParamError, NonFiniteError
from sddej.models import (
    ModelSpec,
    build_model,
    cubic_delay_benchmark,
    eval_coefficients,
    linear_jump_diffusion_oracle,
)


def test_cubic_benchmark_coefficient_values():
    # hand-computed: f(1,1) = -5 + 1/8 + 2, g(1,1) = 1/2 + 1, h(1,1) = 2
    model, _ = cubic_delay_benchmark()
    f, g, h = eval_coefficients(model, np.array([1.0]), np.array([1.0]))
    assert f[0] == pytest.approx(-2.875, abs=0)
    assert g[0, 0] == pytest.approx(1.5, abs=0)
    assert h[0] == pytest.approx(2.0, abs=0)

    f, g, h = eval_coefficients(model, np.array([2.0]), np.array([0.0]))
    assert f[0] == pytest.approx(-36.0)
    assert g[0, 0] == pytest.approx(math.sqrt(2))
    assert h[0] == pytest.approx(2.0)


def test_cubic_benchmark_constants_and_gaps():
    model, consts = cubic_delay_benchmark()
    assert (consts.k1, consts.beta, consts.k2) == (10.0, 2.0, 8.0)
    assert (consts.eta_bar, consts.p_bar, consts.k7) == (3.0, 26.0, 12.0)
    x, xb = np.array([1.0]), np.array([0.0])
    assert consts.gap(x, xb) == pytest.approx(0.25)
    assert consts.jump_gap(x, xb) == pytest.approx(2.75)
    assert model.jump_intensity == 0.2


def test_cubic_benchmark_batch_shapes():
    # the raw callables honor the batch contract: (..., n) in, (..., n) /
    # (..., n, m) out, rows matching pointwise evaluation
    model, _ = cubic_delay_benchmark()
    x = np.random.default_rng(0).normal(size=(7, 1))
    y = np.random.default_rng(1).normal(size=(7, 1))
    f, g, h = model.drift(x, y), model.diffusion(x, y), model.jump(x, y)
    assert f.shape == (7, 1)
    assert g.shape == (7, 1, 1)
    assert h.shape == (7, 1)
    f0, g0, h0 = eval_coefficients(model, x[3], y[3])
    assert f[3] == pytest.approx(f0)
    assert g[3] == pytest.approx(g0)
    assert h[3] == pytest.approx(h0)


def test_segment_is_holder_curve():
    model, _ = cubic_delay_benchmark(tau=2.0, x0=3.0, kbar=0.5, gamma=0.5)
    assert model.initial_value(0.0) == pytest.approx([3.0])
    assert model.initial_value(-2.0) == pytest.approx([3.0 + 0.5 * 2.0 ** 0.5])
    assert model.initial_value(-0.25) == pytest.approx([3.25])


def test_initial_value_domain():
    model, _ = cubic_delay_benchmark(tau=1.0)
    # tiny round-off beyond the segment endpoints is forgiven
    model.initial_value(-1.0 - 1e-12)
    model.initial_value(1e-12)
    with pytest.raises(DomainError):
        model.initial_value(-1.5)
    with pytest.raises(DomainError):
        model.initial_value(0.5)


def test_oracle_exact_value():
    # frozen from x0 * exp((a - b^2/2) t + b B) * (1+c)^N at
    # a=0.05, b=0.2, c=-0.1, B(1)=0.3, N(1)=2
    model, consts = linear_jump_diffusion_oracle()
    assert consts is None
    val = model.exact_solution(1.0, np.array([0.3]), np.array(2))
    assert val.reshape(-1)[0] == pytest.approx(0.8862811698012204, rel=1e-12)


def test_oracle_exact_batch_shapes():
    model, _ = linear_jump_diffusion_oracle(a=0.1, b=0.3, c=0.5, x0=2.0)
    b = np.array([[0.0], [1.0], [-1.0]])
    n = np.array([0, 1, 3])
    out = model.exact_solution(2.0, b, n)
    assert out.shape == (3, 1)
    single = model.exact_solution(2.0, b[1], n[1])
    assert out[1] == pytest.approx(single)
    # zero noise, zero jumps reduces to the deterministic exponential
    assert out[0, 0] == pytest.approx(2.0 * math.exp((0.1 - 0.045) * 2.0))


def test_oracle_rejects_degenerate_params():
    with pytest.raises(InvalidParamError):
        linear_jump_diffusion_oracle(c=-1.0)
    with pytest.raises(InvalidParamError):
        linear_jump_diffusion_oracle(x0=0.0)


def test_build_model_registry():
    model, consts = build_model("section5", {"tau": 0.25})
    assert model.delay == 0.25
    assert consts is not None
    model, consts = build_model("gjd", {"a": 0.1})
    assert consts is None
    with pytest.raises(InvalidParamError):
        build_model("nope", {})
    with pytest.raises(InvalidParamError):
        build_model("gjd", {"kbar": 1.0})  # not a parameter of this model


def test_modelspec_validation():
    ok = dict(
        dim=1, brownian_dim=1,
        drift=lambda x, y: x, diffusion=lambda x, y: x[..., None],
        jump=lambda x, y: x, delay=1.0, jump_intensity=0.0,
        initial_segment=lambda t: np.zeros(1),
    )
    ModelSpec(**ok)
    with pytest.raises(InvalidParamError):
        ModelSpec(**{**ok, "delay": 0.0})
    with pytest.raises(InvalidParamError):
        ModelSpec(**{**ok, "jump_intensity": -1.0})
    with pytest.raises(InvalidParamError):
        ModelSpec(**{**ok, "dim": 0})
    with pytest.raises(InvalidParamError):
        ModelSpec(**{**ok, "holder_exponent": 1.5})


def test_eval_coefficients_flags_nonfinite():
    bad = ModelSpec(
        dim=1, brownian_dim=1,
        drift=lambda x, y: np.full_like(x, np.nan),
        diffusion=lambda x, y: x[..., None],
        jump=lambda x, y: x,
        delay=1.0, jump_intensity=0.0,
        initial_segment=lambda t: np.ones(1),
    )
    with pytest.raises(NonFiniteError):
        eval_coefficients(bad, np.array([1.0]), np.array([1.0]))
