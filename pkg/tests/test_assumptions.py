import dataclasses

import numpy as np
import pytest

from sddej.assumptions import Assumption, check_assumption, margin_arrays
from sddej.errors import MissingConstantError
from sddej.models import ModelSpec, cubic_delay_benchmark, linear_jump_diffusion_oracle

TWO_POINT = (Assumption.MOMENT_BOUND, Assumption.JUMP_MOMENT_BOUND)
FOUR_POINT = (Assumption.LOCAL_LIPSCHITZ, Assumption.MONOTONE_GAP,
              Assumption.JUMP_MONOTONE_GAP)


def test_tokens_and_arity():
    assert Assumption("a32") is Assumption.LOCAL_LIPSCHITZ
    assert Assumption.SEGMENT_HOLDER.arity == 0
    for a in TWO_POINT:
        assert a.arity == 2
    for a in FOUR_POINT:
        assert a.arity == 4


@pytest.mark.parametrize("token", ["a32", "a33", "a34", "a42", "a46"])
def test_benchmark_is_clean_at_moderate_radius(token):
    # fast version of the acceptance sweep: radius 4, 2e4 samples
    model, consts = cubic_delay_benchmark()
    rep = check_assumption(Assumption(token), model, consts, radius=4.0,
                           samples=20_000, seed=3)
    assert rep.clean, f"unexpected violation: {rep.witness}"
    assert rep.samples >= 20_000
    assert rep.worst_margin >= 0.0


def test_segment_holder_clean_for_root_segment():
    model, consts = cubic_delay_benchmark(kbar=0.5, gamma=0.5)
    rep = check_assumption(Assumption.SEGMENT_HOLDER, model, consts,
                           samples=5_000, seed=1)
    assert rep.clean


def test_segment_holder_catches_misdeclared_exponent():
    # sqrt-shaped segment declared Lipschitz: must be falsified near 0
    model, consts = cubic_delay_benchmark(kbar=0.5, gamma=0.5)
    lying = dataclasses.replace(model, holder_exponent=1.0,
                                holder_constant=0.5)
    rep = check_assumption(Assumption.SEGMENT_HOLDER, lying, consts,
                           samples=5_000, seed=1)
    assert not rep.clean
    assert rep.worst_margin < 0.0


def test_dropping_gap_function_breaks_monotonicity_far_out():
    # with U = 0 the one-sided bound genuinely fails, but only at extreme
    # magnitudes; the ladder stratum finds it deterministically
    model, consts = cubic_delay_benchmark()
    no_gap = dataclasses.replace(consts, gap=None)
    rep = check_assumption(Assumption.MONOTONE_GAP, model, no_gap,
                           radius=1e9, samples=5_000, seed=0)
    assert rep.violations >= 1
    assert rep.witness is not None
    assert set(rep.witness) >= {"x", "y", "xbar", "ybar"}


def test_gap_function_keeps_monotonicity_at_same_radius():
    model, consts = cubic_delay_benchmark()
    rep = check_assumption(Assumption.MONOTONE_GAP, model, consts,
                           radius=1e9, samples=5_000, seed=0)
    assert rep.clean


def test_weakened_constant_is_flagged():
    model, consts = cubic_delay_benchmark()
    weak = dataclasses.replace(consts, k1=0.01)
    rep = check_assumption(Assumption.LOCAL_LIPSCHITZ, model, weak,
                           radius=4.0, samples=10_000, seed=2)
    assert not rep.clean
    assert rep.violations > 0
    # witness margin must actually be negative when re-evaluated
    w = rep.witness
    args = tuple(np.asarray(w[k]) for k in ("x", "y", "xbar", "ybar"))
    m = margin_arrays(Assumption.LOCAL_LIPSCHITZ, model, weak,
                      tuple(a[None] for a in args))
    assert m[0] == pytest.approx(rep.worst_margin)
    assert m[0] < 0


def test_missing_constants_raise():
    model, consts = linear_jump_diffusion_oracle()
    assert consts is None
    with pytest.raises(MissingConstantError):
        check_assumption(Assumption.LOCAL_LIPSCHITZ, model, None,
                         samples=100, seed=0)


def test_report_serialises():
    model, consts = cubic_delay_benchmark()
    rep = check_assumption(Assumption.JUMP_MOMENT_BOUND, model, consts,
                           radius=2.0, samples=2_000, seed=5)
    d = rep.to_dict()
    assert d["assumption"] == "a42"
    assert d["verdict"] == "no violation found on sampled set"
    assert d["samples"] >= 2_000
    assert isinstance(d["constants"], dict)
