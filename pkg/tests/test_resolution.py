import random
from fractions import Fraction

import pytest
from hypothesis import given, strategies as st

from exprkit.resolution import (FitParams, InvalidParams, feasible, max_feasible_scale, mdr_bound,
                                mdr_bound_square, plan_resolution)


def ceil_div(a, b):
    return -(-a // b)


def grid_at(s: Fraction, H0, W0, p):
    # ceil(s*H/p) with s = n/d is ceil(n*H / (d*p))
    return ceil_div(s.numerator * H0, s.denominator * p), ceil_div(s.numerator * W0, s.denominator * p)


def fits(s, H0, W0, p, N):
    gh, gw = grid_at(Fraction(s), H0, W0, p)
    return gh * gw <= N


def brute_optimum(H0, W0, p, N):
    """Best min(g*p/H0, (N//g)*p/W0) over every g in 1..N."""
    return max(min(Fraction(g * p, H0), Fraction((N // g) * p, W0)) for g in range(1, N + 1))


params = st.builds(FitParams, st.integers(1, 4096), st.integers(1, 4096),
                   st.sampled_from([1, 2, 8, 14, 16, 32]), st.integers(1, 600))


def test_square_budget_boundary():
    plan = plan_resolution(FitParams(256, 256, 16, 256))
    assert not plan.resized and plan.s_star == 1 and plan.mdr_literal == 0
    assert (plan.grid_h, plan.grid_w) == (16, 16)


def test_quarter_downscale():
    plan = plan_resolution(FitParams(1024, 1024, 16, 256))
    assert plan.s_star == Fraction(1, 4)
    assert (plan.grid_h, plan.grid_w, plan.H_star, plan.W_star) == (16, 16, 256, 256)
    assert plan.mdr_literal == Fraction(15, 16)
    assert plan.mdr_rounding == 0
    assert plan.to_dict()["s_star"] == "1/4"


def test_wide_image():
    plan = plan_resolution(FitParams(512, 2048, 16, 256))
    assert plan.s_star == Fraction(1, 4)
    assert (plan.grid_h, plan.grid_w) == (8, 32)
    assert (plan.H_star, plan.W_star) == (128, 512)
    assert plan.fit_pair == (8, 32)


def test_mdr_bound_table_values():
    assert mdr_bound(16, 1024, 1024) == Fraction(30720, 1048576)
    assert float(mdr_bound(16, 1024, 1024)) == 0.029296875
    assert float(mdr_bound(32, 1024, 1024)) == 0.060546875
    assert mdr_bound(1, 37, 91) == 0
    assert mdr_bound_square(16, 1024) == Fraction(30, 1024)
    assert mdr_bound_square(32, 1024) == Fraction(62, 1024)
    assert mdr_bound_square(1, 5) == 0


@pytest.mark.parametrize("args", [(0, 1, 1, 1), (1, -1, 1, 1), (1, 1, 0, 1), (1, 1, 1, 0), (1.5, 1, 1, 1),
                                  (True, 1, 1, 1)])
def test_invalid_params(args):
    with pytest.raises(InvalidParams):
        FitParams(*args)


def test_invalid_bound_inputs():
    with pytest.raises(InvalidParams):
        mdr_bound(0, 1, 1)
    with pytest.raises(InvalidParams):
        mdr_bound_square(16, 0)


@given(st.integers(1, 64), st.integers(1, 10000))
def test_square_form_matches_general_form(p, H):
    assert mdr_bound_square(p, H) == mdr_bound(p, H, H)


@given(params)
def test_plan_invariants(fp):
    plan = plan_resolution(fp)
    H0, W0, p, N = fp.H0, fp.W0, fp.p, fp.N_max
    assert plan.grid_h * plan.grid_w <= N
    assert (plan.H_star, plan.W_star) == (p * plan.grid_h, p * plan.grid_w)
    assert fits(plan.s_fit, H0, W0, p, N)
    assert not fits(plan.s_fit + Fraction(1, 10 ** 6), H0, W0, p, N)
    assert 0 <= plan.mdr_literal < 1 and 0 <= plan.mdr_rounding < 1
    small = H0 * W0 <= p * p * N
    assert small == (not plan.resized) == (plan.mdr_literal == 0)
    if plan.resized:
        assert plan.s_star == plan.s_fit < 1
        assert fits(plan.s_star, H0, W0, p, N)
    else:
        assert plan.s_star == 1


@given(st.integers(1, 3000), st.integers(1, 3000), st.sampled_from([1, 8, 16, 32]), st.integers(1, 300))
def test_enumeration_matches_brute_force(H0, W0, p, N):
    s, (gh, gw) = max_feasible_scale(H0, W0, p, N)
    assert s == brute_optimum(H0, W0, p, N)
    assert gh * gw <= N and min(Fraction(gh * p, H0), Fraction(gw * p, W0)) == s


def test_no_feasible_scale_on_fine_grid_above_optimum():
    rng = random.Random(2)
    for _ in range(300):
        H0, W0 = rng.randint(1, 8192), rng.randint(1, 8192)
        p, N = rng.choice([8, 16, 32]), rng.randint(1, 4096)
        s = plan_resolution(FitParams(H0, W0, p, N)).s_fit
        for k in range(1, 50):
            assert not fits(s + Fraction(k, 1000), H0, W0, p, N)


def _effective_scale(plan):
    return min(Fraction(1), plan.s_fit)


def _stated_surplus_bound(fp, s):
    H0, W0, p = fp.H0, fp.W0, fp.p
    hs, ws = ceil_div(s.numerator * H0, s.denominator), ceil_div(s.numerator * W0, s.denominator)
    return mdr_bound(p, hs, ws) + Fraction(p * p) / (s * s * H0 * W0)


@given(params)
def test_rounding_surplus_below_one_patch_per_axis(fp):
    # each target side exceeds the scaled side by less than p pixels
    plan = plan_resolution(fp)
    s = _effective_scale(plan)
    sh, sw = s * fp.H0, s * fp.W0
    assert plan.H_star < sh + fp.p and plan.W_star < sw + fp.p
    assert plan.mdr_rounding < 1 - sh * sw / ((sh + fp.p) * (sw + fp.p))


def test_stated_surplus_bound_holds_on_most_params():
    rng = random.Random(1)
    misses = []
    for _ in range(3000):
        fp = FitParams(rng.randint(1, 8192), rng.randint(1, 8192), rng.choice([8, 16, 32]),
                       rng.randint(1, 4096))
        plan = plan_resolution(fp)
        if not plan.mdr_rounding < _stated_surplus_bound(fp, _effective_scale(plan)):
            misses.append(fp)
    assert not misses


@pytest.mark.parametrize("fp", [FitParams(1, 7, 1, 5), FitParams(168, 7193, 8, 3866)])
def test_stated_surplus_bound_counterexamples(fp):
    # a non-integer scaled side can leave up to p (not p-1) surplus pixels
    plan = plan_resolution(fp)
    assert plan.mdr_rounding >= _stated_surplus_bound(fp, _effective_scale(plan))


@given(params)
def test_aspect_within_one_cell(fp):
    plan = plan_resolution(fp)
    ratio = Fraction(fp.H0, fp.W0)
    gh, gw = plan.grid_h, plan.grid_w
    assert Fraction(gh - 1, gw) < ratio
    if gw > 1:
        assert ratio < Fraction(gh, gw - 1)


def test_feasible_helper_agrees_with_oracle():
    rng = random.Random(9)
    for _ in range(2000):
        H0, W0, p, N = rng.randint(1, 500), rng.randint(1, 500), rng.randint(1, 32), rng.randint(1, 100)
        s = Fraction(rng.randint(1, 400), rng.randint(1, 400))
        assert feasible(s, H0, W0, p, N) == fits(s, H0, W0, p, N)


def test_rounding_can_overflow_an_unresized_image():
    # 17x17 with p=16 needs a 2x2 grid at scale 1, over a budget of 2
    plan = plan_resolution(FitParams(17, 17, 16, 2))
    assert not plan.resized and plan.s_star == 1
    assert plan.s_fit == Fraction(16, 17)
    assert plan.grid_h * plan.grid_w <= 2
