"""Token-budgeted resolution planning for patch-based vision encoders.

Given an image of ``H0 x W0`` pixels, a square patch side ``p`` and a patch
budget ``N_max``, find the largest scale ``s`` with

    ceil(s*H0/p) * ceil(s*W0/p) <= N_max

and the patch grid / target size it implies.  All arithmetic is done in
exact rationals so ceilings never suffer from floating-point error.
"""

from dataclasses import dataclass
from fractions import Fraction
from typing import Tuple


class InvalidParams(ValueError):
    pass


def _ceil(q: Fraction) -> int:
    return -((-q.numerator) // q.denominator)


def _positive_ints(**values) -> None:
    for name, v in values.items():
        if isinstance(v, bool) or not isinstance(v, int) or v <= 0:
            raise InvalidParams("%s must be a positive integer, got %r" % (name, v))


@dataclass(frozen=True)
class FitParams:
    H0: int
    W0: int
    p: int
    N_max: int

    def __post_init__(self):
        _positive_ints(H0=self.H0, W0=self.W0, p=self.p, N_max=self.N_max)


@dataclass(frozen=True)
class ResolutionPlan:
    s_star: Fraction
    grid_h: int
    grid_w: int
    H_star: int
    W_star: int
    resized: bool
    mdr_literal: Fraction
    mdr_rounding: Fraction
    s_fit: Fraction
    fit_pair: Tuple[int, int]

    def to_dict(self) -> dict:
        return {
            "s_star": "%d/%d" % (self.s_star.numerator, self.s_star.denominator),
            "grid": [self.grid_h, self.grid_w],
            "target": [self.H_star, self.W_star],
            "resized": self.resized,
            "mdr_literal": float(self.mdr_literal),
            "mdr_rounding": float(self.mdr_rounding),
        }


def feasible(s: Fraction, H0: int, W0: int, p: int, N_max: int) -> bool:
    """Whether scale ``s`` keeps the patch grid within budget."""
    s = Fraction(s)
    return _ceil(s * H0 / p) * _ceil(s * W0 / p) <= N_max


def max_feasible_scale(H0: int, W0: int, p: int, N_max: int) -> Tuple[Fraction, Tuple[int, int]]:
    """Exact largest feasible scale and a grid pair that attains it.

    Any feasible ``s`` satisfies ``s <= min(g_h*p/H0, g_w*p/W0)`` for its own
    ceilings ``(g_h, g_w)``, and each pair ``(g_h, N_max // g_h)`` attains
    its bound, so the optimum is the best such pair.  Within a run of
    ``g_h`` sharing one quotient the largest ``g_h`` dominates, which keeps
    the scan at O(sqrt(N_max)).  Among optimal pairs the one closest to the
    image aspect wins, then the smaller ``g_h``.
    """
    best_n, best_d = 0, 1
    g_h = 1
    while g_h <= N_max:
        q = N_max // g_h
        top = N_max // q
        a_n, b_n = top * p, q * p
        if a_n * W0 <= b_n * H0:
            n, d = a_n, H0
        else:
            n, d = b_n, W0
        if n * best_d > best_n * d:
            best_n, best_d = n, d
        g_h = top + 1
    s = Fraction(best_n, best_d)
    lo = _ceil(s * H0 / p)
    hi = N_max // _ceil(s * W0 / p)
    # |g_h/g_w - H0/W0| compared as |g_h*W0 - g_w*H0| / (g_w*W0)
    pair = min(((g, N_max // g) for g in range(lo, hi + 1)),
               key=lambda gp: (Fraction(abs(gp[0] * W0 - gp[1] * H0), gp[1] * W0), gp[0]))
    return s, pair


def plan_resolution(params: FitParams) -> ResolutionPlan:
    H0, W0, p, N = params.H0, params.W0, params.p, params.N_max
    s_fit, pair = max_feasible_scale(H0, W0, p, N)
    resized = H0 * W0 > p * p * N
    # rounding can push a "no resize" image just over budget; the grid is
    # then taken at the largest feasible scale below 1
    s_eff = min(Fraction(1), s_fit)
    grid_h = _ceil(s_eff * H0 / p)
    grid_w = _ceil(s_eff * W0 / p)
    H_star, W_star = p * grid_h, p * grid_w
    if resized:
        s_star = s_fit
        mdr_literal = max(Fraction(0), 1 - Fraction(H_star * W_star, H0 * W0))
    else:
        s_star = Fraction(1)
        mdr_literal = Fraction(0)
    mdr_rounding = 1 - s_eff * s_eff * H0 * W0 / (H_star * W_star)
    return ResolutionPlan(s_star, grid_h, grid_w, H_star, W_star, resized,
                          mdr_literal, mdr_rounding, s_fit, pair)


def mdr_bound(p: int, H0: int, W0: int) -> Fraction:
    """Worst-case distortion from rounding each side up to a multiple of p."""
    _positive_ints(p=p, H0=H0, W0=W0)
    return Fraction((p - 1) * (H0 + W0), H0 * W0)


def mdr_bound_square(p: int, H0: int) -> Fraction:
    _positive_ints(p=p, H0=H0)
    return Fraction(2 * (p - 1), H0)
