"""Distortion coefficients and the control inequalities built on them.

The distortion coefficient of a map g over an arc I is
``sup_{x,y in I} |log(g'(x)/g'(y))|``.  For projective maps it is computed
exactly from the closed-form extrema of the derivative; for other diffeos it
is sampled on a grid (a lower bound of the true sup).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

from .circle import Arc, CirclePoint
from .maps import CircleDiffeo, MobiusTransform, map_arc
from .words import GroupSystem, ReducedWord, evaluate_word

HOLDS_SLACK = 1e-9
DEFAULT_CG_GRID = 10_000
DEFAULT_KAPPA_SAMPLES = 1024
DELTA_CAP = 0.25


class DistortionError(ValueError):
    """Contract violation in a distortion computation."""


class FullCircleArc(DistortionError):
    """Distortion over the full circle is not defined for these checks."""


class PointOutsideArc(DistortionError):
    """The base point must lie inside the arc."""


@dataclass(frozen=True)
class DistortionResult:
    """A distortion value with the method that produced it."""

    value: float
    exact: bool
    sample_count: int  # 0 for the exact method
    arc: Arc

    @property
    def method(self) -> str:
        return "ExactEndpoints" if self.exact else f"Sampled({self.sample_count})"


@dataclass(frozen=True)
class GroupConstants:
    """The uniform log-derivative slope bound of a generating system."""

    c_g: float
    rho: float
    grid: int


def kappa(g: CircleDiffeo, I: Arc, samples: int = DEFAULT_KAPPA_SAMPLES) -> DistortionResult:
    """Distortion coefficient of g over I; exact for projective maps."""
    if I.full:
        raise FullCircleArc("distortion coefficient needs a proper arc")
    if isinstance(g, MobiusTransform):
        lo, hi = g.derivative_range_on_arc(I)
        return DistortionResult(math.log(hi / lo), True, 0, I)
    if samples < 2:
        raise DistortionError("need at least 2 samples")
    logs = [math.log(g.derivative(p)) for p in I.sample(samples)]
    return DistortionResult(max(logs) - min(logs), False, samples, I)


def kappa_word(sys: GroupSystem, w: ReducedWord, I: Arc,
               samples: int = DEFAULT_KAPPA_SAMPLES) -> DistortionResult:
    """Distortion of the composed word over I."""
    return kappa(sys.word_diffeo(w), I, samples)


def estimate_c_g(sys: GroupSystem, grid: int = DEFAULT_CG_GRID) -> GroupConstants:
    """Max over letters of sup |d/dx log g'|; closed form for projective maps."""
    if grid < 100:
        raise DistortionError("grid must be >= 100")
    worst = 0.0
    for g in (*sys.generators, *sys.inverses):
        slope_max = getattr(g, "log_derivative_slope_max", None)
        if slope_max is not None:
            worst = max(worst, slope_max())
            continue
        h = 1.0 / grid
        values = []
        for k in range(grid):
            x = k * h
            d_plus = g.derivative(CirclePoint(x + h))
            d_minus = g.derivative(CirclePoint(x - h))
            values.append(abs(math.log(d_plus) - math.log(d_minus)) / (2.0 * h))
        worst = max(worst, max(values))
    return GroupConstants(c_g=worst, rho=1.0 / grid, grid=grid)


def group_constants(sys: GroupSystem, grid: int = DEFAULT_CG_GRID) -> GroupConstants:
    """Per-system memoized estimate_c_g."""
    cache = getattr(sys, "_constants_cache", None)
    if cache is None:
        cache = {}
        sys._constants_cache = cache
    if grid not in cache:
        cache[grid] = estimate_c_g(sys, grid)
    return cache[grid]


class InequalityCheck(NamedTuple):
    lhs: float
    rhs: float
    holds: bool
    word: ReducedWord
    arc: Arc


class BoundCheck(NamedTuple):
    S: float
    delta: float
    kappa_obs: float
    bound: float
    holds: bool


class LsumCheck(NamedTuple):
    lhs: float
    rhs: float
    holds: bool
    pointwise_holds: bool
    word: ReducedWord
    arc: Arc


def _intermediate_arcs(sys: GroupSystem, w: ReducedWord, I: Arc) -> list[Arc]:
    """Images of I under the length-0..n prefixes of w, in order."""
    out = [I]
    current = I
    for letter in w.letters:
        current = map_arc(sys.letter_diffeo(letter), current)
        out.append(current)
    return out


def check_p_sum(sys: GroupSystem, w: ReducedWord, I: Arc) -> InequalityCheck:
    """Distortion of a word bounded by the summed intermediate image lengths.

    lhs = kappa(w; I); rhs = c_g * sum of |prefix_i(I)| over i = 0..n-1.
    """
    constants = group_constants(sys)
    lhs = kappa_word(sys, w, I).value
    prefixes = _intermediate_arcs(sys, w, I)
    rhs = constants.c_g * sum(a.length for a in prefixes[:-1])
    holds = lhs <= rhs * (1.0 + HOLDS_SLACK) + 1e-12
    return InequalityCheck(lhs, rhs, holds, w, I)


def check_bound(sys: GroupSystem, w: ReducedWord, x0: CirclePoint,
                delta_cap: float = DELTA_CAP) -> BoundCheck:
    """Distortion over the sum-adapted neighborhood stays below log 2.

    With S the prefix-derivative sum at x0 and delta = log2/(2 c_g S) (capped),
    the distortion of w over U_{delta/2}(x0) is at most 2 c_g S delta.
    """
    constants = group_constants(sys)
    S = evaluate_word(sys, w, x0).intermediate_derivative_sum
    if constants.c_g * S <= 0.0:
        delta = delta_cap
    else:
        delta = min(math.log(2.0) / (2.0 * constants.c_g * S), delta_cap)
    neighborhood = Arc(CirclePoint(x0.x - delta / 2.0), delta)
    kappa_obs = kappa_word(sys, w, neighborhood).value
    bound = 2.0 * constants.c_g * S * delta
    holds = kappa_obs <= bound * (1.0 + HOLDS_SLACK) + 1e-12
    return BoundCheck(S, delta, kappa_obs, bound, holds)


def check_lsum(sys: GroupSystem, w: ReducedWord, I: Arc, x0: CirclePoint) -> LsumCheck:
    """Summed image lengths bounded via the derivative sum at an interior point.

    lhs = sum |I_i| over i = 0..n;
    rhs = |I| * exp(c_g * sum_{i<n} |I_i|) * sum of prefix derivatives at x0.
    Also checks pointwise two-sided control of each prefix derivative by
    exp(+-c_g * partial sum) * |I_i| / |I|.
    """
    if not I.contains(x0):
        raise PointOutsideArc(f"x0={x0.x} outside arc {I}")
    constants = group_constants(sys)
    prefixes = _intermediate_arcs(sys, w, I)
    derivs = [1.0]
    d = 1.0
    point = x0
    for letter in w.letters:
        g = sys.letter_diffeo(letter)
        d *= g.derivative(point)
        point = g.eval(point)
        derivs.append(d)
    lhs = sum(a.length for a in prefixes)
    partial = sum(a.length for a in prefixes[:-1])
    rhs = I.length * math.exp(constants.c_g * partial) * sum(derivs)
    holds = lhs <= rhs * (1.0 + HOLDS_SLACK) + 1e-12
    pointwise_holds = True
    running = 0.0
    for arc_i, d_i in zip(prefixes, derivs):
        margin = constants.c_g * running
        ratio = math.log(d_i * I.length / arc_i.length)
        if abs(ratio) > margin * (1.0 + HOLDS_SLACK) + 1e-9:
            pointwise_holds = False
        running += arc_i.length
    return LsumCheck(lhs, rhs, holds, pointwise_holds, w, I)
