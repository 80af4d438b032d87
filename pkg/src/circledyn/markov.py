"""Markov partitions from bounded-derivative-sum regions.

The pipeline: certify where derivative sums over non-backtracking orbits stay
bounded (per excluded first letter), extract the bounded regions as arcs,
: find the words whose images first re-enter a region, locate the two words
fixing its endpoints, assemble the piecewise-inverse Markov map over the
resulting interval family, refine its partitions, and certify uniform
expansion for the first-exit acceleration.
"""

from __future__ import annotations

import bisect
import heapq
import json
import math
from dataclasses import dataclass, field, replace

from .circle import (
    ENDPOINT_TOL,
    Arc,
    ArcSet,
    CirclePoint,
    OverlapError,
    arc_between,
    circle_distance,
    signed_gap,
)
from .expansion import FIX_TOL
from .maps import MobiusTransform, map_arc
from .words import GroupSystem, Letter, ReducedWord, word_concat

CONVERGENCE_EPS = 1e-12
DIVERGENCE_THRESHOLD = 1e3
DEFAULT_MAX_DEPTH = 64
DEFAULT_NODE_BUDGET = 400_000
PROBE_NODE_BUDGET = 10_000
PROBE_EPS = 1e-7
BISECTION_MAX_ITERATIONS = 50
MAX_CYCLE_PERIOD = 8
INTERIOR_FIXED_POINT_SAMPLES = 1000


class MarkovError(Exception):
    """Base class for Markov-partition extraction failures."""


class AllUnknown(MarkovError):
    """Grid classification was inconclusive at every sample point."""


class NoEndpointFixer(MarkovError):
    """No discovered return word fixes the requested endpoint."""


class CycleInconsistency(MarkovError):
    """The interval-to-interval endpoint dynamics is not consistent."""


class CoverGap(MarkovError):
    """The component family leaves a gap wider than the tolerance."""


class GridHitsIndeterminacy(MarkovError):
    """A sample point could not be perturbed off the indeterminacy set."""


# --------------------------------------------------------------------------
# Sum-boundedness estimation


@dataclass(frozen=True)
class Bounded:
    """Every search branch was closed with a negligible or summed tail."""


@dataclass(frozen=True)
class ExceedsThreshold:
    threshold: float


@dataclass(frozen=True)
class DepthLimited:
    depth: int


SumStatus = Bounded | ExceedsThreshold | DepthLimited


@dataclass(frozen=True)
class STildeEstimate:
    """Estimate of the supremum, over non-backtracking orbit sequences whose
    first letter is anything but the excluded letter's inverse, of the series
    of derivatives of the partial compositions at ``y``."""

    y: CirclePoint
    letter_excluded: Letter
    value: float
    status: SumStatus
    nodes_explored: int = 0

    @property
    def bounded(self) -> bool:
        return isinstance(self.status, Bounded)

    @property
    def exceeded(self) -> bool:
        return isinstance(self.status, ExceedsThreshold)


def _quadratic_series_tail(alpha: float, beta: float, c: float,
                           direct_terms: int = 64) -> float:
    """Sum_{k>=0} 1/(alpha k^2 + beta k + c) for a positive quadratic."""
    if alpha <= 0.0:
        return math.inf
    disc = 4.0 * alpha * c - beta * beta
    if disc <= 0.0:
        # the quadratic has real roots only when a norm vanishes; treat the
        # series as divergent
        return math.inf
    total = 0.0
    for k in range(direct_terms):
        total += 1.0 / ((alpha * k + beta) * k + c)
    root = math.sqrt(disc)
    # integral remainder from the midpoint of the last included index
    x = direct_terms - 0.5
    total += (2.0 / root) * (math.pi / 2.0 - math.atan((2.0 * alpha * x + beta) / root))
    return total


def _cycle_tail(rows, cycle_slots: tuple[int, ...], wx: float, wy: float) -> float:
    """Total of the remaining series terms along the orbit that repeats the
    given letter cycle forever, starting from projective vector (wx, wy).

    Hyperbolic cycles give geometrically convergent series (summed directly
    with a ratio-based remainder); parabolic cycles give exactly-quadratic
    denominators (summed with an integral remainder); elliptic cycles give
    non-decaying terms, reported as an infinite tail.
    """
    p = len(cycle_slots)
    # within-cycle prefix matrices, applied-first leftmost factor rightmost
    prefixes = []
    m00, m01, m10, m11 = 1.0, 0.0, 0.0, 1.0
    for s in cycle_slots:
        a, b, c, d = rows[s]
        m00, m01, m10, m11 = (a * m00 + b * m10, a * m01 + b * m11,
                              c * m00 + d * m10, c * m01 + d * m11)
        prefixes.append((m00, m01, m10, m11))
    ca, cb, cc, cd = prefixes[-1]
    trace = ca + cd
    det = ca * cd - cb * cc
    if abs(det - 1.0) > 1e-6:
        # a cycle block of determinant -1 squares to determinant +1; the
        # doubled cycle covers exactly the same future terms
        return _cycle_tail(rows, cycle_slots + cycle_slots, wx, wy)
    if abs(trace) < 2.0 - 1e-9:
        return math.inf  # elliptic: terms do not decay
    if abs(abs(trace) - 2.0) <= 1e-9:
        # parabolic cycle: M^k v = +-(v + k Nv) exactly, so each within-cycle
        # series has a quadratic denominator
        sgn = 1.0 if trace >= 0 else -1.0
        nx = sgn * (ca * wx + cb * wy) - wx
        ny = sgn * (cc * wx + cd * wy) - wy
        total = 0.0
        for (a, b, c, d) in prefixes:
            px, py = a * wx + b * wy, c * wx + d * wy
            qx, qy = a * nx + b * ny, c * nx + d * ny
            alpha = qx * qx + qy * qy
            beta = 2.0 * (px * qx + py * qy)
            c0 = px * px + py * py
            tail = _quadratic_series_tail(alpha, beta, c0)
            if math.isinf(tail):
                return math.inf
            total += tail
        return total
    # hyperbolic cycle: iterate whole cycles until the per-cycle contribution
    # is negligible or a ratio-based remainder can be added (the ratio
    # remainder is also first-order exact for near-neutral quadratic decay)
    total = sum(1.0 / ((a * wx + b * wy) ** 2 + (c * wx + d * wy) ** 2)
                for (a, b, c, d) in prefixes[:-1])
    vx, vy = wx, wy
    prev_term = None
    for _k in range(4096):
        vx, vy = ca * vx + cb * vy, cc * vx + cd * vy
        term = sum(1.0 / ((a * vx + b * vy) ** 2 + (c * vx + d * vy) ** 2)
                   for (a, b, c, d) in prefixes[:-1])
        term += 1.0 / (vx * vx + vy * vy)
        total += term
        if term < 1e-16 * (1.0 + total):
            return total
        if prev_term is not None and term >= prev_term * 0.999:
            # near-neutral decay; bound the rest by a quadratic-fit remainder
            ratio = term / prev_term if prev_term > 0 else 1.0
            if ratio < 1.0:
                return total + term * ratio / (1.0 - ratio)
            return math.inf
        prev_term = term
    ratio = term / prev_term if prev_term else 0.5
    if ratio < 0.999:
        return total + term * ratio / (1.0 - ratio)
    return math.inf


def _detect_cycle(slots: tuple[int, ...]) -> tuple[int, ...] | None:
    """Smallest period p <= MAX_CYCLE_PERIOD such that the last 2p letters
    are two repetitions of the last p letters."""
    n = len(slots)
    for p in range(1, MAX_CYCLE_PERIOD + 1):
        if 2 * p > n:
            return None
        if slots[-p:] == slots[-2 * p:-p]:
            return slots[-p:]
    return None


def _sup_sum_search(sys: GroupSystem, y: CirclePoint, first_slots: tuple[int, ...],
                    threshold: float, max_depth: int, convergence_eps: float,
                    node_budget: int, cut_cycles: bool) -> tuple[float, SumStatus, int]:
    """Best-first supremum search over non-backtracking words with the given
    admissible first letters.  Returns (value, status, nodes).

    With ``cut_cycles`` a branch whose recent letters repeat a cycle is
    closed after its ray tail is added: sub-branches deviating from the ray
    are dropped, which makes exhaustion tractable on cusped systems but is a
    certification heuristic (a deviation can diverge while its ray
    converges).  Without it every branch is explored until its derivative
    falls below the closure threshold, so Bounded verdicts are cut-free.
    """
    if threshold <= 1.0:
        raise MarkovError("threshold must exceed 1")
    if max_depth < 1:
        raise MarkovError("max_depth must be >= 1")
    n_slots = 2 * sys.rank
    if not sys.is_mobius:
        return _sup_sum_search_generic(sys, y, first_slots, threshold,
                                       max_depth, convergence_eps, node_budget)
    from .expansion import _mobius_rows

    rows = _mobius_rows(sys)
    theta = math.pi * y.x
    vx, vy = math.cos(theta), math.sin(theta)
    best = 1.0  # identity term
    depth_limited = False
    nodes = 0
    counter = 0
    # heap entries: (-partial, counter, slots, wx, wy)
    heap = []
    for s in first_slots:
        a, b, c, d = rows[s]
        wx, wy = a * vx + b * vy, c * vx + d * vy
        deriv = 1.0 / (wx * wx + wy * wy)
        partial = 1.0 + deriv
        counter += 1
        heapq.heappush(heap, (-partial, counter, (s,), wx, wy, deriv))
    while heap:
        neg_partial, _cnt, slots, wx, wy, deriv = heapq.heappop(heap)
        partial = -neg_partial
        nodes += 1
        if partial > best:
            best = partial
        if partial >= threshold:
            return best, ExceedsThreshold(threshold), nodes
        if nodes > node_budget:
            return best, DepthLimited(max_depth), nodes
        last = slots[-1]
        depth = len(slots)
        for s in range(n_slots):
            if s == last ^ 1:
                continue
            a, b, c, d = rows[s]
            cwx, cwy = a * wx + b * wy, c * wx + d * wy
            cderiv = 1.0 / (cwx * cwx + cwy * cwy)
            cpartial = partial + cderiv
            if cpartial > best:
                best = cpartial
            if cpartial >= threshold:
                return best, ExceedsThreshold(threshold), nodes
            cslots = slots + (s,)
            cycle = _detect_cycle(cslots)
            if cycle is not None:
                # the closed-form total of the repeating ray is a valid
                # candidate for the supremum (and decides divergence along
                # near-parabolic spines, whose partial sums grow too slowly
                # to cross the threshold within the depth budget); it never
                # closes the branch, because a deviation from the ray can
                # diverge even when the pure ray converges
                total = cpartial + _cycle_tail(rows, cycle, cwx, cwy)
                if total > best:
                    best = total
                if total >= threshold:
                    return best, ExceedsThreshold(threshold), nodes
                if cut_cycles:
                    continue
            if cderiv < convergence_eps:
                continue
            if depth + 1 >= max_depth:
                depth_limited = True
                continue
            counter += 1
            heapq.heappush(heap, (-cpartial, counter, cslots, cwx, cwy, cderiv))
    status: SumStatus = DepthLimited(max_depth) if depth_limited else Bounded()
    return best, status, nodes


def _sup_sum_search_generic(sys: GroupSystem, y: CirclePoint,
                            first_slots: tuple[int, ...], threshold: float,
                            max_depth: int, convergence_eps: float,
                            node_budget: int) -> tuple[float, SumStatus, int]:
    n_slots = 2 * sys.rank
    diffeos = [sys.letter_diffeo(Letter(s // 2, bool(s % 2))) for s in range(n_slots)]
    best = 1.0
    depth_limited = False
    nodes = 0
    stack = []
    for s in first_slots:
        g = diffeos[s]
        d = g.derivative(y)
        stack.append((s, 1, g.eval(y), d, 1.0 + d))
    while stack:
        last, depth, point, deriv, partial = stack.pop()
        nodes += 1
        if partial > best:
            best = partial
        if partial >= threshold:
            return best, ExceedsThreshold(threshold), nodes
        if nodes > node_budget:
            return best, DepthLimited(max_depth), nodes
        if deriv < convergence_eps:
            continue
        if depth >= max_depth:
            depth_limited = True
            continue
        for s in range(n_slots):
            if s == last ^ 1:
                continue
            g = diffeos[s]
            d = deriv * g.derivative(point)
            stack.append((s, depth + 1, g.eval(point), d, partial + d))
    status: SumStatus = DepthLimited(max_depth) if depth_limited else Bounded()
    return best, status, nodes


def _two_tier_search(sys: GroupSystem, y: CirclePoint,
                     first_slots: tuple[int, ...], threshold: float,
                     max_depth: int, convergence_eps: float,
                     node_budget: int) -> tuple[float, SumStatus, int]:
    """Divergence probe first, cut-closure certification second.

    The probe explores without closing cycles, so a threshold crossing it
    reports (directly or through a ray tail) is a genuine lower bound, and
    an exhaustion is a cut-free Bounded certificate; its node budget is kept
    modest because cusped systems make cut-free exhaustion intractable.
    Inconclusive probes fall through to the cut-closure search, whose
    Bounded verdicts rest on dropping deviations from already-summed rays.
    """
    probe_budget = min(node_budget, PROBE_NODE_BUDGET)
    probe_eps = min(convergence_eps, PROBE_EPS)
    value, status, nodes = _sup_sum_search(
        sys, y, first_slots, threshold, max_depth, probe_eps, probe_budget,
        cut_cycles=False)
    if isinstance(status, (Bounded, ExceedsThreshold)):
        return value, status, nodes
    value2, status2, nodes2 = _sup_sum_search(
        sys, y, first_slots, threshold, max_depth, convergence_eps,
        node_budget, cut_cycles=True)
    return max(value, value2), status2, nodes + nodes2


def estimate_S_tilde(sys: GroupSystem, y: CirclePoint, gamma: Letter,
                     threshold: float = DIVERGENCE_THRESHOLD,
                     max_depth: int = DEFAULT_MAX_DEPTH,
                     convergence_eps: float = CONVERGENCE_EPS,
                     node_budget: int = DEFAULT_NODE_BUDGET) -> STildeEstimate:
    """Supremum of derivative series at ``y`` over all non-backtracking
    sequences whose first letter is not the inverse of ``gamma``.

    The value always includes the identity term, so it is at least 1.
    ExceedsThreshold reports a genuine lower-bound crossing (a partial sum,
    or the closed-form total of a repeating ray); Bounded means the search
    exhausted (see _two_tier_search for the certification caveat on cusped
    systems); DepthLimited means branches survived the depth or node budget.
    """
    banned = gamma.inverse().slot
    first = tuple(s for s in range(2 * sys.rank) if s != banned)
    value, status, nodes = _two_tier_search(
        sys, y, first, threshold, max_depth, convergence_eps, node_budget)
    return STildeEstimate(y=y, letter_excluded=gamma, value=value,
                          status=status, nodes_explored=nodes)


def estimate_S_cone(sys: GroupSystem, y: CirclePoint, first_letter: Letter,
                    threshold: float = DIVERGENCE_THRESHOLD,
                    max_depth: int = DEFAULT_MAX_DEPTH,
                    convergence_eps: float = CONVERGENCE_EPS,
                    node_budget: int = DEFAULT_NODE_BUDGET) -> STildeEstimate:
    """Same estimator restricted to sequences that start with one fixed
    letter (the single-direction series)."""
    value, status, nodes = _two_tier_search(
        sys, y, (first_letter.slot,), threshold, max_depth, convergence_eps,
        node_budget)
    return STildeEstimate(y=y, letter_excluded=first_letter.inverse(),
                          value=value, status=status, nodes_explored=nodes)


# --------------------------------------------------------------------------
# Component extraction


@dataclass(frozen=True)
class ComponentSet:
    """Connected components of the bounded-sum region for one letter."""

    letter: Letter
    components: tuple[Arc, ...]
    resolution: float
    boundary_refined_to: float
    unknown_count: int = 0


def compute_M_tilde(sys: GroupSystem, gamma: Letter, resolution: float = 1e-2,
                    threshold: float = 1e4,
                    max_depth: int = DEFAULT_MAX_DEPTH,
                    convergence_eps: float = 1e-6,
                    node_budget: int = DEFAULT_NODE_BUDGET,
                    restrict_to: ArcSet | None = None) -> ComponentSet:
    """Grid classification of the bounded-sum region for ``gamma``, with the
    component boundaries refined by bisection to resolution/100.

    The branch-closure threshold defaults to 1e-6 here (looser than the
    estimator's own default): estimated values are insensitive to it over
    1e-6..1e-9 because closed-form ray tails dominate, while exhaustion cost
    grows close to threefold per decade.  Depth-limited sample points count
    as Unknown: they never break or extend a run of Bounded points, and they
    stop boundary bisection.  When ``restrict_to`` is given, only sample
    points inside it are classified (used with Cantor covers, where
    complement gaps also carry bounded sums and would otherwise be conflated
    with the target region).
    """
    if resolution > 1e-2:
        raise MarkovError("resolution must be <= 1e-2")
    steps = max(16, int(round(1.0 / resolution)))
    h = 1.0 / steps

    def classify(x: float) -> str:
        pt = CirclePoint(x)
        if restrict_to is not None and restrict_to.locate(pt) is None:
            return "outside"
        est = estimate_S_tilde(sys, pt, gamma, threshold, max_depth,
                               convergence_eps, node_budget)
        if est.bounded:
            return "bounded"
        if est.exceeded:
            return "exceeds"
        return "unknown"

    statuses = [classify(k * h) for k in range(steps)]
    unknown_count = statuses.count("unknown")
    if "bounded" not in statuses and "exceeds" not in statuses:
        raise AllUnknown(
            f"no grid point classified for letter {gamma.to_char()} "
            f"({unknown_count} unknown)")

    refine_to = resolution / 100.0

    def refine(lo: float, hi: float, lo_status: str) -> float:
        """Bisect between a non-bounded point lo and a bounded point hi (or
        symmetric), returning the frontier estimate."""
        if lo_status != "exceeds":
            return hi  # cannot refine against unknown/outside neighbours
        a, b = lo, hi
        for _ in range(BISECTION_MAX_ITERATIONS):
            if abs(b - a) <= refine_to:
                break
            mid = a + (b - a) / 2.0
            st = classify(mid % 1.0)
            if st == "bounded":
                b = mid
            elif st == "exceeds":
                a = mid
            else:
                break
        return (a + b) / 2.0

    # cyclic runs of bounded points; unknown/outside points are transparent
    comps: list[Arc] = []
    idxs = [k for k in range(steps) if statuses[k] == "bounded"]
    if idxs:
        if all(st != "exceeds" for st in statuses):
            comps.append(Arc(CirclePoint(0.0), 1.0))
        else:
            runs: list[list[int]] = []
            for k in idxs:
                if runs and all(
                    statuses[i % steps] != "exceeds"
                    for i in range(runs[-1][-1] + 1, k)
                ):
                    runs[-1].append(k)
                else:
                    runs.append([k])
            # cyclic merge of the last run into the first
            if len(runs) > 1:
                first, last = runs[0], runs[-1]
                if all(statuses[i % steps] != "exceeds"
                       for i in range(last[-1] + 1, first[0] + steps)):
                    runs[0] = last + first
                    runs.pop()
            for run in runs:
                k_first, k_last = run[0], run[-1]
                # walk outwards to the nearest classified neighbour
                i = k_first - 1
                while statuses[i % steps] in ("unknown", "outside"):
                    i -= 1
                left = refine(i * h, k_first * h, statuses[i % steps])
                i = k_last + 1
                while statuses[i % steps] in ("unknown", "outside"):
                    i += 1
                right = refine(i * h, k_last * h, statuses[i % steps])
                length = (right - left) % 1.0
                if length <= 0.0:
                    length = h
                comps.append(Arc(CirclePoint(left), length))
    comps.sort(key=lambda a: a.start.x)
    return ComponentSet(letter=gamma, components=tuple(comps),
                        resolution=resolution, boundary_refined_to=refine_to,
                        unknown_count=unknown_count)


# --------------------------------------------------------------------------
# First returns


def find_first_returns(sys: GroupSystem, I: Arc, gamma: Letter,
                       max_len: int = 8, *, assert_disjoint: bool = True
                       ) -> tuple[tuple[ReducedWord, ...], tuple[ReducedWord, ...]]:
    """Breadth-first enumeration of words (first letter != gamma inverse)
    whose successive images of ``I`` avoid ``I``; branches whose image meets
    ``I`` are recorded as returns and not expanded.

    Each return is verified to map ``I`` into itself with last applied letter
    ``gamma``; the images of all admissible words are checked pairwise
    disjoint unless ``assert_disjoint`` is off (used before endpoints are
    snapped to exact fixed points).
    """
    if max_len < 1:
        raise MarkovError("max_len must be >= 1")
    banned_first = gamma.inverse().slot
    letters = [Letter(s // 2, bool(s % 2)) for s in range(2 * sys.rank)]
    admissible: list[ReducedWord] = []
    returns: list[ReducedWord] = []
    images: list[tuple[Arc, ReducedWord]] = []
    queue: list[tuple[ReducedWord, Arc]] = []
    for s, letter in enumerate(letters):
        if s == banned_first:
            continue
        word = ReducedWord.single(letter)
        image = map_arc(sys.letter_diffeo(letter), I)
        queue.append((word, image))
    while queue:
        next_queue: list[tuple[ReducedWord, Arc]] = []
        for word, image in queue:
            if image.overlaps(I):
                if assert_disjoint:
                    if not I.contains_arc(image):
                        raise MarkovError(
                            f"return image of {word.serialize()!r} meets but "
                            f"is not inside the component")
                    if word.letters[-1] != gamma:
                        raise MarkovError(
                            f"return {word.serialize()!r} does not end with "
                            f"{gamma.to_char()}")
                    returns.append(word)
                    images.append((image, word))
                    continue
                # before endpoint snapping the component boundary carries a
                # bisection error, so grazing overlaps are tolerated and the
                # containment check is loose
                if (word.letters[-1] == gamma
                        and I.contains_arc(image, tol=1e-3)):
                    returns.append(word)
                    images.append((image, word))
                    continue
            admissible.append(word)
            images.append((image, word))
            if len(word.letters) >= max_len:
                continue
            last = word.letters[-1]
            for letter in letters:
                if letter.cancels(last):
                    continue
                child = word.append(letter)
                child_image = map_arc(sys.letter_diffeo(letter), image)
                next_queue.append((child, child_image))
        queue = next_queue
    if assert_disjoint:
        try:
            ArcSet.from_arcs(image for image, _word in images)
        except OverlapError as err:
            culprit = next(w.serialize() for image, w in images
                           if image == err.member)
            raise MarkovError(
                f"admissible image of {culprit!r} overlaps another "
                f"image") from None
    key = lambda w: w.sort_key()
    return tuple(sorted(admissible, key=key)), tuple(sorted(returns, key=key))


@dataclass(frozen=True)
class FirstReturnPair:
    """The two return words fixing the endpoints of one component."""

    interval: Arc
    g_minus: ReducedWord
    g_plus: ReducedWord
    deriv_minus: float
    deriv_plus: float
    interior_fixed_point_free: bool
    minus_map: MobiusTransform | None = field(default=None, compare=False)
    plus_map: MobiusTransform | None = field(default=None, compare=False)


def endpoint_fixers(sys: GroupSystem, I: Arc,
                    returns: tuple[ReducedWord, ...],
                    fix_tol: float = FIX_TOL) -> FirstReturnPair:
    """Select the returns fixing the right and left endpoints of ``I``.

    The candidates are ranked shortest-first, and among the shortest words
    within tolerance the one displacing the endpoint least wins (a loose
    tolerance can admit a same-length word whose fixed point merely lies
    nearby); the selected pair must be distinct (a coinciding pair would
    make the interval wander).  Derivatives are evaluated at the fixed
    endpoints and the interior is scanned for additional fixed points of
    either map.
    """
    if not returns:
        raise NoEndpointFixer("no return words supplied")
    x_minus = I.start
    x_plus = I.end
    g_plus = g_minus = None
    best_plus = best_minus = math.inf
    for word in sorted(returns, key=lambda w: w.sort_key()):
        t = sys.word_diffeo(word)
        if g_plus is not None and len(word.letters) > len(g_plus[0].letters):
            if g_minus is not None and len(word.letters) > len(g_minus[0].letters):
                break
        d_plus = circle_distance(t.eval(x_plus), x_plus)
        if d_plus <= fix_tol and (
                g_plus is None
                or (len(word.letters) == len(g_plus[0].letters)
                    and d_plus < best_plus)):
            g_plus = (word, t)
            best_plus = d_plus
        d_minus = circle_distance(t.eval(x_minus), x_minus)
        if d_minus <= fix_tol and (
                g_minus is None
                or (len(word.letters) == len(g_minus[0].letters)
                    and d_minus < best_minus)):
            g_minus = (word, t)
            best_minus = d_minus
    if g_plus is None:
        raise NoEndpointFixer(
            f"no return fixes the right endpoint {x_plus.x:.12g} "
            f"within {fix_tol}")
    if g_minus is None:
        raise NoEndpointFixer(
            f"no return fixes the left endpoint {x_minus.x:.12g} "
            f"within {fix_tol}")
    if g_plus[0] == g_minus[0]:
        raise MarkovError(
            f"single return {g_plus[0].serialize()!r} fixes both endpoints "
            f"(the interval would wander)")
    interior_free = True
    for word, t in (g_plus, g_minus):
        prev_sign = 0
        for k in range(1, INTERIOR_FIXED_POINT_SAMPLES + 1):
            frac = k / (INTERIOR_FIXED_POINT_SAMPLES + 1.0)
            x = CirclePoint((I.start.x + frac * I.length) % 1.0)
            gap = signed_gap(x, t.eval(x))
            disp = gap - 1.0 if gap > 0.5 else gap
            if abs(disp) <= fix_tol:
                interior_free = False
                break
            sign = 1 if disp > 0 else -1
            if prev_sign and sign != prev_sign:
                interior_free = False
                break
            prev_sign = sign
        if not interior_free:
            break
    tp = g_plus[1]
    tm = g_minus[1]
    return FirstReturnPair(
        interval=I,
        g_minus=g_minus[0],
        g_plus=g_plus[0],
        deriv_minus=tm.derivative(x_minus),
        deriv_plus=tp.derivative(x_plus),
        interior_fixed_point_free=interior_free,
        minus_map=tm if isinstance(tm, MobiusTransform) else None,
        plus_map=tp if isinstance(tp, MobiusTransform) else None,
    )


# --------------------------------------------------------------------------
# Interval-to-interval endpoint dynamics


def _flatten_components(components) -> tuple[tuple[Letter, Arc], ...]:
    flat = []
    for cs in components:
        for arc in cs.components:
            flat.append((cs.letter, arc))
    flat.sort(key=lambda t: t[1].start.x)
    return tuple(flat)


def _pair_for(pairs, arc: Arc, tol: float = 1e-7) -> FirstReturnPair:
    for pair in pairs:
        if (circle_distance(pair.interval.start, arc.start) <= tol
                and abs(pair.interval.length - arc.length) <= tol):
            return pair
    raise MarkovError(f"no endpoint-fixer pair for component at "
                      f"{arc.start.x:.12g}")


def _conjugate_word(letter: Letter, word: ReducedWord) -> ReducedWord:
    """Apply letter first, then word, then letter^{-1}.

    If word fixes p, the result fixes letter^{-1}(p): it transports a fixer
    one step along the interval dynamics of letter's component.
    """
    out = word_concat(ReducedWord.single(letter.inverse()), word)
    return word_concat(out, ReducedWord.single(letter))


def phi_cycles(sys: GroupSystem, components, pairs,
               endpoint_tol: float = 1e-9
               ) -> tuple[tuple[tuple[int, ...], ...], tuple[tuple[int, ...], ...]]:
    """Decompose the components into cycles of the endpoint dynamics.

    Writing the right-endpoint fixer with first applied letter l, the right
    dynamics sends a component to the component (for the region of l) whose
    right endpoint is the l-image of this component's right endpoint; its
    fixer must be the current fixer conjugated by l (l applied last).  The
    left dynamics does the same with the left-endpoint fixer.  Indices refer
    to the flattened, start-sorted component list.
    """
    flat = _flatten_components(components)
    pair_of = [_pair_for(pairs, arc) for _letter, arc in flat]

    def successor(i: int, side: str) -> int:
        word = pair_of[i].g_plus if side == "right" else pair_of[i].g_minus
        gamma1 = word.letters[0]
        endpoint = flat[i][1].end if side == "right" else flat[i][1].start
        target = sys.letter_diffeo(gamma1).eval(endpoint)
        for j, (letter, arc) in enumerate(flat):
            if letter != gamma1:
                continue
            ref = arc.end if side == "right" else arc.start
            if circle_distance(ref, target) <= endpoint_tol:
                expected = _conjugate_word(gamma1.inverse(), word)
                got = pair_of[j].g_plus if side == "right" else pair_of[j].g_minus
                if got != expected:
                    raise CycleInconsistency(
                        f"fixer of image component is "
                        f"{got.serialize()!r}, expected conjugate "
                        f"{expected.serialize()!r}")
                return j
        raise CycleInconsistency(
            f"no component of letter {gamma1.to_char()} has "
            f"{side} endpoint at {target.x:.12g}")

    def cycles(side: str) -> tuple[tuple[int, ...], ...]:
        seen: set[int] = set()
        out = []
        for start in range(len(flat)):
            if start in seen:
                continue
            cyc = [start]
            seen.add(start)
            nxt = successor(start, side)
            while nxt != start:
                if nxt in seen:
                    raise CycleInconsistency(
                        "endpoint dynamics merged two cycles")
                cyc.append(nxt)
                seen.add(nxt)
                nxt = successor(nxt, side)
            out.append(tuple(cyc))
        return tuple(out)

    return cycles("right"), cycles("left")


# --------------------------------------------------------------------------
# Markov system assembly


@dataclass(frozen=True)
class MarkovSystem:
    """The interval family, indeterminacy endpoints, transition structure,
    endpoint fixers, central subinterval family, and expansion constants of
    the piecewise-inverse-letter map."""

    intervals: tuple[tuple[Arc, Letter], ...]
    endpoints: tuple[CirclePoint, ...]
    transition: tuple[tuple[bool, ...], ...]
    returns: tuple[FirstReturnPair, ...]
    q_family: tuple[Arc, ...]
    c5: float
    epsilon0: float
    branch_maps: tuple[MobiusTransform, ...] = field(default=(), compare=False)

    def to_json_dict(self) -> dict:
        def num(x: float) -> float:
            return float(f"{x:.12g}")

        return {
            "intervals": [
                {"start": num(arc.start.x), "length": num(arc.length),
                 "letter": letter.to_char()}
                for arc, letter in self.intervals
            ],
            "endpoints": [num(p.x) for p in self.endpoints],
            "transition": [[int(v) for v in row] for row in self.transition],
            "returns": [
                {"interval_start": num(p.interval.start.x),
                 "interval_length": num(p.interval.length),
                 "g_minus": p.g_minus.serialize(),
                 "g_plus": p.g_plus.serialize(),
                 "deriv_minus": num(p.deriv_minus),
                 "deriv_plus": num(p.deriv_plus),
                 "interior_fixed_point_free": p.interior_fixed_point_free}
                for p in self.returns
            ],
            "q_family": [
                {"start": num(a.start.x), "length": num(a.length)}
                for a in self.q_family
            ],
            "c5": num(self.c5),
            "epsilon0": num(self.epsilon0),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), indent=2, sort_keys=True)


def _snap_components(components, pairs) -> tuple[list, list[FirstReturnPair]]:
    """Replace approximate component endpoints by the exact fixed points of
    the discovered endpoint-fixer transforms."""
    snapped_sets = []
    snapped_pairs = []
    for cs in components:
        new_arcs = []
        for arc in cs.components:
            pair = _pair_for(pairs, arc)
            left = _nearest_fixed_point(pair.minus_map, arc.start)
            right = _nearest_fixed_point(pair.plus_map, arc.end)
            new_arc = arc_between(left, right)
            new_arcs.append(new_arc)
            snapped_pairs.append(replace(pair, interval=new_arc))
        snapped_sets.append(replace(cs, components=tuple(new_arcs)))
    return snapped_sets, snapped_pairs


def _nearest_fixed_point(t: MobiusTransform | None, near: CirclePoint) -> CirclePoint:
    if t is None:
        return near
    fps = t.fixed_points()
    best = min(fps, key=lambda fp: circle_distance(fp[0], near))
    if circle_distance(best[0], near) > 1e-3:
        raise MarkovError(
            f"no fixed point of the endpoint fixer near {near.x:.12g}")
    return best[0]


def build_markov(sys: GroupSystem, components, pairs, *,
                 cover_tol: float = 1e-6, markov_tol: float = 1e-9,
                 j_max: int = 3, kappa_grid: int = 1200,
                 allow_gaps: bool = False) -> MarkovSystem:
    """Assemble the piecewise map from the component family.

    Adjacent component endpoints are merged into a single indeterminacy point
    (gap wider than ``cover_tol`` raises CoverGap unless ``allow_gaps``);
    each interval's image under its inverse letter must land its endpoints on
    indeterminacy points within ``markov_tol`` — or, when gaps are allowed,
    inside a gap of the family.  The expansion constant is the maximum
    distortion of the accelerated map sampled over j <= j_max, and the
    certificate radius is half the least central-subinterval length times
    its exponential.
    """
    flat = _flatten_components(components)
    if not flat:
        raise CoverGap("no components supplied")
    m = len(flat)
    junction_gaps = [
        (flat[(i + 1) % m][1].start.x - flat[i][1].end.x) % 1.0
        for i in range(m)]
    gappy = any(g > cover_tol and (1.0 - g) > cover_tol for g in junction_gaps)
    if gappy and not allow_gaps:
        i = next(i for i, g in enumerate(junction_gaps)
                 if g > cover_tol and (1.0 - g) > cover_tol)
        raise CoverGap(
            f"gap of {junction_gaps[i]:.3g} after component ending at "
            f"{flat[i][1].end.x:.12g}")
    if gappy:
        # exceptional case: the family approximates a Cantor set; keep the
        # component endpoints themselves as the indeterminacy set
        intervals = [(arc, letter) for letter, arc in flat]
        n_points = sorted({arc.start.x for _l, arc in flat}
                          | {arc.end.x for _l, arc in flat})
    else:
        points = []
        for i in range(m):
            mid = (flat[i][1].end.x + junction_gaps[i] / 2.0) % 1.0
            points.append(mid)
        n_points = sorted(points)
        intervals = []
        for i in range(m):
            start = n_points[i]
            end = n_points[(i + 1) % m]
            arc = Arc(CirclePoint(start), (end - start) % 1.0 or 1.0)
            letter = next(l for l, a in flat if a.contains(arc.midpoint))
            intervals.append((arc, letter))
    branch_maps = tuple(
        sys.letter_diffeo(letter).inverse() for _arc, letter in intervals)
    # Markov property + transition matrix
    transition = []
    endpoints = tuple(CirclePoint(p) for p in n_points)

    def in_some_interior(p: CirclePoint) -> bool:
        return any(a.contains(p)
                   and circle_distance(p, a.start) > markov_tol
                   and circle_distance(p, a.end) > markov_tol
                   for a, _l in intervals)

    for (arc, letter), binv in zip(intervals, branch_maps):
        img_start = binv.eval(arc.start)
        img_end = binv.eval(arc.end)
        for p in (img_start, img_end):
            if min(circle_distance(p, q) for q in endpoints) <= markov_tol:
                continue
            if gappy and not in_some_interior(p):
                continue  # endpoint image falls in a gap of the family
            raise MarkovError(
                f"image endpoint {p.x:.12g} of interval at "
                f"{arc.start.x:.12g} is not an indeterminacy point")
        image = arc_between(img_start, img_end)
        row = tuple(bool(image.contains(a.midpoint)) for a, _l in intervals)
        if not any(row):
            raise MarkovError(
                f"image of interval at {arc.start.x:.12g} covers no interval")
        transition.append(row)
    # align pairs with the final intervals
    final_pairs = []
    for arc, _letter in intervals:
        pair = _pair_for(pairs, arc, tol=2.0 * cover_tol + 1e-9)
        final_pairs.append(replace(pair, interval=arc))
    q_family = []
    for pair in final_pairs:
        arc = pair.interval
        gm, gp = pair.minus_map, pair.plus_map
        if gm is None or gp is None:
            raise MarkovError("endpoint fixers must be projective transforms")
        p1 = gm.eval(arc.end)
        p0 = gm.eval(p1)
        p2 = gp.eval(arc.start)
        p3 = gp.eval(p2)
        for sub in (arc_between(p0, p1), arc_between(p1, p2), arc_between(p2, p3)):
            if not arc.contains_arc(sub):
                raise MarkovError(
                    f"central subinterval {sub.start.x:.12g} escapes its "
                    f"component")
            q_family.append(sub)
    ms = MarkovSystem(
        intervals=tuple(intervals), endpoints=endpoints,
        transition=tuple(transition), returns=tuple(final_pairs),
        q_family=tuple(q_family), c5=0.0, epsilon0=0.0,
        branch_maps=branch_maps)
    kappa_max = 0.0
    for j in range(1, j_max + 1):
        _mind, kappa, _cert = first_exit_expansion(ms, j, kappa_grid,
                                                   _skip_certificate=True)
        kappa_max = max(kappa_max, kappa)
    c5 = kappa_max
    eps0 = 0.5 * min(a.length for a in q_family) * math.exp(-c5)
    return replace(ms, c5=c5, epsilon0=eps0)


# --------------------------------------------------------------------------
# Refined partitions and the first-exit certificate


@dataclass(frozen=True)
class RefinedPartition:
    level: int
    intervals: tuple[Arc, ...]
    indeterminacy: tuple[CirclePoint, ...]
    max_diameter: float
    # the accelerated partition is only materialized below a size limit;
    # max_diameter is exact either way
    intervals_complete: bool = True


def _exit_cut_points(pair: FirstReturnPair, tol: float = 1e-13,
                     i_max: int = 400) -> list[float]:
    """Interior cut points of the first-exit acceleration inside one
    interval: forward images of each endpoint under the opposite fixer,
    starting at the second image, truncated when steps stall."""
    arc = pair.interval
    cuts = []
    for transform, seed in ((pair.minus_map, arc.end), (pair.plus_map, arc.start)):
        prev = transform.eval(seed)
        for _i in range(2, i_max):
            cur = transform.eval(prev)
            if circle_distance(cur, prev) < tol:
                break
            cuts.append(cur.x)
            prev = cur
    return cuts


def _make_locator(ms: MarkovSystem):
    """Map a coordinate to the index of the interval containing it.

    When the intervals tile the circle this is a pure bisection on starts;
    when the family leaves gaps, points inside a gap locate to -1.
    """
    m = len(ms.intervals)
    interval_starts = [arc.start.x for arc, _l in ms.intervals]
    tiles = abs(sum(arc.length for arc, _l in ms.intervals) - 1.0) < 1e-9
    if tiles:
        def locate(x: float) -> int:
            return (bisect.bisect_right(interval_starts, x) - 1) % m
    else:
        def locate(x: float) -> int:
            i = (bisect.bisect_right(interval_starts, x) - 1) % m
            return i if ms.intervals[i][0].contains(CirclePoint(x)) else -1
    return locate


def _refined_pieces(ms: MarkovSystem, j: int) -> list[tuple]:
    """Continuity pieces of the j-fold map as (start, length, transform,
    target) tuples; the transform is the exact branch composition (None at
    j=0) and target is the interval index the piece maps onto.  Pieces whose
    orbit leaves a gap-leaving interval family are dropped."""
    locate = _make_locator(ms)
    pieces = [(arc.start.x, arc.length, None, i)
              for i, (arc, _letter) in enumerate(ms.intervals)]
    for _level in range(j):
        next_pieces = []
        for start, length, t, target in pieces:
            binv = ms.branch_maps[target]
            comp = binv if t is None else binv.compose(t)
            img_a = comp.eval(CirclePoint(start))
            img_b = comp.eval(CirclePoint((start + length) % 1.0))
            image = arc_between(img_a, img_b)
            comp_inv = comp.inverse()
            rels = []
            for p in ms.endpoints:
                if not image.contains_interior(p):
                    continue
                rel = (comp_inv.eval(p).x - start) % 1.0
                if 1e-12 < rel < length - 1e-12:
                    rels.append(rel)
            rels.sort()
            bounds = [0.0]
            for r in rels:
                if r - bounds[-1] > 1e-13:
                    bounds.append(r)
            bounds.append(length)
            for a, b in zip(bounds, bounds[1:]):
                mid = comp.eval(CirclePoint((start + (a + b) / 2.0) % 1.0))
                tgt = locate(mid.x)
                if tgt < 0:
                    continue  # piece maps into a gap of the family
                next_pieces.append(((start + a) % 1.0, b - a, comp, tgt))
        pieces = next_pieces
    return pieces


def refine_partition(ms: MarkovSystem, j: int, *, tilde: bool = False,
                     materialize_limit: int = 500_000) -> RefinedPartition:
    """Pull the indeterminacy set back through j applications of the map.

    Each piece carries the exact branch transform of the j-fold composition,
    so cut points are preimages of interval endpoints under a single
    projective transform.  With ``tilde`` the per-interval first-exit cut
    points are pulled back as well (the acceleration's finer partition).
    When the accelerated partition would exceed ``materialize_limit`` pieces
    its intervals are not stored (``intervals_complete`` is False), but
    ``max_diameter`` is still exact: subdividing a piece only shrinks it, so
    pieces no longer than the running maximum are skipped.
    """
    if j < 0:
        raise MarkovError("level must be >= 0")
    pieces = _refined_pieces(ms, j)
    if not tilde:
        arcs = []
        max_diam = 0.0
        for start, length, _t, _target in pieces:
            if length <= 0.0:
                continue
            arcs.append(Arc(CirclePoint(start), length))
            max_diam = max(max_diam, length)
        arcs.sort(key=lambda a: a.start.x)
        return RefinedPartition(
            level=j, intervals=tuple(arcs),
            indeterminacy=tuple(a.start for a in arcs),
            max_diameter=max_diam)

    cuts_by_target = [sorted(_exit_cut_points(pair)) for pair in ms.returns]
    worst_fanout = 1 + max((len(c) for c in cuts_by_target), default=0)
    materialize = len(pieces) * worst_fanout <= materialize_limit

    def sub_bounds(start: float, length: float, t, target) -> list[float]:
        t_inv = None if t is None else t.inverse()
        rels = []
        for c in cuts_by_target[target]:
            x = c if t_inv is None else t_inv.eval(CirclePoint(c)).x
            rel = (x - start) % 1.0
            if 1e-13 < rel < length - 1e-13:
                rels.append(rel)
        rels.sort()
        return [0.0] + rels + [length]

    max_diam = 0.0
    finer: list[tuple[float, float]] = []
    ordered = sorted(pieces, key=lambda p: -p[1])
    for start, length, t, target in ordered:
        if length <= 0.0:
            continue
        if not materialize and length <= max_diam:
            break  # sorted by length: nothing below can exceed the maximum
        bounds = sub_bounds(start, length, t, target)
        for a, b in zip(bounds, bounds[1:]):
            max_diam = max(max_diam, b - a)
            if materialize:
                finer.append(((start + a) % 1.0, b - a))
    arcs = [Arc(CirclePoint(s), l) for s, l in finer if l > 0.0]
    arcs.sort(key=lambda a: a.start.x)
    return RefinedPartition(
        level=j, intervals=tuple(arcs),
        indeterminacy=tuple(a.start for a in arcs),
        max_diameter=max_diam,
        intervals_complete=materialize)


def first_exit_expansion(ms: MarkovSystem, j: int, grid: int = 2000, *,
                         hit_tol: float = 1e-11,
                         _skip_certificate: bool = False
                         ) -> tuple[float, float, bool]:
    """Evaluate the accelerated map (first exit after j steps) on a grid.

    Returns the minimum derivative over the grid, the maximum per-branch
    distortion coefficient, and whether expansion is certified (minimum
    derivative > 1 and refined-partition diameter below the certificate
    radius).  Grid points landing on the indeterminacy set are nudged; an
    unresolvable hit raises GridHitsIndeterminacy.
    """
    if j < 1:
        raise MarkovError("level must be >= 1")
    locate = _make_locator(ms)

    def near_endpoint(x: CirclePoint) -> bool:
        return any(circle_distance(x, p) <= hit_tol for p in ms.endpoints)

    min_deriv = math.inf
    kappa_max = 0.0
    group_sig = None
    group_logs: list[float] = []

    def flush_group():
        nonlocal kappa_max
        if len(group_logs) >= 2:
            kappa_max = max(kappa_max, max(group_logs) - min(group_logs))

    def finish(y: CirclePoint, deriv: float, sig: tuple) -> None:
        """Apply the first-exit tail at ``y`` and fold the total derivative
        into the minimum and the per-branch distortion groups."""
        nonlocal min_deriv, group_sig, group_logs
        idx = locate(y.x)
        if idx < 0:
            return
        pair = ms.returns[idx]
        arc = pair.interval
        gm, gp = pair.minus_map, pair.plus_map
        left_inner = gm.eval(gm.eval(arc.end))
        right_inner = gp.eval(gp.eval(arc.start))
        central = arc_between(left_inner, right_inner)
        exits = 0
        side = "c"
        guard = 0
        while not central.contains(y):
            off_left = arc_between(arc.start, left_inner).contains(y)
            t = gm if off_left else gp
            side = "l" if off_left else "r"
            tinv = t.inverse()
            deriv *= tinv.derivative(y)
            y = tinv.eval(y)
            exits += 1
            guard += 1
            if guard > 500_000:
                raise MarkovError("first-exit iteration did not terminate")
        sig = sig + ((idx, side, exits),)
        min_deriv = min(min_deriv, deriv)
        if sig != group_sig:
            flush_group()
            group_sig = sig
            group_logs = []
        group_logs.append(math.log(deriv))

    tiling = abs(sum(arc.length for arc, _l in ms.intervals) - 1.0) < 1e-9
    if tiling:
        for k in range(grid):
            x0 = (k + 0.5) / grid
            x = CirclePoint(x0)
            ok = False
            for _try in range(6):
                if not near_endpoint(x):
                    ok = True
                    break
                x = CirclePoint((x.x + 3.7e-9) % 1.0)
            if not ok:
                raise GridHitsIndeterminacy(f"could not perturb {x0:.12g} off "
                                            f"the indeterminacy set")
            deriv = 1.0
            sig = []
            y = x
            hit = False
            for _step in range(j):
                idx = locate(y.x)
                sig.append(idx)
                binv = ms.branch_maps[idx]
                deriv *= binv.derivative(y)
                y = binv.eval(y)
                if near_endpoint(y):
                    hit = True
                    break
            if hit:
                continue  # skip: orbit fell onto the indeterminacy set
            finish(y, deriv, tuple(sig))
    else:
        # with gaps, a uniform grid cannot follow the Cantor structure to
        # depth j; sample inside the continuity pieces instead, each of
        # which carries the exact j-fold branch transform
        pieces = _refined_pieces(ms, j)
        if not pieces:
            raise MarkovError("the refined partition is empty")
        per = max(1, min(16, grid // len(pieces)))
        for p_idx, (start, length, t, _target) in enumerate(pieces):
            for i in range(per):
                x = CirclePoint((start + length * (i + 0.5) / per) % 1.0)
                y = t.eval(x)
                if near_endpoint(y):
                    continue
                finish(y, t.derivative(x), (p_idx,))
    flush_group()
    if not math.isfinite(min_deriv):
        raise MarkovError("no sample point has a full orbit inside the "
                          "interval family")
    if _skip_certificate:
        return min_deriv, kappa_max, False
    diam = refine_partition(ms, j, tilde=True).max_diameter
    certified = (min_deriv > 1.0) and (diam < ms.epsilon0)
    return min_deriv, kappa_max, certified


# --------------------------------------------------------------------------
# Gap-aware endpoint snapping (exceptional case)


def hat_endpoints(I: Arc, cover, tol: float = 1e-9
                  ) -> tuple[CirclePoint, CirclePoint, CirclePoint, CirclePoint]:
    """Snap the endpoints of ``I`` to the enclosing complement-gap endpoints
    of a Cantor cover.

    Returns (left snapped outward, left snapped inward, right snapped inward,
    right snapped outward): an endpoint interior to the covered set on both
    sides is left unchanged (all four coincide with it pairwise); an endpoint
    inside or on the boundary of a gap contributes the gap's two endpoints.
    """
    arcs: ArcSet = cover if isinstance(cover, ArcSet) else cover.arcs
    gaps = arcs.complement()

    def locate_gap(x: CirclePoint) -> Arc | None:
        for g in gaps.arcs:
            if g.contains(x) or circle_distance(g.start, x) <= tol \
                    or circle_distance(g.end, x) <= tol:
                return g
        return None

    x_minus, x_plus = I.start, I.end
    g_minus = locate_gap(x_minus)
    g_plus = locate_gap(x_plus)
    if g_minus is None:
        hat_minus = hat_minus_star = x_minus
    else:
        hat_minus, hat_minus_star = g_minus.end, g_minus.start
    if g_plus is None:
        hat_plus = hat_plus_star = x_plus
    else:
        hat_plus, hat_plus_star = g_plus.start, g_plus.end
    return hat_minus, hat_minus_star, hat_plus, hat_plus_star


# --------------------------------------------------------------------------
# Orchestration


def extract_markov(sys: GroupSystem, *, resolution: float = 1e-2,
                   threshold: float = 1e4,
                   max_depth: int = DEFAULT_MAX_DEPTH,
                   max_len: int = 8,
                   restrict_to: ArcSet | None = None,
                   snap_cover: ArcSet | None = None,
                   j_max: int = 3, kappa_grid: int = 1200) -> MarkovSystem:
    """Full pipeline: bounded-region extraction per letter, first-return and
    endpoint-fixer discovery per component (doubling the word-length budget
    up to 16 when an endpoint fixer is missing), exact endpoint snapping, a
    disjointness-checked second pass, and assembly.

    With ``restrict_to`` the scan runs on a Cantor cover and the resulting
    intervals may leave gaps; component endpoints are first snapped inward
    onto ``snap_cover`` (default: the scan cover — pass a deeper level for
    sharper endpoints before fixer discovery).
    """
    components = []
    for g in range(sys.rank):
        for inv in (False, True):
            letter = Letter(g, inv)
            components.append(compute_M_tilde(
                sys, letter, resolution=resolution, threshold=threshold,
                max_depth=max_depth, restrict_to=restrict_to))
    # before snapping, a component endpoint sits at the bisection error from
    # the true fixed point; a parabolic fixer displaces such a point only
    # quadratically, so the discovery pass needs a loose fixing tolerance
    loose_tol = max(FIX_TOL, 100.0 * (resolution / 100.0) ** 2, 1e-7)
    if restrict_to is not None:
        fine = snap_cover if snap_cover is not None else restrict_to
        snapped_in = []
        for cs in components:
            arcs = tuple(
                arc_between(hat[0], hat[2])
                for arc in cs.components
                for hat in (hat_endpoints(arc, fine),))
            snapped_in.append(replace(cs, components=arcs))
        components = snapped_in
        # a hyperbolic fixer displaces an endpoint that is off the true
        # fixed point by the gap-adjacent cover-arc length times roughly
        # its multiplier, so the discovery tolerance is coarser here
        loose_tol = max(loose_tol, 1e-3)
    pairs = []
    for cs in components:
        for arc in cs.components:
            budget = max_len
            while True:
                _adm, returns = find_first_returns(
                    sys, arc, cs.letter, budget, assert_disjoint=False)
                try:
                    pairs.append(endpoint_fixers(sys, arc, returns,
                                                 fix_tol=loose_tol))
                    break
                except NoEndpointFixer:
                    if budget >= 16:
                        raise
                    budget = min(16, budget * 2)
    snapped_sets, snapped_pairs = _snap_components(components, pairs)
    verified_pairs = []
    for cs in snapped_sets:
        for arc in cs.components:
            pair = _pair_for(snapped_pairs, arc)
            _adm, returns = find_first_returns(
                sys, arc, cs.letter, max(len(pair.g_plus.letters),
                                         len(pair.g_minus.letters), max_len),
                assert_disjoint=True)
            strict = endpoint_fixers(sys, arc, returns)
            if (strict.g_plus != pair.g_plus
                    or strict.g_minus != pair.g_minus):
                raise MarkovError(
                    "endpoint fixers changed after endpoint snapping")
            verified_pairs.append(strict)
    # a restricted scan targets a Cantor minimal set, so the component
    # family is expected to leave gaps
    return build_markov(sys, snapped_sets, verified_pairs,
                        j_max=j_max, kappa_grid=kappa_grid,
                        allow_gaps=restrict_to is not None)
