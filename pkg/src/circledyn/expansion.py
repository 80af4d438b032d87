"""Ball derivative sums, expansion scans and the growing-tree construction.

Everything here walks the tree of reduced words.  For projective systems the
walk carries one image vector per node (the composed matrix applied to the
base direction), so a node costs a handful of multiplications and no
trigonometry.
"""

from __future__ import annotations

import enum
import heapq
import math
from dataclasses import dataclass

from .circle import Arc, CirclePoint, circle_distance, signed_gap
from .maps import CircleDiffeo, MobiusTransform
from .words import GroupSystem, Letter, ReducedWord, alphabet, ball_size, evaluate_word

DEFAULT_NODE_BUDGET = 100_000_000
NE_TOL = 1e-9
FIX_TOL = 1e-10


class ExpansionError(RuntimeError):
    """Contract violation in an expansion computation."""


class BudgetExceeded(ExpansionError):
    """A tree walk would visit more nodes than the configured budget."""


class NoReturn(ExpansionError):
    """Every image of the base point coincides with it."""


class FamilyIncomplete(ExpansionError):
    """The cone-word family fails to cover some (point, letter) pair."""

    def __init__(self, point: CirclePoint, letter: Letter):
        super().__init__(
            f"no family word with sum > target in the cone of "
            f"{letter.to_char()!r} at x={point.x!r}"
        )
        self.point = point
        self.letter = letter


class NumericBlowup(ExpansionError):
    """An intermediate derivative left the trustworthy floating range."""


class Verdict(enum.Enum):
    NE_CANDIDATE = "ne_candidate"
    EXPANDABLE = "expandable"


# ---------------------------------------------------------------------------
# Tree-walk plumbing


def _letter_slots(rank: int) -> tuple[Letter, ...]:
    return alphabet(rank)


def _check_budget(rank: int, n_max: int, node_budget: int):
    if ball_size(rank, n_max) > node_budget:
        raise BudgetExceeded(
            f"ball of radius {n_max} at rank {rank} has {ball_size(rank, n_max)} "
            f"words, above the budget of {node_budget}"
        )


def _mobius_rows(sys: GroupSystem) -> list[tuple[float, float, float, float]]:
    return [sys.letter_matrix(l).matrix for l in _letter_slots(sys.rank)]


def _slot_inverse(slot: int) -> int:
    return slot ^ 1


def _serialize_slots(slots: tuple[int, ...]) -> str:
    return " ".join(Letter(s // 2, bool(s % 2)).to_char() for s in slots)


def _word_from_slots(slots: tuple[int, ...]) -> ReducedWord:
    return ReducedWord(tuple(Letter(s // 2, bool(s % 2)) for s in slots))


def _walk_derivatives(sys: GroupSystem, x: CirclePoint, n_max: int,
                      first_letter: Letter | None = None,
                      yield_images: bool = False):
    """Yield (slots, derivative, image_x or None) over words of length <= n_max.

    The identity is yielded (as ((), 1.0, x)) only when first_letter is None;
    otherwise only words whose first applied letter is first_letter appear.
    Image coordinates are computed only when requested.
    """
    if sys.is_mobius:
        rows = _mobius_rows(sys)
        theta = math.pi * x.x
        v0 = (math.cos(theta), math.sin(theta))
        if first_letter is None:
            yield (), 1.0, (x.x if yield_images else None)
            stack = []
            for slot in range(2 * sys.rank - 1, -1, -1):
                a, b, c, d = rows[slot]
                stack.append(((slot,), a * v0[0] + b * v0[1], c * v0[0] + d * v0[1]))
        else:
            slot = first_letter.slot
            a, b, c, d = rows[slot]
            stack = [((slot,), a * v0[0] + b * v0[1], c * v0[0] + d * v0[1])]
        while stack:
            slots, wx, wy = stack.pop()
            image = (math.atan2(wy, wx) / math.pi) % 1.0 if yield_images else None
            yield slots, 1.0 / (wx * wx + wy * wy), image
            if len(slots) < n_max:
                banned = _slot_inverse(slots[-1])
                for slot in range(2 * sys.rank - 1, -1, -1):
                    if slot != banned:
                        a, b, c, d = rows[slot]
                        stack.append((slots + (slot,), a * wx + b * wy, c * wx + d * wy))
    else:
        diffeos = [sys.letter_diffeo(l) for l in _letter_slots(sys.rank)]
        if first_letter is None:
            yield (), 1.0, (x.x if yield_images else None)
            stack = []
            for slot in range(2 * sys.rank - 1, -1, -1):
                g = diffeos[slot]
                stack.append(((slot,), g.eval(x), g.derivative(x)))
        else:
            g = diffeos[first_letter.slot]
            stack = [((first_letter.slot,), g.eval(x), g.derivative(x))]
        while stack:
            slots, point, deriv = stack.pop()
            yield slots, deriv, (point.x if yield_images else None)
            if len(slots) < n_max:
                banned = _slot_inverse(slots[-1])
                for slot in range(2 * sys.rank - 1, -1, -1):
                    if slot != banned:
                        g = diffeos[slot]
                        stack.append((slots + (slot,), g.eval(point),
                                      deriv * g.derivative(point)))


# ---------------------------------------------------------------------------
# Ball sums and Lyapunov proxies


@dataclass(frozen=True)
class BallSumEntry:
    n: int
    ball_sum: float
    max_derivative: float
    witness: ReducedWord


@dataclass(frozen=True)
class BallSumSeries:
    x: CirclePoint
    entries: tuple[BallSumEntry, ...]
    deduplicated: bool = False

    def sums(self) -> list[float]:
        return [e.ball_sum for e in self.entries]


def _canonical_integer_key(m: tuple[int, int, int, int]) -> tuple[int, int, int, int]:
    """Sign-canonical form identifying an integer matrix with its negative."""
    for entry in m:
        if entry != 0:
            return m if entry > 0 else (-m[0], -m[1], -m[2], -m[3])
    return m


def ball_sum(sys: GroupSystem, x: CirclePoint, n_max: int,
             node_budget: int = DEFAULT_NODE_BUDGET,
             dedupe_integer_letters: tuple[tuple[int, int, int, int], ...] | None = None,
             first_letter: Letter | None = None) -> BallSumSeries:
    """Per-radius derivative sums over the ball of reduced words.

    ``dedupe_integer_letters`` (exact letter matrices, slot order) switches to
    summing over group *elements*: duplicate spellings of one projective
    matrix contribute once, at their shortest occurrence.  Without it the sum
    ranges over reduced words, which coincides for free actions.
    """
    if n_max < 0:
        raise ExpansionError("n_max must be >= 0")
    _check_budget(sys.rank, n_max, node_budget)
    level_sum = [0.0] * (n_max + 1)
    best: list[tuple[float, int, str, tuple[int, ...]] | None] = [None] * (n_max + 1)

    if dedupe_integer_letters is None:
        for slots, deriv, _img in _walk_derivatives(sys, x, n_max, first_letter):
            k = len(slots)
            level_sum[k] += deriv
            cur = best[k]
            if cur is None or deriv > cur[0]:
                best[k] = (deriv, k, _serialize_slots(slots), slots)
            elif deriv == cur[0]:
                serial = _serialize_slots(slots)
                if (k, serial) < (cur[1], cur[2]):
                    best[k] = (deriv, k, serial, slots)
    else:
        if first_letter is not None:
            raise ExpansionError("deduplicated walks cannot be split by first letter")
        seen: dict[tuple[int, int, int, int], tuple[int, float]] = {}
        rows = dedupe_integer_letters
        theta = math.pi * x.x
        v0 = (math.cos(theta), math.sin(theta))
        stack: list[tuple[tuple[int, ...], tuple[int, int, int, int], float, float]] = []
        key0 = _canonical_integer_key((1, 0, 0, 1))
        seen[key0] = (0, 1.0)
        level_sum[0] += 1.0
        best[0] = (1.0, 0, "", ())
        for slot in range(2 * sys.rank - 1, -1, -1):
            a, b, c, d = rows[slot]
            stack.append(((slot,), (a, b, c, d),
                          a * v0[0] + b * v0[1], c * v0[0] + d * v0[1]))
        while stack:
            slots, mat, wx, wy = stack.pop()
            k = len(slots)
            deriv = 1.0 / (wx * wx + wy * wy)
            key = _canonical_integer_key(mat)
            prev = seen.get(key)
            if prev is None:
                seen[key] = (k, deriv)
                level_sum[k] += deriv
            elif k < prev[0]:
                level_sum[prev[0]] -= prev[1]
                seen[key] = (k, deriv)
                level_sum[k] += deriv
            if prev is None or k <= prev[0]:
                cur = best[k]
                if cur is None or deriv > cur[0]:
                    best[k] = (deriv, k, _serialize_slots(slots), slots)
                elif deriv == cur[0]:
                    serial = _serialize_slots(slots)
                    if (k, serial) < (cur[1], cur[2]):
                        best[k] = (deriv, k, serial, slots)
            if k < n_max:
                banned = _slot_inverse(slots[-1])
                la, lb, lc, ld = mat
                for slot in range(2 * sys.rank - 1, -1, -1):
                    if slot != banned:
                        a, b, c, d = rows[slot]
                        child = (a * la + b * lc, a * lb + b * ld,
                                 c * la + d * lc, c * lb + d * ld)
                        stack.append((slots + (slot,), child,
                                      a * wx + b * wy, c * wx + d * wy))

    entries = []
    running = 0.0
    best_so_far: tuple[float, int, str, tuple[int, ...]] | None = None
    for n in range(n_max + 1):
        running += level_sum[n]
        cand = best[n]
        if cand is not None:
            if best_so_far is None or cand[0] > best_so_far[0] or (
                cand[0] == best_so_far[0] and (cand[1], cand[2]) < (best_so_far[1], best_so_far[2])
            ):
                best_so_far = cand
        if best_so_far is None:
            continue
        entries.append(BallSumEntry(
            n=n, ball_sum=running, max_derivative=best_so_far[0],
            witness=_word_from_slots(best_so_far[3]),
        ))
    return BallSumSeries(x=x, entries=tuple(entries),
                         deduplicated=dedupe_integer_letters is not None)


def lyapunov_estimate(sys: GroupSystem, x: CirclePoint, n_max: int,
                      node_budget: int = DEFAULT_NODE_BUDGET) -> list[tuple[int, float]]:
    """Finite-n proxy of the expansion exponent: (1/n) log max ball derivative."""
    if n_max < 1:
        raise ExpansionError("n_max must be >= 1")
    series = ball_sum(sys, x, n_max, node_budget)
    return [(e.n, math.log(e.max_derivative) / e.n) for e in series.entries if e.n >= 1]


# ---------------------------------------------------------------------------
# Non-expandable points and fixers


@dataclass(frozen=True)
class NEReport:
    x: CirclePoint
    depth: int
    max_derivative: float
    witness: ReducedWord | None
    verdict: Verdict


def ne_scan(sys: GroupSystem, points: list[CirclePoint], depth: int,
            tol: float = NE_TOL,
            node_budget: int = DEFAULT_NODE_BUDGET) -> list[NEReport]:
    """Classify each point by the largest ball derivative, early-exit on > 1+tol."""
    if depth < 1:
        raise ExpansionError("depth must be >= 1")
    _check_budget(sys.rank, depth, node_budget)
    reports = []
    for x in points:
        max_deriv = 1.0
        witness: tuple[int, ...] | None = None
        expandable = False
        for slots, deriv, _img in _walk_derivatives(sys, x, depth):
            if deriv > max_deriv:
                max_deriv = deriv
                witness = slots
                if deriv > 1.0 + tol:
                    expandable = True
                    break
        reports.append(NEReport(
            x=x, depth=depth, max_derivative=max_deriv,
            witness=_word_from_slots(witness) if witness is not None else None,
            verdict=Verdict.EXPANDABLE if expandable else Verdict.NE_CANDIDATE,
        ))
    return reports


@dataclass(frozen=True)
class FixerRecord:
    word: ReducedWord
    displacement: float
    derivative: float


@dataclass(frozen=True)
class FixerReport:
    x: CirclePoint
    fixers: tuple[FixerRecord, ...]
    star_satisfied_to_depth: int


def find_fixers(sys: GroupSystem, x: CirclePoint, depth: int,
                fix_tol: float = FIX_TOL,
                node_budget: int = DEFAULT_NODE_BUDGET) -> FixerReport:
    """Nonidentity ball words fixing x, with a one-sided-isolation probe."""
    if depth < 1:
        raise ExpansionError("depth must be >= 1")
    _check_budget(sys.rank, depth, node_budget)
    found: list[FixerRecord] = []
    star_depth = 0
    probe = 1e-6
    for slots, deriv, img in _walk_derivatives(sys, x, depth, yield_images=True):
        if not slots:
            continue
        disp = circle_distance(img, x)
        if disp <= fix_tol:
            w = _word_from_slots(slots)
            found.append(FixerRecord(w, disp, deriv))
            if abs(deriv - 1.0) <= 1e-6:
                g = sys.word_diffeo(w)
                moved_right = circle_distance(g.eval(CirclePoint(x.x + probe)),
                                              CirclePoint(x.x + probe)) > 10 * fix_tol
                moved_left = circle_distance(g.eval(CirclePoint(x.x - probe)),
                                             CirclePoint(x.x - probe)) > 10 * fix_tol
                if moved_right or moved_left:
                    star_depth = depth
    found.sort(key=lambda r: r.word.sort_key())
    return FixerReport(x=x, fixers=tuple(found), star_satisfied_to_depth=star_depth)


# ---------------------------------------------------------------------------
# Closest returns


class Side(enum.Enum):
    RIGHT = "right"
    LEFT = "left"


@dataclass(frozen=True)
class ClosestReturn:
    n: int
    f_n: ReducedWord
    x0: CirclePoint
    x_n: CirclePoint
    gap: float
    side: Side


def closest_return(sys: GroupSystem, x0: CirclePoint, n: int,
                   side: Side = Side.RIGHT, fix_tol: float = FIX_TOL,
                   node_budget: int = DEFAULT_NODE_BUDGET) -> ClosestReturn:
    """The ball image of x0 nearest to it on the chosen side, fixers excluded."""
    _check_budget(sys.rank, n, node_budget)
    best: tuple[float, int, str, tuple[int, ...], float] | None = None
    for slots, _deriv, img in _walk_derivatives(sys, x0, n, yield_images=True):
        if circle_distance(img, x0) <= fix_tol:
            continue
        if side is Side.RIGHT:
            gap = signed_gap(x0, img)
        else:
            gap = signed_gap(img, x0)
        if best is None or gap < best[0]:
            best = (gap, len(slots), _serialize_slots(slots), slots, img)
        elif gap == best[0]:
            serial = _serialize_slots(slots)
            if (len(slots), serial) < (best[1], best[2]):
                best = (gap, len(slots), serial, slots, img)
    if best is None:
        raise NoReturn(f"all ball images of {x0.x} coincide with it up to {fix_tol}")
    return ClosestReturn(
        n=n, f_n=_word_from_slots(best[3]), x0=x0,
        x_n=CirclePoint(best[4]), gap=best[0], side=side,
    )


def rescaled_return_deviation(sys: GroupSystem, cr: ClosestReturn, radius: float,
                              grid: int = 256) -> tuple[float, float]:
    """Deviation of the blown-up return map from the identity on [-1, 1].

    The return word is conjugated by y -> x0 + radius*y; returns the sup of
    |f(y) - y| and |f'(y) - 1| over a uniform grid.
    """
    if radius <= 0.0:
        raise ExpansionError("radius must be positive")
    g = sys.word_diffeo(cr.f_n)
    c0 = 0.0
    c1 = 0.0
    for k in range(grid + 1):
        y = -1.0 + 2.0 * k / grid
        p = CirclePoint(cr.x0.x + radius * y)
        disp = (g.eval(p).x - cr.x0.x + 0.5) % 1.0 - 0.5
        c0 = max(c0, abs(disp / radius - y))
        c1 = max(c1, abs(g.derivative(p) - 1.0))
    return c0, c1


# ---------------------------------------------------------------------------
# Cone geodesics and the growing tree


@dataclass(frozen=True)
class ConeSearchResult:
    word: ReducedWord | None
    best_sum: float
    max_depth: int

    @property
    def found(self) -> bool:
        return self.word is not None


def find_cone_geodesic(sys: GroupSystem, x: CirclePoint, gamma: Letter,
                       target: float = 2.0, max_depth: int = 8,
                       node_budget: int = 2_000_000) -> ConeSearchResult:
    """Best-first search for a cone word whose prefix-derivative sum beats target.

    The sum ranges over the nonempty prefixes (first term = gamma'(x), last
    term = the full word's derivative); the identity term is not counted.
    """
    if target <= 0.0:
        raise ExpansionError("target must be positive")
    g0 = sys.letter_diffeo(gamma)
    d0 = g0.derivative(x)
    start = ((gamma.slot,), g0.eval(x), d0, d0)
    heap: list[tuple[float, int, tuple[int, ...], tuple]] = []
    heapq.heappush(heap, (-(d0 + d0), 1, (gamma.slot,), start))
    best_sum = d0
    visited = 0
    diffeos = [sys.letter_diffeo(l) for l in _letter_slots(sys.rank)]
    while heap:
        _, _, _, (slots, point, deriv, total) = heapq.heappop(heap)
        visited += 1
        if visited > node_budget:
            break
        best_sum = max(best_sum, total)
        if total > target:
            return ConeSearchResult(_word_from_slots(slots), total, max_depth)
        if len(slots) >= max_depth:
            continue
        banned = _slot_inverse(slots[-1])
        for slot in range(2 * sys.rank):
            if slot == banned:
                continue
            g = diffeos[slot]
            nd = deriv * g.derivative(point)
            child = (slots + (slot,), g.eval(point), nd, total + nd)
            heapq.heappush(heap, (-(child[3] + nd), len(child[0]), child[0], child))
    return ConeSearchResult(None, best_sum, max_depth)


@dataclass(frozen=True)
class FamilyMember:
    region: Arc
    letter: Letter
    word: ReducedWord


def _cone_word_sum(sys: GroupSystem, w: ReducedWord, y: CirclePoint) -> float:
    """Sum of prefix derivatives at y over nonempty prefixes of w."""
    total = 0.0
    deriv = 1.0
    point = y
    for letter in w.letters:
        g = sys.letter_diffeo(letter)
        deriv *= g.derivative(point)
        point = g.eval(point)
        total += deriv
    return total


def build_cone_family(sys: GroupSystem, resolution: float = 1e-3,
                      target: float = 2.0, max_depth: int = 8) -> tuple[FamilyMember, ...]:
    """A finite cover: per letter, cone words with sum > target on their region.

    Samples the circle at the given resolution, searches a cone word per
    sample, and merges consecutive samples sharing a word into one region
    (padded by one step so the regions overlap).  Raises FamilyIncomplete at
    the first sample where no cone word reaches the target.
    """
    steps = max(8, int(round(1.0 / resolution)))
    h = 1.0 / steps
    members: list[FamilyMember] = []
    for letter in _letter_slots(sys.rank):
        run_start = None
        run_word = None
        prev_k = None

        def flush(run_start, prev_k, run_word):
            length = min((prev_k - run_start + 2) * h, 1.0)
            region = Arc(CirclePoint(run_start * h - h), length)
            members.append(FamilyMember(region, letter, run_word))

        for k in range(steps):
            y = CirclePoint(k * h)
            # iterative deepening per sample: the member count of a growing
            # tree scales with the family word lengths, so always look for a
            # strictly shorter word before keeping the current run going
            keep = run_word is not None and _cone_word_sum(sys, run_word, y) > target
            limit = len(run_word.letters) - 1 if keep else max_depth
            shorter = None
            for depth in range(1, limit + 1):
                r = find_cone_geodesic(sys, y, letter, target, depth)
                if r.found:
                    shorter = r.word
                    break
            if shorter is None:
                if keep:
                    prev_k = k
                    continue
                raise FamilyIncomplete(y, letter)
            if run_word is not None:
                flush(run_start, prev_k, run_word)
            run_word = shorter
            run_start = k
            prev_k = k
        if run_word is not None:
            flush(run_start, prev_k, run_word)
    return tuple(members)


class GrowingTree:
    """Level-m doubling tree: member words, their direction letters, and the
    derivative sum at the base point.  Members are stored as slot tuples;
    ``members``/``direction`` materialize word objects on demand."""

    def __init__(self, level: int, member_slots: tuple[tuple[int, ...], ...],
                 direction_slots: tuple[int, ...], sum_at_x: float):
        self.level = level
        self.member_slots = member_slots
        self.direction_slots = direction_slots
        self.sum_at_x = sum_at_x
        self._materialized: tuple[ReducedWord, ...] | None = None

    @property
    def members(self) -> tuple[ReducedWord, ...]:
        if self._materialized is None:
            self._materialized = tuple(_word_from_slots(s) for s in self.member_slots)
        return self._materialized

    @property
    def direction(self) -> dict[ReducedWord, Letter]:
        return {w: Letter(s // 2, bool(s % 2))
                for w, s in zip(self.members, self.direction_slots)}

    def __repr__(self) -> str:
        return (f"GrowingTree(level={self.level}, members={len(self.member_slots)}, "
                f"sum_at_x={self.sum_at_x:.6g})")


def grow_tree(sys: GroupSystem, x: CirclePoint, fam: tuple[FamilyMember, ...],
              m: int, target: float = 2.0,
              member_budget: int = 2_000_000) -> GrowingTree:
    """Iterate the doubling construction m times from the identity.

    Each member g with direction letter gamma picks a family word in the cone
    of gamma valid at g(x) (shortest first, re-verified pointwise) and is
    replaced by all its prefixes; direction letters of the new members avoid
    both the cancelling letter and the next letter of the family word, which
    keeps the direction cones pairwise disjoint and member-free.  The
    derivative sum at x at least doubles per level.
    """
    if m < 0:
        raise ExpansionError("m must be >= 0")
    if not sys.is_mobius:
        return _grow_tree_generic(sys, x, fam, m, target, member_budget)
    rows = _mobius_rows(sys)
    n_slots = 2 * sys.rank
    pool: dict[int, list[tuple[tuple[int, ...], FamilyMember]]] = {}
    for member in fam:
        slots = tuple(l.slot for l in member.word.letters)
        pool.setdefault(slots[0], []).append((slots, member))
    for cand in pool.values():
        cand.sort(key=lambda item: (len(item[0]), item[0]))

    def word_sum(slots: tuple[int, ...], wx: float, wy: float) -> float:
        total = 0.0
        for s in slots:
            a, b, c, d = rows[s]
            wx, wy = a * wx + b * wy, c * wx + d * wy
            total += 1.0 / (wx * wx + wy * wy)
        return total

    memo: dict[tuple[int, int], tuple[int, ...]] = {}

    def family_slots_at(wx: float, wy: float, norm2: float, gamma_slot: int) -> tuple[int, ...]:
        # quantized memo of the last valid choice near this point
        yq = int(((math.atan2(wy, wx) / math.pi) % 1.0) * 16384.0)
        key = (yq, gamma_slot)
        cached = memo.get(key)
        if cached is not None and word_sum(cached, wx / norm2, wy / norm2) > target:
            return cached
        for slots, _member in pool.get(gamma_slot, ()):
            if word_sum(slots, wx / norm2, wy / norm2) > target:
                memo[key] = slots
                return slots
        raise FamilyIncomplete(
            CirclePoint(math.atan2(wy, wx) / math.pi), Letter(gamma_slot // 2, bool(gamma_slot % 2))
        )

    theta = math.pi * x.x
    members: dict[tuple[int, ...], tuple[int, float, float]] = {
        (): (0, math.cos(theta), math.sin(theta))
    }
    for _level in range(m):
        nxt: dict[tuple[int, ...], tuple[int, float, float]] = {}
        for g_slots, (gamma_slot, wx, wy) in members.items():
            norm = math.sqrt(wx * wx + wy * wy)
            fam_slots = family_slots_at(wx, wy, norm, gamma_slot)
            k = len(fam_slots)
            cx, cy = wx, wy
            for j, s in enumerate(fam_slots):
                a, b, c, d = rows[s]
                cx, cy = a * cx + b * cy, c * cx + d * cy
                banned1 = s ^ 1
                banned2 = fam_slots[j + 1] if j + 1 < k else -1
                for dslot in range(n_slots):
                    if dslot != banned1 and dslot != banned2:
                        break
                else:
                    raise ExpansionError("no admissible direction letter")
                nxt[g_slots + fam_slots[: j + 1]] = (dslot, cx, cy)
            if len(nxt) > member_budget:
                raise BudgetExceeded(f"growing tree exceeded {member_budget} members")
        members = nxt
    ordered = sorted(members, key=lambda s: (len(s), s))
    total = math.fsum(
        1.0 / (members[s][1] ** 2 + members[s][2] ** 2) for s in ordered
    )
    return GrowingTree(
        level=m,
        member_slots=tuple(ordered),
        direction_slots=tuple(members[s][0] for s in ordered),
        sum_at_x=total,
    )


def _grow_tree_generic(sys: GroupSystem, x: CirclePoint, fam: tuple[FamilyMember, ...],
                       m: int, target: float, member_budget: int) -> GrowingTree:
    by_slot: dict[int, list[FamilyMember]] = {}
    for member in fam:
        by_slot.setdefault(member.word.letters[0].slot, []).append(member)
    for cand in by_slot.values():
        cand.sort(key=lambda f: (len(f.word.letters),
                                 tuple(l.slot for l in f.word.letters)))

    def family_word_at(y: CirclePoint, gamma_slot: int) -> ReducedWord:
        for f in by_slot.get(gamma_slot, ()):
            if _cone_word_sum(sys, f.word, y) > target:
                return f.word
        raise FamilyIncomplete(y, Letter(gamma_slot // 2, bool(gamma_slot % 2)))

    members: dict[tuple[int, ...], tuple[int, float, CirclePoint]] = {
        (): (0, 1.0, x)
    }
    for _level in range(m):
        nxt: dict[tuple[int, ...], tuple[int, float, CirclePoint]] = {}
        for g_slots, (gamma_slot, deriv_g, y) in members.items():
            fam_word = family_word_at(y, gamma_slot)
            fam_slots = tuple(l.slot for l in fam_word.letters)
            k = len(fam_slots)
            point = y
            deriv = deriv_g
            for j, letter in enumerate(fam_word.letters):
                diff = sys.letter_diffeo(letter)
                deriv *= diff.derivative(point)
                point = diff.eval(point)
                banned1 = letter.slot ^ 1
                banned2 = fam_slots[j + 1] if j + 1 < k else -1
                for dslot in range(2 * sys.rank):
                    if dslot != banned1 and dslot != banned2:
                        break
                else:
                    raise ExpansionError("no admissible direction letter")
                nxt[g_slots + fam_slots[: j + 1]] = (dslot, deriv, point)
            if len(nxt) > member_budget:
                raise BudgetExceeded(f"growing tree exceeded {member_budget} members")
        members = nxt
    ordered = sorted(members, key=lambda s: (len(s), s))
    return GrowingTree(
        level=m,
        member_slots=tuple(ordered),
        direction_slots=tuple(members[s][0] for s in ordered),
        sum_at_x=math.fsum(members[s][1] for s in ordered),
    )


def verify_growing_tree(sys: GroupSystem, x: CirclePoint, tree: GrowingTree,
                        max_word_length: int | None = None) -> bool:
    """Re-derive the defining conditions of a growing tree from scratch.

    Checks membership in the stated ball, reducedness of every member and
    stem, pairwise disjointness of the direction cones (stems pairwise
    prefix-incomparable), that no member lies in any direction cone, and that
    the independently re-evaluated derivative sum reaches 2^level.
    """
    slots_list = list(tree.member_slots)
    if max_word_length is not None:
        if any(len(s) > max_word_length for s in slots_list):
            return False
    stems = []
    for s, dslot in zip(slots_list, tree.direction_slots):
        for u, v in zip(s, s[1:]):
            if u == v ^ 1:
                return False
        if s and dslot == s[-1] ^ 1:
            return False
        stems.append(s + (dslot,))
    stems_sorted = sorted(stems)
    for s1, s2 in zip(stems_sorted, stems_sorted[1:]):
        if s2[: len(s1)] == s1:
            return False
    stem_set = set(stems)
    for s in slots_list:
        # a member lies in a direction cone iff some stem is a strict prefix of it
        for cut in range(1, len(s)):
            if s[:cut] in stem_set:
                return False
    # re-evaluate the derivative sum with shared-prefix reuse
    ordered = sorted(slots_list)
    if sys.is_mobius:
        rows = _mobius_rows(sys)
        theta = math.pi * x.x
        base = (math.cos(theta), math.sin(theta))
        stack: list[tuple[float, float]] = [base]
        prev: tuple[int, ...] = ()
        terms = []
        for s in ordered:
            common = 0
            for a, b in zip(prev, s):
                if a != b:
                    break
                common += 1
            del stack[common + 1:]
            wx, wy = stack[common]
            for slot in s[common:]:
                a, b, c, d = rows[slot]
                wx, wy = a * wx + b * wy, c * wx + d * wy
                stack.append((wx, wy))
            terms.append(1.0 / (wx * wx + wy * wy))
            prev = s
        total = math.fsum(terms)
    else:
        total = math.fsum(
            evaluate_word(sys, _word_from_slots(s), x).derivative for s in ordered
        )
    return total >= 2.0 ** tree.level * (1.0 - 1e-9)


# ---------------------------------------------------------------------------
# Commutator cascade


class _Composition:
    """Lazy composition f after g with chain-rule derivative."""

    __slots__ = ("f", "g")

    def __init__(self, f: CircleDiffeo, g: CircleDiffeo):
        self.f = f
        self.g = g

    def eval(self, p: CirclePoint) -> CirclePoint:
        return self.f.eval(self.g.eval(p))

    def derivative(self, p: CirclePoint) -> float:
        return self.f.derivative(self.g.eval(p)) * self.g.derivative(p)

    def inverse(self) -> "_Composition":
        return _Composition(self.g.inverse(), self.f.inverse())


def _compose(f: CircleDiffeo, g: CircleDiffeo) -> CircleDiffeo:
    if isinstance(f, MobiusTransform) and isinstance(g, MobiusTransform):
        return f.compose(g)
    return _Composition(f, g)


def commutator_cascade(f1: CircleDiffeo, f2: CircleDiffeo, K: int, I: Arc,
                       grid: int = 256) -> list[tuple[int, float, float]]:
    """Distances to the identity along f_{k+2} = [f_k, f_{k+1}], k = 1..K."""
    if K < 2:
        raise ExpansionError("K must be >= 2")
    out = []
    maps: list[CircleDiffeo] = [f1, f2]
    for k in range(1, K + 1):
        if k > 2:
            a, b = maps[k - 3], maps[k - 2]
            maps.append(_compose(_compose(a, b), _compose(a.inverse(), b.inverse())))
        g = maps[k - 1]
        c0 = 0.0
        c1 = 0.0
        for p in I.sample(grid):
            c0 = max(c0, circle_distance(g.eval(p), p))
            d = g.derivative(p)
            if not math.isfinite(d) or d > 1e12:
                raise NumericBlowup(f"derivative {d} at step {k}")
            c1 = max(c1, abs(d - 1.0))
        out.append((k, c0, c1))
    return out


# ---------------------------------------------------------------------------
# Exact integer entry growth


@dataclass(frozen=True)
class EntryGrowthLevel:
    n: int
    bound: int
    max_entry_found: int
    exceeded: bool


def _spectral_norm_2x2(m: tuple[int, int, int, int]) -> float:
    a, b, c, d = m
    t = float(a * a + b * b + c * c + d * d)
    det = float(a * d - b * c)
    disc = max(t * t - 4.0 * det * det, 0.0)
    return math.sqrt((t + math.sqrt(disc)) / 2.0)


def integer_ball_entry_max(letters: tuple[tuple[int, int, int, int], ...],
                           n_max: int, bounds: list[int],
                           prune: bool = True,
                           node_budget: int = DEFAULT_NODE_BUDGET) -> list[EntryGrowthLevel]:
    """Largest |entry| over exact integer products of each length, vs bounds.

    With pruning, a subtree is skipped once its spectral norm times the
    letters' common norm growth can no longer exceed the bound at any
    remaining length; the reported per-level max is then a lower bound, but
    ``exceeded`` flags stay exact.
    """
    if len(bounds) < n_max + 1:
        raise ExpansionError("bounds must cover lengths 0..n_max")
    norm_growth = max(_spectral_norm_2x2(m) for m in letters)
    growth_pow = [norm_growth**j for j in range(n_max + 1)]
    level_max = [0] * (n_max + 1)
    level_max[0] = 1
    visited = 0
    stack: list[tuple[int, int, tuple[int, int, int, int]]] = []
    for slot in range(len(letters) - 1, -1, -1):
        stack.append((1, slot, letters[slot]))
    while stack:
        k, last_slot, mat = stack.pop()
        visited += 1
        if visited > node_budget:
            raise BudgetExceeded(f"entry-growth walk exceeded {node_budget} nodes")
        entry = max(abs(mat[0]), abs(mat[1]), abs(mat[2]), abs(mat[3]))
        if entry > level_max[k]:
            level_max[k] = entry
        if k < n_max:
            if prune:
                norm = _spectral_norm_2x2(mat) * (1.0 + 1e-12)
                if all(norm * growth_pow[l - k] * (1.0 + 1e-9) <= bounds[l]
                       for l in range(k + 1, n_max + 1)):
                    continue
            banned = _slot_inverse(last_slot)
            la, lb, lc, ld = mat
            for slot in range(len(letters) - 1, -1, -1):
                if slot != banned:
                    a, b, c, d = letters[slot]
                    stack.append((k + 1, slot,
                                  (a * la + b * lc, a * lb + b * ld,
                                   c * la + d * lc, c * lb + d * ld)))
    return [EntryGrowthLevel(n=n, bound=bounds[n], max_entry_found=level_max[n],
                             exceeded=level_max[n] > bounds[n])
            for n in range(n_max + 1)]


def integer_word_matrix(letters: tuple[tuple[int, int, int, int], ...],
                        w: ReducedWord) -> tuple[int, int, int, int]:
    """Exact integer matrix of a word (later letters multiply on the left)."""
    m = (1, 0, 0, 1)
    for letter in w.letters:
        a, b, c, d = letters[letter.slot]
        la, lb, lc, ld = m
        m = (a * la + b * lc, a * lb + b * ld, c * la + d * lc, c * lb + d * ld)
    return m
