"""Cantor minimal sets of ping-pong groups.

A rank-r ping-pong (Schottky-style) system is described by one seed arc per
letter, each letter mapping the other 2r-1 seeds strictly into its own seed.
Iterating that contraction yields a nested family of arc covers whose
intersection is the minimal Cantor set of the action.  Everything here works
with those covers — the Cantor set itself is never materialised; membership
means containment in the deepest cover at hand, with the level recorded.

Provided on top of the covers:

* total cover length as an upper bound for the Lebesgue measure of the
  Cantor set (it decays geometrically for genuine ping-pong input);
* stabilizers of gaps (connected components of the complement), which are
  cyclic for these actions;
* the finite classification of gap orbits: every gap, expanded repeatedly
  by locally expanding group elements, reaches one of finitely many
  representative gaps;
* convergent derivative sums over balls of group elements based at gap
  interior points.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import IO, Iterable, Sequence

from .circle import (
    Arc,
    ArcSet,
    CirclePoint,
    OverlapError,
    arc_between,
    circle_distance,
)
from .expansion import ball_sum, find_fixers
from .maps import CircleDiffeo
from .words import GroupSystem, Letter, ReducedWord, ball_enumerate

#: Minimum expansion factor exp(lambda) demanded of a covering expander.
DEFAULT_LAMBDA = math.log(2.0) / 4.0
#: Endpoint displacement below which a word counts as stabilizing a gap.
#: A stabilizer displaces an endpoint of a level-n gap by roughly its own
#: multiplier times the cover's convergence error (3e-3 at level 6 for the
#: built-in pair, shrinking ~7x per level) while every non-stabilizing short
#: word displaces one endpoint macroscopically (>= 0.2 there), so 1e-2
#: separates the two from level 6 on.
STABILIZER_FIX_TOL = 1e-2
#: Overlap slack when assembling covers; deep true gaps can be O(1e-14),
#: arithmetic noise is O(1e-15), so 1e-13 separates the two.
ARC_BUILD_TOL = 1e-13


class MinimalError(RuntimeError):
    """Contract violation in a minimal-set computation."""


class NotSchottky(MinimalError):
    """The seed arcs fail the ping-pong contraction test."""

    def __init__(self, letter: Letter, arc: Arc, message: str):
        super().__init__(f"letter {letter.to_char()!r} on arc "
                         f"[{arc.start.x:.6f}, +{arc.length:.6f}]: {message}")
        self.letter = letter
        self.arc = arc


class NoProgress(MinimalError):
    """A gap stopped growing before reaching a representative."""

    def __init__(self, gap: "Gap", steps: int, message: str):
        super().__init__(f"gap at [{gap.arc.start.x:.9f}, +{gap.arc.length:.3e}] "
                         f"after {steps} steps: {message}")
        self.gap = gap
        self.steps = steps


@dataclass(frozen=True)
class NotFound:
    """Diagnostics when no word in the searched ball stabilizes a gap."""

    best_word: ReducedWord | None
    best_displacement: float
    max_len: int


@dataclass(frozen=True)
class CantorCover:
    """One level of the nested arc family shrinking onto the minimal set."""

    level: int
    arcs: ArcSet
    total_length: float
    group: str


@dataclass(frozen=True)
class Gap:
    """A connected component of the complement of a cover."""

    arc: Arc
    stabilizer_generator: ReducedWord | None = None
    orbit_class: int | None = None


# ---------------------------------------------------------------------------
# Arc images under circle diffeomorphisms


def map_orientation(f: CircleDiffeo) -> int:
    """+1 when f preserves the cyclic order of the circle, -1 otherwise."""
    a = f.eval(CirclePoint(0.0)).x
    b = f.eval(CirclePoint(1.0 / 3.0)).x
    c = f.eval(CirclePoint(2.0 / 3.0)).x
    return 1 if ((b - a) % 1.0) < ((c - a) % 1.0) else -1


def image_arc(f: CircleDiffeo, arc: Arc, orientation: int | None = None) -> Arc:
    """The arc f(arc); orientation may be passed to skip re-detection."""
    if arc.full:
        return arc
    if orientation is None:
        orientation = map_orientation(f)
    p = f.eval(arc.start)
    q = f.eval(arc.end)
    if p.x == q.x:
        # Contraction below float resolution; use the local scale instead.
        length = max(arc.length * f.derivative(arc.midpoint), 5e-324)
        return Arc(p if orientation > 0 else q, length)
    return arc_between(p, q) if orientation > 0 else arc_between(q, p)


# ---------------------------------------------------------------------------
# Nested covers


def _seed_table(sys: GroupSystem,
                seed_arcs: Sequence[tuple[Arc, Letter]]) -> dict[int, Arc]:
    table: dict[int, Arc] = {}
    for arc, letter in seed_arcs:
        if letter.slot in table:
            raise MinimalError(f"duplicate seed arc for letter {letter.to_char()!r}")
        table[letter.slot] = arc
    expected = {letter.slot for letter in sys.letters()}
    if set(table) != expected:
        raise MinimalError("need exactly one seed arc per letter of the group")
    return table


def verify_schottky(sys: GroupSystem,
                    seed_arcs: Sequence[tuple[Arc, Letter]],
                    tol: float = 1e-9) -> None:
    """Check the ping-pong condition; raise NotSchottky with the culprit.

    Each letter must map every seed except its inverse's strictly into its
    own seed, and the seeds must be pairwise disjoint.
    """
    seeds = list(seed_arcs)
    table = _seed_table(sys, seeds)
    for i, (arc, letter) in enumerate(seeds):
        for other, other_letter in seeds[i + 1:]:
            if arc.overlaps(other, tol):
                raise NotSchottky(other_letter, other,
                                  f"seed overlaps the seed of {letter.to_char()!r}")
    for arc, letter in seeds:
        f = sys.letter_diffeo(letter)
        orientation = map_orientation(f)
        own = table[letter.slot]
        for source, source_letter in seeds:
            if source_letter == letter.inverse():
                continue
            img = image_arc(f, source, orientation)
            if not own.contains_arc(img, tol):
                raise NotSchottky(
                    letter, source,
                    "image leaves the letter's own seed "
                    f"([{img.start.x:.6f}, +{img.length:.6f}] vs "
                    f"[{own.start.x:.6f}, +{own.length:.6f}])")


def _refine(sys: GroupSystem,
            current: list[tuple[Arc, int]],
            diffeos: dict[int, CircleDiffeo],
            orientations: dict[int, int],
            inverse_slot: dict[int, int],
            workers: int) -> list[tuple[Arc, int]]:
    slots = sorted(diffeos)

    def refine_chunk(chunk: list[tuple[Arc, int]]) -> list[tuple[Arc, int]]:
        out: list[tuple[Arc, int]] = []
        for arc, kind in chunk:
            for slot in slots:
                if slot == inverse_slot[kind]:
                    continue
                out.append((image_arc(diffeos[slot], arc, orientations[slot]), slot))
        return out

    if workers <= 1 or len(current) < 64:
        return refine_chunk(current)
    size = (len(current) + workers - 1) // workers
    chunks = [current[i:i + size] for i in range(0, len(current), size)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        parts = list(pool.map(refine_chunk, chunks))
    return [item for part in parts for item in part]


def schottky_cover(sys: GroupSystem,
                   seed_arcs: Sequence[tuple[Arc, Letter]],
                   level: int,
                   *,
                   workers: int = 1) -> CantorCover:
    """Level-n cover of the minimal Cantor set of a verified ping-pong system.

    Level 0 is the seed system itself; each refinement maps every arc of
    kind t by all letters other than t's inverse, so level n consists of the
    images of the seeds under all admissible (non-backtracking) words of
    length n and its arcs nest inside the level n-1 arcs.
    """
    if level < 0:
        raise MinimalError("cover level must be >= 0")
    seeds = list(seed_arcs)
    verify_schottky(sys, seeds)
    diffeos = {letter.slot: sys.letter_diffeo(letter) for _, letter in seeds}
    orientations = {slot: map_orientation(f) for slot, f in diffeos.items()}
    inverse_slot = {letter.slot: letter.inverse().slot for _, letter in seeds}
    current: list[tuple[Arc, int]] = [(arc, letter.slot) for arc, letter in seeds]
    for _ in range(level):
        current = _refine(sys, current, diffeos, orientations, inverse_slot,
                          workers)
    try:
        arcs = ArcSet.from_arcs((arc for arc, _ in current), tol=ARC_BUILD_TOL)
    except OverlapError as err:  # pragma: no cover - guarded by verify_schottky
        raise MinimalError(f"refined arcs overlap: {err}") from err
    return CantorCover(level=level, arcs=arcs, total_length=arcs.total_length,
                       group=sys.label)


def measure_upper_bound(cover: CantorCover) -> float:
    """Total cover length: an upper bound for the measure of the Cantor set."""
    return cover.arcs.total_length


def membership_level(covers: Sequence[CantorCover], p: CirclePoint) -> int:
    """Deepest provided level whose cover contains p; -1 if outside them all."""
    best = -1
    for cover in sorted(covers, key=lambda c: c.level):
        if cover.arcs.locate(p) is None:
            break
        best = cover.level
    return best


# ---------------------------------------------------------------------------
# Gap stabilizers


def _gap_arc(gap: Gap | Arc) -> Arc:
    return gap.arc if isinstance(gap, Gap) else gap


def gap_stabilizer(sys: GroupSystem,
                   gap: Gap | Arc,
                   max_len: int,
                   *,
                   fix_tol: float = STABILIZER_FIX_TOL) -> ReducedWord | NotFound:
    """Shortest word fixing both gap endpoints to fix_tol, else NotFound.

    The stabilizer of a complement gap in a ping-pong action is cyclic and
    its generator is hyperbolic with fixed points at the gap endpoints; on a
    converged cover the endpoints sit close enough to those fixed points
    that the generator displaces them below fix_tol while every other short
    word moves them macroscopically.
    """
    arc = _gap_arc(gap)
    start, end = arc.start, arc.end
    best: ReducedWord | None = None
    best_disp = math.inf
    for word in sorted(ball_enumerate(sys.rank, max_len),
                       key=ReducedWord.sort_key):
        if word.is_identity:
            continue
        t = sys.word_diffeo(word)
        disp = max(circle_distance(t.eval(start), start),
                   circle_distance(t.eval(end), end))
        if disp <= fix_tol:
            return word
        if disp < best_disp:
            best = word
            best_disp = disp
    return NotFound(best_word=best, best_displacement=best_disp, max_len=max_len)


# ---------------------------------------------------------------------------
# Gap-orbit classification


@dataclass(frozen=True)
class Expander:
    """An arc together with a word expanding by at least min_derivative on it."""

    domain: Arc
    word: ReducedWord
    min_derivative: float


@dataclass(frozen=True)
class EscapeNeighborhood:
    """A neighborhood of a non-expandable point with a fixer to escape by.

    Gaps contained in the inner half of the neighborhood are pushed away
    from the center by the fixer (or its inverse) until they leave the full
    radius; the composed first-exit derivative is then at least 2.
    """

    center: CirclePoint
    radius: float
    fixer: ReducedWord


def _arc_min_derivative(t, arc: Arc, samples: int) -> float:
    return min(t.derivative(p) for p in arc.sample(samples))


def build_expanders(sys: GroupSystem,
                    cover: CantorCover,
                    *,
                    lam: float = DEFAULT_LAMBDA,
                    cluster_ratio: float = 0.5,
                    max_len: int = 2,
                    samples: int = 17) -> tuple[Expander, ...]:
    """Arcs covering all small gaps, each with a ball-searched expander.

    The complement gaps whose length is at least cluster_ratio times the
    longest gap separate the cover into clusters; each cluster hull becomes
    a domain, and the shortest word whose sampled minimum derivative on the
    domain reaches exp(lam) (largest such derivative among ties) is its
    expander.  Every gap shorter than the separating ones lies inside a
    cluster hull, so it can always be grown.
    """
    gaps = list(cover.arcs.complement())
    if not gaps:
        return ()
    longest = max(g.length for g in gaps)
    big = [g for g in gaps if g.length >= cluster_ratio * longest]
    domains = [arc_between(big[i].end, big[(i + 1) % len(big)].start)
               for i in range(len(big))]
    threshold = math.exp(lam)
    out: list[Expander] = []
    for domain in domains:
        found_len: int | None = None
        best: tuple[float, ReducedWord] | None = None
        for word in sorted(ball_enumerate(sys.rank, max_len),
                           key=ReducedWord.sort_key):
            if word.is_identity:
                continue
            if found_len is not None and len(word.letters) > found_len:
                break
            t = sys.word_diffeo(word)
            low = _arc_min_derivative(t, domain, samples)
            if low >= threshold:
                if found_len is None:
                    found_len = len(word.letters)
                    best = (low, word)
                elif low > best[0]:
                    best = (low, word)
        if best is None:
            raise MinimalError(
                f"no word of length <= {max_len} expands by exp({lam:.4f}) on "
                f"[{domain.start.x:.6f}, +{domain.length:.6f}]")
        out.append(Expander(domain=domain, word=best[1], min_derivative=best[0]))
    return tuple(out)


def build_escape_neighborhoods(sys: GroupSystem,
                               ne_points: Sequence[CirclePoint],
                               *,
                               fixer_depth: int = 4,
                               fix_tol: float = 1e-9,
                               default_radius: float = 0.05,
                               ) -> tuple[EscapeNeighborhood, ...]:
    """One escape neighborhood per non-expandable point.

    The radius is half the distance to the nearest other point in the list
    (default_radius for a single point); the fixer is the shortest
    nonidentity ball word fixing the point.
    """
    points = list(ne_points)
    out: list[EscapeNeighborhood] = []
    for p in points:
        distances = [circle_distance(p, q) for q in points
                     if circle_distance(p, q) > fix_tol]
        radius = min(distances) / 2.0 if distances else default_radius
        report = find_fixers(sys, p, fixer_depth, fix_tol=fix_tol)
        words = sorted((rec.word for rec in report.fixers
                        if not rec.word.is_identity),
                       key=ReducedWord.sort_key)
        if not words:
            raise MinimalError(
                f"no word of length <= {fixer_depth} fixes the point "
                f"x={p.x!r}; it cannot anchor an escape neighborhood")
        out.append(EscapeNeighborhood(center=p, radius=radius, fixer=words[0]))
    return tuple(out)


def escape_exit(sys: GroupSystem,
                neighborhood: EscapeNeighborhood,
                arc: Arc,
                *,
                max_steps: int = 10_000) -> tuple[Arc, int, float]:
    """Push an arc away from the center until it leaves the full radius.

    Returns (image arc, applications used, composed derivative at the
    starting midpoint).  Starting inside the inner half guarantees the exit
    derivative is at least 2 up to small chart distortion, because a
    parabolic escape from distance d to distance D multiplies derivatives
    by about (D/d)^2.
    """
    f = sys.word_diffeo(neighborhood.fixer)
    f_inv = f.inverse()
    center = neighborhood.center
    current = arc
    base = arc.midpoint
    point = base
    deriv = 1.0
    steps = 0
    while circle_distance(current.midpoint, center) <= neighborhood.radius:
        fwd = image_arc(f, current)
        bwd = image_arc(f_inv, current)
        away_fwd = circle_distance(fwd.midpoint, center)
        away_bwd = circle_distance(bwd.midpoint, center)
        step_map = f if away_fwd >= away_bwd else f_inv
        nxt = fwd if away_fwd >= away_bwd else bwd
        if circle_distance(nxt.midpoint, center) <= circle_distance(
                current.midpoint, center):
            raise NoProgress(Gap(arc), steps,
                             "fixer does not move the gap away from the center")
        deriv *= step_map.derivative(point)
        point = step_map.eval(point)
        current = nxt
        steps += 1
        if steps > max_steps:
            raise NoProgress(Gap(arc), steps,
                             "escape did not leave the neighborhood")
    return current, steps, deriv


def _inner_arc(neighborhood: EscapeNeighborhood) -> Arc:
    return Arc(CirclePoint(neighborhood.center.x - neighborhood.radius / 2.0),
               neighborhood.radius)


def classify_gaps(sys: GroupSystem,
                  gaps: Sequence[Gap | Arc],
                  expanders: Sequence[Expander],
                  escapes: Sequence[EscapeNeighborhood] = (),
                  max_steps: int = 60,
                  *,
                  match_tol: float = 1e-3,
                  merge_max_len: int = 3,
                  stabilizer_max_len: int = 6,
                  stabilizer_fix_tol: float = STABILIZER_FIX_TOL,
                  ) -> tuple[int, tuple[Gap, ...]]:
    """Sort gaps into orbit classes by repeated expansion; see classify_gap_orbits."""
    queue = sorted((_gap_arc(g) for g in gaps), key=lambda a: a.start.x)
    exp_maps = [(e.domain, sys.word_diffeo(e.word)) for e in expanders]
    exp_orientations = [map_orientation(t) for _, t in exp_maps]
    inner_arcs = [_inner_arc(e) for e in escapes]

    reps: list[Arc] = []
    for original in queue:
        arc = original
        steps = 0
        while True:
            inside = next((i for i, inner in enumerate(inner_arcs)
                           if inner.contains_arc(arc)), None)
            if inside is not None:
                arc, used, exit_deriv = escape_exit(
                    sys, escapes[inside], arc, max_steps=max_steps - steps)
                steps += used
                if exit_deriv < 2.0:
                    raise NoProgress(Gap(original), steps,
                                     f"first-exit derivative {exit_deriv:.3f} "
                                     "is below 2; neighborhood radii too weak")
                continue
            hit = next((i for i, (dom, _t) in enumerate(exp_maps)
                        if dom.contains_arc(arc)), None)
            if hit is None:
                break
            dom, t = exp_maps[hit]
            grown = image_arc(t, arc, exp_orientations[hit])
            if grown.length <= arc.length:
                raise NoProgress(Gap(original), steps,
                                 "expander failed to grow the gap")
            arc = grown
            steps += 1
            if steps > max_steps:
                raise NoProgress(Gap(original), steps,
                                 "gap still inside an expander domain")
        matched = next((i for i, rep in enumerate(reps)
                        if rep.overlaps(arc, tol=1e-9)
                        or (circle_distance(rep.start, arc.start) < match_tol
                            and circle_distance(rep.end, arc.end) < match_tol)),
                       None)
        if matched is None:
            reps.append(arc)
        elif arc.length > reps[matched].length:
            # Keep the widest variant seen: gaps re-entering from deeper
            # levels are narrower copies of the same component, and the
            # merge step below needs the converged endpoints.
            reps[matched] = arc

    # Merge representatives connected by a short group element.
    parent = list(range(len(reps)))

    def find(i: int) -> int:
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    merge_words = [w for w in sorted(ball_enumerate(sys.rank, merge_max_len),
                                     key=ReducedWord.sort_key)
                   if not w.is_identity]
    for word in merge_words:
        t = sys.word_diffeo(word)
        orientation = map_orientation(t)
        for i, src in enumerate(reps):
            img = image_arc(t, src, orientation)
            for j, dst in enumerate(reps):
                if i == j:
                    continue
                if (circle_distance(img.start, dst.start) < match_tol
                        and circle_distance(img.end, dst.end) < match_tol):
                    ri, rj = find(i), find(j)
                    if ri != rj:
                        parent[max(ri, rj)] = min(ri, rj)

    roots: list[int] = []
    for i in range(len(reps)):
        r = find(i)
        if r not in roots:
            roots.append(r)
    representatives: list[Gap] = []
    for cls, root in enumerate(sorted(roots)):
        stab = gap_stabilizer(sys, reps[root], stabilizer_max_len,
                              fix_tol=stabilizer_fix_tol)
        representatives.append(Gap(
            arc=reps[root],
            stabilizer_generator=stab if isinstance(stab, ReducedWord) else None,
            orbit_class=cls))
    return len(representatives), tuple(representatives)


def classify_gap_orbits(sys: GroupSystem,
                        cover: CantorCover,
                        ne_points: Sequence[CirclePoint],
                        max_steps: int = 60,
                        *,
                        lam: float = DEFAULT_LAMBDA,
                        cluster_ratio: float = 0.5,
                        match_tol: float = 1e-3,
                        merge_max_len: int = 3,
                        ) -> tuple[int, tuple[Gap, ...]]:
    """Classify the cover's complement gaps into finitely many orbit classes.

    Neighborhoods of the given non-expandable points get escape fixers
    (first-exit derivative at least 2); the rest of the cover is split into
    cluster hulls with expanding words of derivative at least exp(lam).
    Each gap is grown — escape first, expansion second — until it leaves
    every domain, then matched against the representatives found so far;
    finally representatives connected by a short group element are merged.
    Returns the class count and one representative Gap per class, with its
    orbit class index and (when found) its stabilizer generator.

    Raises NoProgress when a gap stops growing within max_steps — the
    expanders or radii are too weak for the requested cover.
    """
    gaps = list(cover.arcs.complement())
    if not gaps:
        return 0, ()
    expanders = build_expanders(sys, cover, lam=lam, cluster_ratio=cluster_ratio)
    escapes = (build_escape_neighborhoods(sys, ne_points)
               if ne_points else ())
    return classify_gaps(sys, gaps, expanders, escapes, max_steps,
                         match_tol=match_tol, merge_max_len=merge_max_len)


# ---------------------------------------------------------------------------
# Derivative sums at gap points


@dataclass(frozen=True)
class GapSumBound:
    """Partial sum of g'(x) over the ball, with per-radius increments."""

    total: float
    increments: tuple[float, ...]

    def __float__(self) -> float:
        return self.total


def gap_sum_bound(sys: GroupSystem,
                  x: CirclePoint,
                  gap: Gap | Arc,
                  depth: int,
                  *,
                  node_budget: int = 100_000_000) -> GapSumBound:
    """Sum of derivatives g'(x) over all ball words of length <= depth.

    x must lie in the gap's interior; the stabilizer's fixed points are the
    gap endpoints, so interior points automatically avoid them.  For a
    point in a genuine complement gap the increments (sums over words of a
    fixed length) decay geometrically, witnessing a convergent total.
    """
    arc = _gap_arc(gap)
    if not arc.contains_interior(x, tol=1e-12):
        raise MinimalError("base point must lie in the gap interior")
    series = ball_sum(sys, x, depth, node_budget=node_budget)
    sums = series.sums()
    increments = [sums[0]]
    increments.extend(sums[k] - sums[k - 1] for k in range(1, len(sums)))
    return GapSumBound(total=sums[-1], increments=tuple(increments))


# ---------------------------------------------------------------------------
# Serialization


def cover_csv_rows(cover: CantorCover) -> list[tuple[int, float, float]]:
    """(level, arc_start, arc_length) rows for one cover."""
    return [(cover.level, arc.start.x, arc.length) for arc in cover.arcs]


def write_cover_csv(covers: Iterable[CantorCover], out: IO[str]) -> None:
    """CSV of (level, arc_start, arc_length) for a sequence of covers."""
    out.write("level,arc_start,arc_length\n")
    for cover in covers:
        for level, start, length in cover_csv_rows(cover):
            out.write(f"{level},{start!r},{length!r}\n")


def classification_to_json(class_count: int,
                           representatives: Sequence[Gap]) -> str:
    """JSON document for a gap-orbit classification."""
    payload = {
        "class_count": class_count,
        "classes": [
            {
                "orbit_class": gap.orbit_class,
                "arc_start": gap.arc.start.x,
                "arc_length": gap.arc.length,
                "stabilizer_word": (gap.stabilizer_generator.serialize()
                                    if gap.stabilizer_generator is not None
                                    else None),
            }
            for gap in representatives
        ],
    }
    return json.dumps(payload, indent=2, sort_keys=True)
