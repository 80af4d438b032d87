"""Points, arcs and arc systems on the circle R/Z.

The circle has circumference 1; a point is represented by its coordinate
x in [0, 1).  Arcs are half-open [start, start + length) and may wrap
through 0.  Endpoint comparisons use ENDPOINT_TOL unless stated otherwise.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Iterator, Sequence

ENDPOINT_TOL = 1e-12


class CircleError(ValueError):
    """Base class for contract violations in circle geometry."""


class OverlapError(CircleError):
    """Two arcs overlap beyond tolerance.  Carries the offending member."""

    def __init__(self, member: "Arc", message: str = "arc overlaps an existing member"):
        super().__init__(message)
        self.member = member


def _frac(x: float) -> float:
    """Reduce to [0, 1); exact for inputs already in range."""
    y = x % 1.0
    return y if y < 1.0 else 0.0


@dataclass(frozen=True, order=True)
class CirclePoint:
    """A point on R/Z, stored as its representative in [0, 1)."""

    x: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "x", _frac(float(self.x)))

    def shifted(self, delta: float) -> "CirclePoint":
        return CirclePoint(self.x + delta)


def circle_distance(p: CirclePoint | float, q: CirclePoint | float) -> float:
    """Arc-length distance on R/Z, in [0, 1/2]."""
    px = p.x if isinstance(p, CirclePoint) else _frac(float(p))
    qx = q.x if isinstance(q, CirclePoint) else _frac(float(q))
    d = (px - qx) % 1.0
    return d if d <= 0.5 else 1.0 - d


def signed_gap(origin: CirclePoint | float, target: CirclePoint | float) -> float:
    """Length of the positively-oriented arc from origin to target, in [0, 1)."""
    ox = origin.x if isinstance(origin, CirclePoint) else _frac(float(origin))
    tx = target.x if isinstance(target, CirclePoint) else _frac(float(target))
    return (tx - ox) % 1.0


@dataclass(frozen=True)
class Arc:
    """Half-open arc [start, start + length) with length in (0, 1]."""

    start: CirclePoint
    length: float

    def __post_init__(self) -> None:
        if not isinstance(self.start, CirclePoint):
            object.__setattr__(self, "start", CirclePoint(float(self.start)))
        length = float(self.length)
        if not 0.0 < length <= 1.0:
            raise CircleError(f"arc length must lie in (0, 1], got {length}")
        object.__setattr__(self, "length", length)

    @property
    def full(self) -> bool:
        return self.length == 1.0

    @property
    def end(self) -> CirclePoint:
        return CirclePoint(self.start.x + self.length)

    @property
    def midpoint(self) -> CirclePoint:
        return CirclePoint(self.start.x + 0.5 * self.length)

    def contains(self, p: CirclePoint | float, tol: float = ENDPOINT_TOL) -> bool:
        """Membership with endpoints included when within tol."""
        if self.full:
            return True
        px = p.x if isinstance(p, CirclePoint) else _frac(float(p))
        d = (px - self.start.x) % 1.0
        return d <= self.length + tol or d >= 1.0 - tol

    def contains_interior(self, p: CirclePoint | float, tol: float = ENDPOINT_TOL) -> bool:
        """Membership at distance > tol from both endpoints."""
        if self.full:
            return True
        px = p.x if isinstance(p, CirclePoint) else _frac(float(p))
        d = (px - self.start.x) % 1.0
        return tol < d < self.length - tol

    def contains_arc(self, other: "Arc", tol: float = ENDPOINT_TOL) -> bool:
        if self.full:
            return True
        if other.full:
            return False
        d = (other.start.x - self.start.x) % 1.0
        if d >= 1.0 - tol:
            d = 0.0
        return d <= self.length + tol and d + other.length <= self.length + tol

    def overlaps(self, other: "Arc", tol: float = ENDPOINT_TOL) -> bool:
        """True when the interiors intersect in more than a tol-sliver."""
        if self.full or other.full:
            return True
        d1 = (other.start.x - self.start.x) % 1.0
        d2 = (self.start.x - other.start.x) % 1.0
        return d1 < self.length - tol or d2 < other.length - tol

    def sample(self, n: int, *, interior: bool = False) -> list[CirclePoint]:
        """n points on the arc; uniform, inclusive of endpoints unless interior."""
        if n < 2:
            return [self.midpoint]
        if interior:
            step = self.length / (n + 1)
            return [CirclePoint(self.start.x + (i + 1) * step) for i in range(n)]
        step = self.length / (n - 1)
        return [CirclePoint(self.start.x + i * step) for i in range(n)]


def arc_between(a: CirclePoint | float, b: CirclePoint | float) -> Arc:
    """The positively-oriented arc [a, b); full circle when a == b."""
    ax = a.x if isinstance(a, CirclePoint) else _frac(float(a))
    bx = b.x if isinstance(b, CirclePoint) else _frac(float(b))
    length = (bx - ax) % 1.0
    if length == 0.0:
        length = 1.0
    return Arc(CirclePoint(ax), length)


@dataclass(frozen=True)
class ArcSet:
    """Pairwise interior-disjoint arcs, kept sorted by start coordinate."""

    arcs: tuple[Arc, ...] = field(default_factory=tuple)

    @staticmethod
    def from_arcs(arcs: Iterable[Arc], tol: float = ENDPOINT_TOL) -> "ArcSet":
        ordered = sorted(arcs, key=lambda a: a.start.x)
        for i, a in enumerate(ordered):
            b = ordered[(i + 1) % len(ordered)]
            if b is a:
                continue
            if a.overlaps(b, tol):
                raise OverlapError(b)
        return ArcSet(tuple(ordered))

    def __len__(self) -> int:
        return len(self.arcs)

    def __iter__(self) -> Iterator[Arc]:
        return iter(self.arcs)

    @property
    def total_length(self) -> float:
        return sum(a.length for a in self.arcs)

    def insert_disjoint(self, arc: Arc, tol: float = ENDPOINT_TOL) -> "ArcSet":
        """New set with arc added; OverlapError (carrying the member) otherwise."""
        for member in self.arcs:
            if member.overlaps(arc, tol):
                raise OverlapError(member)
        return ArcSet(tuple(sorted(self.arcs + (arc,), key=lambda a: a.start.x)))

    def locate(self, p: CirclePoint | float, tol: float = ENDPOINT_TOL) -> Arc | None:
        for member in self.arcs:
            if member.contains(p, tol):
                return member
        return None

    def covers(self, arc: Arc, tol: float = ENDPOINT_TOL) -> bool:
        return any(member.contains_arc(arc, tol) for member in self.arcs)

    def complement(self, tol: float = ENDPOINT_TOL) -> "ArcSet":
        """The gaps between members; full circle for an empty set."""
        if not self.arcs:
            return ArcSet((Arc(CirclePoint(0.0), 1.0),))
        gaps: list[Arc] = []
        n = len(self.arcs)
        for i, a in enumerate(self.arcs):
            b = self.arcs[(i + 1) % n]
            if n == 1 and a.full:
                return ArcSet(())
            gap_len = (b.start.x - a.end.x) % 1.0
            if n == 1:
                gap_len = (b.start.x - a.end.x) % 1.0 or (1.0 - a.length)
            if gap_len > tol:
                gaps.append(Arc(a.end, gap_len))
        return ArcSet(tuple(gaps))


def merge_cyclic_runs(flags: Sequence[bool]) -> list[tuple[int, int]]:
    """Maximal runs of True in a cyclic sequence as (start_index, run_length)."""
    n = len(flags)
    if n == 0:
        return []
    if all(flags):
        return [(0, n)]
    runs: list[tuple[int, int]] = []
    i = 0
    while i < n:
        if flags[i] and not flags[(i - 1) % n]:
            j = i
            length = 0
            while flags[j % n] and length < n:
                j += 1
                length += 1
            runs.append((i, length))
            i += length
        else:
            i += 1
    return runs
