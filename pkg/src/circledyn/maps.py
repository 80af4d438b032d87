"""Circle diffeomorphisms: projective maps and perturbed rotations.

A real 2x2 matrix acts on the projective line RP^1, identified with R/Z by
x -> the line spanned by (cos(pi x), sin(pi x)).  Derivatives are taken in
the round metric induced by this identification (total circumference 1).
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Protocol, runtime_checkable

from .circle import Arc, CirclePoint, circle_distance

CLASSIFY_TRACE_TOL = 1e-10
IDENTITY_TOL = 1e-10
_DEGENERATE_TOL = 1e-14


class MapError(ValueError):
    """Base class for contract violations on circle maps."""


class DegenerateMatrixError(MapError):
    """Matrix determinant ~ 0; no projective action."""


class DetMinusOneError(MapError):
    """Operation requires determinant +1 but the matrix has determinant -1."""


class IdentityInputError(MapError):
    """Operation undefined for the identity transform."""


class MobiusClass(enum.Enum):
    IDENTITY = "identity"
    HYPERBOLIC = "hyperbolic"
    PARABOLIC = "parabolic"
    ELLIPTIC = "elliptic"


@runtime_checkable
class CircleDiffeo(Protocol):
    """Orientation-compatible circle diffeomorphism with a computable inverse."""

    def eval(self, p: CirclePoint) -> CirclePoint: ...

    def derivative(self, p: CirclePoint) -> float: ...

    def inverse(self) -> "CircleDiffeo": ...


class MobiusTransform:
    """Projective action of a real 2x2 matrix with |det| normalized to 1.

    The stored entries satisfy |ad - bc| = 1 and the canonical sign
    convention: the first entry of (a, b, c, d) exceeding 1e-12 in
    magnitude is positive.  det_sign records the determinant sign.
    """

    __slots__ = ("a", "b", "c", "d", "det_sign")

    def __init__(self, a: float, b: float, c: float, d: float):
        a, b, c, d = float(a), float(b), float(c), float(d)
        det = a * d - b * c
        if abs(det) < _DEGENERATE_TOL:
            raise DegenerateMatrixError(f"matrix [[{a},{b}],[{c},{d}]] has determinant ~ 0")
        scale = 1.0 / math.sqrt(abs(det))
        a, b, c, d = a * scale, b * scale, c * scale, d * scale
        for entry in (a, b, c, d):
            if abs(entry) > 1e-12:
                if entry < 0:
                    a, b, c, d = -a, -b, -c, -d
                break
        self.a, self.b, self.c, self.d = a, b, c, d
        self.det_sign = 1 if det > 0 else -1

    @staticmethod
    def identity() -> "MobiusTransform":
        return MobiusTransform(1.0, 0.0, 0.0, 1.0)

    @staticmethod
    def rotation_by(rho: float) -> "MobiusTransform":
        """Rigid rotation x -> x + rho of the circle R/Z."""
        t = math.pi * rho
        return MobiusTransform(math.cos(t), -math.sin(t), math.sin(t), math.cos(t))

    @staticmethod
    def from_fixed_points(x_attract: float, x_repel: float, multiplier: float) -> "MobiusTransform":
        """Hyperbolic transform with given fixed points and derivative
        `multiplier` (> 1) at the repelling fixed point."""
        if multiplier <= 1.0:
            raise MapError("multiplier must exceed 1")
        if circle_distance(x_attract, x_repel) < 1e-12:
            raise MapError("fixed points must be distinct")
        s = math.sqrt(multiplier)
        t1, t2 = math.pi * x_attract, math.pi * x_repel
        p = ((math.cos(t1), math.sin(t1)), (math.cos(t2), math.sin(t2)))
        det_p = p[0][0] * p[1][1] - p[1][0] * p[0][1]
        # P diag(s, 1/s) P^{-1}
        a = (s * p[0][0] * p[1][1] - p[1][0] * p[0][1] / s) / det_p
        b = (p[1][0] * p[0][0] / s - s * p[0][0] * p[1][0]) / det_p
        c = (s * p[0][1] * p[1][1] - p[1][1] * p[0][1] / s) / det_p
        d = (p[0][0] * p[1][1] / s - s * p[0][1] * p[1][0]) / det_p
        return MobiusTransform(a, b, c, d)

    @property
    def matrix(self) -> tuple[float, float, float, float]:
        return (self.a, self.b, self.c, self.d)

    @property
    def trace(self) -> float:
        return self.a + self.d

    def eval(self, p: CirclePoint) -> CirclePoint:
        theta = math.pi * p.x
        cs, sn = math.cos(theta), math.sin(theta)
        wx = self.a * cs + self.b * sn
        wy = self.c * cs + self.d * sn
        return CirclePoint(math.atan2(wy, wx) / math.pi)

    def derivative(self, p: CirclePoint) -> float:
        theta = math.pi * p.x
        cs, sn = math.cos(theta), math.sin(theta)
        wx = self.a * cs + self.b * sn
        wy = self.c * cs + self.d * sn
        return 1.0 / (wx * wx + wy * wy)

    def inverse(self) -> "MobiusTransform":
        return MobiusTransform(self.d, -self.b, -self.c, self.a)

    def compose(self, other: "MobiusTransform") -> "MobiusTransform":
        """self after other (matrix product self @ other)."""
        return MobiusTransform(
            self.a * other.a + self.b * other.c,
            self.a * other.b + self.b * other.d,
            self.c * other.a + self.d * other.c,
            self.c * other.b + self.d * other.d,
        )

    def is_identity(self, tol: float = IDENTITY_TOL) -> bool:
        return (
            self.det_sign == 1
            and abs(self.b) <= tol
            and abs(self.c) <= tol
            and abs(self.a - self.d) <= tol
        )

    def classify(self) -> MobiusClass:
        if self.det_sign != 1:
            raise DetMinusOneError("trace classification requires determinant +1")
        if self.is_identity():
            return MobiusClass.IDENTITY
        t = abs(self.trace)
        if abs(t - 2.0) <= CLASSIFY_TRACE_TOL:
            return MobiusClass.PARABOLIC
        return MobiusClass.HYPERBOLIC if t > 2.0 else MobiusClass.ELLIPTIC

    def fixed_points(self) -> list[tuple[CirclePoint, float]]:
        """Fixed points with their derivatives, sorted by coordinate.

        Two for hyperbolic, one for parabolic, none for elliptic input.
        """
        if self.det_sign != 1:
            raise DetMinusOneError("fixed-point extraction requires determinant +1")
        if self.is_identity():
            raise IdentityInputError("identity fixes every point")
        tr = self.trace
        disc = tr * tr - 4.0
        if abs(disc) <= CLASSIFY_TRACE_TOL:
            eigs = [tr / 2.0]
        elif disc < 0:
            return []
        else:
            root = math.sqrt(disc)
            eigs = [(tr + root) / 2.0, (tr - root) / 2.0]
        out: list[tuple[CirclePoint, float]] = []
        for lam in eigs:
            vx, vy = self.b, lam - self.a
            if vx * vx + vy * vy < 1e-20:
                vx, vy = lam - self.d, self.c
            if vx * vx + vy * vy < 1e-20:
                vx, vy = 1.0, 0.0
            p = CirclePoint(math.atan2(vy, vx) / math.pi)
            out.append((p, self.derivative(p)))
        out.sort(key=lambda item: item[0].x)
        return out

    def derivative_profile(self) -> tuple[float, float, float]:
        """(alpha, beta, gamma) with g'(x) = 1 / (alpha + beta cos(2 pi x)
        + gamma sin(2 pi x)); alpha^2 - beta^2 - gamma^2 = det^2 = 1."""
        a, b, c, d = self.a, self.b, self.c, self.d
        alpha = 0.5 * (a * a + b * b + c * c + d * d)
        beta = 0.5 * (a * a + c * c - b * b - d * d)
        gamma = a * b + c * d
        return alpha, beta, gamma

    def log_derivative_slope_max(self) -> float:
        """sup_x |d/dx log g'(x)| in closed form: 2 pi sqrt(beta^2+gamma^2)."""
        _, beta, gamma = self.derivative_profile()
        return 2.0 * math.pi * math.hypot(beta, gamma)

    def derivative_range_on_arc(self, arc: Arc) -> tuple[float, float]:
        """Exact (min, max) of the derivative over the closed arc."""
        alpha, beta, gamma = self.derivative_profile()
        radius = math.hypot(beta, gamma)
        if radius == 0.0:
            return 1.0 / alpha, 1.0 / alpha
        # alpha - radius via the determinant identity: the literal
        # subtraction cancels to 0 once alpha is large enough that
        # sqrt(alpha^2 - 1) rounds to alpha
        h_floor = 1.0 / (alpha + radius)
        phi0 = math.atan2(gamma, beta)
        phi_a = 2.0 * math.pi * arc.start.x
        phi_len = 2.0 * math.pi * arc.length

        def h(phi: float) -> float:
            return max(alpha + radius * math.cos(phi - phi0), h_floor)

        values = [h(phi_a), h(phi_a + phi_len)]
        for crit in (phi0, phi0 + math.pi):
            if arc.full or ((crit / (2.0 * math.pi)) - arc.start.x) % 1.0 <= arc.length:
                values.append(h(crit))
        return 1.0 / max(values), 1.0 / min(values)

    def derivative_superlevel_arc(self, threshold: float) -> Arc | None:
        """The arc {x : g'(x) >= threshold}; None when empty."""
        alpha, beta, gamma = self.derivative_profile()
        radius = math.hypot(beta, gamma)
        bound = 1.0 / threshold - alpha
        if radius == 0.0:
            return Arc(CirclePoint(0.0), 1.0) if bound >= 0.0 else None
        u = bound / radius
        if u >= 1.0:
            return Arc(CirclePoint(0.0), 1.0)
        if u <= -1.0:
            return None
        phi0 = math.atan2(gamma, beta)
        half = math.acos(u)  # need cos(phi - phi0) <= u: phi in [phi0+half, phi0+2pi-half]
        start = (phi0 + half) / (2.0 * math.pi)
        length = (2.0 * math.pi - 2.0 * half) / (2.0 * math.pi)
        if length <= 0.0:
            return None
        return Arc(CirclePoint(start), min(length, 1.0))

    def __repr__(self) -> str:
        sign = "+" if self.det_sign > 0 else "-"
        return f"MobiusTransform([[{self.a:.6g}, {self.b:.6g}], [{self.c:.6g}, {self.d:.6g}]], det {sign}1)"

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, MobiusTransform):
            return NotImplemented
        return self.matrix == other.matrix and self.det_sign == other.det_sign

    def __hash__(self) -> int:
        return hash((self.matrix, self.det_sign))


class PerturbedRotation:
    """x -> x + rho + amp * sin(2 pi x) (mod 1); diffeo when |2 pi amp| < 1."""

    __slots__ = ("rho", "amp")

    def __init__(self, rho: float, amp: float):
        if abs(2.0 * math.pi * amp) >= 1.0:
            raise MapError("|2 pi amp| must be < 1 for a diffeomorphism")
        self.rho = float(rho)
        self.amp = float(amp)

    def eval(self, p: CirclePoint) -> CirclePoint:
        return CirclePoint(p.x + self.rho + self.amp * math.sin(2.0 * math.pi * p.x))

    def derivative(self, p: CirclePoint) -> float:
        return 1.0 + 2.0 * math.pi * self.amp * math.cos(2.0 * math.pi * p.x)

    def inverse(self) -> "NumericalInverse":
        return NumericalInverse(self)

    def log_derivative_slope_max(self) -> float:
        k = 2.0 * math.pi * abs(self.amp)
        if k == 0.0:
            return 0.0
        return 2.0 * math.pi * k / math.sqrt(1.0 - k * k)

    def __repr__(self) -> str:
        return f"PerturbedRotation(rho={self.rho:.6g}, amp={self.amp:.6g})"


class NumericalInverse:
    """Inverse of a monotone circle diffeo via Newton iteration on the lift."""

    __slots__ = ("forward",)

    def __init__(self, forward: CircleDiffeo):
        self.forward = forward

    def eval(self, p: CirclePoint) -> CirclePoint:
        x = p.x
        for _ in range(60):
            img = self.forward.eval(CirclePoint(x))
            err = (img.x - p.x + 0.5) % 1.0 - 0.5
            if abs(err) < 1e-15:
                break
            x -= err / self.forward.derivative(CirclePoint(x))
        return CirclePoint(x)

    def derivative(self, p: CirclePoint) -> float:
        return 1.0 / self.forward.derivative(self.eval(p))

    def inverse(self) -> CircleDiffeo:
        return self.forward

    def __repr__(self) -> str:
        return f"NumericalInverse({self.forward!r})"


def map_arc(g: CircleDiffeo, arc: Arc) -> Arc:
    """Image of an arc under a diffeo; reversing maps swap the sweep ends."""
    if arc.full:
        return arc
    img_start = g.eval(arc.start)
    img_end = g.eval(arc.end)
    if getattr(g, "det_sign", 1.0) < 0.0:
        img_start, img_end = img_end, img_start
    length = (img_end.x - img_start.x) % 1.0
    if length == 0.0:
        # Contraction below float resolution: fall back on the local scale.
        length = max(arc.length * g.derivative(arc.midpoint), 5e-324)
    return Arc(img_start, min(length, 1.0))


def map_point_set(g: CircleDiffeo, points: list[CirclePoint]) -> list[CirclePoint]:
    return [g.eval(p) for p in points]


def rotation_number_estimate(g: CircleDiffeo, iterations: int = 10**6) -> float:
    """Birkhoff displacement average along the orbit of 0; value in [0, 1).

    Error O(1/iterations) for circle homeomorphisms.
    """
    if iterations < 1:
        raise MapError("iterations must be >= 1")
    total = 0.0
    x = 0.0
    ev = g.eval
    for _ in range(iterations):
        y = ev(CirclePoint(x)).x
        total += (y - x) % 1.0
        x = y
    return (total / iterations) % 1.0


def diffeo_c0_distance(g: CircleDiffeo, arc: Arc, grid: int = 256) -> float:
    """sup |g(x) - x| over a grid on the arc (circle distance)."""
    return max(circle_distance(g.eval(p), p) for p in arc.sample(grid))


def diffeo_c1_distance(g: CircleDiffeo, arc: Arc, grid: int = 256) -> float:
    """sup |g'(x) - 1| over a grid on the arc."""
    return max(abs(g.derivative(p) - 1.0) for p in arc.sample(grid))


def mobius_c0_identity_distance(g: MobiusTransform, arc: Arc, grid: int = 256) -> float:
    return diffeo_c0_distance(g, arc, grid)


def arc_image_length(g: CircleDiffeo, arc: Arc) -> float:
    return map_arc(g, arc).length
