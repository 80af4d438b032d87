"""Built-in example groups used by the test suite and the CLI.

Letters are ordered a, A, b, B, ... (generator, then its inverse).
"""

from __future__ import annotations

import math

from .circle import Arc, CirclePoint
from .maps import MobiusTransform
from .words import GroupSystem, Letter

SQRT2 = math.sqrt(2.0)

# Integer letter matrices for the modular-group pair below, in slot order
# a, a^{-1}, b, b^{-1}.  Kept as exact integers for entry-growth scans.
PSL2Z_INTEGER_LETTERS: tuple[tuple[int, int, int, int], ...] = (
    (1, 1, 1, 0),
    (0, 1, 1, -1),
    (1, 0, 1, 1),
    (1, 0, -1, 1),
)


def psl2z() -> GroupSystem:
    """The modular group with generators (1 1; 1 0) and (1 0; 1 1).

    The first generator has determinant -1; its projective action is still a
    circle diffeomorphism, but trace classification is undefined for it.
    """
    return GroupSystem(
        [MobiusTransform(1, 1, 1, 0), MobiusTransform(1, 0, 1, 1)],
        label="psl2z",
    )


SCHOTTKY_MULTIPLIER = 16.0  # round-metric derivative at each repelling point
SCHOTTKY_SEED_RADIUS = 0.11


def schottky2() -> GroupSystem:
    """Rank-2 Schottky pair: eigenvalue-4 hyperbolics on crossed axes.

    Generator a = diag(4, 1/4) fixes 0 (attracting) and 1/2; generator b is
    its quarter-turn conjugate (17/8 15/8; 15/8 17/8) fixing 1/4 and 3/4.
    Each letter maps the three seed arcs away from its repelling point
    strictly inside the seed arc around its attracting point (worst image
    edge lands at distance 0.042 < 0.11), so the pair plays ping-pong and
    the limit set is a Cantor set.
    """
    a = MobiusTransform(4.0, 0.0, 0.0, 0.25)
    b = MobiusTransform(17.0 / 8.0, 15.0 / 8.0, 15.0 / 8.0, 17.0 / 8.0)
    return GroupSystem([a, b], label="schottky2")


def schottky2_seed_arcs() -> tuple[tuple[Arc, Letter], ...]:
    """Seed arcs paired with the letter contracting into each, slot order."""
    r = SCHOTTKY_SEED_RADIUS
    centers = {0: 0.0, 1: 0.5, 2: 0.25, 3: 0.75}  # slot -> attracting point
    out = []
    for slot in range(4):
        letter = Letter(slot // 2, bool(slot % 2))
        c = centers[slot]
        out.append((Arc(CirclePoint(c - r), 2.0 * r), letter))
    return tuple(out)


def punctured_torus() -> GroupSystem:
    """Two hyperbolic maps whose commutator is parabolic (trace exactly -2).

    a = diag(1+sqrt2, sqrt2-1), b = (sqrt2 1; 1 sqrt2); both have multiplier
    3+2*sqrt2.  The four fixed points 0, 1/4, 1/2, 3/4 alternate and the
    commutator word "B A b a" fixes 1/8 with derivative 1.
    """
    a = MobiusTransform(1.0 + SQRT2, 0.0, 0.0, SQRT2 - 1.0)
    b = MobiusTransform(SQRT2, 1.0, 1.0, SQRT2)
    return GroupSystem([a, b], label="punctured_torus")


def punctured_torus_vertices() -> tuple[CirclePoint, ...]:
    """Fixed points of the four parabolic corner words: the odd eighths."""
    return tuple(CirclePoint(k / 8.0) for k in (1, 3, 5, 7))


def crossed4() -> GroupSystem:
    """Multiplier-4 pair on the same crossed axes; non-discrete, acts minimally.

    With multiplier 4 the ping-pong inequalities are unsatisfiable (the
    required seed radius exceeds the available quarter-circle), the commutator
    is elliptic, and cone sums grow at every point — the configuration used to
    exercise the growing-tree construction.
    """
    a = MobiusTransform(2.0, 0.0, 0.0, 0.5)
    b = MobiusTransform(1.25, 0.75, 0.75, 1.25)
    return GroupSystem([a, b], label="crossed4")


def rotation_group() -> GroupSystem:
    """Two rigid irrational rotations; every word has derivative 1."""
    a = MobiusTransform.rotation_by((math.sqrt(5.0) - 1.0) / 2.0)
    b = MobiusTransform.rotation_by(SQRT2 - 1.0)
    return GroupSystem([a, b], label="rotation_group")


BUILTIN_GROUPS = {
    "psl2z": psl2z,
    "schottky2": schottky2,
    "punctured_torus": punctured_torus,
    "crossed4": crossed4,
    "rotation_group": rotation_group,
}


def builtin_group(name: str) -> GroupSystem:
    try:
        factory = BUILTIN_GROUPS[name]
    except KeyError:
        raise KeyError(
            f"unknown builtin group {name!r}; available: {', '.join(sorted(BUILTIN_GROUPS))}"
        ) from None
    return factory()


def builtin_seed_arcs(name: str) -> tuple[tuple[Arc, Letter], ...]:
    """Ping-pong seed arcs for builtins that have them."""
    if name == "schottky2":
        return schottky2_seed_arcs()
    raise KeyError(f"builtin {name!r} has no seed-arc system")
