"""Reduced words over a symmetric generating set and their circle actions.

Words store letters in application order: ``letters[0]`` acts first.  A word
of length n therefore represents the composition
``letters[n-1] o ... o letters[0]``.  Serialized form is space-separated
single characters applied left to right, lowercase for a generator and
uppercase for its inverse (``"a B a"`` applies a, then b^{-1}, then a).
"""

from __future__ import annotations

import string
from dataclasses import dataclass
from typing import Iterator, Sequence

from .circle import CirclePoint
from .maps import CircleDiffeo, MobiusTransform

INVERSE_ROUNDTRIP_TOL = 1e-12
DEFAULT_MATRIX_CACHE_DEPTH = 10


class WordError(ValueError):
    """Malformed word or letter."""


class EmptyBaseError(WordError):
    """Cone membership requires a nonempty base word."""


@dataclass(frozen=True, order=True)
class Letter:
    """One generator or generator-inverse; index < the group's rank."""

    generator_index: int
    inverted: bool = False

    def __post_init__(self):
        if self.generator_index < 0:
            raise WordError(f"negative generator index {self.generator_index}")

    @property
    def slot(self) -> int:
        """Dense index 2*generator_index + inverted, for array lookups."""
        return 2 * self.generator_index + (1 if self.inverted else 0)

    def inverse(self) -> "Letter":
        return Letter(self.generator_index, not self.inverted)

    def cancels(self, other: "Letter") -> bool:
        return self.generator_index == other.generator_index and self.inverted != other.inverted

    def to_char(self) -> str:
        if self.generator_index >= 26:
            raise WordError("single-character serialization supports ranks up to 26")
        ch = string.ascii_lowercase[self.generator_index]
        return ch.upper() if self.inverted else ch

    @staticmethod
    def from_char(ch: str) -> "Letter":
        if len(ch) != 1 or ch.lower() not in string.ascii_lowercase:
            raise WordError(f"invalid letter token {ch!r}")
        return Letter(string.ascii_lowercase.index(ch.lower()), ch.isupper())


def alphabet(rank: int) -> tuple[Letter, ...]:
    """All 2*rank letters in canonical (generator, inverse-flag) order."""
    return tuple(Letter(i, inv) for i in range(rank) for inv in (False, True))


@dataclass(frozen=True)
class ReducedWord:
    """Freely reduced word; ``letters`` in application order."""

    letters: tuple[Letter, ...] = ()

    def __post_init__(self):
        for prev, nxt in zip(self.letters, self.letters[1:]):
            if nxt.cancels(prev):
                raise WordError(f"word not reduced at {prev.to_char()}{nxt.to_char()}")

    @staticmethod
    def identity() -> "ReducedWord":
        return ReducedWord(())

    @staticmethod
    def single(letter: Letter) -> "ReducedWord":
        return ReducedWord((letter,))

    @staticmethod
    def parse(text: str) -> "ReducedWord":
        tokens = text.split()
        return ReducedWord(tuple(Letter.from_char(t) for t in tokens))

    def __len__(self) -> int:
        return len(self.letters)

    @property
    def is_identity(self) -> bool:
        return not self.letters

    @property
    def first_applied(self) -> Letter:
        if not self.letters:
            raise WordError("empty word has no letters")
        return self.letters[0]

    @property
    def last_applied(self) -> Letter:
        if not self.letters:
            raise WordError("empty word has no letters")
        return self.letters[-1]

    def append(self, letter: Letter) -> "ReducedWord":
        """Post-compose by one letter (applied after everything so far)."""
        if self.letters and letter.cancels(self.letters[-1]):
            return ReducedWord(self.letters[:-1])
        return ReducedWord(self.letters + (letter,))

    def inverse(self) -> "ReducedWord":
        return ReducedWord(tuple(l.inverse() for l in reversed(self.letters)))

    def serialize(self) -> str:
        return " ".join(l.to_char() for l in self.letters)

    def sort_key(self) -> tuple[int, str]:
        """Deterministic tie-break order: shorter first, then serialized text."""
        return (len(self.letters), self.serialize())

    def __repr__(self) -> str:
        return f"ReducedWord({self.serialize()!r})" if self.letters else "ReducedWord(id)"


def word_concat(g: ReducedWord, h: ReducedWord) -> ReducedWord:
    """Reduced form of the product g.h  (h applied first)."""
    left = list(h.letters)
    right = list(g.letters)
    while left and right and right[0].cancels(left[-1]):
        left.pop()
        right.pop(0)
    return ReducedWord(tuple(left) + tuple(right))


def ball_enumerate(rank: int, n: int) -> Iterator[ReducedWord]:
    """Every reduced word of length <= n exactly once, identity included.

    Depth-first; a node's children append any letter not cancelling its last
    one, so the count at rank 2 is 2*3^n - 1.
    """
    if n < 0:
        raise WordError("ball radius must be >= 0")
    letters = alphabet(rank)
    stack: list[tuple[Letter, ...]] = [()]
    while stack:
        word = stack.pop()
        yield ReducedWord(word)
        if len(word) < n:
            last = word[-1] if word else None
            for letter in reversed(letters):
                if last is None or not letter.cancels(last):
                    stack.append(word + (letter,))


def ball_size(rank: int, n: int) -> int:
    if n == 0:
        return 1
    branching = 2 * rank - 1
    return 1 + 2 * rank * sum(branching**k for k in range(n))


def in_cone(g: ReducedWord, base: ReducedWord) -> bool:
    """True iff g extends base without cancellation (g itself excluded)."""
    if base.is_identity:
        raise EmptyBaseError("cone base must be nonempty")
    k = len(base.letters)
    return len(g.letters) > k and g.letters[:k] == base.letters


@dataclass(frozen=True)
class WordEvaluation:
    """Image, chain-rule derivative and prefix-derivative sum of a word at a point.

    ``intermediate_derivative_sum`` is the sum over j = 0..n-1 of the
    derivative of the length-j prefix at the base point; the j = 0 term is 1,
    and the empty word reports 1.
    """

    word: ReducedWord
    base: CirclePoint
    image: CirclePoint
    derivative: float
    intermediate_derivative_sum: float
    intermediate_images: tuple[CirclePoint, ...] | None = None


class GroupSystem:
    """A finitely generated group of circle diffeomorphisms.

    Holds the generators, their verified inverses, and (for projective
    generators) a cache of composed word matrices.
    """

    def __init__(self, generators: Sequence[CircleDiffeo], label: str = "",
                 cache_depth: int = DEFAULT_MATRIX_CACHE_DEPTH):
        if not generators:
            raise WordError("a group system needs at least one generator")
        self.generators = tuple(generators)
        self.rank = len(self.generators)
        self.label = label
        self.cache_depth = cache_depth
        self.inverses = tuple(g.inverse() for g in self.generators)
        self._verify_inverses()
        self._table = tuple(
            item for pair in zip(self.generators, self.inverses) for item in pair
        )
        self.is_mobius = all(isinstance(g, MobiusTransform) for g in self.generators)
        self._matrix_cache: dict[tuple[Letter, ...], MobiusTransform] = {}

    def _verify_inverses(self):
        for gen, inv in zip(self.generators, self.inverses):
            for k in range(5):
                p = CirclePoint(0.137 + 0.2 * k)
                back = inv.eval(gen.eval(p))
                err = abs((back.x - p.x + 0.5) % 1.0 - 0.5)
                if err > INVERSE_ROUNDTRIP_TOL:
                    raise WordError(
                        f"generator inverse round-trip error {err:.3g} at x={p.x}"
                    )

    def letters(self) -> tuple[Letter, ...]:
        return alphabet(self.rank)

    def letter_diffeo(self, letter: Letter) -> CircleDiffeo:
        if letter.generator_index >= self.rank:
            raise WordError(f"letter {letter.to_char()} outside rank {self.rank}")
        return self._table[letter.slot]

    def letter_matrix(self, letter: Letter) -> MobiusTransform:
        g = self.letter_diffeo(letter)
        if not isinstance(g, MobiusTransform):
            raise WordError("letter_matrix requires projective generators")
        return g

    def word_transform(self, w: ReducedWord) -> MobiusTransform:
        """Composed matrix of a word (projective systems only).

        The later-applied letter multiplies on the left; prefixes up to
        ``cache_depth`` letters are memoized.
        """
        return self._word_transform(w.letters)

    def _word_transform(self, letters: tuple[Letter, ...]) -> MobiusTransform:
        if not letters:
            return MobiusTransform.identity()
        cached = self._matrix_cache.get(letters)
        if cached is not None:
            return cached
        result = self.letter_matrix(letters[-1]).compose(self._word_transform(letters[:-1]))
        if len(letters) <= self.cache_depth:
            self._matrix_cache[letters] = result
        return result

    def word_diffeo(self, w: ReducedWord) -> CircleDiffeo:
        if self.is_mobius:
            return self.word_transform(w)
        return ComposedDiffeo(self, w)


class ComposedDiffeo:
    """Functional composition of a word for non-projective generators."""

    __slots__ = ("system", "word")

    def __init__(self, system: GroupSystem, word: ReducedWord):
        self.system = system
        self.word = word

    def eval(self, p: CirclePoint) -> CirclePoint:
        for letter in self.word.letters:
            p = self.system.letter_diffeo(letter).eval(p)
        return p

    def derivative(self, p: CirclePoint) -> float:
        d = 1.0
        for letter in self.word.letters:
            g = self.system.letter_diffeo(letter)
            d *= g.derivative(p)
            p = g.eval(p)
        return d

    def inverse(self) -> "ComposedDiffeo":
        return ComposedDiffeo(self.system, self.word.inverse())

    def __repr__(self) -> str:
        return f"ComposedDiffeo({self.word.serialize()!r})"


def evaluate_word(sys: GroupSystem, w: ReducedWord, x: CirclePoint,
                  keep_images: bool = False) -> WordEvaluation:
    """Apply a word letter by letter, tracking derivative and prefix sums."""
    point = x
    derivative = 1.0
    prefix_sum = 0.0
    images: list[CirclePoint] | None = [x] if keep_images else None
    for letter in w.letters:
        prefix_sum += derivative
        g = sys.letter_diffeo(letter)
        derivative *= g.derivative(point)
        point = g.eval(point)
        if images is not None:
            images.append(point)
    if w.is_identity:
        prefix_sum = 1.0
    return WordEvaluation(
        word=w,
        base=x,
        image=point,
        derivative=derivative,
        intermediate_derivative_sum=prefix_sum,
        intermediate_images=tuple(images) if images is not None else None,
    )
