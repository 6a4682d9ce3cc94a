import logging
import math
import random
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from typing import Iterable, Optional, Sequence

from ccqm.errors import ConfigurationError, DomainError, InconclusiveError

logger = logging.getLogger(__name__)

# A point of the boundary circle: a rational number or None for infinity.
Point = Optional[Fraction]


#####################################################################################
# Matrices
#####################################################################################
@dataclass(frozen=True)
class IntMatrix2:
    """Determinant-one integer matrix, stored up to sign.

    The pair (a, b) is normalized to be lexicographically nonnegative so that
    equal group elements have equal matrices.
    """

    a: int
    b: int
    c: int
    d: int

    def __post_init__(self):
        if self.a * self.d - self.b * self.c != 1:
            raise DomainError(
                f"Determinant of [[{self.a},{self.b}],[{self.c},{self.d}]] is not 1"
            )
        if self.a < 0 or (self.a == 0 and self.b < 0):
            for name in ("a", "b", "c", "d"):
                object.__setattr__(self, name, -getattr(self, name))

    @classmethod
    def identity(cls) -> "IntMatrix2":
        return cls(1, 0, 0, 1)

    @property
    def trace(self) -> int:
        return self.a + self.d

    def __matmul__(self, other: "IntMatrix2") -> "IntMatrix2":
        return IntMatrix2(
            self.a * other.a + self.b * other.c,
            self.a * other.b + self.b * other.d,
            self.c * other.a + self.d * other.c,
            self.c * other.b + self.d * other.d,
        )

    def inverse(self) -> "IntMatrix2":
        return IntMatrix2(self.d, -self.b, -self.c, self.a)

    def power(self, n: int) -> "IntMatrix2":
        if n < 0:
            return self.inverse().power(-n)
        result, base = IntMatrix2.identity(), self
        while n:
            if n & 1:
                result = result @ base
            base = base @ base
            n >>= 1
        return result

    def moebius(self, x: Point) -> Point:
        """Image of a boundary point under x -> (ax + b) / (cx + d)."""
        if x is None:
            return None if self.c == 0 else Fraction(self.a, self.c)
        denominator = self.c * x + self.d
        if denominator == 0:
            return None
        return (self.a * x + self.b) / denominator

    def __str__(self):
        return f"[[{self.a},{self.b}],[{self.c},{self.d}]]"


class ElementType(Enum):
    IDENTITY = "identity"
    ELLIPTIC = "elliptic"
    PARABOLIC = "parabolic"
    HYPERBOLIC = "hyperbolic"


def classify(m: IntMatrix2) -> ElementType:
    if m == IntMatrix2.identity():
        return ElementType.IDENTITY
    trace = abs(m.trace)
    if trace < 2:
        return ElementType.ELLIPTIC
    if trace == 2:
        return ElementType.PARABOLIC
    return ElementType.HYPERBOLIC


#####################################################################################
# Words
#####################################################################################
@dataclass(frozen=True)
class GroupWord:
    """Word in named generators as (generator-id, exponent) syllables."""

    letters: tuple[tuple[str, int], ...] = ()

    @classmethod
    def identity(cls) -> "GroupWord":
        return cls(())

    @classmethod
    def of(cls, *letters: tuple[str, int]) -> "GroupWord":
        return reduce(cls(tuple(letters)))

    @property
    def length(self) -> int:
        return sum(abs(exponent) for _, exponent in self.letters)

    @property
    def generator_ids(self) -> set[str]:
        return {gid for gid, _ in self.letters}

    def is_identity(self) -> bool:
        return not reduce(self).letters

    def __mul__(self, other: "GroupWord") -> "GroupWord":
        return reduce(GroupWord(self.letters + other.letters))

    def inverse(self) -> "GroupWord":
        return GroupWord(tuple((gid, -exp) for gid, exp in reversed(self.letters)))

    def power(self, n: int) -> "GroupWord":
        if n < 0:
            return self.inverse().power(-n)
        return reduce(GroupWord(self.letters * n))

    def __str__(self):
        if not self.letters:
            return "1"
        return " ".join(
            gid if exponent == 1 else f"{gid}^{exponent}"
            for gid, exponent in self.letters
        )


def reduce(w: GroupWord) -> GroupWord:
    stack: list[tuple[str, int]] = []
    for gid, exponent in w.letters:
        if exponent == 0:
            continue
        if stack and stack[-1][0] == gid:
            merged = stack[-1][1] + exponent
            stack.pop()
            if merged:
                stack.append((gid, merged))
        else:
            stack.append((gid, exponent))
    return GroupWord(tuple(stack))


def cyclic_reduce(w: GroupWord) -> GroupWord:
    letters = list(reduce(w).letters)
    while len(letters) >= 2 and letters[0][0] == letters[-1][0]:
        gid, exponent = letters[0][0], letters[0][1] + letters[-1][1]
        middle = letters[1:-1]
        letters = middle if exponent == 0 else [(gid, exponent)] + middle
        letters = list(reduce(GroupWord(tuple(letters))).letters)
    return GroupWord(tuple(letters))


def random_word(
    rng: random.Random, generator_ids: Sequence[str], max_length: int
) -> GroupWord:
    """Uniform length in [0, max_length], then a random freely reduced word."""
    length = rng.randint(0, max_length)
    letters: list[tuple[str, int]] = []
    for _ in range(length):
        while True:
            letter = (rng.choice(generator_ids), rng.choice((1, -1)))
            if not letters or letters[-1] != (letter[0], -letter[1]):
                break
        letters.append(letter)
    return reduce(GroupWord(tuple(letters)))


@dataclass(frozen=True)
class GeneratorSet:
    entries: tuple[tuple[str, IntMatrix2], ...]
    names: tuple[tuple[str, str], ...] = ()

    @classmethod
    def from_dict(
        cls, matrices: dict[str, IntMatrix2], names: dict[str, str] | None = None
    ) -> "GeneratorSet":
        return cls(
            entries=tuple(matrices.items()),
            names=tuple((names or {}).items()),
        )

    @property
    def ids(self) -> tuple[str, ...]:
        return tuple(gid for gid, _ in self.entries)

    def matrix(self, gid: str) -> IntMatrix2:
        for entry_id, matrix in self.entries:
            if entry_id == gid:
                return matrix
        raise ConfigurationError(f"Unknown generator: {gid}")

    def name(self, gid: str) -> str:
        return dict(self.names).get(gid, gid)


def evaluate_word(w: GroupWord, gens: GeneratorSet) -> IntMatrix2:
    result = IntMatrix2.identity()
    for gid, exponent in w.letters:
        result = result @ gens.matrix(gid).power(exponent)
    return result


#####################################################################################
# Exact intervals and fixed points
#####################################################################################
@dataclass(frozen=True)
class RationalInterval:
    lo: Fraction
    hi: Fraction

    def __post_init__(self):
        if self.lo > self.hi:
            raise DomainError(f"Empty interval [{self.lo}, {self.hi}]")

    @classmethod
    def point(cls, value) -> "RationalInterval":
        return cls(Fraction(value), Fraction(value))

    @property
    def width(self) -> Fraction:
        return self.hi - self.lo

    def __contains__(self, x) -> bool:
        return self.lo <= x <= self.hi

    def contains_interval(self, other: "RationalInterval") -> bool:
        return self.lo <= other.lo and other.hi <= self.hi

    def is_disjoint(self, other: "RationalInterval") -> bool:
        return self.hi < other.lo or other.hi < self.lo

    def __add__(self, other: "RationalInterval") -> "RationalInterval":
        return RationalInterval(self.lo + other.lo, self.hi + other.hi)

    def __neg__(self) -> "RationalInterval":
        return RationalInterval(-self.hi, -self.lo)

    def __sub__(self, other: "RationalInterval") -> "RationalInterval":
        return self + (-other)

    def __mul__(self, other: "RationalInterval") -> "RationalInterval":
        products = [
            self.lo * other.lo,
            self.lo * other.hi,
            self.hi * other.lo,
            self.hi * other.hi,
        ]
        return RationalInterval(min(products), max(products))

    def scale(self, factor) -> "RationalInterval":
        return self * RationalInterval.point(factor)

    def distance_from_zero(self) -> Fraction:
        if self.lo > 0:
            return self.lo
        if self.hi < 0:
            return -self.hi
        return Fraction(0)


def sqrt_enclosure(n: int, bits: int) -> RationalInterval:
    """Interval of width 2**-bits around the square root of n >= 0."""
    root = math.isqrt(n * 4**bits)
    if root * root == n * 4**bits:
        return RationalInterval.point(Fraction(root, 2**bits))
    return RationalInterval(Fraction(root, 2**bits), Fraction(root + 1, 2**bits))


def image_interval(m: IntMatrix2, interval: RationalInterval) -> RationalInterval:
    """Image of a finite interval that does not contain the pole of m."""
    if m.c != 0 and Fraction(-m.d, m.c) in interval:
        raise DomainError(f"{m} sends a point of the interval to infinity")
    return RationalInterval(m.moebius(interval.lo), m.moebius(interval.hi))


@dataclass(frozen=True)
class FixedPoints:
    matrix: IntMatrix2
    attracting: RationalInterval
    repelling: RationalInterval
    bits: int

    def refine(self) -> "FixedPoints":
        return fixed_points(self.matrix, bits=self.bits * 2)


def fixed_points(m: IntMatrix2, bits: int = 16) -> FixedPoints:
    """Enclosures of the roots of cx^2 + (d - a)x - b = 0 of a hyperbolic map.

    The attracting root is the one where |cx + d| > 1, which is the root taking
    the square root with the sign of the trace.
    """
    if classify(m) != ElementType.HYPERBOLIC:
        raise DomainError(f"{m} is {classify(m).value}, not hyperbolic")
    sign = 1 if m.trace > 0 else -1
    shift = RationalInterval.point(m.a - m.d)
    while True:
        root = sqrt_enclosure(m.trace * m.trace - 4, bits)
        denominator = Fraction(1, 2 * m.c)
        attracting = (shift + root.scale(sign)).scale(denominator)
        repelling = (shift - root.scale(sign)).scale(denominator)
        if attracting.is_disjoint(repelling):
            return FixedPoints(m, attracting, repelling, bits)
        bits *= 2


#####################################################################################
# Arcs of the boundary circle and ping-pong
#####################################################################################
def _circle_key(x: Point) -> tuple:
    return (1, 0) if x is None else (0, x)


@dataclass(frozen=True)
class Arc:
    """Closed arc from start to end in the increasing direction through infinity."""

    start: Point
    end: Point

    @property
    def wraps(self) -> bool:
        return _circle_key(self.start) > _circle_key(self.end)

    def __contains__(self, x: Point) -> bool:
        key = _circle_key(x)
        if self.wraps:
            return key >= _circle_key(self.start) or key <= _circle_key(self.end)
        return _circle_key(self.start) <= key <= _circle_key(self.end)

    def _position(self, x: Point) -> tuple:
        key = _circle_key(x)
        if self.wraps:
            return (0 if key >= _circle_key(self.start) else 1, key)
        return (0, key)

    def contains_arc(self, other: "Arc") -> bool:
        return (
            other.start in self
            and other.end in self
            and self._position(other.start) <= self._position(other.end)
        )

    def complement(self) -> "Arc":
        """Closure of the complement."""
        return Arc(self.end, self.start)

    def interior_disjoint(self, other: "Arc") -> bool:
        return self.complement().contains_arc(other)

    def image(self, m: IntMatrix2) -> "Arc":
        return Arc(m.moebius(self.start), m.moebius(self.end))

    def __str__(self):
        def fmt(x: Point) -> str:
            return "1/0" if x is None else f"{x.numerator}/{x.denominator}"

        return f"[{fmt(self.start)}, {fmt(self.end)}]"


@dataclass(frozen=True)
class PingPongCertificate:
    words: tuple[GroupWord, GroupWord]
    power: int
    arcs: tuple[Arc, Arc, Arc, Arc]  # attracting/repelling of each word
    radius: Fraction
    valid: bool

    def __str__(self):
        status = "valid" if self.valid else "invalid"
        return (
            f"<{self.words[0]}, {self.words[1]}>^{self.power}: {status} "
            + " ".join(str(arc) for arc in self.arcs)
        )


def _parabolic_arcs(m: IntMatrix2, radius: Fraction) -> tuple[Arc, Arc]:
    if m.c == 0:
        fixed, before, after = None, 1 / radius, -1 / radius
        probe: Point = Fraction(0)
    else:
        fixed = Fraction(m.a - m.d, 2 * m.c)
        before, after, probe = fixed - radius, fixed + radius, fixed + 1
    lower, upper = Arc(before, fixed), Arc(fixed, after)
    # Every other point moves the same way round the circle.
    if m.moebius(probe) in Arc(probe, fixed):
        return lower, upper
    return upper, lower


def _hyperbolic_arcs(
    points: FixedPoints, radius: Fraction
) -> tuple[Arc, Arc]:
    return (
        Arc(points.attracting.lo - radius, points.attracting.hi + radius),
        Arc(points.repelling.lo - radius, points.repelling.hi + radius),
    )


def fixed_locus(m: IntMatrix2) -> tuple:
    """Exact key for the fixed point set of an infinite order map.

    Parabolic maps are keyed by their rational fixed point. Hyperbolic fixed
    points are conjugate quadratic irrationals, keyed by the primitive form of
    cx^2 + (d - a)x - b, so two maps share one fixed point iff they share both.
    """
    kind = classify(m)
    if kind == ElementType.PARABOLIC:
        if m.c == 0:
            return (kind, None)
        return (kind, Fraction(m.a - m.d, 2 * m.c))
    if kind == ElementType.HYPERBOLIC:
        form = (m.c, m.d - m.a, -m.b)
        divisor = math.gcd(*form) * (1 if m.c > 0 else -1)
        return (kind, tuple(x // divisor for x in form))
    raise DomainError(f"{m} is {kind.value}, ping-pong needs an infinite order map")


def _arcs_for(m: IntMatrix2, radius: Fraction, bits: int) -> tuple[Arc, Arc]:
    kind = classify(m)
    if kind == ElementType.PARABOLIC:
        return _parabolic_arcs(m, radius)
    return _hyperbolic_arcs(fixed_points(m, bits=bits), radius)


def _ping_pong_holds(m: IntMatrix2, attracting: Arc, repelling: Arc) -> bool:
    return attracting.contains_arc(
        repelling.complement().image(m)
    ) and repelling.contains_arc(attracting.complement().image(m.inverse()))


def ping_pong_certify(
    w1: GroupWord,
    w2: GroupWord,
    k: int,
    gens: GeneratorSet,
    max_depth: int = 16,
) -> PingPongCertificate:
    """Search radii 1, 1/2, ... 2**-max_depth for four ping-pong arcs.

    The arcs are neighbourhoods of the fixed points of w1 and w2; they may touch
    at their endpoints. Raises DomainError when the fixed points coincide and
    InconclusiveError when no radius separates them.
    """
    if k < 1:
        raise DomainError(f"Ping-pong power must be positive, got {k}")
    m1, m2 = evaluate_word(w1, gens), evaluate_word(w2, gens)
    if fixed_locus(m1) == fixed_locus(m2):
        raise DomainError(f"Fixed points of {w1} and {w2} coincide")
    p1, p2 = m1.power(k), m2.power(k)
    fallback = None
    for depth in range(max_depth + 1):
        radius = Fraction(1, 2**depth)
        arcs = _arcs_for(m1, radius, depth + 16) + _arcs_for(m2, radius, depth + 16)
        if not all(
            arcs[i].interior_disjoint(arcs[j])
            for i in range(4)
            for j in range(i + 1, 4)
        ):
            continue
        valid = _ping_pong_holds(p1, arcs[0], arcs[1]) and _ping_pong_holds(
            p2, arcs[2], arcs[3]
        )
        certificate = PingPongCertificate((w1, w2), k, arcs, radius, valid)
        logger.debug(f"Ping-pong at radius {radius}: {certificate}")
        if valid:
            return certificate
        fallback = fallback or certificate
    if fallback is None:
        raise InconclusiveError(
            f"Fixed points of {w1} and {w2} not separable at depth {max_depth}"
        )
    return fallback


def words_over(
    rng: random.Random, elements: Sequence[GroupWord], max_length: int
) -> GroupWord:
    """Random reduced word in the given elements, expanded to generator letters."""
    ids = [str(index) for index in range(len(elements))]
    pattern = random_word(rng, ids, max_length)
    return expand(pattern, elements)


def expand(pattern: GroupWord, elements: Sequence[GroupWord]) -> GroupWord:
    result = GroupWord.identity()
    for gid, exponent in pattern.letters:
        result = result * elements[int(gid)].power(exponent)
    return result


def all_words_over(
    elements: Sequence[GroupWord], max_length: int
) -> Iterable[GroupWord]:
    """Every reduced word of length at most max_length in the given elements."""
    letters = [(index, sign) for index in range(len(elements)) for sign in (1, -1)]
    stack: list[tuple[tuple[tuple[int, int], ...], GroupWord]] = [
        ((), GroupWord.identity())
    ]
    while stack:
        pattern, word = stack.pop()
        yield word
        if len(pattern) == max_length:
            continue
        for index, sign in reversed(letters):
            if pattern and pattern[-1] == (index, -sign):
                continue
            stack.append(
                (pattern + ((index, sign),), word * elements[index].power(sign))
            )
