import random
from fractions import Fraction

import pytest
import pytest_check as check
from hypothesis import assume, given

from ccqm.constants import DEFAULT_GENERATORS
from ccqm.errors import DomainError
from ccqm.moebius import (
    Arc,
    ElementType,
    GroupWord,
    IntMatrix2,
    RationalInterval,
    all_words_over,
    classify,
    cyclic_reduce,
    evaluate_word,
    expand,
    fixed_locus,
    fixed_points,
    image_interval,
    ping_pong_certify,
    random_word,
    sqrt_enclosure,
)
from ccqm.parser import parse_word
from tests.strategies import words

R = IntMatrix2(1, 1, 0, 1)
L = IntMatrix2(1, 0, 1, 1)


def test_matrix_sign_is_canonical():
    assert IntMatrix2(-1, 0, 0, -1) == IntMatrix2.identity()
    assert IntMatrix2(-2, -1, -1, -1) == IntMatrix2(2, 1, 1, 1)


def test_matrix_determinant_checked():
    with pytest.raises(DomainError):
        IntMatrix2(2, 0, 0, 1)


def test_matrix_power():
    assert R.power(3) == IntMatrix2(1, 3, 0, 1)
    assert R.power(-2) == IntMatrix2(1, -2, 0, 1)
    assert L.power(0) == IntMatrix2.identity()
    assert (R @ L).power(2) == (R @ L) @ (R @ L)


def test_evaluate_family_word():
    m = evaluate_word(parse_word("R^2 L^3 R^4 L^-5"), DEFAULT_GENERATORS)
    assert m == IntMatrix2(-143, 30, -62, 13)
    assert abs(m.trace) == 130
    golden = evaluate_word(parse_word("R L"), DEFAULT_GENERATORS)
    assert golden == IntMatrix2(2, 1, 1, 1)


def test_classify():
    check.equal(classify(IntMatrix2.identity()), ElementType.IDENTITY)
    check.equal(classify(R), ElementType.PARABOLIC)
    check.equal(classify(L.inverse()), ElementType.PARABOLIC)
    check.equal(classify(R @ L), ElementType.HYPERBOLIC)
    check.equal(classify(IntMatrix2(0, -1, 1, 0)), ElementType.ELLIPTIC)
    check.equal(classify(IntMatrix2(0, -1, 1, 1)), ElementType.ELLIPTIC)


def test_moebius_action():
    assert R.moebius(Fraction(0)) == 1
    assert R.moebius(None) is None
    assert L.moebius(None) == 1
    assert L.moebius(Fraction(-1)) is None


def test_word_reduction():
    assert GroupWord.of(("R", 2), ("R", -2)).is_identity()
    assert str(GroupWord.of(("R", 3), ("L", -2), ("R", 1))) == "R^3 L^-2 R"
    assert str(GroupWord.identity()) == "1"
    assert parse_word("R^3 L^-2 R").length == 6


def test_cyclic_reduce():
    assert cyclic_reduce(parse_word("L^-1 R^3 L")) == parse_word("R^3")
    assert cyclic_reduce(parse_word("R L R^-1")) == parse_word("L")
    assert cyclic_reduce(parse_word("R L")) == parse_word("R L")


@given(words(), words())
def test_evaluation_is_a_homomorphism(w1, w2):
    assert evaluate_word(w1 * w2, DEFAULT_GENERATORS) == evaluate_word(
        w1, DEFAULT_GENERATORS
    ) @ evaluate_word(w2, DEFAULT_GENERATORS)


@given(words())
def test_word_times_inverse(w):
    assert (w * w.inverse()).is_identity()
    assert (w.inverse() * w).is_identity()


def test_random_word_is_deterministic():
    first = [random_word(random.Random(7), ("R", "L"), 8) for _ in range(5)]
    second = [random_word(random.Random(7), ("R", "L"), 8) for _ in range(5)]
    assert first == second
    assert all(w.length <= 8 for w in first)


def test_all_words_over():
    r, left = parse_word("R"), parse_word("L")
    assert set(map(str, all_words_over([r], 2))) == {"1", "R", "R^2", "R^-1", "R^-2"}
    assert len(list(all_words_over([r, left], 1))) == 5
    assert len(list(all_words_over([r, left], 2))) == 17


def test_expand():
    pattern = GroupWord((("0", 2), ("1", -1)))
    assert expand(pattern, [parse_word("R L"), parse_word("L")]) == parse_word("R L R")


def test_interval_arithmetic():
    a = RationalInterval(Fraction(-1), Fraction(2))
    b = RationalInterval(Fraction(3), Fraction(4))
    assert a * b == RationalInterval(Fraction(-4), Fraction(8))
    assert a + b == RationalInterval(Fraction(2), Fraction(6))
    assert a - b == RationalInterval(Fraction(-5), Fraction(-1))
    assert (a - b).distance_from_zero() == 1
    assert a.distance_from_zero() == 0
    with pytest.raises(DomainError):
        RationalInterval(Fraction(1), Fraction(0))


def test_sqrt_enclosure():
    assert sqrt_enclosure(4, 8) == RationalInterval.point(2)
    root = sqrt_enclosure(2, 10)
    assert root.width == Fraction(1, 2**10)
    assert root.lo * root.lo <= 2 <= root.hi * root.hi


def test_fixed_points_of_golden_map():
    points = fixed_points(IntMatrix2(2, 1, 1, 1))
    assert points.attracting.lo < Fraction(16181, 10000)
    assert points.attracting.hi > Fraction(16180, 10000)
    assert points.repelling.lo < Fraction(-6180, 10000)
    assert points.repelling.hi > Fraction(-6181, 10000)
    assert points.refine().attracting.width < points.attracting.width


@given(words(max_length=8))
def test_fixed_point_enclosures_contract(w):
    m = evaluate_word(w, DEFAULT_GENERATORS)
    assume(classify(m) == ElementType.HYPERBOLIC)
    points = fixed_points(m)
    assert points.attracting.contains_interval(image_interval(m, points.attracting))
    assert points.repelling.contains_interval(
        image_interval(m.inverse(), points.repelling)
    )
    refined = points.refine()
    assert refined.attracting.width < points.attracting.width
    assert not refined.attracting.is_disjoint(points.attracting)


def test_fixed_points_need_hyperbolic():
    with pytest.raises(DomainError):
        fixed_points(R)


def test_arcs():
    wrapping = Arc(Fraction(1), Fraction(-1))
    assert wrapping.wraps
    assert None in wrapping
    assert Fraction(5) in wrapping
    assert Fraction(0) not in wrapping
    assert wrapping.complement() == Arc(Fraction(-1), Fraction(1))
    assert Arc(Fraction(0), Fraction(1)).interior_disjoint(Arc(Fraction(1), None))
    assert not Arc(Fraction(0), Fraction(2)).interior_disjoint(
        Arc(Fraction(1), None)
    )
    assert Arc(Fraction(0), None).contains_arc(Arc(Fraction(1), Fraction(2)))
    assert Arc(Fraction(0), Fraction(1)).image(R) == Arc(Fraction(1), Fraction(2))


def test_ping_pong_twists():
    gens = DEFAULT_GENERATORS
    r, left = parse_word("R"), parse_word("L")
    assert not ping_pong_certify(r, left, 1, gens).valid
    certificate = ping_pong_certify(r, left, 2, gens)
    assert certificate.valid
    assert certificate.radius == 1
    assert certificate.arcs[0] == Arc(Fraction(1), None)


def test_ping_pong_coinciding_fixed_points():
    r, golden = parse_word("R"), parse_word("R L")
    for w1, w2 in [(r, r), (r, r.power(2)), (golden, golden.power(-3))]:
        with pytest.raises(DomainError, match="coincide"):
            ping_pong_certify(w1, w2, 2, DEFAULT_GENERATORS, max_depth=4)


def test_fixed_locus():
    golden = R @ L
    assert fixed_locus(R) == fixed_locus(R.power(-5))
    assert fixed_locus(L) == (ElementType.PARABOLIC, Fraction(0))
    assert fixed_locus(golden) == fixed_locus(golden.power(2).inverse())
    assert fixed_locus(golden) != fixed_locus(L @ R)
    with pytest.raises(DomainError):
        fixed_locus(IntMatrix2(0, -1, 1, 0))


def test_ping_pong_needs_infinite_order():
    with pytest.raises(DomainError):
        ping_pong_certify(
            parse_word("R"), parse_word("R L^-1 R"), 2, DEFAULT_GENERATORS
        )


@given(words(), words())
def test_classification_is_conjugation_invariant(g, h):
    m = evaluate_word(g, DEFAULT_GENERATORS)
    conjugator = evaluate_word(h, DEFAULT_GENERATORS)
    assert classify(conjugator @ m @ conjugator.inverse()) == classify(m)


def test_golden_map_is_conjugate_to_its_inverse():
    golden = parse_word("R L")
    s = parse_word("R^-1 L R^-1")
    assert evaluate_word(s, DEFAULT_GENERATORS) == IntMatrix2(0, -1, 1, 0)
    assert evaluate_word(
        s * golden * s.inverse(), DEFAULT_GENERATORS
    ) == evaluate_word(golden.inverse(), DEFAULT_GENERATORS)


def test_certified_pair_generates_freely():
    phi, psi = parse_word("R"), parse_word("L")
    assert ping_pong_certify(phi, psi, 2, DEFAULT_GENERATORS).valid
    rng = random.Random(3)
    checked = 0
    while checked < 200:
        pattern = random_word(rng, ("0", "1"), 10)
        if pattern.is_identity():
            continue
        word = expand(pattern, [phi.power(2), psi.power(2)])
        assert evaluate_word(word, DEFAULT_GENERATORS) != IntMatrix2.identity()
        checked += 1
