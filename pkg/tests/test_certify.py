import random

import pytest

from ilexp.certify import (
    Ileslp,
    MissingVariable,
    RecognitionError,
    check_solution,
    compare_objective,
    prime_set,
    recognize,
    term_to_ileslp,
    try_recognize,
    verify_prime_set,
)
from ilexp.slp import (
    Add,
    Exp,
    Leslp,
    NonIntegerExponent,
    OverflowAbort,
    Zero,
    eval_direct,
    make_scale,
    parse_certificate,
)
from ilexp.sign import SignContext
from ilexp.terms import parse_instance, parse_term

from test_slp import random_leslp

EXAMPLE_1 = """maximize 8*x + 4*y - 2^x - 2^y
subject to
  y - 5 <= 0
  y - 2^x <= 0
  2^z - 65536*y <= 0
  z - 3*x = 0
"""


def point_certificate(**assignments):
    """Certificate assigning constants to named variables."""
    text = "x0 := 0\none := 2^x0\n"
    for name, value in assignments.items():
        text += f"{name} := ({value}/1) * one\n"
    slp, _ = parse_certificate(text)
    return slp


def test_prime_set_examples():
    slp = Leslp((Zero(),))
    assert prime_set(slp) == frozenset()

    # d = 1: nu(1) = 1, chain of 1s, no primes
    slp = Leslp((Zero(), Exp(0), Add(1, 1), Exp(2)))
    assert prime_set(slp) == frozenset()

    # d = 3: seed 3 * phi(3) = 6, chain picks up 2 and 3
    slp = Leslp((Zero(), Exp(0), make_scale(1, 3, 1), Add(2, 2)))
    ps = prime_set(slp)
    assert {2, 3} <= ps
    assert verify_prime_set(slp, ps)
    assert not verify_prime_set(slp, ps | {11})
    assert not verify_prime_set(slp, {6})


def test_recognize_accepts_trivial():
    cert = recognize(Leslp((Zero(),)))
    assert isinstance(cert, Ileslp)


def test_recognize_rejects_sqrt2_program():
    # x3 <- 2^(x2) with value(x2) = -1 fails the exponent sign check
    slp = Leslp((Zero(), Exp(0), make_scale(-1, 1, 1), Exp(2), Exp(3)))
    with pytest.raises(RecognitionError) as info:
        recognize(slp)
    assert info.value.index == 3
    assert info.value.check == "exponent-sign"


def test_recognize_scale_divisibility():
    # (2^(2k) - 1)/3 is an integer: accepted for every k up to 32
    for k in (1, 2, 3, 8, 17, 32):
        slp = Leslp(
            (
                Zero(),
                Exp(0),
                make_scale(2 * k, 1, 1),
                Exp(2),
                make_scale(-1, 1, 1),
                Add(3, 4),
                make_scale(1, 3, 5),
            )
        )
        assert try_recognize(slp) is not None

    # 3 does not divide 2^5
    slp = Leslp((Zero(), Exp(0), make_scale(5, 1, 1), Exp(2), make_scale(1, 3, 3)))
    with pytest.raises(RecognitionError) as info:
        recognize(slp)
    assert info.value.index == 4
    assert info.value.check == "scale-divisibility"


def test_recognize_with_prime_superset():
    slp = Leslp((Zero(), Exp(0), make_scale(2, 3, 1), make_scale(1, 2, 1)))
    # 3 | 1 fails; but first check which: x2 <- (2/3) * x1 with value 1
    with pytest.raises(RecognitionError) as info:
        recognize(slp, primes=prime_set(slp) | {101})
    assert info.value.index == 2


def test_recognition_matches_direct_classification():
    rng = random.Random(1234)
    checked = 0
    while checked < 150:
        slp = random_leslp(rng, rng.randrange(2, 10), coeff_bound=6)
        try:
            values = eval_direct(slp, 4096)
        except OverflowAbort:
            continue
        except NonIntegerExponent:
            values = None  # definitely not an ILESLP
        checked += 1
        if values is None:
            expected = False
        else:
            expected = all(v.denominator == 1 for v in values) and all(
                values[op.j] >= 0 for op in slp.ops if isinstance(op, Exp)
            )
        assert (try_recognize(slp) is not None) == expected, slp.text()


def test_term_to_ileslp():
    cert = recognize(point_certificate(x=3))
    out = term_to_ileslp(cert, parse_term("x"))
    assert eval_direct(out, 64)[-1] == 3

    cert = recognize(point_certificate(x=3, y=2))
    out = term_to_ileslp(cert, parse_term("8*x + 4*y - 2^x - 2^y"))
    assert eval_direct(out, 64)[-1] == 20

    cert = recognize(point_certificate(x=21, y=3))
    out = term_to_ileslp(cert, parse_term("(x mod 2^y)"))
    assert eval_direct(out, 64)[-1] == 5


def test_check_solution_example_1():
    inst = parse_instance(EXAMPLE_1)
    good = recognize(point_certificate(x=3, y=2, z=9))
    assert check_solution(inst, good)

    bad = recognize(point_certificate(x=0, y=6, z=0))
    assert not check_solution(inst, bad)  # violates y <= 5

    empty = parse_instance("maximize x\nsubject to\n")
    cert = recognize(point_certificate(x=5))
    assert check_solution(empty, cert)


def test_check_solution_missing_variable():
    inst = parse_instance(EXAMPLE_1)
    with pytest.raises(MissingVariable):
        check_solution(inst, recognize(point_certificate(x=3, y=2)))


def test_check_solution_negative_variable():
    inst = parse_instance("maximize x\nsubject to\n  x - 2 <= 0\n")
    slp, _ = parse_certificate("x0 := 0\none := 2^x0\nx := (-1/1) * one\n")
    assert not check_solution(inst, recognize(slp))


def test_check_solution_divisibility():
    from ilexp.numbers import FactoringOracle
    from ilexp.residue import ContextInsufficient

    inst = parse_instance("maximize x\nsubject to\n  3 | x + 1\n  x - 9 <= 0\n")
    oracle = FactoringOracle()
    assert check_solution(inst, recognize(point_certificate(x=2)), oracle)
    assert not check_solution(inst, recognize(point_certificate(x=3)), oracle)
    # instance divisors are not covered by the certificate's own prime set
    with pytest.raises(ContextInsufficient):
        check_solution(inst, recognize(point_certificate(x=2)))


def test_check_solution_huge_values():
    # x = 2^(2^16), y = 2^16: y = log2(x) satisfies y - 2^y <= 0 tightly
    text = """x0 := 0
one := 2^x0
k := (16/1) * one
y := 2^k
x := 2^y
"""
    slp, _ = parse_certificate(text)
    inst = parse_instance("maximize x\nsubject to\n  2^y - x <= 0\n  x - 2^y <= 0\n")
    assert check_solution(inst, recognize(slp))


def test_compare_objective():
    tau = parse_term("8*x + 4*y - 2^x - 2^y")
    c1 = recognize(point_certificate(x=3, y=2))
    c2 = recognize(point_certificate(x=4, y=3))
    assert compare_objective(tau, c1, c2) == "="

    tau = parse_term("x")
    c1 = recognize(point_certificate(x=3))
    c2 = recognize(point_certificate(x=4))
    assert compare_objective(tau, c1, c2) == "<"
    assert compare_objective(tau, c2, c1) == ">"
    assert compare_objective(tau, c1, c1) == "="


def test_compare_objective_consistent_with_eval():
    rng = random.Random(8)
    tau = parse_term("3*x - 2^y + 2*(x mod 2^y)")
    for _ in range(20):
        a1 = {"x": rng.randrange(0, 12), "y": rng.randrange(0, 5)}
        a2 = {"x": rng.randrange(0, 12), "y": rng.randrange(0, 5)}
        c1 = recognize(point_certificate(**a1))
        c2 = recognize(point_certificate(**a2))
        v1 = tau.evaluate(a1)
        v2 = tau.evaluate(a2)
        want = "<" if v1 < v2 else ("=" if v1 == v2 else ">")
        assert compare_objective(tau, c1, c2) == want
