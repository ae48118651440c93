import random
from fractions import Fraction

import pytest

from ilexp.slp import (
    Add,
    Exp,
    FlatExpansion,
    Leslp,
    NonIntegerExponent,
    OverflowAbort,
    Scale,
    Zero,
    append_combination,
    encode_int,
    eval_direct,
    flatten,
    flatten_all,
    make_scale,
    parse_certificate,
    print_certificate,
)


def build(*ops):
    return Leslp(ops)


def test_products():
    slp = build(Zero(), Exp(0), Add(1, 1))
    assert slp.denominator_product() == 1
    assert slp.numerator_product() == 1

    slp = build(Zero(), Exp(0), make_scale(1, 3, 1), make_scale(-2, 1, 1))
    assert slp.denominator_product() == 3
    assert slp.numerator_product() == 2

    # zero numerators are excluded from e, their denominator still counts
    slp = build(Zero(), Exp(0), Scale(0, 5, 1))
    assert slp.numerator_product() == 1
    assert slp.denominator_product() == 5


def test_index_discipline_enforced():
    with pytest.raises(ValueError):
        build(Zero(), Add(1, 0))
    with pytest.raises(ValueError):
        build(Exp(0))
    with pytest.raises(ValueError):
        build(Zero(), Scale(2, 4, 0))  # not in lowest terms


def test_eval_direct_basic():
    slp = build(Zero(), Exp(0))
    assert eval_direct(slp, 64) == [0, 1]


def test_eval_direct_sqrt2_program():
    # x0=0, x1=1, x2=-1, x3=2^-1=1/2, x4=2^(1/2): undefined
    slp = build(Zero(), Exp(0), make_scale(-1, 1, 1), Exp(2), Exp(3))
    with pytest.raises(NonIntegerExponent):
        eval_direct(slp, 64)
    # the prefix is fine and x3 evaluates to 1/2
    prefix = build(Zero(), Exp(0), make_scale(-1, 1, 1), Exp(2))
    assert eval_direct(prefix, 64)[3] == Fraction(1, 2)


def test_eval_direct_tower_overflow():
    ops = [Zero(), Exp(0)]
    for _ in range(5):
        ops.append(Exp(len(ops) - 1))
    with pytest.raises(OverflowAbort):
        eval_direct(build(*ops), 10_000)


def test_encode_int():
    assert len(encode_int(0)) == 1
    assert eval_direct(encode_int(0), 64)[-1] == 0
    assert eval_direct(encode_int(-5), 64)[-1] == -5
    assert eval_direct(encode_int(123456789), 64)[-1] == 123456789


def test_extend_roundtrip():
    slp = encode_int(3)
    bigger = slp.extend(Exp(slp.last))
    assert eval_direct(bigger, 64)[-1] == 8


def test_flatten_simple():
    slp = build(Zero())
    flat = flatten(slp, 0)
    assert flat.coeffs == ()
    assert flat.denominator == 1

    slp = build(Zero(), Exp(0), Add(1, 1))
    flat = flatten(slp, 2)
    assert flat.coeff_map() == {0: 2}
    assert flat.denominator == 1


def test_flatten_scaled_family():
    # (2^(2k) - 1)/3 for k = 3: value 21, denominator 3
    k = 3
    slp = build(
        Zero(),
        Exp(0),                  # 1
        make_scale(2 * k, 1, 1),  # 2k
        Exp(2),                  # 2^(2k)
        make_scale(-1, 1, 1),    # -1
        Add(3, 4),               # 2^(2k) - 1
        make_scale(1, 3, 5),     # (2^(2k) - 1)/3
    )
    values = eval_direct(slp, 256)
    assert values[-1] == 21
    flat = flatten(slp, slp.last)
    assert flat.denominator == 3
    total = sum(a * 2 ** values[j] for j, a in flat.coeff_map().items())
    assert total == 3 * 21


def random_leslp(rng, depth, coeff_bound=32):
    """Random LESLP; biased so that direct evaluation mostly succeeds."""
    ops = [Zero(), Exp(0)]
    while len(ops) < depth:
        i = len(ops)
        kind = rng.randrange(4)
        if kind == 0:
            ops.append(Add(rng.randrange(i), rng.randrange(i)))
        elif kind == 1:
            m = rng.randrange(-coeff_bound, coeff_bound + 1)
            g = rng.randrange(1, 5) if rng.random() < 0.4 else 1
            ops.append(make_scale(m, g, rng.randrange(i)))
        else:
            ops.append(Exp(rng.randrange(i)))
    return Leslp(ops)


def test_flatten_matches_eval_on_random_programs():
    rng = random.Random(42)
    checked = 0
    while checked < 150:
        slp = random_leslp(rng, rng.randrange(3, 12))
        try:
            values = eval_direct(slp, 2048)
        except (OverflowAbort, NonIntegerExponent):
            continue
        if any(v.denominator != 1 for v in values):
            continue
        if any(
            values[op.j] < 0 for op in slp.ops if isinstance(op, Exp)
        ):
            continue
        checked += 1
        d = slp.denominator_product()
        e = slp.numerator_product()
        flats = flatten_all(slp)
        prev_d = 1
        for i, flat in enumerate(flats):
            total = sum(a * 2 ** values[j] for j, a in flat.coeff_map().items())
            assert total == d * values[i]
            for j, a in flat.coeff_map().items():
                assert values[j] >= 0
                assert abs(a) <= 2**i * e * d
            prefix = Leslp(slp.ops[: i + 1])
            assert prev_d and prefix.denominator_product() % prev_d == 0
            prev_d = prefix.denominator_product()


def test_append_combination():
    slp = encode_int(5)
    idx = slp.last
    prog = append_combination(slp, {idx: 3}, {idx: 1}, const=-7, divide_by=4)
    # (3*5 + 2^5 - 7)/4 = (15 + 32 - 7)/4 = 10
    assert eval_direct(prog, 256)[-1] == 10


def test_certificate_roundtrip():
    text = """# a comment
x0 := 0
x1 := 2^x0
x2 := (-7/3) * x1
x3 := x1 + x2
x4 := 2^x1
"""
    slp, primes = parse_certificate(text)
    assert primes is None
    assert slp.ops[2] == Scale(-7, 3, 1)
    canonical = print_certificate(slp)
    again, _ = parse_certificate(canonical)
    assert again == slp
    assert print_certificate(again) == canonical


def test_certificate_primes_header():
    slp, primes = parse_certificate("primes: 2,3,7\nx0 := 0\n")
    assert primes == frozenset({2, 3, 7})
    assert "primes: 2,3,7" in print_certificate(slp, primes)


def test_certificate_errors():
    with pytest.raises(ValueError):
        parse_certificate("x0 := 1\n")
    with pytest.raises(ValueError):
        parse_certificate("x0 := 0\nx1 := 2^y\n")
    with pytest.raises(ValueError):
        parse_certificate("")


def test_bit_size_monotone():
    small = encode_int(3)
    big = encode_int(3 * 10**12)
    assert small.bit_size() < big.bit_size()
    assert big.bit_size() < big.extend(Exp(big.last)).bit_size()
