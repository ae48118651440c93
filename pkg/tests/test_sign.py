import random
from math import inf

from ilexp.slp import (
    Add,
    Exp,
    Leslp,
    NonIntegerExponent,
    OverflowAbort,
    Zero,
    append_combination,
    encode_int,
    eval_direct,
    make_scale,
)
from ilexp.sign import SignContext, build_trunc_map, compare_to_int, pos

from test_slp import random_leslp


def test_trunc_map_trivial():
    m = build_trunc_map(Leslp((Zero(),)))
    assert m(0, 0) == 0


def test_trunc_map_27():
    # x5 = 2^5 - 5 = 27; small relative to the canonical threshold
    slp = Leslp(
        (Zero(), Exp(0), make_scale(5, 1, 1), Exp(2), make_scale(-1, 1, 2), Add(3, 4))
    )
    m = build_trunc_map(slp)
    assert m.threshold >= 27
    assert m(5, 0) == 27
    assert m(0, 5) == -27


def test_trunc_map_large_gap():
    # 2^(2^4) - 2^(2^2) = 65536 - 16 = 65520 > C
    slp = Leslp(
        (
            Zero(),
            Exp(0),                 # 1
            make_scale(4, 1, 1),    # 4
            Exp(2),                 # 16
            make_scale(2, 1, 1),    # 2
            Exp(4),                 # 4
            Exp(3),                 # 2^16
            Exp(5),                 # 2^4
            make_scale(-1, 1, 7),   # -16
            Add(6, 8),              # 2^16 - 16
        )
    )
    m = build_trunc_map(slp)
    assert m(9, 0) == inf


def test_pos_examples():
    assert pos(encode_int(0)) is True
    assert pos(encode_int(7)) is True
    assert pos(encode_int(-1)) is False

    # 2^16 - 2^32 < 0
    slp = Leslp(
        (
            Zero(),
            Exp(0),
            make_scale(16, 1, 1),
            make_scale(32, 1, 1),
            Exp(2),
            Exp(3),
            make_scale(-1, 1, 5),
            Add(4, 6),
        )
    )
    assert pos(slp) is False

    # 2^(2^(2^2)) - 2^(2^2) = 2^16 - 16 > 0
    slp = Leslp(
        (
            Zero(),
            Exp(0),
            make_scale(2, 1, 1),
            Exp(2),        # 4
            Exp(3),        # 16
            Exp(4),        # 2^16
            make_scale(-1, 1, 4),
            Add(5, 6),
        )
    )
    assert pos(slp) is True


def test_compare_to_int():
    assert compare_to_int(encode_int(5), 2, 5) == "="
    assert compare_to_int(encode_int(0), 0, 3) == "<"
    big = Leslp((Zero(), Exp(0), make_scale(32, 1, 1), Exp(2)))
    assert compare_to_int(big, 3, 16) == ">"


def test_oracle_agreement_random():
    rng = random.Random(2024)
    checked = 0
    while checked < 250:
        slp = random_leslp(rng, rng.randrange(3, 13))
        try:
            values = eval_direct(slp, 4096)
        except (OverflowAbort, NonIntegerExponent):
            continue
        if any(v.denominator != 1 for v in values):
            continue
        if any(values[op.j] < 0 for op in slp.ops if isinstance(op, Exp)):
            continue
        checked += 1
        assert pos(slp) == (values[-1] >= 0), slp.text()


def test_antisymmetry_and_threshold_soundness():
    rng = random.Random(99)
    checked = 0
    while checked < 40:
        slp = random_leslp(rng, rng.randrange(3, 10))
        try:
            values = eval_direct(slp, 2048)
        except (OverflowAbort, NonIntegerExponent):
            continue
        if any(v.denominator != 1 for v in values):
            continue
        if any(values[op.j] < 0 for op in slp.ops if isinstance(op, Exp)):
            continue
        checked += 1
        m = build_trunc_map(slp)
        n = len(slp) - 1
        for i in range(n + 1):
            for j in range(n + 1):
                assert m(i, j) == -m(j, i)
        doubled = build_trunc_map(slp, threshold=2 * m.threshold)
        assert (m(n, 0) >= 0) == (doubled(n, 0) >= 0)


def test_trunc_map_entries_match_eval():
    rng = random.Random(5)
    checked = 0
    while checked < 60:
        slp = random_leslp(rng, rng.randrange(3, 9), coeff_bound=9)
        try:
            values = eval_direct(slp, 1024)
        except (OverflowAbort, NonIntegerExponent):
            continue
        if any(v.denominator != 1 for v in values):
            continue
        if any(values[op.j] < 0 for op in slp.ops if isinstance(op, Exp)):
            continue
        checked += 1
        m = build_trunc_map(slp)
        C = m.threshold
        for i in range(len(slp)):
            for j in range(len(slp)):
                diff = values[i] - values[j]
                if abs(diff) <= C:
                    assert m(i, j) == diff
                elif diff > 0:
                    assert m(i, j) == inf
                else:
                    assert m(i, j) == -inf


def test_expression_sign_and_value_queries():
    slp = encode_int(21)
    ctx = SignContext(slp)
    # 3 * 2^(x2) - 5 * 2^(x1) where x2 = 21, x1 = 1: positive
    assert ctx.expression_sign({2: 3, 1: -5}) == 1
    assert ctx.expression_sign({1: 0}) == 0
    assert ctx.value_in_range(2, 0, 64) == 21
    assert ctx.compare_to_int(2, 21) == 0
    assert ctx.compare_to_int(2, 22) == -1


def test_value_in_range_beyond_threshold():
    # value 2^40 exceeds the default threshold for this tiny program
    slp = Leslp((Zero(), Exp(0), make_scale(40, 1, 1), Exp(2)))
    ctx = SignContext(slp)
    assert ctx.value_if_small(3) is None
    assert ctx.value_in_range(3, 0, 1 << 41) == 1 << 40


def test_compare_with_huge_constant_falls_back():
    slp = encode_int(3)
    ctx = SignContext(slp)
    huge = 1 << (ctx.C + 64)
    assert ctx.compare_to_int(2, huge) == -1
    assert ctx.compare_to_int(2, -huge) == 1
