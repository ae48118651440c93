import random
from math import gcd

import pytest

from ilexp.numbers import (
    FactoringOracle,
    crt_pair,
    dlog2,
    factor,
    is_probable_prime,
    mult_order,
    odd_part,
    powmod,
    totient,
)


def test_factor_examples():
    assert factor(12) == {2: 2, 3: 1}
    assert factor(1) == {}
    assert factor(2147483647) == {2147483647: 1}  # Mersenne prime 2^31 - 1


def test_factor_multiplies_back():
    rng = random.Random(7)
    for _ in range(200):
        n = rng.randrange(1, 10**12)
        fac = factor(n)
        prod = 1
        for p, e in fac.items():
            assert is_probable_prime(p)
            prod *= p**e
        assert prod == n


def test_factor_semiprime_of_large_primes():
    p, q = 1000003, 10000019
    assert factor(p * q) == {p: 1, q: 1}


def test_factoring_callback_backend():
    calls = []

    def backend(n):
        calls.append(n)
        return FactoringOracle._builtin(n)

    oracle = FactoringOracle(backend)
    assert factor(60, oracle) == {2: 2, 3: 1, 5: 1}
    assert calls == [60]

    bad = FactoringOracle(lambda n: {4: 1, n // 4: 1})
    with pytest.raises(ValueError):
        bad.factor(36)


def test_totient_examples():
    assert totient(1) == 1
    assert totient(12) == 4
    assert totient(7) == 6


def test_totient_matches_coprime_count():
    for n in range(1, 10_001):
        assert totient(n) == sum(1 for k in range(1, n + 1) if gcd(k, n) == 1), n


def test_odd_part():
    assert odd_part(8) == (3, 1)
    assert odd_part(12) == (2, 3)
    assert odd_part(1) == (0, 1)
    with pytest.raises(ValueError):
        odd_part(0)


def test_powmod_examples():
    assert powmod(2, 10, 1000) == 24
    assert powmod(2, 0, 5) == 1
    assert powmod(2, 32, 7) == 4


def test_powmod_matches_naive():
    rng = random.Random(3)
    for _ in range(300):
        a = rng.randrange(0, 50)
        e = rng.randrange(0, 1 << 16)
        m = rng.randrange(1, 1000)
        naive = 1
        for _ in range(e):
            naive = naive * a % m
        assert powmod(a, e, m) == naive


def test_crt_pair_examples():
    assert crt_pair(0, 3, 4, 7) == 32
    assert crt_pair(5, 3, 123, 1) == 5
    assert crt_pair(1, 0, 4, 7) == 4


def test_crt_pair_property():
    rng = random.Random(11)
    for _ in range(500):
        m = rng.randrange(0, 12)
        q = rng.randrange(0, 500) * 2 + 1
        b = rng.randrange(0, 1 << m)
        c = rng.randrange(0, q)
        r = crt_pair(b, m, c, q)
        assert 0 <= r < (1 << m) * q
        assert r % (1 << m) == b % (1 << m)
        assert r % q == c % q


def test_mult_order():
    assert mult_order(2, 7) == 3
    assert mult_order(2, 1) == 1
    assert mult_order(2, 15) == 4
    with pytest.raises(ValueError):
        mult_order(2, 8)


def test_mult_order_is_minimal():
    rng = random.Random(5)
    for _ in range(100):
        d = rng.randrange(1, 2000)
        a = rng.randrange(1, d + 2)
        if gcd(a, d) != 1:
            continue
        k = mult_order(a, d)
        assert pow(a, k, d) == 1 % d
        for j in range(1, k):
            assert pow(a, j, d) != 1 % d or d == 1


def test_dlog2():
    assert dlog2(4, 7) == 2
    assert dlog2(1, 9) == 0
    assert dlog2(3, 7) is None  # powers of 2 mod 7 are {1, 2, 4}
    assert dlog2(0, 1) == 0


def test_dlog2_finds_smallest():
    rng = random.Random(13)
    for _ in range(100):
        d = rng.randrange(0, 300) * 2 + 1
        t = rng.randrange(0, d)
        k = dlog2(t, d)
        order = mult_order(2, d)
        if k is None:
            assert all(pow(2, j, d) != t for j in range(order))
        else:
            assert pow(2, k, d) == t
            assert all(pow(2, j, d) != t for j in range(k))
