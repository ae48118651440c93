"""Exact integer arithmetic helpers: factoring, totient, CRT, orders.

Everything here works on plain Python ints (arbitrary precision) and is
deterministic.  Factoring is desk-scale: trial division by small primes,
then Brent-cycle Pollard rho, with every reported factor certified prime
by a Miller-Rabin test that is deterministic below 3.3e24.
"""

from __future__ import annotations

from math import gcd
from typing import Callable, Dict, Optional

# Witnesses that make Miller-Rabin deterministic for n < 3.317e24.
_MR_BASES = (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41)
_MR_DETERMINISTIC_BOUND = 3_317_044_064_679_887_385_961_981

_SMALL_PRIME_BOUND = 1 << 16


def _small_primes():
    bound = _SMALL_PRIME_BOUND
    sieve = bytearray([1]) * bound
    sieve[0] = sieve[1] = 0
    for p in range(2, int(bound ** 0.5) + 1):
        if sieve[p]:
            sieve[p * p :: p] = bytearray(len(sieve[p * p :: p]))
    return [i for i in range(bound) if sieve[i]]


_PRIMES = _small_primes()


def is_probable_prime(n: int) -> bool:
    """Primality test: deterministic Miller-Rabin below 3.3e24, 64 strong
    probable-prime rounds (fixed pseudorandom bases) above."""
    if n < 2:
        return False
    for p in (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37):
        if n % p == 0:
            return n == p
    d = n - 1
    r = 0
    while d % 2 == 0:
        d //= 2
        r += 1

    def witness(a):
        x = pow(a, d, n)
        if x == 1 or x == n - 1:
            return False
        for _ in range(r - 1):
            x = x * x % n
            if x == n - 1:
                return False
        return True

    if n < _MR_DETERMINISTIC_BOUND:
        bases = _MR_BASES
    else:
        # Fixed LCG keyed on n keeps the test reproducible run to run.
        seed = n
        bases = []
        for _ in range(64):
            seed = (seed * 6364136223846793005 + 1442695040888963407) % (1 << 64)
            bases.append(2 + seed % (n - 3))
    return not any(witness(a % n) for a in bases if a % n not in (0, 1, n - 1))


def _brent_rho(n: int) -> int:
    """A nontrivial factor of composite odd n (Pollard rho, Brent cycle)."""
    if n % 2 == 0:
        return 2
    # Deterministic parameter sweep; n is desk-scale so this terminates fast.
    c = 1
    while True:
        y, m, g, r, q = 2, 128, 1, 1, 1
        x = ys = 0
        while g == 1:
            x = y
            for _ in range(r):
                y = (y * y + c) % n
            k = 0
            while k < r and g == 1:
                ys = y
                for _ in range(min(m, r - k)):
                    y = (y * y + c) % n
                    q = q * abs(x - y) % n
                g = gcd(q, n)
                k += m
            r *= 2
        if g == n:
            g = 1
            while g == 1:
                ys = (ys * ys + c) % n
                g = gcd(abs(x - ys), n)
        if g != n:
            return g
        c += 1


class FactoringOracle:
    """Prime factorization provider.

    The builtin backend is trial division by primes below 2^16 followed by
    Pollard rho.  A user-supplied callback (n -> {prime: exponent}) can
    replace it, e.g. to shell out to an external factoring program.
    """

    def __init__(self, backend: Optional[Callable[[int], Dict[int, int]]] = None):
        self.backend = backend

    def factor(self, n: int) -> Dict[int, int]:
        if n < 1:
            raise ValueError("factor() requires n >= 1")
        if self.backend is not None:
            result = dict(self.backend(n))
            check = 1
            for p, e in result.items():
                if e < 1 or not is_probable_prime(p):
                    raise ValueError(f"oracle returned non-prime factor {p}")
                check *= p ** e
            if check != n:
                raise ValueError(f"oracle factorization of {n} does not multiply back")
            return result
        return self._builtin(n)

    @staticmethod
    def _builtin(n: int) -> Dict[int, int]:
        out: Dict[int, int] = {}
        for p in _PRIMES:
            if p * p > n:
                break
            while n % p == 0:
                out[p] = out.get(p, 0) + 1
                n //= p
        stack = [n] if n > 1 else []
        while stack:
            m = stack.pop()
            if m == 1:
                continue
            if is_probable_prime(m):
                out[m] = out.get(m, 0) + 1
                continue
            d = _brent_rho(m)
            stack.append(d)
            stack.append(m // d)
        return out


def command_oracle(argv) -> Callable[[int], Dict[int, int]]:
    """Backend adapter: run `argv`, feed decimal n on stdin, read 'p e' lines."""
    import subprocess

    def run(n: int) -> Dict[int, int]:
        proc = subprocess.run(
            list(argv), input=f"{n}\n", capture_output=True, text=True, check=True
        )
        out: Dict[int, int] = {}
        for line in proc.stdout.splitlines():
            line = line.strip()
            if not line:
                continue
            p_str, e_str = line.split()
            out[int(p_str)] = out.get(int(p_str), 0) + 0 + int(e_str)
        return out

    return run


_DEFAULT_ORACLE = FactoringOracle()


def factor(n: int, oracle: Optional[FactoringOracle] = None) -> Dict[int, int]:
    """Prime factorization of n >= 1 as {prime: exponent} (1 -> {})."""
    return (oracle or _DEFAULT_ORACLE).factor(n)


def totient(n: int, oracle: Optional[FactoringOracle] = None) -> int:
    """Euler's totient, computed from the prime factorization of n."""
    result = 1
    for p, e in factor(n, oracle).items():
        result *= (p - 1) * p ** (e - 1)
    return result


def odd_part(n: int) -> tuple[int, int]:
    """Split n >= 1 as 2^m * q with q odd; returns (m, q)."""
    if n < 1:
        raise ValueError("odd_part() requires n >= 1")
    m = (n & -n).bit_length() - 1
    return m, n >> m


def powmod(base: int, exp: int, modulus: int) -> int:
    """base^exp mod modulus by repeated squaring (exp >= 0, modulus >= 1)."""
    if exp < 0:
        raise ValueError("powmod() requires exp >= 0")
    if modulus < 1:
        raise ValueError("powmod() requires modulus >= 1")
    return pow(base, exp, modulus)


def crt_pair(b: int, m: int, c: int, q: int) -> int:
    """The unique r in [0 .. 2^m * q - 1] with r = b (mod 2^m), r = c (mod q).

    q must be odd (so 2^m and q are coprime); solved with Bezout
    coefficients from the extended Euclidean algorithm.
    """
    if q < 1 or q % 2 == 0:
        raise ValueError("crt_pair() requires odd q >= 1")
    if m < 0:
        raise ValueError("crt_pair() requires m >= 0")
    pw = 1 << m
    h = pw * q
    l1 = pow(pw, -1, q) if q > 1 else 0  # l1 * 2^m = 1 (mod q)
    l2 = pow(q, -1, pw) if m > 0 else 0  # l2 * q = 1 (mod 2^m)
    return (b * l2 * q + c * l1 * pw) % h


def mult_order(a: int, d: int, oracle: Optional[FactoringOracle] = None) -> int:
    """Multiplicative order of a modulo d (smallest k >= 1, a^k = 1 mod d).

    Computed by factoring totient(d) and stripping prime factors while the
    power stays 1.  Requires gcd(a, d) = 1.
    """
    if d < 1:
        raise ValueError("mult_order() requires d >= 1")
    if gcd(a, d) != 1:
        raise ValueError(f"mult_order({a}, {d}): arguments are not coprime")
    if d == 1:
        return 1
    k = totient(d, oracle)
    for p in factor(k, oracle):
        while k % p == 0 and pow(a, k // p, d) == 1:
            k //= p
    return k


def dlog2(target: int, d: int, oracle: Optional[FactoringOracle] = None) -> Optional[int]:
    """Smallest k in [0 .. ord_d(2) - 1] with 2^k = target (mod d), or None.

    d must be odd.  Brute enumeration over one period of 2 modulo d.
    """
    if d < 1 or d % 2 == 0:
        raise ValueError("dlog2() requires odd d >= 1")
    order = mult_order(2, d, oracle)
    t = target % d
    value = 1 % d
    for k in range(order):
        if value == t:
            return k
        value = value * 2 % d
    return None
