"""Residues of ILESLP-encoded integers and certificates for x mod 2^y.

The residue of the last value modulo g is computed without ever
materializing the value: a triangular matrix holds value(x_i) modulo the
iterates nu^k(g), where nu(x) = totient(odd(x * d(sigma))), and each entry
is assembled from the previous row by the Chinese remainder theorem.

All operations accept either a factoring oracle or a PrimeContext.  A
context carries a finite set of primes; taking factorizations by dividing
out context primes keeps the computation oracle-free, and a missing prime
surfaces as ContextInsufficient.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, FrozenSet, List, Optional, Union

from . import numbers
from .numbers import FactoringOracle, crt_pair, odd_part, powmod
from .sign import PrecisionError, SignContext
from .slp import Leslp, append_combination, encode_int


class ContextInsufficient(Exception):
    """The supplied prime context cannot factor a required integer."""


@dataclass(frozen=True)
class PrimeContext:
    """A set of primes sufficient to run residue computations oracle-free.

    For a certificate sigma and seed g, the context must contain every
    prime dividing d(sigma) or an iterate nu^k(g); supersets are sound.
    """

    d: int
    seed: int
    primes: FrozenSet[int]

    def factor(self, n: int) -> Dict[int, int]:
        if n < 1:
            raise ValueError("factor() requires n >= 1")
        out: Dict[int, int] = {}
        for p in sorted(self.primes):
            while n % p == 0:
                out[p] = out.get(p, 0) + 1
                n //= p
        if n != 1:
            raise ContextInsufficient(
                f"cofactor {n} has no prime divisor in the context"
            )
        return out

    def totient(self, n: int) -> int:
        result = 1
        for p, e in self.factor(n).items():
            result *= (p - 1) * p ** (e - 1)
        return result


Resolver = Union[PrimeContext, FactoringOracle, None]


def _totient(n: int, resolver: Resolver) -> int:
    if isinstance(resolver, PrimeContext):
        return resolver.totient(n)
    return numbers.totient(n, resolver)


def _prime_divisors(n: int, resolver: Resolver) -> FrozenSet[int]:
    if isinstance(resolver, PrimeContext):
        return frozenset(resolver.factor(n))
    return frozenset(numbers.factor(n, resolver))


def nu(slp: Leslp, x: int, resolver: Resolver = None) -> int:
    """nu_sigma(x) = totient(odd(x * d(sigma)))."""
    if x < 1:
        raise ValueError("nu() requires x >= 1")
    _, q = odd_part(x * slp.denominator_product())
    return _totient(q, resolver)


def prime_context(
    slp: Leslp,
    g: int,
    oracle: Optional[FactoringOracle] = None,
    depth: Optional[int] = None,
) -> PrimeContext:
    """All primes dividing d(sigma) or nu^k(g) for k in [0 .. depth-1].

    The default depth n-1 (with n the certificate's last index) matches the
    definition of the prime sets attached to certificates; a larger depth
    gives a superset, which is always sound.
    """
    if g < 1:
        raise ValueError("prime_context() requires g >= 1")
    d = slp.denominator_product()
    if depth is None:
        depth = max(0, slp.last - 1)
    primes = set(_prime_divisors(d, oracle))
    m = g
    for k in range(depth):
        primes |= _prime_divisors(m, oracle)
        if k != depth - 1:
            _, q = odd_part(m * d)
            m = numbers.totient(q, oracle)
    return PrimeContext(d=d, seed=g, primes=frozenset(primes))


class _ResidueEngine:
    """Shared machinery: one sign context plus the triangular residue fill."""

    def __init__(self, slp: Leslp, resolver: Resolver, signctx: Optional[SignContext] = None):
        self.slp = slp
        self.resolver = resolver
        self.ctx = signctx or SignContext(slp)
        self.d = slp.denominator_product()

    def nu_chain(self, g: int, length: int) -> List[int]:
        """[g, nu(g), nu^2(g), ...] with `length` entries."""
        chain = [g]
        for _ in range(length - 1):
            _, q = odd_part(chain[-1] * self.d)
            chain.append(_totient(q, self.resolver))
        return chain

    def _pow2_mod(self, j: int, m2: int, q: int, exp_mod_phi: int) -> int:
        """2^(value(x_j)) mod (2^m2 * q) for odd q, given value(x_j) mod phi(q)."""
        v = self.ctx.value_if_small(j)
        if v is not None:
            b = 0 if v >= m2 else 1 << v
        elif m2 <= self.ctx.C:
            b = 0  # value exceeds the threshold, hence also m2
        else:
            if self.ctx.compare_to_int(j, m2) >= 0:
                b = 0
            else:
                b = 1 << self.ctx.value_in_range(j, 0, m2 - 1)
        c = powmod(2, exp_mod_phi, q)
        return crt_pair(b, m2, c, q)

    def mod_values(self, g: int) -> List[int]:
        """value(x_i) mod g for every i, via the triangular matrix."""
        if g < 1:
            raise ValueError("modulus must be >= 1")
        n = self.slp.last
        # Only nu^k(g) for k <= n-1 is ever used as a modulus, so the
        # context's chain depth (factoring up to nu^(n-2)) is exactly enough.
        chain = self.nu_chain(g, max(1, n))
        # M[i][k] = value(x_i) mod nu^k(g), filled for i + k <= n
        M: List[List[Optional[int]]] = [[None] * (n + 1) for _ in range(n + 1)]
        for k in range(n + 1):
            M[0][k] = 0
        split = [odd_part(chain[k] * self.d) for k in range(len(chain))]
        for i in range(1, n + 1):
            coeffs = self.ctx.flats[i].coeff_map()
            for k in range(n - i + 1):
                modulus = chain[k]
                m2, q = split[k]
                total = 0
                for j, aj in coeffs.items():
                    exp_mod_phi = M[j][k + 1] if j >= 1 else 0
                    total += aj * self._pow2_mod(j, m2, q, exp_mod_phi)
                if total % self.d != 0:
                    raise ArithmeticError(
                        "residue accumulation not divisible by d(sigma); "
                        "input is not an ILESLP"
                    )
                M[i][k] = (total // self.d) % modulus
        return [M[i][0] for i in range(n + 1)]


def mod_values(slp: Leslp, g: int, resolver: Resolver = None) -> List[int]:
    """value(x_i) mod g for every variable of the certificate."""
    return _ResidueEngine(slp, resolver).mod_values(g)


def mod_ileslp(slp: Leslp, g: int, resolver: Resolver = None) -> int:
    """The last value of the certificate, modulo g (in [0..g))."""
    return _ResidueEngine(slp, resolver).mod_values(g)[-1]


def mod_pow2_ileslp(slp: Leslp, x: int, y: int, resolver: Resolver = None) -> Leslp:
    """A certificate whose last value is value(x) mod 2^(value(y)).

    Splits the flattening of x into monomials below and above 2^(value(y)),
    locates the quotient of the small part by binary search on signs, and
    fixes the denominator with one residue computation; the result extends
    the input certificate.  Returns (x0 <- 0) when value(y) <= 0.
    """
    engine = _ResidueEngine(slp, resolver)
    ctx = engine.ctx
    d = engine.d
    if ctx.compare_to_int(y, 1) < 0:
        return encode_int(0)

    coeffs = ctx.flats[x].coeff_map()
    small: Dict[int, int] = {}
    large: Dict[int, int] = {}
    for j, aj in coeffs.items():
        if ctx.compare_vars(j, y) < 0:
            small[j] = aj
        else:
            large[j] = aj

    # quotient of the small part by 2^(value(y)), found by binary search
    A = sum(abs(a) for a in small.values())

    def s_minus(v: int) -> int:
        probe = dict(small)
        probe[y] = probe.get(y, 0) - v
        try:
            return ctx.expression_sign(probe)
        except PrecisionError:
            ext = append_combination(slp, {}, probe)
            return SignContext(ext).sign_last()

    lo, hi = -A, A
    while lo < hi:
        mid = (lo + hi) // 2
        if s_minus(mid + 1) >= 0:
            lo = mid + 1
        else:
            hi = mid
    q = lo

    # r = (value of large part / 2^value(y) + q) mod d, via residues mod
    # the odd part of d and powers of two, never materializing values
    if d == 1:
        r = 0
    else:
        m2, dq = odd_part(d)
        phi_dq = _totient(dq, engine.resolver)
        mv = engine.mod_values(phi_dq)
        s_mod = mv[y]
        total = q
        for j, aj in large.items():
            # 2^(value(x_j) - value(y)) mod d; the difference is >= 0
            if m2 == 0 or ctx.expression_sign(_diff_coeffs(ctx, j, y, m2)) >= 0:
                b = 0
            else:
                b = 1 << _diff_value(ctx, j, y, 0, m2 - 1)
            c = powmod(2, (mv[j] - s_mod) % phi_dq, dq)
            total += aj * crt_pair(b, m2, c, dq)
        r = total % d

    exps = dict(small)
    exps[y] = exps.get(y, 0) + (r - q)
    return append_combination(slp, {}, exps, const=0, divide_by=d)


def _diff_coeffs(ctx: SignContext, j: int, y: int, m: int) -> Dict[int, int]:
    """Coefficients of an expression with the sign of value(x_j) - value(x_y) - m."""
    out = dict(ctx.flats[j].coeff_map())
    for k, a in ctx.flats[y].coeff_map().items():
        out[k] = out.get(k, 0) - a
    out[0] = out.get(0, 0) - ctx.d * m
    return out


def _diff_value(ctx: SignContext, j: int, y: int, lo: int, hi: int) -> int:
    """Exact value(x_j) - value(x_y), known to lie in [lo..hi]."""
    while lo < hi:
        mid = (lo + hi) // 2
        if ctx.expression_sign(_diff_coeffs(ctx, j, y, mid + 1)) >= 0:
            lo = mid + 1
        else:
            hi = mid
    return lo
