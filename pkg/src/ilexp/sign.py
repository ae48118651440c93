"""Deciding the sign of ILESLP-encoded integers in polynomial time.

The procedure builds a map M(i,j) = trunc_C(value(x_i) - value(x_j)) where
differences beyond the threshold C are collapsed to +/-infinity.  C is
derived from the certificate's canonical bit size; any larger threshold is
equally sound, which the tests exploit.

SignContext additionally answers sign queries for expressions
sum_j c_j * 2^(x_j) over the same certificate without rebuilding the map;
the residue algorithms lean on this heavily.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass
from math import inf
from typing import Dict, List, Optional, Tuple, Union

from .slp import FlatExpansion, Leslp, flatten_all

Entry = Union[int, float]  # ints in [-C..C], else +/-math.inf


class PrecisionError(Exception):
    """An expression query exceeded what the current threshold supports."""


def _ceil_log2(n: int) -> int:
    if n <= 1:
        return 0
    return (n - 1).bit_length()


@dataclass(frozen=True)
class TruncMap:
    """Truncated pairwise differences of certificate variables."""

    n: int
    threshold: int
    entries: Dict[Tuple[int, int], Entry]

    def __call__(self, i: int, j: int) -> Entry:
        return self.entries[(i, j)]


class SignContext:
    """Sign machinery for one certificate: flattening, the truncated
    difference map, and expression sign queries."""

    def __init__(self, slp: Leslp, threshold: Optional[int] = None):
        self.slp = slp
        self.d = slp.denominator_product()
        self.e = slp.numerator_product()
        self.C = 8 * slp.bit_size() + 8 if threshold is None else threshold
        self.flats: List[FlatExpansion] = flatten_all(slp)
        self._entries: Dict[Tuple[int, int], Entry] = {}
        self._build()

    # -- construction ----------------------------------------------------

    def _chain(self, upto: int) -> List[int]:
        """Indices k < upto with value(x_k) >= 0, ascending by value.

        Comparisons come from already-computed map entries; ties are broken
        by index so that x_0 (value 0) always leads the chain.
        """
        M = self._entries
        members = [k for k in range(upto) if M[(k, 0)] >= 0]

        def cmp(a, b):
            v = M[(a, b)]
            if v > 0:
                return 1
            if v < 0:
                return -1
            return a - b

        return sorted(members, key=functools.cmp_to_key(cmp))

    def _merge_sign(self, chain: List[int], coeffs: Dict[int, int]):
        """Collapse sum_k coeffs[k] * 2^(x_k) down the chain.

        Returns ('big', sign) when a surviving coefficient sits above a
        super-threshold gap (the value's magnitude then exceeds d*C), or
        ('exact', h) with the expression equal to h = h * 2^(x_0).
        """
        M = self._entries
        C = self.C
        c = {k: v for k, v in coeffs.items() if v != 0}
        # Coefficient growth stays below base * 2^(t*C) after t merges;
        # for the map construction base is 2^(n+2) * e * d.
        bound = 2 * max((1 << (self.slp.last + 1)) * self.e * self.d,
                        sum(abs(v) for v in c.values()))
        for t in range(len(chain) - 1, 0, -1):
            hi, lo = chain[t], chain[t - 1]
            a = c.get(hi, 0)
            gap = M[(hi, lo)]
            if gap <= C:
                if a:
                    c[lo] = c.get(lo, 0) + (a << gap)
                    bound <<= C
                    assert abs(c[lo]) < bound  # no superpolynomial growth
                c.pop(hi, None)
            else:
                if a > 0:
                    return "big", 1
                if a < 0:
                    return "big", -1
                c.pop(hi, None)
        return "exact", c.get(chain[0], 0) if chain else 0

    def _build(self):
        M = self._entries
        C = self.C
        for i in range(len(self.slp)):
            M[(i, i)] = 0
            if i == 0:
                continue
            chain = self._chain(i)
            chain_set = set(chain)
            ei = self.flats[i].coeff_map()
            ej_all = [self.flats[j].coeff_map() for j in range(i)]
            for j in range(i):
                coeffs = dict(ei)
                for k, a in ej_all[j].items():
                    coeffs[k] = coeffs.get(k, 0) - a
                coeffs = {k: v for k, v in coeffs.items() if v != 0}
                assert set(coeffs) <= chain_set  # nonzero only on nonneg values
                kind, val = self._merge_sign(chain, coeffs)
                if kind == "big":
                    M[(i, j)] = inf if val > 0 else -inf
                else:
                    assert val % self.d == 0
                    diff = val // self.d
                    if -C <= diff <= C:
                        M[(i, j)] = diff
                    else:
                        M[(i, j)] = inf if diff > 0 else -inf
                M[(j, i)] = -M[(i, j)]
        self.full_chain = self._chain(len(self.slp))

    # -- queries ----------------------------------------------------------

    def trunc_map(self) -> TruncMap:
        return TruncMap(self.slp.last, self.C, dict(self._entries))

    def sign_last(self) -> int:
        v = self._entries[(self.slp.last, 0)]
        return 0 if v == 0 else (1 if v > 0 else -1)

    def value_if_small(self, i: int) -> Optional[int]:
        """Exact value(x_i) when its magnitude is at most the threshold."""
        v = self._entries[(i, 0)]
        return None if v in (inf, -inf) else int(v)

    def compare_vars(self, i: int, j: int) -> int:
        v = self._entries[(i, j)]
        return 0 if v == 0 else (1 if v > 0 else -1)

    def expression_sign(self, coeffs: Dict[int, int]) -> int:
        """Sign of sum_j coeffs[j] * 2^(value(x_j)).

        All variables with nonzero coefficient must have nonnegative value.
        Raises PrecisionError when the coefficients are too large for the
        threshold to be trusted (the caller then rebuilds at full size).
        """
        total = sum(abs(v) for v in coeffs.values())
        if 2 * _ceil_log2(max(1, total)) + 4 * _ceil_log2(self.d) + 8 > self.C:
            raise PrecisionError("expression coefficients exceed threshold budget")
        live = {k: v for k, v in coeffs.items() if v != 0}
        for k in live:
            if self._entries[(k, 0)] < 0:
                raise ValueError(f"expression uses variable {k} with negative value")
        kind, val = self._merge_sign(self.full_chain, live)
        if kind == "big":
            return val
        return 0 if val == 0 else (1 if val > 0 else -1)

    def compare_to_int(self, i: int, m: int) -> int:
        """Sign of value(x_i) - m."""
        coeffs = dict(self.flats[i].coeff_map())
        coeffs[0] = coeffs.get(0, 0) - self.d * m
        try:
            return self.expression_sign(coeffs)
        except PrecisionError:
            from .slp import append_combination

            probe = append_combination(self.slp, {i: 1}, {}, const=-m)
            return SignContext(probe).sign_last()

    def value_in_range(self, i: int, lo: int, hi: int) -> int:
        """Exact value(x_i), known to lie in [lo..hi], by binary search."""
        small = self.value_if_small(i)
        if small is not None:
            return small
        while lo < hi:
            mid = (lo + hi) // 2
            if self.compare_to_int(i, mid + 1) >= 0:
                lo = mid + 1
            else:
                hi = mid
        return lo


def build_trunc_map(slp: Leslp, threshold: Optional[int] = None) -> TruncMap:
    """The truncated difference map of an ILESLP."""
    return SignContext(slp, threshold).trunc_map()


def pos(slp: Leslp) -> bool:
    """Is the last value of the ILESLP nonnegative?"""
    return SignContext(slp).sign_last() >= 0


def compare_to_int(slp: Leslp, i: int, m: int) -> str:
    """Order value(x_i) against the integer m: one of '<', '=', '>'."""
    s = SignContext(slp).compare_to_int(i, m)
    return "<" if s < 0 else ("=" if s == 0 else ">")
