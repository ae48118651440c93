"""Recognizing certificates and checking them against instances.

A LESLP is an ILESLP iff every exponent argument is nonnegative and every
scaling (m/g) * x divides cleanly; both conditions are decided on the
already-verified prefix, so recognition needs only the sign procedure and
residues.  A recognized certificate is paired with its prime set, the
advice that lets all residue computations run oracle-free.

Solution checking reduces every constraint to a sign question on an
extension of the certificate; objective values are compared the same way,
without ever materializing them.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import gcd
from typing import Dict, FrozenSet, Iterable, List, Mapping, Optional, Tuple, Union

from .numbers import FactoringOracle, is_probable_prime
from .residue import (
    ContextInsufficient,
    PrimeContext,
    Resolver,
    mod_ileslp,
    mod_pow2_ileslp,
    nu,
    prime_context,
)
from .sign import SignContext
from .slp import Add, Exp, Leslp, Scale, Zero, append_combination, make_scale
from .terms import DIV, EQ, LE, Instance, LinExpTerm


class RecognitionError(Exception):
    """The LESLP is not an ILESLP; carries the first failing assignment."""

    def __init__(self, index: int, check: str):
        self.index = index
        self.check = check  # "exponent-sign" | "scale-divisibility"
        super().__init__(f"assignment {index} fails the {check} check")


class MissingVariable(Exception):
    """The certificate does not assign a variable of the instance."""


class NegativeVariable(Exception):
    """A term variable evaluates to a negative integer in the certificate."""


@dataclass(frozen=True)
class Ileslp:
    """A recognized certificate together with its prime-set witness."""

    slp: Leslp
    primes: FrozenSet[int]

    @property
    def last(self) -> int:
        return self.slp.last


def prime_set(slp: Leslp, oracle: Optional[FactoringOracle] = None) -> FrozenSet[int]:
    """The certificate's prime set: the context primes for the seed
    d(sigma) * nu(1), enough for every residue query recognition needs."""
    d = slp.denominator_product()
    seed = d * nu(slp, 1, oracle)
    return prime_context(slp, seed, oracle).primes


def verify_prime_set(slp: Leslp, primes: Iterable[int]) -> bool:
    """Is the given set exactly the certificate's prime set?

    Verified without a factoring oracle: the candidate set itself factors
    the chain, and the recomputed set must coincide with it.
    """
    candidate = frozenset(primes)
    if not all(is_probable_prime(p) for p in candidate):
        return False
    d = slp.denominator_product()
    ctx = PrimeContext(d=d, seed=0, primes=candidate)
    try:
        seed = d * nu(slp, 1, ctx)
        recomputed = prime_context(slp, seed, ctx).primes
    except ContextInsufficient:
        return False
    return recomputed == candidate


def _context_for(slp: Leslp, primes: FrozenSet[int]) -> PrimeContext:
    return PrimeContext(d=slp.denominator_product(), seed=0, primes=primes)


def recognize(
    slp: Leslp,
    primes: Optional[Iterable[int]] = None,
    oracle: Optional[FactoringOracle] = None,
) -> Ileslp:
    """Decide whether the LESLP is an ILESLP; the certificate's prime set
    (or any superset) makes the run oracle-free.

    Walks the assignments in order: additions are closed over integers,
    exponentials need a nonnegative argument (a sign query on the verified
    prefix), and scalings (m/g) * x need g/gcd(m, g) to divide the value of
    x (a residue query).  Raises RecognitionError at the first failure.
    """
    witness: FrozenSet[int]
    if primes is not None:
        witness = frozenset(primes)
        resolver: Resolver = _context_for(slp, witness)
    else:
        resolver = oracle or FactoringOracle()
        witness = prime_set(slp, resolver)
    for i, op in enumerate(slp.ops):
        if isinstance(op, Exp):
            prefix = Leslp(slp.ops[: i], slp.names[: i])
            probe = prefix.extend(make_scale(1, 1, op.j))
            if SignContext(probe).sign_last() < 0:
                raise RecognitionError(i, "exponent-sign")
        elif isinstance(op, Scale):
            g_eff = op.g // gcd(op.m, op.g) if op.m != 0 else 1
            if g_eff == 1:
                continue
            prefix = Leslp(slp.ops[: i], slp.names[: i])
            probe = prefix.extend(make_scale(1, 1, op.j))
            if mod_ileslp(probe, g_eff, resolver) != 0:
                raise RecognitionError(i, "scale-divisibility")
    return Ileslp(slp, witness)


def try_recognize(slp: Leslp, primes=None, oracle=None) -> Optional[Ileslp]:
    try:
        return recognize(slp, primes, oracle)
    except RecognitionError:
        return None


def _resolver_of(cert: Union[Ileslp, Leslp], resolver: Resolver) -> Tuple[Leslp, Resolver]:
    if isinstance(cert, Ileslp):
        if resolver is None:
            resolver = _context_for(cert.slp, cert.primes)
        return cert.slp, resolver
    return cert, resolver


def term_to_ileslp(
    cert: Union[Ileslp, Leslp],
    tau: LinExpTerm,
    resolver: Resolver = None,
) -> Leslp:
    """Extend the certificate so its last value equals tau evaluated at the
    certificate's variable assignment.

    Remainder subterms (x mod 2^y) are realized first, each as a fresh
    certificate extension; the closing linear combination then references
    their output variables.  All of tau's variables must be assigned in the
    certificate with nonnegative values.
    """
    slp, resolver = _resolver_of(cert, resolver)
    ctx = SignContext(slp)
    var_index: Dict[str, int] = {}
    for v in sorted(tau.variables()):
        try:
            var_index[v] = slp.index_of(v)
        except KeyError:
            raise MissingVariable(v) from None
        if ctx.compare_to_int(var_index[v], 0) < 0:
            raise NegativeVariable(v)

    work = slp
    rem_outputs: Dict[Tuple[str, str], int] = {}
    for (v, w), c in tau.rem:
        res = mod_pow2_ileslp(work, var_index[v], var_index[w], resolver)
        if len(res) <= len(work):
            rem_outputs[(v, w)] = 0  # value(w) <= 0, the remainder is zero
        else:
            work = res
            rem_outputs[(v, w)] = res.last

    linear: Dict[int, int] = {}
    for v, c in tau.lin:
        idx = var_index[v]
        linear[idx] = linear.get(idx, 0) + c
    for key, c in tau.rem:
        z = rem_outputs[key]
        if z != 0:
            linear[z] = linear.get(z, 0) + c
    exps: Dict[int, int] = {}
    for v, c in tau.exp:
        idx = var_index[v]
        exps[idx] = exps.get(idx, 0) + c
    return append_combination(work, linear, exps, const=tau.const)


def check_solution(
    instance: Instance,
    cert: Union[Ileslp, Leslp],
    resolver: Resolver = None,
) -> bool:
    """Does the certificate encode a solution of the instance?

    True iff every instance variable is assigned, all of them are
    nonnegative, and each constraint holds; constraints are decided by sign
    and residue queries on certificate extensions.
    """
    slp, resolver = _resolver_of(cert, resolver)
    ctx = SignContext(slp)
    for v in sorted(instance.variables()):
        try:
            idx = slp.index_of(v)
        except KeyError:
            raise MissingVariable(v) from None
        if ctx.compare_to_int(idx, 0) < 0:
            return False
    for c in instance.program:
        value_cert = term_to_ileslp(cert, c.term, resolver)
        if c.kind == DIV:
            if mod_ileslp(value_cert, c.divisor, resolver) != 0:
                return False
            continue
        sign = SignContext(value_cert).sign_last()
        if c.kind == LE and sign > 0:
            return False
        if c.kind == EQ and sign != 0:
            return False
    return True


def _concat(a: Leslp, b: Leslp, tag: str) -> Tuple[Leslp, Dict[str, int]]:
    """Append b's assignments to a (indices shifted); returns the combined
    program and the index of each of b's variables in it."""
    offset = len(a)
    ops = list(a.ops)
    names = list(a.names)
    index: Dict[str, int] = {}
    for i, op in enumerate(b.ops):
        if isinstance(op, Add):
            op = Add(op.j + offset, op.k + offset)
        elif isinstance(op, Scale):
            op = Scale(op.m, op.g, op.j + offset)
        elif isinstance(op, Exp):
            op = Exp(op.j + offset)
        ops.append(op)
        name = f"{tag}{b.names[i]}"
        while name in names:
            name = "_" + name
        names.append(name)
        index[b.names[i]] = offset + i
    return Leslp(ops, names), index


def compare_objective(
    tau: LinExpTerm,
    cert1: Union[Ileslp, Leslp],
    cert2: Union[Ileslp, Leslp],
    resolver: Resolver = None,
) -> str:
    """Order tau(cert1) against tau(cert2): '<', '=', or '>'.

    Builds one program containing both certificates and decides the sign
    of the difference of the two objective values.
    """
    slp1 = cert1.slp if isinstance(cert1, Ileslp) else cert1
    slp2 = cert2.slp if isinstance(cert2, Ileslp) else cert2
    combined, index2 = _concat(slp1, slp2, "cmp!")
    rename2 = {v: combined.names[index2[v]] for v in slp2.names}

    with_v1 = term_to_ileslp(combined, tau, resolver)
    v1 = with_v1.last
    with_v2 = term_to_ileslp(with_v1, tau.rename(rename2), resolver)
    v2 = with_v2.last
    diff = append_combination(with_v2, {v2: 1, v1: -1}, {})
    sign = SignContext(diff).sign_last()  # sign of tau(cert2) - tau(cert1)
    return "<" if sign > 0 else ("=" if sign == 0 else ">")
