"""Linear-exponential straight-line programs (LESLPs) and their certificates.

A LESLP is a sequence of assignments x_0 <- 0, x_i <- x_j + x_k,
x_i <- (m/g) * x_j, or x_i <- 2^(x_j), with j, k < i.  When every variable
evaluates to an integer the program is an ILESLP; ILESLPs are the
certificate format for solutions of integer linear-exponential programs.

This module holds the data model: assignments, flattening into
sums of powers of two with a common denominator, a bounded direct
evaluator used as a test oracle, and the text format for certificate
files.  Deciding ILESLP-ness lives in ilexp.certify.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from math import gcd
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union


class OverflowAbort(Exception):
    """Direct evaluation hit the bit cap; value too large to materialize."""


class NonIntegerExponent(Exception):
    """Direct evaluation found 2^v with v not an integer (value undefined)."""


@dataclass(frozen=True)
class Zero:
    def rhs_text(self, names):
        return "0"


@dataclass(frozen=True)
class Add:
    j: int
    k: int

    def rhs_text(self, names):
        return f"{names[self.j]} + {names[self.k]}"


@dataclass(frozen=True)
class Scale:
    """x_i <- (m/g) * x_j with m/g in lowest terms and g >= 1."""

    m: int
    g: int
    j: int

    def rhs_text(self, names):
        return f"({self.m}/{self.g}) * {names[self.j]}"


@dataclass(frozen=True)
class Exp:
    j: int

    def rhs_text(self, names):
        return f"2^{names[self.j]}"


Assignment = Union[Zero, Add, Scale, Exp]


def _int_bits(z: int) -> int:
    # Encoding convention: z takes ceil(log2(|z| + 1)) + 1 symbols.
    return (abs(z)).bit_length() + 1 if z != 0 else 1


def make_scale(m: int, g: int, j: int) -> Scale:
    """Scale with the rational brought to lowest terms, g >= 1.

    A zero numerator keeps its denominator: 0/g still contributes g to
    d(sigma), so (0/5) and (0/1) are different assignments.
    """
    if g == 0:
        raise ValueError("scale denominator must be nonzero")
    if g < 0:
        m, g = -m, -g
    if m != 0:
        d = gcd(m, g)
        if d > 1:
            m, g = m // d, g // d
    return Scale(m, g, j)


class Leslp:
    """An immutable sequence of straight-line assignments.

    Variables are canonical indices 0..n; a parallel name tuple is kept for
    I/O only.  The first assignment is always x_0 <- 0.
    """

    __slots__ = ("ops", "names")

    def __init__(self, ops: Sequence[Assignment], names: Optional[Sequence[str]] = None):
        ops = tuple(ops)
        if not ops or not isinstance(ops[0], Zero):
            raise ValueError("a LESLP starts with the assignment x0 := 0")
        for i, op in enumerate(ops):
            if isinstance(op, Add):
                if not (0 <= op.j < i and 0 <= op.k < i):
                    raise ValueError(f"assignment {i}: operand index out of range")
            elif isinstance(op, Scale):
                if not 0 <= op.j < i:
                    raise ValueError(f"assignment {i}: operand index out of range")
                if op.g < 1:
                    raise ValueError(f"assignment {i}: denominator must be >= 1")
                if op.m != 0 and gcd(op.m, op.g) != 1:
                    raise ValueError(f"assignment {i}: {op.m}/{op.g} not in lowest terms")
            elif isinstance(op, Exp):
                if not 0 <= op.j < i:
                    raise ValueError(f"assignment {i}: operand index out of range")
            elif not isinstance(op, Zero):
                raise ValueError(f"assignment {i}: unknown operation {op!r}")
        if names is None:
            names = tuple(f"x{i}" for i in range(len(ops)))
        else:
            names = tuple(names)
            if len(names) != len(ops):
                raise ValueError("name table length mismatch")
            if len(set(names)) != len(names):
                raise ValueError("duplicate variable names")
        self.ops = ops
        self.names = names

    def __len__(self):
        return len(self.ops)

    @property
    def last(self) -> int:
        return len(self.ops) - 1

    def __eq__(self, other):
        return isinstance(other, Leslp) and self.ops == other.ops

    def __hash__(self):
        return hash(self.ops)

    def index_of(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise KeyError(f"no variable named {name!r}") from None

    def extend(self, op: Assignment, name: Optional[str] = None) -> "Leslp":
        """New program with one appended assignment."""
        if name is None:
            name = f"x{len(self.ops)}"
            while name in self.names:
                name = "_" + name
        return Leslp(self.ops + (op,), self.names + (name,))

    def extended(self, ops: Iterable[Assignment]) -> "Leslp":
        prog = self
        for op in ops:
            prog = prog.extend(op)
        return prog

    def denominator_product(self) -> int:
        """d(sigma): product of all scale denominators (empty product = 1)."""
        d = 1
        for op in self.ops:
            if isinstance(op, Scale):
                d *= op.g
        return d

    def numerator_product(self) -> int:
        """e(sigma): product of |m| over all nonzero scale numerators."""
        e = 1
        for op in self.ops:
            if isinstance(op, Scale) and op.m != 0:
                e *= abs(op.m)
        return e

    def bit_size(self) -> int:
        """Canonical symbol count: indices in unary, rationals in binary.

        Deterministic so that thresholds derived from it (the sign
        procedure's constant C) are reproducible.
        """
        total = 0
        for i, op in enumerate(self.ops):
            total += i + 1
            if isinstance(op, Zero):
                total += 1
            elif isinstance(op, Add):
                total += (op.j + 1) + (op.k + 1) + 1
            elif isinstance(op, Scale):
                total += _int_bits(op.m) + _int_bits(op.g) + (op.j + 1) + 1
            else:
                total += (op.j + 1) + 1
        return total

    def text(self) -> str:
        """Certificate text, one assignment per line."""
        lines = [f"{self.names[i]} := {op.rhs_text(self.names)}" for i, op in enumerate(self.ops)]
        return "\n".join(lines) + "\n"

    def __repr__(self):
        return f"Leslp({len(self.ops)} assignments)"


def eval_direct(slp: Leslp, bit_cap: int) -> List[Fraction]:
    """Evaluate all assignments with exact rational arithmetic.

    Aborts with OverflowAbort the moment an exponent argument exceeds
    bit_cap or an intermediate numerator/denominator needs more than
    bit_cap bits.  Raises NonIntegerExponent for 2^v with fractional v;
    negative integer v is fine and yields a rational.
    """
    values: List[Fraction] = []
    for i, op in enumerate(slp.ops):
        if isinstance(op, Zero):
            v = Fraction(0)
        elif isinstance(op, Add):
            v = values[op.j] + values[op.k]
        elif isinstance(op, Scale):
            v = Fraction(op.m, op.g) * values[op.j]
        else:
            arg = values[op.j]
            if arg.denominator != 1:
                raise NonIntegerExponent(
                    f"assignment {i}: exponent argument {arg} is not an integer"
                )
            e = arg.numerator
            if abs(e) > bit_cap:
                raise OverflowAbort(f"assignment {i}: exponent {e} exceeds bit cap {bit_cap}")
            v = Fraction(2) ** e
        if v.numerator.bit_length() > bit_cap or v.denominator.bit_length() > bit_cap:
            raise OverflowAbort(f"assignment {i}: intermediate exceeds {bit_cap} bits")
        values.append(v)
    return values


@dataclass(frozen=True)
class FlatExpansion:
    """Integer expansion sum_j a_j * 2^(x_j) = d(sigma) * value(x_i).

    Coefficients are indexed by j < i and nonzero only where the
    corresponding variable has a nonnegative value.
    """

    owner: int
    coeffs: Tuple[int, ...]
    denominator: int

    def coeff_map(self) -> Dict[int, int]:
        return {j: a for j, a in enumerate(self.coeffs) if a != 0}


def flatten_all(slp: Leslp) -> List[FlatExpansion]:
    """FlatExpansions of every variable, by the inductive construction.

    Maintains rational vectors b_i with value(x_i) = sum_j b_i[j] * 2^(v_j),
    then rescales by d(sigma).  Requires the program to be an ILESLP for
    the expansion invariants to hold; no check is performed here.
    """
    d_full = slp.denominator_product()
    vecs: List[List[Fraction]] = []
    out: List[FlatExpansion] = []
    for i, op in enumerate(slp.ops):
        if isinstance(op, Zero):
            vec = [Fraction(0)] * i
        elif isinstance(op, Add):
            vec = [Fraction(0)] * i
            for j, c in enumerate(vecs[op.j]):
                vec[j] += c
            for j, c in enumerate(vecs[op.k]):
                vec[j] += c
        elif isinstance(op, Scale):
            r = Fraction(op.m, op.g)
            vec = [r * c for c in vecs[op.j]] + [Fraction(0)] * (i - op.j)
        else:
            vec = [Fraction(0)] * i
            vec[op.j] = Fraction(1)
        vecs.append(vec)
        ints = []
        for c in vec:
            scaled = c * d_full
            if scaled.denominator != 1:
                raise ValueError(
                    f"assignment {i}: flattening produced a non-integer coefficient; "
                    "input is not an ILESLP"
                )
            ints.append(scaled.numerator)
        out.append(FlatExpansion(i, tuple(ints), d_full))
    return out


def flatten(slp: Leslp, i: int) -> FlatExpansion:
    """FlatExpansion of variable i (computes the full table)."""
    return flatten_all(slp)[i]


def encode_int(c: int) -> Leslp:
    """A small certificate with last value c: (x0 <- 0) for c = 0, else
    (x0 <- 0, x1 <- 2^x0, x2 <- c * x1)."""
    if c == 0:
        return Leslp((Zero(),))
    return Leslp((Zero(), Exp(0), make_scale(c, 1, 1)))


# --- linear-combination extension helper -------------------------------

def append_combination(
    slp: Leslp,
    linear: Dict[int, int],
    exps: Dict[int, int],
    const: int = 0,
    divide_by: int = 1,
) -> Leslp:
    """Extend with assignments computing
    (sum linear[j]*x_j + sum exps[j]*2^(x_j) + const) / divide_by,
    leaving the result in the last variable."""
    prog = slp
    acc: Optional[int] = None

    def add_in(idx: int):
        nonlocal prog, acc
        if acc is None:
            acc = idx
        else:
            prog = prog.extend(Add(acc, idx))
            acc = prog.last

    for j in sorted(linear):
        c = linear[j]
        if c == 0:
            continue
        if c == 1:
            add_in(j)
        else:
            prog = prog.extend(make_scale(c, 1, j))
            add_in(prog.last)
    for j in sorted(exps):
        c = exps[j]
        if c == 0:
            continue
        prog = prog.extend(Exp(j))
        e_idx = prog.last
        if c == 1:
            add_in(e_idx)
        else:
            prog = prog.extend(make_scale(c, 1, e_idx))
            add_in(prog.last)
    if const != 0 or acc is None:
        prog = prog.extend(Exp(0))  # 2^0 = 1
        one = prog.last
        if const == 1:
            add_in(one)
        else:
            prog = prog.extend(make_scale(const, 1, one))
            add_in(prog.last)
    if divide_by != 1:
        prog = prog.extend(make_scale(1, divide_by, acc))
        acc = prog.last
    if acc != prog.last:
        prog = prog.extend(make_scale(1, 1, acc))
    return prog


# --- certificate text format -------------------------------------------

def parse_certificate(text: str) -> Tuple[Leslp, Optional[frozenset]]:
    """Parse the certificate text format.

    Lines are `name := rhs` with rhs one of `0`, `a + b`, `(m/g) * a`,
    `m * a`, `2^a`.  `#` starts a comment.  An optional header line
    `primes: 2,3,7` carries a bundled prime set.
    """
    ops: List[Assignment] = []
    names: List[str] = []
    primes: Optional[frozenset] = None
    index: Dict[str, int] = {}

    def ref(tok: str, lineno: int) -> int:
        if tok not in index:
            raise ValueError(f"line {lineno}: unknown variable {tok!r}")
        return index[tok]

    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("primes:"):
            body = line[len("primes:"):].strip()
            primes = frozenset(int(t) for t in body.split(",") if t.strip()) if body else frozenset()
            continue
        if ":=" not in line:
            raise ValueError(f"line {lineno}: expected `name := rhs`")
        lhs, rhs = (part.strip() for part in line.split(":=", 1))
        if not lhs.isidentifier():
            raise ValueError(f"line {lineno}: bad variable name {lhs!r}")
        if lhs in index:
            raise ValueError(f"line {lineno}: variable {lhs!r} assigned twice")
        op: Assignment
        if rhs == "0":
            op = Zero()
        elif rhs.startswith("2^"):
            op = Exp(ref(rhs[2:].strip(), lineno))
        elif "+" in rhs:
            a, b = (part.strip() for part in rhs.split("+", 1))
            op = Add(ref(a, lineno), ref(b, lineno))
        elif "*" in rhs:
            coeff, var = (part.strip() for part in rhs.split("*", 1))
            if coeff.startswith("(") and coeff.endswith(")"):
                coeff = coeff[1:-1].strip()
            if "/" in coeff:
                m_str, g_str = coeff.split("/", 1)
                m, g = int(m_str), int(g_str)
            else:
                m, g = int(coeff), 1
            op = make_scale(m, g, ref(var, lineno))
        else:
            raise ValueError(f"line {lineno}: cannot parse rhs {rhs!r}")
        if not ops and not isinstance(op, Zero):
            raise ValueError(f"line {lineno}: first assignment must be `{lhs} := 0`")
        index[lhs] = len(ops)
        ops.append(op)
        names.append(lhs)
    if not ops:
        raise ValueError("empty certificate")
    return Leslp(ops, names), primes


def print_certificate(slp: Leslp, primes: Optional[Iterable[int]] = None) -> str:
    out = ""
    if primes is not None:
        out += "primes: " + ",".join(str(p) for p in sorted(primes)) + "\n"
    return out + slp.text()
