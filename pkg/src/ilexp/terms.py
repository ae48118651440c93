"""Linear-exponential terms and programs with divisibility constraints.

A term is an integer combination of variables x, powers 2^x, remainders
(x mod 2^y), and a constant.  A program is a conjunction of constraints
tau <= 0, tau = 0, and d | tau; strict inequalities are normalized to
tau + 1 <= 0 on construction.  Divisibility constraints keep all their
integers reduced into [0..d-1].

Terms are immutable; all operations return new values.  Variables are
plain strings.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import gcd, lcm
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Set, Tuple


class NotDivisible(Exception):
    """An ad-hoc substitution hit a coefficient its divisor does not divide."""


def _clean(d: Mapping) -> Dict:
    return {k: v for k, v in d.items() if v != 0}


@dataclass(frozen=True)
class LinExpTerm:
    """sum a_i*x_i + sum b_i*2^(x_i) + sum c_ij*(x_i mod 2^(x_j)) + const."""

    lin: Tuple[Tuple[str, int], ...] = ()
    exp: Tuple[Tuple[str, int], ...] = ()
    rem: Tuple[Tuple[Tuple[str, str], int], ...] = ()
    const: int = 0

    @staticmethod
    def make(
        lin: Mapping[str, int] | None = None,
        exp: Mapping[str, int] | None = None,
        rem: Mapping[Tuple[str, str], int] | None = None,
        const: int = 0,
    ) -> "LinExpTerm":
        return LinExpTerm(
            tuple(sorted(_clean(lin or {}).items())),
            tuple(sorted(_clean(exp or {}).items())),
            tuple(sorted(_clean(rem or {}).items())),
            const,
        )

    @staticmethod
    def of(var: str, coeff: int = 1) -> "LinExpTerm":
        return LinExpTerm.make(lin={var: coeff})

    @staticmethod
    def constant(c: int) -> "LinExpTerm":
        return LinExpTerm.make(const=c)

    def lin_map(self) -> Dict[str, int]:
        return dict(self.lin)

    def exp_map(self) -> Dict[str, int]:
        return dict(self.exp)

    def rem_map(self) -> Dict[Tuple[str, str], int]:
        return dict(self.rem)

    def variables(self) -> Set[str]:
        cached = getattr(self, "_vars", None)
        if cached is None:
            cached = {v for v, _ in self.lin} | {v for v, _ in self.exp}
            for (a, b), _ in self.rem:
                cached.add(a)
                cached.add(b)
            object.__setattr__(self, "_vars", cached)
        return cached

    def lin_coeff(self, var: str) -> int:
        return dict(self.lin).get(var, 0)

    def exp_coeff(self, var: str) -> int:
        return dict(self.exp).get(var, 0)

    def is_linear(self) -> bool:
        return not self.exp and not self.rem

    def is_constant(self) -> bool:
        return not (self.lin or self.exp or self.rem)

    def __add__(self, other: "LinExpTerm") -> "LinExpTerm":
        lin = dict(self.lin)
        for v, c in other.lin:
            lin[v] = lin.get(v, 0) + c
        exp = dict(self.exp)
        for v, c in other.exp:
            exp[v] = exp.get(v, 0) + c
        rem = dict(self.rem)
        for k, c in other.rem:
            rem[k] = rem.get(k, 0) + c
        return LinExpTerm.make(lin, exp, rem, self.const + other.const)

    def __neg__(self) -> "LinExpTerm":
        return self.scaled(-1)

    def __sub__(self, other: "LinExpTerm") -> "LinExpTerm":
        return self + (-other)

    def scaled(self, a: int) -> "LinExpTerm":
        if a == 1:
            return self
        return LinExpTerm.make(
            {v: a * c for v, c in self.lin},
            {v: a * c for v, c in self.exp},
            {k: a * c for k, c in self.rem},
            a * self.const,
        )

    def shifted(self, const: int) -> "LinExpTerm":
        return LinExpTerm(self.lin, self.exp, self.rem, self.const + const)

    def one_norm(self) -> int:
        return (
            sum(abs(c) for _, c in self.lin)
            + sum(abs(c) for _, c in self.exp)
            + sum(abs(c) for _, c in self.rem)
            + abs(self.const)
        )

    def lin_norm(self) -> int:
        vals = [abs(c) for _, c in self.lin] + [abs(c) for _, c in self.rem]
        return max(vals, default=0)

    def evaluate(self, nu: Mapping[str, int]) -> int:
        total = self.const
        for v, c in self.lin:
            total += c * nu[v]
        for v, c in self.exp:
            if nu[v] < 0:
                raise ValueError(f"2^{v} with negative assignment {nu[v]}")
            total += c * (1 << nu[v])
        for (a, b), c in self.rem:
            total += c * (nu[a] % (1 << nu[b]))
        return total

    def substitute(self, tau: "LinExpTerm", a: int, b: int, x: str) -> "LinExpTerm":
        """The ad-hoc substitution rho[tau/a // b*x] enforcing a*b*x = tau.

        Multiplies every integer by |a|, then rewrites the scaled linear
        occurrence (|a|*h)*x as c*tau where |a|*h = a*b*c.  Occurrences of
        x inside 2^x or remainders are untouched (callers never substitute
        exponentiated variables).
        """
        if a == 0 or b == 0:
            raise ValueError("substitution requires nonzero a, b")
        h = self.lin_coeff(x)
        scaled = self.scaled(abs(a))
        if h == 0:
            return scaled
        if h % b != 0:
            raise NotDivisible(f"coefficient {h} of {x} not divisible by {b}")
        c = (1 if a > 0 else -1) * (h // b)
        lin = scaled.lin_map()
        del lin[x]
        return LinExpTerm.make(lin, scaled.exp_map(), scaled.rem_map(), scaled.const) + tau.scaled(c)

    def substitute_simultaneous(
        self, subs: Sequence[Tuple["LinExpTerm", str]], a: int, b: int
    ) -> "LinExpTerm":
        """Simultaneously apply [tau_i/a // b*x_i]: one scaling by |a|, then
        each replacement.  The x_i must be distinct and absent from all tau_j."""
        names = [x for _, x in subs]
        if len(set(names)) != len(names):
            raise ValueError("simultaneous substitution requires distinct variables")
        for tau, _ in subs:
            for x in names:
                if x in tau.variables():
                    raise ValueError(f"replacement terms must not mention {x}")
        result = self.scaled(abs(a))
        ab = a * b
        for tau, x in subs:
            h = result.lin_coeff(x)
            if h == 0:
                continue
            if h % ab != 0:
                raise NotDivisible(f"coefficient {h} of {x} not divisible by {ab}")
            c = h // ab
            lin = result.lin_map()
            del lin[x]
            result = LinExpTerm.make(lin, result.exp_map(), result.rem_map(), result.const)
            result = result + tau.scaled(c)
        return result

    def rename(self, mapping: Mapping[str, str]) -> "LinExpTerm":
        def nm(v):
            return mapping.get(v, v)

        lin: Dict[str, int] = {}
        for v, c in self.lin:
            lin[nm(v)] = lin.get(nm(v), 0) + c
        exp: Dict[str, int] = {}
        for v, c in self.exp:
            exp[nm(v)] = exp.get(nm(v), 0) + c
        rem: Dict[Tuple[str, str], int] = {}
        for (p, q), c in self.rem:
            key = (nm(p), nm(q))
            rem[key] = rem.get(key, 0) + c
        return LinExpTerm.make(lin, exp, rem, self.const)

    def text(self) -> str:
        parts: List[str] = []

        def push(coeff, atom):
            if coeff == 0:
                return
            sign = "-" if coeff < 0 else "+"
            mag = abs(coeff)
            body = atom if mag == 1 and atom else (f"{mag}*{atom}" if atom else str(mag))
            parts.append((sign, body))

        for v, c in self.lin:
            push(c, v)
        for v, c in self.exp:
            push(c, f"2^{v}")
        for (p, q), c in self.rem:
            push(c, f"({p} mod 2^{q})")
        if self.const != 0:
            push(self.const, "")
        if not parts:
            parts.append(("+", "0"))
        first_sign, first_body = parts[0]
        out = ("-" if first_sign == "-" else "") + first_body
        for sign, body in parts[1:]:
            out += f" {sign} {body}"
        return out

    def __repr__(self):
        return f"<{self.text()}>"


ZERO_TERM = LinExpTerm.make()


# --- constraints and programs ------------------------------------------

LE = "le"   # tau <= 0
EQ = "eq"   # tau = 0
DIV = "div"  # d | tau


@dataclass(frozen=True)
class Constraint:
    kind: str
    term: LinExpTerm
    divisor: int = 0

    def __post_init__(self):
        if self.kind == DIV:
            if self.divisor < 1:
                raise ValueError("divisibility constraints need a divisor >= 1")
        elif self.kind not in (LE, EQ):
            raise ValueError(f"unknown constraint kind {self.kind!r}")

    def holds(self, nu: Mapping[str, int]) -> bool:
        v = self.term.evaluate(nu)
        if self.kind == LE:
            return v <= 0
        if self.kind == EQ:
            return v == 0
        return v % self.divisor == 0

    def text(self) -> str:
        if self.kind == LE:
            return f"{self.term.text()} <= 0"
        if self.kind == EQ:
            return f"{self.term.text()} = 0"
        return f"{self.divisor} | {self.term.text()}"


def le(term: LinExpTerm) -> Constraint:
    return Constraint(LE, term)


def lt(term: LinExpTerm) -> Constraint:
    """Strict tau < 0 normalized to tau + 1 <= 0 (all terms are integers)."""
    return Constraint(LE, term.shifted(1))


def eq(term: LinExpTerm) -> Constraint:
    return Constraint(EQ, term)


def div(d: int, term: LinExpTerm) -> Constraint:
    """d | tau, with every integer in tau reduced into [0..d-1]."""
    if d < 1:
        raise ValueError("divisor must be >= 1")
    reduced = LinExpTerm.make(
        {v: c % d for v, c in term.lin},
        {v: c % d for v, c in term.exp},
        {k: c % d for k, c in term.rem},
        term.const % d,
    )
    return Constraint(DIV, reduced, d)


@dataclass(frozen=True)
class LinExpProgram:
    """A conjunction of constraints."""

    constraints: Tuple[Constraint, ...] = ()

    @staticmethod
    def make(constraints: Iterable[Constraint]) -> "LinExpProgram":
        return LinExpProgram(tuple(constraints))

    def __iter__(self):
        return iter(self.constraints)

    def __len__(self):
        return len(self.constraints)

    def conjoin(self, *extra: Constraint) -> "LinExpProgram":
        return LinExpProgram(self.constraints + tuple(extra))

    def variables(self) -> Set[str]:
        out: Set[str] = set()
        for c in self.constraints:
            out |= c.term.variables()
        return out

    def card(self) -> int:
        return len(self.constraints)

    def fterms(self) -> List[LinExpTerm]:
        return [c.term for c in self.constraints if c.kind in (LE, EQ)]

    def one_norm(self) -> int:
        return max((t.one_norm() for t in self.fterms()), default=0)

    def lin_norm(self) -> int:
        return max((t.lin_norm() for t in self.fterms()), default=0)

    def fmod(self, var: Optional[str] = None) -> int:
        """lcm of divisors of divisibility constraints (mentioning var)."""
        result = 1
        for c in self.constraints:
            if c.kind != DIV:
                continue
            if var is not None and var not in c.term.variables():
                continue
            result = lcm(result, c.divisor)
        return result

    def satisfied_by(self, nu: Mapping[str, int]) -> bool:
        return all(c.holds(nu) for c in self.constraints)

    def substitute(self, tau: LinExpTerm, a: int, b: int, x: str) -> "LinExpProgram":
        """Substitution over a whole program: (in)equalities get
        rho[tau/a // b*x]; a divisibility d | rho becomes
        (|a*b| * d) | rho[tau / (a*b*x)]."""
        out: List[Constraint] = []
        for c in self.constraints:
            if c.kind == DIV:
                new_term = c.term.substitute(tau, a * b, 1, x)
                out.append(div(abs(a * b) * c.divisor, new_term))
            else:
                out.append(Constraint(c.kind, c.term.substitute(tau, a, b, x)))
        return LinExpProgram(tuple(out))

    def rename(self, mapping: Mapping[str, str]) -> "LinExpProgram":
        return LinExpProgram(
            tuple(
                Constraint(c.kind, c.term.rename(mapping), c.divisor)
                for c in self.constraints
            )
        )

    def text(self) -> str:
        return "\n".join(c.text() for c in self.constraints)


def substitute(rho: LinExpTerm, tau: LinExpTerm, a: int, b: int, x: str) -> LinExpTerm:
    return rho.substitute(tau, a, b, x)


def substitute_program(
    phi: LinExpProgram, tau: LinExpTerm, a: int, b: int, x: str
) -> LinExpProgram:
    return phi.substitute(tau, a, b, x)


def simultaneous_substitute(
    rho: LinExpTerm, subs: Sequence[Tuple[LinExpTerm, str]], a: int, b: int
) -> LinExpTerm:
    return rho.substitute_simultaneous(subs, a, b)


def eval_term(tau: LinExpTerm, nu: Mapping[str, int]) -> int:
    return tau.evaluate(nu)


# --- orderings ----------------------------------------------------------

@dataclass(frozen=True)
class Ordering:
    """2^(v_n) >= ... >= 2^(v_1) >= 2^(v_0) = 1, stored top down.

    The last entry is the fresh floor variable with 2^(v_0) = 1; it never
    occurs in the program being solved.
    """

    variables: Tuple[str, ...]

    def __post_init__(self):
        if len(self.variables) < 1:
            raise ValueError("ordering needs at least the floor variable")

    @property
    def top(self) -> str:
        return self.variables[0]

    @property
    def second(self) -> str:
        return self.variables[1]

    @property
    def floor(self) -> str:
        return self.variables[-1]

    def drop_top(self) -> "Ordering":
        return Ordering(self.variables[1:])

    def is_floor_only(self) -> bool:
        return len(self.variables) == 1

    def below_or_equal(self, v: str) -> Tuple[str, ...]:
        """Variables w with 2^w <= 2^v implied by the ordering."""
        i = self.variables.index(v)
        return self.variables[i:]


# --- least significant parts -------------------------------------------

def lst_term(tau: LinExpTerm, theta: Ordering) -> LinExpTerm:
    """Least significant part of a linear-exponential term: everything
    except the leading exponential a * 2^(top)."""
    exp = tau.exp_map()
    exp.pop(theta.top, None)
    return LinExpTerm.make(tau.lin_map(), exp, tau.rem_map(), tau.const)


def lst(phi: LinExpProgram, theta: Ordering) -> Set[LinExpTerm]:
    """Set of +/- least significant parts of the (in)equality terms."""
    out: Set[LinExpTerm] = set()
    for t in phi.fterms():
        part = lst_term(t, theta)
        out.add(part)
        out.add(-part)
    return out


@dataclass(frozen=True)
class QuotientTerm:
    """a * 2^top + (sum f[q]*q + f0) * 2^second + lsp.

    The intermediate term shape produced while dividing a program by
    2^second: quotient variables q occur only as multipliers of 2^second,
    and the least significant part lsp collects everything below.
    """

    a: int
    f: Tuple[Tuple[str, int], ...]
    f0: int
    lsp: LinExpTerm

    @staticmethod
    def make(a: int, f: Mapping[str, int], f0: int, lsp: LinExpTerm) -> "QuotientTerm":
        return QuotientTerm(a, tuple(sorted(_clean(f).items())), f0, lsp)

    def f_map(self) -> Dict[str, int]:
        return dict(self.f)

    def one_norm(self) -> int:
        return (
            abs(self.a)
            + sum(abs(c) for _, c in self.f)
            + abs(self.f0)
            + self.lsp.one_norm()
        )

    def lin_norm(self) -> int:
        return max([self.lsp.lin_norm()] + [abs(c) for _, c in self.f], default=0)


# --- instance text format ------------------------------------------------

@dataclass(frozen=True)
class Instance:
    goal: str  # "max" | "min"
    objective: LinExpTerm
    program: LinExpProgram

    def variables(self) -> Set[str]:
        return self.objective.variables() | self.program.variables()

    def text(self) -> str:
        head = "maximize" if self.goal == "max" else "minimize"
        lines = [f"{head} {self.objective.text()}", "subject to"]
        lines += [f"  {c.text()}" for c in self.program.constraints]
        return "\n".join(lines) + "\n"


class _TermParser:
    def __init__(self, text: str, lineno: int):
        self.toks = self._tokenize(text, lineno)
        self.pos = 0
        self.lineno = lineno

    @staticmethod
    def _tokenize(text: str, lineno: int) -> List[str]:
        out = []
        i = 0
        while i < len(text):
            ch = text[i]
            if ch.isspace():
                i += 1
            elif ch.isdigit():
                j = i
                while j < len(text) and text[j].isdigit():
                    j += 1
                out.append(text[i:j])
                i = j
            elif ch.isalpha() or ch == "_":
                j = i
                while j < len(text) and (text[j].isalnum() or text[j] == "_"):
                    j += 1
                out.append(text[i:j])
                i = j
            elif ch in "+-*^()":
                out.append(ch)
                i += 1
            else:
                raise ValueError(f"line {lineno}: unexpected character {ch!r}")
        return out

    def peek(self) -> Optional[str]:
        return self.toks[self.pos] if self.pos < len(self.toks) else None

    def take(self, expected: Optional[str] = None) -> str:
        tok = self.peek()
        if tok is None or (expected is not None and tok != expected):
            raise ValueError(
                f"line {self.lineno}: expected {expected or 'a token'}, got {tok!r}"
            )
        self.pos += 1
        return tok

    def parse(self) -> LinExpTerm:
        term = ZERO_TERM
        sign = 1
        tok = self.peek()
        if tok in ("+", "-"):
            sign = -1 if self.take() == "-" else 1
        while True:
            term = term + self._atom(sign)
            tok = self.peek()
            if tok is None:
                return term
            if tok not in ("+", "-"):
                raise ValueError(f"line {self.lineno}: unexpected token {tok!r}")
            sign = -1 if self.take() == "-" else 1

    def _atom(self, sign: int) -> LinExpTerm:
        tok = self.peek()
        coeff = sign
        if tok is not None and tok.isdigit():
            self.take()
            coeff = sign * int(tok)
            if self.peek() != "*":
                if self.peek() == "^":
                    # bare 2^v with the 2 read as a number
                    if tok != "2":
                        raise ValueError(f"line {self.lineno}: only base-2 exponentials")
                    self.take("^")
                    return LinExpTerm.make(exp={self.take(): sign})
                return LinExpTerm.constant(coeff)
            self.take("*")
        return self._base(coeff)

    def _base(self, coeff: int) -> LinExpTerm:
        tok = self.take()
        if tok == "2" and self.peek() == "^":
            self.take("^")
            return LinExpTerm.make(exp={self.take(): coeff})
        if tok == "(":
            var = self.take()
            self.take("mod")
            two = self.take()
            if two != "2":
                raise ValueError(f"line {self.lineno}: remainders are modulo 2^v")
            self.take("^")
            modvar = self.take()
            self.take(")")
            return LinExpTerm.make(rem={(var, modvar): coeff})
        if tok.isidentifier():
            return LinExpTerm.make(lin={tok: coeff})
        raise ValueError(f"line {self.lineno}: cannot parse atom at {tok!r}")


def parse_term(text: str, lineno: int = 0) -> LinExpTerm:
    return _TermParser(text, lineno).parse()


def parse_instance(text: str) -> Instance:
    """Parse the instance format: a `maximize`/`minimize` goal line,
    `subject to`, then one constraint per line (`term <= 0`, `term = 0`,
    or `d | term`).  `#` starts a comment."""
    goal: Optional[str] = None
    objective: Optional[LinExpTerm] = None
    constraints: List[Constraint] = []
    seen_subject_to = False
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if goal is None:
            head, _, rest = line.partition(" ")
            if head not in ("maximize", "minimize"):
                raise ValueError(f"line {lineno}: expected maximize/minimize")
            goal = "max" if head == "maximize" else "min"
            objective = parse_term(rest, lineno)
            continue
        if not seen_subject_to:
            if line != "subject to":
                raise ValueError(f"line {lineno}: expected `subject to`")
            seen_subject_to = True
            continue
        constraints.append(_parse_constraint(line, lineno))
    if goal is None or objective is None or not seen_subject_to:
        raise ValueError("instance needs a goal line and `subject to`")
    return Instance(goal, objective, LinExpProgram.make(constraints))


def _parse_constraint(line: str, lineno: int) -> Constraint:
    if "|" in line:
        d_str, term_str = line.split("|", 1)
        return div(int(d_str.strip()), parse_term(term_str, lineno))
    for op, maker in (("<=", le), ("=", eq)):
        if op in line:
            lhs, rhs = line.split(op, 1)
            if rhs.strip() != "0":
                raise ValueError(f"line {lineno}: right-hand side must be 0")
            return maker(parse_term(lhs, lineno))
    raise ValueError(f"line {lineno}: cannot parse constraint {line!r}")
