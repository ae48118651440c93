"""Exact optimization of linear-exponential programs.

The search realizes a non-deterministic elimination procedure by
exhaustive depth-first enumeration with a fixed guess order: variable
orderings lexicographically, integer offsets ascending, boundary test
points before hyperplane test points.  Each accepted branch produces a
straight-line certificate; the best one is selected by sign comparisons,
never by materializing objective values.

One iteration of the main loop eliminates the largest variable x of the
current ordering (with y the second largest):

  step I    divide the program by 2^y: quotient/remainder variables,
            a linear system gamma over the quotients and a proxy u for
            2^(x-y), and a program psi over everything below;
  step II   eliminate the old quotient variables from gamma (gauss_opt),
            updating the circuit that reconstructs eliminated variables;
  step III  eliminate x and u from gamma;
  step IV   enumerate the surviving quotient variable and fold it into
            the circuit.

Branches that cannot possibly have solutions are pruned with interval
reasoning derived from the branch's own constraints; pruning never
removes a satisfiable branch, and no pruning is applied across branches
(every accepted certificate is collected and compared).
"""

from __future__ import annotations

import itertools
import time
from dataclasses import dataclass, field, replace
from math import gcd, lcm
from typing import Dict, Iterator, List, Mapping, Optional, Sequence, Set, Tuple

from .certify import Ileslp, check_solution, compare_objective, prime_set, recognize
from .numbers import FactoringOracle, dlog2, mult_order, odd_part
from .slp import Add, Exp, Leslp, Zero, make_scale
from .terms import (
    DIV,
    EQ,
    LE,
    Constraint,
    Instance,
    LinExpProgram,
    LinExpTerm,
    Ordering,
    QuotientTerm,
    div,
    eq,
    le,
    lt,
)


class ResourceBudgetExceeded(Exception):
    """The configured branch or time budget ran out; no verdict implied."""


class InternalNonExactDivision(Exception):
    """A division the elimination discipline guarantees exact failed;
    always an implementation bug."""


class BranchReject(Exception):
    """An assert in the elimination discipline failed: the branch has no
    solutions and is abandoned."""


@dataclass
class Budget:
    max_branches: Optional[int] = 2_000_000
    max_seconds: Optional[float] = 600.0

    def start(self) -> "_BudgetClock":
        return _BudgetClock(self)


class _BudgetClock:
    def __init__(self, budget: Budget):
        self.budget = budget
        self.nodes = 0
        self.t0 = time.monotonic()

    def tick(self, cost: int = 1):
        self.nodes += cost
        if self.budget.max_branches is not None and self.nodes > self.budget.max_branches:
            raise ResourceBudgetExceeded(f"branch budget {self.budget.max_branches} exceeded")
        if (
            self.budget.max_seconds is not None
            and (self.nodes & 0xFF) == 0
            and time.monotonic() - self.t0 > self.budget.max_seconds
        ):
            raise ResourceBudgetExceeded(f"time budget {self.budget.max_seconds}s exceeded")


# ---------------------------------------------------------------------------
# circuits


@dataclass(frozen=True)
class PreLeacEntry:
    var: str
    exps: Tuple[Tuple[str, int], ...]  # coefficients on 2^(w)
    rem: str                           # remainder variable added verbatim

    def exp_map(self) -> Dict[str, int]:
        return dict(self.exps)


@dataclass(frozen=True)
class PreLeac:
    """x_{n-i} <- (sum a_{i,j} 2^(x_{n-j})) / mu + r_{n-i}, stored from the
    earliest-assigned variable (x_{n-k+1}) to the last (x_n)."""

    mu: int = 1
    entries: Tuple[PreLeacEntry, ...] = ()

    @property
    def k(self) -> int:
        return len(self.entries)

    def xi(self) -> int:
        return sum(abs(c) for e in self.entries for _, c in e.exps)

    def rem_for(self, var: str) -> str:
        for e in self.entries:
            if e.var == var:
                return e.rem
        raise KeyError(var)


@dataclass(frozen=True)
class LeacXEntry:
    var: str
    exps: Tuple[Tuple[str, int], ...]
    q: str
    base: str  # the variable b with the q * 2^b contribution
    rem: str

    def exp_map(self) -> Dict[str, int]:
        return dict(self.exps)


@dataclass(frozen=True)
class Leac:
    """A (k, ell)-circuit: ell quotient assignments (newest first) over the
    free quotient variables and u, then x-assignments from x_{n-k} up."""

    mu: int
    eta: int
    q_assignments: Tuple[Tuple[str, LinExpTerm], ...]
    x_entries: Tuple[LeacXEntry, ...]

    @property
    def k(self) -> int:
        return len(self.x_entries) - 1

    @property
    def ell(self) -> int:
        return len(self.q_assignments)

    def xi(self) -> int:
        return sum(abs(c) for e in self.x_entries for _, c in e.exps)

    def assignment_of(self, q: str) -> Optional[LinExpTerm]:
        for name, tau in self.q_assignments:
            if name == q:
                return tau
        return None


@dataclass(frozen=True)
class Outcome:
    kind: str  # "infeasible" | "unbounded" | "optimal"
    certificate: Optional[Ileslp] = None
    note: str = ""

    @property
    def is_optimal(self) -> bool:
        return self.kind == "optimal"


# ---------------------------------------------------------------------------
# interval reasoning (sound pruning and guess filtering)

Range = Tuple[int, Optional[int]]  # (lo, hi); hi None = unbounded

_EXP_CAP = 1 << 9  # saturate exponents beyond this many bits


class _Infeasible(Exception):
    pass


def _exp_lo(lo: int) -> int:
    return 1 << min(lo, _EXP_CAP)


def _exp_hi(hi: Optional[int]) -> Optional[int]:
    if hi is None or hi > _EXP_CAP:
        return None
    return 1 << hi


def _term_range(term: LinExpTerm, ranges: Mapping[str, Range]) -> Range:
    """A sound enclosure of the term's value under the variable ranges.

    Saturating: huge exponents widen to infinity, so the result is always
    a valid superset of the reachable values.
    """
    lo, hi = term.const, term.const

    def add(alo, ahi):
        nonlocal lo, hi
        if lo is not None:
            lo = None if alo is None else lo + alo
        if hi is not None:
            hi = None if ahi is None else hi + ahi

    for v, c in term.lin:
        vlo, vhi = ranges.get(v, (0, None))
        if c >= 0:
            add(c * vlo, None if vhi is None else c * vhi)
        else:
            add(None if vhi is None else c * vhi, c * vlo)
    for v, c in term.exp:
        vlo, vhi = ranges.get(v, (0, None))
        elo, ehi = _exp_lo(vlo), _exp_hi(vhi)
        if c >= 0:
            add(c * elo, None if ehi is None else c * ehi)
        else:
            add(None if ehi is None else c * ehi, c * elo)
    for (a, b), c in term.rem:
        blo, bhi = ranges.get(b, (0, None))
        mhi = _exp_hi(bhi)
        top = None if mhi is None else mhi - 1
        alo, ahi = ranges.get(a, (0, None))
        if top is not None and ahi is not None:
            top = min(top, ahi)
        elif ahi is not None:
            top = ahi
        if c >= 0:
            add(0, None if top is None else c * top)
        else:
            add(None if top is None else c * top, 0)
    return lo, hi


def _floor_div(a: int, b: int) -> int:
    return a // b


def _ceil_div(a: int, b: int) -> int:
    return -((-a) // b)


def _log2_floor(n: int) -> int:
    return n.bit_length() - 1


def derive_ranges(
    program: LinExpProgram,
    ordering: Optional[Ordering] = None,
    seed: Optional[Mapping[str, Range]] = None,
    rounds: int = 8,
) -> Optional[Dict[str, Range]]:
    """Per-variable ranges implied by the constraints (None = infeasible).

    Starts from nonnegativity (plus any seeded ranges), then repeatedly
    tightens: linear and exponential occurrences of a variable against the
    enclosure of the rest of the term, equalities in both directions, and
    the chain inequalities of the ordering.
    """
    ranges: Dict[str, Range] = {v: (0, None) for v in program.variables()}
    if ordering is not None:
        for v in ordering.variables:
            ranges.setdefault(v, (0, None))
        ranges[ordering.floor] = (0, 0)
    if seed:
        for v, (lo, hi) in seed.items():
            clo, chi = ranges.get(v, (0, None))
            lo = max(lo, clo)
            hi = chi if hi is None else (hi if chi is None else min(hi, chi))
            ranges[v] = (lo, hi)

    def tighten(v: str, lo: Optional[int] = None, hi: Optional[int] = None):
        clo, chi = ranges.get(v, (0, None))
        if lo is not None:
            clo = max(clo, lo)
        if hi is not None:
            chi = hi if chi is None else min(chi, hi)
        if chi is not None and clo > chi:
            raise _Infeasible()
        ranges[v] = (clo, chi)

    directions: List[LinExpTerm] = []
    for c in program:
        if c.kind == LE:
            directions.append(c.term)
        elif c.kind == EQ:
            directions.append(c.term)
            directions.append(-c.term)

    try:
        for _ in range(rounds):
            before = dict(ranges)
            if ordering is not None:
                vs = ordering.variables
                for upper, lower in zip(vs, vs[1:]):
                    # 2^upper >= 2^lower, hence upper >= lower
                    tighten(upper, lo=ranges[lower][0])
                    if ranges[upper][1] is not None:
                        tighten(lower, hi=ranges[upper][1])
            for term in directions:
                # term <= 0
                for v, c in term.lin:
                    rest = LinExpTerm(
                        tuple((w, a) for w, a in term.lin if w != v),
                        term.exp,
                        term.rem,
                        term.const,
                    )
                    rlo, _ = _term_range(rest, ranges)
                    if rlo is None:
                        continue
                    if c > 0:
                        tighten(v, hi=_floor_div(-rlo, c))
                    elif rlo > 0:
                        tighten(v, lo=_ceil_div(rlo, -c))
                for v, c in term.exp:
                    rest = LinExpTerm(
                        term.lin,
                        tuple((w, a) for w, a in term.exp if w != v),
                        term.rem,
                        term.const,
                    )
                    rlo, _ = _term_range(rest, ranges)
                    if rlo is None:
                        continue
                    if c > 0:
                        # 2^v <= -rlo / c
                        cap = _floor_div(-rlo, c)
                        if cap < 1:
                            raise _Infeasible()
                        tighten(v, hi=_log2_floor(cap))
                    elif rlo > 0:
                        # 2^v >= rlo / -c
                        need = _ceil_div(rlo, -c)
                        if need > 1:
                            tighten(v, lo=(need - 1).bit_length())
            if ranges == before:
                break
        for c in program:
            lo, hi = _term_range(c.term, ranges)
            if c.kind == LE and lo is not None and lo > 0:
                raise _Infeasible()
            if c.kind == EQ and ((lo is not None and lo > 0) or (hi is not None and hi < 0)):
                raise _Infeasible()
            if c.kind == DIV and lo is not None and hi is not None and lo == hi:
                if lo % c.divisor != 0:
                    raise _Infeasible()
    except _Infeasible:
        return None
    return ranges


_GRID_CAP = 50_000


def _grid_points(
    variables: Sequence[str], ranges: Mapping[str, Range]
) -> Optional[List[Dict[str, int]]]:
    """All assignments of the variables within their (finite) ranges, or
    None when a range is unbounded or the grid is too large."""
    spans = []
    total = 1
    for v in variables:
        lo, hi = ranges.get(v, (0, None))
        if hi is None:
            return None
        total *= hi - lo + 1
        if total > _GRID_CAP:
            return None
        spans.append((v, lo, hi))
    out = []
    for point in itertools.product(*(range(lo, hi + 1) for _, lo, hi in spans)):
        out.append({v: val for (v, _, _), val in zip(spans, point)})
    return out


def _provably_empty(
    program: LinExpProgram,
    ranges: Mapping[str, Range],
    chain: Sequence[str] = (),
) -> bool:
    """Exact emptiness over the derived bounding box.

    The ranges enclose every solution, so when they are finite and small an
    exhaustive scan decides feasibility outright; an infeasible answer
    prunes the branch.  Unbounded or large boxes return False (no verdict).
    The chain lists variables whose values must be non-increasing (the
    exponential ordering).
    """
    variables = set(program.variables()) | set(chain)
    points = _grid_points(sorted(variables), ranges)
    if points is None:
        return False
    constraints = program.constraints
    pairs = list(zip(chain, chain[1:]))
    for pt in points:
        if any(pt[a] < pt[b] for a, b in pairs):
            continue
        if all(c.holds(pt) for c in constraints):
            return False
    return True


# ---------------------------------------------------------------------------
# step I: divide the program by 2^y


@dataclass(frozen=True)
class Step1Branch:
    gamma: LinExpProgram          # linear, over u, q_x and the quotient vars
    psi: LinExpProgram            # everything below 2^y
    u: str
    q_x: str
    r_x: str
    q_of: Dict[str, str]          # old remainder/top variable -> quotient var
    r_of: Dict[str, str]          # old remainder/top variable -> new remainder
    gamma_ranges: Dict[str, Range]
    trail: Tuple[str, ...]


def _decompose(
    term: LinExpTerm,
    x: str,
    y: str,
    q_of: Mapping[str, str],
    r_of: Mapping[str, str],
    below_y: Sequence[str],
) -> QuotientTerm:
    """Split a term into a*2^x + (f(q) + f0)*2^y + lsp after rewriting the
    split variables (x and the old remainders) as q*2^y + r'."""
    lin = term.lin_map()
    exp = term.exp_map()
    rem = term.rem_map()
    a = exp.pop(x, 0)
    f0 = exp.pop(y, 0)
    f: Dict[str, int] = {}
    lsp_lin: Dict[str, int] = {}
    lsp_rem: Dict[Tuple[str, str], int] = {}

    below = set(below_y)
    for v, c in lin.items():
        if v in q_of:
            f[q_of[v]] = f.get(q_of[v], 0) + c
            nv = r_of[v]
            lsp_lin[nv] = lsp_lin.get(nv, 0) + c
        else:
            lsp_lin[v] = lsp_lin.get(v, 0) + c
    for (v, w), c in rem.items():
        if v in r_of:
            if w == y:
                nv = r_of[v]
                lsp_lin[nv] = lsp_lin.get(nv, 0) + c
                continue
            if w in below:
                key = (r_of[v], w)
                lsp_rem[key] = lsp_rem.get(key, 0) + c
                continue
        key = (v, w)
        lsp_rem[key] = lsp_rem.get(key, 0) + c
    lsp = LinExpTerm.make(lsp_lin, exp, lsp_rem, term.const)
    return QuotientTerm.make(a, f, f0, lsp)


def _reassemble(qt: QuotientTerm, y: str) -> LinExpTerm:
    """Back to a plain term when no 2^x and no quotient variables remain."""
    assert qt.a == 0 and not qt.f
    exp = qt.lsp.exp_map()
    exp[y] = exp.get(y, 0) + qt.f0
    return LinExpTerm.make(qt.lsp.lin_map(), exp, qt.lsp.rem_map(), qt.lsp.const)


def _gamma_term(qt: QuotientTerm, u: str, h: int) -> LinExpTerm:
    lin = {u: qt.a} if qt.a else {}
    for q, c in qt.f:
        lin[q] = lin.get(q, 0) + c
    return LinExpTerm.make(lin, {}, {}, qt.f0 + h)


class _Step1:
    """One invocation of step I; a generator over its guesses."""

    def __init__(self, solver: "Solver", theta: Ordering, phi: LinExpProgram,
                 rem_vars: Sequence[str], ranges: Mapping[str, Range]):
        self.solver = solver
        self.theta = theta
        self.phi = phi
        self.rem_vars = tuple(rem_vars)
        self.ranges = ranges
        self.x = theta.top
        self.y = theta.second

    def branches(self) -> Iterator[Step1Branch]:
        solver, x, y = self.solver, self.x, self.y
        # remainders modulo the top power of two are the variables themselves
        phi = LinExpProgram.make(
            div(c.divisor, _drop_mod_top(c.term, x))
            if c.kind == DIV
            else Constraint(c.kind, _drop_mod_top(c.term, x))
            for c in self.phi
        )
        u = solver.fresh("u")
        q_of: Dict[str, str] = {}
        r_of: Dict[str, str] = {}
        bound_constraints: List[Constraint] = []
        for r in self.rem_vars + (x,):
            q_of[r] = solver.fresh("q")
            r_of[r] = solver.fresh("r")
            nv = r_of[r]
            bound_constraints.append(le(LinExpTerm.make({nv: -1})))
            bound_constraints.append(lt(LinExpTerm.make({nv: 1}, {y: -1})))
        below_y = self.theta.below_or_equal(y)[1:]
        fmod_phi = phi.fmod()

        quotient_system: List[Tuple[Constraint, QuotientTerm]] = []
        for c in tuple(phi) + tuple(bound_constraints):
            quotient_system.append(
                (c, _decompose(c.term, x, y, q_of, r_of, below_y))
            )

        # ranges for the h-filters: new remainder variables r' < 2^y are
        # handled by slack, everything else must come from derived ranges
        new_ranges: Dict[str, Range] = dict(self.ranges)
        ylo, yhi = self.ranges.get(y, (0, None))
        rcap = None if yhi is None or yhi > 64 else (1 << yhi) - 1
        for r in r_of.values():
            new_ranges[r] = (0, rcap)
        gamma_ranges = _gamma_seed_ranges(self.ranges, u, q_of, x, y)

        # split the quotient system: items routed straight to psi, items
        # needing a quotient guess h (one shared guess per distinct least
        # significant part), and divisibility items with their own guesses
        base_psi: List[Constraint] = []
        guess_items: List[Tuple[Constraint, QuotientTerm]] = []
        div_items: List[Tuple[Constraint, QuotientTerm]] = []
        for constraint, qt in quotient_system:
            if qt.a == 0 and not qt.f:
                tau = _reassemble(qt, y)
                if constraint.kind == DIV:
                    base_psi.append(div(constraint.divisor, tau))
                else:
                    base_psi.append(Constraint(constraint.kind, tau))
            elif constraint.kind == DIV:
                div_items.append((constraint, qt))
            else:
                guess_items.append((constraint, qt))

        groups: List[LinExpTerm] = []
        group_of: List[int] = []
        index_of: Dict[LinExpTerm, int] = {}
        for constraint, qt in guess_items:
            if qt.lsp not in index_of:
                index_of[qt.lsp] = len(groups)
                groups.append(qt.lsp)
            group_of.append(index_of[qt.lsp])

        slack_set = frozenset(r_of.values())

        def gamma_term_possible(c: Constraint) -> bool:
            if c.kind == DIV:
                return True
            lo, hi = _term_range(c.term, gamma_ranges)
            if c.kind == LE:
                return lo is None or lo <= 0
            return (lo is None or lo <= 0) and (hi is None or hi >= 0)

        def vector_branches() -> Iterator[Tuple[int, ...]]:
            joint = self._joint_h_vectors(groups, new_ranges, slack_set)
            if joint is not None:
                yield from joint
                return
            per_group = [
                self._viable_h(rho, new_ranges, slack_set) for rho in groups
            ]
            yield from itertools.product(*per_group)

        def div_branches(i: int, gamma: List[Constraint], psi: List[Constraint],
                         trail: List[str]) -> Iterator[Step1Branch]:
            self.solver.clock.tick()
            if i == len(div_items):
                yield Step1Branch(
                    LinExpProgram.make(gamma),
                    LinExpProgram.make(psi),
                    u,
                    q_of[x],
                    r_of[x],
                    dict(q_of),
                    dict(r_of),
                    dict(gamma_ranges),
                    tuple(trail),
                )
                return
            constraint, qt = div_items[i]
            d = constraint.divisor
            for h in range(1, fmod_phi + 1):
                gamma.append(div(d, _gamma_term(qt, u, -h)))
                psi.append(div(d, LinExpTerm.make({}, {y: h}) + qt.lsp))
                trail.append(f"divmod h={h}")
                yield from div_branches(i + 1, gamma, psi, trail)
                trail.pop()
                psi.pop()
                gamma.pop()

        for vector in vector_branches():
            self.solver.clock.tick()
            gamma: List[Constraint] = []
            psi: List[Constraint] = list(base_psi)
            ok = True
            for (constraint, qt), gid in zip(guess_items, group_of):
                g_c = Constraint(constraint.kind, _gamma_term(qt, u, vector[gid]))
                if not gamma_term_possible(g_c):
                    ok = False
                    break
                gamma.append(g_c)
                if constraint.kind == EQ:
                    psi.append(eq(qt.lsp - LinExpTerm.make({}, {y: vector[gid]})))
            if not ok:
                continue
            for rho, h in zip(groups, vector):
                # (h-1) * 2^y < rho <= h * 2^y
                psi.append(lt(LinExpTerm.make({}, {y: h - 1}) - rho))
                psi.append(le(rho - LinExpTerm.make({}, {y: h})))
            trail = [f"h-vector={vector}"]
            yield from div_branches(0, gamma, psi, trail)

    def _joint_h_vectors(
        self,
        groups: Sequence[LinExpTerm],
        ranges: Mapping[str, Range],
        slack_vars: frozenset,
    ) -> Optional[List[Tuple[int, ...]]]:
        """Reachable joint assignments of the per-group quotients.

        One grid enumeration covers all groups at once, so incompatible
        combinations of quotients never materialize as branches.  Returns
        None when a variable prevents gridding or the vector set grows past
        the cap; the caller then falls back to independent enumeration.
        """
        if not groups:
            return [()]
        y = self.y
        grid_vars: Set[str] = {y}
        slack: List[int] = []
        lins: List[List[Tuple[str, int]]] = []
        for rho in groups:
            s = 0
            lin = []
            for v, c in rho.lin:
                lo, hi = ranges.get(v, (0, None))
                if hi is not None and hi - lo <= 512:
                    grid_vars.add(v)
                    lin.append((v, c))
                elif v in slack_vars:
                    s += abs(c)
                else:
                    return None
            for _, c in rho.rem:
                s += abs(c)
            grid_vars.update(rho.exp_map())
            slack.append(s)
            lins.append(lin)
        points = _grid_points(sorted(grid_vars), ranges)
        if points is None:
            return None
        vectors: Set[Tuple[int, ...]] = set()
        for pt in points:
            pow_y = 1 << pt[y]
            windows = []
            for rho, s, lin in zip(groups, slack, lins):
                base = rho.const
                for v, c in lin:
                    base += c * pt[v]
                for v, c in rho.exp:
                    base += c * (1 << pt[v])
                center = _ceil_div(base, pow_y)
                norm = rho.one_norm()
                lo = max(center - s, -norm)
                hi = min(center + s, norm)
                if lo > hi:
                    windows = None
                    break
                windows.append(range(lo, hi + 1))
            if windows is None:
                continue
            for vec in itertools.product(*windows):
                vectors.add(vec)
                if len(vectors) > 20_000:
                    return None
        return sorted(vectors)

    def _viable_h(
        self, lsp: LinExpTerm, ranges: Mapping[str, Range], slack_vars: frozenset
    ) -> List[int]:
        """Candidate quotients h = ceil(lsp / 2^y).

        The full sound window is [-|lsp|_1 .. |lsp|_1]; a grid evaluation
        over the small-range variables narrows it to the reachable
        quotients.  Variables with large or unbounded ranges that are
        provably below 2^y (the fresh remainder variables and all remainder
        terms) contribute a +-(sum of coefficients) slack instead; any
        other unbounded variable forces the full window.
        """
        y = self.y
        norm = lsp.one_norm()
        full = range(-norm, norm + 1)
        slack = 0
        grid_vars: Set[str] = {y}
        grid_lin: List[Tuple[str, int]] = []

        def small(v: str) -> bool:
            lo, hi = ranges.get(v, (0, None))
            return hi is not None and hi - lo <= 512

        for v, c in lsp.lin:
            if small(v):
                grid_vars.add(v)
                grid_lin.append((v, c))
            elif v in slack_vars:
                slack += abs(c)
            else:
                return list(full)
        for _, c in lsp.rem:
            slack += abs(c)
        exps = lsp.exp_map()
        grid_vars.update(exps)
        points = _grid_points(sorted(grid_vars), ranges)
        if points is None:
            return list(full)
        cands: Set[int] = set()
        for pt in points:
            base = lsp.const
            for v, c in grid_lin:
                base += c * pt[v]
            for v, c in exps.items():
                base += c * (1 << pt[v])
            center = _ceil_div(base, 1 << pt[y])
            cands.update(range(center - slack, center + slack + 1))
        return sorted(cands & set(full))


def _drop_mod_top(term: LinExpTerm, x: str) -> LinExpTerm:
    """Replace (w mod 2^x) by w: everything is below 2^x here."""
    if not any(w == x for (_, w), _ in term.rem):
        return term
    lin = term.lin_map()
    rem: Dict[Tuple[str, str], int] = {}
    for (v, w), c in term.rem:
        if w == x:
            lin[v] = lin.get(v, 0) + c
        else:
            rem[(v, w)] = rem.get((v, w), 0) + c
    return LinExpTerm.make(lin, term.exp_map(), rem, term.const)


# ---------------------------------------------------------------------------
# step II: gauss_opt


@dataclass(frozen=True)
class TestPoint:
    """An equality a * q = tau (- shift already folded into tau)."""

    a: int
    q: str
    tau: LinExpTerm
    generator_kind: str            # "I" | "II"
    generator_index: Optional[int]  # row of gamma0 for kind I
    generator_row: Tuple[int, ...]  # coefficients over the trace columns
    label: str


@dataclass
class GaussStep:
    generator_kind: str
    generator_index: Optional[int]
    generator_row: Tuple[int, ...]
    eta: int
    circuit_rows: List[Tuple[int, ...]]  # oldest eliminated variable first
    gamma_rows: List[Tuple[int, ...]]    # (in)equality rows, enum order


@dataclass
class GaussTrace:
    mu: int
    columns: Tuple[str, ...]  # q_n, ..., q_{n-k+1}, q_x, u
    gamma0_rows: List[Tuple[int, ...]]
    steps: List[GaussStep]


def _coeff_row(term: LinExpTerm, columns: Sequence[str]) -> Tuple[int, ...]:
    m = term.lin_map()
    return tuple(m.get(c, 0) for c in columns)


class _GaussOpt:
    """Eliminate the quotient variables q_n, ..., q_{n-k+1} from gamma."""

    def __init__(
        self,
        solver: "Solver",
        circuit: Leac,
        gamma: LinExpProgram,
        q_elim: Sequence[str],
        q_x: str,
        u: str,
        need_hyperplanes: bool,
        gamma_ranges: Mapping[str, Range],
        trace: bool = False,
    ):
        self.solver = solver
        self.q_elim = tuple(q_elim)
        self.q_x = q_x
        self.u = u
        self.need_hyperplanes = need_hyperplanes
        self.gamma_ranges = dict(gamma_ranges)
        self.columns = self.q_elim + (q_x, u)
        self.trace_enabled = trace
        self.gamma0 = gamma
        self.circuit0 = circuit

    def branches(self) -> Iterator[Tuple[Leac, LinExpProgram, Optional[GaussTrace]]]:
        trace = (
            GaussTrace(
                mu=self.circuit0.mu,
                columns=self.columns,
                gamma0_rows=[
                    _coeff_row(c.term, self.columns)
                    for c in self.gamma0
                    if c.kind in (LE, EQ)
                ],
                steps=[],
            )
            if self.trace_enabled
            else None
        )
        yield from self._eliminate_from(0, self.circuit0, self.gamma0, trace)

    # -- test points -------------------------------------------------------

    def _shifts(self, window: Tuple[Optional[int], Optional[int]], count: int) -> range:
        """Shifts s in [0..count-1] for which `window term = -s` is not
        excluded by the interval enclosure of the window term."""
        lo, hi = window
        s_lo = 0 if hi is None else max(0, -hi)
        s_hi = count - 1 if lo is None else min(count - 1, -lo)
        return range(s_lo, s_hi + 1)

    def _test_points(
        self, ell: int, circuit: Leac, gamma: LinExpProgram
    ) -> Iterator[TestPoint]:
        q = self.q_elim[ell]
        p = gamma.fmod(q)
        mu = circuit.mu
        seen = set()

        def fresh(a: int, tau: LinExpTerm) -> bool:
            key = (-a, -tau) if a < 0 else (a, tau)
            if key in seen:
                return False
            seen.add(key)
            return True

        def boundary():
            ineqs = [c for c in gamma if c.kind in (LE, EQ)]
            for idx, c in enumerate(ineqs):
                a = c.term.lin_coeff(q)
                if a == 0:
                    continue
                # an equality rho = 0 stays in the branch, so its test point
                # a*q = tau - s (i.e. rho = -s) only has solutions at s = 0,
                # and the p-shifted copy (rho = a*p - s) has none at all
                if c.kind == EQ:
                    tau0 = LinExpTerm.of(q, a) - c.term
                    if fresh(a, tau0):
                        yield TestPoint(
                            a, q, tau0, "I", idx,
                            _coeff_row(c.term, self.columns), f"bnd[{idx}]-eq",
                        )
                    continue
                for shifted in (False, True):
                    rho = c.term.shifted(a * p) if shifted else c.term
                    # the guessed term rho is a*q - tau; branch on a*q = tau - s,
                    # which holds iff rho = -s
                    tau0 = LinExpTerm.of(q, a) - rho
                    window = _term_range(rho, self.gamma_ranges)
                    row = _coeff_row(rho, self.columns)
                    for s in self._shifts(window, abs(a) * p):
                        point = tau0.shifted(-s)
                        if fresh(a, point):
                            yield TestPoint(
                                a, q, point, "I", idx, row,
                                f"bnd[{idx}]{'+p' if shifted else ''}-{s}",
                            )

        def hyperplanes():
            if not self.need_hyperplanes or _circuit_weakly_monotone(circuit, q):
                return
            lam = circuit.eta // mu
            L = 3 * mu * (4 * _ceil_log2(2 * circuit.xi() + mu) + 8)
            ulo, uhi = self.gamma_ranges.get(self.u, (1, None))
            for qa in self.q_elim:
                base_a = circuit.assignment_of(qa)
                for qb in self.q_elim:
                    base_b = circuit.assignment_of(qb)
                    for s1 in (False, True):
                        t1 = base_a if base_a is not None else LinExpTerm.of(qa, circuit.eta)
                        if s1:
                            t1 = t1.shifted(t1.lin_coeff(q) * p)
                        for s2 in (False, True):
                            t2 = base_b if base_b is not None else LinExpTerm.of(qb, circuit.eta)
                            if s2:
                                t2 = t2.shifted(t2.lin_coeff(q) * p)
                            diff = t1 - t2
                            b = diff.lin_coeff(q)
                            if b == 0:
                                continue  # assert(b != 0) rejects these
                            count = abs(b) * p
                            dlo, dhi = _term_range(diff, self.gamma_ranges)
                            gen_row = _coeff_row(
                                LinExpTerm.make({qa: mu, self.u: 0})
                                - LinExpTerm.make({qb: mu}),
                                self.columns,
                            )
                            u_col = self.columns.index(self.u)
                            tau_head = LinExpTerm.of(q, b) - diff
                            for a in range(-L, L + 1):
                                # window of diff + lam*a*u over u's range
                                ca = lam * a
                                if ca >= 0:
                                    wlo = None if dlo is None else dlo + ca * ulo
                                    whi = None if (dhi is None or (uhi is None and ca)) else dhi + ca * (uhi or 0)
                                else:
                                    wlo = None if (dlo is None or uhi is None) else dlo + ca * uhi
                                    whi = None if dhi is None else dhi + ca * ulo
                                # lam*d0 + [wlo..whi] must meet [-(count-1)..0]
                                d0_lo = -L if whi is None else max(-L, _ceil_div(-whi - (count - 1), lam))
                                d0_hi = L if wlo is None else min(L, _floor_div(-wlo, lam))
                                if d0_lo > d0_hi:
                                    continue
                                tau_a = (
                                    tau_head
                                    if ca == 0
                                    else tau_head - LinExpTerm.make({self.u: ca})
                                )
                                row = list(gen_row)
                                row[u_col] += a
                                row_t = tuple(row)
                                for d0 in range(d0_lo, d0_hi + 1):
                                    s_lo = 0 if whi is None else max(0, -whi - lam * d0)
                                    s_hi = count - 1 if wlo is None else min(count - 1, -wlo - lam * d0)
                                    base_const = -lam * d0
                                    for s in range(s_lo, s_hi + 1):
                                        point = tau_a.shifted(base_const - s)
                                        if fresh(b, point):
                                            yield TestPoint(
                                                b, q, point, "II", None, row_t,
                                                f"hyp[{qa},{qb},{a},{d0}]-{s}",
                                            )

        yield from boundary()
        yield from hyperplanes()

    # -- elimination discipline ---------------------------------------------

    def _eliminate(
        self, circuit: Leac, gamma: LinExpProgram, point: TestPoint
    ) -> Tuple[Leac, LinExpProgram]:
        a, tau = point.a, point.tau
        if a < 0:
            a, tau = -a, -tau
        mu = circuit.mu
        lam = circuit.eta // mu
        if a % mu != 0:
            raise InternalNonExactDivision(f"test point coefficient {a} not divisible by {mu}")
        alpha = a // mu

        substituted = gamma.substitute(tau, alpha, mu, point.q)
        new_constraints: List[Constraint] = []
        for c in substituted:
            if c.kind == DIV:
                new_constraints.append(c)
                continue
            term = c.term
            if c.kind == EQ:
                if term.const % lam != 0:
                    raise BranchReject("equality constant not divisible")
                new_constraints.append(eq(_divide_term(term, lam, divide_const=True)))
            else:
                scaled = _divide_term(term, lam, divide_const=False)
                new_constraints.append(
                    le(LinExpTerm(scaled.lin, scaled.exp, scaled.rem, _ceil_div(term.const, lam)))
                )
        if a > 1:
            new_constraints.append(div(a, tau))

        new_assignments: List[Tuple[str, LinExpTerm]] = [(point.q, tau)]
        for q_i, tau_i in circuit.q_assignments:
            updated = tau_i.substitute(tau, alpha, mu, point.q)
            if updated.const % lam != 0:
                raise BranchReject("circuit constant not divisible")
            new_assignments.append((q_i, _divide_term(updated, lam, divide_const=True)))
        new_circuit = Leac(
            mu=mu,
            eta=a,
            q_assignments=tuple(new_assignments),
            x_entries=circuit.x_entries,
        )
        return new_circuit, LinExpProgram.make(new_constraints)

    def _eliminate_from(
        self, ell: int, circuit: Leac, gamma: LinExpProgram, trace: Optional[GaussTrace]
    ) -> Iterator[Tuple[Leac, LinExpProgram, Optional[GaussTrace]]]:
        refined = derive_ranges(gamma, seed=self.gamma_ranges)
        if refined is None:
            return
        self.gamma_ranges, saved = refined, self.gamma_ranges
        try:
            yield from self._eliminate_level(ell, circuit, gamma, trace)
        finally:
            self.gamma_ranges = saved

    def _eliminate_level(
        self, ell: int, circuit: Leac, gamma: LinExpProgram, trace: Optional[GaussTrace]
    ) -> Iterator[Tuple[Leac, LinExpProgram, Optional[GaussTrace]]]:
        if ell == len(self.q_elim):
            leftover = set(gamma.variables()) - {self.q_x, self.u}
            assert not (leftover & set(self.q_elim))
            if _provably_empty(gamma, self.gamma_ranges):
                return
            if trace is not None and trace.steps:
                sink = self.solver.trace_sink
                if sink is not None and len(sink) < 4096:
                    sink.append(
                        GaussTrace(
                            trace.mu,
                            trace.columns,
                            list(trace.gamma0_rows),
                            [
                                GaussStep(
                                    s.generator_kind,
                                    s.generator_index,
                                    s.generator_row,
                                    s.eta,
                                    list(s.circuit_rows),
                                    list(s.gamma_rows),
                                )
                                for s in trace.steps
                            ],
                        )
                    )
            yield circuit, gamma, trace
            return
        for point in self._test_points(ell, circuit, gamma):
            self.solver.clock.tick()
            try:
                circuit2, gamma2 = self._eliminate(circuit, gamma, point)
            except BranchReject:
                continue
            if not self._gamma_possible(gamma2):
                continue
            if trace is not None:
                step = GaussStep(
                    generator_kind=point.generator_kind,
                    generator_index=point.generator_index,
                    generator_row=point.generator_row,
                    eta=circuit2.eta,
                    circuit_rows=[
                        _coeff_row(
                            LinExpTerm.of(q_i, circuit2.eta) - tau_i, self.columns
                        )
                        for q_i, tau_i in reversed(circuit2.q_assignments)
                    ],
                    gamma_rows=[
                        _coeff_row(c.term, self.columns)
                        for c in gamma2
                        if c.kind in (LE, EQ)
                    ],
                )
                trace.steps.append(step)
            yield from self._eliminate_from(ell + 1, circuit2, gamma2, trace)
            if trace is not None:
                trace.steps.pop()

    def _gamma_possible(self, gamma: LinExpProgram) -> bool:
        """Interval feasibility of the linear system over u >= 1, q >= 0."""
        for c in gamma:
            lo, hi = _term_range(c.term, self.gamma_ranges)
            if c.kind == LE and lo is not None and lo > 0:
                return False
            if c.kind == EQ:
                if (lo is not None and lo > 0) or (hi is not None and hi < 0):
                    return False
        return True


def _circuit_weakly_monotone(circuit: Leac, q: str) -> bool:
    """Every value computed by the circuit is weakly increasing in the
    variable q: true when all exponential coefficients in the circuit are
    nonnegative and q appears with nonnegative coefficients in the quotient
    assignments (its direct slot in an x-row has the positive weight 2^base).
    Boundary test points then already preserve the maximum, so hyperplane
    points are skipped when eliminating q."""
    for entry in circuit.x_entries:
        if any(c < 0 for _, c in entry.exps):
            return False
    for _, tau in circuit.q_assignments:
        if tau.lin_coeff(q) < 0:
            return False
    return True


def _divide_term(term: LinExpTerm, lam: int, divide_const: bool) -> LinExpTerm:
    if lam == 1:
        return term
    lin = {}
    for v, c in term.lin:
        if c % lam != 0:
            raise InternalNonExactDivision(f"coefficient {c} not divisible by {lam}")
        lin[v] = c // lam
    assert not term.exp and not term.rem
    const = term.const
    if divide_const:
        if const % lam != 0:
            raise InternalNonExactDivision(f"constant {const} not divisible by {lam}")
        const //= lam
    return LinExpTerm.make(lin, {}, {}, const)


def _ceil_log2(n: int) -> int:
    if n <= 1:
        return 0
    return (n - 1).bit_length()


# ---------------------------------------------------------------------------
# step III: eliminate x and u


def _ceil_log2_ratio(p: int, q: int) -> int:
    """Smallest t in Z with 2^t >= p/q, for positive p, q."""
    t = p.bit_length() - q.bit_length() - 1
    while (q << t if t >= 0 else q >> -t) < p:
        t += 1
    return t


class _Step3:
    def __init__(
        self,
        solver: "Solver",
        gamma_prime: LinExpProgram,
        q_x: str,
        u: str,
        y: str,
        r_x: str,
        ranges: Mapping[str, Range],
        x: str,
    ):
        self.solver = solver
        self.gamma = gamma_prime
        self.q_x, self.u, self.y, self.r_x, self.x = q_x, u, y, r_x, x
        self.ranges = ranges

    def branches(
        self,
    ) -> Iterator[Tuple[LinExpProgram, LinExpProgram, List[int], Tuple[str, ...]]]:
        """Yields (gamma'' over q_x, psi'' over (y, r_x), candidate values
        of q_x, trail).  The candidate list already satisfies gamma''."""
        u, q_x, y, r_x = self.u, self.q_x, self.y, self.r_x
        chi = [c for c in self.gamma if c.kind in (LE, EQ) and u in c.term.variables()]
        rest = LinExpProgram.make(
            c for c in self.gamma if not (c.kind in (LE, EQ) and u in c.term.variables())
        )
        fm = self.gamma.fmod()
        n2, d_odd = odd_part(fm)
        # C = 0 would let the star branch miss quotients of -r_x + y + C by
        # 2^y equal to 1; clamping to 1 keeps the two branches exhaustive
        c_bound = max(n2, 1)
        for c in chi:
            a = c.term.lin_coeff(u)
            b = c.term.lin_coeff(q_x)
            d0 = c.term.const
            assert a != 0
            c_bound = max(c_bound, 3 + 2 * _ceil_log2_ratio(abs(b) + abs(d0) + 1, abs(a)))

        # finite branch: u = 2^c with c = x - y; chi becomes the equality
        # q_x*2^y + r_x - y - c = 0, which pins q_x to the guess b
        xlo, xhi = self.ranges.get(self.x, (0, None))
        ylo, yhi = self.ranges.get(y, (0, None))
        c_lo = max(0, xlo - yhi) if yhi is not None else 0
        c_hi = c_bound - 1 if xhi is None else min(c_bound - 1, xhi - ylo)
        for c_val in range(c_lo, c_hi + 1):
            self.solver.clock.tick()
            gamma2 = _substitute_value(self.gamma, u, 1 << c_val)
            for b_val in self._b_candidates_eq(c_val):
                if not all(c.holds({q_x: b_val}) for c in gamma2):
                    continue
                g2 = gamma2.conjoin(eq(LinExpTerm.make({q_x: 1}, const=-b_val)))
                psi2 = LinExpProgram.make(
                    [eq(LinExpTerm.make({r_x: 1, y: -1}, {y: b_val}, const=-c_val))]
                )
                yield g2, psi2, [b_val], (f"stepIII c={c_val} b={b_val}",)
        # star branch: x - y >= C
        if any(c.kind == EQ or c.term.lin_coeff(u) >= 0 for c in chi):
            return
        if xhi is not None and xhi - ylo < c_bound:
            return  # x - y >= C is impossible within the derived ranges
        for r_val in range(d_odd):
            self.solver.clock.tick()
            target = (r_val << n2) % d_odd if d_odd > 1 else 0
            r_log = dlog2(target, d_odd, self.solver.oracle)
            if r_log is None:
                continue
            d_ord = mult_order(2, d_odd, self.solver.oracle)
            gamma2 = _substitute_value(rest, u, r_val << n2)
            for b_val in self._b_candidates_star(c_bound):
                # the guess (d_ord | q_x - g) is recovered from each value v
                # of q_x as g = v mod d_ord shifted to [1..d_ord]
                by_g: Dict[int, List[int]] = {}
                for v in _step4_window(gamma2, q_x, lower=b_val):
                    g_val = (v - 1) % d_ord + 1
                    by_g.setdefault(g_val, []).append(v)
                for g_val, vs in sorted(by_g.items()):
                    extra = [le(LinExpTerm.make({q_x: -1}, const=b_val))]
                    psi_parts = [
                        lt(LinExpTerm.make({r_x: 1, y: -1}, {y: b_val - 1}, const=-c_bound)),
                        le(LinExpTerm.make({r_x: -1, y: 1}, {y: -b_val}, const=c_bound)),
                    ]
                    if d_ord > 1:
                        extra.append(div(d_ord, LinExpTerm.make({q_x: 1}, const=-g_val)))
                        psi_parts.append(
                            div(d_ord, LinExpTerm.make({r_x: 1, y: -1}, {y: g_val}, const=-r_log))
                        )
                    g2 = gamma2.conjoin(*extra)
                    psi2 = LinExpProgram.make(psi_parts)
                    yield g2, psi2, vs, (f"stepIII star r={r_val} b={b_val} g={g_val}",)

    def _b_candidates_eq(self, c_val: int) -> List[int]:
        """b with b*2^y = -r_x + y + c for some y in range, 0 <= r_x < 2^y."""
        ylo, yhi = self.ranges.get(self.y, (0, None))
        if yhi is None or yhi > 64:
            return list(range(0, c_val + 1))
        cands = set()
        for yv in range(ylo, yhi + 1):
            pw = 1 << yv
            cands.update(
                range(_ceil_div(yv + c_val - pw + 1, pw), _floor_div(yv + c_val, pw) + 1)
            )
        return sorted(cands & set(range(0, c_val + 1)))

    def _b_candidates_star(self, c_bound: int) -> List[int]:
        """b with (b-1)*2^y < -r_x + y + C <= b*2^y similarly filtered."""
        ylo, yhi = self.ranges.get(self.y, (0, None))
        if yhi is None or yhi > 64:
            return list(range(0, c_bound + 1))
        cands = set()
        for yv in range(ylo, yhi + 1):
            pw = 1 << yv
            lo = _ceil_div(yv + c_bound - pw + 1, pw)
            hi = _floor_div(yv + c_bound, pw) + 1
            cands.update(range(lo, hi + 1))
        return sorted(cands & set(range(0, c_bound + 1)))


def _substitute_value(program: LinExpProgram, var: str, value: int) -> LinExpProgram:
    """Replace a linearly occurring variable by a nonnegative constant."""
    out = []
    for c in program:
        coeff = c.term.lin_coeff(var)
        if coeff == 0:
            out.append(c)
            continue
        lin = c.term.lin_map()
        del lin[var]
        term = LinExpTerm.make(lin, c.term.exp_map(), c.term.rem_map(),
                               c.term.const + coeff * value)
        out.append(div(c.divisor, term) if c.kind == DIV else Constraint(c.kind, term))
    return LinExpProgram.make(out)


# ---------------------------------------------------------------------------
# step IV: enumerate q_x and fold it into the circuit


def _step4_window(gamma2: LinExpProgram, q_x: str, lower: int = 0) -> Iterator[int]:
    """Values of q_x satisfying the univariate system: the greatest
    nonnegative lower bound up to the least upper bound, the latter
    defaulting to lower + fmod when no constraint caps q_x."""
    lo = lower
    hi: Optional[int] = None
    for c in gamma2:
        if c.kind == DIV:
            continue
        a = c.term.lin_coeff(q_x)
        k = c.term.const
        if c.kind == EQ:
            if a == 0:
                if k != 0:
                    return
                continue
            v, rr = divmod(-k, a)
            if rr != 0:
                return
            lo, hi = max(lo, v), (v if hi is None else min(hi, v))
        else:
            if a > 0:
                bound = _floor_div(-k, a)
                hi = bound if hi is None else min(hi, bound)
            elif a < 0:
                lo = max(lo, _ceil_div(k, -a))
            elif k > 0:
                return
    if hi is None:
        hi = lo + gamma2.fmod()
    for v in range(lo, hi + 1):
        if all(c.holds({q_x: v}) for c in gamma2):
            yield v


def _circuit_after_step1(
    circuit: PreLeac, x: str, y: str, q_x: str, r_x: str,
    q_of: Mapping[str, str], r_of: Mapping[str, str],
) -> Leac:
    """Add x <- q_x * 2^y + r_x and split every old remainder variable."""
    entries = [LeacXEntry(x, (), q_x, y, r_x)]
    for e in circuit.entries:
        entries.append(LeacXEntry(e.var, e.exps, q_of[e.rem], y, r_of[e.rem]))
    return Leac(mu=circuit.mu, eta=circuit.mu, q_assignments=(), x_entries=tuple(entries))


def _circuit_after_step4(circuit: Leac, q_x: str, u: str, v: int) -> PreLeac:
    """Resolve u = 2^(x_{n-k} - base) and q_x = v, substituting the quotient
    assignments into the exponent rows; yields a (k+1)-level circuit."""
    lam = circuit.eta // circuit.mu
    first = circuit.x_entries[0]
    x_nk = first.var
    top_exps = ((first.base, circuit.eta * v),) if v != 0 else ()
    entries = [PreLeacEntry(first.var, top_exps, first.rem)]
    for entry in circuit.x_entries[1:]:
        tau = circuit.assignment_of(entry.q)
        assert tau is not None, "every later quotient variable is assigned"
        extra = set(tau.variables()) - {u, q_x}
        assert not extra, f"unexpected variables {extra} in a final circuit"
        b_coef = tau.lin_coeff(u)
        c_coef = tau.lin_coeff(q_x)
        d_coef = tau.const
        exps: Dict[str, int] = {}
        for w, a in entry.exps:
            exps[w] = exps.get(w, 0) + lam * a
        exps[x_nk] = exps.get(x_nk, 0) + b_coef
        exps[entry.base] = exps.get(entry.base, 0) + c_coef * v + d_coef
        entries.append(
            PreLeacEntry(entry.var, tuple(sorted((w, a) for w, a in exps.items() if a)), entry.rem)
        )
    return PreLeac(mu=circuit.eta, entries=tuple(entries))


def _circuit_to_certificate(circuit: PreLeac, floor_name: str) -> Leslp:
    """The final straight-line certificate: x0 and all remainder variables
    are zero, each circuit row becomes a scaled sum of exponentials."""
    prog = Leslp((Zero(),), (floor_name,))
    exp_cache: Dict[str, int] = {}
    for entry in circuit.entries:
        acc: Optional[int] = None
        for w, a in sorted(entry.exps):
            if a == 0:
                continue
            if w not in exp_cache:
                prog = prog.extend(Exp(prog.index_of(w)))
                exp_cache[w] = prog.last
            node = exp_cache[w]
            if a != 1:
                prog = prog.extend(make_scale(a, 1, node))
                node = prog.last
            if acc is None:
                acc = node
            else:
                prog = prog.extend(Add(acc, node))
                acc = prog.last
        if acc is None:
            acc = 0  # empty sum: the zero variable
        if circuit.mu != 1:
            prog = prog.extend(make_scale(1, circuit.mu, acc))
            acc = prog.last
        prog = prog.extend(make_scale(1, 1, acc), name=entry.var)
    return prog


# ---------------------------------------------------------------------------
# the driver


@dataclass(frozen=True)
class Branch:
    """Loop-head state of one exploration path."""

    theta: Ordering
    phi: LinExpProgram
    circuit: PreLeac
    rem_vars: Tuple[str, ...]  # oldest first; pairs with the elimination order
    trail: Tuple[str, ...]


class Solver:
    """Exhaustive, deterministic realization of the elimination search.

    hyperplane test points are generated only while the objective variable
    is already folded into the circuit (otherwise the objective is constant
    in the eliminated quotients and boundary points suffice).
    """

    def __init__(
        self,
        budget: Optional[Budget] = None,
        oracle: Optional[FactoringOracle] = None,
        self_check: bool = False,
        trace_sink: Optional[List[GaussTrace]] = None,
    ):
        self.budget = budget or Budget()
        self.oracle = oracle or FactoringOracle()
        self.self_check = self_check
        self.trace_sink = trace_sink
        self._fresh = itertools.count()
        self.clock = self.budget.start()

    def fresh(self, prefix: str) -> str:
        return f"{prefix}!{next(self._fresh)}"

    # -- the main loop -----------------------------------------------------

    def maximize_variable(
        self, program: LinExpProgram, w: str, first_only: bool = False
    ) -> List[Leslp]:
        """Certificates of accepted branches for `maximize w subject to
        program`; with first_only, at most one (feasibility mode, boundary
        test points only)."""
        self.clock = self.budget.start()
        variables = sorted(program.variables() | {w})
        floor_name = self.fresh("z")
        results: List[Leslp] = []
        for perm in itertools.permutations(variables):
            theta = Ordering(tuple(perm) + (floor_name,))
            start = Branch(theta, program, PreLeac(), (), (f"theta={perm}",))
            if first_only:
                for cert in self._explore_first(start, w):
                    return [cert]
            else:
                self._memo: Dict = {}
                results.extend(self._explore_all(start, w))
        return results

    def _children(self, branch: Branch, w: str, first_only: bool):
        """Leaf certificates ('cert', c) and successor states ('branch', b)
        of one iteration of the main loop."""
        theta, phi, circuit = branch.theta, branch.phi, branch.circuit
        k = len(branch.rem_vars)
        assert circuit.k == k  # loop invariant: a k-level circuit at depth k
        if theta.is_floor_only():
            zeros = {v: 0 for v in phi.variables() | {theta.floor}}
            if phi.satisfied_by(zeros):
                yield "cert", _circuit_to_certificate(circuit, theta.floor)
            return
        self.clock.tick()
        ranges = derive_ranges(phi, theta)
        if ranges is None:
            return
        if _provably_empty(phi, ranges, theta.variables):
            return
        x, y = theta.top, theta.second
        need_hyper = (not first_only) and (w not in theta.variables)
        step1 = _Step1(self, theta, phi, branch.rem_vars, ranges)
        for s1 in step1.branches():
            leac = _circuit_after_step1(circuit, x, y, s1.q_x, s1.r_x, s1.q_of, s1.r_of)
            gamma0 = _prepare_gamma(s1.gamma, s1.q_of, s1.q_x, leac.mu)
            q_elim = tuple(s1.q_of[r] for r in branch.rem_vars)
            gauss = _GaussOpt(
                self,
                leac,
                gamma0,
                q_elim,
                s1.q_x,
                s1.u,
                need_hyper,
                s1.gamma_ranges,
                trace=self.trace_sink is not None and len(q_elim) > 0,
            )
            seen_gauss = set()
            seen_children = set()
            for leac2, gamma_p, trace in gauss.branches():
                leftover = set(gamma_p.variables()) - {s1.q_x, s1.u}
                assert not leftover, f"gauss left variables {leftover}"
                gkey = (leac2, gamma_p)
                if gkey in seen_gauss:
                    continue
                seen_gauss.add(gkey)
                step3 = _Step3(
                    self, gamma_p, s1.q_x, s1.u, y, s1.r_x, ranges, x
                )
                for gamma2, psi2, v_candidates, trail3 in step3.branches():
                    for v in v_candidates:
                        self.clock.tick()
                        circuit2 = _circuit_after_step4(leac2, s1.q_x, s1.u, v)
                        phi2 = LinExpProgram.make(tuple(s1.psi) + tuple(psi2))
                        ckey = (phi2, circuit2)
                        if ckey in seen_children:
                            continue
                        seen_children.add(ckey)
                        yield "branch", Branch(
                            theta.drop_top(),
                            phi2,
                            circuit2,
                            tuple(s1.r_of[r] for r in branch.rem_vars) + (s1.r_x,),
                            branch.trail + s1.trail + trail3 + (f"v={v}",),
                        )

    def _explore_first(self, branch: Branch, w: str) -> Iterator[Leslp]:
        """Depth-first feasibility search: stops at the first certificate."""
        for kind, item in self._children(branch, w, True):
            if kind == "cert":
                yield item
                return
            for cert in self._explore_first(item, w):
                yield cert
                return

    def _canonical_key(self, branch: Branch):
        mapping = {r: f"@r{i}" for i, r in enumerate(branch.rem_vars)}
        entries = tuple(
            (e.var, e.exps, mapping[e.rem]) for e in branch.circuit.entries
        )
        return (
            branch.theta.variables,
            branch.phi.rename(mapping),
            branch.circuit.mu,
            entries,
        )

    def _explore_all(self, branch: Branch, w: str) -> List[Leslp]:
        """All accepted certificates below this state, memoized across
        branches that coincide after renaming the remainder variables
        (such states have identical subtrees).  Oversized result sets are
        reduced to their best certificate, which preserves the final
        selection."""
        key = self._canonical_key(branch)
        hit = self._memo.get(key)
        if hit is not None:
            return hit
        certs: List[Leslp] = []
        texts = set()
        for kind, item in self._children(branch, w, False):
            found = [item] if kind == "cert" else self._explore_all(item, w)
            for cert in found:
                text = cert.text()
                if text not in texts:
                    texts.add(text)
                    certs.append(cert)
        if len(certs) > 32:
            certs = [_best_certificate(certs, w, self.oracle)]
        self._memo[key] = certs
        return certs


def _prepare_gamma(
    gamma: LinExpProgram, q_of: Mapping[str, str], q_x: str, mu: int
) -> LinExpProgram:
    """Conjoin q >= 0 for every quotient variable, then scale every
    (in)equality by mu so that all quotient coefficients carry the factor."""
    constraints = list(gamma)
    for q in list(q_of.values()):
        constraints.append(le(LinExpTerm.make({q: -1})))
    out = []
    for c in constraints:
        if c.kind == DIV:
            out.append(c)
        else:
            out.append(Constraint(c.kind, c.term.scaled(mu)))
    return LinExpProgram.make(out)


def _gamma_seed_ranges(
    ranges: Mapping[str, Range],
    u: str,
    q_of: Mapping[str, str],
    x: str,
    y: str,
) -> Dict[str, Range]:
    """Sound ranges for the gamma-side variables.

    u = 2^(x-y) is at least 1; quotient variables satisfy
    q = (old - r') / 2^y <= old / 2^(y_lo)."""
    out: Dict[str, Range] = {}
    xlo, xhi = ranges.get(x, (0, None))
    ylo, yhi = ranges.get(y, (0, None))
    ulo = 1
    if yhi is not None and xlo - yhi > 0:
        ulo = _exp_lo(xlo - yhi)
    uhi = None
    if xhi is not None and xhi - ylo <= _EXP_CAP:
        uhi = 1 << max(0, xhi - ylo)
    out[u] = (ulo, uhi)
    pow_ylo = 1 << min(ylo, _EXP_CAP)
    for old, q in q_of.items():
        olo, ohi = ranges.get(old, (0, None))
        out[q] = (0, None if ohi is None else ohi // pow_ylo)
    return out


# ---------------------------------------------------------------------------
# public entry points


def _small_value(slp: Leslp, w: str) -> Optional[int]:
    from .slp import OverflowAbort, eval_direct

    try:
        values = eval_direct(slp, 1024)
    except OverflowAbort:
        return None
    v = values[slp.index_of(w)]
    return int(v)


def _best_certificate(
    candidates: Sequence[Leslp], w: str, oracle: FactoringOracle
) -> Leslp:
    """The candidate maximizing w; ties resolve to the lexicographically
    smallest certificate text.

    Certificates whose values materialize in about a thousand bits are
    compared directly; astronomically large ones go through the sign
    procedure on the difference certificate."""
    objective = LinExpTerm.of(w)
    best = candidates[0]
    best_val = _small_value(best, w)
    for cand in candidates[1:]:
        cand_val = _small_value(cand, w)
        if best_val is not None and cand_val is not None:
            rel = "<" if best_val < cand_val else ("=" if best_val == cand_val else ">")
        else:
            rel = compare_objective(objective, best, cand, oracle)
        if rel == "<" or (rel == "=" and cand.text() < best.text()):
            best = cand
            best_val = cand_val
    return best


def opt_ilep(
    program: LinExpProgram,
    w: str,
    budget: Optional[Budget] = None,
    oracle: Optional[FactoringOracle] = None,
    self_check: bool = False,
    trace_sink: Optional[List[GaussTrace]] = None,
) -> Outcome:
    """Maximize the variable w subject to the program.

    Returns an optimal certificate when one of the explored branches
    accepts, and infeasible otherwise.  The procedure never reports
    unboundedness: when no maximum exists the returned certificate is
    merely some solution (callers that care run unbounded_check first).
    """
    oracle = oracle or FactoringOracle()
    solver = Solver(budget, oracle, self_check=self_check, trace_sink=trace_sink)
    candidates = solver.maximize_variable(program, w)
    if not candidates:
        return Outcome("infeasible")
    if self_check:
        instance = Instance("max", LinExpTerm.of(w), program)
        for cand in candidates:
            if not check_solution(instance, cand, oracle):
                raise AssertionError(f"branch produced a non-solution:\n{cand.text()}")
    best = _best_certificate(candidates, w, oracle)
    return Outcome("optimal", recognize(best, oracle=oracle))


def feasible(
    program: LinExpProgram,
    budget: Optional[Budget] = None,
    oracle: Optional[FactoringOracle] = None,
) -> Optional[Leslp]:
    """A certificate for some solution of the program, or None."""
    variables = sorted(program.variables())
    if not variables:
        zeros: Dict[str, int] = {}
        return Leslp((Zero(),)) if program.satisfied_by(zeros) else None
    solver = Solver(budget, oracle or FactoringOracle())
    found = solver.maximize_variable(program, variables[0], first_only=True)
    return found[0] if found else None


def unbounded_check(
    tau: LinExpTerm,
    program: LinExpProgram,
    q_bound: int = 1,
    budget: Optional[Budget] = None,
    oracle: Optional[FactoringOracle] = None,
) -> bool:
    """Is the maximization of tau over the program unbounded?

    Builds the program  phi and tau >= |tau|_1 * 2^(z_s)  with z_1 = 2^s and
    z_i = 2^(z_(i-1)) a tower of height s = q_bound + 3, and tests its
    feasibility.  Sound for 'bounded' answers; the 'unbounded' verdict is
    relative to the configured size bound q_bound (larger is safer and
    slower), hence the CLI flags it as such.
    """
    s = q_bound + 3
    names = [f"z!t{i}" for i in range(s + 1)]
    constraints: List[Constraint] = list(program)
    constraints.append(eq(LinExpTerm.make({names[0]: 1}, const=-s)))
    for i in range(1, s + 1):
        constraints.append(
            eq(LinExpTerm.make({names[i]: 1}, {names[i - 1]: -1}))
        )
    norm = max(1, tau.one_norm())
    constraints.append(le(LinExpTerm.make({}, {names[s]: norm}) - tau))
    return feasible(LinExpProgram.make(constraints), budget, oracle) is not None


def _objective_bounded_above(tau: LinExpTerm, program: LinExpProgram) -> bool:
    """A finite interval upper bound for tau proves a maximum exists."""
    ranges = derive_ranges(program)
    if ranges is None:
        return True  # infeasible: nothing to be unbounded about
    _, hi = _term_range(tau, ranges)
    return hi is not None


def _inline_certificate(slp: Leslp, prefix: str) -> Tuple[LinExpProgram, str]:
    """Constraints forcing fresh variables to reproduce the certificate.

    Certificate values can be negative, so every certificate variable v is
    represented by a pair vp - vn of naturals; exponent arguments are
    nonnegative in a valid certificate, so their negative parts are pinned
    to zero.  Returns the constraints and the positive part of the last
    variable (whose negative part is pinned)."""
    from .slp import Add as SAdd, Exp as SExp, Scale as SScale

    cs: List[Constraint] = []

    def pos(i):
        return f"{prefix}p{i}"

    def neg(i):
        return f"{prefix}n{i}"

    for i, op in enumerate(slp.ops):
        if isinstance(op, Zero):
            cs.append(eq(LinExpTerm.make({pos(i): 1})))
            cs.append(eq(LinExpTerm.make({neg(i): 1})))
        elif isinstance(op, SAdd):
            cs.append(
                eq(
                    LinExpTerm.make(
                        {
                            pos(i): 1,
                            neg(i): -1,
                            pos(op.j): -1,
                            neg(op.j): 1,
                            pos(op.k): -1,
                            neg(op.k): 1,
                        }
                    )
                )
            )
        elif isinstance(op, SScale):
            cs.append(
                eq(
                    LinExpTerm.make(
                        {pos(i): op.g, neg(i): -op.g, pos(op.j): -op.m, neg(op.j): op.m}
                    )
                )
            )
        else:
            assert isinstance(op, SExp)
            cs.append(eq(LinExpTerm.make({neg(op.j): 1})))
            cs.append(eq(LinExpTerm.make({pos(i): 1}, {pos(op.j): -1})))
            cs.append(eq(LinExpTerm.make({neg(i): 1})))
    cs.append(eq(LinExpTerm.make({neg(slp.last): 1})))
    return LinExpProgram.make(cs), pos(slp.last)


def _minimize_nonnegative(
    program: LinExpProgram,
    z: str,
    budget: Optional[Budget],
    oracle: FactoringOracle,
) -> Optional[Ileslp]:
    """An optimal certificate for `minimize z subject to program` (z a
    program variable over the naturals), or None when infeasible.

    Per the reduction for minimization: take any solution sigma, inline it
    as constraints, and maximize the slack sigma(z) - z."""
    some = feasible(program, budget, oracle)
    if some is None:
        return None
    inline, z_prime = _inline_certificate(some, "s!")
    wvar = "w!min"
    constraints = list(program) + list(inline)
    constraints.append(eq(LinExpTerm.make({wvar: 1, z: 1, z_prime: -1})))
    outcome = opt_ilep(LinExpProgram.make(constraints), wvar, budget, oracle)
    assert outcome.is_optimal, "inlined minimization lost feasibility"
    return outcome.certificate


def optimize_term(
    tau: LinExpTerm,
    program: LinExpProgram,
    goal: str = "max",
    budget: Optional[Budget] = None,
    oracle: Optional[FactoringOracle] = None,
    q_bound: int = 1,
) -> Outcome:
    """Maximize or minimize a linear-exponential term over the program.

    Dispatches on the sign the objective can take: introduce z = tau
    (or z = -tau) with z over the naturals, decide unboundedness where it
    is possible at all, and fall back to the opposite-sign minimization
    through certificate inlining.
    """
    oracle = oracle or FactoringOracle()
    z = "z!obj"
    if goal not in ("max", "min"):
        raise ValueError("goal must be 'max' or 'min'")
    sign = 1 if goal == "max" else -1
    # region where sign*tau >= 0: z = sign*tau solvable with z in N
    with_z = LinExpProgram.make(
        list(program) + [eq(LinExpTerm.make({z: 1}) - tau.scaled(sign))]
    )
    if feasible(with_z, budget, oracle) is not None:
        suspect = not _objective_bounded_above(tau.scaled(sign), with_z)
        if suspect and unbounded_check(
            tau.scaled(sign), program, q_bound, budget, oracle
        ):
            return Outcome("unbounded", note=f"under configured q_bound={q_bound}")
        outcome = opt_ilep(with_z, z, budget, oracle)
        assert outcome.is_optimal
        return outcome
    # otherwise sign*tau < 0 on every solution: minimize z = -sign*tau
    with_neg = LinExpProgram.make(
        list(program) + [eq(LinExpTerm.make({z: 1}) + tau.scaled(sign))]
    )
    cert = _minimize_nonnegative(with_neg, z, budget, oracle)
    if cert is None:
        return Outcome("infeasible")
    return Outcome("optimal", cert)
