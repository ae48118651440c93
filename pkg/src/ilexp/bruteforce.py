"""Exhaustive box-search oracles for small instances.

Only tests and the verification CLI path use these; nothing in the solver
depends on them, so they stay an independent check.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Dict, Optional

from .terms import Instance, LinExpProgram


@dataclass(frozen=True)
class BoxResult:
    value: int
    assignment: Dict[str, int]


def brute_solve(instance: Instance, bound: int) -> Optional[BoxResult]:
    """Best solution over [0..bound]^n, or None when the box is infeasible.

    Enumeration is row-major ascending over sorted variable names, and only
    strict improvements replace the incumbent, so ties resolve to the
    lexicographically smallest assignment.
    """
    if bound < 0:
        raise ValueError("bound must be nonnegative")
    variables = sorted(instance.variables())
    best: Optional[BoxResult] = None
    want_max = instance.goal == "max"
    for point in itertools.product(range(bound + 1), repeat=len(variables)):
        nu = dict(zip(variables, point))
        if not instance.program.satisfied_by(nu):
            continue
        value = instance.objective.evaluate(nu)
        if best is None or (value > best.value if want_max else value < best.value):
            best = BoxResult(value, nu)
    return best


def brute_feasible(program: LinExpProgram, bound: int) -> bool:
    """Does the program have a solution inside [0..bound]^n?"""
    variables = sorted(program.variables())
    return any(
        program.satisfied_by(dict(zip(variables, point)))
        for point in itertools.product(range(bound + 1), repeat=len(variables))
    )
