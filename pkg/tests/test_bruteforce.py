import pytest

from ilexp.bruteforce import brute_feasible, brute_solve
from ilexp.terms import LinExpProgram, LinExpTerm, eq, le, parse_instance

EXAMPLE_1 = """maximize 8*x + 4*y - 2^x - 2^y
subject to
  y - 5 <= 0
  y - 2^x <= 0
  2^z - 65536*y <= 0
  z - 3*x = 0
"""


def test_example_1():
    res = brute_solve(parse_instance(EXAMPLE_1), 16)
    assert res is not None
    assert res.value == 20
    assert res.assignment == {"x": 3, "y": 2, "z": 9}  # lexicographic tie-break


def test_infeasible_in_box():
    inst = parse_instance("maximize x\nsubject to\n  x + 1 <= 0\n")
    assert brute_solve(inst, 8) is None


def test_simple_max():
    inst = parse_instance("maximize x\nsubject to\n  x - 4 <= 0\n")
    res = brute_solve(inst, 16)
    assert res.value == 4


def test_monotone_in_bound():
    inst = parse_instance("maximize x\nsubject to\n  x - 12 <= 0\n")
    values = [brute_solve(inst, b).value for b in (4, 8, 16)]
    assert values == sorted(values)


def test_brute_feasible():
    phi = LinExpProgram.make([eq(LinExpTerm.make(lin={"x": 1}, const=-3))])
    assert brute_feasible(phi, 3)
    assert not brute_feasible(phi, 2)
    assert brute_feasible(LinExpProgram.make([]), 0)
