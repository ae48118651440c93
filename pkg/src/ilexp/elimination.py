"""A variation of Bareiss fraction-free elimination on integer matrices.

The input matrix B0' = B0 * diag(mu,..,mu,1,..,1) has its first g columns
scaled by mu.  Each round pivots on the diagonal, keeps every entry an
integer by dividing out the previous pivot determinant, and flips the
pivot row to make the pivot positive.  Every entry of every intermediate
matrix is a signed subdeterminant of B0 (times mu in the scaled columns),
which is what the tests check against a naive cofactor determinant.

Rows and columns are 0-indexed here; the subdeterminant helpers take the
same (ell, i, j) arguments as the usual matrix-minor notation, with ell
counting leading rows/columns.
"""

from __future__ import annotations

from typing import List, Sequence

Matrix = List[List[int]]


class ZeroPivot(Exception):
    def __init__(self, ell: int):
        self.ell = ell
        super().__init__(f"zero pivot at elimination step {ell}")


class NonExactDivision(Exception):
    """A division that the algorithm guarantees exact left a remainder;
    this always indicates an implementation bug, never bad input."""


def det_cofactor(matrix: Sequence[Sequence[int]]) -> int:
    """Determinant by cofactor expansion along the first row (test oracle)."""
    n = len(matrix)
    if n == 0:
        return 1
    if any(len(row) != n for row in matrix):
        raise ValueError("determinant of a non-square matrix")
    if n == 1:
        return matrix[0][0]
    total = 0
    rest = matrix[1:]
    for j in range(n):
        if matrix[0][j] == 0:
            continue
        minor = [[row[k] for k in range(n) if k != j] for row in rest]
        total += (-1) ** j * matrix[0][j] * det_cofactor(minor)
    return total


def subdet(b0: Sequence[Sequence[int]], ell: int, i: int, j: int) -> int:
    """b^(ell)_{i,j}: determinant of rows (1..ell, i) x columns (1..ell, j)
    of B0, all 1-indexed; ell = 0 gives the entry b_{i,j} itself."""
    rows = list(range(ell)) + [i - 1]
    cols = list(range(ell)) + [j - 1]
    return det_cofactor([[b0[r][c] for c in cols] for r in rows])


def subdet_replaced(b0: Sequence[Sequence[int]], ell: int, r: int, j: int) -> int:
    """b^(ell)_{r <- j}: determinant of the leading ell x ell block with
    column r replaced by column j (1-indexed)."""
    cols = [j - 1 if c == r - 1 else c for c in range(ell)]
    return det_cofactor([[b0[row][c] for c in cols] for row in range(ell)])


def _exact_div(a: int, b: int) -> int:
    q, r = divmod(a, b)
    if r != 0:
        raise NonExactDivision(f"{a} is not divisible by {b}")
    return q


def bareiss_variant(
    b0: Sequence[Sequence[int]], mu: int, g: int, k: int
) -> List[Matrix]:
    """Run k rounds of the scaled fraction-free elimination.

    Returns [B1', ..., Bk'].  The input is B0 (unscaled); the first g
    columns are multiplied by mu before eliminating.  Raises ZeroPivot when
    a pivot subdeterminant vanishes, and NonExactDivision only on internal
    error.
    """
    m = len(b0)
    d = len(b0[0]) if m else 0
    if not (0 <= k <= min(m, d)):
        raise ValueError("k must be at most min(rows, cols)")
    if not (k <= g <= d):
        raise ValueError("g must satisfy k <= g <= cols")
    if mu < 1:
        raise ValueError("mu must be a positive integer")
    work: Matrix = [
        [entry * mu if c < g else entry for c, entry in enumerate(row)]
        for row in b0
    ]
    out: List[Matrix] = []
    prev_abs_pivot = 1  # |lambda_ell|; lambda_0 = 1
    for ell in range(k):
        pivot = work[ell][ell]
        if pivot == 0:
            raise ZeroPivot(ell)
        sign = 1 if pivot > 0 else -1
        alpha = _exact_div(abs(pivot), mu)
        pivot_row = list(work[ell])
        work[ell] = [sign * entry for entry in pivot_row]
        for i in range(m):
            if i == ell:
                continue
            beta = _exact_div(work[i][ell], mu)
            work[i] = [
                _exact_div(alpha * work[i][c] - sign * beta * pivot_row[c], prev_abs_pivot)
                for c in range(d)
            ]
        out.append([row[:] for row in work])
        prev_abs_pivot = alpha
    return out
