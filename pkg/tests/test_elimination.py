import random

import pytest

from ilexp.elimination import (
    NonExactDivision,
    ZeroPivot,
    bareiss_variant,
    det_cofactor,
    subdet,
    subdet_replaced,
)


def sign(x):
    return 1 if x > 0 else (-1 if x < 0 else 0)


def random_matrix(rng, m, d, lo=-9, hi=9):
    return [[rng.randrange(lo, hi + 1) for _ in range(d)] for _ in range(m)]


def pivots_nonzero(b0, k):
    lam = [1]
    for ell in range(1, k + 1):
        lam.append(subdet(b0, ell - 1, ell, ell))
    return all(v != 0 for v in lam[1:]), lam


def test_det_cofactor():
    assert det_cofactor([]) == 1
    assert det_cofactor([[7]]) == 7
    assert det_cofactor([[1, 2], [3, 4]]) == -2
    assert det_cofactor([[2, 0, 0], [0, 3, 0], [0, 0, 4]]) == 24


def test_subdet_base_cases():
    b0 = [[5, 2, 1], [3, 4, 7], [0, 1, 2]]
    # ell = 0 reduces to a single entry
    assert subdet(b0, 0, 2, 3) == 7
    # replacing the pivot column by itself gives the previous pivot determinant
    for ell in (1, 2):
        assert subdet_replaced(b0, ell, ell, ell) == subdet(b0, ell - 1, ell, ell)
    # duplicate columns vanish
    assert subdet_replaced(b0, 2, 1, 2) == 0


def test_identity_matrix_fixed_point():
    eye = [[1 if i == j else 0 for j in range(3)] for i in range(3)]
    for b in bareiss_variant(eye, 1, 3, 2):
        assert b == eye


def test_zero_rounds():
    assert bareiss_variant([[1, 2], [3, 4]], 2, 2, 0) == []


def test_zero_pivot_detected():
    with pytest.raises(ZeroPivot):
        bareiss_variant([[0, 1], [1, 0]], 1, 2, 2)


def test_entries_are_signed_subdeterminants():
    rng = random.Random(20240809)
    done = 0
    while done < 120:
        m = rng.randrange(2, 7)
        d = rng.randrange(m, 8)
        k = rng.randrange(1, min(m, d) + 1)
        g = rng.randrange(k, d + 1)
        mu = rng.choice([1, 2, 3, 6])
        b0 = random_matrix(rng, m, d)
        ok, lam = pivots_nonzero(b0, k)
        if not ok:
            continue
        done += 1
        mats = bareiss_variant(b0, mu, g, k)
        for ell in range(1, k + 1):
            got = mats[ell - 1]
            s = sign(lam[ell])
            for i in range(1, m + 1):
                for j in range(1, d + 1):
                    scale = mu if j <= g else 1
                    if i > ell:
                        expect = s * scale * subdet(b0, ell, i, j)
                    else:
                        expect = s * scale * subdet_replaced(b0, ell, i, j)
                    assert got[i - 1][j - 1] == expect, (ell, i, j)


def test_rows_above_include_pivot_identity():
    # row i <= ell, column j = i: entry is sign * mu * lambda_ell
    rng = random.Random(5)
    for _ in range(40):
        m, d = 4, 5
        b0 = random_matrix(rng, m, d)
        k = 3
        ok, lam = pivots_nonzero(b0, k)
        if not ok:
            continue
        mats = bareiss_variant(b0, 2, 4, k)
        for ell in range(1, k + 1):
            for i in range(1, ell + 1):
                assert mats[ell - 1][i - 1][i - 1] == sign(lam[ell]) * 2 * lam[ell]


def test_one_shot_row_reconstruction():
    # rebuilding row i of B_ell' from B0' and the first ell rows matches
    rng = random.Random(77)
    done = 0
    while done < 60:
        m = rng.randrange(2, 6)
        d = rng.randrange(m, 7)
        k = rng.randrange(1, min(m, d) + 1)
        g = rng.randrange(k, d + 1)
        mu = rng.choice([1, 2, 3])
        b0 = random_matrix(rng, m, d)
        ok, lam = pivots_nonzero(b0, k)
        if not ok:
            continue
        done += 1
        mats = bareiss_variant(b0, mu, g, k)
        for ell in range(1, k + 1):
            bl = mats[ell - 1]
            for i in range(ell + 1, m + 1):
                row = [
                    (b0[i - 1][c] * mu if c < g else b0[i - 1][c]) * abs(lam[ell])
                    for c in range(d)
                ]
                for r in range(1, ell + 1):
                    coeff = b0[i - 1][r - 1]
                    row = [row[c] - coeff * bl[r - 1][c] for c in range(d)]
                assert row == bl[i - 1], (ell, i)


def test_laplace_expansion_identity():
    rng = random.Random(31)
    for _ in range(60):
        m, d = 5, 6
        b0 = random_matrix(rng, m, d)
        ell = rng.randrange(1, 4)
        i = rng.randrange(ell + 1, m + 1)
        j = rng.randrange(ell + 1, d + 1)
        lhs = subdet(b0, ell, i, j)
        rhs = subdet(b0, ell - 1, ell, ell) * b0[i - 1][j - 1] - sum(
            subdet_replaced(b0, ell, r, j) * b0[i - 1][r - 1] for r in range(1, ell + 1)
        )
        assert lhs == rhs


def test_non_exact_division_is_internal_only():
    # exercising many random runs never raises NonExactDivision
    rng = random.Random(4)
    done = 0
    while done < 80:
        b0 = random_matrix(rng, 4, 5)
        ok, _ = pivots_nonzero(b0, 3)
        if not ok:
            continue
        done += 1
        bareiss_variant(b0, rng.choice([1, 2, 3, 6]), rng.randrange(3, 6), 3)
