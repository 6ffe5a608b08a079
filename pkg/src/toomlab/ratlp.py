"""Exact rational feasibility solver for small equality-form linear programs.

Solves "find v >= 0 with A v = b" by a phase-one simplex over
``fractions.Fraction`` with Bland's pivoting rule (guaranteed termination,
no tolerance anywhere).  On infeasibility it returns the Farkas dual vector
y with  y^T A <= 0  componentwise and  y^T b > 0,  which is the raw material
for separation certificates.  Problem sizes here are tiny (tens of rows), so
the dense tableau is perfectly adequate.
"""

from __future__ import annotations

from fractions import Fraction
from typing import Sequence

Row = list[Fraction]

ZERO = Fraction(0)
ONE = Fraction(1)


def solve_feasibility(
    A: Sequence[Sequence[Fraction]], b: Sequence[Fraction]
) -> tuple[bool, list[Fraction]]:
    """Decide {v >= 0 : A v = b}.

    Returns ``(True, v)`` with an exact feasible point, or ``(False, y)``
    with an exact Farkas certificate of infeasibility.
    """
    m = len(A)
    n = len(A[0]) if m else 0
    # sign-normalize so the artificial basis is feasible (b >= 0)
    signs = [ONE if bi >= 0 else -ONE for bi in b]
    tab: list[Row] = [
        [signs[i] * Fraction(A[i][j]) for j in range(n)] + [signs[i] * Fraction(b[i])]
        for i in range(m)
    ]
    # append artificial columns (identity)
    for i in range(m):
        rhs = tab[i].pop()
        tab[i].extend(ONE if k == i else ZERO for k in range(m))
        tab[i].append(rhs)
    ncols = n + m
    basis = list(range(n, n + m))

    # reduced costs for min sum(artificials); artificial columns start at 0
    rc: Row = [ZERO] * (ncols + 1)
    for j in range(n):
        rc[j] = -sum(tab[i][j] for i in range(m))
    rc[ncols] = -sum(tab[i][ncols] for i in range(m))  # negative objective value

    while True:
        enter = -1
        for j in range(ncols):
            if rc[j] < 0:
                enter = j
                break
        if enter < 0:
            break
        leave = -1
        best = None
        for i in range(m):
            coef = tab[i][enter]
            if coef > 0:
                ratio = tab[i][ncols] / coef
                if best is None or ratio < best or (
                    ratio == best and basis[i] < basis[leave]
                ):
                    best = ratio
                    leave = i
        if leave < 0:
            raise ArithmeticError("phase-one objective cannot be unbounded")
        pivot = tab[leave][enter]
        tab[leave] = [x / pivot for x in tab[leave]]
        for i in range(m):
            if i != leave and tab[i][enter] != 0:
                f = tab[i][enter]
                tab[i] = [x - f * p for x, p in zip(tab[i], tab[leave])]
        if rc[enter] != 0:
            f = rc[enter]
            rc = [x - f * p for x, p in zip(rc, tab[leave])]
        basis[leave] = enter

    objective = -rc[ncols]
    if objective == 0:
        v = [ZERO] * n
        for i, bi in enumerate(basis):
            if bi < n:
                v[bi] = tab[i][ncols]
        return True, v
    # Farkas dual from the artificial columns' reduced costs, undoing row signs
    y = [signs[i] * (ONE - rc[n + i]) for i in range(m)]
    return False, y
