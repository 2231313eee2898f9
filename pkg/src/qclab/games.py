"""Exact zero-sum matrix game solving with rational simplex pivoting.

Desk-scale games only (tens of rows and columns).  Everything is computed
over Fractions so game values can be compared exactly; Bland's rule keeps
the pivoting finite.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

from .errors import ConvergenceError


def simplex_max(
    A: Sequence[Sequence[Fraction]],
    b: Sequence[Fraction],
    c: Sequence[Fraction],
) -> tuple[list[Fraction], list[Fraction], Fraction]:
    """Maximize c.x subject to A x <= b, x >= 0, with all b >= 0.

    Returns (x, duals, objective).  Exact tableau simplex with Bland's
    anti-cycling rule; the slack basis is feasible because b >= 0.
    """
    m = len(A)
    n = len(c)
    if any(bi < 0 for bi in b):
        raise ValueError("simplex_max needs b >= 0")
    # tableau rows: [a_1 .. a_n | slacks | rhs]
    rows = [
        [Fraction(A[i][j]) for j in range(n)]
        + [Fraction(1) if k == i else Fraction(0) for k in range(m)]
        + [Fraction(b[i])]
        for i in range(m)
    ]
    cost = [Fraction(c[j]) for j in range(n)] + [Fraction(0)] * (m + 1)
    basis = [n + i for i in range(m)]

    for _ in range(100000):
        enter = next((j for j in range(n + m) if cost[j] > 0), None)
        if enter is None:
            break
        ratio_best = None
        leave = None
        for i in range(m):
            a = rows[i][enter]
            if a > 0:
                r = rows[i][-1] / a
                if ratio_best is None or r < ratio_best or (
                    r == ratio_best and basis[i] < basis[leave]
                ):
                    ratio_best = r
                    leave = i
        if leave is None:
            raise ConvergenceError("linear program is unbounded")
        piv = rows[leave][enter]
        rows[leave] = [v / piv for v in rows[leave]]
        for i in range(m):
            if i != leave and rows[i][enter] != 0:
                f = rows[i][enter]
                rows[i] = [v - f * w for v, w in zip(rows[i], rows[leave])]
        f = cost[enter]
        cost = [v - f * w for v, w in zip(cost, rows[leave])]
        basis[leave] = enter
    else:
        raise ConvergenceError("simplex iteration cap exceeded")

    x = [Fraction(0)] * n
    for i, var in enumerate(basis):
        if var < n:
            x[var] = rows[i][-1]
    duals = [-cost[n + i] for i in range(m)]
    return x, duals, -cost[-1]


@dataclass(frozen=True)
class GameValue:
    """Solution of a finite zero-sum game (row player minimizes)."""

    value: Fraction
    row_strategy: tuple[Fraction, ...]
    col_strategy: tuple[Fraction, ...]


def solve_matrix_game(matrix: Sequence[Sequence[Fraction]]) -> GameValue:
    """Value and optimal mixed strategies of min_p max_q p^T M q.

    Shifts the payoffs to be strictly positive, solves the column player's
    normalized LP, and reads the row player's strategy off the duals.
    """
    n_rows = len(matrix)
    n_cols = len(matrix[0])
    entries = [Fraction(matrix[i][j]) for i in range(n_rows) for j in range(n_cols)]
    shift = Fraction(1) - min(entries)
    shifted = [
        [Fraction(matrix[i][j]) + shift for j in range(n_cols)] for i in range(n_rows)
    ]
    ones_r = [Fraction(1)] * n_rows
    ones_c = [Fraction(1)] * n_cols
    y, u, total = simplex_max(shifted, ones_r, ones_c)
    if total <= 0:
        raise ConvergenceError("degenerate game: normalization failed")
    v_shifted = 1 / total
    q = tuple(yj * v_shifted for yj in y)
    p = tuple(ui * v_shifted for ui in u)
    assert sum(p) == 1 and sum(q) == 1
    assert all(pi >= 0 for pi in p) and all(qj >= 0 for qj in q)
    return GameValue(value=v_shifted - shift, row_strategy=p, col_strategy=q)
