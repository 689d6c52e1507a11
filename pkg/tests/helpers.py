"""Shared generators and independent oracles for the test suite."""

from __future__ import annotations

import random
from fractions import Fraction

from decoupler.exactalg import Mat


def random_mat(rng: random.Random, rows: int, cols: int, lo=-3, hi=3,
               denom_max=1) -> Mat:
    entries = []
    for _ in range(rows * cols):
        num = rng.randint(lo, hi)
        den = rng.randint(1, denom_max) if denom_max > 1 else 1
        entries.append(Fraction(num, den))
    return Mat(rows, cols, entries)


def rank_oracle(m: Mat) -> int:
    """Plain rational Gaussian elimination, independent of the library path."""
    a = [list(m.row(i)) for i in range(m.rows)]
    rank = 0
    for j in range(m.cols):
        piv = None
        for i in range(rank, m.rows):
            if a[i][j] != 0:
                piv = i
                break
        if piv is None:
            continue
        a[rank], a[piv] = a[piv], a[rank]
        pv = a[rank][j]
        for i in range(rank + 1, m.rows):
            if a[i][j] != 0:
                f = a[i][j] / pv
                a[i] = [x - f * y for x, y in zip(a[i], a[rank])]
        rank += 1
    return rank


def det_oracle(m: Mat) -> Fraction:
    """Cofactor expansion along the first row."""
    n = m.rows
    if n == 0:
        return Fraction(1)
    if n == 1:
        return m[0, 0]
    total = Fraction(0)
    cols = list(range(n))
    for j in range(n):
        c = m[0, j]
        if c == 0:
            continue
        sub = m.submatrix(list(range(1, n)), cols[:j] + cols[j + 1:])
        total += (-1) ** j * c * det_oracle(sub)
    return total
