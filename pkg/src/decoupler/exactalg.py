"""Exact rational linear algebra and univariate polynomial arithmetic.

Everything downstream (rank tests, transfer matrices, decoupling decisions)
sits on this module, so all arithmetic is exact: scalars are
``fractions.Fraction``, polynomials in the Laplace variable s carry Fraction
coefficients, and no floating point ever enters.

Conventions:
  * matrices are immutable and dense, row-major;
  * polynomials store ascending coefficients with no trailing zeros;
  * rational functions are kept reduced with a monic denominator, so equality
    is plain structural equality.
"""

from __future__ import annotations

from fractions import Fraction
from typing import Iterable, Sequence

Rat = Fraction


def rat(value) -> Fraction:
    """Parse an exact rational from an int, Fraction, or 'num/den' string."""
    if isinstance(value, Fraction):
        return value
    if isinstance(value, int):
        return Fraction(value)
    if isinstance(value, str):
        return Fraction(value.strip())
    raise TypeError(f"cannot interpret {value!r} as an exact rational")


def rat_str(q: Fraction) -> str:
    """Serialize a rational as 'n' or 'n/d' (denominator always positive)."""
    if q.denominator == 1:
        return str(q.numerator)
    return f"{q.numerator}/{q.denominator}"


class Mat:
    """Immutable dense matrix over the rationals."""

    __slots__ = ("rows", "cols", "entries")

    def __init__(self, rows: int, cols: int, entries: Iterable):
        entries = tuple(rat(e) for e in entries)
        if len(entries) != rows * cols:
            raise ValueError(f"expected {rows * cols} entries, got {len(entries)}")
        object.__setattr__(self, "rows", rows)
        object.__setattr__(self, "cols", cols)
        object.__setattr__(self, "entries", entries)

    def __setattr__(self, name, value):
        raise AttributeError("Mat is immutable")

    @classmethod
    def from_rows(cls, rows: Sequence[Sequence]) -> "Mat":
        r = len(rows)
        c = len(rows[0]) if r else 0
        if any(len(row) != c for row in rows):
            raise ValueError("ragged rows")
        return cls(r, c, [e for row in rows for e in row])

    @classmethod
    def zeros(cls, rows: int, cols: int) -> "Mat":
        return cls(rows, cols, [0] * (rows * cols))

    @classmethod
    def identity(cls, n: int) -> "Mat":
        return cls(n, n, [1 if i == j else 0 for i in range(n) for j in range(n)])

    def __getitem__(self, key) -> Fraction:
        i, j = key
        if not (0 <= i < self.rows and 0 <= j < self.cols):
            raise IndexError(key)
        return self.entries[i * self.cols + j]

    def row(self, i: int) -> tuple:
        return self.entries[i * self.cols : (i + 1) * self.cols]

    def col(self, j: int) -> tuple:
        return tuple(self.entries[i * self.cols + j] for i in range(self.rows))

    def to_lists(self) -> list:
        return [list(self.row(i)) for i in range(self.rows)]

    def transpose(self) -> "Mat":
        return Mat(self.cols, self.rows,
                   [self[i, j] for j in range(self.cols) for i in range(self.rows)])

    def submatrix(self, row_idx: Sequence[int], col_idx: Sequence[int]) -> "Mat":
        return Mat(len(row_idx), len(col_idx),
                   [self[i, j] for i in row_idx for j in col_idx])

    def hstack(self, other: "Mat") -> "Mat":
        if self.rows != other.rows:
            raise ValueError("row mismatch")
        return Mat(self.rows, self.cols + other.cols,
                   [e for i in range(self.rows)
                    for e in (self.row(i) + other.row(i))])

    def vstack(self, other: "Mat") -> "Mat":
        if self.cols != other.cols:
            raise ValueError("column mismatch")
        return Mat(self.rows + other.rows, self.cols, self.entries + other.entries)

    def __eq__(self, other) -> bool:
        return (isinstance(other, Mat) and self.rows == other.rows
                and self.cols == other.cols and self.entries == other.entries)

    def __hash__(self):
        return hash((self.rows, self.cols, self.entries))

    def __add__(self, other: "Mat") -> "Mat":
        if self.rows != other.rows or self.cols != other.cols:
            raise ValueError("shape mismatch")
        return Mat(self.rows, self.cols,
                   [a + b for a, b in zip(self.entries, other.entries)])

    def __sub__(self, other: "Mat") -> "Mat":
        return self + (-other)

    def __neg__(self) -> "Mat":
        return Mat(self.rows, self.cols, [-a for a in self.entries])

    def scale(self, k) -> "Mat":
        k = rat(k)
        return Mat(self.rows, self.cols, [k * a for a in self.entries])

    def __mul__(self, other: "Mat") -> "Mat":
        if self.cols != other.rows:
            raise ValueError(f"cannot multiply {self.rows}x{self.cols} by "
                             f"{other.rows}x{other.cols}")
        n, k, m = self.rows, self.cols, other.cols
        out = [Fraction(0)] * (n * m)
        for i in range(n):
            base = i * k
            for t in range(k):
                a = self.entries[base + t]
                if a:
                    ob = t * m
                    for j in range(m):
                        b = other.entries[ob + j]
                        if b:
                            out[i * m + j] += a * b
        return Mat(n, m, out)

    def is_zero(self) -> bool:
        return all(e == 0 for e in self.entries)

    def trace(self) -> Fraction:
        if self.rows != self.cols:
            raise ValueError("trace of non-square matrix")
        return sum((self[i, i] for i in range(self.rows)), Fraction(0))

    def __repr__(self):
        body = "; ".join(" ".join(rat_str(e) for e in self.row(i))
                         for i in range(self.rows))
        return f"Mat[{body}]"


def _integer_rows(m: Mat) -> list[list[int]]:
    # Scale each row by the lcm of its denominators; rank is unchanged.
    rows = []
    for i in range(m.rows):
        row = m.row(i)
        scale = 1
        for e in row:
            d = e.denominator
            g = _gcd(scale, d)
            scale = scale // g * d
        rows.append([int(e * scale) for e in row])
    return rows


def _gcd(a: int, b: int) -> int:
    while b:
        a, b = b, a % b
    return abs(a)


def mat_rank(m: Mat) -> int:
    """Exact rank via fraction-free (Bareiss) elimination.

    Pivots are chosen by largest absolute value in the working column, which
    keeps intermediate integers modest without affecting exactness.
    """
    if m.rows == 0 or m.cols == 0:
        return 0
    a = _integer_rows(m)
    n, c = len(a), len(a[0])
    rank = 0
    prev = 1
    piv_col = 0
    while rank < n and piv_col < c:
        best, best_row = 0, -1
        for i in range(rank, n):
            v = abs(a[i][piv_col])
            if v > best:
                best, best_row = v, i
        if best_row < 0:
            piv_col += 1
            continue
        a[rank], a[best_row] = a[best_row], a[rank]
        piv = a[rank][piv_col]
        for i in range(rank + 1, n):
            ai = a[i]
            f = ai[piv_col]
            for j in range(piv_col, c):
                ai[j] = (piv * ai[j] - f * a[rank][j]) // prev
        prev = piv
        rank += 1
        piv_col += 1
    return rank


def mat_det(m: Mat) -> Fraction:
    """Exact determinant (Bareiss on the row-scaled integer matrix)."""
    if m.rows != m.cols:
        raise ValueError("determinant of non-square matrix")
    n = m.rows
    if n == 0:
        return Fraction(1)
    a = []
    denom = Fraction(1)
    for i in range(n):
        row = m.row(i)
        scale = 1
        for e in row:
            d = e.denominator
            g = _gcd(scale, d)
            scale = scale // g * d
        denom *= scale
        a.append([int(e * scale) for e in row])
    sign = 1
    prev = 1
    for k in range(n - 1):
        if a[k][k] == 0:
            for i in range(k + 1, n):
                if a[i][k] != 0:
                    a[k], a[i] = a[i], a[k]
                    sign = -sign
                    break
            else:
                return Fraction(0)
        piv = a[k][k]
        for i in range(k + 1, n):
            for j in range(k + 1, n):
                a[i][j] = (piv * a[i][j] - a[i][k] * a[k][j]) // prev
            a[i][k] = 0
        prev = piv
    return Fraction(sign * a[n - 1][n - 1], 1) / denom


def mat_solve(m: Mat, rhs: Mat) -> Mat | None:
    """Solve M·X = rhs exactly; returns one solution or None if inconsistent.

    Underdetermined systems get free variables set to zero, so the result is
    deterministic.
    """
    if m.rows != rhs.rows:
        raise ValueError("dimension mismatch between matrix and right-hand side")
    n, c, w = m.rows, m.cols, rhs.cols
    a = [list(m.row(i)) + list(rhs.row(i)) for i in range(n)]
    piv_cols = []
    r = 0
    for j in range(c):
        best, best_row = Fraction(0), -1
        for i in range(r, n):
            v = abs(a[i][j])
            if v > best:
                best, best_row = v, i
        if best_row < 0:
            continue
        a[r], a[best_row] = a[best_row], a[r]
        piv = a[r][j]
        a[r] = [e / piv for e in a[r]]
        for i in range(n):
            if i != r and a[i][j]:
                f = a[i][j]
                a[i] = [e - f * p for e, p in zip(a[i], a[r])]
        piv_cols.append(j)
        r += 1
        if r == n:
            break
    for i in range(r, n):
        if any(a[i][c + k] != 0 for k in range(w)):
            return None
    out = [[Fraction(0)] * w for _ in range(c)]
    for row_i, j in enumerate(piv_cols):
        for k in range(w):
            out[j][k] = a[row_i][c + k]
    return Mat.from_rows(out) if c else Mat.zeros(0, w)


def mat_inverse(m: Mat) -> Mat:
    """Exact inverse; raises ValueError when singular."""
    if m.rows != m.cols:
        raise ValueError("inverse of non-square matrix")
    sol = mat_solve(m, Mat.identity(m.rows))
    if sol is None or not (m * sol == Mat.identity(m.rows)):
        raise ValueError("matrix is singular")
    return sol


class Poly:
    """Univariate polynomial in s with exact rational coefficients."""

    __slots__ = ("coeffs",)

    def __init__(self, coeffs: Iterable = ()):
        cs = [rat(c) for c in coeffs]
        while cs and cs[-1] == 0:
            cs.pop()
        object.__setattr__(self, "coeffs", tuple(cs))

    def __setattr__(self, name, value):
        raise AttributeError("Poly is immutable")

    @classmethod
    def const(cls, c) -> "Poly":
        return cls([c])

    @classmethod
    def s_power(cls, k: int, c=1) -> "Poly":
        return cls([0] * k + [c])

    @property
    def degree(self) -> int:
        # degree of the zero polynomial is -1 by convention
        return len(self.coeffs) - 1

    def is_zero(self) -> bool:
        return not self.coeffs

    def coeff(self, k: int) -> Fraction:
        return self.coeffs[k] if 0 <= k < len(self.coeffs) else Fraction(0)

    def leading(self) -> Fraction:
        if not self.coeffs:
            raise ValueError("zero polynomial has no leading coefficient")
        return self.coeffs[-1]

    def __eq__(self, other) -> bool:
        return isinstance(other, Poly) and self.coeffs == other.coeffs

    def __hash__(self):
        return hash(self.coeffs)

    def __add__(self, other: "Poly") -> "Poly":
        a, b = self.coeffs, other.coeffs
        if len(a) < len(b):
            a, b = b, a
        out = list(a)
        for i, c in enumerate(b):
            out[i] += c
        return Poly(out)

    def __sub__(self, other: "Poly") -> "Poly":
        return self + (-other)

    def __neg__(self) -> "Poly":
        return Poly([-c for c in self.coeffs])

    def __mul__(self, other) -> "Poly":
        if isinstance(other, (int, Fraction)):
            return self.scale(other)
        a, b = self.coeffs, other.coeffs
        if not a or not b:
            return Poly()
        out = [Fraction(0)] * (len(a) + len(b) - 1)
        for i, ca in enumerate(a):
            if ca:
                for j, cb in enumerate(b):
                    if cb:
                        out[i + j] += ca * cb
        return Poly(out)

    def scale(self, k) -> "Poly":
        k = rat(k)
        return Poly([k * c for c in self.coeffs])

    def shift(self, k: int) -> "Poly":
        """Multiply by s**k."""
        if self.is_zero():
            return self
        return Poly((0,) * k + self.coeffs)

    def monic(self) -> "Poly":
        if self.is_zero():
            return self
        lead = self.leading()
        return self if lead == 1 else self.scale(1 / lead)

    def divmod(self, other: "Poly") -> tuple["Poly", "Poly"]:
        if other.is_zero():
            raise ZeroDivisionError("polynomial division by zero")
        q = [Fraction(0)] * max(0, self.degree - other.degree + 1)
        rem = list(self.coeffs)
        d, lead = other.degree, other.leading()
        while len(rem) - 1 >= d and any(rem):
            k = len(rem) - 1 - d
            f = rem[-1] / lead
            q[k] = f
            for i, c in enumerate(other.coeffs):
                rem[k + i] -= f * c
            while rem and rem[-1] == 0:
                rem.pop()
        return Poly(q), Poly(rem)

    def eval(self, x) -> Fraction:
        acc = Fraction(0)
        for c in reversed(self.coeffs):
            acc = acc * rat(x) + c
        return acc

    def eval_matrix(self, a: Mat) -> Mat:
        """Evaluate at a square matrix (Horner)."""
        n = a.rows
        acc = Mat.zeros(n, n)
        for c in reversed(self.coeffs):
            acc = acc * a + Mat.identity(n).scale(c)
        return acc

    def __repr__(self):
        if self.is_zero():
            return "Poly(0)"
        terms = []
        for k in range(self.degree, -1, -1):
            c = self.coeff(k)
            if c == 0:
                continue
            if k == 0:
                terms.append(rat_str(c))
            else:
                cs = "" if c == 1 else ("-" if c == -1 else rat_str(c) + "*")
                terms.append(f"{cs}s^{k}" if k > 1 else f"{cs}s")
        return "Poly(" + " + ".join(terms) + ")"


def poly_gcd(a: Poly, b: Poly) -> Poly:
    """Monic gcd over the rationals (Euclid)."""
    while not b.is_zero():
        a, b = b, a.divmod(b)[1]
    return a.monic()


def poly_from_roots(roots: Sequence) -> Poly:
    p = Poly([1])
    for r in roots:
        p = p * Poly([-rat(r), 1])
    return p


class RatFunc:
    """Reduced rational function num/den with a monic denominator."""

    __slots__ = ("num", "den")

    def __init__(self, num: Poly, den: Poly, _reduced: bool = False):
        if den.is_zero():
            raise ZeroDivisionError("rational function with zero denominator")
        if not _reduced:
            if num.is_zero():
                num, den = Poly(), Poly([1])
            else:
                g = poly_gcd(num, den)
                if g.degree > 0:
                    num = num.divmod(g)[0]
                    den = den.divmod(g)[0]
                lead = den.leading()
                if lead != 1:
                    num = num.scale(1 / lead)
                    den = den.scale(1 / lead)
        object.__setattr__(self, "num", num)
        object.__setattr__(self, "den", den)

    def __setattr__(self, name, value):
        raise AttributeError("RatFunc is immutable")

    @classmethod
    def const(cls, c) -> "RatFunc":
        return cls(Poly([c]), Poly([1]))

    def is_zero(self) -> bool:
        return self.num.is_zero()

    def __eq__(self, other) -> bool:
        return (isinstance(other, RatFunc)
                and self.num == other.num and self.den == other.den)

    def __hash__(self):
        return hash((self.num, self.den))

    def __add__(self, other: "RatFunc") -> "RatFunc":
        return RatFunc(self.num * other.den + other.num * self.den,
                       self.den * other.den)

    def __sub__(self, other: "RatFunc") -> "RatFunc":
        return self + (-other)

    def __neg__(self) -> "RatFunc":
        return RatFunc(-self.num, self.den, _reduced=True)

    def __mul__(self, other: "RatFunc") -> "RatFunc":
        return RatFunc(self.num * other.num, self.den * other.den)

    def __truediv__(self, other: "RatFunc") -> "RatFunc":
        if other.is_zero():
            raise ZeroDivisionError("division by zero rational function")
        return RatFunc(self.num * other.den, self.den * other.num)

    def __repr__(self):
        return f"RatFunc({self.num!r} / {self.den!r})"


def ratfunc_normalize(num: Poly, den: Poly) -> RatFunc:
    """Canonical reduced form of num/den (monic denominator)."""
    return RatFunc(num, den)


class PolyMat:
    """Dense matrix of polynomials (used for resolvent numerators and the
    compensation matrices)."""

    __slots__ = ("rows", "cols", "entries")

    def __init__(self, rows: int, cols: int, entries: Iterable[Poly]):
        entries = tuple(entries)
        if len(entries) != rows * cols:
            raise ValueError("entry count mismatch")
        if not all(isinstance(e, Poly) for e in entries):
            raise TypeError("PolyMat entries must be Poly")
        object.__setattr__(self, "rows", rows)
        object.__setattr__(self, "cols", cols)
        object.__setattr__(self, "entries", entries)

    def __setattr__(self, name, value):
        raise AttributeError("PolyMat is immutable")

    @classmethod
    def zeros(cls, rows: int, cols: int) -> "PolyMat":
        return cls(rows, cols, [Poly()] * (rows * cols))

    @classmethod
    def from_const(cls, m: Mat) -> "PolyMat":
        return cls(m.rows, m.cols, [Poly([e]) for e in m.entries])

    def __getitem__(self, key) -> Poly:
        i, j = key
        return self.entries[i * self.cols + j]

    def row(self, i: int) -> tuple:
        return self.entries[i * self.cols : (i + 1) * self.cols]

    def __eq__(self, other) -> bool:
        return (isinstance(other, PolyMat) and self.rows == other.rows
                and self.cols == other.cols and self.entries == other.entries)

    def __add__(self, other: "PolyMat") -> "PolyMat":
        if self.rows != other.rows or self.cols != other.cols:
            raise ValueError("shape mismatch")
        return PolyMat(self.rows, self.cols,
                       [a + b for a, b in zip(self.entries, other.entries)])

    def __neg__(self) -> "PolyMat":
        return PolyMat(self.rows, self.cols, [-a for a in self.entries])

    def __sub__(self, other: "PolyMat") -> "PolyMat":
        return self + (-other)

    def __mul__(self, other) -> "PolyMat":
        if isinstance(other, Mat):
            other = PolyMat.from_const(other)
        if self.cols != other.rows:
            raise ValueError("shape mismatch")
        n, k, m = self.rows, self.cols, other.cols
        out = []
        for i in range(n):
            for j in range(m):
                acc = Poly()
                for t in range(k):
                    a = self.entries[i * k + t]
                    b = other.entries[t * m + j]
                    if not a.is_zero() and not b.is_zero():
                        acc = acc + a * b
                out.append(acc)
        return PolyMat(n, m, out)

    def __rmul__(self, other) -> "PolyMat":
        if isinstance(other, Mat):
            return PolyMat.from_const(other) * self
        raise TypeError(f"cannot multiply {type(other)} by PolyMat")

    def scale_poly(self, p: Poly) -> "PolyMat":
        return PolyMat(self.rows, self.cols, [e * p for e in self.entries])

    def is_zero(self) -> bool:
        return all(e.is_zero() for e in self.entries)

    def max_degree(self) -> int:
        return max((e.degree for e in self.entries), default=-1)


def char_poly(a: Mat) -> Poly:
    """Monic characteristic polynomial det(sI - A) by Faddeev-LeVerrier."""
    if a.rows != a.cols:
        raise ValueError("characteristic polynomial of non-square matrix")
    return resolvent(a)[1]


def resolvent(a: Mat) -> tuple[PolyMat, Poly]:
    """Return (N, delta) with (sI - A)^{-1} = N(s)/delta(s).

    The Faddeev-LeVerrier recurrence produces both the characteristic
    polynomial and the polynomial numerator in n matrix products; every entry
    of N has degree <= n-1.
    """
    if a.rows != a.cols:
        raise ValueError("resolvent of non-square matrix")
    n = a.rows
    if n == 0:
        return PolyMat.zeros(0, 0), Poly([1])
    coeffs = [Fraction(0)] * (n + 1)
    coeffs[n] = Fraction(1)
    m_prev = Mat.identity(n)
    m_seq = [m_prev]  # M_0 .. M_{n-1}
    for k in range(1, n + 1):
        am = a * m_prev
        c = -am.trace() / k
        coeffs[n - k] = c
        m_prev = am + Mat.identity(n).scale(c)
        if k < n:
            m_seq.append(m_prev)
    # N(s) = sum_k M_k s^{n-1-k}
    entries = []
    for i in range(n):
        for j in range(n):
            entries.append(Poly([m_seq[n - 1 - d][i, j] for d in range(n)]))
    return PolyMat(n, n, entries), Poly(coeffs)
