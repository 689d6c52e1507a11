"""State-space problem instances and exact closed-loop analysis.

A problem instance is the triple (A, B, C) of ``ẋ = Ax + Bu, y = Cx`` with
n states, m inputs, and p <= m outputs.  This module computes the relative
orders of the outputs, the decoupling pair (B*, A*), the classical
invertibility test for regular decoupling and its feedback law, and exact
closed-loop transfer matrices for verification.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

from .exactalg import (
    Mat,
    Poly,
    RatFunc,
    mat_inverse,
    mat_det,
    mat_rank,
    ratfunc_normalize,
    resolvent,
)


class ValidationError(ValueError):
    """A system violates one of the standing assumptions."""


@dataclass(frozen=True)
class StateSpaceSystem:
    a: Mat
    b: Mat
    c: Mat
    name: str = ""

    def __post_init__(self):
        n = self.a.rows
        if self.a.cols != n:
            raise ValidationError("A must be square")
        if self.b.rows != n:
            raise ValidationError("B must have n rows")
        if self.c.cols != n:
            raise ValidationError("C must have n columns")

    @property
    def n(self) -> int:
        return self.a.rows

    @property
    def m(self) -> int:
        return self.b.cols

    @property
    def p(self) -> int:
        return self.c.rows


@dataclass(frozen=True)
class RelativeOrders:
    d: tuple[int, ...]
    # True for outputs where no input ever appears; kept as a pathology flag
    saturated: tuple[bool, ...] = ()


@dataclass(frozen=True)
class DecouplingPair:
    bstar: Mat
    astar: Mat


@dataclass(frozen=True)
class FeedbackLaw:
    f: Mat
    g: Mat


@dataclass(frozen=True)
class FalbWolovichDecision:
    mode: str          # "regular" (m == p) or "nonregular" (m > p)
    passed: bool
    rank: int
    det: Fraction | None  # det B* in the regular case


@dataclass(frozen=True)
class TransferMatrix:
    rows: int
    cols: int
    entries: tuple[RatFunc, ...]

    def __getitem__(self, key) -> RatFunc:
        i, j = key
        return self.entries[i * self.cols + j]


@dataclass(frozen=True)
class IntegratorDiagonal:
    orders: tuple[int, ...]


@dataclass(frozen=True)
class DiagonalWitness:
    row: int  # 1-based
    col: int
    reason: str


def controllability_matrix(a: Mat, b: Mat) -> Mat:
    blocks = b
    power = b
    for _ in range(a.rows - 1):
        power = a * power
        blocks = blocks.hstack(power)
    return blocks


def validate(sys: StateSpaceSystem) -> None:
    """Check the standing assumptions; raises ValidationError naming the
    first violated one.

    Requirements: p <= m, B monic (no zero column, full column rank),
    C epic (full row rank), and (A, B) controllable.
    """
    if sys.p > sys.m:
        raise ValidationError("p > m: more outputs than inputs")
    for j in range(sys.m):
        if all(sys.b[i, j] == 0 for i in range(sys.n)):
            raise ValidationError(f"B not monic: column {j + 1} is zero")
    if mat_rank(sys.b) < sys.m:
        raise ValidationError("B not monic: columns linearly dependent")
    if mat_rank(sys.c) < sys.p:
        raise ValidationError("C not epic: rows linearly dependent")
    if mat_rank(controllability_matrix(sys.a, sys.b)) < sys.n:
        raise ValidationError("(A, B) not controllable")


def relative_orders_of(a: Mat, b: Mat, c: Mat) -> RelativeOrders:
    """Smallest derivative order at which each output row sees an input.

    d_i = min{ j : C_i A^(j-1) B != 0 }, with fallback d_i = n when no input
    ever appears (flagged; impossible for validated systems).
    """
    n = a.rows
    ds, flags = [], []
    for i in range(c.rows):
        row = Mat(1, n, c.row(i))
        d = None
        for j in range(1, n + 1):
            if not (row * b).is_zero():
                d = j
                break
            row = row * a
        if d is None:
            ds.append(n)
            flags.append(True)
        else:
            ds.append(d)
            flags.append(False)
    return RelativeOrders(tuple(ds), tuple(flags))


def relative_orders(sys: StateSpaceSystem) -> RelativeOrders:
    return relative_orders_of(sys.a, sys.b, sys.c)


def decoupling_pair(sys: StateSpaceSystem,
                    d: RelativeOrders | None = None) -> DecouplingPair:
    """B* rows C_i A^(d_i - 1) B and A* rows C_i A^(d_i)."""
    if d is None:
        d = relative_orders(sys)
    b_rows, a_rows = [], []
    for i, di in enumerate(d.d):
        row = Mat(1, sys.n, sys.c.row(i))
        for _ in range(di - 1):
            row = row * sys.a
        b_rows.append((row * sys.b).row(0))
        a_rows.append((row * sys.a).row(0))
    return DecouplingPair(Mat.from_rows(b_rows), Mat.from_rows(a_rows))


def falb_wolovich(sys: StateSpaceSystem) -> FalbWolovichDecision:
    """Invertibility test on B*: det != 0 when m == p, rank == p when m > p."""
    pair = decoupling_pair(sys)
    rank = mat_rank(pair.bstar)
    if sys.m == sys.p:
        det = mat_det(pair.bstar)
        return FalbWolovichDecision("regular", det != 0, rank, det)
    return FalbWolovichDecision("nonregular", rank == sys.p, rank, None)


def _first_independent_columns(m: Mat, count: int) -> list[int] | None:
    """Indices of the first `count` linearly independent columns, or None."""
    chosen: list[int] = []
    for j in range(m.cols):
        trial = m.submatrix(range(m.rows), chosen + [j])
        if mat_rank(trial) == len(chosen) + 1:
            chosen.append(j)
            if len(chosen) == count:
                return chosen
    return None


def regular_feedback(sys: StateSpaceSystem) -> FeedbackLaw:
    """Decoupling law for systems passing the B* test.

    Square case: F = -(B*)^-1 A*, G = (B*)^-1.  Wide case (m > p): the first
    p independent columns of B* act as masters, remaining inputs get zero
    rows (the free gain block defaults to zero).
    """
    pair = decoupling_pair(sys)
    if sys.m == sys.p:
        g = mat_inverse(pair.bstar)
        f = -(g * pair.astar)
        return FeedbackLaw(f, g)
    masters = _first_independent_columns(pair.bstar, sys.p)
    if masters is None:
        raise ValidationError("rank B* < p: system fails the decoupling test")
    bbar = pair.bstar.submatrix(range(sys.p), masters)
    g_m = mat_inverse(bbar)
    f_m = -(g_m * pair.astar)
    f_rows = [[Fraction(0)] * sys.n for _ in range(sys.m)]
    g_rows = [[Fraction(0)] * sys.p for _ in range(sys.m)]
    for k, j in enumerate(masters):
        f_rows[j] = list(f_m.row(k))
        g_rows[j] = list(g_m.row(k))
    return FeedbackLaw(Mat.from_rows(f_rows), Mat.from_rows(g_rows))


def closed_loop_tf(sys: StateSpaceSystem, law: FeedbackLaw) -> TransferMatrix:
    """Exact T(s) = C (sI - A - BF)^{-1} B G."""
    if law.f.rows != sys.m or law.f.cols != sys.n:
        raise ValidationError("F has wrong shape")
    if law.g.rows != sys.m:
        raise ValidationError("G has wrong shape")
    a_cl = sys.a + sys.b * law.f
    b_cl = sys.b * law.g
    return transfer_matrix(a_cl, b_cl, sys.c)


def open_loop_tf(sys: StateSpaceSystem) -> TransferMatrix:
    return transfer_matrix(sys.a, sys.b, sys.c)


def transfer_matrix(a: Mat, b: Mat, c: Mat) -> TransferMatrix:
    num, delta = resolvent(a)
    cn = PolyMatFromConst(c) * num
    cnb = cn * PolyMatFromConst(b)
    entries = [ratfunc_normalize(cnb[i, j], delta)
               for i in range(c.rows) for j in range(b.cols)]
    return TransferMatrix(c.rows, b.cols, tuple(entries))


def PolyMatFromConst(m: Mat):
    from .exactalg import PolyMat
    return PolyMat.from_const(m)


def diagonality_check(t: TransferMatrix,
                      relaxed: bool = False) -> IntegratorDiagonal | DiagonalWitness:
    """Decide whether T is diag(s^-k_i).

    Strict mode demands every diagonal entry be exactly a pure integrator
    chain 1/s^k, k >= 1.  Relaxed mode accepts any nonzero diagonal entries
    (used after pole assignment) and reports denominator degrees as orders.
    Off-diagonal entries must vanish identically either way; the first
    offender in row-major scan is returned.
    """
    if t.rows != t.cols:
        raise ValidationError("diagonality check needs a square transfer matrix")
    for i in range(t.rows):
        for j in range(t.cols):
            entry = t[i, j]
            if i != j:
                if not entry.is_zero():
                    return DiagonalWitness(i + 1, j + 1, "nonzero off-diagonal entry")
                continue
            if entry.is_zero():
                return DiagonalWitness(i + 1, j + 1, "zero diagonal entry")
            if relaxed:
                continue
            den = entry.den
            pure = (entry.num == Poly([1]) and den.degree >= 1
                    and all(den.coeff(k) == 0 for k in range(den.degree))
                    and den.leading() == 1)
            if not pure:
                return DiagonalWitness(i + 1, j + 1,
                                       "diagonal entry is not a pure integrator")
    orders = tuple(t[i, i].den.degree for i in range(t.rows))
    return IntegratorDiagonal(orders)
