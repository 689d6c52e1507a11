"""Controllable canonical forms and the decoupled tree transformation.

Three coordinate/feedback transformations used by the synthesis pipeline:

  * ``luenberger2``: the second controllable canonical form, built from a
    power-major scan of [B, AB, A^2 B, ...] with inputs visited in order;
  * ``third_standard``: the regular feedback that strips the coupling rows,
    leaving independent integrator chains (one per input, lengths sigma_i);
  * ``tree_transform``: for an already decoupled closed loop, the coordinate
    change stacking each output with its derivatives, exposing the
    controllable-observable chains and the residual states.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

from .exactalg import Mat, mat_inverse, mat_rank
from .system import StateSpaceSystem, ValidationError, relative_orders_of


def _reduce_against(basis: list[list[Fraction]], row) -> list[Fraction] | None:
    """Reduce `row` against an echelon basis; returns the new normalized
    basis row if independent, else None.  `basis` rows are unit-pivot."""
    work = list(row)
    for brow in basis:
        piv = next(i for i, e in enumerate(brow) if e != 0)
        if work[piv] != 0:
            f = work[piv]
            work = [w - f * b for w, b in zip(work, brow)]
    try:
        piv = next(i for i, e in enumerate(work) if e != 0)
    except StopIteration:
        return None
    inv = 1 / work[piv]
    return [w * inv for w in work]


class EchelonBasis:
    """Incremental row-independence tester."""

    def __init__(self):
        self.rows: list[list[Fraction]] = []

    def add(self, row) -> bool:
        reduced = _reduce_against(self.rows, row)
        if reduced is None:
            return False
        self.rows.append(reduced)
        return True

    def __len__(self):
        return len(self.rows)


@dataclass(frozen=True)
class Luenberger2Form:
    t_c2: Mat
    a_c2: Mat
    b_c2: Mat
    c_c2: Mat
    sigma: tuple[int, ...]
    beta: dict  # (i, j) 1-based input pairs with j > i -> Fraction

    @property
    def block_offsets(self) -> tuple[int, ...]:
        offs, acc = [], 0
        for s in self.sigma:
            offs.append(acc)
            acc += s
        return tuple(offs)


def controllability_scan(a: Mat, b: Mat) -> tuple[list[int], list[list[int]]]:
    """Power-major scan of [B, AB, ...] selecting independent columns.

    Returns (sigma per input, selected power lists per input).  Inputs whose
    chain has gone dependent are skipped at higher powers.
    """
    n, m = a.rows, b.cols
    basis = EchelonBasis()
    powers: list[Mat] = [b]
    sigma = [0] * m
    alive = set(range(m))
    k = 0
    while len(basis) < n and alive and k < n:
        if k >= len(powers):
            powers.append(a * powers[-1])
        blk = powers[k]
        for j in range(m):
            if j not in alive:
                continue
            if basis.add(blk.col(j)):
                sigma[j] += 1
            else:
                alive.discard(j)
        k += 1
    selected = [[kk for kk in range(sigma[j])] for j in range(m)]
    return sigma, selected


def luenberger2(sys_or_ab, b: Mat | None = None,
                c: Mat | None = None) -> Luenberger2Form:
    """Second controllable canonical form of a controllable pair.

    Accepts either a StateSpaceSystem or the (A, B[, C]) matrices.  Raises
    ValidationError when the pair is not controllable.
    """
    if isinstance(sys_or_ab, StateSpaceSystem):
        a, b, c = sys_or_ab.a, sys_or_ab.b, sys_or_ab.c
    else:
        a = sys_or_ab
        if c is None:
            c = Mat.zeros(0, a.rows)
    n, m = a.rows, b.cols
    sigma, _ = controllability_scan(a, b)
    if sum(sigma) < n:
        raise ValidationError("(A, B) not controllable")
    # grouped basis Q = [b_1, Ab_1, ..., b_2, ...]
    cols = []
    power_cache = [b]
    for _ in range(max(sigma) - 1 if sigma else 0):
        power_cache.append(a * power_cache[-1])
    for j in range(m):
        for k in range(sigma[j]):
            cols.append(power_cache[k].col(j))
    q = Mat(n, n, [cols[j][i] for i in range(n) for j in range(n)])
    q_inv = mat_inverse(q)
    rows = []
    offset = 0
    for j in range(m):
        if sigma[j] == 0:
            continue
        offset += sigma[j]
        h = Mat(1, n, q_inv.row(offset - 1))
        block = h
        rows.extend([h.row(0)])
        for _ in range(sigma[j] - 1):
            block = block * a
            rows.append(block.row(0))
    # reorder: rows were appended h, hA, ... per block already in input order
    t_c2 = Mat.from_rows(rows)
    t_inv = mat_inverse(t_c2)
    a_c2 = t_c2 * a * t_inv
    b_c2 = t_c2 * b
    c_c2 = c * t_inv
    beta = {}
    offs = []
    acc = 0
    for s in sigma:
        offs.append(acc)
        acc += s
    live = [j for j in range(m) if sigma[j] > 0]
    for pos_i, j_i in enumerate(live):
        row_idx = offs[j_i] + sigma[j_i] - 1
        for j in range(m):
            if j > j_i:
                val = b_c2[row_idx, j]
                if val != 0:
                    beta[(j_i + 1, j + 1)] = val
    return Luenberger2Form(t_c2, a_c2, b_c2, c_c2, tuple(sigma), beta)


@dataclass(frozen=True)
class ThirdStandardForm:
    k_c3: Mat        # feedback gain in ORIGINAL coordinates (u = K x + G ubar)
    g_c3: Mat
    a_c3: Mat        # transformed matrices, in the canonical coordinates
    b_c3: Mat
    c_c2: Mat
    t_c2: Mat
    sigma: tuple[int, ...]


def third_standard(form: Luenberger2Form) -> ThirdStandardForm:
    """Feedback transformation turning the canonical form into independent
    integrator chains (block-diagonal shift matrices, unit input rows)."""
    sigma = form.sigma
    m = form.b_c2.cols
    n = form.a_c2.rows
    offs = form.block_offsets
    live = [j for j in range(m) if sigma[j] > 0]
    astar_rows = []
    bstar_rows = []
    for j in live:
        end_row = offs[j] + sigma[j] - 1
        astar_rows.append(form.a_c2.row(end_row))
        bstar_rows.append(form.b_c2.row(end_row))
    astar = Mat.from_rows(astar_rows)
    bstar = Mat.from_rows(bstar_rows)  # rows: live inputs, cols: all m inputs
    bstar_sq = bstar.submatrix(range(len(live)), live)
    g_live = mat_inverse(bstar_sq)  # unit determinant by construction
    f_live = -(g_live * astar)
    f_rows = [[Fraction(0)] * n for _ in range(m)]
    g_rows = [[Fraction(1) if i == j else Fraction(0) for j in range(m)]
              for i in range(m)]
    for k, j in enumerate(live):
        f_rows[j] = list(f_live.row(k))
        g_rows[j] = [Fraction(0)] * m
        for j2, val in zip(live, g_live.row(k)):
            g_rows[j][j2] = val
    f_c3 = Mat.from_rows(f_rows)
    g_c3 = Mat.from_rows(g_rows)
    a_c3 = form.a_c2 + form.b_c2 * f_c3
    b_c3 = form.b_c2 * g_c3
    k_c3 = f_c3 * form.t_c2
    return ThirdStandardForm(k_c3, g_c3, a_c3, b_c3, form.c_c2,
                             form.t_c2, sigma)


def chain_shift_block(size: int) -> Mat:
    return Mat(size, size, [1 if j == i + 1 else 0
                            for i in range(size) for j in range(size)])


@dataclass(frozen=True)
class TreeSystem:
    """Equivalent decoupled tree-like system in stacked-derivative
    coordinates."""

    a: Mat
    b: Mat              # n x p, unit entry at the end of each chain
    c: Mat
    t: Mat              # coordinate change (new = T * old)
    orders: tuple[int, ...]
    chains: tuple[tuple[int, ...], ...]   # per output: new-coordinate rows (0-based)
    residual_new: tuple[int, ...]         # new-coordinate rows of residuals
    residual_original: tuple[int, ...]    # original 1-based state indices
    n_co: int


def tree_transform(a_cl: Mat, b_cl: Mat, c: Mat,
                   orders: tuple[int, ...]) -> TreeSystem:
    """Stack y_i, y_i', ..., y_i^(d_i-1) as leading coordinates of a
    decoupled closed loop (A_cl, B_cl, C); remaining coordinates keep their
    original state values, chosen greedily in state order.

    Raises ValidationError if the stacked rows are dependent, which means
    the loop was not actually decoupled with these orders.
    """
    n = a_cl.rows
    p = c.rows
    if len(orders) != p:
        raise ValidationError("orders length must match output count")
    rows = []
    chains = []
    pos = 0
    for i in range(p):
        row = Mat(1, n, c.row(i))
        chain = []
        for _ in range(orders[i]):
            rows.append(row.row(0))
            chain.append(pos)
            pos += 1
            row = row * a_cl
        chains.append(tuple(chain))
    n_co = pos
    basis = EchelonBasis()
    for r in rows:
        if not basis.add(r):
            raise ValidationError("rank P < n_co: loop is not decoupled "
                                  "with the stated orders")
    residual_original = []
    residual_new = []
    for t in range(1, n + 1):
        if len(rows) == n:
            break
        unit = [Fraction(1) if k == t - 1 else Fraction(0) for k in range(n)]
        if basis.add(unit):
            rows.append(tuple(unit))
            residual_original.append(t)
            residual_new.append(len(rows) - 1)
    t_mat = Mat.from_rows(rows)
    t_inv = mat_inverse(t_mat)
    a_t = t_mat * a_cl * t_inv
    b_t = t_mat * b_cl
    c_t = c * t_inv
    return TreeSystem(a_t, b_t, c_t, t_mat, tuple(orders), tuple(chains),
                      tuple(residual_new), tuple(residual_original), n_co)


def verify_chain_shapes(form: ThirdStandardForm) -> bool:
    """Exact shape check: block-diagonal shift blocks and unit input rows."""
    sigma = [s for s in form.sigma if s > 0]
    n = form.a_c3.rows
    offs, acc = [], 0
    for s in sigma:
        offs.append(acc)
        acc += s
    expected_a = Mat.zeros(n, n)
    rows = [[Fraction(0)] * n for _ in range(n)]
    for off, s in zip(offs, sigma):
        for k in range(s - 1):
            rows[off + k][off + k + 1] = Fraction(1)
    expected_a = Mat.from_rows(rows) if n else Mat.zeros(0, 0)
    if form.a_c3 != expected_a:
        return False
    live = [j for j in range(form.b_c3.cols) if form.sigma[j] > 0]
    for pos, (off, s) in enumerate(zip(offs, sigma)):
        for k in range(s):
            for j in range(form.b_c3.cols):
                want = Fraction(1) if (k == s - 1 and j == live[pos]) else Fraction(0)
                if form.b_c3[off + k, j] != want:
                    return False
    return True


def kalman_controllable_basis(a: Mat, b: Mat) -> list[tuple]:
    """Basis columns (as tuples) of the controllability subspace of (A, B)."""
    n = a.rows
    basis = EchelonBasis()
    chosen = []
    block = b
    for _ in range(n):
        for j in range(block.cols):
            col = block.col(j)
            if basis.add(col):
                chosen.append(col)
        if len(chosen) == n:
            break
        block = a * block
    return chosen


def place_poles(a: Mat, b: Mat, poles: list) -> Mat:
    """Gain K with char(A + BK) restricted to the controllable part equal to
    prod (s - p_i).  `poles` must have exactly as many entries as the
    controllable subspace dimension.  Returns K (m x n).
    """
    n, m = a.rows, b.cols
    basis_cols = kalman_controllable_basis(a, b)
    q = len(basis_cols)
    if len(poles) != q:
        raise ValidationError(
            f"pole count {len(poles)} != assignable pole count {q}")
    if q == 0:
        return Mat.zeros(m, n)
    # complete to a full basis with unit vectors
    basis = EchelonBasis()
    cols = []
    for colv in basis_cols:
        basis.add(colv)
        cols.append(colv)
    for t in range(n):
        unit = tuple(Fraction(1) if k == t else Fraction(0) for k in range(n))
        if len(cols) == n:
            break
        if basis.add(unit):
            cols.append(unit)
    v = Mat(n, n, [cols[j][i] for i in range(n) for j in range(n)])
    v_inv = mat_inverse(v)
    a_t = v_inv * a * v
    b_t = v_inv * b
    a_c = a_t.submatrix(range(q), range(q))
    b_c = b_t.submatrix(range(q), range(m))
    # drop dependent input columns for the canonical construction
    col_basis = EchelonBasis()
    keep = [j for j in range(m) if col_basis.add(b_c.col(j))]
    b_cc = b_c.submatrix(range(q), keep)
    form = luenberger2(a_c, b_cc)
    third = third_standard(form)
    sigma = third.sigma
    offs, acc = [], 0
    for s in sigma:
        offs.append(acc)
        acc += s
    kbar_rows = [[Fraction(0)] * q for _ in range(b_cc.cols)]
    pos = 0
    for j, s in enumerate(sigma):
        if s == 0:
            continue
        target = poles[pos:pos + s]
        pos += s
        from .exactalg import poly_from_roots
        coeffs = poly_from_roots(target).coeffs  # ascending, monic
        for k in range(s):
            kbar_rows[j][offs[j] + k] = -coeffs[k]
    kbar = Mat.from_rows(kbar_rows)
    k_canon = third.k_c3 + third.g_c3 * (kbar * third.t_c2)
    # back to the outer coordinates and the full input set
    k_sub = k_canon * v_inv.submatrix(range(q), range(n))
    rows = [[Fraction(0)] * n for _ in range(m)]
    for r, j in enumerate(keep):
        rows[j] = list(k_sub.row(r))
    return Mat.from_rows(rows)
