"""Pole assignment for decoupled systems.

A decoupled closed loop, rewritten in stacked-derivative coordinates by
``tree_transform``, splits into one chain per output plus residual states.
Poles can be assigned without breaking the decoupling exactly when every
controllable state is reached by a single feedforward input; the witness for
a shared state reports the chains whose coordinate functionals read its
feeder signals.  When the partition is clean, each input's subsystem gets
its own gains, chain by chain.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

from .canonical import TreeSystem, place_poles
from .exactalg import (
    Mat,
    Poly,
    PolyMat,
    char_poly,
    poly_from_roots,
    resolvent,
)
from .system import (
    FeedbackLaw,
    IntegratorDiagonal,
    StateSpaceSystem,
    ValidationError,
    diagonality_check,
    transfer_matrix,
)


@dataclass(frozen=True)
class IndependencePartition:
    reached_by: dict          # tree-coordinate row -> tuple of input indices
    subsystems: tuple         # per input: tuple of tree rows (chain + residuals)


@dataclass(frozen=True)
class SharedStateWitness:
    state: int | None         # original 1-based state index when residual
    row: int                  # tree-coordinate row (0-based)
    inputs: tuple[int, ...]   # 1-based feedforward inputs sharing the state
    reached_by: tuple[int, ...]


def _tree_reachability(tree: TreeSystem) -> dict[int, list[int]]:
    n = tree.a.rows
    reached: dict[int, set[int]] = {r: set() for r in range(n)}
    for j in range(tree.b.cols):
        frontier = [r for r in range(n) if tree.b[r, j] != 0]
        seen = set(frontier)
        while frontier:
            r = frontier.pop()
            reached[r].add(j + 1)
            for r2 in range(n):
                if tree.a[r2, r] != 0 and r2 not in seen:
                    seen.add(r2)
                    frontier.append(r2)
    return {r: sorted(v) for r, v in reached.items()}


def _chain_readers(tree: TreeSystem, a_cl: Mat, c: Mat) -> list[set[int]]:
    """Per output chain, the original states read by its stacked
    coordinates (supports of C_i A_cl^k, k < d_i)."""
    readers = []
    n = a_cl.rows
    for i, d in enumerate(tree.orders):
        row = Mat(1, n, c.row(i))
        support: set[int] = set()
        for _ in range(d):
            support.update(t + 1 for t in range(n) if row[0, t] != 0)
            row = row * a_cl
        readers.append(support)
    return readers


def independence_test(tree: TreeSystem, a_cl: Mat | None = None,
                      c: Mat | None = None
                      ) -> IndependencePartition | SharedStateWitness:
    """Check that every state of the tree system is reached by exactly one
    feedforward input.

    On failure the witness names the first shared state; the sharing set is
    reported by chain membership of the shared state's feeder signals (the
    chains whose coordinates read the original states feeding it), which is
    a superset of the plain reachability sharers.  `a_cl`/`c` are the
    original-coordinate closed-loop matrices used for that read-out; they
    default to reconstructing them from the tree transform.
    """
    reached = _tree_reachability(tree)
    n = tree.a.rows
    for row in range(n):
        ins = reached[row]
        if len(ins) > 1:
            if a_cl is None or c is None:
                from .exactalg import mat_inverse
                t_inv = mat_inverse(tree.t)
                a_cl = t_inv * tree.a * tree.t
                c = tree.c * tree.t
            # original index of the shared row (residual rows keep their
            # original state identity)
            state = None
            for orig, new_row in zip(tree.residual_original,
                                     tree.residual_new):
                if new_row == row:
                    state = orig
                    break
            sharing: set[int] = set(ins)
            if state is not None:
                feeders = {z + 1 for z in range(n)
                           if a_cl[state - 1, z] != 0}
                readers = _chain_readers(tree, a_cl, c)
                sharing = {i + 1 for i, sup in enumerate(readers)
                           if sup & feeders}
            return SharedStateWitness(state, row, tuple(sorted(sharing)),
                                      tuple(ins))
    subsystems = []
    for j in range(tree.b.cols):
        rows = tuple(r for r in range(n) if reached[r] == [j + 1])
        subsystems.append(rows)
    return IndependencePartition(reached, tuple(subsystems))


def m_matrix(a: Mat, b: Mat, c: Mat, k: Mat) -> tuple[PolyMat, Poly]:
    """Numerator matrix m(s) and closed-loop characteristic polynomial for
    the feedback u = Kx + w: Delta(s) y(s) = m(s) w(s) exactly."""
    a_cl = a + b * k
    delta = char_poly(a_cl)
    n = a.rows
    from .system import relative_orders_of
    d = relative_orders_of(a_cl, b, c).d
    entries = []
    for i in range(c.rows):
        # coefficients per input column, ascending powers of s
        per_col = [[Fraction(0)] * (n + 1) for _ in range(b.cols)]
        row = Mat(1, n, c.row(i))
        powers = []
        for _ in range(n):
            powers.append(row * b)
            row = row * a_cl
        for j in range(d[i], n + 1):
            alpha = delta.coeff(j)
            if alpha == 0:
                continue
            for kk in range(d[i], j + 1):
                rb = powers[kk - 1]
                for col in range(b.cols):
                    v = rb[0, col]
                    if v:
                        per_col[col][j - kk] += alpha * v
        entries.extend(Poly(cs) for cs in per_col)
    return PolyMat(c.rows, b.cols, entries), delta


def place_chain(length: int, poles: list) -> Mat:
    """Unique gain row turning one integrator chain into the monic target
    polynomial prod (s - p_j)."""
    if len(poles) != length:
        raise ValidationError(
            f"pole count {len(poles)} != chain length {length}")
    target = poly_from_roots(poles)
    return Mat(1, length, [-target.coeff(k) for k in range(length)])


@dataclass(frozen=True)
class PlacementResult:
    law: FeedbackLaw            # over tree coordinates, G = identity
    subsystems: tuple           # per input: tree rows placed
    targets: tuple              # per input: target polynomial


def place_decoupled(tree: TreeSystem, spec: list[list] | None = None,
                    default_pole: Fraction = Fraction(-1)
                    ) -> PlacementResult | SharedStateWitness:
    """Per-subsystem pole placement that provably preserves decoupling.

    `spec` holds one pole multiset per output; sizes must match the
    subsystem dimensions (chain plus the residual states only that input
    reaches).  Returns the verified feedback over tree coordinates or the
    shared-state witness when independence fails.
    """
    verdict = independence_test(tree)
    if isinstance(verdict, SharedStateWitness):
        return verdict
    n = tree.a.rows
    p = tree.b.cols
    if spec is None:
        spec = [[default_pole] * len(rows) for rows in verdict.subsystems]
    if len(spec) != p:
        raise ValidationError(f"expected {p} pole lists, got {len(spec)}")
    k_rows = [[Fraction(0)] * n for _ in range(p)]
    targets = []
    for j, rows in enumerate(verdict.subsystems):
        poles = [Fraction(x) for x in spec[j]]
        if len(poles) != len(rows):
            raise ValidationError(
                f"subsystem {j + 1} has {len(rows)} states but "
                f"{len(poles)} poles were given")
        idx = list(rows)
        a_sub = tree.a.submatrix(idx, idx)
        b_sub = tree.b.submatrix(idx, [j])
        k_sub = place_poles(a_sub, b_sub, poles)
        for kk, r in enumerate(idx):
            k_rows[j][r] = k_sub[0, kk]
        targets.append(poly_from_roots(poles))
    k = Mat.from_rows(k_rows)
    law = FeedbackLaw(k, Mat.identity(p))
    # exact verification: still diagonal, denominators divide the targets,
    # and the full spectrum equals the union of the targets
    a_cl = tree.a + tree.b * k
    t = transfer_matrix(a_cl, tree.b, tree.c)
    res = diagonality_check(t, relaxed=True)
    if not isinstance(res, IntegratorDiagonal):
        raise AssertionError("per-subsystem placement broke diagonality")
    total = Poly([1])
    for tgt in targets:
        total = total * tgt
    if char_poly(a_cl) != total:
        raise AssertionError("closed-loop spectrum differs from the targets")
    for i in range(p):
        if not targets[i].divmod(t[i, i].den)[1].is_zero():
            raise AssertionError("diagonal denominator escaped its target")
    return PlacementResult(law, verdict.subsystems, tuple(targets))
