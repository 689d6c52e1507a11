"""Benchmark systems used across the test suite.

Two desk-scale systems exercise every stage of the pipeline: a 9-state
tree-like system with a gain parameter that flips it between decouplable and
not, and a 22-state system that needs mixed-input compensation and has a
shared branch blocking pole assignment.
"""

from __future__ import annotations

from fractions import Fraction

from decoupler.exactalg import Mat
from decoupler.system import FeedbackLaw, StateSpaceSystem


def _sparse(rows: int, cols: int, entries: dict) -> Mat:
    data = [[Fraction(0)] * cols for _ in range(rows)]
    for (i, j), v in entries.items():
        data[i - 1][j - 1] = Fraction(v)
    return Mat.from_rows(data)


def bench9(alpha1: int, alpha2: int, name: str = "") -> StateSpaceSystem:
    """9-state, 4-input, 3-output system; alpha picks the x7 coupling."""
    a = _sparse(9, 9, {
        (3, 4): 1, (4, 5): 1, (5, 6): 1,
        (7, 8): 1, (7, 2): alpha1, (7, 3): alpha2,
        (8, 9): 1,
    })
    b = _sparse(9, 4, {(1, 1): 1, (2, 2): 1, (6, 3): 1, (9, 4): 1})
    c = _sparse(3, 9, {(1, 1): 1, (2, 2): 1, (3, 1): 1, (3, 3): 1})
    return StateSpaceSystem(a, b, c, name or f"bench9[{alpha1},{alpha2}]")


def bench9_law() -> FeedbackLaw:
    """Hand decoupling law for bench9(0, 1):
    u1 = x7; u2 = v2; u3 = v3 - v1; u4 = v1 - x5."""
    f = _sparse(4, 9, {(1, 7): 1, (4, 5): -1})
    g = _sparse(4, 3, {(2, 2): 1, (3, 1): -1, (3, 3): 1, (4, 1): 1})
    return FeedbackLaw(f, g)


def bench22(name: str = "bench22") -> StateSpaceSystem:
    """22-state, 10-input, 6-output system."""
    a = _sparse(22, 22, {
        (4, 5): 1,
        (7, 8): 1, (8, 9): 1, (9, 10): 1, (10, 11): 1,
        (12, 3): 1, (12, 13): 1,
        (13, 14): 1,
        (14, 1): 1, (14, 15): 1,
        (15, 16): 1,
        (17, 18): 1,
        (18, 2): 1, (18, 19): 1,
        (19, 20): 1,
    })
    b = _sparse(22, 10, {
        (1, 1): 1, (2, 2): 1, (3, 3): 1, (5, 4): 1, (6, 5): 1,
        (11, 6): 1, (16, 7): 1, (20, 8): 1, (21, 9): 1, (22, 10): 1,
    })
    c = _sparse(6, 22, {
        (1, 1): 1,
        (2, 2): 1,
        (3, 3): 1,
        (4, 3): 1, (4, 4): -1,
        (5, 6): 1,
        (6, 3): 1, (6, 4): -1, (6, 6): 1, (6, 7): 1,
    })
    return StateSpaceSystem(a, b, c, name)


def bench22_law() -> FeedbackLaw:
    """Hand decoupling law for bench22:
    u1 = x21; u2 = x22; u3 = x5 + x13; u4 = v3 - x14; u5 = x17;
    u6 = v6 - v4 - v5; u7 = v4 - v1; u8 = v5 - v2; u9 = v1; u10 = v2."""
    f = _sparse(10, 22, {
        (1, 21): 1, (2, 22): 1,
        (3, 5): 1, (3, 13): 1,
        (4, 14): -1,
        (5, 17): 1,
    })
    g = _sparse(10, 6, {
        (4, 3): 1,
        (6, 4): -1, (6, 5): -1, (6, 6): 1,
        (7, 1): -1, (7, 4): 1,
        (8, 2): -1, (8, 5): 1,
        (9, 1): 1,
        (10, 2): 1,
    })
    return FeedbackLaw(f, g)


def identity_system(n: int) -> StateSpaceSystem:
    return StateSpaceSystem(Mat.zeros(n, n), Mat.identity(n), Mat.identity(n),
                            f"identity{n}")


def chain_system() -> StateSpaceSystem:
    """x1' = x2, x2' = u, y = x1."""
    a = _sparse(2, 2, {(1, 2): 1})
    b = _sparse(2, 1, {(2, 1): 1})
    c = _sparse(1, 2, {(1, 1): 1})
    return StateSpaceSystem(a, b, c, "chain2")
