import itertools
import random

from decoupler.exactalg import Mat
from decoupler.flowgraph import (
    DecouplingFramework,
    SfgNode,
    build_sfg,
    controllable_partition,
    enumerate_frameworks,
    enumerate_strings,
    is_tree,
    shortest_paths,
    shortest_string,
    string_candidates,
    string_tier,
)
from decoupler.system import StateSpaceSystem, relative_orders, validate

from fixtures_systems import bench9, bench22, identity_system
from helpers import random_mat


class TestBuildSfg:
    def test_single_chain_nodes_and_edges(self):
        sys = identity_system(1)
        sfg = build_sfg(sys)
        edges = sfg.edges()
        assert len(edges) == 2
        assert edges[0][:2] == (SfgNode("u", 1), SfgNode("x", 1))
        assert edges[1][:2] == (SfgNode("x", 1), SfgNode("y", 1))

    def test_bench9_edge_counts(self):
        sfg = build_sfg(bench9(0, 1))
        edges = sfg.edges()
        b_edges = [e for e in edges if e[0].kind == "u"]
        a_edges = [e for e in edges if e[0].kind == "x" and e[1].kind == "x"]
        c_edges = [e for e in edges if e[1].kind == "y"]
        assert len(b_edges) == 4 and len(a_edges) == 6 and len(c_edges) == 4
        a_pairs = {(e[0].index, e[1].index) for e in a_edges}
        assert a_pairs == {(4, 3), (5, 4), (6, 5), (8, 7), (3, 7), (9, 8)}

    def test_self_loop(self):
        a = Mat.from_rows([[0, 0], [0, 1]])
        sys = StateSpaceSystem(a, Mat.identity(2), Mat.identity(2))
        sfg = build_sfg(sys)
        assert 2 in sfg.state_succ[2]

    def test_dump_format(self):
        sfg = build_sfg(identity_system(1))
        assert sfg.dump() == "u:1 -> x:1 gain=1 order=1\nx:1 -> y:1 gain=1 order=0"


class TestIsTree:
    def test_bench9_is_tree(self):
        assert is_tree(build_sfg(bench9(0, 1)))

    def test_self_loop_is_not(self):
        a = Mat.from_rows([[0, 0], [0, 1]])
        sys = StateSpaceSystem(a, Mat.identity(2), Mat.identity(2))
        assert not is_tree(build_sfg(sys))

    def test_two_cycle_is_not(self):
        a = Mat.from_rows([[0, 1], [1, 0]])
        sys = StateSpaceSystem(a, Mat.identity(2), Mat.identity(2))
        assert not is_tree(build_sfg(sys))

    def test_empty_a_is_tree(self):
        assert is_tree(build_sfg(identity_system(3)))


class TestShortestPaths:
    def test_bench9_u3_y3(self):
        sfg = build_sfg(bench9(0, 1))
        paths = shortest_paths(sfg, 3, 3)
        assert len(paths) == 1
        assert paths[0].states == (6, 5, 4, 3) and paths[0].order == 4

    def test_bench9_u1_y1(self):
        sfg = build_sfg(bench9(0, 1))
        paths = shortest_paths(sfg, 1, 1)
        assert len(paths) == 1 and paths[0].order == 1

    def test_bench9_u4_y2_unreachable(self):
        sfg = build_sfg(bench9(0, 1))
        assert shortest_paths(sfg, 4, 2) == []

    def test_parallel_shortest_paths_all_found(self):
        # u1 feeds x1 and x2, both read by y1
        a = Mat.zeros(2, 2)
        b = Mat.from_rows([[1, 0], [1, 1]])
        c = Mat.from_rows([[1, 1], [0, 1]])
        sfg = build_sfg(StateSpaceSystem(a, b, c))
        paths = shortest_paths(sfg, 1, 1)
        assert [p.states for p in paths] == [(1,), (2,)]


class TestFrameworks:
    def test_bench9_unique_framework(self):
        sfg = build_sfg(bench9(0, 1))
        fws, truncated = enumerate_frameworks(sfg)
        assert not truncated and len(fws) == 1
        fw = fws[0]
        assert fw.assignment == (1, 2, 3)
        assert fw.orders == (1, 1, 4)

    def test_identity_framework(self):
        fws, _ = enumerate_frameworks(build_sfg(identity_system(3)))
        assert len(fws) == 1
        assert fws[0].assignment == (1, 2, 3)
        assert fws[0].orders == (1, 1, 1)

    def test_bench22_first_framework(self):
        fws, _ = enumerate_frameworks(build_sfg(bench22()))
        assert fws
        assert fws[0].assignment == (1, 2, 3, 4, 5, 6)
        assert fws[0].orders == (1, 1, 1, 2, 1, 5)

    def test_orders_bound_relative_orders(self):
        for sys in (bench9(0, 1), bench22()):
            d = relative_orders(sys).d
            fws, _ = enumerate_frameworks(build_sfg(sys))
            for fw in fws:
                for i, path in enumerate(fw.paths):
                    assert path.order >= d[i]

    def test_limit_truncation(self):
        # two outputs each reachable from two inputs -> several frameworks
        a = Mat.zeros(2, 2)
        b = Mat.from_rows([[1, 1, 0], [0, 1, 1]])
        c = Mat.identity(2)
        sfg = build_sfg(StateSpaceSystem(a, b, c))
        fws, truncated = enumerate_frameworks(sfg, limit=1)
        assert truncated and len(fws) == 1

    def test_matches_brute_force_on_random_systems(self):
        rng = random.Random(2024)
        checked = 0
        while checked < 50:
            n = rng.randint(2, 6)
            m = rng.randint(1, 3)
            p = rng.randint(1, min(m, 2))
            a = Mat(n, n, [rng.choice([0, 0, 0, 1, -1]) for _ in range(n * n)])
            b = Mat(n, m, [rng.choice([0, 0, 1]) for _ in range(n * m)])
            c = Mat(p, n, [rng.choice([0, 0, 0, 1]) for _ in range(p * n)])
            sys = StateSpaceSystem(a, b, c)
            sfg = build_sfg(sys)
            got, truncated = enumerate_frameworks(sfg)
            assert not truncated
            expected = brute_force_frameworks(sys)
            assert {fw.paths for fw in got} == expected
            checked += 1


def brute_force_frameworks(sys: StateSpaceSystem) -> set:
    """Oracle: enumerate every tuple of per-pair-minimal simple paths with
    distinct inputs and disjoint node sets, by exhaustive DFS."""
    n, m, p = sys.n, sys.m, sys.p

    def all_simple_paths(u, y):
        results = []

        def walk(state, seen, seq):
            if sys.c[y - 1, state - 1] != 0:
                results.append(tuple(seq))
            for nxt in range(1, n + 1):
                if sys.a[nxt - 1, state - 1] != 0 and nxt not in seen:
                    walk(nxt, seen | {nxt}, seq + [nxt])

        for start in range(1, n + 1):
            if sys.b[start - 1, u - 1] != 0:
                walk(start, {start}, [start])
        return results

    per_pair = {}
    for u in range(1, m + 1):
        for y in range(1, p + 1):
            paths = all_simple_paths(u, y)
            if paths:
                shortest = min(len(s) for s in paths)
                per_pair[(u, y)] = [s for s in paths if len(s) == shortest]

    from decoupler.flowgraph import GeneralPath

    found = set()
    for assignment in itertools.permutations(range(1, m + 1), p):
        option_lists = []
        ok = True
        for y, u in enumerate(assignment, start=1):
            if (u, y) not in per_pair:
                ok = False
                break
            option_lists.append([(u, y, s) for s in per_pair[(u, y)]])
        if not ok:
            continue
        for combo in itertools.product(*option_lists):
            node_sets = [set(s) | {("u", u)} for u, y, s in combo]
            disjoint = True
            for i in range(len(combo)):
                for j in range(i + 1, len(combo)):
                    if node_sets[i] & node_sets[j]:
                        disjoint = False
            if disjoint:
                found.add(tuple(GeneralPath(u, y, s) for u, y, s in combo))
    return found


class TestStrings:
    def test_bench9_candidates_and_tiers(self):
        sys = bench9(0, 1)
        sfg = build_sfg(sys)
        fw = enumerate_frameworks(sfg)[0][0]
        cands = string_candidates(sfg, set(fw.assignment),
                                  {t for path in fw.paths for t in path.states})
        labels = [(c.input, c.terminal, c.order, c.tier) for c in cands]
        assert labels == [(4, 7, 3, 1), (4, 8, 2, 3), (4, 9, 1, 3)]

    def test_bench22_selections_contain_both_branches(self):
        sfg = build_sfg(bench22())
        fw = enumerate_frameworks(sfg)[0][0]
        sels, truncated = enumerate_strings(sfg, fw)
        assert not truncated
        keyed = {tuple(sorted((c.input, c.terminal) for c in sel))
                 for sel in sels}
        assert ((7, 13), (8, 17)) in keyed
        assert ((7, 12), (8, 17)) in keyed
        idx_12 = next(i for i, sel in enumerate(sels)
                      if tuple(sorted((c.input, c.terminal) for c in sel))
                      == ((7, 12), (8, 17)))
        idx_13 = next(i for i, sel in enumerate(sels)
                      if tuple(sorted((c.input, c.terminal) for c in sel))
                      == ((7, 13), (8, 17)))
        assert idx_12 < idx_13

    def test_all_inputs_used_gives_empty_selection_only(self):
        sfg = build_sfg(identity_system(2))
        fw = enumerate_frameworks(sfg)[0][0]
        sels, _ = enumerate_strings(sfg, fw)
        assert sels == [()]

    def test_selections_pairwise_disjoint(self):
        sfg = build_sfg(bench22())
        fw = enumerate_frameworks(sfg)[0][0]
        fw_nodes = {t for path in fw.paths for t in path.states}
        sels, _ = enumerate_strings(sfg, fw)
        for sel in sels:
            seen = set()
            for cand in sel:
                states = set(cand.string.states)
                assert not (states & seen)
                assert not (states & fw_nodes)
                seen |= states

    def test_shortest_string(self):
        sfg = build_sfg(bench9(0, 1))
        s = shortest_string(sfg, 4, 7)
        assert s is not None and s.states == (9, 8, 7)


class TestControllablePartition:
    def test_all_inputs_reach_everything(self):
        sys = bench9(0, 1)
        part = controllable_partition(sys, [1, 2, 3, 4])
        assert part.reachable == tuple(range(1, 10))
        assert part.complement == ()

    def test_bench9_u4_only(self):
        part = controllable_partition(bench9(0, 1), [4])
        assert part.reachable == (7, 8, 9)

    def test_empty_inputs(self):
        part = controllable_partition(bench9(0, 1), [])
        assert part.reachable == ()
        assert part.complement == tuple(range(1, 10))

    def test_block_triangular_structure(self):
        part = controllable_partition(bench9(0, 1), [4])
        # no edge from X1 into X2: rows of X2 over columns of X1 vanish
        sys = bench9(0, 1)
        for i in part.complement:
            for j in part.reachable:
                assert sys.a[i - 1, j - 1] == 0


class TestStructuralBounds:
    def test_relative_order_at_least_graph_distance(self):
        # the algebraic order of an output never beats the shortest path
        # order from any input to it
        rng = random.Random(333)
        from decoupler.system import relative_orders, validate, ValidationError
        checked = 0
        while checked < 20:
            n = rng.randint(2, 6)
            m = rng.randint(1, 3)
            p = rng.randint(1, min(m, 2))
            a = Mat(n, n, [rng.choice([0, 0, 1, -1]) for _ in range(n * n)])
            b = Mat(n, m, [rng.choice([0, 0, 1]) for _ in range(n * m)])
            c = Mat(p, n, [rng.choice([0, 0, 0, 1]) for _ in range(p * n)])
            try:
                sys = StateSpaceSystem(a, b, c)
                validate(sys)
            except ValidationError:
                continue
            sfg = build_sfg(sys)
            d = relative_orders(sys).d
            for y in range(1, p + 1):
                dists = []
                for u in range(1, m + 1):
                    paths = shortest_paths(sfg, u, y)
                    if paths:
                        dists.append(paths[0].order)
                if dists:
                    assert d[y - 1] >= min(dists)
            checked += 1
