"""Signal-flow-graph model of a state-space system and path machinery.

The graph has one node per input, state, and output.  Edges follow the
nonzero pattern of (A, B, C): an edge enters a state node through that
state's integrator (a first-order branch, weight 1 in path order), while
edges into output nodes are instantaneous read-outs (order 0).  The order of
a path is therefore the number of state nodes it traverses.

On top of the graph sit the two structural searches that drive synthesis:
node-disjoint systems of per-pair-shortest input->output paths, and
integrator strings (input->state paths) used to delay inputs.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

from .exactalg import Mat, rat_str
from .system import StateSpaceSystem


@dataclass(frozen=True, order=True)
class SfgNode:
    kind: str   # "u", "x", or "y"
    index: int  # 1-based

    def __str__(self):
        return f"{self.kind}:{self.index}"


@dataclass(frozen=True)
class GeneralPath:
    """Node-simple path from an input to an output (or to a state, for
    integrator strings).  `states` holds the traversed state indices in
    order; the path order equals len(states)."""

    input: int
    output: int | None        # output index, None for integrator strings
    states: tuple[int, ...]

    @property
    def order(self) -> int:
        return len(self.states)

    @property
    def terminal_state(self) -> int:
        return self.states[-1]

    def nodes(self) -> set[SfgNode]:
        out = {SfgNode("u", self.input)}
        out.update(SfgNode("x", t) for t in self.states)
        if self.output is not None:
            out.add(SfgNode("y", self.output))
        return out

    def label(self) -> str:
        tail = f"y{self.output}" if self.output is not None else f"x{self.states[-1]}"
        return f"u{self.input}->" + "".join(f"x{t}->" for t in self.states[:-1]) \
            + f"x{self.states[-1]}" + (f"->{tail}" if self.output is not None else "")


IntegratorString = GeneralPath  # strings are paths whose output is None


@dataclass(frozen=True)
class DecouplingFramework:
    """p node-disjoint paths, one per output, each shortest for its own
    (input, output) pair."""

    paths: tuple[GeneralPath, ...]

    @property
    def assignment(self) -> tuple[int, ...]:
        return tuple(path.input for path in self.paths)

    @property
    def orders(self) -> tuple[int, ...]:
        return tuple(path.order for path in self.paths)

    def nodes(self) -> set[SfgNode]:
        out: set[SfgNode] = set()
        for path in self.paths:
            out |= path.nodes()
        return out


class SignalFlowGraph:
    """Adjacency view of the nonzero pattern of (A, B, C)."""

    def __init__(self, sys: StateSpaceSystem):
        self.sys = sys
        n, m, p = sys.n, sys.m, sys.p
        self.n, self.m, self.p = n, m, p
        # state -> successor states (x_j -> x_i iff A[i][j] != 0)
        self.state_succ: dict[int, list[int]] = {j: [] for j in range(1, n + 1)}
        self.state_pred: dict[int, list[int]] = {i: [] for i in range(1, n + 1)}
        for i in range(n):
            for j in range(n):
                if sys.a[i, j] != 0:
                    self.state_succ[j + 1].append(i + 1)
                    self.state_pred[i + 1].append(j + 1)
        # input -> states it feeds
        self.input_succ: dict[int, list[int]] = {j: [] for j in range(1, m + 1)}
        for i in range(n):
            for j in range(m):
                if sys.b[i, j] != 0:
                    self.input_succ[j + 1].append(i + 1)
        # state -> outputs reading it
        self.state_outputs: dict[int, list[int]] = {j: [] for j in range(1, n + 1)}
        for i in range(p):
            for j in range(n):
                if sys.c[i, j] != 0:
                    self.state_outputs[j + 1].append(i + 1)

    def edges(self):
        """All edges as (from, to, gain, order) in a stable order."""
        sys = self.sys
        out = []
        for j in range(sys.m):
            for i in range(sys.n):
                if sys.b[i, j] != 0:
                    out.append((SfgNode("u", j + 1), SfgNode("x", i + 1),
                                sys.b[i, j], 1))
        for j in range(sys.n):
            for i in range(sys.n):
                if sys.a[i, j] != 0:
                    out.append((SfgNode("x", j + 1), SfgNode("x", i + 1),
                                sys.a[i, j], 1))
        for j in range(sys.n):
            for i in range(sys.p):
                if sys.c[i, j] != 0:
                    out.append((SfgNode("x", j + 1), SfgNode("y", i + 1),
                                sys.c[i, j], 0))
        return out

    def dump(self) -> str:
        lines = [f"{a} -> {b} gain={rat_str(Fraction(g))} order={k}"
                 for a, b, g, k in self.edges()]
        return "\n".join(lines)


def build_sfg(sys: StateSpaceSystem) -> SignalFlowGraph:
    return SignalFlowGraph(sys)


def is_tree(sfg: SignalFlowGraph) -> bool:
    """True iff the state-node subgraph has no directed cycle."""
    color = {}  # 0 visiting, 1 done

    def visit(node: int) -> bool:
        color[node] = 0
        for nxt in sfg.state_succ[node]:
            c = color.get(nxt)
            if c == 0:
                return False
            if c is None and not visit(nxt):
                return False
        color[node] = 1
        return True

    for start in range(1, sfg.n + 1):
        if start not in color and not visit(start):
            return False
    return True


def _distances_from_input(sfg: SignalFlowGraph, u: int,
                          blocked: set[int]) -> dict[int, int]:
    """BFS order-distance (state count) from input u to each state."""
    dist: dict[int, int] = {}
    frontier = [t for t in sfg.input_succ[u] if t not in blocked]
    level = 1
    for t in frontier:
        dist.setdefault(t, level)
    frontier = [t for t in frontier if dist[t] == level]
    while frontier:
        level += 1
        nxt = []
        for t in frontier:
            for t2 in sfg.state_succ[t]:
                if t2 not in blocked and t2 not in dist:
                    dist[t2] = level
                    nxt.append(t2)
        frontier = nxt
    return dist


def _distances_to_output(sfg: SignalFlowGraph, y: int,
                         blocked: set[int]) -> dict[int, int]:
    """Backward BFS: extra states needed after each state to reach output y."""
    dist: dict[int, int] = {}
    frontier = []
    for t in range(1, sfg.n + 1):
        if t not in blocked and y in sfg.state_outputs[t]:
            dist[t] = 0
            frontier.append(t)
    while frontier:
        nxt = []
        for t in frontier:
            for t2 in sfg.state_pred[t]:
                if t2 not in blocked and t2 not in dist:
                    dist[t2] = dist[t] + 1
                    nxt.append(t2)
        frontier = nxt
    return dist


def shortest_paths(sfg: SignalFlowGraph, input_idx: int, output_idx: int,
                   blocked: set[int] | None = None) -> list[GeneralPath]:
    """All minimum-order paths from u_input to y_output, in state-lex order.

    Minimum-order paths in a unit-weight digraph repeat no node, so they are
    node-simple automatically.  `blocked` removes state nodes from the graph.
    """
    blocked = blocked or set()
    d_from = _distances_from_input(sfg, input_idx, blocked)
    d_to = _distances_to_output(sfg, output_idx, blocked)
    candidates = [t for t in d_from if t in d_to]
    if not candidates:
        return []
    total = min(d_from[t] + d_to[t] for t in candidates)

    paths: list[GeneralPath] = []

    def extend(state: int, prefix: list[int]):
        if d_to[state] == 0:
            paths.append(GeneralPath(input_idx, output_idx, tuple(prefix)))
            # longer continuations would exceed the minimum
        if len(prefix) + d_to.get(state, 0) > total:
            return
        for nxt in sorted(sfg.state_succ[state]):
            if nxt in d_to and nxt not in blocked \
                    and len(prefix) + 1 + d_to[nxt] == total:
                extend(nxt, prefix + [nxt])

    for start in sorted(sfg.input_succ[input_idx]):
        if start in d_to and start not in blocked and 1 + d_to[start] == total \
                and d_from.get(start) == 1:
            extend(start, [start])
    return paths


def shortest_string(sfg: SignalFlowGraph, input_idx: int, terminal: int,
                    blocked: set[int] | None = None) -> GeneralPath | None:
    """One minimum-order path from u_input ending at state `terminal`
    (lexicographically smallest state sequence), or None."""
    blocked = blocked or set()
    if terminal in blocked:
        return None
    d_from = _distances_from_input(sfg, input_idx, blocked)
    if terminal not in d_from:
        return None
    total = d_from[terminal]
    # back-chain along tight edges, preferring small indices
    path = [terminal]
    cur = terminal
    for level in range(total - 1, 0, -1):
        preds = [t for t in sorted(sfg.state_pred[cur])
                 if t not in blocked and d_from.get(t) == level]
        cur = preds[0]
        path.append(cur)
    path.reverse()
    if total >= 1 and path[0] not in sfg.input_succ[input_idx]:
        raise AssertionError("inconsistent BFS back-chain")
    return GeneralPath(input_idx, None, tuple(path))


def enumerate_frameworks(sfg: SignalFlowGraph, limit: int | None = None
                         ) -> tuple[list[DecouplingFramework], bool]:
    """Exhaustively enumerate node-disjoint systems of per-pair-shortest
    paths covering all outputs.

    Emission order is lexicographic in (input assignment, path states) with
    outputs processed 1..p, which makes the stream deterministic.  Returns
    (frameworks, truncated).
    """
    p = sfg.p
    candidates: list[list[GeneralPath]] = []
    for y in range(1, p + 1):
        per_output: list[GeneralPath] = []
        for u in range(1, sfg.m + 1):
            per_output.extend(shortest_paths(sfg, u, y))
        per_output.sort(key=lambda path: (path.input, path.states))
        if not per_output:
            return [], False
        candidates.append(per_output)

    found: list[DecouplingFramework] = []
    truncated = False

    def recurse(idx: int, used_inputs: set[int], used_states: set[int],
                chosen: list[GeneralPath]) -> bool:
        nonlocal truncated
        if idx == p:
            found.append(DecouplingFramework(tuple(chosen)))
            if limit is not None and len(found) >= limit:
                truncated = True
                return False
            return True
        for path in candidates[idx]:
            if path.input in used_inputs:
                continue
            if any(t in used_states for t in path.states):
                continue
            chosen.append(path)
            ok = recurse(idx + 1, used_inputs | {path.input},
                         used_states | set(path.states), chosen)
            chosen.pop()
            if not ok:
                return False
        return True

    recurse(0, set(), set(), [])
    return found, truncated


TIER_SINK = 1     # terminal feeds no other integrator
TIER_SHARED = 2   # terminal's integrator merges several branches
TIER_OTHER = 3


def string_tier(sfg: SignalFlowGraph, state: int) -> int:
    """Preference tier for a string terminal."""
    if not sfg.state_succ[state]:
        return TIER_SINK
    in_degree = len(sfg.state_pred[state]) \
        + sum(1 for u in range(1, sfg.m + 1) if state in sfg.input_succ[u])
    if in_degree >= 2:
        return TIER_SHARED
    return TIER_OTHER


@dataclass(frozen=True)
class StringCandidate:
    string: GeneralPath
    tier: int

    @property
    def input(self) -> int:
        return self.string.input

    @property
    def terminal(self) -> int:
        return self.string.terminal_state

    @property
    def order(self) -> int:
        return self.string.order


def string_candidates(sfg: SignalFlowGraph, used_inputs: set[int],
                      used_states: set[int]) -> list[StringCandidate]:
    """All shortest integrator strings from free inputs into free states,
    ordered by (input, tier, terminal index).

    Every reachable terminal yields one candidate, so prefixes of a long
    chain appear as strings in their own right.
    """
    out: list[StringCandidate] = []
    for u in range(1, sfg.m + 1):
        if u in used_inputs:
            continue
        dist = _distances_from_input(sfg, u, used_states)
        for terminal in sorted(dist):
            s = shortest_string(sfg, u, terminal, used_states)
            if s is not None and not (set(s.states) & used_states):
                out.append(StringCandidate(s, string_tier(sfg, terminal)))
    out.sort(key=lambda cand: (cand.input, cand.tier, cand.terminal))
    return out


def enumerate_strings(sfg: SignalFlowGraph, fw: DecouplingFramework,
                      limit: int | None = None
                      ) -> tuple[list[tuple[StringCandidate, ...]], bool]:
    """Stream of string selections: subsets of pairwise-disjoint candidate
    strings, disjoint from the framework, ordered by size then candidate
    rank.  Returns (selections, truncated)."""
    fw_inputs = set(fw.assignment)
    fw_states = {t for path in fw.paths for t in path.states}
    cands = string_candidates(sfg, fw_inputs, fw_states)

    selections: list[tuple[StringCandidate, ...]] = []
    truncated = False

    def compatible(sel: list[StringCandidate], cand: StringCandidate) -> bool:
        for other in sel:
            if other.input == cand.input:
                return False
            if set(other.string.states) & set(cand.string.states):
                return False
        return True

    # breadth by subset size keeps small selections early
    frontier: list[tuple[list[StringCandidate], int]] = [([], 0)]
    while frontier:
        next_frontier = []
        for sel, start in frontier:
            selections.append(tuple(sel))
            if limit is not None and len(selections) >= limit:
                return selections, True
            for k in range(start, len(cands)):
                if compatible(sel, cands[k]):
                    next_frontier.append((sel + [cands[k]], k + 1))
        frontier = next_frontier
    return selections, truncated


@dataclass(frozen=True)
class SubsystemPartition:
    reachable: tuple[int, ...]    # X1, ascending state indices (1-based)
    complement: tuple[int, ...]   # X2
    a11: Mat
    a12: Mat
    a22: Mat
    b1: Mat   # rows X1 of the selected input columns
    b2: Mat   # rows X2 of the remaining input columns (for later feedback)
    c1: Mat
    c2: Mat


def reachable_states(a: Mat, b: Mat, input_cols: list[int]) -> list[int]:
    """Graph reachability closure (1-based states) from the given B columns."""
    n = a.rows
    seen = set()
    stack = []
    for j in input_cols:
        for i in range(n):
            if b[i, j] != 0 and (i + 1) not in seen:
                seen.add(i + 1)
                stack.append(i + 1)
    while stack:
        t = stack.pop()
        for i in range(n):
            if a[i, t - 1] != 0 and (i + 1) not in seen:
                seen.add(i + 1)
                stack.append(i + 1)
    return sorted(seen)


def controllable_partition(sys: StateSpaceSystem,
                           input_indices: list[int]) -> SubsystemPartition:
    """Split the state set into the part reachable from the chosen inputs
    (X1) and its complement (X2), with the corresponding restrictions of
    A, B, C.  `input_indices` are 1-based input numbers."""
    cols = [j - 1 for j in input_indices]
    x1 = reachable_states(sys.a, sys.b, cols)
    x2 = [t for t in range(1, sys.n + 1) if t not in x1]
    idx1 = [t - 1 for t in x1]
    idx2 = [t - 1 for t in x2]
    other_cols = [j for j in range(sys.m) if j not in cols]
    return SubsystemPartition(
        tuple(x1), tuple(x2),
        a11=sys.a.submatrix(idx1, idx1),
        a12=sys.a.submatrix(idx1, idx2),
        a22=sys.a.submatrix(idx2, idx2),
        b1=sys.b.submatrix(idx1, cols),
        b2=sys.b.submatrix(idx2, other_cols),
        c1=sys.c.submatrix(range(sys.p), idx1),
        c2=sys.c.submatrix(range(sys.p), idx2),
    )
