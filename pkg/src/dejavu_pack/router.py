"""Intracluster routing feasibility.

``route`` answers the cluster legality question with a deterministic
negotiated-congestion search (PathFinder style); ``brute_force_routable``
gives the exact answer by exhaustive enumeration and serves as the
independent oracle on small graphs.  Both are pure functions.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from heapq import heappop, heappush
from typing import TYPE_CHECKING

from .arch import RoutingGraph
from .errors import ResourceOverflowError, RoutingBudgetError

if TYPE_CHECKING:
    from .packer import ClusterState

DEFAULT_MAX_ITERATIONS = 50
_PRES_FAC_GROWTH = 1.5


@dataclass(frozen=True)
class RoutingProblem:
    """One net per distinct signal: (source node, sorted sink nodes)."""

    graph: RoutingGraph
    nets: tuple[tuple[int, tuple[int, ...]], ...]


@dataclass(frozen=True)
class RoutingResult:
    legal: bool
    iterations_used: int
    routes: tuple[tuple[int, ...], ...] | None = None


def derive_problem(cluster: "ClusterState") -> RoutingProblem:
    """Map a cluster's bound pins onto a routing problem.

    Internal nets source at the driver's output pin; each externally-driven
    signal sources at the lowest boundary input pin not yet taken in this
    derivation; every net that leaves the cluster gains the lowest free
    reachable boundary output pin as an extra sink.  Raises
    ``ResourceOverflowError`` when the boundary pins run out, which callers
    treat as an illegal verdict without routing.
    """
    if cluster.is_empty():
        raise ValueError("cannot derive a routing problem from an empty cluster")
    arch = cluster.arch
    conn = cluster.connectivity()

    taken_out: set[int] = set()
    exit_pin: dict[int, int] = {}
    for o in conn.exiting_outputs:
        pin = next((p for p in arch.exit_options[o] if p not in taken_out), None)
        if pin is None:
            raise ResourceOverflowError(
                f"no free external output pin reachable from output pin {o}"
            )
        taken_out.add(pin)
        exit_pin[o] = pin

    nets: list[tuple[int, tuple[int, ...]]] = []
    exiting = set(conn.exiting_outputs)
    for o in sorted(set(conn.internal) | exiting):
        sinks = list(conn.internal.get(o, ()))
        if o in exiting:
            sinks.append(exit_pin[o])
        nets.append((o, tuple(sinks)))

    free_in = iter(p for p in arch.external_input_pins)
    taken_in = 0
    for group in conn.external_groups:
        src = next(free_in, None)
        if src is None:
            raise ResourceOverflowError(
                f"cluster needs more than {len(arch.external_input_pins)} external input signals"
            )
        taken_in += 1
        nets.append((src, tuple(group)))

    return RoutingProblem(arch.graph, tuple(nets))


def route(problem: RoutingProblem, max_iterations: int = DEFAULT_MAX_ITERATIONS) -> RoutingResult:
    """Negotiated-congestion routing over unit-capacity nodes.

    Each round rips up and reroutes every net in order; node cost is
    1 + history + pres_fac * overuse, with history bumped once per overused
    node per round and pres_fac growing 1.5x per round.  Legal on the first
    congestion-free round; deterministic throughout (fixed net order,
    node-id tie-breaks in the search).
    """
    nets = problem.nets
    if not nets:
        return RoutingResult(True, 0, ())
    graph = problem.graph
    n = graph.num_nodes
    out = graph.out_edges
    cap = graph.capacity
    usage = [0] * n
    history = [0.0] * n
    pres_fac = 1.0
    routes: list[set[int] | None] = [None] * len(nets)

    for rnd in range(1, max_iterations + 1):
        for i, (src, sinks) in enumerate(nets):
            old = routes[i]
            if old is not None:
                for node in old:
                    usage[node] -= 1
            tree = _route_net(src, sinks, out, cap, usage, history, pres_fac)
            if tree is None:
                # A sink is topologically unreachable; no amount of
                # negotiation can fix that.
                return RoutingResult(False, rnd)
            routes[i] = tree
            for node in tree:
                usage[node] += 1
        overused = [node for node in range(n) if usage[node] > cap[node]]
        if not overused:
            assert all(usage[node] <= cap[node] for node in range(n))
            return RoutingResult(True, rnd, tuple(tuple(sorted(t)) for t in routes))
        for node in overused:
            history[node] += 1.0
        pres_fac *= _PRES_FAC_GROWTH

    return RoutingResult(False, max_iterations)


def _route_net(
    src: int,
    sinks: tuple[int, ...],
    out: tuple[tuple[int, ...], ...],
    cap: tuple[int, ...],
    usage: list[int],
    history: list[float],
    pres_fac: float,
) -> set[int] | None:
    """Grow a route tree from ``src`` covering every sink; None if impossible."""
    tree = {src}
    for sink in sinks:
        if sink in tree:
            continue
        dist: dict[int, float] = {}
        prev: dict[int, int] = {}
        heap: list[tuple[float, int]] = []
        for node in sorted(tree):
            dist[node] = 0.0
            heappush(heap, (0.0, node))
        found = False
        while heap:
            cost, node = heappop(heap)
            if cost > dist.get(node, float("inf")):
                continue
            if node == sink:
                found = True
                break
            for nb in out[node]:
                over = usage[nb] + 1 - cap[nb]
                nc = cost + 1.0 + history[nb] + (pres_fac * over if over > 0 else 0.0)
                if nc < dist.get(nb, float("inf")):
                    dist[nb] = nc
                    prev[nb] = node
                    heappush(heap, (nc, nb))
        if not found:
            return None
        node = sink
        while node not in tree:
            tree.add(node)
            node = prev[node]
    return tree


def validate_result(problem: RoutingProblem, result: RoutingResult) -> None:
    """Assert a legal result is structurally sound (disjoint, connected)."""
    assert result.legal and result.routes is not None
    used: dict[int, int] = {}
    for route_nodes in result.routes:
        for node in route_nodes:
            used[node] = used.get(node, 0) + 1
    for node, count in used.items():
        assert count <= problem.graph.capacity[node], f"node {node} overused"
    adj = problem.graph.out_edges
    for (src, sinks), route_nodes in zip(problem.nets, result.routes):
        nodes = set(route_nodes)
        assert src in nodes
        seen = {src}
        frontier = [src]
        while frontier:
            cur = frontier.pop()
            for nb in adj[cur]:
                if nb in nodes and nb not in seen:
                    seen.add(nb)
                    frontier.append(nb)
        for sink in sinks:
            assert sink in seen, f"sink {sink} not reached from {src}"


def _simple_paths(out: tuple[tuple[int, ...], ...], src: int, dst: int) -> list[frozenset[int]]:
    """Node sets of all simple src->dst paths."""
    results: list[frozenset[int]] = []
    path = [src]
    on_path = {src}

    def walk(node: int) -> None:
        if node == dst:
            results.append(frozenset(path))
            return
        for nb in out[node]:
            if nb not in on_path:
                path.append(nb)
                on_path.add(nb)
                walk(nb)
                path.pop()
                on_path.discard(nb)

    walk(src)
    return results


def _net_candidates(
    graph: RoutingGraph, src: int, sinks: tuple[int, ...], union_cap: int
) -> list[frozenset[int]]:
    per_sink = []
    for sink in sinks:
        paths = _simple_paths(graph.out_edges, src, sink)
        if not paths:
            return []
        per_sink.append(paths)
    unions: set[frozenset[int]] = set()
    for combo in itertools.product(*per_sink):
        unions.add(frozenset().union(*combo))
        if len(unions) > union_cap:
            raise RoutingBudgetError(
                f"net ({src} -> {sinks}) exceeds {union_cap} candidate route sets"
            )
    return sorted(unions, key=lambda s: (len(s), sorted(s)))


def brute_force_routable(
    problem: RoutingProblem, node_budget: int = 64, union_cap: int = 100_000
) -> bool:
    """Exact routability by backtracking over per-net candidate route sets.

    Every route tree decomposes into simple source-to-sink paths, so
    enumerating unions of simple paths covers all solutions.  Guarded by a
    node budget; raises ``RoutingBudgetError`` above it.
    """
    if problem.graph.num_nodes > node_budget:
        raise RoutingBudgetError(
            f"graph has {problem.graph.num_nodes} nodes, oracle budget is {node_budget}"
        )
    candidates = []
    for src, sinks in problem.nets:
        cand = _net_candidates(problem.graph, src, sinks, union_cap)
        if not cand:
            return False
        candidates.append(cand)
    # Nets with the fewest options first keeps the search shallow.
    candidates.sort(key=len)

    def search(idx: int, used: frozenset[int]) -> bool:
        if idx == len(candidates):
            return True
        for cand in candidates[idx]:
            if not (cand & used):
                if search(idx + 1, used | cand):
                    return True
        return False

    return search(0, frozenset())
