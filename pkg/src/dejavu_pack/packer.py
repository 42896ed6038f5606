"""Greedy seed-based packing with speculative and detailed passes.

The packer repeatedly seeds a cluster with the unpacked molecule that has
the most used pins, grows it by connectivity gain, and checks legality by
intracluster routing.  A speculative pass builds the whole candidate
cluster and routes once; if that fails, a detailed pass rebuilds it from
the seed with a legality check after every molecule.  With memoization
enabled, checks are answered from the packing signature tree whenever the
current signature has been evaluated before; the decision logic never
changes, so packings are identical with memoization on or off.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Any

from .arch import ArchitectureModel, Location, exclusivity_ok, kind_fits_location
from .errors import ResourceOverflowError, UnpackableMoleculeError
from .netlist import Molecule, Netlist, form_molecules
from .pst import (
    ExternalConnectivity,
    LcnKey,
    PackingSignatureTree,
    PstStats,
    SignatureCursor,
    compute_external,
)
from .router import DEFAULT_MAX_ITERATIONS, derive_problem, route


@dataclass(frozen=True)
class ClusterConnectivity:
    """Pin-level view of a cluster's nets, shared by signature computation
    and problem derivation so both always agree."""

    internal: dict[int, tuple[int, ...]]
    external_groups: tuple[tuple[int, ...], ...]
    exiting_outputs: tuple[int, ...]


class ClusterState:
    """An in-progress cluster: molecule placements and pin bindings."""

    def __init__(self, arch: ArchitectureModel, netlist: Netlist) -> None:
        self.arch = arch
        self.netlist = netlist
        self.placements: dict[int, tuple[tuple[int, int], ...]] = {}
        self.insertion_order: list[int] = []
        self.atom_location: dict[int, int] = {}
        self.location_atom: dict[int, int] = {}
        self.pin_net: dict[int, int] = {}
        self.net_counts: dict[int, int] = {}
        self._version = 0
        self._conn_cache: tuple[int, ClusterConnectivity] | None = None

    def is_empty(self) -> bool:
        return not self.insertion_order

    def occupied_location_ids(self):
        return self.location_atom.keys()

    def molecule_ids(self):
        return self.placements.keys()

    def output_pin_of(self, atom_id: int) -> int:
        return self.arch.locations[self.atom_location[atom_id]].output_pins[0]

    def _find_location(self, kind: str, taken: set[int]) -> Location | None:
        for loc in self.arch.locations:
            if loc.id in self.location_atom or loc.id in taken:
                continue
            if not kind_fits_location(kind, loc.kind):
                continue
            if loc.exclusivity_group is not None:
                if not exclusivity_ok(self, loc):
                    continue
                if any(
                    self.arch.locations[t].exclusivity_group == loc.exclusivity_group
                    for t in taken
                ):
                    continue
            return loc
        return None

    def place_molecule(self, mol: Molecule) -> list[LcnKey] | None:
        """First-fit the molecule's atoms onto free locations.

        Returns one LCN key per atom (in placement order), or None when
        some atom has no compatible free location; the cluster is left
        unchanged on failure.
        """
        chosen: list[tuple[int, Location]] = []
        taken: set[int] = set()
        for atom_id, kind in mol.atoms:
            loc = self._find_location(kind, taken)
            if loc is None:
                return None
            chosen.append((atom_id, loc))
            taken.add(loc.id)

        keys = []
        for atom_id, loc in chosen:
            keys.append(self._bind_atom(atom_id, loc))
        self.placements[mol.id] = tuple((a, l.id) for a, l in chosen)
        self.insertion_order.append(mol.id)
        self._version += 1
        return keys

    def _bind_atom(self, atom_id: int, loc: Location) -> LcnKey:
        atom = self.netlist.atoms[atom_id]
        nets = self.netlist.nets
        self.atom_location[atom_id] = loc.id
        self.location_atom[loc.id] = atom_id

        internal_inputs = []
        for k, net_id in enumerate(atom.input_nets):
            if net_id is None:
                continue
            pin = loc.input_pins[k]
            self.pin_net[pin] = net_id
            self.net_counts[net_id] = self.net_counts.get(net_id, 0) + 1
            driver = nets[net_id].driver
            if driver is not None and driver[0] in self.atom_location:
                internal_inputs.append((self.output_pin_of(driver[0]), pin))

        internal_outputs = []
        if atom.output_net is not None:
            out_pin = loc.output_pins[0]
            self.pin_net[out_pin] = atom.output_net
            self.net_counts[atom.output_net] = self.net_counts.get(atom.output_net, 0) + 1
            for sink_atom, sink_idx in nets[atom.output_net].sinks:
                if sink_atom != atom_id and sink_atom in self.atom_location:
                    sink_loc = self.arch.locations[self.atom_location[sink_atom]]
                    internal_outputs.append((out_pin, sink_loc.input_pins[sink_idx]))

        return LcnKey(loc.id, tuple(internal_inputs), tuple(internal_outputs))

    def remove_last_molecule(self) -> int:
        """Undo the most recent placement; returns its atom count."""
        mol_id = self.insertion_order.pop()
        entries = self.placements.pop(mol_id)
        for atom_id, loc_id in entries:
            atom = self.netlist.atoms[atom_id]
            loc = self.arch.locations[loc_id]
            del self.atom_location[atom_id]
            del self.location_atom[loc_id]
            for k, net_id in enumerate(atom.input_nets):
                if net_id is None:
                    continue
                del self.pin_net[loc.input_pins[k]]
                self._drop_net(net_id)
            if atom.output_net is not None:
                del self.pin_net[loc.output_pins[0]]
                self._drop_net(atom.output_net)
        self._version += 1
        return len(entries)

    def _drop_net(self, net_id: int) -> None:
        left = self.net_counts[net_id] - 1
        if left:
            self.net_counts[net_id] = left
        else:
            del self.net_counts[net_id]

    def connectivity(self) -> ClusterConnectivity:
        if self._conn_cache is not None and self._conn_cache[0] == self._version:
            return self._conn_cache[1]
        nets = self.netlist.nets
        internal: dict[int, tuple[int, ...]] = {}
        exiting: list[int] = []
        groups_by_net: dict[int, list[int]] = {}
        for atom_id in sorted(self.atom_location):
            atom = self.netlist.atoms[atom_id]
            loc = self.arch.locations[self.atom_location[atom_id]]
            for k, net_id in enumerate(atom.input_nets):
                if net_id is None:
                    continue
                driver = nets[net_id].driver
                if driver is None or driver[0] not in self.atom_location:
                    groups_by_net.setdefault(net_id, []).append(loc.input_pins[k])
            if atom.output_net is None:
                continue
            net = nets[atom.output_net]
            out_pin = loc.output_pins[0]
            bound_sinks = []
            leaves = net.drives_primary_output
            for sink_atom, sink_idx in net.sinks:
                if sink_atom in self.atom_location:
                    sink_loc = self.arch.locations[self.atom_location[sink_atom]]
                    bound_sinks.append(sink_loc.input_pins[sink_idx])
                else:
                    leaves = True
            if bound_sinks:
                internal[out_pin] = tuple(sorted(bound_sinks))
            if leaves:
                exiting.append(out_pin)
        conn = ClusterConnectivity(
            internal=internal,
            external_groups=tuple(sorted(tuple(sorted(g)) for g in groups_by_net.values())),
            exiting_outputs=tuple(sorted(exiting)),
        )
        self._conn_cache = (self._version, conn)
        return conn


@dataclass(frozen=True)
class PackOptions:
    memoize: bool = True
    shadow: bool = False
    count_only: bool = False
    max_router_iterations: int = DEFAULT_MAX_ITERATIONS
    rng_seed: int = 0

    @property
    def pst_enabled(self) -> bool:
        return self.memoize or self.count_only

    @property
    def answers_enabled(self) -> bool:
        return self.memoize and not self.count_only


@dataclass
class PackingStats:
    router_calls: int = 0
    router_calls_skipped: int = 0
    router_iterations_total: int = 0
    speculative_successes: int = 0
    speculative_failures: int = 0
    detailed_clusters: int = 0
    detailed_route_failures: int = 0
    detailed_rejections: int = 0
    shadow_checks: int = 0
    shadow_mismatches: int = 0
    max_router_calls_per_cluster: int = 0
    cluster_router_calls: list[int] = field(default_factory=list)
    wall_time_packing: float = 0.0
    pst_time: float = 0.0
    router_time_total: float = 0.0
    router_time_failed_detailed: float = 0.0
    pst: PstStats | None = None

    def to_dict(self) -> dict[str, Any]:
        histogram: dict[str, int] = {}
        for c in self.cluster_router_calls:
            histogram[str(c)] = histogram.get(str(c), 0) + 1
        out: dict[str, Any] = {
            "router_calls": self.router_calls,
            "router_calls_skipped": self.router_calls_skipped,
            "router_iterations_total": self.router_iterations_total,
            "speculative_successes": self.speculative_successes,
            "speculative_failures": self.speculative_failures,
            "detailed_clusters": self.detailed_clusters,
            "detailed_route_failures": self.detailed_route_failures,
            "detailed_rejections": self.detailed_rejections,
            "shadow_checks": self.shadow_checks,
            "shadow_mismatches": self.shadow_mismatches,
            "max_router_calls_per_cluster": self.max_router_calls_per_cluster,
            "router_calls_histogram": dict(sorted(histogram.items(), key=lambda kv: int(kv[0]))),
            "pst": None
            if self.pst is None
            else {
                "lcn_count": self.pst.lcn_count,
                "ecn_count": self.pst.ecn_count,
                "legal_ecn_count": self.pst.legal_ecn_count,
                "total_hits": self.pst.total_hits,
                "finalized_signatures": self.pst.finalized_signatures,
                "repeated_finalized": self.pst.repeated_finalized,
            },
            "timings": {
                "wall_time_packing": self.wall_time_packing,
                "pst_time": self.pst_time,
                "router_time_total": self.router_time_total,
                "router_time_failed_detailed": self.router_time_failed_detailed,
            },
        }
        return out


@dataclass
class Packing:
    clusters: list[ClusterState]
    molecules: list[Molecule]
    atom_to_cluster: dict[int, int]
    stats: PackingStats


class _PackContext:
    def __init__(
        self,
        netlist: Netlist,
        arch: ArchitectureModel,
        molecules: list[Molecule],
        options: PackOptions,
    ) -> None:
        self.netlist = netlist
        self.arch = arch
        self.molecules = molecules
        self.options = options
        self.stats = PackingStats()
        self.tree: PackingSignatureTree | None = (
            PackingSignatureTree() if options.pst_enabled else None
        )
        self.cursor: SignatureCursor | None = self.tree.cursor() if self.tree else None
        self.unpacked: set[int] = {m.id for m in molecules}
        self.in_detailed = False
        self.cluster_router_calls = 0
        self.molecule_nets: list[frozenset[int]] = [
            frozenset().union(*(netlist.atom_nets[a] for a in m.atom_ids)) for m in molecules
        ]
        self.net_molecules: dict[int, list[int]] = {}
        for m in molecules:
            for net_id in sorted(self.molecule_nets[m.id]):
                self.net_molecules.setdefault(net_id, []).append(m.id)

    def advance(self, keys: list[LcnKey]) -> None:
        if self.cursor is None:
            return
        t0 = time.perf_counter()
        for key in keys:
            self.cursor.advance(key)
        self.stats.pst_time += time.perf_counter() - t0

    def retreat(self, steps: int) -> None:
        if self.cursor is None:
            return
        t0 = time.perf_counter()
        self.cursor.retreat(steps)
        self.stats.pst_time += time.perf_counter() - t0


def select_seed(unpacked: set[int], molecules: list[Molecule], netlist: Netlist) -> Molecule:
    """The unpacked molecule with the most used pins; ties go to the lowest id."""
    best_id = -1
    best_pins = -1
    for mid in sorted(unpacked):
        pins = 0
        for atom_id, _ in molecules[mid].atoms:
            atom = netlist.atoms[atom_id]
            pins += sum(1 for n in atom.input_nets if n is not None)
            pins += 1 if atom.output_net is not None else 0
        if pins > best_pins:
            best_id, best_pins = mid, pins
    return molecules[best_id]


def gain(cluster: ClusterState, candidate: Molecule, molecule_nets: frozenset[int]) -> int:
    """Number of nets shared between the candidate and the cluster."""
    return sum(1 for net_id in molecule_nets if net_id in cluster.net_counts)


def _routed_verdict(cluster: ClusterState, ctx: _PackContext) -> bool:
    stats = ctx.stats
    t0 = time.perf_counter()
    try:
        problem = derive_problem(cluster)
    except ResourceOverflowError:
        stats.router_calls += 1
        ctx.cluster_router_calls += 1
        elapsed = time.perf_counter() - t0
        stats.router_time_total += elapsed
        if ctx.in_detailed:
            stats.detailed_route_failures += 1
            stats.router_time_failed_detailed += elapsed
        return False
    result = route(problem, ctx.options.max_router_iterations)
    elapsed = time.perf_counter() - t0
    stats.router_calls += 1
    ctx.cluster_router_calls += 1
    stats.router_iterations_total += result.iterations_used
    stats.router_time_total += elapsed
    if ctx.in_detailed and not result.legal:
        stats.detailed_route_failures += 1
        stats.router_time_failed_detailed += elapsed
    return result.legal


def _shadow_verdict(cluster: ClusterState, ctx: _PackContext) -> bool:
    try:
        problem = derive_problem(cluster)
    except ResourceOverflowError:
        return False
    return route(problem, ctx.options.max_router_iterations).legal


def check_legality(cluster: ClusterState, ctx: _PackContext) -> bool:
    """Answer one legality check, through the PST when enabled."""
    if ctx.cursor is None:
        return _routed_verdict(cluster, ctx)
    ext = compute_external(cluster)
    t0 = time.perf_counter()
    memo = ctx.cursor.lookup(ext)
    ctx.stats.pst_time += time.perf_counter() - t0
    if memo is not None:
        if ctx.options.answers_enabled:
            if ctx.options.shadow:
                ctx.stats.shadow_checks += 1
                if _shadow_verdict(cluster, ctx) != memo:
                    ctx.stats.shadow_mismatches += 1
            ctx.stats.router_calls_skipped += 1
            if ctx.in_detailed and not memo:
                pass  # memoized rejection: no router time spent, nothing to bill
            return memo
        return _routed_verdict(cluster, ctx)
    verdict = _routed_verdict(cluster, ctx)
    t0 = time.perf_counter()
    ctx.cursor.record(ext, verdict)
    ctx.stats.pst_time += time.perf_counter() - t0
    return verdict


def _place_best_candidate(
    cluster: ClusterState, ctx: _PackContext, rejected: set[int]
) -> tuple[Molecule, list[LcnKey]] | None:
    """Place the highest-gain placeable candidate; None when nothing fits."""
    pool: set[int] = set()
    for net_id in cluster.net_counts:
        for mid in ctx.net_molecules.get(net_id, ()):
            if mid in ctx.unpacked and mid not in cluster.placements and mid not in rejected:
                pool.add(mid)
    scored = []
    for mid in sorted(pool):
        g = gain(cluster, ctx.molecules[mid], ctx.molecule_nets[mid])
        if g > 0:
            scored.append((-g, mid))
    scored.sort()
    for _, mid in scored:
        keys = cluster.place_molecule(ctx.molecules[mid])
        if keys is not None:
            return ctx.molecules[mid], keys
    return None


def speculative_pack(seed: Molecule, ctx: _PackContext) -> ClusterState | None:
    """Build a full candidate cluster around the seed and route it once."""
    cluster = ClusterState(ctx.arch, ctx.netlist)
    if ctx.cursor is not None:
        ctx.cursor.reset()
    keys = cluster.place_molecule(seed)
    if keys is None:
        raise UnpackableMoleculeError(
            f"molecule {seed.id} (atoms {seed.atom_ids}) has no feasible placement on {ctx.arch.name!r}"
        )
    ctx.advance(keys)
    while True:
        placed = _place_best_candidate(cluster, ctx, rejected=set())
        if placed is None:
            break
        ctx.advance(placed[1])
    ctx.in_detailed = False
    if check_legality(cluster, ctx):
        return cluster
    return None


def detailed_pack(seed: Molecule, ctx: _PackContext) -> ClusterState:
    """Rebuild from the seed with a legality check after every addition."""
    cluster = ClusterState(ctx.arch, ctx.netlist)
    if ctx.cursor is not None:
        ctx.cursor.reset()
    keys = cluster.place_molecule(seed)
    if keys is None:
        raise UnpackableMoleculeError(
            f"molecule {seed.id} (atoms {seed.atom_ids}) has no feasible placement on {ctx.arch.name!r}"
        )
    ctx.advance(keys)
    ctx.in_detailed = True
    if not check_legality(cluster, ctx):
        raise UnpackableMoleculeError(
            f"molecule {seed.id} (atoms {seed.atom_ids}) is unroutable even alone on {ctx.arch.name!r}"
        )
    rejected: set[int] = set()
    while True:
        placed = _place_best_candidate(cluster, ctx, rejected)
        if placed is None:
            break
        mol, keys = placed
        ctx.advance(keys)
        if check_legality(cluster, ctx):
            rejected.clear()
        else:
            ctx.stats.detailed_rejections += 1
            steps = cluster.remove_last_molecule()
            ctx.retreat(steps)
            rejected.add(mol.id)
    ctx.in_detailed = False
    return cluster


def pack_netlist(
    netlist: Netlist,
    arch: ArchitectureModel,
    options: PackOptions = PackOptions(),
) -> Packing:
    """Pack every molecule of the netlist into legal clusters."""
    t_start = time.perf_counter()
    molecules = form_molecules(netlist, arch)
    ctx = _PackContext(netlist, arch, molecules, options)
    clusters: list[ClusterState] = []
    atom_to_cluster: dict[int, int] = {}

    while ctx.unpacked:
        seed = select_seed(ctx.unpacked, molecules, netlist)
        ctx.cluster_router_calls = 0
        cluster = speculative_pack(seed, ctx)
        if cluster is not None:
            ctx.stats.speculative_successes += 1
        else:
            ctx.stats.speculative_failures += 1
            ctx.stats.detailed_clusters += 1
            cluster = detailed_pack(seed, ctx)
        if ctx.cursor is not None:
            ext = compute_external(cluster)
            t0 = time.perf_counter()
            ctx.cursor.finalize(ext)
            ctx.stats.pst_time += time.perf_counter() - t0
        cluster_id = len(clusters)
        clusters.append(cluster)
        ctx.stats.cluster_router_calls.append(ctx.cluster_router_calls)
        for mid in cluster.insertion_order:
            ctx.unpacked.discard(mid)
            for atom_id, _ in cluster.placements[mid]:
                atom_to_cluster[atom_id] = cluster_id

    ctx.stats.max_router_calls_per_cluster = max(ctx.stats.cluster_router_calls, default=0)
    if ctx.tree is not None:
        ctx.stats.pst = ctx.tree.stats()
    ctx.stats.wall_time_packing = time.perf_counter() - t_start
    return Packing(clusters, molecules, atom_to_cluster, ctx.stats)


def packing_to_dict(packing: Packing) -> dict[str, Any]:
    """Stable JSON form of a packing; byte-diffed by the compare harness."""
    clusters = []
    for cid, cluster in enumerate(packing.clusters):
        mols = [
            {
                "molecule_id": mid,
                "placements": [[a, l] for a, l in cluster.placements[mid]],
            }
            for mid in cluster.insertion_order
        ]
        clusters.append({"id": cid, "molecules": mols})
    return {"clusters": clusters}


def audit_packing(packing: Packing, arch: ArchitectureModel, netlist: Netlist,
                  max_iterations: int = DEFAULT_MAX_ITERATIONS) -> None:
    """Re-check every structural invariant of a finished packing.

    Raises AssertionError on: incomplete atom coverage, double-booked
    locations, exclusivity violations, or a finalized cluster that fails a
    fresh routing check.
    """
    seen_atoms: set[int] = set()
    for cluster in packing.clusters:
        groups: dict[int, int] = {}
        for mid, entries in cluster.placements.items():
            for atom_id, loc_id in entries:
                assert atom_id not in seen_atoms, f"atom {atom_id} packed twice"
                seen_atoms.add(atom_id)
                loc = arch.locations[loc_id]
                assert kind_fits_location(netlist.atoms[atom_id].kind, loc.kind)
                if loc.exclusivity_group is not None:
                    groups[loc.exclusivity_group] = groups.get(loc.exclusivity_group, 0) + 1
        for grp, count in groups.items():
            assert count <= 1, f"exclusivity group {grp} occupied {count} times"
        locs = [l for entries in cluster.placements.values() for _, l in entries]
        assert len(locs) == len(set(locs)), "location double-booked"
        result = route(derive_problem(cluster), max_iterations)
        assert result.legal, "finalized cluster fails post-hoc rerouting"
    all_atoms = {a.id for a in netlist.atoms}
    assert seen_atoms == all_atoms, "atom coverage is not total"
