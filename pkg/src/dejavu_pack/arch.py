"""Logic-block architecture model.

An architecture is a set of primitive locations (each with named input and
output pins), cluster-boundary pin lists, and a directed intracluster
routing graph over pins and internal wire nodes.  Everything is loaded from
a JSON file; see ``parse_architecture`` for the schema.  Models are
immutable after load and safe to share across threads.
"""

from __future__ import annotations

import json
import re
from collections import deque
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Any

from .errors import ArchValidationError, ParseError

if TYPE_CHECKING:
    from .packer import ClusterState

_LUT_KIND = re.compile(r"^lut(\d+)")


def lut_width(kind: str) -> int | None:
    """Input width of a LUT kind tag (``lut4`` -> 4), or None for non-LUT kinds."""
    m = _LUT_KIND.match(kind)
    return int(m.group(1)) if m else None


def kind_input_count(kind: str) -> int:
    """Number of input pins implied by a primitive kind tag."""
    w = lut_width(kind)
    if w is not None:
        return w
    if kind == "ff":
        return 1
    raise ArchValidationError(f"unknown primitive kind {kind!r}")


def kind_fits_location(atom_kind: str, loc_kind: str) -> bool:
    """True if an atom of ``atom_kind`` can occupy a location of ``loc_kind``.

    A narrower LUT fits a wider LUT location (unused location inputs stay
    unbound); every other kind requires an exact tag match.
    """
    aw, lw = lut_width(atom_kind), lut_width(loc_kind)
    if aw is not None and lw is not None:
        return aw <= lw
    return atom_kind == loc_kind


@dataclass(frozen=True)
class Location:
    """One primitive site inside the logic block."""

    id: int
    kind: str
    input_pins: tuple[int, ...]
    output_pins: tuple[int, ...]
    exclusivity_group: int | None = None


@dataclass(frozen=True)
class RoutingGraph:
    """Directed routing-resource graph over pin and wire nodes.

    Node ids are dense; every node has unit signal capacity.  ``edges``
    keeps file order so serialization round-trips exactly.
    """

    num_nodes: int
    edges: tuple[tuple[int, int], ...]
    capacity: tuple[int, ...]
    out_edges: tuple[tuple[int, ...], ...] = field(compare=False, repr=False, default=())
    in_counts: tuple[int, ...] = field(compare=False, repr=False, default=())

    def __post_init__(self) -> None:
        outs: list[list[int]] = [[] for _ in range(self.num_nodes)]
        ins = [0] * self.num_nodes
        for a, b in self.edges:
            outs[a].append(b)
            ins[b] += 1
        object.__setattr__(self, "out_edges", tuple(tuple(o) for o in outs))
        object.__setattr__(self, "in_counts", tuple(ins))

    def reachable_from(self, starts: list[int]) -> set[int]:
        seen = set(starts)
        work = deque(starts)
        while work:
            n = work.popleft()
            for m in self.out_edges[n]:
                if m not in seen:
                    seen.add(m)
                    work.append(m)
        return seen


@dataclass(frozen=True)
class ArchitectureModel:
    name: str
    locations: tuple[Location, ...]
    external_input_pins: tuple[int, ...]
    external_output_pins: tuple[int, ...]
    graph: RoutingGraph
    equivalence_groups: tuple[tuple[int, ...], ...]
    node_names: tuple[str, ...]
    wire_nodes: tuple[int, ...]
    # Derived lookup tables; excluded from equality.
    pin_location: dict[int, int] = field(compare=False, repr=False, default_factory=dict)
    exit_options: dict[int, tuple[int, ...]] = field(compare=False, repr=False, default_factory=dict)

    def __post_init__(self) -> None:
        pin_loc: dict[int, int] = {}
        for loc in self.locations:
            for p in loc.input_pins + loc.output_pins:
                pin_loc[p] = loc.id
        exits: dict[int, tuple[int, ...]] = {}
        ext_out = set(self.external_output_pins)
        for loc in self.locations:
            for p in loc.output_pins:
                reach = self.graph.reachable_from([p])
                exits[p] = tuple(sorted(reach & ext_out))
        object.__setattr__(self, "pin_location", pin_loc)
        object.__setattr__(self, "exit_options", exits)

    def location(self, loc_id: int) -> Location:
        return self.locations[loc_id]


def _assign_node(names: dict[str, int], name: str, where: str) -> int:
    if not isinstance(name, str) or not name:
        raise ArchValidationError(f"{where}: node names must be non-empty strings, got {name!r}")
    if name in names:
        raise ArchValidationError(f"duplicate node name {name!r} (second occurrence in {where})")
    names[name] = len(names)
    return names[name]


def parse_architecture(data: dict[str, Any], source: str = "<memory>") -> ArchitectureModel:
    """Build and validate a model from decoded JSON.

    Schema: ``name``, ``locations`` (array of ``{id, kind, inputs, outputs,
    exclusivity_group?}`` with pin-name lists), ``external_inputs``,
    ``external_outputs``, ``wires`` (internal node names), ``edges``
    (``[from, to]`` name pairs), ``equivalence_groups`` (pin-name lists,
    documentation only).  Dense node ids are assigned in order of first
    appearance: location pins, then boundary pins, then wires.
    """
    try:
        name = data["name"]
        raw_locs = data["locations"]
        raw_ext_in = data["external_inputs"]
        raw_ext_out = data["external_outputs"]
        raw_wires = data.get("wires", [])
        raw_edges = data["edges"]
        raw_equiv = data.get("equivalence_groups", [])
    except (KeyError, TypeError) as exc:
        raise ParseError(f"{source}: missing or malformed top-level field: {exc}") from exc

    names: dict[str, int] = {}
    locations = []
    for idx, rl in enumerate(raw_locs):
        if rl.get("id") != idx:
            raise ArchValidationError(
                f"{source}: location ids must be dense and in order (expected {idx}, got {rl.get('id')!r})"
            )
        kind = rl["kind"]
        ins = tuple(_assign_node(names, p, f"location {idx} inputs") for p in rl["inputs"])
        outs = tuple(_assign_node(names, p, f"location {idx} outputs") for p in rl["outputs"])
        want = kind_input_count(kind)
        if len(ins) != want:
            raise ArchValidationError(
                f"{source}: location {idx} kind {kind!r} implies {want} inputs, file lists {len(ins)}"
            )
        if not outs:
            raise ArchValidationError(f"{source}: location {idx} has no output pins")
        locations.append(
            Location(idx, kind, ins, outs, rl.get("exclusivity_group"))
        )

    ext_in = tuple(_assign_node(names, p, "external_inputs") for p in raw_ext_in)
    ext_out = tuple(_assign_node(names, p, "external_outputs") for p in raw_ext_out)
    wires = tuple(_assign_node(names, p, "wires") for p in raw_wires)

    edges = []
    for e in raw_edges:
        a, b = e
        if a not in names:
            raise ArchValidationError(f"{source}: edge [{a!r}, {b!r}] references undeclared node {a!r}")
        if b not in names:
            raise ArchValidationError(f"{source}: edge [{a!r}, {b!r}] references undeclared node {b!r}")
        edges.append((names[a], names[b]))

    equiv = []
    for grp in raw_equiv:
        ids = []
        for p in grp:
            if p not in names:
                raise ArchValidationError(f"{source}: equivalence group references undeclared pin {p!r}")
            ids.append(names[p])
        equiv.append(tuple(sorted(ids)))

    node_names = tuple(names)  # insertion order == id order
    graph = RoutingGraph(len(names), tuple(edges), (1,) * len(names))

    model = ArchitectureModel(
        name=name,
        locations=tuple(locations),
        external_input_pins=ext_in,
        external_output_pins=ext_out,
        graph=graph,
        equivalence_groups=tuple(equiv),
        node_names=node_names,
        wire_nodes=wires,
    )
    _validate(model, source)
    return model


def _validate(model: ArchitectureModel, source: str) -> None:
    g = model.graph
    nm = model.node_names
    for p in model.external_input_pins:
        if g.in_counts[p]:
            raise ArchValidationError(f"{source}: external input pin {nm[p]!r} has incoming edges")
    for p in model.external_output_pins:
        if g.out_edges[p]:
            raise ArchValidationError(f"{source}: external output pin {nm[p]!r} has outgoing edges")
    from_inputs = g.reachable_from(list(model.external_input_pins))
    for loc in model.locations:
        for p in loc.input_pins:
            if p not in from_inputs:
                raise ArchValidationError(
                    f"{source}: location input pin {nm[p]!r} is unreachable from every external input"
                )
        for p in loc.output_pins:
            if not model.exit_options[p]:
                raise ArchValidationError(
                    f"{source}: location output pin {nm[p]!r} cannot reach any external output"
                )


def load_architecture(path: str) -> ArchitectureModel:
    """Load and validate an architecture JSON file."""
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except OSError as exc:
        raise ParseError(f"cannot read architecture file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ParseError(f"architecture file {path} is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ParseError(f"architecture file {path}: top level must be an object")
    return parse_architecture(data, source=path)


def serialize_architecture(model: ArchitectureModel) -> dict[str, Any]:
    """Inverse of ``parse_architecture``: a dict that reloads to an equal model."""
    nm = model.node_names
    locs = []
    for loc in model.locations:
        entry: dict[str, Any] = {
            "id": loc.id,
            "kind": loc.kind,
            "inputs": [nm[p] for p in loc.input_pins],
            "outputs": [nm[p] for p in loc.output_pins],
        }
        if loc.exclusivity_group is not None:
            entry["exclusivity_group"] = loc.exclusivity_group
        locs.append(entry)
    return {
        "name": model.name,
        "locations": locs,
        "external_inputs": [nm[p] for p in model.external_input_pins],
        "external_outputs": [nm[p] for p in model.external_output_pins],
        "wires": [nm[p] for p in model.wire_nodes],
        "edges": [[nm[a], nm[b]] for a, b in model.graph.edges],
        "equivalence_groups": [[nm[p] for p in grp] for grp in model.equivalence_groups],
    }


def save_architecture(model: ArchitectureModel, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(serialize_architecture(model), fh, indent=2, sort_keys=False)
        fh.write("\n")


def toy_lb() -> ArchitectureModel:
    """Golden four-location fixture: two 2-LUTs and two bypassable FFs.

    Location pins carry the letters A..J: loc0 is a 2-LUT (A, B -> F),
    loc1 a 2-LUT (C, D -> E), loc2 an FF (G -> H), loc3 an FF (I -> J).
    The local interconnect is a full crossbar: every external input and
    every primitive output drives every primitive input directly, and all
    outputs can leave through any boundary output pin, so LUT outputs can
    bypass the FFs entirely.
    """
    ext_in = [f"in{i}" for i in range(6)]
    ext_out = [f"out{i}" for i in range(4)]
    atom_inputs = ["A", "B", "C", "D", "G", "I"]
    internal_outputs = ["F", "E", "H", "J"]
    edges = [[s, d] for s in ext_in + internal_outputs for d in atom_inputs]
    edges += [[s, d] for s in internal_outputs for d in ext_out]
    return parse_architecture(
        {
            "name": "toy_lb",
            "locations": [
                {"id": 0, "kind": "lut2", "inputs": ["A", "B"], "outputs": ["F"]},
                {"id": 1, "kind": "lut2", "inputs": ["C", "D"], "outputs": ["E"]},
                {"id": 2, "kind": "ff", "inputs": ["G"], "outputs": ["H"]},
                {"id": 3, "kind": "ff", "inputs": ["I"], "outputs": ["J"]},
            ],
            "external_inputs": ext_in,
            "external_outputs": ext_out,
            "wires": [],
            "edges": edges,
            "equivalence_groups": [["A", "B"], ["C", "D"], list(ext_in)],
        },
        source="toy_lb()",
    )


def exclusivity_ok(cluster: "ClusterState", loc: Location) -> bool:
    """True iff occupying ``loc`` would not violate a mode-exclusivity group."""
    if loc.exclusivity_group is None:
        return True
    for occupied in cluster.occupied_location_ids():
        if cluster.arch.locations[occupied].exclusivity_group == loc.exclusivity_group:
            return False
    return True
