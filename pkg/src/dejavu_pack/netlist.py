"""Primitive netlists, molecule formation, and synthetic netlist generation.

A netlist is a flat list of primitive atoms (LUTs, FFs) connected by
single-driver nets.  Molecules are the packer's atomic units: either a
single atom or a LUT feeding exactly one FF.  The generator produces
either tiled arrays with controllable substructure repetition or random
wiring, always deterministically for a fixed (spec, seed).
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from typing import Any

from .arch import ArchitectureModel, kind_fits_location, kind_input_count, lut_width
from .errors import (
    ArchValidationError,
    GenerationError,
    NetlistValidationError,
    ParseError,
    UnpackableMoleculeError,
)


@dataclass(frozen=True)
class Atom:
    id: int
    kind: str
    input_nets: tuple[int | None, ...]
    output_net: int | None


@dataclass(frozen=True)
class Net:
    """A single-driver net.  ``driver`` is None for primary inputs."""

    id: int
    driver: tuple[int, int] | None
    sinks: tuple[tuple[int, int], ...]
    drives_primary_output: bool


@dataclass(frozen=True)
class Molecule:
    """An atomically-packed atom group; placement order follows ``atoms``."""

    id: int
    atoms: tuple[tuple[int, str], ...]
    internal_links: tuple[tuple[tuple[int, int], tuple[int, int]], ...] = ()

    @property
    def atom_ids(self) -> tuple[int, ...]:
        return tuple(a for a, _ in self.atoms)


@dataclass(frozen=True)
class Netlist:
    atoms: tuple[Atom, ...]
    nets: tuple[Net, ...]
    net_names: tuple[str, ...]
    primary_inputs: tuple[int, ...]
    primary_outputs: tuple[int, ...]
    # atom id -> net ids it touches; derived, excluded from equality
    atom_nets: tuple[frozenset[int], ...] = field(compare=False, repr=False, default=())

    def __post_init__(self) -> None:
        touched = []
        for a in self.atoms:
            ids = {n for n in a.input_nets if n is not None}
            if a.output_net is not None:
                ids.add(a.output_net)
            touched.append(frozenset(ids))
        object.__setattr__(self, "atom_nets", tuple(touched))


def netlist_from_dict(data: dict[str, Any], source: str = "<memory>") -> Netlist:
    """Decode and validate the netlist schema.

    Schema: ``atoms`` (array of ``{id, kind, inputs: [net|null], output:
    net|null}``), ``primary_inputs``, ``primary_outputs``.  Net names map
    to dense ids in order of first appearance.
    """
    try:
        raw_atoms = data["atoms"]
        raw_pi = data.get("primary_inputs", [])
        raw_po = data.get("primary_outputs", [])
    except TypeError as exc:
        raise ParseError(f"{source}: malformed netlist object: {exc}") from exc

    net_ids: dict[str, int] = {}

    def net_id(name: str) -> int:
        if name not in net_ids:
            net_ids[name] = len(net_ids)
        return net_ids[name]

    atoms = []
    for idx, ra in enumerate(raw_atoms):
        if ra.get("id") != idx:
            raise NetlistValidationError(
                f"{source}: atom ids must be dense and in order (expected {idx}, got {ra.get('id')!r})"
            )
        kind = ra["kind"]
        try:
            want = kind_input_count(kind)
        except ArchValidationError as exc:
            raise NetlistValidationError(f"{source}: atom {idx}: {exc}") from exc
        inputs = tuple(net_id(n) if n is not None else None for n in ra["inputs"])
        if len(inputs) != want:
            raise NetlistValidationError(
                f"{source}: atom {idx} kind {kind!r} implies {want} inputs, file lists {len(inputs)}"
            )
        out = ra.get("output")
        atoms.append(Atom(idx, kind, inputs, net_id(out) if out is not None else None))

    for seq, label in ((raw_pi, "primary_inputs"), (raw_po, "primary_outputs")):
        seen: set[str] = set()
        for n in seq:
            if n in seen:
                raise NetlistValidationError(f"{source}: duplicate net {n!r} in {label}")
            seen.add(n)
    pi_ids = tuple(net_id(n) for n in raw_pi)
    po_ids = tuple(net_id(n) for n in raw_po)

    names = tuple(net_ids)
    drivers: dict[int, tuple[int, int] | None] = {}
    for n in pi_ids:
        drivers[n] = None
    for a in atoms:
        if a.output_net is not None:
            if a.output_net in drivers:
                raise NetlistValidationError(
                    f"{source}: net {names[a.output_net]!r} is multiply driven"
                )
            drivers[a.output_net] = (a.id, 0)

    sinks: dict[int, list[tuple[int, int]]] = {n: [] for n in range(len(names))}
    for a in atoms:
        for k, n in enumerate(a.input_nets):
            if n is not None:
                sinks[n].append((a.id, k))

    po_set = set(po_ids)
    nets = []
    for n, name in enumerate(names):
        if n not in drivers:
            raise NetlistValidationError(f"{source}: net {name!r} has no driver")
        if not sinks[n] and n not in po_set:
            raise NetlistValidationError(f"{source}: net {name!r} has no sinks")
        nets.append(Net(n, drivers[n], tuple(sinks[n]), n in po_set))

    return Netlist(tuple(atoms), tuple(nets), names, pi_ids, po_ids)


def netlist_to_dict(netlist: Netlist) -> dict[str, Any]:
    nm = netlist.net_names
    return {
        "atoms": [
            {
                "id": a.id,
                "kind": a.kind,
                "inputs": [nm[n] if n is not None else None for n in a.input_nets],
                "output": nm[a.output_net] if a.output_net is not None else None,
            }
            for a in netlist.atoms
        ],
        "primary_inputs": [nm[n] for n in netlist.primary_inputs],
        "primary_outputs": [nm[n] for n in netlist.primary_outputs],
    }


def load_netlist(path: str) -> Netlist:
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except OSError as exc:
        raise ParseError(f"cannot read netlist file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ParseError(f"netlist file {path} is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ParseError(f"netlist file {path}: top level must be an object")
    return netlist_from_dict(data, source=path)


def save_netlist(netlist: Netlist, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(netlist_to_dict(netlist), fh, indent=2)
        fh.write("\n")


def form_molecules(netlist: Netlist, arch: ArchitectureModel) -> list[Molecule]:
    """Group atoms into molecules.

    Policy: a LUT whose output net has exactly one sink, that sink being an
    FF data input, pairs with that FF; everything else is a singleton.
    Molecules are numbered by minimum atom id, and a pair always places its
    LUT first.
    """
    for atom in netlist.atoms:
        if not any(kind_fits_location(atom.kind, loc.kind) for loc in arch.locations):
            raise UnpackableMoleculeError(
                f"atom {atom.id} kind {atom.kind!r} fits no location of architecture {arch.name!r}"
            )

    partner: dict[int, int] = {}  # lut atom id -> ff atom id
    owned: set[int] = set()
    for atom in netlist.atoms:
        if lut_width(atom.kind) is None or atom.output_net is None:
            continue
        net = netlist.nets[atom.output_net]
        if net.drives_primary_output or len(net.sinks) != 1:
            continue
        ff_id, pin = net.sinks[0]
        ff = netlist.atoms[ff_id]
        if ff.kind == "ff" and pin == 0 and ff_id != atom.id:
            partner[atom.id] = ff_id
            owned.add(ff_id)

    molecules = []
    consumed: set[int] = set()
    for atom in netlist.atoms:
        if atom.id in consumed:
            continue
        if atom.id in partner:
            ff_id = partner[atom.id]
            molecules.append(
                Molecule(
                    len(molecules),
                    ((atom.id, atom.kind), (ff_id, "ff")),
                    internal_links=(((atom.id, 0), (ff_id, 0)),),
                )
            )
            consumed.update((atom.id, ff_id))
        elif atom.id in owned:
            # FF whose driving LUT has a higher id: the pair is ordered by
            # this FF's id, but the LUT is still placed first.
            lut_id = next(l for l, f in partner.items() if f == atom.id)
            molecules.append(
                Molecule(
                    len(molecules),
                    ((lut_id, netlist.atoms[lut_id].kind), (atom.id, "ff")),
                    internal_links=(((lut_id, 0), (atom.id, 0)),),
                )
            )
            consumed.update((atom.id, lut_id))
        else:
            molecules.append(Molecule(len(molecules), ((atom.id, atom.kind),)))
            consumed.add(atom.id)
    return molecules


@dataclass(frozen=True)
class GeneratorSpec:
    """Parameters for ``generate_netlist``.

    ``array`` builds ``tiles`` copies of one fixed template of ``tile_luts``
    LUTs and ``tile_ffs`` FFs; copies are disconnected unless ``chain_nets``
    > 0, in which case that many nets cross each tile boundary.  ``random``
    wires ``tiles * tile_luts`` LUTs and ``tiles * tile_ffs`` FFs with
    uniformly chosen drivers (distinct per atom, never the atom itself).
    """

    pattern: str
    tiles: int = 1
    tile_luts: int = 2
    tile_ffs: int = 1
    lut_size: int = 2
    chain_nets: int = 0
    inputs: int | None = None

    def validate(self) -> None:
        if self.pattern not in ("array", "random"):
            raise GenerationError(f"unknown pattern {self.pattern!r}")
        if self.tiles < 1:
            raise GenerationError("tiles must be >= 1")
        if self.tile_luts < 0 or self.tile_ffs < 0 or self.tile_luts + self.tile_ffs == 0:
            raise GenerationError("a tile needs at least one atom")
        if self.lut_size < 1:
            raise GenerationError("lut_size must be >= 1")
        if self.chain_nets < 0:
            raise GenerationError("chain_nets must be >= 0")


def generate_netlist(spec: GeneratorSpec, rng_seed: int) -> Netlist:
    """Deterministically synthesize a netlist; see ``GeneratorSpec``."""
    spec.validate()
    if spec.pattern == "array":
        data = _generate_array(spec)
    else:
        data = _generate_random(spec, rng_seed)
    return netlist_from_dict(data, source=f"generated:{spec.pattern}:{rng_seed}")


def _generate_array(spec: GeneratorSpec) -> dict[str, Any]:
    t_count, luts, ffs, width = spec.tiles, spec.tile_luts, spec.tile_ffs, spec.lut_size
    if spec.chain_nets and luts == 0:
        raise GenerationError("chain_nets requires tiles with LUTs")
    if spec.chain_nets > luts * (width - 1):
        raise GenerationError(
            f"cannot land {spec.chain_nets} chain nets on {luts} LUTs with {width - 1} free inputs each"
        )

    atoms: list[dict[str, Any]] = []
    primary_inputs: list[str] = []
    sink_counts: dict[str, int] = {}

    def pi(tile: int) -> str:
        name = f"t{tile}_p{len(primary_inputs)}"
        primary_inputs.append(name)
        return name

    def use(name: str) -> str:
        sink_counts[name] = sink_counts.get(name, 0) + 1
        return name

    for t in range(t_count):
        lut_out = [f"t{t}_l{i}" for i in range(luts)]
        ff_out = [f"t{t}_f{j}" for j in range(ffs)]
        chain_src: dict[tuple[int, int], str] = {}
        if t > 0:
            for c in range(spec.chain_nets):
                lut_i, slot = c % luts, width - 1 - c // luts
                prev = t - 1
                src = f"t{prev}_f{c % ffs}" if ffs else f"t{prev}_l{c % luts}"
                chain_src[(lut_i, slot)] = src
        for i in range(luts):
            ins = []
            for slot in range(width):
                if (i, slot) in chain_src:
                    ins.append(use(chain_src[(i, slot)]))
                elif slot == 0 and i > 0 and ffs:
                    ins.append(use(ff_out[(i - 1) % ffs]))
                else:
                    ins.append(use(pi(t)))
            atoms.append({"id": len(atoms), "kind": f"lut{width}", "inputs": ins, "output": lut_out[i]})
            sink_counts.setdefault(lut_out[i], 0)
        for j in range(ffs):
            src = use(lut_out[j]) if j < luts else use(pi(t))
            atoms.append({"id": len(atoms), "kind": "ff", "inputs": [src], "output": ff_out[j]})
            sink_counts.setdefault(ff_out[j], 0)

    primary_outputs = [n for n in sink_counts if sink_counts[n] == 0]
    return {"atoms": atoms, "primary_inputs": primary_inputs, "primary_outputs": primary_outputs}


def _generate_random(spec: GeneratorSpec, rng_seed: int) -> dict[str, Any]:
    rng = random.Random(rng_seed)
    n_luts, n_ffs, width = spec.tiles * spec.tile_luts, spec.tiles * spec.tile_ffs, spec.lut_size
    n_atoms = n_luts + n_ffs
    n_pi = spec.inputs if spec.inputs is not None else max(2, (n_luts * width + n_ffs) // 3)
    if n_pi + n_atoms - 1 < width:
        raise GenerationError(
            f"an atom with {width} inputs needs {width} distinct drivers; only {n_pi + n_atoms - 1} available"
        )

    kinds = [f"lut{width}"] * n_luts + ["ff"] * n_ffs
    out_name = [f"n{a}" for a in range(n_atoms)]
    pi_names = [f"p{k}" for k in range(n_pi)]
    pool = pi_names + out_name

    atoms = []
    used_pi: set[str] = set()
    sink_counts = {n: 0 for n in out_name}
    for a, kind in enumerate(kinds):
        chosen: list[str] = []
        taken = {out_name[a]}
        for _ in range(kind_input_count(kind)):
            pick = rng.choice(pool)
            while pick in taken:
                pick = rng.choice(pool)
            taken.add(pick)
            chosen.append(pick)
            if pick in sink_counts:
                sink_counts[pick] += 1
            else:
                used_pi.add(pick)
        atoms.append({"id": a, "kind": kind, "inputs": chosen, "output": out_name[a]})

    primary_inputs = [p for p in pi_names if p in used_pi]
    primary_outputs = [n for n in out_name if sink_counts[n] == 0]
    return {"atoms": atoms, "primary_inputs": primary_inputs, "primary_outputs": primary_outputs}
