"""Packing signature tree (PST).

Each root-to-leaf path is a packing signature: a sequence of
location-and-connectivity nodes (LCNs), one per placed atom, terminated by
an external-connectivity node (ECN) that captures the cluster boundary and
memoizes the legality verdict.  Nodes are never deleted; children live in
hash maps keyed by canonical encodings so lookup cost is independent of
tree size.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from typing import TYPE_CHECKING

from .errors import DuplicateEcnError

if TYPE_CHECKING:
    from .packer import ClusterState


@dataclass(frozen=True)
class LcnKey:
    """Placement step key: a location plus the connections that are fully
    inside the cluster at the moment the atom is inserted.

    ``internal_inputs`` are (source pin, sink pin) pairs driving the new
    atom from already-placed atoms; ``internal_outputs`` are pairs where
    the new atom drives already-placed atoms.  Both are kept sorted so
    equal keys encode identically.
    """

    location_id: int
    internal_inputs: tuple[tuple[int, int], ...] = ()
    internal_outputs: tuple[tuple[int, int], ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "internal_inputs", tuple(sorted(self.internal_inputs)))
        object.__setattr__(self, "internal_outputs", tuple(sorted(self.internal_outputs)))

    def encode(self) -> bytes:
        parts = [struct.pack("<iII", self.location_id, len(self.internal_inputs), len(self.internal_outputs))]
        for a, b in self.internal_inputs + self.internal_outputs:
            parts.append(struct.pack("<II", a, b))
        return b"".join(parts)


@dataclass(frozen=True)
class ExternalConnectivity:
    """Cluster-boundary summary used as the ECN key.

    ``input_groups`` holds the internally-bound input pins with external
    drivers, one inner tuple per shared driver; ``output_pins`` holds the
    internal output pins whose nets leave the cluster.  Canonical order:
    inner tuples sorted, groups sorted by first (minimum) pin, outputs
    sorted.
    """

    input_groups: tuple[tuple[int, ...], ...] = ()
    output_pins: tuple[int, ...] = ()

    def __post_init__(self) -> None:
        groups = tuple(sorted(tuple(sorted(g)) for g in self.input_groups))
        object.__setattr__(self, "input_groups", groups)
        object.__setattr__(self, "output_pins", tuple(sorted(self.output_pins)))

    def encode(self) -> bytes:
        parts = [struct.pack("<I", len(self.input_groups))]
        for g in self.input_groups:
            parts.append(struct.pack("<I", len(g)))
            parts.extend(struct.pack("<I", p) for p in g)
        parts.append(struct.pack("<I", len(self.output_pins)))
        parts.extend(struct.pack("<I", p) for p in self.output_pins)
        return b"".join(parts)


@dataclass
class Ecn:
    external: ExternalConnectivity
    legal: bool
    hits: int = 0


@dataclass
class Lcn:
    key: LcnKey | None = None  # None only for the root sentinel
    children_lcn: dict[LcnKey, "Lcn"] = field(default_factory=dict)
    children_ecn: dict[ExternalConnectivity, Ecn] = field(default_factory=dict)


@dataclass(frozen=True)
class PstStats:
    lcn_count: int = 0
    ecn_count: int = 0
    legal_ecn_count: int = 0
    total_hits: int = 0
    finalized_signatures: int = 0
    repeated_finalized: int = 0


class PackingSignatureTree:
    """One tree per packing run; single-writer, never shrinks."""

    # Rough per-node heap footprints used for the size estimate reported
    # in run telemetry (object header + key payload + child map slot).
    LCN_FOOTPRINT_BYTES = 176
    ECN_FOOTPRINT_BYTES = 120

    def __init__(self) -> None:
        self.root = Lcn()
        self.lcn_count = 0
        self.ecn_count = 0
        self.legal_ecn_count = 0
        self.total_hits = 0
        self.finalized_signatures = 0
        self.repeated_finalized = 0

    def cursor(self) -> "SignatureCursor":
        return SignatureCursor(self)

    def stats(self) -> PstStats:
        return PstStats(
            lcn_count=self.lcn_count,
            ecn_count=self.ecn_count,
            legal_ecn_count=self.legal_ecn_count,
            total_hits=self.total_hits,
            finalized_signatures=self.finalized_signatures,
            repeated_finalized=self.repeated_finalized,
        )

    def size_estimate_bytes(self) -> int:
        return self.lcn_count * self.LCN_FOOTPRINT_BYTES + self.ecn_count * self.ECN_FOOTPRINT_BYTES

    def dump(self) -> str:
        """Indented text rendering for fixture diffing."""
        lines: list[str] = ["root"]

        def walk(node: Lcn, depth: int) -> None:
            pad = "  " * depth
            for key in sorted(node.children_lcn, key=lambda k: k.encode()):
                k = node.children_lcn[key]
                lines.append(
                    f"{pad}lcn loc={key.location_id} in={list(key.internal_inputs)} out={list(key.internal_outputs)}"
                )
                walk(k, depth + 1)
            for ext in sorted(node.children_ecn, key=lambda e: e.encode()):
                ecn = node.children_ecn[ext]
                lines.append(
                    f"{pad}ecn groups={[list(g) for g in ext.input_groups]} "
                    f"outs={list(ext.output_pins)} legal={ecn.legal} hits={ecn.hits}"
                )

        walk(self.root, 1)
        return "\n".join(lines) + "\n"


class SignatureCursor:
    """Pointer to the tail of the active packing signature."""

    def __init__(self, tree: PackingSignatureTree) -> None:
        self.tree = tree
        self.path: list[Lcn] = [tree.root]

    @property
    def depth(self) -> int:
        return len(self.path) - 1

    @property
    def tail(self) -> Lcn:
        return self.path[-1]

    def advance(self, key: LcnKey) -> bool:
        """Descend to the child LCN for ``key``, creating it if absent.

        Returns True when a node was created (a new branch in the tree).
        """
        child = self.tail.children_lcn.get(key)
        created = child is None
        if created:
            child = Lcn(key=key)
            self.tail.children_lcn[key] = child
            self.tree.lcn_count += 1
        self.path.append(child)
        return created

    def retreat(self, steps: int) -> None:
        """Move the tail up ``steps`` levels; the tree itself is untouched."""
        if steps > self.depth:
            raise ValueError(f"cannot retreat {steps} steps from depth {self.depth}")
        del self.path[len(self.path) - steps:]

    def reset(self) -> None:
        del self.path[1:]

    def lookup(self, ext: ExternalConnectivity) -> bool | None:
        """Memoized verdict for ``ext`` at the tail, or None when unknown."""
        ecn = self.tail.children_ecn.get(ext)
        if ecn is None:
            return None
        ecn.hits += 1
        self.tree.total_hits += 1
        return ecn.legal

    def record(self, ext: ExternalConnectivity, legal: bool) -> None:
        if ext in self.tail.children_ecn:
            raise DuplicateEcnError(
                f"ECN already recorded at depth {self.depth} for {ext!r}; lookup() first"
            )
        self.tail.children_ecn[ext] = Ecn(ext, legal)
        self.tree.ecn_count += 1
        if legal:
            self.tree.legal_ecn_count += 1

    def finalize(self, ext: ExternalConnectivity) -> None:
        """Count one finished cluster against the ECN at the tail.

        A signature counts as repeated when its ECN was already visited
        (looked up or finalized) before this cluster completed; re-visits
        show up in ``hits`` via the final legality lookup, so no separate
        increment happens here.
        """
        ecn = self.tail.children_ecn.get(ext)
        if ecn is None:
            raise DuplicateEcnError("finalize() requires the final state's ECN to exist")
        self.tree.finalized_signatures += 1
        if ecn.hits >= 1:
            self.tree.repeated_finalized += 1


def compute_external(cluster: "ClusterState") -> ExternalConnectivity:
    """Boundary summary of a cluster: externally-driven input-pin groups
    and output pins whose nets leave the cluster."""
    conn = cluster.connectivity()
    return ExternalConnectivity(
        input_groups=tuple(tuple(g) for g in conn.external_groups),
        output_pins=tuple(conn.exiting_outputs),
    )
