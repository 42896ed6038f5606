"""Exception hierarchy shared by all modules."""


class DejavuError(Exception):
    """Base class for all errors raised by this package."""


class ParseError(DejavuError):
    """A file could not be read or decoded (missing file, bad JSON, bad schema)."""


class ArchValidationError(DejavuError):
    """An architecture file decoded fine but violates a structural rule."""


class NetlistValidationError(DejavuError):
    """A netlist file decoded fine but violates a structural rule."""


class GenerationError(DejavuError):
    """A netlist generator spec is infeasible as requested."""


class ResourceOverflowError(DejavuError):
    """A cluster demands more boundary pins than the architecture provides.

    Raised by problem derivation; the packer treats it as an illegal
    verdict without invoking the router.
    """


class RoutingBudgetError(DejavuError):
    """The exhaustive routing oracle was asked about a graph above its node budget."""


class DuplicateEcnError(DejavuError):
    """record() was called for an external-connectivity key that already has an ECN.

    Callers must lookup() first; hitting this indicates a packer bug, not
    a data problem.
    """


class UnpackableMoleculeError(DejavuError):
    """A molecule cannot be legally placed even as the sole occupant of a cluster."""
