"""Exception types shared across the package."""


class PipeschedError(Exception):
    """Base class for all package errors."""


class CyclicGraph(PipeschedError):
    """The edge relation contains a cycle; carries one offending back edge."""

    def __init__(self, edge):
        self.edge = edge
        super().__init__(f"graph contains a cycle through edge {edge[0]} -> {edge[1]}")


class DegreeOverflow(PipeschedError):
    """A node's in-degree exceeds the embedding's maximum degree."""

    def __init__(self, node, in_degree, max_degree):
        self.node = node
        super().__init__(
            f"node {node} has in-degree {in_degree} > max degree {max_degree}"
        )


class ConfigError(PipeschedError):
    """Invalid configuration value."""


class ParseError(PipeschedError):
    """Malformed graph or schedule file."""


class Infeasible(PipeschedError):
    """No schedule satisfies the constraints (e.g. more stages than nodes)."""


class TooLarge(PipeschedError):
    """Input exceeds the size guard of an exhaustive method."""


class FeasibilityError(PipeschedError):
    """A schedule violates dependency or nonemptiness constraints."""


class ShapeError(PipeschedError):
    """Mismatched vector/sequence lengths."""


class NumericalError(PipeschedError):
    """NaN or Inf encountered in network activations or gradients."""


class DecodeExhausted(PipeschedError):
    """Every candidate node is masked; no decoding step is possible."""


class OracleTimeout(PipeschedError):
    """Exact scheduling exceeded its time budget."""


class TrainingDiverged(PipeschedError):
    """Mean reward collapsed; training aborted."""


class CheckpointError(PipeschedError):
    """Checkpoint file is malformed or shape-incompatible."""
