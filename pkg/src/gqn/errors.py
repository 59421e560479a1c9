"""Exception taxonomy shared across the package.

The split matters for the CLI exit-code contract: configuration problems
(exit 2) are distinguished from numeric failures (exit 3) and training
divergence (exit 4).
"""


class GqnError(Exception):
    """Base class for all library errors."""


class InvalidInputError(GqnError):
    """Malformed operand values: empty inputs, non-finite entries, non-scalar loss."""


class ShapeError(GqnError):
    """Tensor dimension or MLP width mismatch."""


class ConfigError(GqnError):
    """Invalid configuration: bad dims, k >= sampled nodes, unknown config keys."""


class ContractError(GqnError):
    """A runtime contract was violated (empty node/edge set, non-deterministic closure)."""
