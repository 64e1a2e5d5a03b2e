"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: configuration problems exit 2,
infeasible-but-valid configurations exit 3, anything else exits 4.
"""


class TilesimError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(TilesimError):
    """A configuration document or parameter set is malformed."""


class SchemaError(ConfigError):
    """A configuration document violates the published schema.

    The message always names the offending field.
    """

    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"{field}: {message}")


class InvariantError(ConfigError):
    """A structurally valid document violates a semantic invariant.

    The message always names the failed invariant.
    """

    def __init__(self, invariant: str, message: str):
        self.invariant = invariant
        super().__init__(f"invariant '{invariant}' violated: {message}")


class InfeasibleError(TilesimError):
    """The described workload cannot run on the described hardware."""


class CapacityError(InfeasibleError):
    """Device memory cannot hold the working set; carries the deficit."""

    def __init__(self, required_bytes: int, capacity_bytes: int, detail: str = ""):
        self.required_bytes = required_bytes
        self.capacity_bytes = capacity_bytes
        self.deficit_bytes = required_bytes - capacity_bytes
        msg = (
            f"memory capacity exceeded: need {required_bytes} bytes, "
            f"have {capacity_bytes} bytes (deficit {self.deficit_bytes} bytes)"
        )
        if detail:
            msg += f" [{detail}]"
        super().__init__(msg)
