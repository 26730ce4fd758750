"""Exception types shared across the package.

Each CLI-visible failure category gets its own class so the driver can map
them to distinct exit codes.
"""


class K41Error(Exception):
    """Base class for all package errors."""


class ConfigError(K41Error):
    """Invalid configuration value or malformed config file."""


class UnsupportedDimensionError(K41Error):
    """Operation not defined in this spatial dimension."""


class NumericalBlowupError(K41Error):
    """NaN/overflow detected while integrating; carries the step index."""

    def __init__(self, step_index, message=None):
        self.step_index = step_index
        super().__init__(message or f"numerical blowup at step {step_index}")


class DegenerateStatsError(K41Error):
    """Statistics of the zero field; dissipation scales undefined."""


class VerificationError(K41Error):
    """A verification run exceeded its contract tolerance."""


class CheckpointError(K41Error):
    """Base class for checkpoint file problems."""


class CheckpointMagicError(CheckpointError):
    """File does not start with the expected magic/version."""


class CheckpointTruncatedError(CheckpointError):
    """File shorter than its header promises."""


class CheckpointInvariantError(CheckpointError):
    """Loaded field violates a spectral-field invariant."""
