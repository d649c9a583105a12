"""Exception types shared across the workbench.

CLI exit codes: 0 success, 2 usage/configuration, 3 I/O or checkpoint,
4 numeric failure during training.
"""


class ConfigError(ValueError):
    """Bad task name, preset, flag value or hyperparameter."""


class TrainingError(RuntimeError):
    """Non-finite loss or other numeric failure; carries a diagnostic dict."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class CheckpointError(RuntimeError):
    """Unreadable checkpoint or format-version mismatch."""


class EpisodeDoneError(RuntimeError):
    """step() was called on an episode that already terminated."""


class MetricsError(ValueError):
    """Transfer metrics requested on fewer than two phases."""
