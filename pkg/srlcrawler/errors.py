"""
Exception types raised across srlcrawler.
"""
import numpy as np


class SrlError(Exception):
    """Base class for every error raised by this package."""


class DomainError(SrlError, ValueError):
    """An argument lies outside the domain of the operation."""


class ConfigError(SrlError, ValueError):
    """Robot, task or experiment configuration is inconsistent."""


class ContractViolation(SrlError, RuntimeError):
    """A caller broke an operation's contract (e.g. healing a damage mask)."""


class WarmupError(DomainError):
    """Replay buffer does not yet hold enough transitions for a minibatch."""


class NonFiniteError(SrlError, FloatingPointError):
    """
    A loss or gradient became NaN or infinite.

    layer_index names the offending network layer when known,
    diagnostics carries batch statistics when the loss is at fault.
    """

    def __init__(self, message, layer_index=None, diagnostics=None):
        super().__init__(message)
        self.layer_index = layer_index
        self.diagnostics = dict(diagnostics or {})


class NotPositiveDefiniteError(SrlError, np.linalg.LinAlgError):
    """Kernel system could not be factorized."""
