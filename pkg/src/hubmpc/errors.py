class HubMpcError(Exception):
    """Base class for package errors."""


class ConfigError(HubMpcError, ValueError):
    """Invalid scenario, grid or controller configuration."""


class SolverError(HubMpcError, RuntimeError):
    """An optimization problem could not be solved."""


class ProtocolError(HubMpcError, RuntimeError):
    """A consensus round is missing or duplicating a trade report."""
