"""Exception types shared across the engine."""


class EngineError(Exception):
    """Base class for all errors raised by this package."""


class SchemaError(EngineError):
    """Schema file is malformed or internally inconsistent."""


class DataLoadError(EngineError):
    """A data file does not match its declared schema."""


class QueryError(EngineError):
    """A query or batch definition is invalid."""


class PlanningError(EngineError):
    """View generation or plan construction failed an internal invariant."""


class ExecutionError(EngineError):
    """Plan interpretation failed."""


class StaleStateError(EngineError):
    """A derived artifact was requested after an upstream change invalidated it."""


class TrainingError(EngineError):
    """A model front-end cannot proceed (empty data, divergence, bad config)."""
