"""Exception hierarchy shared by every module."""


class MIFError(Exception):
    """Base class for all library errors."""


class EmptyInput(MIFError, ValueError):
    pass


class DegenerateOpacity(MIFError, ValueError):
    pass


class DegenerateWeight(MIFError, ValueError):
    pass


class InsufficientData(MIFError, ValueError):
    pass


class DimensionMismatch(MIFError, ValueError):
    pass


class NormalizationError(MIFError, ValueError):
    pass


class InvalidRegion(MIFError, KeyError):
    pass


class TargetNotFound(MIFError, LookupError):
    pass


class DegenerateView(MIFError, ValueError):
    pass


class AssetNotFound(MIFError, KeyError):
    pass


class DegenerateGeometry(MIFError, ValueError):
    pass


class TopologyError(MIFError, ValueError):
    pass


class DegenerateSupport(MIFError, ValueError):
    pass


class NoFeasibleStance(MIFError, RuntimeError):
    pass


class NoPath(MIFError, RuntimeError):
    pass


class ScenarioError(MIFError, ValueError):
    """Scenario document failed to parse or validate.

    ``where`` carries the offending field path (``objects[2].id``) or a
    ``line N`` marker for syntax errors.
    """

    def __init__(self, message, where=None):
        self.where = where
        super().__init__(f"{where}: {message}" if where else message)


class EventError(MIFError, ValueError):
    pass


class EmptySuite(MIFError, ValueError):
    pass
