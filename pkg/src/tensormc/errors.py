class TMCError(Exception):
    pass


class ShapeError(TMCError, ValueError):
    pass


class AxisError(TMCError, KeyError):
    pass


class ContractionError(TMCError, ValueError):
    """A factor handed to ``contract`` does not mention the summed axis."""


class GraphStateError(TMCError, RuntimeError):
    pass


class GraphConsistencyError(TMCError, RuntimeError):
    pass


class ModelError(TMCError, ValueError):
    pass


class EvidenceError(TMCError, ArithmeticError):
    pass


class DegenerateParticlesError(TMCError, ArithmeticError):
    pass


class NumericError(TMCError, ArithmeticError):
    def __init__(self, message, node_id=None):
        super().__init__(message)
        self.node_id = node_id


class PreconditionError(TMCError, ValueError):
    pass


class ConfigError(TMCError, ValueError):
    pass
