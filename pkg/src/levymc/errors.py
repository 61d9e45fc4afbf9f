"""Exception types shared across the package."""


class LevyMCError(Exception):
    pass


class InfiniteMassError(LevyMCError, ValueError):
    """Tail mass requested at a level where the measure has infinite mass."""


class CannotSampleError(LevyMCError, ValueError):
    """The truncated jump law has zero (or infinite) mass and cannot be sampled."""


class SingularDiffusionError(LevyMCError, ValueError):
    def __init__(self, message, condition=float("inf")):
        super().__init__(f"{message} (condition number {condition:.3g})")
        self.condition = condition


class QuadratureError(LevyMCError, RuntimeError):
    def __init__(self, message, achieved=float("nan")):
        super().__init__(f"{message} (achieved tolerance {achieved:.3g})")
        self.achieved = achieved


class ConfigError(LevyMCError, ValueError):
    """Invalid configuration. ``line`` points into the config document when known."""

    def __init__(self, message, line=None, source=None):
        self.line = line
        self.source = source
        self.detail = message
        prefix = ""
        if source is not None:
            prefix = f"{source}:{line if line is not None else 1}: "
        elif line is not None:
            prefix = f"line {line}: "
        super().__init__(prefix + message)


class NumericalAbort(LevyMCError, FloatingPointError):
    """A non-finite value appeared in the value surface."""

    def __init__(self, layer, node, value):
        self.layer = layer
        self.node = node
        self.value = value
        super().__init__(f"non-finite value {value!r} at time layer {layer}, node {node}")
