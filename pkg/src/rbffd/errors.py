"""Exception types shared across the package."""


class ParameterError(ValueError):
    """A caller-supplied parameter is out of its documented range."""


class DegenerateStencilError(RuntimeError):
    """A local weight system is singular or numerically rank-deficient.

    Carries the offending node index (when known) and its coordinates so
    the failing stencil can be located in the node set.
    """

    def __init__(self, message, node_index=None, position=None):
        super().__init__(message)
        self.node_index = node_index
        self.position = position


class InstabilityError(RuntimeError):
    """The explicit iteration produced a non-finite field (blow-up)."""

    def __init__(self, message, step=None, max_abs=None):
        super().__init__(message)
        self.step = step
        self.max_abs = max_abs


class SteadyStateTimeout(RuntimeError):
    """Run-to-steady mode hit its step cap before reaching tolerance."""

    def __init__(self, message, steps=None, residual=None):
        super().__init__(message)
        self.steps = steps
        self.residual = residual
