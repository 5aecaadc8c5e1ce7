"""Exception types raised across the package."""


class LossLabError(Exception):
    pass


class ShapeError(LossLabError, ValueError):
    pass


class NonFiniteError(LossLabError, FloatingPointError):
    pass


class LayoutMismatchError(LossLabError, ValueError):
    """Two parameter vectors come from different model specs."""


class TraceError(LossLabError, RuntimeError):
    pass


class FormatError(LossLabError, ValueError):
    """Malformed IDX, checkpoint or config file."""


class ScheduleError(LossLabError, ValueError):
    pass
