from __future__ import absolute_import

__all__ = ['ShapeError', 'NumericError', 'CheckpointError', 'BadMagicError',
           'VersionMismatchError', 'TruncatedCheckpointError', 'TensorShapeMismatchError',
           'ManifestError', 'InfeasibleRatioError', 'CalibrationError', 'DivergenceError',
           'ContextOverflowError', 'BaselineNotBeatenError']


class ShapeError(ValueError):
    """Raised when tensor shapes do not agree."""


class NumericError(ArithmeticError):
    """Raised on NaN or otherwise unusable numeric input."""


class CheckpointError(ValueError):
    """Base class for every checkpoint decoding failure."""


class BadMagicError(CheckpointError):
    pass


class VersionMismatchError(CheckpointError):
    pass


class TruncatedCheckpointError(CheckpointError):
    pass


class TensorShapeMismatchError(CheckpointError):
    """A stored tensor disagrees with the shape implied by the config.

    Args:
        name (str): canonical tensor name, e.g. ``layers.3.Wgate``.
    """

    def __init__(self, name, message):
        super(TensorShapeMismatchError, self).__init__('{}: {}'.format(name, message))
        self.name = name


class ManifestError(CheckpointError):
    pass


class InfeasibleRatioError(ValueError):
    """The requested pruning ratio cannot be reached without emptying a layer.

    Args:
        requested (float): requested ratio.
        max_ratio (float): largest ratio reachable under the keep-one clamp.
    """

    def __init__(self, requested, max_ratio):
        super(InfeasibleRatioError, self).__init__(
            'ratio {:.6f} is not achievable, max achievable is {:.6f}'.format(requested, max_ratio)
        )
        self.requested = requested
        self.max_ratio = max_ratio


class CalibrationError(ValueError):
    """Raised for an empty calibration set or an unusable sample.

    Args:
        index (int or None): index of the offending sample, if any.
    """

    def __init__(self, message, index=None):
        if index is not None:
            message = 'sample {}: {}'.format(index, message)
        super(CalibrationError, self).__init__(message)
        self.index = index


class DivergenceError(ArithmeticError):
    """Training produced a non-finite loss or gradient.

    Args:
        step (int): 1-based step at which training diverged.
        value: the offending value.
        what (str, optional): name of the diverged quantity. Default is ``loss``.
    """

    def __init__(self, step, value, what='loss'):
        super(DivergenceError, self).__init__(
            '{} became {} at step {}'.format(what, value, step))
        self.step = step
        self.what = what


class ContextOverflowError(ValueError):
    pass


class BaselineNotBeatenError(RuntimeError):
    pass
