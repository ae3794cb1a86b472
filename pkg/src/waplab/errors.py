"""Exception types raised by waplab."""


class WapLabError(Exception):
    """Base class for all waplab errors."""


class DimensionMismatchError(WapLabError, ValueError):
    pass


class PatchTooSmallError(WapLabError, ValueError):
    """An averaging box or enlarged support is not covered by the represented patch.

    The box that would have been needed is kept in ``required``.
    """

    def __init__(self, message, required=None):
        super().__init__(message)
        self.required = required


class ResultTooLargeError(WapLabError, RuntimeError):
    pass


class NoDecompositionRuleError(WapLabError, ValueError):
    pass


class NonFiniteSampleError(WapLabError, ValueError):
    pass
