from ghostscope.log import getLogger


logger = getLogger(__name__)


class FailException(Exception):
    def __init__(self, error_message):
        super().__init__(error_message)
        logger.error(error_message)


class DomainError(FailException):
    """Invalid physical argument: non-positive length, broken geometry, too few frames."""


class SamplingError(FailException):
    """The grid or quadrature is too coarse for the requested operation."""


class InputError(FailException):
    """A file could not be read or is not in the expected format."""


class ConfigError(FailException):
    def __init__(self, field, error_message):
        """
        :param field: dotted path of the offending config field, e.g. 'test_arm.aperture'
        :param error_message: what is wrong with it
        """
        self.field = field
        super().__init__(f"{field}: {error_message}")
