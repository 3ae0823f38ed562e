from enum import IntEnum

try:
    from enum import StrEnum
except ImportError:  # Python < 3.11
    from enum import Enum

    class StrEnum(str, Enum):
        def __str__(self) -> str:
            return str.__str__(self)

        __format__ = str.__format__


class ErrorCode(StrEnum):
    OVERLAP = "OVERLAP"
    DOMAIN = "DOMAIN"
    EMPTY_REGION = "EMPTY_REGION"
    NO_INCLUSION = "NO_INCLUSION"

    CFL_VIOLATION = "CFL_VIOLATION"
    PADDING_VIOLATION = "PADDING_VIOLATION"
    NO_CONVERGENCE = "NO_CONVERGENCE"

    ALL_BELOW_FLOOR = "ALL_BELOW_FLOOR"
    WINDOW_EMPTY = "WINDOW_EMPTY"

    DIMENSION_MISMATCH = "DIMENSION_MISMATCH"
    GRID_MISMATCH = "GRID_MISMATCH"

    VALIDATION_ERROR = "VALIDATION_ERROR"
    INVALID_CONFIG = "INVALID_CONFIG"
    MALFORMED_INPUT = "MALFORMED_INPUT"
    UNKNOWN_SUITE = "UNKNOWN_SUITE"


class ExitCode(IntEnum):
    OK = 0
    NUMERICAL = 1
    INVALID_INPUT = 2
    STABILITY = 3
