from typing import Any

from wave_enclosure.core.error_codes import ErrorCode, ExitCode


class EnclosureError(Exception):
    def __init__(self, exit_code: int, code: str, message: str, detail: dict[str, Any] | None = None):
        self.exit_code = int(exit_code)
        self.code = str(code)
        self.message = message
        self.detail = detail or {}
        super().__init__(message)


def overlap_error(message: str, **detail: Any) -> EnclosureError:
    return EnclosureError(exit_code=ExitCode.INVALID_INPUT, code=ErrorCode.OVERLAP, message=message, detail=detail)


def domain_error(message: str, **detail: Any) -> EnclosureError:
    return EnclosureError(exit_code=ExitCode.INVALID_INPUT, code=ErrorCode.DOMAIN, message=message, detail=detail)
