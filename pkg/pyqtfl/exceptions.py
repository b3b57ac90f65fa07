"""
Quantum-Train Federated Learning Exceptions
"""
from typing import Any, Optional

from .enum import ErrorCode

#** Variables **#
__all__ = [
    'QtflError',

    'ConfigError',
    'UsageError',
    'InvariantError',
    'DataError',
    'ParseError',
    'OracleError',
]

#** Classes **#

class QtflError(Exception):
    code: ErrorCode = ErrorCode.Unspecified

    def __init__(self, msg: Any = None, code: Optional[ErrorCode] = None):
        self.message = msg
        self.code    = code or self.code

    def __str__(self) -> str:
        if self.message:
            return str(self.message)
        return super().__str__()

class ConfigError(QtflError):
    pass

class UsageError(ConfigError):
    code = ErrorCode.UsageError

class InvariantError(QtflError):
    pass

class DataError(QtflError):
    pass

class ParseError(DataError):
    """
    IDX Parsing Failure at a Specific Byte Offset
    """

    def __init__(self, msg: Any, offset: int, expected: Any = None):
        super().__init__(msg)
        self.offset   = offset
        self.expected = expected

    def __str__(self) -> str:
        message = f'{self.message} (offset={self.offset}'
        if self.expected is not None:
            message += f', expected={self.expected}'
        return message + ')'

class OracleError(QtflError):
    pass
