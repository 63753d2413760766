"""
Error hierarchy shared by the services and the command line

Every error carries the process exit code the CLI reports for it.
"""

from typing import Any, Dict, List, Optional, Tuple


class LabError(Exception):
    """Base class for all laboratory errors"""

    exit_code = 1

    def __init__(self, message: str, **context: Any) -> None:
        super().__init__(message)
        self.message = message
        self.context: Dict[str, Any] = context

    def to_dict(self) -> Dict[str, Any]:
        return {
            "error": type(self).__name__,
            "message": self.message,
            "exit_code": self.exit_code,
            "context": {key: repr(value) for key, value in self.context.items()},
        }


class InputFormatError(LabError):
    """Malformed CSV or JSON input"""

    exit_code = 2


class PreconditionError(LabError):
    """An operation was called outside its domain"""

    exit_code = 3


class DegenerateWeightError(PreconditionError):
    """Weighted projection cannot reach its orthogonality target"""

    def __init__(self, message: str, ball: Optional[Any] = None, **context: Any) -> None:
        super().__init__(message, ball=ball, **context)
        self.ball = ball


class NumericalError(LabError):
    """A numerical construction failed its own checks"""

    exit_code = 4


class CoverError(NumericalError):
    """Whitney cover property violated"""


class InvariantError(NumericalError):
    """Post-hoc decomposition checks failed"""

    def __init__(self, message: str, failed: Optional[List[str]] = None, **context: Any) -> None:
        super().__init__(message, failed=failed, **context)
        self.failed = failed or []


class ConvergenceError(NumericalError):
    """Iteration stopped before reaching its target"""

    def __init__(
        self,
        message: str,
        curve: Optional[List[Tuple[int, float]]] = None,
        **context: Any,
    ) -> None:
        super().__init__(message, **context)
        self.curve = curve or []
