from typing import Optional

import numpy as np


class StepSvmError(Exception):
    """Base class for every error raised by the stepsvm engines"""


class InputValidationError(StepSvmError):
    """A precondition or data invariant does not hold"""


class CsvParseError(InputValidationError):
    """A delimited input file could not be parsed"""

    def __init__(self, message: str, line: Optional[int] = None, column: Optional[int] = None):
        location = ""
        if line is not None:
            location = f"line {line}"
            if column is not None:
                location += f", column {column}"
            location += ": "
        super().__init__(f"{location}{message}")
        self.line = line
        self.column = column


class UndefinedCorrelationError(InputValidationError):
    """Pearson correlation requested for a constant vector"""


class SolverError(StepSvmError):
    """The dual solver stopped before reaching the KKT tolerance"""

    def __init__(
        self,
        message: str,
        best_alpha: Optional[np.ndarray] = None,
        iterations: int = 0,
        max_violation: float = float("nan"),
        feature_index: Optional[int] = None,
    ):
        super().__init__(message)
        self.best_alpha = best_alpha
        self.iterations = iterations
        self.max_violation = max_violation
        self.feature_index = feature_index

    def __str__(self) -> str:
        text = super().__str__()
        if self.feature_index is not None:
            text = f"feature {self.feature_index}: {text}"
        return f"{text} (iterations={self.iterations}, max KKT violation={self.max_violation:.3g})"
