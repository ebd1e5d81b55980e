#!/usr/bin/env python3
"""
Exception types for the sparse GP toolkit.
"""

from typing import List, Optional, Sequence

import numpy as np


class NotPositiveDefiniteError(np.linalg.LinAlgError):
    """Cholesky factorization failed at every jitter level that was tried.

    Usually means duplicate/degenerate inducing inputs or pathological
    hyperparameters.
    """

    def __init__(self, message: str, jitter_ladder: Optional[Sequence[float]] = None):
        super().__init__(message)
        self.jitter_ladder: List[float] = list(jitter_ladder or [])


class InternalConsistencyError(RuntimeError):
    """A quantity that must be non-negative came out clearly negative."""


class DataIngestionError(ValueError):
    """Raised when a data file cannot be read or contains invalid values."""

    def __init__(self, message: str, path: Optional[str] = None, line: Optional[int] = None):
        location = ""
        if path is not None:
            location = f"{path}"
            if line is not None:
                location += f":{line}"
            location += ": "
        super().__init__(f"{location}{message}")
        self.path = path
        self.line = line


class UsageError(ValueError):
    """Invalid experiment configuration; `field` is the dotted config path."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


class TrainingError(RuntimeError):
    """Every restart of a multi-start optimization failed."""

    def __init__(self, message: str, causes: Optional[Sequence[BaseException]] = None):
        self.causes = list(causes or [])
        details = "; ".join(f"{type(c).__name__}: {c}" for c in self.causes)
        super().__init__(f"{message} ({details})" if details else message)
