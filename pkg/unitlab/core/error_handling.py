"""Centralized error handling framework for unitlab."""

import functools
import logging
import traceback
from collections.abc import Callable
from contextlib import contextmanager
from typing import Any, TypeVar

logger = logging.getLogger(__name__)

# Type variable for decorated functions
F = TypeVar("F", bound=Callable[..., Any])


class UnitLabError(Exception):
    """Base exception for all unitlab errors."""

    def __init__(self, message: str, details: dict[str, Any] | None = None):
        super().__init__(message)
        self.message = message
        self.details = details or {}


class DimensionError(UnitLabError):
    """Raised when tensor shapes or layer geometry do not line up."""

    pass


class NumericError(UnitLabError):
    """Raised on division by exact zero or sqrt of a negative value."""

    pass


class DegenerateInputError(UnitLabError):
    """Raised when an input is too small or too flat to compute a result."""

    pass


class ContractError(UnitLabError):
    """Raised when a caller violates an operation's precondition."""

    pass


class CapacityError(UnitLabError):
    """Raised when an exact oracle is asked for more than it can solve."""

    pass


class MissingDataError(UnitLabError):
    """Raised when required auxiliary data (norm means, checkpoints) is absent."""

    pass


class TrainingDivergedError(UnitLabError):
    """Raised when a loss or objective becomes non-finite."""

    pass


class FileFormatError(UnitLabError):
    """Raised when a binary or CSV file does not match its format."""

    pass


class ConfigurationError(UnitLabError):
    """Raised when configuration is invalid."""

    @property
    def line(self) -> int | None:
        """Line number the error refers to, when known."""
        return self.details.get("line")


class BoundViolationError(UnitLabError):
    """Raised when lower <= exact <= upper fails beyond the allowed slack."""

    pass


class ErrorContext:
    """Context information for error handling."""

    def __init__(self, operation: str, **kwargs):
        self.operation = operation
        self.context = kwargs


def handle_errors(
    error_types: dict[type[Exception], type[UnitLabError]] | None = None,
    default_error: type[UnitLabError] = UnitLabError,
    log_errors: bool = True,
) -> Callable[[F], F]:
    """Map foreign exceptions raised by ``func`` into the unitlab hierarchy.

    Errors that already belong to the hierarchy pass through untouched.

    Args:
        error_types: Mapping of exception types to unitlab error types
        default_error: Error type for unmapped exceptions
        log_errors: Whether to log mapped errors
    """
    if error_types is None:
        error_types = {}

    def decorator(func: F) -> F:
        @functools.wraps(func)
        def wrapper(*args, **kwargs):
            try:
                return func(*args, **kwargs)
            except UnitLabError:
                raise
            except Exception as e:
                if log_errors:
                    logger.error(f"Error in {func.__name__}: {e}")

                error_type = default_error
                for source_type, target_type in error_types.items():
                    if isinstance(e, source_type):
                        error_type = target_type
                        break

                details = {
                    "original_error": str(e),
                    "original_type": type(e).__name__,
                    "function": func.__name__,
                    "traceback": traceback.format_exc(),
                }

                raise error_type(
                    f"Error in {func.__name__}: {e}", details=details
                ) from e

        return wrapper  # type: ignore[return-value]

    return decorator


@contextmanager
def error_context(operation: str, **context_kwargs):
    """
    Context manager attaching operation context to propagating errors.

    Args:
        operation: Description of the operation being performed
        **context_kwargs: Additional context information
    """
    try:
        yield ErrorContext(operation, **context_kwargs)
    except Exception as e:
        logger.error(f"Error during {operation}: {e}")

        if isinstance(e, UnitLabError):
            e.details.update({"operation": operation, **context_kwargs})

        raise


class ErrorCollector:
    """Collects multiple errors for batch processing."""

    def __init__(self):
        self.errors: list[UnitLabError] = []
        self.warnings: list[str] = []

    def add_error(self, error: str | UnitLabError, **details):
        """Add an error to the collection."""
        if isinstance(error, str):
            error = UnitLabError(error, details)
        elif details:
            error.details.update(details)

        self.errors.append(error)

    def add_warning(self, warning: str):
        """Add a warning to the collection."""
        self.warnings.append(warning)

    def has_errors(self) -> bool:
        """Check if there are any errors."""
        return len(self.errors) > 0

    def has_warnings(self) -> bool:
        """Check if there are any warnings."""
        return len(self.warnings) > 0

    def raise_if_errors(self, error_type: type[UnitLabError] = UnitLabError):
        """Raise a combined error if there are any errors."""
        if self.has_errors():
            messages = [str(error) for error in self.errors]
            combined_message = "Multiple errors occurred:\n" + "\n".join(
                f"- {msg}" for msg in messages
            )

            combined_details = {
                "error_count": len(self.errors),
                "warning_count": len(self.warnings),
                "errors": [error.details for error in self.errors],
                "warnings": self.warnings,
            }

            raise error_type(combined_message, combined_details)

    def clear(self):
        """Clear all errors and warnings."""
        self.errors.clear()
        self.warnings.clear()
