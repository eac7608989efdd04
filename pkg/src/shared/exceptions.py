"""Custom exceptions for the application."""


class NavigationError(Exception):
    """Base exception for all planning and simulation errors."""

    def __init__(self, message: str, user_message: str | None = None) -> None:
        """
        Initialize exception.

        Args:
            message: Internal error message for logging
            user_message: Short message suitable for the command line
        """
        super().__init__(message)
        self.user_message = user_message or message


# Argument Errors
class ArgumentError(NavigationError):
    """Numeric argument outside its domain."""


# Scenario Errors
class ScenarioError(NavigationError):
    """Base scenario file error."""

    def __init__(
        self,
        message: str,
        line: int | None = None,
        field: str | None = None,
        user_message: str | None = None,
    ) -> None:
        """
        Initialize scenario error.

        Args:
            message: Internal error message for logging
            line: 1-based line in the scenario file, if known
            field: Dotted path of the offending key, if known
            user_message: Short message suitable for the command line
        """
        location = f"line {line}: " if line is not None else ""
        super().__init__(message, user_message or f"{location}{message}")
        self.line = line
        self.field = field


class ScenarioParseError(ScenarioError):
    """Scenario file is not valid YAML."""


class UnknownKeyError(ScenarioError):
    """Scenario file contains a key the schema does not define."""


class InvariantViolationError(ScenarioError):
    """Scenario value breaks a type invariant."""


class AssumptionViolationError(ScenarioError):
    """World violates a planning assumption and --force was not given."""


# Planning Errors
class PlanningError(NavigationError):
    """Planner could not produce a path."""


class NoPathError(PlanningError):
    """No path connects start and target."""


class EmptyRegionError(PlanningError):
    """Region has no free cells."""


# Output Errors
class OutputError(NavigationError):
    """Artifacts could not be written."""
