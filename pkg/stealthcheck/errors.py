"""
Exception hierarchy shared by all stealthcheck modules.
"""

from typing import TYPE_CHECKING, Optional

if TYPE_CHECKING:
    from .parsers import ParseIssue


class StealthCheckError(Exception):
    """Base class for every error raised by stealthcheck."""


class ConfigError(StealthCheckError):
    """Challenge configuration is missing a key or holds an invalid value."""


class InvalidSeverityError(StealthCheckError, ValueError):
    """Severity level outside [0, ceiling]."""


class InvalidEventError(StealthCheckError, ValueError):
    """Access event or alert record violates its field constraints."""


class InvalidWindowError(StealthCheckError, ValueError):
    """Counting window with start after end."""


class ParseError(StealthCheckError):
    """
    A log line or alert block could not be parsed.

    :param issue: The issue describing where and why parsing failed
    :type issue: ParseIssue
    """

    def __init__(self, issue: "ParseIssue"):
        super().__init__(f"line {issue.line_number}: {issue.reason}")
        self.issue = issue


class RulesetError(StealthCheckError, ValueError):
    """Rule section failed validation; the message names the rule."""


class ScoringError(StealthCheckError, ValueError):
    """Scoring parameters violate a > b >= 0, s > 0, d0 >= 0."""


class ReportError(StealthCheckError):
    """A submission report could not be assembled."""


class TokenError(StealthCheckError):
    """Final token refused at issue time or failed verification."""


class LifecycleError(StealthCheckError):
    """Base class for instance lifecycle failures."""


class DuplicateInstanceError(LifecycleError):
    """Team already has a live instance of the challenge."""


class UnknownInstanceError(LifecycleError):
    """No instance with the given id."""


class IllegalTransitionError(LifecycleError):
    """Requested state change is not in the transition table."""


class MissingSnapshotError(LifecycleError):
    """Leaving Running without a snapshot taken since entering it."""


class RuntimeDriverError(StealthCheckError):
    """The runtime driver failed to start, stop, reset or read an instance."""


class SnapshotError(StealthCheckError):
    """Logs could not be captured for a snapshot."""


class ScenarioMismatchError(StealthCheckError):
    """
    Replayed scenario produced a detection score other than the expected one.

    :param name: Scenario name
    :type name: str
    :param actual: Detection score observed
    :type actual: int
    :param expected: Detection score declared by the scenario
    :type expected: Optional[int]
    """

    def __init__(self, name: str, actual: int, expected: Optional[int]):
        super().__init__(f"scenario '{name}': expected detection score {expected}, got {actual}")
        self.name = name
        self.actual = actual
        self.expected = expected


class WriteupError(StealthCheckError):
    """Write-up rejected (empty text or unverifiable token)."""
