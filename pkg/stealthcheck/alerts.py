"""
Core domain types for IDS alerts, web access events and severity arithmetic.
"""

import ipaddress
import re
from dataclasses import dataclass, field
from datetime import datetime
from enum import Enum
from typing import Iterable, List, Optional, Tuple, Union

from .errors import InvalidEventError, InvalidSeverityError, InvalidWindowError

IPAddress = Union[ipaddress.IPv4Address, ipaddress.IPv6Address]

# Highest level the IDS rule language assigns
SEVERITY_CEILING = 15

_METHOD_PATTERN = re.compile(r'^[A-Z]+$')
_TIMESTAMP_PATTERN = re.compile(r'^(\d+)\.(\d+)$')
_GROUP_PATTERN = re.compile(r'[^\s,]*')
_ACTION_PATTERN = re.compile(r'\S+')

# Last second of year 9999, the latest date an alert block can show
MAX_ALERT_EPOCH = 253402300799

# Prefixes with a meaning of their own inside an alert block
ALERT_HEADER_PREFIX = "** Alert "
SRC_IP_PREFIX = "Src IP: "


def check_single_line(what: str, value: str) -> None:
    """
    Reject text that would spill over its line of an alert block.

    :param what: Field name for the error message
    :type what: str
    :param value: Field text
    :type value: str
    :raises InvalidEventError: If the text holds a line break
    """
    if "\n" in value or "\r" in value:
        raise InvalidEventError(f"{what} must fit on one line, got {value!r}")


def check_alert_groups(groups: Tuple[str, ...]) -> None:
    """
    Reject groups the comma-separated group list cannot carry.

    :param groups: Alert groups, possibly ending with an empty element
    :type groups: Tuple[str, ...]
    :raises InvalidEventError: On whitespace or commas inside a group, or a lone empty group
    """
    if tuple(groups) == ("",):
        raise InvalidEventError("a single empty group cannot be told apart from no groups")
    for group in groups:
        if not _GROUP_PATTERN.fullmatch(group):
            raise InvalidEventError(f"alert group {group!r} must not contain whitespace or commas")


@dataclass(frozen=True, order=True)
class Severity:
    """
    Alert criticality as assigned by the rule that fired.

    :param level: Integer level, 0 to ``ceiling`` inclusive
    :type level: int
    :param ceiling: Highest accepted level
    :type ceiling: int
    """

    level: int
    ceiling: int = field(default=SEVERITY_CEILING, compare=False, repr=False)

    def __post_init__(self) -> None:
        if isinstance(self.level, bool) or not isinstance(self.level, int):
            raise InvalidSeverityError(f"severity level must be an integer, got {self.level!r}")
        if not 0 <= self.level <= self.ceiling:
            raise InvalidSeverityError(f"severity level {self.level} outside 0..{self.ceiling}")


@dataclass(frozen=True, order=True)
class AlertTimestamp:
    """
    Alert id as printed in the alert header: epoch seconds and a sequence number.

    Kept as two integers so ``1723753322.248`` renders back exactly.
    """

    epoch: int
    sequence: int = 0

    def __post_init__(self) -> None:
        if self.epoch < 0 or self.sequence < 0:
            raise InvalidEventError(f"alert timestamp must be non-negative: {self.epoch}.{self.sequence}")
        if self.epoch > MAX_ALERT_EPOCH:
            raise InvalidEventError(f"alert timestamp {self.epoch} is past the year 9999")

    def __str__(self) -> str:
        return f"{self.epoch}.{self.sequence}"

    @classmethod
    def parse(cls, text: str) -> "AlertTimestamp":
        """
        Parse the ``<epoch>.<seq>`` form.

        :param text: Timestamp text from an alert header
        :type text: str
        :return: Parsed timestamp
        :rtype: AlertTimestamp
        :raises InvalidEventError: If the text is not two dot-separated integers
        """
        match = _TIMESTAMP_PATTERN.match(text)
        if not match:
            raise InvalidEventError(f"invalid alert timestamp: {text!r}")
        return cls(int(match.group(1)), int(match.group(2)))


@dataclass(frozen=True)
class AlertRecord:
    """
    One IDS alert, as rendered in an alert file block.

    Only values the block renders unambiguously are accepted, so every record reads back
    from its rendering unchanged. The raw event may span lines, none of them blank.
    """

    timestamp: AlertTimestamp
    rule_id: int
    severity: Severity
    description: str
    groups: Tuple[str, ...] = ()
    source_path: str = ""
    hostname: str = ""
    src_ip: Optional[IPAddress] = None
    raw_event: Optional[str] = None
    action: Optional[str] = None

    def __post_init__(self) -> None:
        if not self.description:
            raise InvalidEventError(f"alert {self.timestamp} has an empty description")
        if self.rule_id < 0:
            raise InvalidEventError(f"alert {self.timestamp} has negative rule id {self.rule_id}")
        try:
            self.description.encode("utf-8")
        except UnicodeEncodeError:
            raise InvalidEventError(f"alert {self.timestamp} description is not valid text")
        check_single_line("description", self.description)
        check_single_line("source path", self.source_path)
        check_single_line("hostname", self.hostname)
        if "->" in self.hostname:
            raise InvalidEventError(f"hostname {self.hostname!r} must not contain '->'")
        check_alert_groups(self.groups)
        if self.action is not None and not _ACTION_PATTERN.fullmatch(self.action):
            raise InvalidEventError(f"alert action must be a single token, got {self.action!r}")
        if self.raw_event is not None:
            self._check_raw_event(self.raw_event)

    def _check_raw_event(self, raw_event: str) -> None:
        if "\r" in raw_event:
            raise InvalidEventError(f"alert {self.timestamp} raw event holds a carriage return")
        lines = raw_event.split("\n")
        if any(not line.strip() for line in lines):
            raise InvalidEventError(f"alert {self.timestamp} raw event is empty or holds a blank line")
        if any(line.startswith(ALERT_HEADER_PREFIX) for line in lines):
            raise InvalidEventError(f"alert {self.timestamp} raw event line reads as an alert header")
        if self.src_ip is None and lines[0].startswith(SRC_IP_PREFIX):
            raise InvalidEventError(f"alert {self.timestamp} raw event reads as a source address line")

    @property
    def level(self) -> int:
        return self.severity.level

    @property
    def tags(self) -> List[str]:
        """Non-empty groups (the raw list may end with an empty element)."""
        return [group for group in self.groups if group]


@dataclass(frozen=True)
class AccessEvent:
    """
    One web-server access log entry in combined format.

    Placeholder ``-`` fields are stored as ``None``.
    """

    client_ip: IPAddress
    timestamp: datetime
    method: str
    url: str
    protocol_version: str = "HTTP/1.1"
    status: int = 200
    body_bytes: Optional[int] = None
    ident: Optional[str] = None
    user: Optional[str] = None
    referer: Optional[str] = None
    user_agent: Optional[str] = None

    def __post_init__(self) -> None:
        if not _METHOD_PATTERN.match(self.method or ""):
            raise InvalidEventError(f"HTTP method must be an uppercase token, got {self.method!r}")
        if not 100 <= self.status <= 599:
            raise InvalidEventError(f"HTTP status {self.status} outside 100..599")
        if self.body_bytes is not None and self.body_bytes < 0:
            raise InvalidEventError(f"body size must be non-negative, got {self.body_bytes}")
        if self.timestamp.tzinfo is None:
            raise InvalidEventError("access event timestamp must carry a zone offset")


class LogKind(str, Enum):
    ACCESS_LOG = "access_log"
    WAZUH_ALERTS = "wazuh_alerts"
    OTHER = "other"


@dataclass(frozen=True)
class LogSource:
    """
    A monitored log file inside a challenge instance.

    :param path: Path of the log inside the instance
    :type path: str
    :param kind: What the file contains
    :type kind: LogKind
    :param decodes_urls: Whether the server writes request URLs percent-decoded into this log
    :type decodes_urls: bool
    """

    path: str
    kind: LogKind
    decodes_urls: bool = False

    def __post_init__(self) -> None:
        if not self.path:
            raise InvalidEventError("log source path must not be empty")
        check_single_line("log source path", self.path)
        if not isinstance(self.kind, LogKind):
            object.__setattr__(self, "kind", LogKind(self.kind))

    @property
    def name(self) -> str:
        """File-system safe name used for snapshot files."""
        return re.sub(r'[^A-Za-z0-9._-]', '_', self.path.strip('/')) or "_"


def detection_score(alerts: Iterable[AlertRecord]) -> int:
    """
    Sum the severity levels of all alerts.

    :param alerts: Alerts to aggregate
    :type alerts: Iterable[AlertRecord]
    :return: Detection score, 0 for no alerts
    :rtype: int
    """
    return sum(alert.severity.level for alert in alerts)


def alerts_in_window(alerts: Iterable[AlertRecord], start: float, end: float) -> List[AlertRecord]:
    """
    Keep alerts raised between ``start`` and ``end``, both inclusive, in their original order.

    :param alerts: Alerts to filter
    :type alerts: Iterable[AlertRecord]
    :param start: Window start, epoch seconds
    :type start: float
    :param end: Window end, epoch seconds
    :type end: float
    :return: Alerts inside the window
    :rtype: List[AlertRecord]
    :raises InvalidWindowError: If start is after end
    """
    if start > end:
        raise InvalidWindowError(f"window start {start} is after end {end}")
    return [alert for alert in alerts if start <= alert.timestamp.epoch <= end]
