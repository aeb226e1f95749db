"""
Parsers for combined-format access logs and IDS alert files, and the matching renderers.

Alert file grammar, one block per alert, blocks separated by a blank line::

    ** Alert <epoch>.<seq>: [<action>  ]- <comma-separated groups>
    <YYYY Mon DD HH:MM:SS> <hostname>-><source path>
    Rule: <id> (level <n>) -> '<description>'
    [Src IP: <ip>]
    [<raw event line>]
"""

import ipaddress
import re
from dataclasses import dataclass
from datetime import datetime, timedelta, timezone
from typing import Iterator, List, Optional, Tuple, Union

from .alerts import ALERT_HEADER_PREFIX, SRC_IP_PREFIX, AccessEvent, AlertRecord, AlertTimestamp, Severity
from .errors import ParseError, StealthCheckError

MONTHS = ["Jan", "Feb", "Mar", "Apr", "May", "Jun", "Jul", "Aug", "Sep", "Oct", "Nov", "Dec"]
_MONTH_MAP = {name: index + 1 for index, name in enumerate(MONTHS)}

# format: "%h %l %u %t \"%r\" %>s %b \"%{Referer}i\" \"%{User-agent}i\""
_ACCESS_PATTERN = re.compile(
    r'^(?P<client_ip>\S+) (?P<ident>\S+) (?P<user>\S+) '
    r'\[(?P<timestamp>[^\]]+)\] '
    r'"(?P<request>(?:[^"\\]|\\.)*)" '
    r'(?P<status>\d{3}) (?P<body_bytes>\d+|-) '
    r'"(?P<referer>(?:[^"\\]|\\.)*)" '
    r'"(?P<user_agent>(?:[^"\\]|\\.)*)"$'
)

# [15/Aug/2024:20:21:59 +0000]
_ACCESS_TIME_PATTERN = re.compile(
    r'^(?P<day>\d{2})/(?P<month>[A-Z][a-z]{2})/(?P<year>\d{4}):'
    r'(?P<hour>\d{2}):(?P<minute>\d{2}):(?P<second>\d{2}) (?P<offset>[+-]\d{4})$'
)

_ALERT_HEADER_PATTERN = re.compile(r'^\*\* Alert (?P<timestamp>\d+\.\d+): (?:(?P<action>\S+) +)?- (?P<groups>.*)$')
_ALERT_ORIGIN_PATTERN = re.compile(
    r'^(?P<date>\d{4} [A-Z][a-z]{2} \d{2} \d{2}:\d{2}:\d{2}) (?P<hostname>.*?)->(?P<source_path>.*)$'
)
_ALERT_RULE_PATTERN = re.compile(r"^Rule: (?P<rule_id>\d+) \(level (?P<level>\d+)\) -> '(?P<description>.*)'$")
_CONTROL_PATTERN = re.compile(r'[\x00-\x1f\x7f]')


@dataclass(frozen=True)
class ParseIssue:
    """Where and why a line or block was rejected."""

    line_number: int
    reason: str
    offending_text: str

    def __post_init__(self) -> None:
        if self.line_number < 1:
            raise ValueError(f"line numbers start at 1, got {self.line_number}")


def _dash(value: str) -> Optional[str]:
    return None if value == "-" else value


def _parse_access_time(text: str) -> datetime:
    match = _ACCESS_TIME_PATTERN.match(text)
    if not match:
        raise ValueError(f"unrecognised timestamp [{text}]")
    month = _MONTH_MAP.get(match.group("month"))
    if month is None:
        raise ValueError(f"unknown month {match.group('month')!r}")
    offset = match.group("offset")
    delta = timedelta(hours=int(offset[1:3]), minutes=int(offset[3:5]))
    zone = timezone(-delta if offset[0] == "-" else delta)
    return datetime(int(match.group("year")), month, int(match.group("day")), int(match.group("hour")),
                    int(match.group("minute")), int(match.group("second")), tzinfo=zone)


def parse_access_line(line: Union[str, bytes], line_number: int = 1) -> AccessEvent:
    """
    Parse one combined-format access log line.

    :param line: Log line without its trailing newline; bytes are decoded as UTF-8 with replacement
    :type line: Union[str, bytes]
    :param line_number: Line number reported in a parse error
    :type line_number: int
    :return: The access event
    :rtype: AccessEvent
    :raises ParseError: If the line is not in combined format
    """
    if isinstance(line, bytes):
        line = line.decode("utf-8", "replace")

    match = _ACCESS_PATTERN.match(line)
    if not match:
        raise ParseError(ParseIssue(line_number, "not a combined log format line", line))

    request = match.group("request").split(" ")
    if len(request) != 3:
        raise ParseError(ParseIssue(line_number, "request line is not 'METHOD URL PROTOCOL'", line))
    method, url, protocol_version = request

    try:
        body_bytes = match.group("body_bytes")
        return AccessEvent(
            client_ip=ipaddress.ip_address(match.group("client_ip")),
            ident=_dash(match.group("ident")),
            user=_dash(match.group("user")),
            timestamp=_parse_access_time(match.group("timestamp")),
            method=method,
            url=url,
            protocol_version=protocol_version,
            status=int(match.group("status")),
            body_bytes=None if body_bytes == "-" else int(body_bytes),
            referer=_dash(match.group("referer")),
            user_agent=_dash(match.group("user_agent")),
        )
    except (ValueError, StealthCheckError) as e:
        raise ParseError(ParseIssue(line_number, str(e), line)) from e


def parse_access_log(text: str) -> Tuple[List[AccessEvent], List[ParseIssue]]:
    """
    Parse a whole access log leniently, skipping blank lines.

    :param text: Log file content
    :type text: str
    :return: Parsed events in file order and the issues for rejected lines
    :rtype: Tuple[List[AccessEvent], List[ParseIssue]]
    """
    events: List[AccessEvent] = []
    issues: List[ParseIssue] = []
    for number, line in enumerate(text.split("\n"), start=1):
        line = line.rstrip("\r")
        if not line.strip():
            continue
        try:
            events.append(parse_access_line(line, number))
        except ParseError as e:
            issues.append(e.issue)
    return events, issues


def escape_log_text(text: str) -> str:
    """
    Write control characters as ``\\xhh``, the way web servers log request data.

    :param text: Field text
    :type text: str
    :return: Text without line breaks or other control characters
    :rtype: str
    """
    return _CONTROL_PATTERN.sub(lambda m: f"\\x{ord(m.group()):02x}", text)


def render_access_line(event: AccessEvent) -> str:
    """
    Render an access event back to its combined-format line.

    Control characters in the text fields are escaped, so the line stays one line.

    :param event: Event to render
    :type event: AccessEvent
    :return: Log line without trailing newline
    :rtype: str
    """
    stamp = event.timestamp
    when = f"{stamp.day:02d}/{MONTHS[stamp.month - 1]}/{stamp.year:04d}:{stamp:%H:%M:%S} {stamp:%z}"
    body = "-" if event.body_bytes is None else str(event.body_bytes)
    ident, user, url, protocol_version, referer, user_agent = (
        escape_log_text(value or "-") for value in
        (event.ident, event.user, event.url, event.protocol_version, event.referer, event.user_agent)
    )
    return (
        f'{event.client_ip} {ident} {user} [{when}] '
        f'"{event.method} {url} {protocol_version}" {event.status} {body} '
        f'"{referer}" "{user_agent}"'
    )


def _clean_text(text: str) -> str:
    try:
        return text.encode("utf-8", "surrogateescape").decode("utf-8", "replace")
    except UnicodeEncodeError:
        return text.encode("utf-8", "replace").decode("utf-8")


def _split_blocks(text: str) -> Iterator[Tuple[int, List[str]]]:
    block: List[str] = []
    first_line = 0
    for number, line in enumerate(text.split("\n"), start=1):
        line = line.rstrip("\r")
        if not line.strip():
            if block:
                yield first_line, block
                block = []
            continue
        if line.startswith(ALERT_HEADER_PREFIX) and block:
            yield first_line, block
            block = []
        if not block:
            first_line = number
        block.append(line)
    if block:
        yield first_line, block


def _parse_block(lines: List[str], first_line: int) -> AlertRecord:
    header = _ALERT_HEADER_PATTERN.match(lines[0])
    if not header:
        raise ParseError(ParseIssue(first_line, "block does not start with an alert header", lines[0]))
    if len(lines) < 3:
        raise ParseError(ParseIssue(first_line, "truncated alert block", "\n".join(lines)))

    origin = _ALERT_ORIGIN_PATTERN.match(lines[1])
    if not origin:
        raise ParseError(ParseIssue(first_line + 1, "invalid date/host line", lines[1]))
    rule = _ALERT_RULE_PATTERN.match(lines[2])
    if not rule:
        raise ParseError(ParseIssue(first_line + 2, "invalid rule line", lines[2]))

    rest = lines[3:]
    src_ip = None
    if rest and rest[0].startswith(SRC_IP_PREFIX):
        try:
            src_ip = ipaddress.ip_address(rest[0][len(SRC_IP_PREFIX):].strip())
        except ValueError:
            raise ParseError(ParseIssue(first_line + 3, "invalid source address", rest[0]))
        rest = rest[1:]

    groups = header.group("groups")
    try:
        return AlertRecord(
            timestamp=AlertTimestamp.parse(header.group("timestamp")),
            rule_id=int(rule.group("rule_id")),
            severity=Severity(int(rule.group("level"))),
            description=_clean_text(rule.group("description")),
            groups=tuple(groups.split(",")) if groups else (),
            source_path=origin.group("source_path"),
            hostname=origin.group("hostname"),
            src_ip=src_ip,
            raw_event="\n".join(rest) if rest else None,
            action=header.group("action"),
        )
    except (ValueError, StealthCheckError) as e:
        raise ParseError(ParseIssue(first_line, str(e), "\n".join(lines))) from e


def parse_wazuh_alert_stream(text: Union[str, bytes],
                             strict: bool = False) -> Tuple[List[AlertRecord], List[ParseIssue]]:
    """
    Parse an alert file into records, in file order.

    Malformed blocks are skipped and reported as issues unless ``strict`` is set.

    :param text: Alert file content; bytes keep invalid UTF-8 verbatim in raw events
    :type text: Union[str, bytes]
    :param strict: Raise on the first malformed block instead of collecting issues
    :type strict: bool
    :return: Parsed alerts and the issues for skipped blocks
    :rtype: Tuple[List[AlertRecord], List[ParseIssue]]
    :raises ParseError: In strict mode, for the first malformed block
    """
    if isinstance(text, bytes):
        text = text.decode("utf-8", "surrogateescape")

    records: List[AlertRecord] = []
    issues: List[ParseIssue] = []
    for first_line, lines in _split_blocks(text):
        try:
            records.append(_parse_block(lines, first_line))
        except ParseError as e:
            if strict:
                raise
            issues.append(e.issue)
    return records, issues


def render_alert_block(alert: AlertRecord) -> str:
    """
    Render an alert as a block of the alert file, without trailing blank line.

    :param alert: Alert to render
    :type alert: AlertRecord
    :return: Multi-line block text
    :rtype: str
    """
    action = f"{alert.action}  " if alert.action else ""
    when = datetime.fromtimestamp(alert.timestamp.epoch, timezone.utc)
    date = f"{when.year:04d} {MONTHS[when.month - 1]} {when.day:02d} {when:%H:%M:%S}"

    lines = [
        f"** Alert {alert.timestamp}: {action}- {','.join(alert.groups)}",
        f"{date} {alert.hostname}->{alert.source_path}",
        f"Rule: {alert.rule_id} (level {alert.severity.level}) -> '{alert.description}'",
    ]
    if alert.src_ip is not None:
        lines.append(f"{SRC_IP_PREFIX}{alert.src_ip}")
    if alert.raw_event:
        lines.append(alert.raw_event)
    return "\n".join(lines)
