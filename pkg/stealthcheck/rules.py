"""
Severity-leveled detection rules over web access events.

A rule fires when every condition it sets holds: method equality, substring containment
in the request URL, and status within an inclusive range. URL matching can look through
percent-encoding up to a configured depth.
"""

from dataclasses import dataclass, field
from typing import Any, Dict, Iterable, List, Optional, Tuple
from urllib.parse import unquote

import json5

from .alerts import (SEVERITY_CEILING, AccessEvent, AlertRecord, AlertTimestamp, Severity, check_alert_groups,
                     check_single_line)
from .errors import InvalidEventError, InvalidSeverityError, RulesetError
from .parsers import render_access_line

# Alerts at or above this level are mailed by the IDS and carry the "mail" action
MAIL_ALERT_LEVEL = 12
WEB_ERROR_LEVEL = 5
DEFAULT_WEB_ERROR_STATUSES = (400, 404)
MAX_DECODE_DEPTH = 4


@dataclass(frozen=True)
class NormalizationPolicy:
    """
    How request URLs are normalized before substring matching.

    :param percent_decode_depth: Number of percent-decoding passes, 0 to 4
    :type percent_decode_depth: int
    :param case_insensitive: Fold URL and pattern to lower case
    :type case_insensitive: bool
    """

    percent_decode_depth: int = 0
    case_insensitive: bool = False

    def __post_init__(self) -> None:
        if not 0 <= self.percent_decode_depth <= MAX_DECODE_DEPTH:
            raise RulesetError(f"percent_decode_depth must be within 0..{MAX_DECODE_DEPTH}, "
                               f"got {self.percent_decode_depth}")


@dataclass(frozen=True)
class DetectionRule:
    """One detection rule; unset conditions always hold."""

    id: int
    severity: Severity
    description: str
    method: Optional[str] = None
    url_substring: str = ""
    status_range: Optional[Tuple[int, int]] = None
    parent_id: Optional[int] = None
    groups: Tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if not self.description:
            raise RulesetError(f"rule {self.id}: description must not be empty")
        if self.method is None and not self.url_substring and self.status_range is None:
            raise RulesetError(f"rule {self.id}: needs at least one of method, url_substring, status range")
        if self.status_range is not None:
            low, high = self.status_range
            if not 100 <= low <= high <= 599:
                raise RulesetError(f"rule {self.id}: invalid status range {low}..{high}")
        try:
            check_single_line("description", self.description)
            check_alert_groups(self.groups)
        except InvalidEventError as e:
            raise RulesetError(f"rule {self.id}: {e}") from e

    def matches(self, event: AccessEvent, url_stages: List[str], case_insensitive: bool = False) -> bool:
        """
        Check the rule against an event whose URL decoding stages are already computed.

        :param event: Access event
        :type event: AccessEvent
        :param url_stages: The logged URL followed by each decoding pass
        :type url_stages: List[str]
        :param case_insensitive: Whether stages were case folded
        :type case_insensitive: bool
        :return: True if every set condition holds
        :rtype: bool
        """
        if self.method is not None and self.method != event.method:
            return False
        if self.status_range is not None and not self.status_range[0] <= event.status <= self.status_range[1]:
            return False
        if self.url_substring:
            pattern = self.url_substring.lower() if case_insensitive else self.url_substring
            return any(pattern in stage for stage in url_stages)
        return True


@dataclass(frozen=True)
class Ruleset:
    """Ordered, validated rules plus the URL normalization policy."""

    rules: Tuple[DetectionRule, ...]
    policy: NormalizationPolicy = field(default_factory=NormalizationPolicy)

    def __post_init__(self) -> None:
        seen = set()
        for rule in self.rules:
            if rule.id in seen:
                raise RulesetError(f"rule {rule.id}: duplicate rule id")
            seen.add(rule.id)
        for rule in self.rules:
            if rule.parent_id is not None and rule.parent_id not in seen:
                raise RulesetError(f"rule {rule.id}: parent rule {rule.parent_id} is not defined")

    def __len__(self) -> int:
        return len(self.rules)

    def get(self, rule_id: int) -> Optional[DetectionRule]:
        for rule in self.rules:
            if rule.id == rule_id:
                return rule
        return None


def decode_stages(raw: str, policy: NormalizationPolicy) -> List[str]:
    """
    List the logged URL and every percent-decoding pass up to the policy depth.

    Decoding stops early at a fixed point. Invalid escapes are left verbatim.

    :param raw: URL as logged
    :type raw: str
    :param policy: Normalization policy
    :type policy: NormalizationPolicy
    :return: Stages, the first being the (case folded) logged URL
    :rtype: List[str]
    """
    stages = [raw]
    current = raw
    for _ in range(policy.percent_decode_depth):
        decoded = unquote(current, errors="surrogateescape")
        if decoded == current:
            break
        stages.append(decoded)
        current = decoded
    if policy.case_insensitive:
        stages = [stage.lower() for stage in stages]
    return stages


def normalize_url(raw: str, policy: NormalizationPolicy) -> str:
    """
    Apply the normalization policy to a logged URL.

    :param raw: URL as logged
    :type raw: str
    :param policy: Normalization policy
    :type policy: NormalizationPolicy
    :return: URL after the last decoding pass and optional case folding
    :rtype: str
    """
    return decode_stages(raw, policy)[-1]


def evaluate(event: AccessEvent, ruleset: Ruleset, now: float, source_path: str = "",
             hostname: str = "") -> List[AlertRecord]:
    """
    Raise one alert per rule matching the event, in ruleset order.

    :param event: Access event to check
    :type event: AccessEvent
    :param ruleset: Rules and normalization policy
    :type ruleset: Ruleset
    :param now: Alert time, epoch seconds
    :type now: float
    :param source_path: Log file the event was read from
    :type source_path: str
    :param hostname: IDS host name for the alert
    :type hostname: str
    :return: Alerts carrying the rule's id, severity and description
    :rtype: List[AlertRecord]
    """
    stages = decode_stages(event.url, ruleset.policy)
    raw_event = render_access_line(event)
    alerts = []
    for rule in ruleset.rules:
        if not rule.matches(event, stages, ruleset.policy.case_insensitive):
            continue
        alerts.append(AlertRecord(
            timestamp=AlertTimestamp(int(now), len(alerts)),
            rule_id=rule.id,
            severity=rule.severity,
            description=rule.description,
            groups=rule.groups,
            source_path=source_path,
            hostname=hostname,
            src_ip=event.client_ip,
            raw_event=raw_event,
            action="mail" if rule.severity.level >= MAIL_ALERT_LEVEL else None,
        ))
    return alerts


def builtin_rule_id(status: int) -> int:
    """
    Id of the built-in web error rule for a status: 31100+ for 4xx, 31200+ for 5xx.

    :param status: HTTP status, 400 to 599
    :type status: int
    :return: Rule id
    :rtype: int
    """
    if not 400 <= status <= 599:
        raise RulesetError(f"built-in web error rules cover 4xx/5xx only, got {status}")
    return 31100 + (status // 100 - 4) * 100 + status % 100


def builtin_web_error_rules(statuses: Iterable[int] = DEFAULT_WEB_ERROR_STATUSES,
                            ceiling: int = SEVERITY_CEILING) -> List[DetectionRule]:
    """
    Build the web error rules, one per status, at level 5.

    :param statuses: HTTP statuses that raise an alert
    :type statuses: Iterable[int]
    :param ceiling: Severity ceiling
    :type ceiling: int
    :return: Rules ordered by status
    :rtype: List[DetectionRule]
    """
    return [
        DetectionRule(
            id=builtin_rule_id(status),
            severity=Severity(WEB_ERROR_LEVEL, ceiling),
            description=f"Web server {status} error code.",
            status_range=(status, status),
            groups=("web", "accesslog"),
        )
        for status in sorted(set(statuses))
    ]


def _optional_int(entry: Dict[str, Any], key: str, rule_name: str) -> Optional[int]:
    value = entry.get(key)
    if value is None:
        return None
    if isinstance(value, bool) or not isinstance(value, int):
        raise RulesetError(f"rule {rule_name}: '{key}' must be an integer")
    return value


def _rule_from_config(entry: Any, ceiling: int) -> DetectionRule:
    if not isinstance(entry, dict):
        raise RulesetError(f"rule entries must be objects, got {entry!r}")
    rule_name = str(entry.get("id", "<missing id>"))
    rule_id = _optional_int(entry, "id", rule_name)
    level = _optional_int(entry, "level", rule_name)
    if rule_id is None or level is None:
        raise RulesetError(f"rule {rule_name}: 'id' and 'level' are required")

    try:
        severity = Severity(level, ceiling)
    except InvalidSeverityError as e:
        raise RulesetError(f"rule {rule_id}: {e}") from e

    status_min = _optional_int(entry, "status_min", rule_name)
    status_max = _optional_int(entry, "status_max", rule_name)
    status_range = None
    if status_min is not None or status_max is not None:
        status_range = (status_min if status_min is not None else status_max,
                        status_max if status_max is not None else status_min)

    groups = entry.get("groups") or ()
    if isinstance(groups, str):
        groups = groups.split(",")

    method = entry.get("method")
    return DetectionRule(
        id=rule_id,
        severity=severity,
        description=str(entry.get("description", "")),
        method=method.upper() if isinstance(method, str) and method else None,
        url_substring=str(entry.get("url_substring") or ""),
        status_range=status_range,  # type: ignore[arg-type]
        parent_id=_optional_int(entry, "parent_id", rule_name),
        groups=tuple(str(group) for group in groups),
    )


def ruleset_from_config(section: Any) -> Ruleset:
    """
    Build a ruleset from a decoded rule section.

    The section is either the array of rules or an object with ``rules`` and the optional
    ``builtin_rules``, ``normalization`` and ``severity_ceiling`` keys.

    :param section: Decoded JSON value
    :type section: Any
    :return: Validated ruleset, built-in web error rules appended unless disabled
    :rtype: Ruleset
    :raises RulesetError: On duplicate ids, out-of-range severities or dangling parents
    """
    if section is None:
        section = {}
    if isinstance(section, list):
        section = {"rules": section}
    if not isinstance(section, dict):
        raise RulesetError("rule section must be an array or an object")

    ceiling = section.get("severity_ceiling", SEVERITY_CEILING)
    if isinstance(ceiling, bool) or not isinstance(ceiling, int) or ceiling < 0:
        raise RulesetError(f"severity_ceiling must be a non-negative integer, got {ceiling!r}")

    entries = section.get("rules") or []
    if not isinstance(entries, list):
        raise RulesetError("'rules' must be an array")
    rules = [_rule_from_config(entry, ceiling) for entry in entries]

    builtin = section.get("builtin_rules") or {}
    normalization = section.get("normalization") or {}
    if not isinstance(builtin, dict) or not isinstance(normalization, dict):
        raise RulesetError("'builtin_rules' and 'normalization' must be objects")
    if builtin.get("enabled", True):
        extra = builtin.get("extra_statuses") or []
        rules.extend(builtin_web_error_rules(list(DEFAULT_WEB_ERROR_STATUSES) + list(extra), ceiling))

    depth = normalization.get("percent_decode_depth", 0)
    if isinstance(depth, bool) or not isinstance(depth, int):
        raise RulesetError(f"percent_decode_depth must be an integer, got {depth!r}")
    policy = NormalizationPolicy(
        percent_decode_depth=depth,
        case_insensitive=bool(normalization.get("case_insensitive", False)),
    )
    return Ruleset(tuple(rules), policy)


def load_ruleset(config_text: str) -> Ruleset:
    """
    Parse and validate the rule section of a challenge configuration.

    :param config_text: JSON text of the rule section
    :type config_text: str
    :return: Validated ruleset
    :rtype: Ruleset
    :raises RulesetError: If the text is not valid JSON or a rule is invalid
    """
    if not config_text.strip():
        return ruleset_from_config(None)
    try:
        section = json5.loads(config_text)
    except ValueError as e:
        raise RulesetError(f"rule section is not valid JSON: {e}") from e
    return ruleset_from_config(section)
