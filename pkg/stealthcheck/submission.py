"""
Flag submissions: the challenge flag, the submission report and the collect → parse → score pipeline.
"""

import hmac
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Any, Dict, List, Mapping, Optional, Tuple, Union

from .alerts import AlertRecord, LogKind, LogSource, alerts_in_window, detection_score
from .errors import InvalidEventError, ParseError, ReportError
from .parsers import parse_access_log, parse_wazuh_alert_stream, render_alert_block
from .rules import Ruleset, evaluate
from .scoring import PointsAward, ScoringParams, points_for_detection

if TYPE_CHECKING:
    from .lifecycle import InstanceRecord

SUMMARY_TEMPLATE = "You had {count} alerts and a score of {score} (the lower the better ;)) ..."


@dataclass(frozen=True)
class ChallengeFlag:
    """The first-stage flag planted in the instance."""

    value: str = field(repr=False)

    def __post_init__(self) -> None:
        if not self.value:
            raise InvalidEventError("flag must not be empty")
        if any(char.isspace() or not char.isprintable() for char in self.value):
            raise InvalidEventError("flag must not contain whitespace or control characters")

    def matches(self, submitted: Union[str, bytes]) -> bool:
        """
        Compare a submission against the flag in constant time, exactly.

        :param submitted: Submitted flag, line terminator already removed
        :type submitted: Union[str, bytes]
        :return: True on an exact match
        :rtype: bool
        """
        if isinstance(submitted, str):
            submitted = submitted.encode("utf-8", "surrogateescape")
        return hmac.compare_digest(submitted, self.value.encode("utf-8"))


@dataclass(frozen=True)
class SubmissionReport:
    """Outcome of one flag submission."""

    flag_valid: bool
    team_id: str
    submitted_at: int
    alerts: Tuple[AlertRecord, ...] = ()
    detection_score: int = 0
    award: Optional[PointsAward] = None
    final_token: Optional[str] = None
    challenge_id: str = ""
    instance_id: str = ""
    snapshot_id: Optional[str] = None

    @property
    def points(self) -> int:
        return self.award.points if self.award else 0

    def summary_line(self) -> str:
        return SUMMARY_TEMPLATE.format(count=len(self.alerts), score=self.detection_score)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "flag_valid": self.flag_valid,
            "team_id": self.team_id,
            "challenge_id": self.challenge_id,
            "instance_id": self.instance_id,
            "snapshot_id": self.snapshot_id,
            "submitted_at": self.submitted_at,
            "alerts": [render_alert_block(alert) for alert in self.alerts],
            "detection_score": self.detection_score,
            "award": None if self.award is None else {
                "detection_score": self.award.detection_score,
                "effective_excess": self.award.effective_excess,
                "points": self.award.points,
            },
            "final_token": self.final_token,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "SubmissionReport":
        alerts, _ = parse_wazuh_alert_stream("\n\n".join(data.get("alerts") or []))
        award = data.get("award")
        return cls(
            flag_valid=bool(data["flag_valid"]),
            team_id=data["team_id"],
            challenge_id=data.get("challenge_id", ""),
            instance_id=data.get("instance_id", ""),
            snapshot_id=data.get("snapshot_id"),
            submitted_at=int(data["submitted_at"]),
            alerts=tuple(alerts),
            detection_score=int(data.get("detection_score", 0)),
            award=PointsAward(**award) if award else None,
            final_token=data.get("final_token"),
        )


def collect_alerts(files: Mapping[LogSource, str], ruleset: Optional[Ruleset] = None, strict: bool = False,
                   hostname: str = "") -> List[AlertRecord]:
    """
    Gather the alerts contained in a set of captured log files.

    Alert-stream files are authoritative. Only when none was captured are the access
    logs run through the ruleset instead, so nothing is counted twice.

    :param files: Captured file contents by source
    :type files: Mapping[LogSource, str]
    :param ruleset: Rules used for access logs when no alert file is present
    :type ruleset: Optional[Ruleset]
    :param strict: Fail on the first parse issue
    :type strict: bool
    :param hostname: Host name for alerts raised from access logs
    :type hostname: str
    :return: Alerts in source order, file order within a source
    :rtype: List[AlertRecord]
    :raises ParseError: In strict mode, on the first malformed block or line
    """
    alert_sources = [source for source in files if source.kind == LogKind.WAZUH_ALERTS]
    alerts: List[AlertRecord] = []
    if alert_sources:
        for source in alert_sources:
            records, _ = parse_wazuh_alert_stream(files[source], strict=strict)
            alerts.extend(records)
        return alerts

    if ruleset is None:
        return alerts
    for source in files:
        if source.kind != LogKind.ACCESS_LOG:
            continue
        events, issues = parse_access_log(files[source])
        if strict and issues:
            raise ParseError(issues[0])
        for event in events:
            alerts.extend(evaluate(event, ruleset, event.timestamp.timestamp(), source.path, hostname))
    return alerts


def build_report(instance: "InstanceRecord", ruleset: Ruleset, params: ScoringParams, at: int,
                 strict: bool = False) -> SubmissionReport:
    """
    Score the snapshot taken at ``at`` over the window from instance start to ``at``.

    The returned report carries no final token yet; the FlagCheck service binds one.

    :param instance: Instance the flag was submitted on
    :type instance: InstanceRecord
    :param ruleset: Rules for snapshots without an alert file
    :type ruleset: Ruleset
    :param params: Scoring parameters
    :type params: ScoringParams
    :param at: Submission instant, epoch seconds
    :type at: int
    :param strict: Turn parse issues into a report error
    :type strict: bool
    :return: The submission report
    :rtype: SubmissionReport
    :raises ReportError: If no snapshot was taken at ``at`` or strict parsing fails
    """
    snapshot = next((snap for snap in reversed(instance.snapshots) if snap.taken_at == at), None)
    if snapshot is None:
        raise ReportError(f"instance {instance.instance_id} has no log snapshot at {at}")

    try:
        alerts = collect_alerts(snapshot.files, ruleset, strict)
    except ParseError as e:
        raise ReportError(f"snapshot {snapshot.snapshot_id}: {e}") from e

    counted = alerts_in_window(alerts, instance.started_at, at)
    score = detection_score(counted)
    return SubmissionReport(
        flag_valid=True,
        team_id=instance.team_id,
        challenge_id=instance.challenge_id,
        instance_id=instance.instance_id,
        snapshot_id=snapshot.snapshot_id,
        submitted_at=at,
        alerts=tuple(counted),
        detection_score=score,
        award=points_for_detection(score, params),
    )
