"""
Per-instance timelines: runtime periods, unsolved alert captures and solves.
"""

import csv
import io
import json
import time
from dataclasses import asdict, dataclass
from typing import Iterable, List, Optional, Tuple

from .alerts import alerts_in_window, detection_score
from .lifecycle import InstanceRecord, InstanceState
from .rules import Ruleset
from .submission import collect_alerts

RUNTIME = "runtime"
UNSOLVED_ALERTS = "unsolved_alerts"
SOLVED_SUBMISSION = "solved_submission"

CSV_FIELDS = ("instance_id", "team_id", "kind", "start", "end", "annotation")


@dataclass(frozen=True)
class TimelineSegment:
    instance_id: str
    team_id: str
    kind: str
    start: int
    end: int
    annotation: str = ""


@dataclass(frozen=True)
class TimelineReport:
    segments: Tuple[TimelineSegment, ...] = ()

    def to_json(self) -> str:
        return json.dumps({"segments": [asdict(segment) for segment in self.segments]}, indent=2) + "\n"

    def to_csv(self) -> str:
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(CSV_FIELDS)
        for segment in self.segments:
            writer.writerow([getattr(segment, name) for name in CSV_FIELDS])
        return buffer.getvalue()


def running_periods(record: InstanceRecord, now: int) -> List[Tuple[int, int]]:
    """
    Periods the instance spent running, closed by the next reset or termination.

    :param record: Instance record
    :type record: InstanceRecord
    :param now: End of a period still open
    :type now: int
    :return: (start, end) pairs in time order
    :rtype: List[Tuple[int, int]]
    """
    periods = []
    opened: Optional[int] = None
    for change in record.history:
        if change.state == InstanceState.RUNNING:
            opened = change.at
        elif change.state in (InstanceState.RESETTING, InstanceState.TERMINATED) and opened is not None:
            periods.append((opened, change.at))
            opened = None
    if opened is not None:
        periods.append((opened, max(opened, now)))
    return periods


def _instance_segments(record: InstanceRecord, now: int, ruleset: Optional[Ruleset]) -> List[TimelineSegment]:
    segments = []
    # a reset in the same second as the submission starts the next period at that second;
    # submissions and snapshots belong to the first period containing them
    pending_solves = [report for report in record.submissions if report.flag_valid]
    pending_snapshots = list(record.snapshots)
    for start, end in running_periods(record, now):
        segments.append(TimelineSegment(record.instance_id, record.team_id, RUNTIME, start, end))

        solves = [report for report in pending_solves if start <= report.submitted_at <= end]
        captured = [snapshot for snapshot in pending_snapshots if start <= snapshot.taken_at <= end]
        pending_solves = [report for report in pending_solves if report not in solves]
        pending_snapshots = [snapshot for snapshot in pending_snapshots if snapshot not in captured]

        for report in solves:
            segments.append(TimelineSegment(record.instance_id, record.team_id, SOLVED_SUBMISSION,
                                            report.submitted_at, report.submitted_at,
                                            f"{report.detection_score} ({report.points})"))
        if solves:
            continue

        for snapshot in reversed(captured):
            alerts = alerts_in_window(collect_alerts(snapshot.files, ruleset), start, snapshot.taken_at)
            if alerts:
                segments.append(TimelineSegment(record.instance_id, record.team_id, UNSOLVED_ALERTS,
                                                start, snapshot.taken_at,
                                                f"{len(alerts)} alerts, score {detection_score(alerts)}"))
                break
    return segments


def generate_timeline(records: Iterable[InstanceRecord], now: Optional[int] = None,
                      ruleset: Optional[Ruleset] = None) -> TimelineReport:
    """
    Build the timeline of a set of instances.

    A running period with a valid submission gets one solved marker per submission,
    annotated ``detection (points)``. A period without one gets an unsolved_alerts
    segment up to the latest snapshot that captured alerts.

    :param records: Instance records
    :type records: Iterable[InstanceRecord]
    :param now: Closing time of periods still running; defaults to the current time
    :type now: Optional[int]
    :param ruleset: Rules for snapshots holding access logs only
    :type ruleset: Optional[Ruleset]
    :return: Segments grouped by instance in start order
    :rtype: TimelineReport
    """
    now = int(time.time()) if now is None else now
    ordered = sorted(records, key=lambda r: (r.history[0].at if r.history else 0, r.instance_id))
    segments: List[TimelineSegment] = []
    for record in ordered:
        segments.extend(_instance_segments(record, now, ruleset))
    return TimelineReport(tuple(segments))
