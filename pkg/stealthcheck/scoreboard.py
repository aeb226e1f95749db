"""
Scoreboard export: each team's best verified, documented solve.
"""

import csv
import io
import json
from dataclasses import asdict, dataclass, fields, replace
from typing import Dict, Iterable, List, Optional, Tuple

from .errors import TokenError
from .scoring import EventDecayConfig, apply_event_decay
from .submission import SubmissionReport
from .tokens import verify_final_token
from .writeups import WriteupRegistry

FORMATS = ("csv", "json")


@dataclass(frozen=True)
class ExportRecord:
    team_id: str
    challenge_id: str
    points: int
    detection_score: int
    submitted_at: int
    token_verified: bool


@dataclass(frozen=True)
class ExcludedSubmission:
    team_id: str
    instance_id: str
    submitted_at: int
    reason: str


def _excluded(report: SubmissionReport, reason: str) -> ExcludedSubmission:
    return ExcludedSubmission(report.team_id, report.instance_id, report.submitted_at, reason)


def select_standings(reports: Iterable[SubmissionReport], writeups: WriteupRegistry, secret_key: bytes,
                     event_decay: Optional[EventDecayConfig] = None
                     ) -> Tuple[List[ExportRecord], List[ExcludedSubmission]]:
    """
    Pick the best qualifying submission per team.

    A submission qualifies when its final token verifies, agrees with the report and is
    referenced by a write-up. The best one has the most points, then the earliest time.
    With event decay, points are scaled by the number of teams that qualified earlier.

    :param reports: Submission reports of all instances
    :type reports: Iterable[SubmissionReport]
    :param writeups: Write-up registry
    :type writeups: WriteupRegistry
    :param secret_key: Final-token MAC key
    :type secret_key: bytes
    :param event_decay: Optional event-level decay
    :type event_decay: Optional[EventDecayConfig]
    :return: Standings sorted by points desc, submitted_at asc; excluded submissions
    :rtype: Tuple[List[ExportRecord], List[ExcludedSubmission]]
    """
    documented = writeups.entries()
    qualifying: Dict[Tuple[str, str], List[ExportRecord]] = {}
    excluded: List[ExcludedSubmission] = []

    for report in reports:
        if not report.flag_valid:
            continue
        if not report.final_token:
            excluded.append(_excluded(report, "no final token"))
            continue
        try:
            claims = verify_final_token(report.final_token, secret_key)
        except TokenError as e:
            excluded.append(_excluded(report, f"token does not verify: {e}"))
            continue
        if (claims.team_id, claims.points, claims.detection_score) != \
                (report.team_id, report.points, report.detection_score):
            excluded.append(_excluded(report, "token does not match the report"))
            continue
        if (claims.team_id, report.final_token) not in documented:
            excluded.append(_excluded(report, "no write-up"))
            continue

        record = ExportRecord(claims.team_id, claims.challenge_id, claims.points, claims.detection_score,
                              claims.submitted_at, True)
        qualifying.setdefault((record.team_id, record.challenge_id), []).append(record)

    best = [min(records, key=lambda r: (-r.points, r.submitted_at)) for records in qualifying.values()]

    if event_decay is not None:
        first_solves = sorted(qualifying, key=lambda key: (min(r.submitted_at for r in qualifying[key]), key))
        solve_order = {key: rank for rank, key in enumerate(first_solves)}
        best = [replace(record, points=apply_event_decay(record.points, event_decay,
                                                         solve_order[(record.team_id, record.challenge_id)]))
                for record in best]

    best.sort(key=lambda r: (-r.points, r.submitted_at, r.team_id, r.challenge_id))
    return best, excluded


def render_scoreboard(records: List[ExportRecord], fmt: str) -> str:
    """
    Render standings as CSV (with header) or a JSON array.

    :param records: Standings in output order
    :type records: List[ExportRecord]
    :param fmt: ``csv`` or ``json``
    :type fmt: str
    :return: Text, byte-identical for identical input
    :rtype: str
    """
    if fmt == "json":
        return json.dumps([asdict(record) for record in records], indent=2) + "\n"
    if fmt != "csv":
        raise ValueError(f"unknown export format {fmt!r}, expected one of {', '.join(FORMATS)}")

    names = [f.name for f in fields(ExportRecord)]
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(names)
    for record in records:
        writer.writerow([str(getattr(record, name)).lower() if name == "token_verified"
                         else getattr(record, name) for name in names])
    return buffer.getvalue()


def export_scoreboard(reports: Iterable[SubmissionReport], writeups: WriteupRegistry, secret_key: bytes,
                      fmt: str = "csv", event_decay: Optional[EventDecayConfig] = None) -> str:
    records, _ = select_standings(reports, writeups, secret_key, event_decay)
    return render_scoreboard(records, fmt)
