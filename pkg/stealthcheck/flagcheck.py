"""
FlagCheck: the line-protocol service participants submit their flag to.

Server sends ``Please input flag:``, reads one line and answers ``incorrect`` or the
scored transcript ending in the final flag, then resets the instance.
"""

import socketserver
from dataclasses import dataclass, replace
from typing import BinaryIO, List, Optional, Sequence, Tuple

from rich.console import Console

from .config import ChallengeConfig
from .errors import StealthCheckError
from .lifecycle import InstanceManager
from .parsers import render_alert_block
from .submission import SubmissionReport, build_report
from .tokens import issue_final_token

console = Console()

PROMPT = "Please input flag:"
CORRECT = "correct, calculating results"
INCORRECT = "incorrect"
FINAL_FLAG_PREFIX = "final flag: "
MAX_LINE_BYTES = 4096


@dataclass(frozen=True)
class SessionTranscript:
    """Lines the server sent during one session, in order."""

    lines: Tuple[str, ...]

    def render(self) -> bytes:
        return "".join(line + "\n" for line in self.lines).encode("utf-8", "surrogateescape")


def render_transcript(report: SubmissionReport) -> SessionTranscript:
    """
    Build the server side of a session from its report.

    :param report: Submission report, with final token for accepted flags
    :type report: SubmissionReport
    :return: Transcript as sent on the wire
    :rtype: SessionTranscript
    """
    if not report.flag_valid:
        return SessionTranscript((PROMPT, INCORRECT))

    lines: List[str] = [PROMPT, CORRECT]
    for alert in report.alerts:
        lines.extend(render_alert_block(alert).split("\n"))
        lines.append("")
    lines.append(report.summary_line())
    lines.append(f"{FINAL_FLAG_PREFIX}{report.final_token}")
    return SessionTranscript(tuple(lines))


class FlagCheckService:
    """
    Validates flags, scores accepted submissions and triggers resets.

    :param manager: Lifecycle manager owning the instances
    :type manager: InstanceManager
    :param config: Challenge configuration
    :type config: ChallengeConfig
    :param secret_key: Final-token MAC key
    :type secret_key: bytes
    """

    def __init__(self, manager: InstanceManager, config: ChallengeConfig, secret_key: bytes):
        self.manager = manager
        self.config = config
        self.secret_key = secret_key

    def submit(self, instance_id: str, flag: bytes) -> SubmissionReport:
        """
        Check a flag and, when correct, collect, score and sign the submission.

        A correct flag leaves the instance in Collecting; call ``finish`` to reset it.

        :param instance_id: Instance the flag was submitted on
        :type instance_id: str
        :param flag: Submitted flag without line terminator
        :type flag: bytes
        :return: Report; ``flag_valid`` False for a wrong flag
        :rtype: SubmissionReport
        :raises StealthCheckError: If collecting or scoring fails
        """
        record = self.manager.get(instance_id)
        if not self.config.flag.matches(flag):
            console.print(f"[yellow]Incorrect flag on {instance_id}[/yellow]")
            return SubmissionReport(
                flag_valid=False,
                team_id=record.team_id,
                challenge_id=record.challenge_id,
                instance_id=instance_id,
                submitted_at=int(self.manager.clock()),
            )

        snapshot = self.manager.collect(instance_id)
        report = build_report(record, self.config.ruleset, self.config.scoring, snapshot.taken_at,
                              self.config.strict_parsing)
        report = replace(report, final_token=issue_final_token(record.team_id, report, self.secret_key))
        self.manager.record_submission(instance_id, report)
        console.print(f"[green]{record.team_id} solved on {instance_id}:[/green] "
                      f"score {report.detection_score}, {report.points} points")
        return report

    def finish(self, instance_id: str) -> None:
        """Reset the instance after a submission; failures are logged only."""
        try:
            self.manager.reset(instance_id)
        except StealthCheckError as e:
            console.print(f"[red]Reset of {instance_id} after submission failed:[/red] {e}")

    def _send(self, writer: BinaryIO, lines: Sequence[str]) -> None:
        try:
            writer.write("".join(line + "\n" for line in lines).encode("utf-8", "surrogateescape"))
            writer.flush()
        except (OSError, ValueError) as e:
            console.print(f"[yellow]Client went away while sending:[/yellow] {e}")

    def handle_session(self, reader: BinaryIO, writer: BinaryIO, instance_id: str) -> Optional[SubmissionReport]:
        """
        Run one FlagCheck session over a byte stream.

        :param reader: Client-to-server stream
        :type reader: BinaryIO
        :param writer: Server-to-client stream
        :type writer: BinaryIO
        :param instance_id: Instance this service is bound to
        :type instance_id: str
        :return: The report, or None when the session was refused or aborted
        :rtype: Optional[SubmissionReport]
        """
        if not self.manager.begin_session(instance_id):
            console.print(f"[yellow]Refused session on {instance_id}: busy or not running[/yellow]")
            return None

        try:
            self._send(writer, [PROMPT])
            try:
                line = reader.readline(MAX_LINE_BYTES)
            except OSError as e:
                console.print(f"[yellow]Session on {instance_id} aborted:[/yellow] {e}")
                return None
            if not line.endswith(b"\n"):
                console.print(f"[yellow]Session on {instance_id} aborted: client disconnected[/yellow]")
                return None

            flag = line[:-1]
            if flag.endswith(b"\r"):
                flag = flag[:-1]

            if not self.config.flag.matches(flag):
                report = self.submit(instance_id, flag)
                self._send(writer, [INCORRECT])
                return report

            self._send(writer, [CORRECT])
            try:
                report = self.submit(instance_id, flag)
            except StealthCheckError as e:
                console.print(f"[red]Scoring submission on {instance_id} failed:[/red] {e}")
                self.finish(instance_id)
                return None

            self._send(writer, render_transcript(report).lines[2:])
            self.finish(instance_id)
            return report
        finally:
            self.manager.end_session(instance_id)


class FlagCheckHandler(socketserver.StreamRequestHandler):
    server: "FlagCheckServer"

    def handle(self) -> None:
        host, port = self.client_address[:2]
        console.print(f"[blue]Connection from {host}:{port}[/blue] to {self.server.instance_id}")
        self.server.service.handle_session(self.rfile, self.wfile, self.server.instance_id)


class FlagCheckServer(socketserver.ThreadingTCPServer):
    """
    Threaded TCP server answering FlagCheck sessions for one instance.

    :param address: (host, port) to bind; port 0 picks a free port
    :type address: Tuple[str, int]
    :param service: Service handling the sessions
    :type service: FlagCheckService
    :param instance_id: Instance the port belongs to
    :type instance_id: str
    """

    allow_reuse_address = True
    daemon_threads = True

    def __init__(self, address: Tuple[str, int], service: FlagCheckService, instance_id: str):
        self.service = service
        self.instance_id = instance_id
        super().__init__(address, FlagCheckHandler)
