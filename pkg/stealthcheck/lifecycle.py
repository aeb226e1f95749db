"""
Per-team challenge instance lifecycle.

Every instance moves through a small state machine::

    Provisioning -> Running -> Collecting -> Resetting -> Running
                    Running -> Terminated,  Resetting -> Terminated

Leaving Running always happens behind a log snapshot taken since the instance
last entered Running. All mutations of one instance are serialized by its lock.
"""

import hashlib
import re
import threading
import time
import uuid
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable, Dict, List, Mapping, Optional, Set

from rich.console import Console

from .alerts import LogKind, LogSource
from .config import ChallengeConfig
from .errors import (DuplicateInstanceError, IllegalTransitionError, LifecycleError, MissingSnapshotError,
                     RuntimeDriverError, SnapshotError, UnknownInstanceError)
from .runtime import RuntimeDriver
from .store import InstanceStore
from .submission import SubmissionReport

console = Console()


class InstanceState(str, Enum):
    PROVISIONING = "provisioning"
    RUNNING = "running"
    COLLECTING = "collecting"
    RESETTING = "resetting"
    TERMINATED = "terminated"


LEGAL_TRANSITIONS = {
    (InstanceState.PROVISIONING, InstanceState.RUNNING),
    (InstanceState.RUNNING, InstanceState.COLLECTING),
    (InstanceState.COLLECTING, InstanceState.RESETTING),
    (InstanceState.RESETTING, InstanceState.RUNNING),
    (InstanceState.RUNNING, InstanceState.TERMINATED),
    (InstanceState.RESETTING, InstanceState.TERMINATED),
}


class SnapshotReason(str, Enum):
    FLAG_SUBMITTED = "flag_submitted"
    RESET = "reset"
    TTL_EXPIRY = "ttl_expiry"
    MANUAL = "manual"


@dataclass(frozen=True)
class LogSnapshot:
    """Log files captured from an instance at one instant."""

    snapshot_id: str
    taken_at: int
    reason: SnapshotReason
    files: Mapping[LogSource, str]

    def __post_init__(self) -> None:
        if self.reason in (SnapshotReason.FLAG_SUBMITTED, SnapshotReason.RESET) and not self.files:
            raise SnapshotError(f"snapshot {self.snapshot_id} ({self.reason.value}) captured no files")


@dataclass(frozen=True)
class StateChange:
    """One entry of an instance's state history; ``snapshot_id`` is set when leaving Running."""

    state: InstanceState
    at: int
    snapshot_id: Optional[str] = None


@dataclass
class InstanceRecord:
    instance_id: str
    team_id: str
    challenge_id: str
    state: InstanceState
    started_at: int
    ttl: int
    snapshots: List[LogSnapshot] = field(default_factory=list)
    submissions: List[SubmissionReport] = field(default_factory=list)
    history: List[StateChange] = field(default_factory=list)
    driver_errors: List[str] = field(default_factory=list)
    exit_snapshot_id: Optional[str] = None

    @property
    def is_live(self) -> bool:
        return self.state != InstanceState.TERMINATED

    def expired(self, now: int) -> bool:
        return self.state == InstanceState.RUNNING and now - self.started_at >= self.ttl


def compute_snapshot_id(instance_id: str, ordinal: int, taken_at: int, reason: SnapshotReason,
                        files: Mapping[LogSource, str]) -> str:
    """
    Content-addressed snapshot id over the captured files plus instance, position, time and reason.

    :param instance_id: Owning instance
    :type instance_id: str
    :param ordinal: Number of snapshots the instance already holds
    :type ordinal: int
    :param taken_at: Capture time, epoch seconds
    :type taken_at: int
    :param reason: Why the snapshot was taken
    :type reason: SnapshotReason
    :param files: Captured text by source
    :type files: Mapping[LogSource, str]
    :return: 16 hex characters
    :rtype: str
    """
    digest = hashlib.sha256()
    digest.update(f"{instance_id}\0{ordinal}\0{taken_at}\0{reason.value}\0".encode("utf-8"))
    for source in sorted(files, key=lambda s: s.path):
        digest.update(source.path.encode("utf-8") + b"\0")
        digest.update(files[source].encode("utf-8", "surrogateescape") + b"\0")
    return digest.hexdigest()[:16]


def _source_to_dict(source: LogSource) -> Dict[str, Any]:
    return {"path": source.path, "kind": source.kind.value, "decodes_urls": source.decodes_urls, "name": source.name}


def _source_from_dict(data: Mapping[str, Any]) -> LogSource:
    return LogSource(data["path"], LogKind(data["kind"]), bool(data.get("decodes_urls", False)))


class InstanceManager:
    """
    Owns every instance record of one challenge and drives them through the runtime driver.

    :param config: Challenge configuration
    :type config: ChallengeConfig
    :param driver: Runtime driver hosting the instances
    :type driver: RuntimeDriver
    :param store: Persistence; records are recovered from it on construction
    :type store: Optional[InstanceStore]
    :param clock: Time source, epoch seconds
    :type clock: Callable[[], float]
    """

    def __init__(self, config: ChallengeConfig, driver: RuntimeDriver, store: Optional[InstanceStore] = None,
                 clock: Callable[[], float] = time.time):
        self.config = config
        self.driver = driver
        self.store = store
        self.clock = clock
        self.records: Dict[str, InstanceRecord] = {}
        self._locks: Dict[str, threading.RLock] = {}
        self._lock = threading.RLock()
        self._sessions: Set[str] = set()

        if store is not None:
            self._recover()

    def _now(self) -> int:
        return int(self.clock())

    def _instance_lock(self, instance_id: str) -> threading.RLock:
        with self._lock:
            if instance_id not in self.records:
                raise UnknownInstanceError(f"unknown instance {instance_id}")
            return self._locks[instance_id]

    def _persist(self, record: InstanceRecord, event: Dict[str, Any]) -> None:
        if self.store is not None:
            self.store.append_event(record.instance_id, event)

    def get(self, instance_id: str) -> InstanceRecord:
        with self._lock:
            if instance_id not in self.records:
                raise UnknownInstanceError(f"unknown instance {instance_id}")
            return self.records[instance_id]

    def list_records(self) -> List[InstanceRecord]:
        with self._lock:
            return sorted(self.records.values(), key=lambda r: (r.history[0].at if r.history else 0, r.instance_id))

    def _transition(self, record: InstanceRecord, new_state: InstanceState, at: int) -> None:
        if (record.state, new_state) not in LEGAL_TRANSITIONS:
            raise IllegalTransitionError(
                f"instance {record.instance_id}: {record.state.value} -> {new_state.value} is not allowed")

        snapshot_id = None
        if record.state == InstanceState.RUNNING:
            if record.exit_snapshot_id is None:
                raise MissingSnapshotError(
                    f"instance {record.instance_id}: no snapshot taken since entering running")
            snapshot_id = record.exit_snapshot_id

        record.state = new_state
        record.history.append(StateChange(new_state, at, snapshot_id))
        if new_state == InstanceState.RUNNING:
            record.started_at = at
            record.exit_snapshot_id = None

        self._persist(record, {"event": "transition", "state": new_state.value, "at": at, "snapshot_id": snapshot_id})
        console.print(f"[blue]{record.instance_id}:[/blue] {new_state.value}")

    def provision(self, team_id: str) -> InstanceRecord:
        """
        Start a fresh instance for a team.

        :param team_id: Team the instance belongs to
        :type team_id: str
        :return: Running instance record
        :rtype: InstanceRecord
        :raises DuplicateInstanceError: If the team already has a live instance of this challenge
        :raises RuntimeDriverError: If the driver fails to start; no record is kept
        """
        if not team_id:
            raise LifecycleError("team id must not be empty")

        with self._lock:
            for record in self.records.values():
                if record.team_id == team_id and record.challenge_id == self.config.challenge_id and record.is_live:
                    raise DuplicateInstanceError(f"team {team_id} already has instance {record.instance_id}")

            slug = re.sub(r'[^A-Za-z0-9_-]', '_', team_id)
            instance_id = f"{slug}-{uuid.uuid4().hex[:8]}"
            now = self._now()
            record = InstanceRecord(
                instance_id=instance_id,
                team_id=team_id,
                challenge_id=self.config.challenge_id,
                state=InstanceState.PROVISIONING,
                started_at=now,
                ttl=self.config.ttl_seconds,
                history=[StateChange(InstanceState.PROVISIONING, now)],
            )

            try:
                self.driver.start(instance_id)
            except Exception as e:
                console.print(f"[red]Provisioning {instance_id} failed:[/red] {e}")
                raise RuntimeDriverError(f"driver failed to start {instance_id}: {e}") from e

            self.records[instance_id] = record
            self._locks[instance_id] = threading.RLock()
            self._persist(record, {
                "event": "provisioned",
                "instance_id": instance_id,
                "team_id": team_id,
                "challenge_id": record.challenge_id,
                "ttl": record.ttl,
                "at": now,
            })
            console.print(f"[green]Provisioned[/green] {instance_id} for team {team_id}")
            self._transition(record, InstanceState.RUNNING, now)
            return record

    def _store_snapshot(self, record: InstanceRecord, reason: SnapshotReason, files: Dict[LogSource, str],
                        at: int) -> LogSnapshot:
        snapshot_id = compute_snapshot_id(record.instance_id, len(record.snapshots), at, reason, files)
        snapshot = LogSnapshot(snapshot_id, at, reason, files)
        record.snapshots.append(snapshot)
        if record.state == InstanceState.RUNNING:
            record.exit_snapshot_id = snapshot.snapshot_id

        if self.store is not None:
            self.store.write_snapshot(record.instance_id, snapshot.snapshot_id,
                                      {source.name: text for source, text in files.items()})
        self._persist(record, {
            "event": "snapshot",
            "snapshot_id": snapshot.snapshot_id,
            "taken_at": at,
            "reason": reason.value,
            "sources": [_source_to_dict(source) for source in files],
        })
        console.print(f"[blue]Snapshot[/blue] {snapshot.snapshot_id} of {record.instance_id} ({reason.value})")
        return snapshot

    def snapshot_logs(self, instance_id: str, reason: SnapshotReason, at: Optional[int] = None) -> LogSnapshot:
        """
        Capture every log source of a running or collecting instance.

        :param instance_id: Instance to capture
        :type instance_id: str
        :param reason: Why the snapshot is taken
        :type reason: SnapshotReason
        :param at: Capture time; defaults to now
        :type at: Optional[int]
        :return: The appended snapshot
        :rtype: LogSnapshot
        :raises SnapshotError: If the driver cannot read the logs; state is unchanged
        """
        with self._instance_lock(instance_id):
            record = self.records[instance_id]
            if record.state not in (InstanceState.RUNNING, InstanceState.COLLECTING):
                raise LifecycleError(f"instance {instance_id}: cannot snapshot while {record.state.value}")
            try:
                files = self.driver.fetch_logs(instance_id)
            except Exception as e:
                raise SnapshotError(f"instance {instance_id}: reading logs failed: {e}") from e
            return self._store_snapshot(record, reason, dict(files), self._now() if at is None else at)

    def _exit_snapshot(self, record: InstanceRecord, reason: SnapshotReason, at: int) -> LogSnapshot:
        try:
            return self.snapshot_logs(record.instance_id, reason, at)
        except SnapshotError as e:
            console.print(f"[yellow]{e}; recording an empty snapshot[/yellow]")
            return self._store_snapshot(record, reason, {}, at)

    def _record_driver_error(self, record: InstanceRecord, operation: str, error: Exception) -> None:
        message = f"{operation}: {error}"
        record.driver_errors.append(message)
        self._persist(record, {"event": "driver_error", "message": message, "at": self._now()})
        console.print(f"[red]Driver {operation} failed for {record.instance_id}:[/red] {error}")

    def _stop_driver(self, record: InstanceRecord) -> None:
        try:
            self.driver.stop(record.instance_id)
        except Exception as e:
            self._record_driver_error(record, "stop", e)

    def collect(self, instance_id: str) -> LogSnapshot:
        """
        Take the submission snapshot and move a running instance to Collecting.

        :param instance_id: Instance a flag was submitted on
        :type instance_id: str
        :return: Snapshot with reason flag_submitted
        :rtype: LogSnapshot
        """
        with self._instance_lock(instance_id):
            record = self.records[instance_id]
            if record.state != InstanceState.RUNNING:
                raise IllegalTransitionError(f"instance {instance_id}: cannot collect while {record.state.value}")
            snapshot = self.snapshot_logs(instance_id, SnapshotReason.FLAG_SUBMITTED)
            self._transition(record, InstanceState.COLLECTING, snapshot.taken_at)
            return snapshot

    def record_submission(self, instance_id: str, report: SubmissionReport) -> None:
        with self._instance_lock(instance_id):
            record = self.records[instance_id]
            record.submissions.append(report)
            self._persist(record, {"event": "submission", "report": report.to_dict()})

    def reset(self, instance_id: str) -> InstanceRecord:
        """
        Wipe an instance and start it over with a fresh start time.

        From Running a reset snapshot is taken first; from Collecting the submission
        snapshot already covers the instance. A driver failure terminates the instance.

        :param instance_id: Instance to reset
        :type instance_id: str
        :return: The record, Running again or Terminated on driver failure
        :rtype: InstanceRecord
        :raises IllegalTransitionError: If the instance is neither Running nor Collecting
        """
        with self._instance_lock(instance_id):
            record = self.records[instance_id]
            if record.state == InstanceState.RUNNING:
                snapshot = self.snapshot_logs(instance_id, SnapshotReason.RESET)
                self._transition(record, InstanceState.COLLECTING, snapshot.taken_at)
            elif record.state != InstanceState.COLLECTING:
                raise IllegalTransitionError(f"instance {instance_id}: cannot reset while {record.state.value}")

            now = self._now()
            self._transition(record, InstanceState.RESETTING, now)
            try:
                self.driver.reset(instance_id)
            except Exception as e:
                self._record_driver_error(record, "reset", e)
                self._transition(record, InstanceState.TERMINATED, now)
                self._stop_driver(record)
                return record

            self._transition(record, InstanceState.RUNNING, now)
            return record

    def terminate(self, instance_id: str) -> InstanceRecord:
        """
        Organizer stop: snapshot (manual) then Terminated.

        :param instance_id: Instance to stop
        :type instance_id: str
        :return: The terminated record
        :rtype: InstanceRecord
        """
        with self._instance_lock(instance_id):
            record = self.records[instance_id]
            now = self._now()
            if record.state == InstanceState.RUNNING:
                self._exit_snapshot(record, SnapshotReason.MANUAL, now)
            elif record.state != InstanceState.RESETTING:
                raise IllegalTransitionError(f"instance {instance_id}: cannot terminate while {record.state.value}")
            self._transition(record, InstanceState.TERMINATED, now)
            self._stop_driver(record)
            return record

    def enforce_ttl(self, now: Optional[int] = None) -> List[str]:
        """
        Terminate every running instance whose runtime reached its TTL, snapshot first.

        Instances with an active FlagCheck session are left for the next sweep.

        :param now: Current time; defaults to the clock
        :type now: Optional[int]
        :return: Ids of the instances terminated
        :rtype: List[str]
        """
        now = self._now() if now is None else now
        terminated = []
        with self._lock:
            instance_ids = sorted(self.records)

        for instance_id in instance_ids:
            with self._instance_lock(instance_id):
                record = self.records[instance_id]
                if not record.expired(now):
                    continue
                if instance_id in self._sessions:
                    console.print(f"[yellow]TTL expiry of {instance_id} deferred: session active[/yellow]")
                    continue
                self._exit_snapshot(record, SnapshotReason.TTL_EXPIRY, now)
                self._transition(record, InstanceState.TERMINATED, now)
                self._stop_driver(record)
                console.print(f"[yellow]Terminated {instance_id}:[/yellow] ran {now - record.started_at}s")
                terminated.append(instance_id)
        return terminated

    def begin_session(self, instance_id: str) -> bool:
        """
        Claim the single FlagCheck session slot of a running instance.

        :param instance_id: Instance the client connected to
        :type instance_id: str
        :return: False if a session is already active or the instance is not running
        :rtype: bool
        """
        try:
            instance_lock = self._instance_lock(instance_id)
        except UnknownInstanceError:
            return False
        # the TTL sweep holds the instance lock too; expiry and a session claim never interleave
        with instance_lock, self._lock:
            record = self.records[instance_id]
            if record.state != InstanceState.RUNNING or instance_id in self._sessions:
                return False
            self._sessions.add(instance_id)
            return True

    def end_session(self, instance_id: str) -> None:
        with self._lock:
            self._sessions.discard(instance_id)

    def _recover(self) -> None:
        assert self.store is not None
        for instance_id in self.store.instance_ids():
            record = self._replay(instance_id, self.store.read_events(instance_id))
            if record is not None:
                self.records[instance_id] = record
                self._locks[instance_id] = threading.RLock()

    def _replay(self, instance_id: str, events: List[Dict[str, Any]]) -> Optional[InstanceRecord]:
        assert self.store is not None
        record: Optional[InstanceRecord] = None
        for event in events:
            kind = event.get("event")
            if kind == "provisioned":
                record = InstanceRecord(
                    instance_id=instance_id,
                    team_id=event["team_id"],
                    challenge_id=event["challenge_id"],
                    state=InstanceState.PROVISIONING,
                    started_at=event["at"],
                    ttl=event["ttl"],
                    history=[StateChange(InstanceState.PROVISIONING, event["at"])],
                )
            elif record is None:
                continue
            elif kind == "transition":
                state = InstanceState(event["state"])
                record.state = state
                record.history.append(StateChange(state, event["at"], event.get("snapshot_id")))
                if state == InstanceState.RUNNING:
                    record.started_at = event["at"]
                    record.exit_snapshot_id = None
            elif kind == "snapshot":
                texts = self.store.read_snapshot(instance_id, event["snapshot_id"])
                files = {}
                for entry in event.get("sources", []):
                    files[_source_from_dict(entry)] = texts.get(entry["name"], "")
                record.snapshots.append(LogSnapshot(event["snapshot_id"], event["taken_at"],
                                                    SnapshotReason(event["reason"]), files))
                if record.state == InstanceState.RUNNING:
                    record.exit_snapshot_id = event["snapshot_id"]
            elif kind == "submission":
                record.submissions.append(SubmissionReport.from_dict(event["report"]))
            elif kind == "driver_error":
                record.driver_errors.append(event["message"])

        if record is None:
            console.print(f"[yellow]Ignoring {instance_id}: record has no provisioning event[/yellow]")
        return record


class TtlReaper(threading.Thread):
    """
    Background thread calling ``enforce_ttl`` periodically.

    :param manager: Instance manager to sweep
    :type manager: InstanceManager
    :param interval: Seconds between sweeps
    :type interval: float
    """

    def __init__(self, manager: InstanceManager, interval: float = 30.0):
        super().__init__(name="ttl-reaper", daemon=True)
        self.manager = manager
        self.interval = interval
        self._stop_event = threading.Event()

    def run(self) -> None:
        while not self._stop_event.wait(self.interval):
            try:
                self.manager.enforce_ttl()
            except Exception as e:
                console.print(f"[red]TTL sweep failed:[/red] {e}")

    def stop(self) -> None:
        self._stop_event.set()
