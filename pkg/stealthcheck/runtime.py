"""
Runtime drivers: where a challenge instance actually runs.

The simulated runtime stands in for the container: it keeps each instance's log files,
writes the IDS startup alert on boot and plays the IDS for injected access events.
"""

import os
import threading
import time
from abc import ABC, abstractmethod
from dataclasses import replace
from typing import Callable, Dict, List, Optional, Sequence
from urllib.parse import unquote

from .alerts import AccessEvent, AlertRecord, AlertTimestamp, LogKind, LogSource, Severity
from .errors import RuntimeDriverError
from .parsers import render_access_line, render_alert_block
from .rules import Ruleset, evaluate

STARTUP_RULE_ID = 502
STARTUP_LEVEL = 3
STARTUP_GROUPS = ("ossec", "pci_dss_10.6.1", "gpg13_10.1", "gdpr_IV_35.7.d", "hipaa_164.312.b",
                  "nist_800_53_AU.6", "tsc_CC7.2", "tsc_CC7.3", "")

_STATE_FILE = ".state"


def startup_alert(hostname: str, at: float, sequence: int = 0) -> AlertRecord:
    """
    The alert the IDS raises when it starts; every fresh instance shows it.

    :param hostname: IDS host name
    :type hostname: str
    :param at: Boot time, epoch seconds
    :type at: float
    :param sequence: Alert file offset
    :type sequence: int
    :return: The level 3 startup alert
    :rtype: AlertRecord
    """
    return AlertRecord(
        timestamp=AlertTimestamp(int(at), sequence),
        rule_id=STARTUP_RULE_ID,
        severity=Severity(STARTUP_LEVEL),
        description="Wazuh server started.",
        groups=STARTUP_GROUPS,
        source_path="wazuh-monitord",
        hostname=hostname,
        raw_event="ossec: Manager started.",
    )


class RuntimeDriver(ABC):
    """Interface between the lifecycle manager and whatever hosts the instances."""

    @abstractmethod
    def start(self, instance_id: str) -> None:
        """Boot a fresh instance."""

    @abstractmethod
    def stop(self, instance_id: str) -> None:
        """Stop the instance; its logs stay readable."""

    @abstractmethod
    def fetch_logs(self, instance_id: str) -> Dict[LogSource, str]:
        """Read every configured log source, empty text for sources with no content."""

    @abstractmethod
    def reset(self, instance_id: str) -> None:
        """Wipe and reboot the instance."""


class SimulatedRuntime(RuntimeDriver):
    """
    In-process runtime serving scripted log content.

    With ``workdir`` set, logs live in ``<workdir>/<instance_id>/<source name>`` so that
    separate processes see the same instances.

    :param log_sources: Sources every instance exposes
    :type log_sources: Sequence[LogSource]
    :param ruleset: Rules the simulated IDS applies to injected access events
    :type ruleset: Optional[Ruleset]
    :param hostname: IDS host name written into alerts
    :type hostname: str
    :param clock: Time source, epoch seconds
    :type clock: Callable[[], float]
    :param workdir: Directory mirroring instance logs
    :type workdir: Optional[str]
    """

    def __init__(self, log_sources: Sequence[LogSource], ruleset: Optional[Ruleset] = None,
                 hostname: str = "challenge", clock: Callable[[], float] = time.time,
                 workdir: Optional[str] = None):
        self.log_sources = list(log_sources)
        self.ruleset = ruleset
        self.hostname = hostname
        self.clock = clock
        self.workdir = workdir
        self._logs: Dict[str, Dict[LogSource, str]] = {}
        self._running: Dict[str, bool] = {}
        self._lock = threading.RLock()

        self.alert_source = next((s for s in self.log_sources if s.kind == LogKind.WAZUH_ALERTS), None)

    def _instance_dir(self, instance_id: str) -> str:
        assert self.workdir is not None
        return os.path.join(self.workdir, instance_id)

    def _known(self, instance_id: str) -> bool:
        if self.workdir is not None:
            return os.path.isdir(self._instance_dir(instance_id))
        return instance_id in self._logs

    def _is_running(self, instance_id: str) -> bool:
        if self.workdir is not None:
            state_path = os.path.join(self._instance_dir(instance_id), _STATE_FILE)
            if not os.path.exists(state_path):
                return False
            with open(state_path, 'r', encoding='utf-8') as f:
                return f.read().strip() == "running"
        return self._running.get(instance_id, False)

    def _set_running(self, instance_id: str, running: bool) -> None:
        if self.workdir is not None:
            os.makedirs(self._instance_dir(instance_id), exist_ok=True)
            with open(os.path.join(self._instance_dir(instance_id), _STATE_FILE), 'w', encoding='utf-8') as f:
                f.write("running" if running else "stopped")
        self._running[instance_id] = running

    def _read(self, instance_id: str, source: LogSource) -> str:
        if self.workdir is not None:
            path = os.path.join(self._instance_dir(instance_id), source.name)
            if not os.path.exists(path):
                return ""
            with open(path, 'r', encoding='utf-8', errors='surrogateescape', newline='') as f:
                return f.read()
        return self._logs.get(instance_id, {}).get(source, "")

    def _write(self, instance_id: str, source: LogSource, text: str, append: bool = True) -> None:
        if self.workdir is not None:
            os.makedirs(self._instance_dir(instance_id), exist_ok=True)
            path = os.path.join(self._instance_dir(instance_id), source.name)
            with open(path, 'a' if append else 'w', encoding='utf-8', errors='surrogateescape', newline='') as f:
                f.write(text)
            return
        logs = self._logs.setdefault(instance_id, {})
        logs[source] = (logs.get(source, "") if append else "") + text

    def _append_alert(self, instance_id: str, alert: AlertRecord) -> AlertRecord:
        assert self.alert_source is not None
        offset = len(self._read(instance_id, self.alert_source).encode("utf-8", "surrogateescape"))
        alert = replace(alert, timestamp=AlertTimestamp(alert.timestamp.epoch, offset))
        self._write(instance_id, self.alert_source, render_alert_block(alert) + "\n\n")
        return alert

    def _boot(self, instance_id: str) -> None:
        for source in self.log_sources:
            self._write(instance_id, source, "", append=False)
        if self.alert_source is not None:
            self._append_alert(instance_id, startup_alert(self.hostname, self.clock()))
        self._set_running(instance_id, True)

    def start(self, instance_id: str) -> None:
        with self._lock:
            if self._is_running(instance_id):
                raise RuntimeDriverError(f"instance {instance_id} is already running")
            self._boot(instance_id)

    def stop(self, instance_id: str) -> None:
        with self._lock:
            if not self._is_running(instance_id):
                raise RuntimeDriverError(f"instance {instance_id} is not running")
            self._set_running(instance_id, False)

    def reset(self, instance_id: str) -> None:
        with self._lock:
            if not self._is_running(instance_id):
                raise RuntimeDriverError(f"instance {instance_id} is not running")
            self._boot(instance_id)

    def fetch_logs(self, instance_id: str) -> Dict[LogSource, str]:
        with self._lock:
            if not self._known(instance_id):
                raise RuntimeDriverError(f"unknown instance {instance_id}")
            return {source: self._read(instance_id, source) for source in self.log_sources}

    def append(self, instance_id: str, source: LogSource, text: str) -> None:
        """
        Append raw text to one of the instance's logs.

        :param instance_id: Target instance
        :type instance_id: str
        :param source: Log source, must be configured
        :type source: LogSource
        :param text: Text to append as-is
        :type text: str
        """
        with self._lock:
            if source not in self.log_sources:
                raise RuntimeDriverError(f"log source {source.path} is not configured")
            if not self._is_running(instance_id):
                raise RuntimeDriverError(f"instance {instance_id} is not running")
            self._write(instance_id, source, text)

    def inject(self, instance_id: str, event: AccessEvent, source: Optional[LogSource] = None) -> List[AlertRecord]:
        """
        Log an access event and let the simulated IDS react to it.

        The access line goes to ``source`` (default: the first access log), with the URL
        decoded when that source logs decoded URLs. Every rule match is appended to the
        alert file with the file offset as sequence number.

        :param instance_id: Target instance
        :type instance_id: str
        :param event: Access event; its timestamp is the alert time
        :type event: AccessEvent
        :param source: Access log receiving the line
        :type source: Optional[LogSource]
        :return: Alerts written to the alert file
        :rtype: List[AlertRecord]
        """
        if source is None:
            source = next((s for s in self.log_sources if s.kind == LogKind.ACCESS_LOG), None)
            if source is None:
                raise RuntimeDriverError("no access log source configured")

        logged = replace(event, url=unquote(event.url)) if source.decodes_urls else event
        with self._lock:
            self.append(instance_id, source, render_access_line(logged) + "\n")
            if self.ruleset is None or self.alert_source is None:
                return []
            alerts = evaluate(logged, self.ruleset, logged.timestamp.timestamp(), source.path, self.hostname)
            return [self._append_alert(instance_id, alert) for alert in alerts]
