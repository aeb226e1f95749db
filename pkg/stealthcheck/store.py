"""
Append-only persistence for instance records and log snapshots.

Layout under the data directory::

    instances/<instance_id>/record.log                          one JSON event per line
    instances/<instance_id>/snapshots/<snapshot_id>/<source>    captured log text
"""

import json
import os
from typing import Any, Dict, List

from rich.console import Console

console = Console()

RECORD_FILE = "record.log"
SNAPSHOT_DIR = "snapshots"


class InstanceStore:
    """
    File-backed event log per instance.

    :param data_dir: Root data directory
    :type data_dir: str
    """

    def __init__(self, data_dir: str):
        self.data_dir = data_dir
        self.instances_dir = os.path.join(data_dir, "instances")

    def _instance_dir(self, instance_id: str) -> str:
        return os.path.join(self.instances_dir, instance_id)

    def append_event(self, instance_id: str, event: Dict[str, Any]) -> None:
        """
        Append one state event to the instance's record file, flushed to disk.

        :param instance_id: Instance the event belongs to
        :type instance_id: str
        :param event: JSON-serializable event
        :type event: Dict[str, Any]
        """
        instance_dir = self._instance_dir(instance_id)
        os.makedirs(instance_dir, exist_ok=True)
        with open(os.path.join(instance_dir, RECORD_FILE), 'a', encoding='utf-8') as f:
            f.write(json.dumps(event, sort_keys=True) + "\n")
            f.flush()
            os.fsync(f.fileno())

    def read_events(self, instance_id: str) -> List[Dict[str, Any]]:
        """
        Read an instance's events in write order.

        A torn final line (crash mid-write) is skipped with a warning.

        :param instance_id: Instance to read
        :type instance_id: str
        :return: Events
        :rtype: List[Dict[str, Any]]
        """
        path = os.path.join(self._instance_dir(instance_id), RECORD_FILE)
        if not os.path.exists(path):
            return []

        events = []
        with open(path, 'r', encoding='utf-8') as f:
            for number, line in enumerate(f, start=1):
                if not line.strip():
                    continue
                try:
                    events.append(json.loads(line))
                except json.JSONDecodeError:
                    console.print(f"[yellow]Skipping unreadable event[/yellow] {path}:{number}")
        return events

    def instance_ids(self) -> List[str]:
        if not os.path.isdir(self.instances_dir):
            return []
        return sorted(
            name for name in os.listdir(self.instances_dir)
            if os.path.exists(os.path.join(self.instances_dir, name, RECORD_FILE))
        )

    def write_snapshot(self, instance_id: str, snapshot_id: str, files: Dict[str, str]) -> None:
        """
        Write captured log text, one file per source name.

        :param instance_id: Owning instance
        :type instance_id: str
        :param snapshot_id: Snapshot id
        :type snapshot_id: str
        :param files: Text by source name
        :type files: Dict[str, str]
        """
        snapshot_dir = os.path.join(self._instance_dir(instance_id), SNAPSHOT_DIR, snapshot_id)
        os.makedirs(snapshot_dir, exist_ok=True)
        for name, text in files.items():
            with open(os.path.join(snapshot_dir, name), 'w', encoding='utf-8', errors='surrogateescape',
                      newline='') as f:
                f.write(text)

    def read_snapshot(self, instance_id: str, snapshot_id: str) -> Dict[str, str]:
        snapshot_dir = os.path.join(self._instance_dir(instance_id), SNAPSHOT_DIR, snapshot_id)
        if not os.path.isdir(snapshot_dir):
            return {}
        files = {}
        for name in sorted(os.listdir(snapshot_dir)):
            with open(os.path.join(snapshot_dir, name), 'r', encoding='utf-8', errors='surrogateescape',
                      newline='') as f:
                files[name] = f.read()
        return files
