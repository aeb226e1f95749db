"""
Utility functions for the stealthcheck tools.
"""

import os
import shutil
from datetime import datetime, timezone

from rich.console import Console

console = Console()


def backup_output_file(output_path: str) -> str:
    """
    Create a timestamped backup of a report file before it is overwritten.

    :param output_path: Path to the report file
    :type output_path: str
    :return: Path to the backup file, empty if there was nothing to back up
    :rtype: str
    """
    if not os.path.exists(output_path):
        return ""

    timestamp = datetime.now().strftime("%Y%m%d_%H%M%S")
    backup_path = f"{output_path}.backup.{timestamp}"

    try:
        shutil.copy2(output_path, backup_path)
        console.print(f"[green]Backup created:[/green] {backup_path}")
        return backup_path
    except OSError as e:
        console.print(f"[red]Failed to create backup:[/red] {e}")
        return ""


def write_output(output_path: str, text: str) -> None:
    """
    Write a report, backing up any previous version.

    :param output_path: Destination path
    :type output_path: str
    :param text: Report text
    :type text: str
    """
    backup_output_file(output_path)
    directory = os.path.dirname(output_path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(output_path, 'w', encoding='utf-8', newline='') as f:
        f.write(text)


def format_epoch(epoch: int) -> str:
    """Render epoch seconds as a UTC timestamp for tables."""
    return datetime.fromtimestamp(epoch, tz=timezone.utc).strftime("%Y-%m-%d %H:%M:%S")
