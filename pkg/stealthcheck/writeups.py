"""
Write-up registry: teams document their evasion strategy before their score counts.

Entries are appended as JSON lines; the latest entry per (team, token) wins.
"""

import json
import os
import time
from dataclasses import asdict, dataclass
from typing import Dict, List, Optional, Tuple

from .errors import TokenError, WriteupError
from .tokens import verify_final_token

WRITEUP_FILE = "writeups.jsonl"


@dataclass(frozen=True)
class WriteupEntry:
    team_id: str
    submission_ref: str
    strategy_text: str
    received_at: int

    def __post_init__(self) -> None:
        if not self.strategy_text.strip():
            raise WriteupError(f"write-up of team {self.team_id} is empty")


class WriteupRegistry:
    """
    Append-only write-up file.

    :param path: Registry file (JSON lines)
    :type path: str
    """

    def __init__(self, path: str):
        self.path = path

    def entries(self) -> Dict[Tuple[str, str], WriteupEntry]:
        """
        Read the registry, later entries replacing earlier ones for the same (team, token).

        :return: Entries keyed by (team_id, token)
        :rtype: Dict[Tuple[str, str], WriteupEntry]
        """
        if not os.path.exists(self.path):
            return {}
        entries = {}
        with open(self.path, 'r', encoding='utf-8') as f:
            for line in f:
                if not line.strip():
                    continue
                try:
                    entry = WriteupEntry(**json.loads(line))
                except (ValueError, TypeError, WriteupError):
                    continue
                entries[(entry.team_id, entry.submission_ref)] = entry
        return entries

    def has_writeup(self, team_id: str, token: str) -> bool:
        return (team_id, token) in self.entries()

    def list_entries(self) -> List[WriteupEntry]:
        return sorted(self.entries().values(), key=lambda e: (e.team_id, e.received_at))

    def register_writeup(self, team_id: str, token: str, strategy_text: str, secret_key: bytes,
                         received_at: Optional[int] = None) -> WriteupEntry:
        """
        Store a write-up for a final token issued to the team.

        :param team_id: Team submitting the write-up
        :type team_id: str
        :param token: Final token the write-up documents
        :type token: str
        :param strategy_text: Payload and evasion strategy
        :type strategy_text: str
        :param secret_key: Final-token MAC key
        :type secret_key: bytes
        :param received_at: Receipt time; defaults to now
        :type received_at: Optional[int]
        :return: The stored entry
        :rtype: WriteupEntry
        :raises WriteupError: On empty text, a bad token or a token issued to another team
        """
        token = token.strip()
        try:
            claims = verify_final_token(token, secret_key)
        except TokenError as e:
            raise WriteupError(f"write-up rejected: {e}") from e
        if claims.team_id != team_id:
            raise WriteupError(f"write-up rejected: token was issued to team {claims.team_id}, not {team_id}")

        entry = WriteupEntry(team_id, token, strategy_text,
                             int(time.time()) if received_at is None else received_at)
        directory = os.path.dirname(self.path)
        if directory:
            os.makedirs(directory, exist_ok=True)
        with open(self.path, 'a', encoding='utf-8') as f:
            f.write(json.dumps(asdict(entry), sort_keys=True) + "\n")
        return entry
