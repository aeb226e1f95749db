"""
Tests for the writeups module.
"""

import os
import shutil
import tempfile
import unittest

from stealthcheck.errors import WriteupError
from stealthcheck.scoring import ScoringParams, points_for_detection
from stealthcheck.submission import SubmissionReport
from stealthcheck.tokens import issue_final_token
from stealthcheck.writeups import WRITEUP_FILE, WriteupEntry, WriteupRegistry

KEY = b"fixture-secret-key-not-for-production"


def token_for(team_id: str, detection: int = 27) -> str:
    report = SubmissionReport(flag_valid=True, team_id=team_id, challenge_id="stealthctf", submitted_at=1723753400,
                              detection_score=detection, award=points_for_detection(detection, ScoringParams()))
    return issue_final_token(team_id, report, KEY)


class TestWriteupRegistry(unittest.TestCase):
    """Test cases for the write-up registry."""

    def setUp(self):
        self.temp_dir = tempfile.mkdtemp()
        self.registry = WriteupRegistry(os.path.join(self.temp_dir, "event", WRITEUP_FILE))

    def tearDown(self):
        shutil.rmtree(self.temp_dir)

    def test_register_and_lookup(self):
        """Test registering a write-up for the team's own token."""
        token = token_for("senior_2")
        entry = self.registry.register_writeup("senior_2", token + "\n", "Used an unwatched endpoint.", KEY,
                                               received_at=1723760000)
        self.assertEqual(entry, WriteupEntry("senior_2", token, "Used an unwatched endpoint.", 1723760000))
        self.assertTrue(self.registry.has_writeup("senior_2", token))
        self.assertFalse(self.registry.has_writeup("junior_1", token))
        self.assertEqual(self.registry.list_entries(), [entry])

    def test_latest_entry_wins(self):
        """Test that a second write-up for the same token replaces the first."""
        token = token_for("senior_2")
        self.registry.register_writeup("senior_2", token, "draft", KEY, received_at=1)
        self.registry.register_writeup("senior_2", token, "final", KEY, received_at=2)
        self.assertEqual([e.strategy_text for e in self.registry.list_entries()], ["final"])

    def test_rejections(self):
        """Test empty text, foreign tokens and forged tokens."""
        token = token_for("senior_2")
        with self.assertRaises(WriteupError):
            self.registry.register_writeup("senior_2", token, "   ", KEY)
        with self.assertRaises(WriteupError):
            self.registry.register_writeup("junior_1", token, "copied", KEY)
        with self.assertRaises(WriteupError):
            self.registry.register_writeup("senior_2", token, "text", b"another key")
        with self.assertRaises(WriteupError):
            self.registry.register_writeup("senior_2", "not-a-token", "text", KEY)
        self.assertEqual(self.registry.list_entries(), [])

    def test_unreadable_lines_skipped(self):
        """Test that broken lines in the registry file are ignored."""
        token = token_for("senior_2")
        self.registry.register_writeup("senior_2", token, "kept", KEY, received_at=5)
        with open(self.registry.path, 'a', encoding='utf-8') as f:
            f.write("{broken\n\n")
            f.write('{"team_id": "x", "submission_ref": "y", "strategy_text": "", "received_at": 1}\n')
        self.assertEqual(list(self.registry.entries()), [("senior_2", token)])

    def test_missing_file(self):
        """Test that a registry without file is empty."""
        self.assertEqual(self.registry.entries(), {})


if __name__ == '__main__':
    unittest.main()
