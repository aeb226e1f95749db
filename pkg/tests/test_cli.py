"""
Tests for the CLI module.
"""

import json
import os
import shutil
import tempfile
import unittest
from unittest.mock import patch

from stealthcheck.cli import main, parse_arguments
from stealthcheck.lifecycle import InstanceState
from stealthcheck.scoring import ScoringParams, points_for_detection
from stealthcheck.store import InstanceStore
from stealthcheck.submission import SubmissionReport
from stealthcheck.tokens import issue_final_token
from stealthcheck.writeups import WRITEUP_FILE, WriteupRegistry

FIXTURES = os.path.join(os.path.dirname(__file__), "fixtures")
CONFIG = os.path.join(FIXTURES, "challenge.json")
KEY = b"fixture-secret-key-not-for-production"


class TestParseArguments(unittest.TestCase):
    """Test cases for argument parsing."""

    def test_command_required(self):
        """Test that a subcommand is required."""
        with self.assertRaises(SystemExit):
            parse_arguments([])

    def test_inject_url_required(self):
        """Test that inject needs a URL."""
        with self.assertRaises(SystemExit):
            parse_arguments(["inject", "alpha-0001"])

    def test_export_format_choices(self):
        """Test that only known export formats are accepted."""
        with self.assertRaises(SystemExit):
            parse_arguments(["export", "--format", "xlsx"])
        self.assertEqual(parse_arguments(["export"]).format, "csv")

    def test_defaults(self):
        """Test global defaults and the timeline data directory argument."""
        args = parse_arguments(["timeline", "/srv/data", "--out", "t.json"])
        self.assertEqual(args.config, "challenge.json")
        self.assertEqual(args.timeline_data_dir, "/srv/data")
        self.assertIsNone(args.csv)
        args = parse_arguments(["serve", "--instance", "a", "--instance", "b"])
        self.assertEqual(args.instance, ["a", "b"])
        self.assertEqual(args.reaper_interval, 30.0)


@patch('stealthcheck.cli.console')
class TestMain(unittest.TestCase):
    """Test cases for running commands through main."""

    def setUp(self):
        self.temp_dir = tempfile.mkdtemp()
        self.data_dir = os.path.join(self.temp_dir, "data")

    def tearDown(self):
        shutil.rmtree(self.temp_dir)

    def run_cli(self, *argv: str) -> int:
        return main(["--config", CONFIG, "--data-dir", self.data_dir, *argv])

    def instance_ids(self):
        return InstanceStore(self.data_dir).instance_ids()

    def test_instance_commands(self, mock_console):
        """Test provisioning, inspecting, resetting and terminating an instance."""
        self.assertEqual(self.run_cli("provision", "alpha"), 0)
        [instance_id] = self.instance_ids()
        self.assertEqual(self.run_cli("provision", "alpha"), 1)

        self.assertEqual(self.run_cli("inject", instance_id, "--url", "/admin", "--status", "404"), 0)
        self.assertEqual(self.run_cli("inject", instance_id, "--url", "/", "--source", "/var/log/none"), 1)
        self.assertEqual(self.run_cli("snapshot", instance_id), 0)
        self.assertEqual(self.run_cli("list"), 0)
        self.assertEqual(self.run_cli("reset", instance_id), 0)
        self.assertEqual(self.run_cli("terminate", instance_id), 0)
        self.assertEqual(self.run_cli("reset", instance_id), 1)
        self.assertEqual(self.run_cli("reset", "nobody-00000000"), 1)

        events = InstanceStore(self.data_dir).read_events(instance_id)
        self.assertEqual(events[-1]["state"], InstanceState.TERMINATED.value)
        self.assertEqual([e["reason"] for e in events if e["event"] == "snapshot"], ["manual", "reset", "manual"])

    def test_timeline_and_export(self, mock_console):
        """Test writing the timeline and an empty scoreboard."""
        self.run_cli("provision", "alpha")
        timeline_path = os.path.join(self.temp_dir, "timeline.json")
        csv_path = os.path.join(self.temp_dir, "timeline.csv")
        self.assertEqual(self.run_cli("timeline", "--out", timeline_path, "--csv", csv_path), 0)
        with open(timeline_path, 'r', encoding='utf-8') as f:
            self.assertEqual([s["kind"] for s in json.load(f)["segments"]], ["runtime"])
        self.assertTrue(os.path.exists(csv_path))

        board_path = os.path.join(self.temp_dir, "board.csv")
        self.assertEqual(self.run_cli("export", "--out", board_path), 0)
        with open(board_path, 'r', encoding='utf-8') as f:
            self.assertEqual(f.read(), "team_id,challenge_id,points,detection_score,submitted_at,token_verified\n")

    def test_writeup_and_token(self, mock_console):
        """Test registering a write-up and verifying tokens."""
        report = SubmissionReport(flag_valid=True, team_id="alpha", challenge_id="stealthctf",
                                  submitted_at=1723753400, detection_score=13,
                                  award=points_for_detection(13, ScoringParams()))
        token = issue_final_token("alpha", report, KEY)
        text_path = os.path.join(self.temp_dir, "writeup.txt")
        with open(text_path, 'w', encoding='utf-8') as f:
            f.write("Used viewdatafile instead of ProgramExport.\n")

        self.assertEqual(self.run_cli("verify-token", token), 0)
        self.assertEqual(self.run_cli("verify-token", token + "x"), 1)
        self.assertEqual(self.run_cli("writeup", "add", "alpha", token, text_path), 0)
        self.assertEqual(self.run_cli("writeup", "add", "bravo", token, text_path), 1)
        self.assertEqual(self.run_cli("writeup", "add", "alpha", token, text_path + ".missing"), 1)
        self.assertTrue(WriteupRegistry(os.path.join(self.data_dir, WRITEUP_FILE)).has_writeup("alpha", token))

    def test_validate(self, mock_console):
        """Test scenario validation with matching and mismatching expectations."""
        scenario = os.path.join(FIXTURES, "scenarios", "alt_endpoint.json")
        self.assertEqual(main(["validate", scenario, CONFIG]), 0)

        wrong = os.path.join(self.temp_dir, "wrong.json")
        with open(wrong, 'w', encoding='utf-8') as f:
            json.dump({"name": "wrong", "steps": [], "expected_detection_score": 4}, f)
        self.assertEqual(main(["validate", wrong, CONFIG]), 1)

    def test_missing_config(self, mock_console):
        """Test that a missing configuration file is an error."""
        self.assertEqual(main(["--config", os.path.join(self.temp_dir, "none.json"), "list"]), 1)


if __name__ == '__main__':
    unittest.main()
