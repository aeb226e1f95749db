"""
Tests for the scenarios module.
"""

import os
import unittest
from dataclasses import replace

from stealthcheck.config import load_challenge_config
from stealthcheck.errors import ConfigError, ScenarioMismatchError
from stealthcheck.parsers import parse_wazuh_alert_stream
from stealthcheck.rules import NormalizationPolicy
from stealthcheck.scenarios import (SCENARIO_EPOCH, AttackScenario, ScenarioStep, VirtualClock, load_scenario,
                                    parse_scenario, run_scenario)

FIXTURES = os.path.join(os.path.dirname(__file__), "fixtures")
SCENARIOS = os.path.join(FIXTURES, "scenarios")


def scenario(name: str) -> AttackScenario:
    return load_scenario(os.path.join(SCENARIOS, f"{name}.json"))


class TestRunScenario(unittest.TestCase):
    """Test cases for replaying attack scenarios."""

    def setUp(self):
        self.config = load_challenge_config(os.path.join(FIXTURES, "challenge.json"))

    def test_event_day_scenarios(self):
        """Test the detection scores of the event-day approaches."""
        expected = {"perfect": (3, 500), "alt_endpoint": (13, 315), "direct_exploit": (27, 245),
                    "scan": (2003, 100), "encoded_exploit": (3, 500)}
        for name, (detection, points) in expected.items():
            report = run_scenario(scenario(name), self.config)
            self.assertTrue(report.flag_valid, msg=name)
            self.assertEqual((report.detection_score, report.points), (detection, points), msg=name)
            self.assertIsNotNone(report.final_token)

    def test_encoded_exploit_caught_with_decoding(self):
        """Test that one decoding pass makes the rule see the encoded URL."""
        ruleset = replace(self.config.ruleset, policy=NormalizationPolicy(percent_decode_depth=1))
        config = replace(self.config, ruleset=ruleset)
        report = run_scenario(replace(scenario("encoded_exploit"), expected_detection_score=27), config)
        self.assertEqual((report.detection_score, report.points), (27, 245))

        with self.assertRaises(ScenarioMismatchError) as ctx:
            run_scenario(scenario("encoded_exploit"), config)
        self.assertEqual((ctx.exception.actual, ctx.exception.expected), (27, 3))

    def test_direct_exploit_matches_transcript_alerts(self):
        """Test that the replayed alerts carry the logged requests and file offsets of the transcript."""
        with open(os.path.join(FIXTURES, "transcript_alerts.log"), 'r', encoding='utf-8') as f:
            transcript, _ = parse_wazuh_alert_stream(f.read())
        report = run_scenario(scenario("direct_exploit"), self.config)
        self.assertEqual([a.raw_event for a in report.alerts], [a.raw_event for a in transcript])
        self.assertEqual([a.timestamp.sequence for a in report.alerts], [0, 248, 597])
        self.assertEqual([a.source_path for a in report.alerts], [a.source_path for a in transcript])
        self.assertEqual(report.alerts[0], transcript[0])

    def test_deterministic(self):
        """Test that replaying twice gives the same alerts and token."""
        first = run_scenario(scenario("alt_endpoint"), self.config)
        second = run_scenario(scenario("alt_endpoint"), self.config)
        self.assertEqual(first.alerts, second.alerts)
        self.assertEqual(first.final_token, second.final_token)
        self.assertEqual(first.submitted_at, SCENARIO_EPOCH + 90 + 5)

    def test_mismatch(self):
        """Test that an unexpected detection score raises."""
        wrong = replace(scenario("perfect"), expected_detection_score=4)
        with self.assertRaises(ScenarioMismatchError) as ctx:
            run_scenario(wrong, self.config)
        self.assertEqual((ctx.exception.actual, ctx.exception.expected), (3, 4))

    def test_wrong_flag(self):
        """Test a scenario submitting a wrong flag."""
        report = run_scenario(AttackScenario("guess", (), flag="nope"), self.config)
        self.assertFalse(report.flag_valid)
        self.assertIsNone(report.final_token)

    def test_unknown_source(self):
        """Test that a step naming an unconfigured log raises."""
        bad = AttackScenario("bad", (ScenarioStep(0, "GET", "/", source="/var/log/none.log"),))
        with self.assertRaises(ConfigError):
            run_scenario(bad, self.config)


class TestScenarioParsing(unittest.TestCase):
    """Test cases for scenario documents."""

    def test_repeat_expansion(self):
        """Test that repeated steps fill in their index."""
        step = ScenarioStep(10, "GET", "/dir{i}/", repeat=3, interval=2)
        self.assertEqual(list(step.expand()), [(10, "/dir0/"), (12, "/dir1/"), (14, "/dir2/")])

    def test_parse_defaults(self):
        """Test defaults for optional step fields."""
        parsed = parse_scenario({"name": "s", "steps": [{"method": "post", "url": "/x"}]})
        self.assertEqual(parsed.steps[0], ScenarioStep(0.0, "POST", "/x"))
        self.assertIsNone(parsed.expected_detection_score)

    def test_parse_errors(self):
        """Test rejected scenario documents."""
        for data in ({}, {"name": "s", "steps": [{"url": "/"}]},
                     {"name": "s", "steps": [{"method": "GET", "url": "/", "repeat": 0}]},
                     {"name": "s", "steps": [{"method": "GET", "url": "/", "offset": "soon"}]},
                     {"name": "s", "steps": [{"method": "GET", "url": "/", "offset": 5},
                                             {"method": "GET", "url": "/", "offset": 1}]}):
            with self.assertRaises(ConfigError, msg=str(data)):
                parse_scenario(data)

    def test_missing_file(self):
        """Test loading a scenario that doesn't exist."""
        with self.assertRaises(FileNotFoundError):
            load_scenario(os.path.join(SCENARIOS, "missing.json"))

    def test_virtual_clock_never_goes_back(self):
        """Test that the replay clock only moves forward."""
        clock = VirtualClock(100)
        clock.advance_to(50)
        self.assertEqual(clock(), 100)
        clock.advance_to(150)
        self.assertEqual(clock(), 150)


if __name__ == '__main__':
    unittest.main()
