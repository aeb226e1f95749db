"""
Tests for the timeline module.
"""

import json
import os
import unittest
from datetime import datetime, timezone
from ipaddress import ip_address

from stealthcheck.alerts import AccessEvent
from stealthcheck.config import load_challenge_config
from stealthcheck.flagcheck import FlagCheckService
from stealthcheck.lifecycle import InstanceManager
from stealthcheck.runtime import SimulatedRuntime
from stealthcheck.scenarios import VirtualClock
from stealthcheck.timeline import (CSV_FIELDS, RUNTIME, SOLVED_SUBMISSION, UNSOLVED_ALERTS, TimelineSegment,
                                   generate_timeline, running_periods)

FIXTURES = os.path.join(os.path.dirname(__file__), "fixtures")
KEY = b"fixture-secret-key-not-for-production"
FLAG = b"zeRIv2hmgSiaiaMm13SQf0VR"
BOOT = 1723752961


class TestGenerateTimeline(unittest.TestCase):
    """Test cases for instance timelines."""

    def setUp(self):
        config = load_challenge_config(os.path.join(FIXTURES, "challenge.json"))
        self.clock = VirtualClock(BOOT)
        self.runtime = SimulatedRuntime(config.log_sources, config.ruleset, config.hostname, self.clock)
        self.manager = InstanceManager(config, self.runtime, clock=self.clock)
        self.service = FlagCheckService(self.manager, config, KEY)

        self.solver = self.manager.provision("alpha").instance_id
        self.scanner = self.manager.provision("bravo").instance_id

        self.clock.advance_to(BOOT + 50)
        self.runtime.inject(self.scanner, AccessEvent(
            client_ip=ip_address("10.8.0.10"),
            timestamp=datetime.fromtimestamp(BOOT + 50, tz=timezone.utc),
            method="GET",
            url="/admin",
            status=404,
        ))

        self.clock.advance_to(BOOT + 100)
        self.service.submit(self.solver, FLAG)
        self.service.finish(self.solver)

        self.clock.advance_to(BOOT + 200)
        self.manager.terminate(self.scanner)

    def segments_of(self, report, instance_id):
        return [segment for segment in report.segments if segment.instance_id == instance_id]

    def test_solved_instance(self):
        """Test runtime segments around a solve and the solve marker."""
        report = generate_timeline(self.manager.list_records(), now=BOOT + 500)
        self.assertEqual(self.segments_of(report, self.solver), [
            TimelineSegment(self.solver, "alpha", RUNTIME, BOOT, BOOT + 100),
            TimelineSegment(self.solver, "alpha", SOLVED_SUBMISSION, BOOT + 100, BOOT + 100, "3 (500)"),
            TimelineSegment(self.solver, "alpha", RUNTIME, BOOT + 100, BOOT + 500),
        ])

    def test_unsolved_instance(self):
        """Test that an instance without a solve shows the alerts of its last snapshot."""
        report = generate_timeline(self.manager.list_records(), now=BOOT + 500)
        self.assertEqual(self.segments_of(report, self.scanner), [
            TimelineSegment(self.scanner, "bravo", RUNTIME, BOOT, BOOT + 200),
            TimelineSegment(self.scanner, "bravo", UNSOLVED_ALERTS, BOOT, BOOT + 200, "2 alerts, score 8"),
        ])

    def test_renderings(self):
        """Test that CSV and JSON carry the same segments."""
        report = generate_timeline(self.manager.list_records(), now=BOOT + 500)
        lines = report.to_csv().splitlines()
        self.assertEqual(lines[0], ",".join(CSV_FIELDS))
        self.assertEqual(len(lines), len(report.segments) + 1)
        decoded = json.loads(report.to_json())
        self.assertEqual([TimelineSegment(**entry) for entry in decoded["segments"]], list(report.segments))

    def test_empty(self):
        """Test a timeline without instances."""
        report = generate_timeline([], now=BOOT)
        self.assertEqual(report.to_csv(), ",".join(CSV_FIELDS) + "\n")
        self.assertEqual(json.loads(report.to_json()), {"segments": []})


class TestRunningPeriods(unittest.TestCase):
    """Test cases for extracting running periods."""

    def test_open_period_closes_at_now(self):
        """Test that a still running instance ends at the given time."""
        config = load_challenge_config(os.path.join(FIXTURES, "challenge.json"))
        clock = VirtualClock(BOOT)
        manager = InstanceManager(config, SimulatedRuntime(config.log_sources, config.ruleset, clock=clock),
                                  clock=clock)
        record = manager.provision("alpha")
        clock.advance_to(BOOT + 30)
        manager.reset(record.instance_id)
        self.assertEqual(running_periods(record, BOOT + 90), [(BOOT, BOOT + 30), (BOOT + 30, BOOT + 90)])
        self.assertEqual(running_periods(record, BOOT), [(BOOT, BOOT + 30), (BOOT + 30, BOOT + 30)])


if __name__ == '__main__':
    unittest.main()
