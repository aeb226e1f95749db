#!/usr/bin/env python3
"""
Demonstration script replaying the event-day attack approaches against the fixture challenge.
"""

import glob
import os

from rich.console import Console
from rich.table import Table

from stealthcheck.config import load_challenge_config
from stealthcheck.scenarios import load_scenario, run_scenario
from stealthcheck.scoring import points_for_detection

console = Console()

FIXTURES = os.path.join(os.path.dirname(os.path.abspath(__file__)), "tests", "fixtures")


def demo_with_fixture_challenge():
    """Replay every fixture scenario and show how stealth turns into points."""
    console.print("🚀 [bold]stealthcheck - Demonstration[/bold]")
    config = load_challenge_config(os.path.join(FIXTURES, "challenge.json"))

    console.print(f"\n📋 Challenge [blue]{config.challenge_id}[/blue]: {len(config.ruleset)} rules, "
                  f"baseline score {config.scoring.baseline}")

    table = Table(title="Scenario replay")
    for column in ("Scenario", "Alerts", "Detection score", "Points"):
        table.add_column(column)
    for path in sorted(glob.glob(os.path.join(FIXTURES, "scenarios", "*.json"))):
        scenario = load_scenario(path)
        report = run_scenario(scenario, config)
        table.add_row(scenario.name, str(len(report.alerts)), str(report.detection_score), str(report.points))
    console.print(table)

    console.print("\n📉 Points by detection score:")
    for score in (3, 5, 13, 27, 139, 2003):
        console.print(f"  {score:>5} -> {points_for_detection(score, config.scoring).points}")

    console.print("\n✅ Demonstration completed successfully!")
    console.print("\n💡 To use the actual tool:")
    console.print("   python -m stealthcheck --config challenge.json provision team_1")
    console.print("   python -m stealthcheck --config challenge.json serve")
    console.print("   python -m stealthcheck validate scenario.json challenge.json")


if __name__ == "__main__":
    demo_with_fixture_challenge()
