"""
Command line interface for the stealthcheck challenge tools.
"""

import argparse
import ipaddress
import os
import sys
import threading
from datetime import datetime, timezone
from typing import Callable, Dict, List, Optional

from rich.console import Console
from rich.table import Table

from .alerts import AccessEvent
from .config import ChallengeConfig, load_challenge_config, load_secret_key
from .errors import StealthCheckError
from .flagcheck import FlagCheckServer, FlagCheckService
from .lifecycle import InstanceManager, InstanceState, SnapshotReason, TtlReaper
from .runtime import SimulatedRuntime
from .scenarios import load_scenario, run_scenario
from .scoreboard import FORMATS, render_scoreboard, select_standings
from .store import InstanceStore
from .timeline import generate_timeline
from .tokens import verify_final_token
from .utils import format_epoch, write_output
from .writeups import WRITEUP_FILE, WriteupRegistry

console = Console()

RUNTIME_DIR = "runtime"


def parse_arguments(argv: Optional[List[str]] = None) -> argparse.Namespace:
    """
    Parse command line arguments.

    :param argv: Arguments without the program name; defaults to ``sys.argv[1:]``
    :type argv: Optional[List[str]]
    :return: Parsed arguments
    :rtype: argparse.Namespace
    """
    parser = argparse.ArgumentParser(
        description="Run and evaluate stealth CTF challenges scored by IDS alert severity"
    )
    parser.add_argument(
        "--config",
        default="challenge.json",
        help="Challenge configuration file (default: challenge.json)"
    )
    parser.add_argument(
        "--data-dir",
        help="Directory holding instance records and snapshots (overrides the configuration)"
    )
    parser.add_argument(
        "--key-file",
        help="Final-token secret key file (overrides configuration and environment)"
    )
    commands = parser.add_subparsers(dest="command", required=True)

    serve = commands.add_parser("serve", help="Serve FlagCheck for running instances and expire them on TTL")
    serve.add_argument("--instance", action="append", help="Instance to serve (repeatable; default: all running)")
    serve.add_argument("--port", type=int, help="First port; further instances use the following ports")
    serve.add_argument("--reaper-interval", type=float, default=30.0, help="Seconds between TTL sweeps")

    provision = commands.add_parser("provision", help="Start a fresh instance for a team")
    provision.add_argument("team_id")

    for verb, text in (("reset", "Snapshot and wipe an instance"),
                       ("terminate", "Snapshot and stop an instance"),
                       ("snapshot", "Capture an instance's logs")):
        command = commands.add_parser(verb, help=text)
        command.add_argument("instance_id")

    commands.add_parser("list", help="Show all instances")

    inject = commands.add_parser("inject", help="Send a simulated request to an instance")
    inject.add_argument("instance_id")
    inject.add_argument("--method", default="GET")
    inject.add_argument("--url", required=True)
    inject.add_argument("--status", type=int, default=200)
    inject.add_argument("--client-ip", default="10.8.0.10")
    inject.add_argument("--body-bytes", type=int)
    inject.add_argument("--source", help="Access log path (default: first access log)")

    validate = commands.add_parser("validate", help="Replay an attack scenario against a throwaway instance")
    validate.add_argument("scenario")
    validate.add_argument("challenge", nargs="?", help="Challenge configuration (default: --config)")

    timeline = commands.add_parser("timeline", help="Write the instance timeline report")
    timeline.add_argument("timeline_data_dir", nargs="?", metavar="data_dir")
    timeline.add_argument("--out", required=True, help="JSON report path")
    timeline.add_argument("--csv", help="Also write plot-ready CSV to this path")
    timeline.add_argument("--now", type=int, help="Close open periods at this epoch time")

    export = commands.add_parser("export", help="Export the scoreboard")
    export.add_argument("--format", choices=FORMATS, default="csv")
    export.add_argument("--out", help="Output path (default: print)")
    export.add_argument("--writeups", help=f"Write-up registry (default: <data-dir>/{WRITEUP_FILE})")

    writeup = commands.add_parser("writeup", help="Manage write-ups")
    writeup_commands = writeup.add_subparsers(dest="writeup_command", required=True)
    writeup_add = writeup_commands.add_parser("add", help="Register a team's write-up for a final token")
    writeup_add.add_argument("team_id")
    writeup_add.add_argument("token")
    writeup_add.add_argument("file", help="Text file with the payload and evasion strategy")
    writeup_add.add_argument("--writeups", help=f"Write-up registry (default: <data-dir>/{WRITEUP_FILE})")

    verify = commands.add_parser("verify-token", help="Check a final token and show its claims")
    verify.add_argument("token")

    return parser.parse_args(argv)


def _data_dir(args: argparse.Namespace, config: ChallengeConfig) -> str:
    return args.data_dir or config.data_dir


def open_manager(config: ChallengeConfig, data_dir: str) -> InstanceManager:
    """
    Instance manager over the data directory, with the simulated runtime mirrored beneath it.

    :param config: Challenge configuration
    :type config: ChallengeConfig
    :param data_dir: Data directory
    :type data_dir: str
    :return: Manager with records recovered from disk
    :rtype: InstanceManager
    """
    runtime = SimulatedRuntime(config.log_sources, config.ruleset, config.hostname,
                               workdir=os.path.join(data_dir, RUNTIME_DIR))
    return InstanceManager(config, runtime, InstanceStore(data_dir))


def _writeup_registry(args: argparse.Namespace, config: ChallengeConfig) -> WriteupRegistry:
    return WriteupRegistry(args.writeups or os.path.join(_data_dir(args, config), WRITEUP_FILE))


def cmd_serve(args: argparse.Namespace, config: ChallengeConfig) -> int:
    manager = open_manager(config, _data_dir(args, config))
    service = FlagCheckService(manager, config, load_secret_key(config, args.key_file))

    instance_ids = args.instance or [record.instance_id for record in manager.list_records()
                                     if record.state == InstanceState.RUNNING]
    if not instance_ids:
        console.print("[yellow]No running instances to serve[/yellow]")
        return 1

    first_port = args.port if args.port is not None else config.port
    servers = []
    for offset, instance_id in enumerate(instance_ids):
        manager.get(instance_id)
        server = FlagCheckServer((config.listen_address, first_port + offset), service, instance_id)
        threading.Thread(target=server.serve_forever, daemon=True).start()
        servers.append(server)
        console.print(f"[green]FlagCheck for {instance_id} listening on[/green] "
                      f"{config.listen_address}:{first_port + offset}")

    reaper = TtlReaper(manager, args.reaper_interval)
    reaper.start()
    try:
        threading.Event().wait()
    except KeyboardInterrupt:
        console.print("[yellow]Shutting down[/yellow]")
    finally:
        reaper.stop()
        for server in servers:
            server.shutdown()
            server.server_close()
    return 0


def cmd_provision(args: argparse.Namespace, config: ChallengeConfig) -> int:
    record = open_manager(config, _data_dir(args, config)).provision(args.team_id)
    console.print(record.instance_id)
    return 0


def cmd_reset(args: argparse.Namespace, config: ChallengeConfig) -> int:
    record = open_manager(config, _data_dir(args, config)).reset(args.instance_id)
    if record.state != InstanceState.RUNNING:
        console.print(f"[red]Reset failed, instance is {record.state.value}[/red]")
        return 1
    return 0


def cmd_terminate(args: argparse.Namespace, config: ChallengeConfig) -> int:
    open_manager(config, _data_dir(args, config)).terminate(args.instance_id)
    return 0


def cmd_snapshot(args: argparse.Namespace, config: ChallengeConfig) -> int:
    snapshot = open_manager(config, _data_dir(args, config)).snapshot_logs(args.instance_id, SnapshotReason.MANUAL)
    for source, text in snapshot.files.items():
        console.print(f"  {source.path}: {len(text.splitlines())} lines")
    return 0


def cmd_list(args: argparse.Namespace, config: ChallengeConfig) -> int:
    manager = open_manager(config, _data_dir(args, config))
    table = Table(title=f"Instances of {config.challenge_id}")
    for column in ("Instance", "Team", "State", "Started (UTC)", "Snapshots", "Submissions", "Best"):
        table.add_column(column)

    for record in manager.list_records():
        solves = [report for report in record.submissions if report.flag_valid]
        best = max(solves, key=lambda r: r.points, default=None)
        table.add_row(
            record.instance_id,
            record.team_id,
            record.state.value,
            format_epoch(record.started_at),
            str(len(record.snapshots)),
            str(len(record.submissions)),
            "-" if best is None else f"{best.detection_score} ({best.points})",
        )
    console.print(table)
    return 0


def cmd_inject(args: argparse.Namespace, config: ChallengeConfig) -> int:
    manager = open_manager(config, _data_dir(args, config))
    record = manager.get(args.instance_id)
    if record.state != InstanceState.RUNNING:
        console.print(f"[red]Instance {record.instance_id} is {record.state.value}[/red]")
        return 1

    source = next((s for s in config.log_sources if s.path == args.source), None)
    if args.source and source is None:
        console.print(f"[red]Log source not configured:[/red] {args.source}")
        return 1

    event = AccessEvent(
        client_ip=ipaddress.ip_address(args.client_ip),
        timestamp=datetime.now(timezone.utc).replace(microsecond=0),
        method=args.method.upper(),
        url=args.url,
        status=args.status,
        body_bytes=args.body_bytes,
    )
    assert isinstance(manager.driver, SimulatedRuntime)
    alerts = manager.driver.inject(record.instance_id, event, source)
    for alert in alerts:
        console.print(f"[yellow]Alert {alert.timestamp}:[/yellow] rule {alert.rule_id} "
                      f"(level {alert.level}) {alert.description}")
    console.print(f"[green]Injected[/green] {args.method.upper()} {args.url} -> {len(alerts)} alerts")
    return 0


def cmd_validate(args: argparse.Namespace, config: ChallengeConfig) -> int:
    scenario = load_scenario(args.scenario)
    report = run_scenario(scenario, config)

    table = Table(title="Scenario replay")
    for column in ("Scenario", "Alerts", "Detection score", "Points", "Expected"):
        table.add_column(column)
    expected = scenario.expected_detection_score
    table.add_row(scenario.name, str(len(report.alerts)), str(report.detection_score), str(report.points),
                  "-" if expected is None else str(expected))
    console.print(table)
    console.print(f"[green]Scenario '{scenario.name}' passed[/green]")
    return 0


def cmd_timeline(args: argparse.Namespace, config: ChallengeConfig) -> int:
    data_dir = args.timeline_data_dir or _data_dir(args, config)
    manager = open_manager(config, data_dir)
    report = generate_timeline(manager.list_records(), args.now, config.ruleset)

    write_output(args.out, report.to_json())
    console.print(f"[green]Timeline written:[/green] {args.out} ({len(report.segments)} segments)")
    if args.csv:
        write_output(args.csv, report.to_csv())
        console.print(f"[green]Timeline CSV written:[/green] {args.csv}")
    return 0


def cmd_export(args: argparse.Namespace, config: ChallengeConfig) -> int:
    manager = open_manager(config, _data_dir(args, config))
    reports = [report for record in manager.list_records() for report in record.submissions]
    records, excluded = select_standings(reports, _writeup_registry(args, config),
                                         load_secret_key(config, args.key_file), config.event_decay)

    for entry in excluded:
        console.print(f"[yellow]Excluded {entry.team_id} ({entry.instance_id}, {entry.submitted_at}):[/yellow] "
                      f"{entry.reason}")

    text = render_scoreboard(records, args.format)
    if args.out:
        write_output(args.out, text)
        console.print(f"[green]Scoreboard written:[/green] {args.out} ({len(records)} teams)")
    else:
        sys.stdout.write(text)
    return 0


def cmd_writeup(args: argparse.Namespace, config: ChallengeConfig) -> int:
    if not os.path.exists(args.file):
        raise FileNotFoundError(f"Write-up file not found: {args.file}")
    with open(args.file, 'r', encoding='utf-8') as f:
        text = f.read()

    entry = _writeup_registry(args, config).register_writeup(
        args.team_id, args.token, text, load_secret_key(config, args.key_file))
    console.print(f"[green]Write-up registered for team {entry.team_id}[/green]")
    return 0


def cmd_verify_token(args: argparse.Namespace, config: ChallengeConfig) -> int:
    claims = verify_final_token(args.token, load_secret_key(config, args.key_file))
    console.print(f"[green]Valid token[/green] team={claims.team_id} challenge={claims.challenge_id} "
                  f"detection_score={claims.detection_score} points={claims.points} "
                  f"submitted_at={format_epoch(claims.submitted_at)}")
    return 0


COMMANDS: Dict[str, Callable[[argparse.Namespace, ChallengeConfig], int]] = {
    "serve": cmd_serve,
    "provision": cmd_provision,
    "reset": cmd_reset,
    "terminate": cmd_terminate,
    "snapshot": cmd_snapshot,
    "list": cmd_list,
    "inject": cmd_inject,
    "validate": cmd_validate,
    "timeline": cmd_timeline,
    "export": cmd_export,
    "writeup": cmd_writeup,
    "verify-token": cmd_verify_token,
}


def main(argv: Optional[List[str]] = None) -> int:
    """
    Main entry point for the stealthcheck tools.

    :param argv: Arguments without the program name
    :type argv: Optional[List[str]]
    :return: Exit code (0 for success, 1 for error)
    :rtype: int
    """
    try:
        args = parse_arguments(argv)

        config_path = args.challenge if args.command == "validate" and args.challenge else args.config
        console.print(f"[blue]Using challenge configuration:[/blue] {config_path}")
        config = load_challenge_config(config_path)

        return COMMANDS[args.command](args, config)

    except FileNotFoundError as e:
        console.print(f"[red]{e}[/red]")
        return 1
    except StealthCheckError as e:
        console.print(f"[red]Error:[/red] {e}")
        return 1
    except KeyboardInterrupt:
        console.print("[yellow]Operation cancelled by user[/yellow]")
        return 1
    except Exception as e:
        console.print(f"[red]Unexpected error:[/red] {e}")
        return 1


if __name__ == "__main__":
    sys.exit(main())
