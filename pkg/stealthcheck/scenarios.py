"""
Attack scenario replay for validating a challenge before the event.

A scenario is a timed list of requests. Replaying it provisions a throwaway instance
on the simulated runtime, injects each request at its offset, submits the flag and
checks the resulting detection score.
"""

import ipaddress
import os
from dataclasses import dataclass
from datetime import datetime, timezone
from typing import Any, Dict, Iterator, Optional, Tuple

import json5

from .alerts import AccessEvent
from .config import ChallengeConfig
from .errors import ConfigError, InvalidEventError, ScenarioMismatchError
from .flagcheck import FlagCheckService
from .lifecycle import InstanceManager
from .runtime import SimulatedRuntime
from .submission import SubmissionReport

# Replays start at the boot time of the instance shown in the FlagCheck transcript
SCENARIO_EPOCH = 1723752961
SUBMIT_DELAY_SECONDS = 5
SCENARIO_KEY = b"scenario-replay"


@dataclass(frozen=True)
class ScenarioStep:
    """One request, or ``repeat`` requests ``interval`` seconds apart with ``{i}`` filled into the URL."""

    offset: float
    method: str
    url: str
    status: int = 200
    client_ip: str = "10.8.0.10"
    source: Optional[str] = None
    body_bytes: Optional[int] = None
    user_agent: Optional[str] = None
    repeat: int = 1
    interval: float = 0.0

    def expand(self) -> Iterator[Tuple[float, str]]:
        for i in range(self.repeat):
            yield self.offset + i * self.interval, self.url.replace("{i}", str(i))


@dataclass(frozen=True)
class AttackScenario:
    name: str
    steps: Tuple[ScenarioStep, ...]
    expected_detection_score: Optional[int] = None
    flag: Optional[str] = None

    def __post_init__(self) -> None:
        last = 0.0
        for step in self.steps:
            if step.offset < last:
                raise ConfigError(f"scenario '{self.name}': step offsets must be non-decreasing")
            last = step.offset + (step.repeat - 1) * step.interval


class VirtualClock:
    """Manually advanced clock, callable like ``time.time``."""

    def __init__(self, start: float):
        self.now = start

    def __call__(self) -> float:
        return self.now

    def advance_to(self, when: float) -> None:
        self.now = max(self.now, when)


def parse_scenario(data: Dict[str, Any]) -> AttackScenario:
    """
    Validate a decoded scenario document.

    :param data: Decoded scenario object
    :type data: Dict[str, Any]
    :return: Scenario
    :rtype: AttackScenario
    :raises ConfigError: If a step is incomplete or offsets go backwards
    """
    if not isinstance(data, dict) or not data.get("name"):
        raise ConfigError("scenario needs a 'name'")
    name = str(data["name"])

    steps = []
    for number, entry in enumerate(data.get("steps") or [], start=1):
        if not isinstance(entry, dict) or "method" not in entry or "url" not in entry:
            raise ConfigError(f"scenario '{name}' step {number}: 'method' and 'url' are required")
        try:
            step = ScenarioStep(
                offset=float(entry.get("offset", 0)),
                method=str(entry["method"]).upper(),
                url=str(entry["url"]),
                status=int(entry.get("status", 200)),
                client_ip=str(entry.get("client_ip", "10.8.0.10")),
                source=entry.get("source"),
                body_bytes=entry.get("body_bytes"),
                user_agent=entry.get("user_agent"),
                repeat=int(entry.get("repeat", 1)),
                interval=float(entry.get("interval", 0)),
            )
        except (TypeError, ValueError) as e:
            raise ConfigError(f"scenario '{name}' step {number}: {e}") from e
        if step.repeat < 1 or step.interval < 0:
            raise ConfigError(f"scenario '{name}' step {number}: repeat must be >= 1 and interval >= 0")
        steps.append(step)

    expected = data.get("expected_detection_score")
    return AttackScenario(
        name=name,
        steps=tuple(steps),
        expected_detection_score=None if expected is None else int(expected),
        flag=data.get("flag"),
    )


def load_scenario(path: str) -> AttackScenario:
    """
    Load a scenario file.

    :param path: Path to the scenario JSON
    :type path: str
    :return: Scenario
    :rtype: AttackScenario
    :raises FileNotFoundError: If the file doesn't exist
    """
    if not os.path.exists(path):
        raise FileNotFoundError(f"Scenario file not found: {path}")
    with open(path, 'r', encoding='utf-8') as f:
        try:
            data = json5.load(f)
        except ValueError as e:
            raise ConfigError(f"{path}: invalid JSON: {e}") from e
    return parse_scenario(data)


def run_scenario(scenario: AttackScenario, config: ChallengeConfig,
                 secret_key: Optional[bytes] = None) -> SubmissionReport:
    """
    Replay a scenario against a throwaway simulated instance and submit the flag.

    :param scenario: Scenario to replay
    :type scenario: AttackScenario
    :param config: Challenge configuration
    :type config: ChallengeConfig
    :param secret_key: Key for the final token; a fixed replay key by default
    :type secret_key: Optional[bytes]
    :return: Report of the submission
    :rtype: SubmissionReport
    :raises ScenarioMismatchError: If the detection score differs from the expected one
    """
    clock = VirtualClock(SCENARIO_EPOCH)
    runtime = SimulatedRuntime(config.log_sources, config.ruleset, config.hostname, clock)
    manager = InstanceManager(config, runtime, clock=clock)
    service = FlagCheckService(manager, config, secret_key or SCENARIO_KEY)
    sources = {source.path: source for source in config.log_sources}

    record = manager.provision(f"scenario-{scenario.name}")
    start = clock()
    for step in scenario.steps:
        if step.source is not None and step.source not in sources:
            raise ConfigError(f"scenario '{scenario.name}': log source {step.source} is not configured")
        source = sources[step.source] if step.source is not None else None
        for offset, url in step.expand():
            clock.advance_to(start + offset)
            try:
                event = AccessEvent(
                    client_ip=ipaddress.ip_address(step.client_ip),
                    timestamp=datetime.fromtimestamp(int(clock()), tz=timezone.utc),
                    method=step.method,
                    url=url,
                    status=step.status,
                    body_bytes=step.body_bytes,
                    user_agent=step.user_agent,
                )
            except ValueError as e:
                raise InvalidEventError(f"scenario '{scenario.name}': {e}") from e
            runtime.inject(record.instance_id, event, source)

    clock.advance_to(clock() + SUBMIT_DELAY_SECONDS)
    flag = scenario.flag if scenario.flag is not None else config.flag.value
    report = service.submit(record.instance_id, flag.encode("utf-8"))
    if report.flag_valid:
        service.finish(record.instance_id)

    expected = scenario.expected_detection_score
    if expected is not None and report.detection_score != expected:
        raise ScenarioMismatchError(scenario.name, report.detection_score, expected)
    return report
