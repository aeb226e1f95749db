"""
Challenge configuration file operations.
"""

import os
from dataclasses import dataclass, field
from typing import Any, Dict, Optional, Tuple

import json5

from .alerts import LogKind, LogSource
from .errors import ConfigError, StealthCheckError
from .rules import Ruleset, ruleset_from_config
from .scoring import EventDecayConfig, ScoringParams
from .submission import ChallengeFlag

SECRET_KEY_ENV = "STEALTHCHECK_SECRET_KEY_FILE"
DEFAULT_TTL_SECONDS = 3 * 60 * 60
DEFAULT_PORT = 1881

DEFAULT_LOG_SOURCES = (
    LogSource("/var/log/apache2/access.log", LogKind.ACCESS_LOG),
    LogSource("/var/ossec/logs/alerts/alerts.log", LogKind.WAZUH_ALERTS),
)


@dataclass(frozen=True)
class ChallengeConfig:
    """Everything one stealth challenge needs: flag, scoring, rules, logs and service settings."""

    flag: ChallengeFlag
    challenge_id: str = "stealth"
    hostname: str = "challenge"
    scoring: ScoringParams = field(default_factory=ScoringParams)
    event_decay: Optional[EventDecayConfig] = None
    ruleset: Ruleset = field(default_factory=lambda: ruleset_from_config(None))
    log_sources: Tuple[LogSource, ...] = DEFAULT_LOG_SOURCES
    ttl_seconds: int = DEFAULT_TTL_SECONDS
    port: int = DEFAULT_PORT
    listen_address: str = "0.0.0.0"
    secret_key_path: Optional[str] = None
    data_dir: str = "stealthcheck-data"
    strict_parsing: bool = False


def _log_sources(entries: Any) -> Tuple[LogSource, ...]:
    if entries is None:
        return DEFAULT_LOG_SOURCES
    if not isinstance(entries, list) or not entries:
        raise ConfigError("'log_sources' must be a non-empty array")

    sources = []
    for entry in entries:
        if not isinstance(entry, dict) or "path" not in entry:
            raise ConfigError(f"log source entries need a 'path': {entry!r}")
        try:
            kind = LogKind(entry.get("kind", LogKind.OTHER.value))
        except ValueError:
            raise ConfigError(f"log source {entry['path']}: unknown kind {entry.get('kind')!r}")
        try:
            sources.append(LogSource(str(entry["path"]), kind, bool(entry.get("decodes_urls", False))))
        except StealthCheckError as e:
            raise ConfigError(f"log source {entry['path']!r}: {e}") from e

    if len({source.name for source in sources}) != len(sources):
        raise ConfigError("log source paths must map to distinct file names")
    return tuple(sources)


def _resolve(base_dir: str, path: Optional[str]) -> Optional[str]:
    if path is None:
        return None
    return path if os.path.isabs(path) else os.path.join(base_dir, path)


def parse_challenge_config(data: Dict[str, Any], base_dir: str = ".") -> ChallengeConfig:
    """
    Validate a decoded challenge configuration.

    :param data: Decoded configuration object
    :type data: Dict[str, Any]
    :param base_dir: Directory relative paths are resolved against
    :type base_dir: str
    :return: Challenge configuration
    :rtype: ChallengeConfig
    :raises ConfigError: Naming the section that failed validation
    """
    if not isinstance(data, dict):
        raise ConfigError("challenge configuration must be a JSON object")
    if not data.get("flag"):
        raise ConfigError("'flag' is required")

    try:
        flag = ChallengeFlag(str(data["flag"]))
    except StealthCheckError as e:
        raise ConfigError(f"flag: {e}") from e

    try:
        scoring_section = data.get("scoring") or {}
        scoring = ScoringParams.from_config(scoring_section)
        event_decay = EventDecayConfig.from_config(scoring_section.get("event_decay"))
    except StealthCheckError as e:
        raise ConfigError(f"scoring: {e}") from e

    try:
        ruleset = ruleset_from_config({
            "rules": data.get("rules") or [],
            "builtin_rules": data.get("builtin_rules") or {},
            "normalization": data.get("normalization") or {},
            "severity_ceiling": data.get("severity_ceiling", 15),
        })
    except (StealthCheckError, TypeError, ValueError) as e:
        raise ConfigError(f"rules: {e}") from e

    try:
        ttl_seconds = int(data.get("ttl_seconds", DEFAULT_TTL_SECONDS))
        port = int(data.get("port", DEFAULT_PORT))
    except (TypeError, ValueError) as e:
        raise ConfigError(f"ttl_seconds/port must be integers: {e}") from e
    if ttl_seconds <= 0:
        raise ConfigError(f"ttl_seconds must be positive, got {ttl_seconds}")
    if not 0 <= port <= 65535:
        raise ConfigError(f"port must be within 0..65535, got {port}")

    hostname = str(data.get("hostname", "challenge"))
    if "->" in hostname or "\n" in hostname or "\r" in hostname:
        raise ConfigError(f"hostname must be one line without '->', got {hostname!r}")

    return ChallengeConfig(
        flag=flag,
        challenge_id=str(data.get("challenge_id", "stealth")),
        hostname=hostname,
        scoring=scoring,
        event_decay=event_decay,
        ruleset=ruleset,
        log_sources=_log_sources(data.get("log_sources")),
        ttl_seconds=ttl_seconds,
        port=port,
        listen_address=str(data.get("listen_address", "0.0.0.0")),
        secret_key_path=_resolve(base_dir, data.get("secret_key_path")),
        data_dir=_resolve(base_dir, data.get("data_dir", "stealthcheck-data")) or "stealthcheck-data",
        strict_parsing=bool(data.get("strict_parsing", False)),
    )


def load_challenge_config(config_path: str) -> ChallengeConfig:
    """
    Load a challenge configuration from a JSON file.

    :param config_path: Path to the configuration file
    :type config_path: str
    :return: Challenge configuration
    :rtype: ChallengeConfig
    :raises FileNotFoundError: If the file doesn't exist
    :raises ConfigError: If the file is not valid JSON or fails validation
    """
    if not os.path.exists(config_path):
        raise FileNotFoundError(f"Challenge configuration not found: {config_path}")

    with open(config_path, 'r', encoding='utf-8') as f:
        try:
            data = json5.load(f)
        except ValueError as e:
            raise ConfigError(f"{config_path}: invalid JSON: {e}") from e

    return parse_challenge_config(data, os.path.dirname(os.path.abspath(config_path)))


def load_secret_key(config: ChallengeConfig, key_file: Optional[str] = None) -> bytes:
    """
    Read the final-token MAC key.

    Precedence: ``key_file`` argument, then the environment variable, then the configuration.

    :param config: Challenge configuration
    :type config: ChallengeConfig
    :param key_file: Explicit key file path
    :type key_file: Optional[str]
    :return: Key bytes, surrounding whitespace removed
    :rtype: bytes
    :raises ConfigError: If no key file is configured or the file is empty
    """
    path = key_file or os.environ.get(SECRET_KEY_ENV) or config.secret_key_path
    if not path:
        raise ConfigError(f"no secret key configured (set secret_key_path, {SECRET_KEY_ENV} or --key-file)")
    if not os.path.exists(path):
        raise FileNotFoundError(f"Secret key file not found: {path}")

    with open(path, 'rb') as f:
        key = f.read().strip()
    if not key:
        raise ConfigError(f"secret key file {path} is empty")
    return key
