"""
Stealth scoring: detection score to points through a logarithmic decay,
plus optional event-level decay across solves.
"""

import math
from dataclasses import dataclass
from typing import Any, Dict, Optional

from .errors import ScoringError


@dataclass(frozen=True)
class ScoringParams:
    """
    Parameters of f(x) = max(b, a - s * ln(x) * (a - b)).

    :param max_points: a, awarded at or below the baseline
    :type max_points: int
    :param min_points: b, the lower clamp
    :type min_points: int
    :param steepness: s
    :type steepness: float
    :param baseline: d0, detection score a fresh instance always shows
    :type baseline: int
    :param rounding: Rounding policy; only "floor" is supported
    :type rounding: str
    """

    max_points: int = 500
    min_points: int = 100
    steepness: float = 0.2
    baseline: int = 3
    rounding: str = "floor"

    def __post_init__(self) -> None:
        if not self.max_points > self.min_points >= 0:
            raise ScoringError(f"need max_points > min_points >= 0, got {self.max_points}/{self.min_points}")
        if not self.steepness > 0:
            raise ScoringError(f"steepness must be positive, got {self.steepness}")
        if self.baseline < 0:
            raise ScoringError(f"baseline must be non-negative, got {self.baseline}")
        if self.rounding != "floor":
            raise ScoringError(f"unsupported rounding policy {self.rounding!r}")

    @classmethod
    def from_config(cls, section: Optional[Dict[str, Any]]) -> "ScoringParams":
        section = section or {}
        try:
            return cls(
                max_points=int(section.get("max_points", 500)),
                min_points=int(section.get("min_points", 100)),
                steepness=float(section.get("steepness", 0.2)),
                baseline=int(section.get("baseline", 3)),
                rounding=str(section.get("rounding", "floor")),
            )
        except (TypeError, ValueError) as e:
            if isinstance(e, ScoringError):
                raise
            raise ScoringError(f"invalid scoring section: {e}") from e


@dataclass(frozen=True)
class PointsAward:
    detection_score: int
    effective_excess: int
    points: int


@dataclass(frozen=True)
class EventDecayConfig:
    """Challenge value lowered by a fixed amount per earlier solve, never below ``floor``."""

    base_value: int = 500
    per_solve_decrement: int = 0
    floor: int = 0

    def __post_init__(self) -> None:
        if self.per_solve_decrement < 0 or self.floor < 0:
            raise ScoringError("per_solve_decrement and floor must be non-negative")
        if self.floor > self.base_value:
            raise ScoringError(f"floor {self.floor} exceeds base_value {self.base_value}")

    @classmethod
    def from_config(cls, section: Optional[Dict[str, Any]]) -> Optional["EventDecayConfig"]:
        if not section:
            return None
        try:
            return cls(
                base_value=int(section.get("base_value", 500)),
                per_solve_decrement=int(section.get("per_solve_decrement", 0)),
                floor=int(section.get("floor", 0)),
            )
        except (TypeError, ValueError) as e:
            if isinstance(e, ScoringError):
                raise
            raise ScoringError(f"invalid event_decay section: {e}") from e


def points_for_detection(d: int, params: ScoringParams) -> PointsAward:
    """
    Convert a detection score into awarded points.

    The excess over the baseline, x = max(d - d0, 0), feeds the decay; x <= 1 yields
    the maximum since ln(1) = 0. The result is floored and clamped to [b, a].

    :param d: Detection score, sum of alert severities
    :type d: int
    :param params: Scoring parameters
    :type params: ScoringParams
    :return: The award
    :rtype: PointsAward
    """
    if d < 0:
        raise ScoringError(f"detection score must be non-negative, got {d}")

    excess = max(d - params.baseline, 0)
    a, b = params.max_points, params.min_points
    if excess <= 1:
        points = a
    else:
        points = math.floor(max(b, a - params.steepness * math.log(excess) * (a - b)))
    return PointsAward(detection_score=d, effective_excess=excess, points=min(max(points, b), a))


def event_value(cfg: EventDecayConfig, solve_count: int) -> int:
    """
    Challenge value after ``solve_count`` earlier solves.

    :param cfg: Event decay configuration
    :type cfg: EventDecayConfig
    :param solve_count: Number of earlier solves
    :type solve_count: int
    :return: max(floor, base_value - per_solve_decrement * solve_count)
    :rtype: int
    """
    if solve_count < 0:
        raise ScoringError(f"solve count must be non-negative, got {solve_count}")
    return max(cfg.floor, cfg.base_value - cfg.per_solve_decrement * solve_count)


def apply_event_decay(points: int, cfg: EventDecayConfig, solve_count: int) -> int:
    """
    Scale stealth points by the share of the challenge value left after earlier solves.

    :param points: Stealth points
    :type points: int
    :param cfg: Event decay configuration
    :type cfg: EventDecayConfig
    :param solve_count: Number of teams that solved earlier
    :type solve_count: int
    :return: Decayed points, floored
    :rtype: int
    """
    if cfg.base_value <= 0:
        return points
    return points * event_value(cfg, solve_count) // cfg.base_value
