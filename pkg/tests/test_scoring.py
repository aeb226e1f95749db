"""
Tests for the scoring module.
"""

import unittest
from decimal import ROUND_FLOOR, Decimal, localcontext

from stealthcheck.errors import ScoringError
from stealthcheck.scoring import (EventDecayConfig, ScoringParams, apply_event_decay, event_value,
                                  points_for_detection)


def decimal_points(d: int, params: ScoringParams) -> int:
    """The decay evaluated with 50 significant digits, floored and clamped."""
    excess = max(d - params.baseline, 0)
    if excess <= 1:
        return params.max_points
    with localcontext() as ctx:
        ctx.prec = 50
        a, b = Decimal(params.max_points), Decimal(params.min_points)
        value = a - Decimal(str(params.steepness)) * Decimal(excess).ln() * (a - b)
        return max(params.min_points, int(value.to_integral_value(rounding=ROUND_FLOOR)))


class TestPointsForDetection(unittest.TestCase):
    """Test cases for the detection-to-points decay."""

    def setUp(self):
        self.params = ScoringParams()

    def test_event_day_scores(self):
        """Test the points for detection scores seen during the event."""
        expected = {0: 500, 3: 500, 4: 500, 5: 444, 13: 315, 27: 245, 139: 106, 2003: 100, 10**6: 100}
        for d, points in expected.items():
            self.assertEqual(points_for_detection(d, self.params).points, points, msg=f"d={d}")

    def test_award_fields(self):
        """Test that the award carries the excess over the baseline."""
        award = points_for_detection(27, self.params)
        self.assertEqual(award.detection_score, 27)
        self.assertEqual(award.effective_excess, 24)
        self.assertEqual(award.points, 245)
        self.assertEqual(points_for_detection(1, self.params).effective_excess, 0)

    def test_matches_high_precision_formula(self):
        """Test every detection score up to 10^5 against the decay computed with 50 digits."""
        for d in range(0, 100001):
            self.assertEqual(points_for_detection(d, self.params).points, decimal_points(d, self.params), msg=f"d={d}")

        gentle = ScoringParams(max_points=1000, min_points=50, steepness=0.1, baseline=0)
        for d in range(0, 30001):
            self.assertEqual(points_for_detection(d, gentle).points, decimal_points(d, gentle), msg=f"d={d}")

    def test_non_increasing_and_clamped(self):
        """Test that points never rise with the detection score and stay within [b, a]."""
        previous = self.params.max_points
        for d in range(0, 100001):
            points = points_for_detection(d, self.params).points
            self.assertLessEqual(points, previous, msg=f"d={d}")
            self.assertGreaterEqual(points, self.params.min_points)
            previous = points

    def test_gentler_steepness(self):
        """Test that a smaller steepness awards more for the same detection score."""
        gentle = ScoringParams(steepness=0.1)
        self.assertEqual(points_for_detection(27, gentle).points, 372)
        self.assertGreater(points_for_detection(139, gentle).points, points_for_detection(139, self.params).points)

    def test_negative_score_rejected(self):
        """Test that a negative detection score raises."""
        with self.assertRaises(ScoringError):
            points_for_detection(-1, self.params)


class TestScoringParams(unittest.TestCase):
    """Test cases for scoring parameter validation."""

    def test_invalid_params(self):
        """Test the rejected parameter combinations."""
        for kwargs in ({"max_points": 100, "min_points": 100}, {"min_points": -1}, {"steepness": 0},
                       {"baseline": -3}, {"rounding": "round"}):
            with self.assertRaises(ScoringError, msg=str(kwargs)):
                ScoringParams(**kwargs)

    def test_from_config(self):
        """Test reading a scoring section with defaults for missing keys."""
        params = ScoringParams.from_config({"max_points": 1000, "steepness": "0.1"})
        self.assertEqual(params.max_points, 1000)
        self.assertEqual(params.min_points, 100)
        self.assertAlmostEqual(params.steepness, 0.1)
        self.assertEqual(ScoringParams.from_config(None), ScoringParams())

    def test_from_config_bad_value(self):
        """Test that non-numeric values raise a scoring error."""
        with self.assertRaises(ScoringError):
            ScoringParams.from_config({"max_points": "lots"})


class TestEventDecay(unittest.TestCase):
    """Test cases for event-level decay."""

    def setUp(self):
        self.cfg = EventDecayConfig(base_value=500, per_solve_decrement=50, floor=100)

    def test_event_value(self):
        """Test the linear decrease down to the floor."""
        self.assertEqual(event_value(self.cfg, 0), 500)
        self.assertEqual(event_value(self.cfg, 3), 350)
        self.assertEqual(event_value(self.cfg, 10), 100)
        with self.assertRaises(ScoringError):
            event_value(self.cfg, -1)

    def test_apply_event_decay(self):
        """Test scaling stealth points by the remaining challenge value."""
        self.assertEqual(apply_event_decay(245, self.cfg, 0), 245)
        self.assertEqual(apply_event_decay(245, self.cfg, 2), 196)
        self.assertEqual(apply_event_decay(500, self.cfg, 50), 100)

    def test_no_decrement_is_identity(self):
        """Test that the default configuration leaves points unchanged."""
        cfg = EventDecayConfig()
        for solves in range(20):
            self.assertEqual(apply_event_decay(315, cfg, solves), 315)

    def test_from_config(self):
        """Test that an absent section disables decay and bad values raise."""
        self.assertIsNone(EventDecayConfig.from_config(None))
        self.assertIsNone(EventDecayConfig.from_config({}))
        self.assertEqual(EventDecayConfig.from_config({"per_solve_decrement": 10}).per_solve_decrement, 10)
        with self.assertRaises(ScoringError):
            EventDecayConfig.from_config({"floor": 600})
        with self.assertRaises(ScoringError):
            EventDecayConfig(per_solve_decrement=-1)


if __name__ == '__main__':
    unittest.main()
