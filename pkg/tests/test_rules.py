"""
Tests for the rules module.
"""

import ipaddress
import random
import unittest
from datetime import datetime, timezone
from urllib.parse import unquote

from stealthcheck.alerts import AccessEvent, Severity
from stealthcheck.errors import RulesetError
from stealthcheck.rules import (DetectionRule, NormalizationPolicy, Ruleset, builtin_rule_id, builtin_web_error_rules,
                                decode_stages, evaluate, load_ruleset, normalize_url, ruleset_from_config)

EXPLOIT_RULE = {
    "id": 100002,
    "level": 12,
    "method": "POST",
    "url_substring": "ProgramExport",
    "description": "Possible execution of CVE-2023-51467: POST request to ProgramExport detected",
    "groups": ["custom", "tomcat"],
}
WHEN = datetime(2024, 8, 15, 20, 21, 59, tzinfo=timezone.utc)


def request(url: str, method: str = "POST", status: int = 200) -> AccessEvent:
    return AccessEvent(ipaddress.ip_address("10.8.0.10"), WHEN, method, url, status=status, body_bytes=12099)


def exploit_ruleset(depth: int = 0, case_insensitive: bool = False) -> Ruleset:
    return ruleset_from_config({
        "rules": [EXPLOIT_RULE],
        "normalization": {"percent_decode_depth": depth, "case_insensitive": case_insensitive},
    })


class TestEvaluate(unittest.TestCase):
    """Test cases for rule evaluation."""

    def test_exploit_request_raises_one_alert(self):
        """Test the ProgramExport POST raises the level 12 alert."""
        alerts = evaluate(request("/webtools/control/main/ProgramExport"), exploit_ruleset(), WHEN.timestamp(),
                          "/var/log/apache2/access.log", "e66d0e45ea51")
        self.assertEqual(len(alerts), 1)
        alert = alerts[0]
        self.assertEqual(alert.rule_id, 100002)
        self.assertEqual(alert.level, 12)
        self.assertEqual(alert.action, "mail")
        self.assertEqual(alert.groups, ("custom", "tomcat"))
        self.assertEqual(alert.timestamp.epoch, 1723753319)
        self.assertEqual(alert.src_ip, ipaddress.ip_address("10.8.0.10"))
        self.assertEqual(alert.source_path, "/var/log/apache2/access.log")
        self.assertEqual(alert.hostname, "e66d0e45ea51")
        self.assertIn('"POST /webtools/control/main/ProgramExport HTTP/1.1" 200 12099', alert.raw_event)

    def test_get_does_not_match_post_rule(self):
        """Test that the method condition is exact."""
        self.assertEqual(evaluate(request("/ProgramExport", method="GET"), exploit_ruleset(), 0), [])

    def test_unmatched_path(self):
        """Test that another endpoint raises nothing."""
        self.assertEqual(evaluate(request("/webtools/control/viewdatafile"), exploit_ruleset(), 0), [])

    def test_web_error_rule(self):
        """Test that a 404 raises the level 5 built-in alert without mail action."""
        alerts = evaluate(request("/", method="GET", status=404), exploit_ruleset(), 0)
        self.assertEqual([(a.rule_id, a.level, a.action) for a in alerts], [(31104, 5, None)])

    def test_several_rules_fire_in_order(self):
        """Test that every matching rule raises its own alert in ruleset order."""
        alerts = evaluate(request("/ProgramExport", status=400), exploit_ruleset(), 0)
        self.assertEqual([a.rule_id for a in alerts], [100002, 31100])
        self.assertEqual([a.timestamp.sequence for a in alerts], [0, 1])

    def test_empty_ruleset(self):
        """Test that no rules means no alerts."""
        self.assertEqual(evaluate(request("/ProgramExport"), Ruleset(()), 0), [])


class TestEncodingEvasion(unittest.TestCase):
    """Test cases for URL normalization against percent-encoding."""

    ENCODED = "/webtools/control/main/%50rogramExport"

    def test_naive_policy_misses_encoded_url(self):
        """Test that depth 0 does not see through %50."""
        alerts = evaluate(request(self.ENCODED), exploit_ruleset(depth=0), 0)
        self.assertEqual([a for a in alerts if a.rule_id == 100002], [])

    def test_decoding_policy_catches_encoded_url(self):
        """Test that any depth of at least 1 raises exactly one exploit alert."""
        for depth in range(1, 5):
            alerts = evaluate(request(self.ENCODED), exploit_ruleset(depth=depth), 0)
            self.assertEqual(len([a for a in alerts if a.rule_id == 100002]), 1)

    def test_double_encoding_needs_two_passes(self):
        """Test %2550 decodes to %50 then P."""
        url = "/main/%2550rogramExport"
        self.assertEqual(normalize_url(url, NormalizationPolicy(1)), "/main/%50rogramExport")
        self.assertEqual(normalize_url(url, NormalizationPolicy(2)), "/main/ProgramExport")
        self.assertEqual(evaluate(request(url), exploit_ruleset(depth=1), 0), [])
        self.assertEqual(len(evaluate(request(url), exploit_ruleset(depth=2), 0)), 1)

    def test_case_folding(self):
        """Test that case-insensitive matching catches a case variant."""
        url = "/webtools/control/main/programexport"
        self.assertEqual(evaluate(request(url), exploit_ruleset(), 0), [])
        self.assertEqual(len(evaluate(request(url), exploit_ruleset(case_insensitive=True), 0)), 1)

    def test_stages_stop_at_fixed_point(self):
        """Test that decoding stops once nothing changes."""
        self.assertEqual(decode_stages("/plain", NormalizationPolicy(4)), ["/plain"])
        self.assertEqual(decode_stages("/%41", NormalizationPolicy(4)), ["/%41", "/A"])

    def test_invalid_escape_left_verbatim(self):
        """Test that invalid escapes and invalid UTF-8 do not raise."""
        self.assertEqual(normalize_url("/%zz%4", NormalizationPolicy(2)), "/%zz%4")
        self.assertEqual(len(decode_stages("/%ff", NormalizationPolicy(1))), 2)

    def test_depth_out_of_range(self):
        """Test that depths above 4 are refused."""
        with self.assertRaises(RulesetError):
            NormalizationPolicy(5)

    def test_matches_are_monotone_in_depth(self):
        """Test that raising the depth never loses a match, over random encoded URLs."""
        rng = random.Random(31104)
        target = "ProgramExport"
        for _ in range(1000):
            url = "/main/"
            for char in target:
                roll = rng.random()
                if roll < 0.2:
                    url += f"%{ord(char):02X}"
                elif roll < 0.3:
                    url += f"%25{ord(char):02X}"
                else:
                    url += char
            matched = [bool(evaluate(request(url), exploit_ruleset(depth=d), 0)) for d in range(5)]
            for shallow, deep in zip(matched, matched[1:]):
                self.assertLessEqual(shallow, deep)


class TestBruteForceOracle(unittest.TestCase):
    """Test evaluate against a direct scan of every rule condition."""

    def test_random_rules_and_events(self):
        """Test random rules and requests against an independent check."""
        rng = random.Random(500)
        fragments = ["admin", "ProgramExport", "%50rogram", "login", "a", ""]
        for _ in range(300):
            rules = []
            for rule_id in range(1, rng.randint(1, 6)):
                low = rng.choice([None, 200, 400, 404, 500])
                rules.append(DetectionRule(
                    id=rule_id,
                    severity=Severity(rng.randint(0, 15)),
                    description=f"rule {rule_id}",
                    method=rng.choice([None, "GET", "POST"]),
                    url_substring=rng.choice(fragments[:-1]),
                    status_range=None if low is None else (low, min(599, low + rng.choice([0, 99]))),
                ))
            policy = NormalizationPolicy(rng.randint(0, 2), rng.random() < 0.5)
            ruleset = Ruleset(tuple(rules), policy)

            for _ in range(10):
                event = request("/" + "/".join(rng.choice(fragments) for _ in range(3)),
                                method=rng.choice(["GET", "POST"]), status=rng.choice([200, 302, 400, 404, 503]))
                stages = [event.url]
                for _ in range(policy.percent_decode_depth):
                    stages.append(unquote(stages[-1]))
                if policy.case_insensitive:
                    stages = [stage.lower() for stage in stages]

                expected = []
                for rule in rules:
                    pattern = rule.url_substring.lower() if policy.case_insensitive else rule.url_substring
                    if rule.method is not None and rule.method != event.method:
                        continue
                    if rule.status_range and not rule.status_range[0] <= event.status <= rule.status_range[1]:
                        continue
                    if not any(pattern in stage for stage in stages):
                        continue
                    expected.append(rule.id)

                self.assertEqual([a.rule_id for a in evaluate(event, ruleset, 0)], expected)


class TestBuiltinRules(unittest.TestCase):
    """Test cases for the built-in web error rules."""

    def test_rule_ids(self):
        """Test the id scheme for 4xx and 5xx."""
        self.assertEqual(builtin_rule_id(400), 31100)
        self.assertEqual(builtin_rule_id(404), 31104)
        self.assertEqual(builtin_rule_id(500), 31200)
        self.assertEqual(builtin_rule_id(503), 31203)
        with self.assertRaises(RulesetError):
            builtin_rule_id(302)

    def test_default_statuses(self):
        """Test that 400 and 404 are watched by default at level 5."""
        rules = builtin_web_error_rules()
        self.assertEqual([(r.id, r.severity.level, r.status_range) for r in rules],
                         [(31100, 5, (400, 400)), (31104, 5, (404, 404))])

    def test_extra_statuses_and_disable(self):
        """Test configuring extra statuses or turning the rules off."""
        extended = ruleset_from_config({"builtin_rules": {"extra_statuses": [403, 500]}})
        self.assertEqual([r.id for r in extended.rules], [31100, 31103, 31104, 31200])
        disabled = ruleset_from_config({"builtin_rules": {"enabled": False}})
        self.assertEqual(len(disabled), 0)


class TestLoadRuleset(unittest.TestCase):
    """Test cases for loading rule configuration."""

    def test_load_with_comments(self):
        """Test loading an array of rules with comments and trailing commas."""
        text = """
        // exploit detection
        [{"id": 100002, "level": 12, "method": "post", "url_substring": "ProgramExport",
          "description": "exploit", "groups": "custom,tomcat",},]
        """
        ruleset = load_ruleset(text)
        rule = ruleset.get(100002)
        self.assertIsNotNone(rule)
        self.assertEqual(rule.method, "POST")
        self.assertEqual(rule.groups, ("custom", "tomcat"))
        self.assertEqual(len(ruleset), 3)

    def test_empty_text(self):
        """Test that empty text yields only the built-in rules."""
        self.assertEqual([r.id for r in load_ruleset("  ").rules], [31100, 31104])

    def test_errors(self):
        """Test the rejected rule sections."""
        bad_sections = [
            "{not json",
            '[{"id": 1, "level": 16, "description": "x", "method": "GET"}]',
            '[{"id": 1, "level": -1, "description": "x", "method": "GET"}]',
            '[{"id": 1, "level": 3, "description": "x", "method": "GET"},'
            ' {"id": 1, "level": 3, "description": "y", "method": "GET"}]',
            '[{"id": 2, "level": 3, "description": "x", "method": "GET", "parent_id": 31108}]',
            '[{"id": 3, "level": 3, "description": "no conditions"}]',
            '[{"id": 4, "level": 3, "description": "", "method": "GET"}]',
            '[{"id": 5, "level": 3, "description": "x", "status_min": 500, "status_max": 400}]',
            '[{"level": 3, "description": "x", "method": "GET"}]',
            '[{"id": 6, "level": 3, "description": "x", "method": "GET", "groups": "web, accesslog"}]',
            '[{"id": 6, "level": 3, "description": "two\\nlines", "method": "GET"}]',
            '{"normalization": {"percent_decode_depth": "one"}}',
            '{"normalization": {"percent_decode_depth": 1.5}}',
            '"rules"',
        ]
        for text in bad_sections:
            with self.assertRaises(RulesetError, msg=text):
                load_ruleset(text)

    def test_parent_must_exist(self):
        """Test that a parent defined in the same ruleset is accepted."""
        ruleset = load_ruleset('[{"id": 2, "level": 3, "description": "x", "method": "GET", "parent_id": 31104}]')
        self.assertEqual(ruleset.get(2).parent_id, 31104)

    def test_custom_ceiling(self):
        """Test that a higher ceiling admits higher levels."""
        ruleset = load_ruleset('{"severity_ceiling": 20, "rules": '
                               '[{"id": 7, "level": 18, "description": "x", "method": "GET"}]}')
        self.assertEqual(ruleset.get(7).severity.level, 18)


if __name__ == '__main__':
    unittest.main()
