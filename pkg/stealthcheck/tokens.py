"""
Score-bound final tokens.

A token is ``<payload>.<mac>``: the URL-safe base64 of a compact JSON object holding the
claims, and the URL-safe base64 HMAC-SHA256 of that payload part, both unpadded.
"""

import base64
import hashlib
import hmac
import json
from dataclasses import asdict, dataclass

from .errors import TokenError
from .submission import SubmissionReport


@dataclass(frozen=True)
class TokenClaims:
    team_id: str
    challenge_id: str
    detection_score: int
    points: int
    submitted_at: int


def _b64encode(data: bytes) -> str:
    return base64.urlsafe_b64encode(data).rstrip(b"=").decode("ascii")


def _b64decode(text: str) -> bytes:
    return base64.urlsafe_b64decode(text + "=" * (-len(text) % 4))


def _mac(payload: str, secret_key: bytes) -> str:
    return _b64encode(hmac.new(secret_key, payload.encode("ascii"), hashlib.sha256).digest())


def issue_final_token(team_id: str, report: SubmissionReport, secret_key: bytes) -> str:
    """
    Issue the final flag binding a team to its detection score and points.

    :param team_id: Team the token is issued to
    :type team_id: str
    :param report: Report of an accepted submission
    :type report: SubmissionReport
    :param secret_key: MAC key shared with the export tooling
    :type secret_key: bytes
    :return: Token text, identical for identical inputs
    :rtype: str
    :raises TokenError: If the flag was not valid, the report has no award or the key is empty
    """
    if not report.flag_valid or report.award is None:
        raise TokenError("final tokens are only issued for accepted flags")
    if not secret_key:
        raise TokenError("secret key is empty")

    claims = TokenClaims(
        team_id=team_id,
        challenge_id=report.challenge_id,
        detection_score=report.detection_score,
        points=report.award.points,
        submitted_at=report.submitted_at,
    )
    payload = _b64encode(json.dumps(asdict(claims), sort_keys=True, separators=(",", ":")).encode("utf-8"))
    return f"{payload}.{_mac(payload, secret_key)}"


def verify_final_token(token: str, secret_key: bytes) -> TokenClaims:
    """
    Check a token's MAC and return its claims.

    :param token: Token as issued
    :type token: str
    :param secret_key: MAC key
    :type secret_key: bytes
    :return: Claims carried by the token
    :rtype: TokenClaims
    :raises TokenError: If the token is malformed or the MAC does not match
    """
    payload, sep, mac = token.strip().partition(".")
    if not sep or not payload or not mac or not token.isascii():
        raise TokenError("malformed token")
    expected = _mac(payload, secret_key)
    if not hmac.compare_digest(expected, mac):
        raise TokenError("token signature does not match")

    try:
        data = json.loads(_b64decode(payload))
        return TokenClaims(
            team_id=str(data["team_id"]),
            challenge_id=str(data["challenge_id"]),
            detection_score=int(data["detection_score"]),
            points=int(data["points"]),
            submitted_at=int(data["submitted_at"]),
        )
    except (ValueError, KeyError, TypeError) as e:
        raise TokenError(f"malformed token payload: {e}") from e
