"""Engine errors with stable machine-readable codes.

Every error surfaced by the engine carries a ``code`` string that the HTTP
layer maps to exactly one status, and that scripts/CLI report verbatim.
"""

from __future__ import annotations


class GdmError(Exception):
    """Base error; ``code`` is the stable machine-readable identifier."""

    code = "EngineError"

    def __init__(self, detail: str = "", **context):
        super().__init__(detail or self.code)
        self.detail = detail or self.code
        self.context = context


# -- authorization ----------------------------------------------------------

class NotModerator(GdmError):
    code = "NotModerator"


class NotEligible(GdmError):
    code = "NotEligible"


# -- lifecycle ---------------------------------------------------------------

class WrongState(GdmError):
    code = "WrongState"


class QuorumNotReached(GdmError):
    code = "QuorumNotReached"

    def __init__(self, deficits: dict[str, int], detail: str = ""):
        # deficits: proposalId -> number of missing binding decisions
        super().__init__(detail or f"quorum missing on {sorted(deficits)}", deficits=deficits)
        self.deficits = deficits


class SecondReevaluation(GdmError):
    code = "SecondReevaluation"


class InvalidThreshold(GdmError):
    code = "InvalidThreshold"


# -- validation --------------------------------------------------------------

class ValidationError(GdmError):
    code = "ValidationError"


class MissingComment(ValidationError):
    code = "MissingComment"


class MissingAlternative(ValidationError):
    code = "MissingAlternative"


class RatingModeMismatch(ValidationError):
    code = "RatingModeMismatch"


class NotElementary(ValidationError):
    code = "NotElementary"


class SelfConflict(ValidationError):
    code = "SelfConflict"


class CycleDetected(ValidationError):
    code = "CycleDetected"


class InvalidPolicy(ValidationError):
    code = "InvalidPolicy"


class NoEligibleActors(ValidationError):
    code = "NoEligibleActors"


class EmptyRound(GdmError):
    code = "EmptyRound"


# -- lookups -----------------------------------------------------------------

class NotFound(GdmError):
    code = "NotFound"


class UnknownCollaboration(NotFound):
    code = "UnknownCollaboration"


class UnknownProposal(NotFound):
    code = "UnknownProposal"


class UnknownUser(NotFound):
    code = "UnknownUser"


class UnknownPolicy(NotFound):
    code = "UnknownPolicy"


class UnknownSubject(NotFound):
    code = "UnknownSubject"


class UnknownRelationship(NotFound):
    code = "UnknownRelationship"


class UnknownParent(NotFound):
    code = "UnknownParent"


class DuplicateName(GdmError):
    code = "DuplicateName"


class DuplicateId(GdmError):
    code = "DuplicateId"


# -- notation ----------------------------------------------------------------

class NotationSyntaxError(ValidationError):
    """Parse failure; carries the byte offset and the expected token class."""

    code = "SyntaxError"

    def __init__(self, offset: int, expected: str, detail: str = ""):
        super().__init__(detail or f"at byte {offset}: expected {expected}")
        self.offset = offset
        self.expected = expected


class ArrowMismatch(ValidationError):
    code = "ArrowMismatch"


class SelfCorrespondence(ValidationError):
    code = "SelfCorrespondence"


# -- persistence -------------------------------------------------------------

class CorruptLog(GdmError):
    code = "CorruptLog"

    def __init__(self, offset: int, detail: str = ""):
        super().__init__(detail or f"corrupt log record at byte {offset}")
        self.offset = offset


class ReplayMismatch(GdmError):
    code = "ReplayMismatch"


# -- scripts -----------------------------------------------------------------

class ScriptError(GdmError):
    code = "ScriptError"

    def __init__(self, detail: str, step: int | None = None):
        super().__init__(detail)
        self.step = step


# HTTP status for every code surfaced by the service.
HTTP_STATUS: dict[str, int] = {
    "NotModerator": 403,
    "NotEligible": 403,
    "WrongState": 409,
    "QuorumNotReached": 409,
    "SecondReevaluation": 409,
    "DuplicateName": 409,
    "DuplicateId": 409,
    "ReplayMismatch": 500,
    "CorruptLog": 500,
    "EngineError": 500,
    "ValidationError": 422,
    "MissingComment": 422,
    "MissingAlternative": 422,
    "RatingModeMismatch": 422,
    "NotElementary": 422,
    "SelfConflict": 422,
    "CycleDetected": 422,
    "InvalidPolicy": 422,
    "InvalidThreshold": 422,
    "NoEligibleActors": 422,
    "EmptyRound": 409,
    "SyntaxError": 422,
    "ArrowMismatch": 422,
    "SelfCorrespondence": 422,
    "ScriptError": 422,
    "NotFound": 404,
    "UnknownCollaboration": 404,
    "UnknownProposal": 404,
    "UnknownUser": 404,
    "UnknownPolicy": 404,
    "UnknownSubject": 404,
    "UnknownRelationship": 404,
    "UnknownParent": 404,
}


def http_status(code: str) -> int:
    return HTTP_STATUS.get(code, 500)
