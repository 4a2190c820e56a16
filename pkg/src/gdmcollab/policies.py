"""Decision-policy repository: the five built-in policies, structural
validation, the descriptive manual, and eligible decision-maker selection.

A policy combines a participation method (democratic or criteria-restricted)
with a co-decision method (process kind, agreement threshold, preference
kind) and an iteration class (single election vs iterative rounds).
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from enum import Enum
from fractions import Fraction
from typing import Optional

from .canonical import as_fraction, frac_str
from .domain import (
    AgreementThreshold,
    Collaboration,
    DecisionProcessKind,
    InvolvedUser,
    PreferenceKind,
)
from .errors import DuplicateName, NoEligibleActors, UnknownPolicy

DEFAULT_MAX_ROUNDS = 5


class ParticipationType(Enum):
    DEMOCRATIC = "democratic"
    RESTRICTED = "restricted"


class IterationClass(Enum):
    SINGLE_ELECTION = "singleElection"
    ITERATIVE = "iterative"


@dataclass(frozen=True, kw_only=True)
class SelectionCriteria:
    """Conjunction of up to three clauses; at least one must be present."""

    min_expertise: Optional[Fraction] = None
    allowed_viewpoints: Optional[frozenset] = None
    explicit_user_ids: Optional[frozenset] = None

    def clauses(self) -> int:
        return sum(x is not None for x in
                   (self.min_expertise, self.allowed_viewpoints, self.explicit_user_ids))

    def matches(self, user: InvolvedUser) -> bool:
        if self.min_expertise is not None and user.expertise_level < self.min_expertise:
            return False
        if self.allowed_viewpoints is not None and user.viewpoint not in self.allowed_viewpoints:
            return False
        if self.explicit_user_ids is not None and user.user_id not in self.explicit_user_ids:
            return False
        return True

    def to_json(self) -> dict:
        return {
            "minExpertise": frac_str(self.min_expertise) if self.min_expertise is not None else None,
            "allowedViewpoints": sorted(self.allowed_viewpoints) if self.allowed_viewpoints is not None else None,
            "explicitUserIds": sorted(self.explicit_user_ids) if self.explicit_user_ids is not None else None,
        }

    @staticmethod
    def from_json(d: dict) -> "SelectionCriteria":
        return SelectionCriteria(
            min_expertise=as_fraction(d["minExpertise"]) if d.get("minExpertise") is not None else None,
            allowed_viewpoints=frozenset(d["allowedViewpoints"]) if d.get("allowedViewpoints") is not None else None,
            explicit_user_ids=frozenset(d["explicitUserIds"]) if d.get("explicitUserIds") is not None else None,
        )


@dataclass(frozen=True, kw_only=True)
class ParticipationMethod:
    type: ParticipationType
    criteria: Optional[SelectionCriteria] = None

    def to_json(self) -> dict:
        return {
            "type": self.type.value,
            "criteria": self.criteria.to_json() if self.criteria else None,
        }

    @staticmethod
    def from_json(d: dict) -> "ParticipationMethod":
        return ParticipationMethod(
            type=ParticipationType(d["type"]),
            criteria=SelectionCriteria.from_json(d["criteria"]) if d.get("criteria") else None,
        )


@dataclass(frozen=True, kw_only=True)
class CoDecisionMethod:
    process_kind: DecisionProcessKind
    threshold: AgreementThreshold
    preference_kind: PreferenceKind

    def to_json(self) -> dict:
        return {
            "processKind": self.process_kind.value,
            "threshold": self.threshold.value,
            "preferenceKind": self.preference_kind.value,
        }

    @staticmethod
    def from_json(d: dict) -> "CoDecisionMethod":
        return CoDecisionMethod(
            process_kind=DecisionProcessKind(d["processKind"]),
            threshold=AgreementThreshold(d["threshold"]),
            preference_kind=PreferenceKind(d["preferenceKind"]),
        )


@dataclass(frozen=True, kw_only=True)
class PatternDescriptor:
    name: str
    intent: str = ""
    applications: tuple = ()
    solution: str = ""
    known_uses: tuple = ()
    related_patterns: tuple = ()

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "intent": self.intent,
            "applications": list(self.applications),
            "solution": self.solution,
            "knownUses": list(self.known_uses),
            "relatedPatterns": list(self.related_patterns),
        }

    @staticmethod
    def from_json(d: dict) -> "PatternDescriptor":
        return PatternDescriptor(
            name=d["name"],
            intent=d.get("intent", ""),
            applications=tuple(d.get("applications", [])),
            solution=d.get("solution", ""),
            known_uses=tuple(d.get("knownUses", [])),
            related_patterns=tuple(d.get("relatedPatterns", [])),
        )


@dataclass(frozen=True, kw_only=True)
class DecisionPolicy:
    policy_id: str
    descriptor: PatternDescriptor
    co_decision: CoDecisionMethod
    participation: ParticipationMethod
    iteration_class: IterationClass
    max_rounds: int = DEFAULT_MAX_ROUNDS
    advisory: bool = False  # True only for advice-taking policies

    @property
    def name(self) -> str:
        return self.descriptor.name

    def to_json(self) -> dict:
        return {
            "policyId": self.policy_id,
            "descriptor": self.descriptor.to_json(),
            "coDecision": self.co_decision.to_json(),
            "participation": self.participation.to_json(),
            "iterationClass": self.iteration_class.value,
            "maxRounds": self.max_rounds,
            "advisory": self.advisory,
        }

    @staticmethod
    def from_json(d: dict) -> "DecisionPolicy":
        return DecisionPolicy(
            policy_id=d["policyId"],
            descriptor=PatternDescriptor.from_json(d["descriptor"]),
            co_decision=CoDecisionMethod.from_json(d["coDecision"]),
            participation=ParticipationMethod.from_json(d["participation"]),
            iteration_class=IterationClass(d["iterationClass"]),
            max_rounds=d.get("maxRounds", DEFAULT_MAX_ROUNDS),
            advisory=d.get("advisory", False),
        )


def validate_policy(policy: DecisionPolicy) -> list:
    """Structural validation; returns a list of violations (empty means ok).

    Custom policy names are accepted whenever the structure is coherent;
    the well-known names additionally pin the combination that defines them.
    """
    violations: list[str] = []
    part, co = policy.participation, policy.co_decision
    name = policy.name

    if not name:
        violations.append("policy name must be non-empty")
    if policy.max_rounds < 1:
        violations.append("maxRounds must be >= 1")

    if part.type is ParticipationType.RESTRICTED:
        if part.criteria is None or part.criteria.clauses() == 0:
            violations.append("restricted participation requires at least one selection clause")
    else:
        if part.criteria is not None:
            violations.append("democratic participation must not carry selection criteria")

    if name == "ConsentingTogether":
        if co.threshold is not AgreementThreshold.STRICT:
            violations.append("ConsentingTogether: strict required")
        if policy.iteration_class is not IterationClass.ITERATIVE:
            violations.append("ConsentingTogether: iterative required")
    if name == "NegotiatingTogether":
        if co.threshold is AgreementThreshold.STRICT:
            violations.append("NegotiatingTogether: threshold must not be strict")
        if policy.iteration_class is not IterationClass.ITERATIVE:
            violations.append("NegotiatingTogether: iterative required")
    if name == "MajorityDeciding":
        if part.type is not ParticipationType.DEMOCRATIC:
            violations.append("MajorityDeciding: democratic participation required")
        if co.process_kind is not DecisionProcessKind.DIRECT_VOTE:
            violations.append("MajorityDeciding: directVote required")
        if policy.iteration_class is not IterationClass.SINGLE_ELECTION:
            violations.append("MajorityDeciding: singleElection required")
    if name in ("Delegating", "TakingAdvice"):
        if part.type is not ParticipationType.RESTRICTED:
            violations.append(f"{name}: restricted participation required")

    if policy.advisory:
        if policy.iteration_class is not IterationClass.SINGLE_ELECTION:
            violations.append("advisory policies are single election")
        if part.type is not ParticipationType.RESTRICTED:
            violations.append("advisory policies restrict participation")
        elif part.criteria is None or part.criteria.explicit_user_ids is None \
                or len(part.criteria.explicit_user_ids) != 1:
            violations.append("advisory policies designate exactly one final decision maker")

    return violations


def builtin_policies(default_max_rounds: int = DEFAULT_MAX_ROUNDS) -> list:
    """The five commonly used policies, ready to adopt.

    Delegating and TakingAdvice ship with placeholder selection criteria;
    the moderator binds them to real people when adopting the policy.
    """
    return [
        DecisionPolicy(
            policy_id="Delegating",
            descriptor=PatternDescriptor(
                name="Delegating",
                intent="Hand the decision to one person or a small group chosen for "
                       "their expertise, and let them settle the proposals.",
                applications=(
                    "Expertise is concentrated in a few stakeholders.",
                    "The wider group accepts the delegates' judgement.",
                ),
                solution="The moderator states the selection criteria for delegates; "
                         "the selected decision makers evaluate the proposals, in one "
                         "or several rounds, until the agreement threshold is reached.",
                known_uses=("Steering committees.", "Architecture boards."),
                related_patterns=("MajorityDeciding", "TakingAdvice"),
            ),
            co_decision=CoDecisionMethod(
                process_kind=DecisionProcessKind.DIRECT_VOTE,
                threshold=AgreementThreshold.MEDIUM,
                preference_kind=PreferenceKind.YES_NO,
            ),
            participation=ParticipationMethod(
                type=ParticipationType.RESTRICTED,
                criteria=SelectionCriteria(min_expertise=Fraction(1)),
            ),
            iteration_class=IterationClass.ITERATIVE,
            max_rounds=default_max_rounds,
        ),
        DecisionPolicy(
            policy_id="TakingAdvice",
            descriptor=PatternDescriptor(
                name="TakingAdvice",
                intent="One designated person decides alone after hearing the others' "
                       "advice; the advice informs but does not bind the decision.",
                applications=(
                    "A single accountable owner exists for the outcome.",
                    "Consultation is wanted without sharing the decision right.",
                ),
                solution="Advisors submit non-binding opinions during the evaluation "
                         "step; the final decision maker's own decision is the "
                         "collective decision. Performed in a single turn.",
                known_uses=("Chief-architect sign-off after review.",),
                related_patterns=("Delegating",),
            ),
            co_decision=CoDecisionMethod(
                process_kind=DecisionProcessKind.DIRECT_VOTE,
                threshold=AgreementThreshold.MEDIUM,
                preference_kind=PreferenceKind.YES_NO,
            ),
            participation=ParticipationMethod(
                type=ParticipationType.RESTRICTED,
                # placeholder id; replaced via the adoption-time criteria override
                criteria=SelectionCriteria(explicit_user_ids=frozenset({"final-decision-maker"})),
            ),
            iteration_class=IterationClass.SINGLE_ELECTION,
            max_rounds=1,
            advisory=True,
        ),
        DecisionPolicy(
            policy_id="MajorityDeciding",
            descriptor=PatternDescriptor(
                name="MajorityDeciding",
                intent="Reach a decision that takes into account the opinions of all "
                       "the stakeholders: the proposals approved by the majority of "
                       "the group are adopted.",
                applications=(
                    "Decision makers competencies and weights are almost equal.",
                    "Time constraints: requires less time since it is done in a single turn.",
                ),
                solution="The moderator defines the collaboration characteristics, "
                         "sets the threshold and preference kind of the co-decision "
                         "method (the process kind is direct vote), then notifies the "
                         "actors assigned the decision-maker role. Decision makers "
                         "draw up the list of proposals if not already established "
                         "and express their individual preferences. Finally the tool "
                         "(or the moderator) aggregates individual preferences; "
                         "proposals exceeding the threshold are approved and "
                         "constitute the group decision. Several proposals can be "
                         "approved if they are not conflicting.",
                known_uses=(
                    "Single-round elections either held face-to-face or by electronic vote.",
                ),
                related_patterns=("Delegating",),
            ),
            co_decision=CoDecisionMethod(
                process_kind=DecisionProcessKind.DIRECT_VOTE,
                threshold=AgreementThreshold.LOW,
                preference_kind=PreferenceKind.YES_NO,
            ),
            participation=ParticipationMethod(type=ParticipationType.DEMOCRATIC),
            iteration_class=IterationClass.SINGLE_ELECTION,
            max_rounds=1,
        ),
        DecisionPolicy(
            policy_id="ConsentingTogether",
            descriptor=PatternDescriptor(
                name="ConsentingTogether",
                intent="Keep iterating on the proposals until every decision maker "
                       "approves: full consensus, nothing less.",
                applications=(
                    "Decisions that bind everyone and need everyone's consent.",
                    "Small groups able to rework proposals over several rounds.",
                ),
                solution="Evaluation rounds repeat; after each round the group "
                         "adjusts the contested proposals. A proposal is adopted "
                         "only at 100% weighted approval.",
                known_uses=("Consortium standards sign-off.",),
                related_patterns=("NegotiatingTogether",),
            ),
            co_decision=CoDecisionMethod(
                process_kind=DecisionProcessKind.CONSENSUS_TO_VOTE,
                threshold=AgreementThreshold.STRICT,
                preference_kind=PreferenceKind.YES_NO,
            ),
            participation=ParticipationMethod(type=ParticipationType.DEMOCRATIC),
            iteration_class=IterationClass.ITERATIVE,
            max_rounds=default_max_rounds,
        ),
        DecisionPolicy(
            policy_id="NegotiatingTogether",
            descriptor=PatternDescriptor(
                name="NegotiatingTogether",
                intent="Iterate and negotiate until a sufficient share of the group "
                       "approves; consensus is sought but not required.",
                applications=(
                    "Larger groups where unanimity is unrealistic.",
                    "Proposals expected to evolve through counter-proposals.",
                ),
                solution="Evaluation rounds repeat with proposal adjustment between "
                         "rounds; a proposal is adopted once its weighted approval "
                         "reaches the agreed threshold (below 100%).",
                known_uses=("Requirements negotiation meetings.",),
                related_patterns=("ConsentingTogether", "MajorityDeciding"),
            ),
            co_decision=CoDecisionMethod(
                process_kind=DecisionProcessKind.NEGOTIATION_TO_VOTE,
                threshold=AgreementThreshold.MEDIUM,
                preference_kind=PreferenceKind.YES_NO,
            ),
            participation=ParticipationMethod(type=ParticipationType.DEMOCRATIC),
            iteration_class=IterationClass.ITERATIVE,
            max_rounds=default_max_rounds,
        ),
    ]


class PolicyRepository:
    """Total lookup over registered names; duplicate names rejected."""

    def __init__(self, preload_builtins: bool = True,
                 default_max_rounds: int = DEFAULT_MAX_ROUNDS):
        self._policies: dict[str, DecisionPolicy] = {}
        if preload_builtins:
            for p in builtin_policies(default_max_rounds):
                self.register(p)

    def register(self, policy: DecisionPolicy) -> None:
        violations = validate_policy(policy)
        if violations:
            from .errors import InvalidPolicy
            raise InvalidPolicy("; ".join(violations))
        if policy.name in self._policies or policy.policy_id in self._policies:
            raise DuplicateName(f"policy {policy.name!r} already registered")
        self._policies[policy.name] = policy
        if policy.policy_id != policy.name:
            self._policies[policy.policy_id] = policy

    def get(self, name: str) -> DecisionPolicy:
        try:
            return self._policies[name]
        except KeyError:
            raise UnknownPolicy(f"unknown policy {name!r}") from None

    def describe(self, name: str) -> PatternDescriptor:
        return self.get(name).descriptor

    def names(self) -> list:
        return sorted({p.name for p in self._policies.values()})


def eligible_decision_makers(collab: Collaboration, policy: DecisionPolicy,
                             criteria_override: Optional[SelectionCriteria] = None) -> frozenset:
    """Users allowed to submit binding decisions under the policy.

    Democratic participation selects every involved user; restricted
    participation keeps the users satisfying the criteria conjunction.
    """
    if policy.participation.type is ParticipationType.DEMOCRATIC:
        return frozenset(u.user_id for u in collab.involved_users)
    criteria = criteria_override or policy.participation.criteria
    if criteria is None or criteria.clauses() == 0:
        raise NoEligibleActors("restricted participation without criteria")
    selected = frozenset(u.user_id for u in collab.involved_users if criteria.matches(u))
    if not selected:
        raise NoEligibleActors("selection criteria match no involved user")
    return selected


def bind_criteria(policy: DecisionPolicy, criteria: SelectionCriteria) -> DecisionPolicy:
    """Adoption-time copy of a restricted policy with concrete criteria."""
    return replace(policy, participation=ParticipationMethod(
        type=policy.participation.type, criteria=criteria))
