"""Core domain types shared by every other module.

All value types are frozen dataclasses; the collaboration aggregate is the
only mutable object and every mutation goes through the lifecycle engine.
Weights, scores and thresholds are exact rationals (``fractions.Fraction``).
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum
from fractions import Fraction
from typing import TYPE_CHECKING, Optional, Union

from .canonical import as_fraction, frac_str
from .errors import (
    CycleDetected,
    MissingAlternative,
    MissingComment,
    NotElementary,
    NotEligible,
    RatingModeMismatch,
    SelfConflict,
    UnknownProposal,
    UnknownUser,
    ValidationError,
)

if TYPE_CHECKING:
    from .aggregation import RoundTally
    from .policies import DecisionPolicy


# -- closed enumerations -----------------------------------------------------

class AgreementKind(Enum):
    APPROVAL = "approval"
    REJECT = "reject"
    REFINEMENT = "refinement"


class CollectiveDecision(Enum):
    PENDING = "pending"
    APPROVED = "approved"
    REJECTED = "rejected"
    UNRESOLVED = "unresolved"


class DecisionProcessKind(Enum):
    DIRECT_VOTE = "directVote"
    CONSENSUS_TO_VOTE = "consensus2vote"
    NEGOTIATION_TO_VOTE = "negotiation2vote"


class AgreementThreshold(Enum):
    LOW = "low"
    MEDIUM = "medium"
    HIGH = "high"
    STRICT = "strict"


class PreferenceKind(Enum):
    RATING = "rating"
    YES_NO = "yesNo"


class LifecycleState(Enum):
    DRAFT = "Draft"
    CONFIGURED = "Configured"
    METHOD_CHOSEN = "MethodChosen"
    NOTIFIED = "Notified"
    ELABORATION = "Elaboration"
    EVALUATION_OPEN = "EvaluationOpen"
    EVALUATION_CLOSED = "EvaluationClosed"
    AGGREGATED = "Aggregated"
    ADJUSTING_PROPOSALS = "AdjustingProposals"
    AWAITING_MODERATOR_CHOICE = "AwaitingModeratorChoice"
    CLOSED = "Closed"


# -- value types --------------------------------------------------------------

@dataclass(frozen=True, kw_only=True)
class Comment:
    author_id: str
    text: str
    created_at: int  # UTC milliseconds

    def __post_init__(self):
        if not self.text.strip():
            raise ValidationError("comment text must be non-empty")

    def to_json(self) -> dict:
        return {"authorId": self.author_id, "text": self.text, "createdAt": self.created_at}

    @staticmethod
    def from_json(d: dict) -> "Comment":
        return Comment(author_id=d["authorId"], text=d["text"], created_at=d["createdAt"])


@dataclass(frozen=True, kw_only=True)
class Decision:
    decision_maker_id: str
    proposal_id: str
    round: int
    kind: AgreementKind
    rating: Optional[int] = None
    comment: Optional[Comment] = None
    alternative_id: Optional[str] = None
    submitted_at: int = 0
    binding: bool = True  # False only for advice under an advisory policy

    def to_json(self) -> dict:
        return {
            "decisionMakerId": self.decision_maker_id,
            "proposalId": self.proposal_id,
            "round": self.round,
            "kind": self.kind.value,
            "rating": self.rating,
            "comment": self.comment.to_json() if self.comment else None,
            "alternativeId": self.alternative_id,
            "submittedAt": self.submitted_at,
            "binding": self.binding,
        }

    @staticmethod
    def from_json(d: dict) -> "Decision":
        return Decision(
            decision_maker_id=d["decisionMakerId"],
            proposal_id=d["proposalId"],
            round=d["round"],
            kind=AgreementKind(d["kind"]),
            rating=d.get("rating"),
            comment=Comment.from_json(d["comment"]) if d.get("comment") else None,
            alternative_id=d.get("alternativeId"),
            submitted_at=d.get("submittedAt", 0),
            binding=d.get("binding", True),
        )


@dataclass(frozen=True, kw_only=True)
class InvolvedUser:
    user_id: str
    display_name: str = ""
    is_moderator: bool = False
    expertise_level: Fraction = Fraction(1)
    viewpoint: Optional[str] = None

    def __post_init__(self):
        if self.expertise_level <= 0:
            raise ValidationError("expertiseLevel must be > 0")

    def to_json(self) -> dict:
        return {
            "userId": self.user_id,
            "displayName": self.display_name,
            "isModerator": self.is_moderator,
            "expertiseLevel": frac_str(self.expertise_level),
            "viewpoint": self.viewpoint,
        }

    @staticmethod
    def from_json(d: dict) -> "InvolvedUser":
        return InvolvedUser(
            user_id=d["userId"],
            display_name=d.get("displayName", ""),
            is_moderator=d.get("isModerator", False),
            expertise_level=as_fraction(d.get("expertiseLevel", 1)),
            viewpoint=d.get("viewpoint"),
        )


@dataclass(frozen=True, kw_only=True)
class ElementaryProposal:
    proposal_id: str
    title: str
    author_id: str
    created_at: int
    body: str = ""  # free text; may hold a correspondence expression
    collective_decision: CollectiveDecision = CollectiveDecision.PENDING
    conflicts_with: frozenset = frozenset()
    withdrawn: bool = False

    @property
    def kind(self) -> str:
        return "elementary"

    def to_json(self) -> dict:
        return {
            "proposalId": self.proposal_id,
            "kind": self.kind,
            "title": self.title,
            "authorId": self.author_id,
            "createdAt": self.created_at,
            "body": self.body,
            "collectiveDecision": self.collective_decision.value,
            "conflictsWith": sorted(self.conflicts_with),
            "withdrawn": self.withdrawn,
        }


@dataclass(frozen=True, kw_only=True)
class AlternativeProposal(ElementaryProposal):
    refines: str = ""
    conflictual: bool = False

    @property
    def kind(self) -> str:
        return "alternative"

    def to_json(self) -> dict:
        d = super().to_json()
        d["refines"] = self.refines
        d["conflictual"] = self.conflictual
        return d


@dataclass(frozen=True, kw_only=True)
class CompositeProposal:
    proposal_id: str
    title: str
    author_id: str
    created_at: int
    children: tuple = ()
    collective_decision: CollectiveDecision = CollectiveDecision.PENDING
    conflicts_with: frozenset = frozenset()
    withdrawn: bool = False

    def __post_init__(self):
        if len(self.children) < 1:
            raise ValidationError("composite proposal needs at least one child")

    @property
    def kind(self) -> str:
        return "composite"

    def to_json(self) -> dict:
        return {
            "proposalId": self.proposal_id,
            "kind": self.kind,
            "title": self.title,
            "authorId": self.author_id,
            "createdAt": self.created_at,
            "children": list(self.children),
            "collectiveDecision": self.collective_decision.value,
            "conflictsWith": sorted(self.conflicts_with),
            "withdrawn": self.withdrawn,
        }


Proposal = Union[ElementaryProposal, AlternativeProposal, CompositeProposal]


def proposal_from_json(d: dict) -> Proposal:
    common = dict(
        proposal_id=d["proposalId"],
        title=d.get("title", ""),
        author_id=d["authorId"],
        created_at=d["createdAt"],
        collective_decision=CollectiveDecision(d.get("collectiveDecision", "pending")),
        conflicts_with=frozenset(d.get("conflictsWith", [])),
        withdrawn=d.get("withdrawn", False),
    )
    kind = d.get("kind", "elementary")
    if kind == "composite":
        return CompositeProposal(children=tuple(d.get("children", [])), **common)
    if kind == "alternative":
        return AlternativeProposal(
            body=d.get("body", ""), refines=d.get("refines", ""),
            conflictual=d.get("conflictual", False), **common,
        )
    return ElementaryProposal(body=d.get("body", ""), **common)


@dataclass(frozen=True, kw_only=True)
class CollaborativeWorkProduct:
    collaboration_id: str
    approved_proposal_ids: frozenset
    closed_at: int
    final_round: int

    def to_json(self) -> dict:
        return {
            "collaborationId": self.collaboration_id,
            "approvedProposalIds": sorted(self.approved_proposal_ids),
            "closedAt": self.closed_at,
            "finalRound": self.final_round,
        }

    @staticmethod
    def from_json(d: dict) -> "CollaborativeWorkProduct":
        return CollaborativeWorkProduct(
            collaboration_id=d["collaborationId"],
            approved_proposal_ids=frozenset(d["approvedProposalIds"]),
            closed_at=d["closedAt"],
            final_round=d["finalRound"],
        )


@dataclass
class Collaboration:
    """The mutable aggregate root; mutated only by the lifecycle engine."""

    collaboration_id: str
    involved_users: tuple = ()
    intent: str = ""
    deadline: Optional[int] = None  # advisory only; no automatic closure
    adopted_policy_id: Optional[str] = None
    policy: Optional["DecisionPolicy"] = None  # snapshot taken at adoption
    eligible_dms: frozenset = frozenset()
    proposals: dict = field(default_factory=dict)
    decisions: list = field(default_factory=list)
    current_round: int = 0
    state: LifecycleState = LifecycleState.DRAFT
    threshold_override: Optional[Fraction] = None
    work_product: Optional[CollaborativeWorkProduct] = None
    reevaluate_used: bool = False
    final_round_forced: bool = False  # current round must close the collaboration
    tallies: dict = field(default_factory=dict)  # proposalId -> latest RoundTally
    created_at: int = 0

    def __post_init__(self):
        moderators = [u for u in self.involved_users if u.is_moderator]
        if len(moderators) != 1:
            raise ValidationError("a collaboration requires exactly one moderator")
        ids = [u.user_id for u in self.involved_users]
        if len(set(ids)) != len(ids):
            raise ValidationError("duplicate user ids")

    # -- queries --------------------------------------------------------------

    @property
    def moderator_id(self) -> str:
        return next(u.user_id for u in self.involved_users if u.is_moderator)

    def user(self, user_id: str) -> InvolvedUser:
        for u in self.involved_users:
            if u.user_id == user_id:
                return u
        raise UnknownUser(f"unknown user {user_id!r}")

    def has_user(self, user_id: str) -> bool:
        return any(u.user_id == user_id for u in self.involved_users)

    def weights(self) -> dict:
        return {u.user_id: u.expertise_level for u in self.involved_users}

    def proposal(self, proposal_id: str) -> Proposal:
        try:
            return self.proposals[proposal_id]
        except KeyError:
            raise UnknownProposal(f"unknown proposal {proposal_id!r}") from None

    def live_elementary(self) -> list:
        """Elementary proposals still subject to evaluation this round."""
        return [
            p for p in self.proposals.values()
            if not isinstance(p, CompositeProposal)
            and not p.withdrawn
            and p.collective_decision is CollectiveDecision.PENDING
        ]

    def composites(self) -> list:
        return [p for p in self.proposals.values() if isinstance(p, CompositeProposal)]

    def to_json(self) -> dict:
        return {
            "collaborationId": self.collaboration_id,
            "intent": self.intent,
            "deadline": self.deadline,
            "involvedUsers": [u.to_json() for u in self.involved_users],
            "adoptedPolicyId": self.adopted_policy_id,
            "policy": self.policy.to_json() if self.policy else None,
            "eligibleDMs": sorted(self.eligible_dms),
            "proposals": {pid: p.to_json() for pid, p in self.proposals.items()},
            "currentRound": self.current_round,
            "state": self.state.value,
            "thresholdOverride": frac_str(self.threshold_override) if self.threshold_override is not None else None,
            "workProduct": self.work_product.to_json() if self.work_product else None,
            "reevaluateUsed": self.reevaluate_used,
            "finalRoundForced": self.final_round_forced,
            "createdAt": self.created_at,
        }

    def to_snapshot(self) -> dict:
        """Full state including decisions and tallies (snapshot persistence)."""
        d = self.to_json()
        d["decisions"] = [x.to_json() for x in self.decisions]
        d["tallies"] = {pid: t.to_json() for pid, t in self.tallies.items()}
        return d

    @staticmethod
    def from_snapshot(d: dict) -> "Collaboration":
        from .aggregation import RoundTally
        from .policies import DecisionPolicy

        collab = Collaboration(
            collaboration_id=d["collaborationId"],
            involved_users=tuple(InvolvedUser.from_json(u) for u in d["involvedUsers"]),
            intent=d.get("intent", ""),
            deadline=d.get("deadline"),
            adopted_policy_id=d.get("adoptedPolicyId"),
            policy=DecisionPolicy.from_json(d["policy"]) if d.get("policy") else None,
            eligible_dms=frozenset(d.get("eligibleDMs", [])),
            proposals={pid: proposal_from_json(p) for pid, p in d.get("proposals", {}).items()},
            decisions=[Decision.from_json(x) for x in d.get("decisions", [])],
            current_round=d.get("currentRound", 0),
            state=LifecycleState(d.get("state", "Draft")),
            threshold_override=as_fraction(d["thresholdOverride"]) if d.get("thresholdOverride") else None,
            work_product=CollaborativeWorkProduct.from_json(d["workProduct"]) if d.get("workProduct") else None,
            reevaluate_used=d.get("reevaluateUsed", False),
            final_round_forced=d.get("finalRoundForced", False),
            created_at=d.get("createdAt", 0),
        )
        collab.tallies = {pid: RoundTally.from_json(t) for pid, t in d.get("tallies", {}).items()}
        return collab


# -- operations ---------------------------------------------------------------

def validate_decision(decision: Decision, pref_kind, collab: Collaboration) -> None:
    """Check every decision invariant in context; raises on the first violation.

    A decision that passes here satisfies all invariants of the type: the
    mandatory reject comment, the refinement alternative link, and the
    rating-mode agreement.
    """
    proposal = collab.proposal(decision.proposal_id)
    if isinstance(proposal, CompositeProposal):
        raise NotElementary("decisions target elementary proposals; composites derive their status")
    if not collab.has_user(decision.decision_maker_id):
        raise NotEligible(f"{decision.decision_maker_id!r} is not an involved user")

    advisory = bool(collab.policy and collab.policy.advisory)
    if decision.binding:
        if decision.decision_maker_id not in collab.eligible_dms:
            raise NotEligible(f"{decision.decision_maker_id!r} is not an eligible decision maker")
    else:
        if not advisory:
            raise NotEligible("advice is only accepted under an advisory policy")
        if decision.decision_maker_id in collab.eligible_dms:
            raise NotEligible("the final decision maker submits binding decisions, not advice")

    if decision.kind is AgreementKind.REJECT:
        if decision.comment is None or not decision.comment.text.strip():
            raise MissingComment("a reject decision requires a justifying comment")

    if decision.kind is AgreementKind.REFINEMENT:
        if not decision.alternative_id:
            raise MissingAlternative("a refinement decision requires an alternative proposal")
        alt = collab.proposals.get(decision.alternative_id)
        if not isinstance(alt, AlternativeProposal):
            raise MissingAlternative(f"{decision.alternative_id!r} is not an alternative proposal")
        if alt.refines != decision.proposal_id:
            raise MissingAlternative(
                f"alternative {decision.alternative_id!r} does not refine {decision.proposal_id!r}"
            )

    rating_mode = getattr(pref_kind, "value", pref_kind) == "rating"
    if rating_mode:
        if decision.rating is None:
            raise RatingModeMismatch("rating is required under a rating preference")
        if not 1 <= decision.rating <= 5:
            raise RatingModeMismatch("rating must be in [1,5]")
    elif decision.rating is not None:
        raise RatingModeMismatch("rating is only accepted under a rating preference")


def add_conflict(p_id: str, q_id: str, proposals: dict) -> dict:
    """Link two proposals as conflicting; symmetric and idempotent."""
    if p_id == q_id:
        raise SelfConflict("a proposal cannot conflict with itself")
    for pid in (p_id, q_id):
        if pid not in proposals:
            raise UnknownProposal(f"unknown proposal {pid!r}")
    p, q = proposals[p_id], proposals[q_id]
    if q_id in p.conflicts_with and p_id in q.conflicts_with:
        return proposals
    proposals[p_id] = replace(p, conflicts_with=p.conflicts_with | {q_id})
    proposals[q_id] = replace(q, conflicts_with=q.conflicts_with | {p_id})
    return proposals


def check_forest(proposals: dict, new_composite_id: str, children: tuple) -> None:
    """Reject composite insertions that would break the proposal forest."""
    parent_of: dict[str, str] = {}
    for p in proposals.values():
        if isinstance(p, CompositeProposal):
            for c in p.children:
                parent_of[c] = p.proposal_id
    seen = set()
    for child in children:
        if child == new_composite_id:
            raise CycleDetected("composite cannot contain itself")
        if child not in proposals:
            raise UnknownProposal(f"unknown child proposal {child!r}")
        if child in parent_of:
            raise CycleDetected(f"{child!r} already has a parent")
        if child in seen:
            raise CycleDetected(f"{child!r} listed twice")
        seen.add(child)
        # walk down from the child; finding the new id below would be a cycle
        stack = [child]
        visited = set()
        while stack:
            node = stack.pop()
            if node == new_composite_id:
                raise CycleDetected("composite insertion would create a cycle")
            if node in visited:
                raise CycleDetected("cycle in existing children")
            visited.add(node)
            existing = proposals.get(node)
            if isinstance(existing, CompositeProposal):
                stack.extend(existing.children)


def leaf_ids(composite: CompositeProposal, proposals: dict) -> list:
    """All elementary descendants, in tree order; raises CycleDetected."""
    leaves: list[str] = []
    stack = list(reversed(composite.children))
    visited = {composite.proposal_id}
    while stack:
        pid = stack.pop()
        if pid in visited:
            raise CycleDetected(f"cycle through {pid!r}")
        visited.add(pid)
        node = proposals.get(pid)
        if node is None:
            raise UnknownProposal(f"unknown proposal {pid!r}")
        if isinstance(node, CompositeProposal):
            stack.extend(reversed(node.children))
        else:
            leaves.append(pid)
    return leaves


def composite_status(composite: CompositeProposal, proposals: dict,
                     statuses: Optional[dict] = None) -> CollectiveDecision:
    """Conjunctive lift: approved iff every leaf approved; any rejected leaf
    rejects the whole; unresolved beats pending."""
    status_of = statuses or {}
    leaf_statuses = []
    for pid in leaf_ids(composite, proposals):
        leaf_statuses.append(status_of.get(pid, proposals[pid].collective_decision))
    if any(s is CollectiveDecision.REJECTED for s in leaf_statuses):
        return CollectiveDecision.REJECTED
    if any(s is CollectiveDecision.UNRESOLVED for s in leaf_statuses):
        return CollectiveDecision.UNRESOLVED
    if leaf_statuses and all(s is CollectiveDecision.APPROVED for s in leaf_statuses):
        return CollectiveDecision.APPROVED
    return CollectiveDecision.PENDING
