"""Turns individual decisions into per-proposal scores and collective outcomes.

All arithmetic is exact rational arithmetic: the strict threshold means a
score of exactly 1, and 2/3 has no binary floating point representation.
Scores are ratios of weighted approval to total submitted binding weight,
so they are invariant under rescaling every expertise weight.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from typing import Optional, Sequence

from .canonical import as_fraction, frac_str
from .domain import AgreementKind, AgreementThreshold, CollectiveDecision, Decision, composite_status
from .errors import EmptyRound, QuorumNotReached


class Outcome(Enum):
    APPROVED = "approved"
    NOT_APPROVED = "notApproved"


class RoundStatus(Enum):
    """Per-proposal resolution of one aggregation pass."""

    MET = "met"                # weighted approval met the threshold
    ELIMINATED = "eliminated"  # lost its conflict set to an approved winner
    REJECTED = "rejected"      # decisively rejected (single election only)
    UNDECIDED = "undecided"    # neither; iterates or awaits the moderator


@dataclass(frozen=True)
class ThresholdMap:
    """Numeric mapping of the named thresholds; configurable per deployment.

    ``low`` is exceeded strictly (a true majority), the others are met with
    >=; ``strict`` always requires a score of exactly 1.
    """

    low: Fraction = Fraction(1, 2)
    medium: Fraction = Fraction(2, 3)
    high: Fraction = Fraction(4, 5)

    def value(self, threshold: AgreementThreshold) -> Fraction:
        if threshold is AgreementThreshold.STRICT:
            return Fraction(1)
        return getattr(self, threshold.value)

    def meets(self, score: Fraction, threshold: AgreementThreshold,
              override: Optional[Fraction] = None) -> bool:
        if override is not None:
            return score >= override
        if threshold is AgreementThreshold.STRICT:
            return score == 1
        if threshold is AgreementThreshold.LOW:
            return score > self.low
        return score >= self.value(threshold)


DEFAULT_THRESHOLDS = ThresholdMap()


def threshold_value(threshold: AgreementThreshold,
                    mapping: Optional[ThresholdMap] = None) -> Fraction:
    return (mapping or DEFAULT_THRESHOLDS).value(threshold)


def meets(score: Fraction, threshold: AgreementThreshold,
          override: Optional[Fraction] = None,
          mapping: Optional[ThresholdMap] = None) -> bool:
    return (mapping or DEFAULT_THRESHOLDS).meets(score, threshold, override)


def derive_kind(decision: Decision, pref_kind) -> AgreementKind:
    """Effective agreement of a decision under the collaboration's preference.

    yesNo keeps the submitted kind; under rating, 4 and 5 count as approval,
    1 and 2 as reject, and the middle rating 3 as a refinement request.
    """
    if getattr(pref_kind, "value", pref_kind) != "rating":
        return decision.kind
    r = decision.rating
    if r is None:
        return decision.kind
    if r >= 4:
        return AgreementKind.APPROVAL
    if r <= 2:
        return AgreementKind.REJECT
    return AgreementKind.REFINEMENT


@dataclass(frozen=True, kw_only=True)
class RoundTally:
    proposal_id: str
    round: int
    weighted_approval: Fraction
    total_weight: Fraction
    score: Fraction
    voter_count: int
    derived_outcome: Optional[Outcome] = None  # set once the threshold is applied
    mean_rating: Optional[Fraction] = None     # rating mode only

    def to_json(self) -> dict:
        return {
            "proposalId": self.proposal_id,
            "round": self.round,
            "weightedApproval": frac_str(self.weighted_approval),
            "totalWeight": frac_str(self.total_weight),
            "score": frac_str(self.score),
            "voterCount": self.voter_count,
            "derivedOutcome": self.derived_outcome.value if self.derived_outcome else None,
            "meanRating": frac_str(self.mean_rating) if self.mean_rating is not None else None,
        }

    @staticmethod
    def from_json(d: dict) -> "RoundTally":
        return RoundTally(
            proposal_id=d["proposalId"],
            round=d["round"],
            weighted_approval=as_fraction(d["weightedApproval"]),
            total_weight=as_fraction(d["totalWeight"]),
            score=as_fraction(d["score"]),
            voter_count=d["voterCount"],
            derived_outcome=Outcome(d["derivedOutcome"]) if d.get("derivedOutcome") else None,
            mean_rating=as_fraction(d["meanRating"]) if d.get("meanRating") is not None else None,
        )


def effective_decisions(decisions: Sequence[Decision], round_no: int) -> dict:
    """Binding decisions of a round, last submission per decision maker wins.

    Returns ``{proposal_id: {decision_maker_id: Decision}}``.
    """
    result: dict[str, dict[str, Decision]] = {}
    for d in decisions:
        if d.round != round_no or not d.binding:
            continue
        result.setdefault(d.proposal_id, {})[d.decision_maker_id] = d
    return result


def quorum_size(eligible_count: int) -> int:
    return (eligible_count + 1) // 2


def quorum_deficits(live_proposal_ids: Sequence[str], by_proposal: dict,
                    eligible_count: int) -> dict:
    """Missing binding-decision counts per proposal; empty when quorum holds."""
    need = quorum_size(eligible_count)
    deficits: dict[str, int] = {}
    for pid in live_proposal_ids:
        have = len(by_proposal.get(pid, {}))
        if have < need:
            deficits[pid] = need - have
    return deficits


def _tally_from(proposal_id: str, round_no: int, by_dm: dict, weights: dict,
                pref_kind=None, decide=None) -> RoundTally:
    if not by_dm:
        raise EmptyRound(f"no binding decisions for {proposal_id!r} in round {round_no}")
    approval = Fraction(0)
    total = Fraction(0)
    rating_weight = Fraction(0)
    rating_sum = Fraction(0)
    rating_mode = getattr(pref_kind, "value", pref_kind) == "rating"
    for dm_id, d in by_dm.items():
        w = weights[dm_id]
        total += w
        if derive_kind(d, pref_kind) is AgreementKind.APPROVAL:
            approval += w
        if rating_mode and d.rating is not None:
            rating_weight += w
            rating_sum += w * d.rating
    score = approval / total
    return RoundTally(
        proposal_id=proposal_id,
        round=round_no,
        weighted_approval=approval,
        total_weight=total,
        score=score,
        voter_count=len(by_dm),
        derived_outcome=decide(score) if decide is not None else None,
        mean_rating=(rating_sum / rating_weight) if rating_weight else None,
    )


def approval_score(proposal_id: str, round_no: int, decisions: Sequence[Decision],
                   weights: dict, pref_kind=None) -> RoundTally:
    """Weighted approval ratio over the submitted binding decisions.

    Rejections and refinement requests count in the denominator; abstainers
    (decision makers with no submission) count in neither sum.
    """
    by_dm = effective_decisions(decisions, round_no).get(proposal_id, {})
    return _tally_from(proposal_id, round_no, by_dm, weights, pref_kind)


def conflict_components(proposals: Sequence) -> list:
    """Connected components (size >= 2) of the conflict graph over the given
    proposals; conflict links to proposals outside the set are ignored."""
    by_id = {p.proposal_id: p for p in proposals}
    seen: set[str] = set()
    components: list[list[str]] = []
    for pid in by_id:
        if pid in seen:
            continue
        stack, comp = [pid], []
        seen.add(pid)
        while stack:
            cur = stack.pop()
            comp.append(cur)
            for other in sorted(by_id[cur].conflicts_with):
                if other in by_id and other not in seen:
                    seen.add(other)
                    stack.append(other)
        if len(comp) > 1:
            components.append(sorted(comp))
    return components


def _winner_key(proposal, tally: RoundTally):
    # highest score, then highest weighted mean rating, then earliest
    # creation, then lexicographically smallest id
    rating = tally.mean_rating if tally.mean_rating is not None else Fraction(0)
    return (-tally.score, -rating, proposal.created_at, proposal.proposal_id)


def resolve_conflicts(component: Sequence[str], proposals_by_id: dict,
                      tallies: dict, met: dict) -> Optional[str]:
    """At most one proposal of a conflict set may be approved: among the
    members meeting the threshold, the best tally wins. Returns the winner
    id, or None when no member met the threshold."""
    candidates = [pid for pid in component if met.get(pid)]
    if not candidates:
        return None
    candidates.sort(key=lambda pid: _winner_key(proposals_by_id[pid], tallies[pid]))
    return candidates[0]


@dataclass(frozen=True, kw_only=True)
class RoundResult:
    round: int
    tallies: dict           # proposalId -> RoundTally (threshold applied)
    statuses: dict          # proposalId -> RoundStatus
    winners: dict           # eliminated proposalId -> winning proposalId
    converged: bool
    composite_statuses: dict  # compositeId -> CollectiveDecision for this pass


def aggregate_round(*, proposals: Sequence, decisions: Sequence[Decision],
                    weights: dict, threshold: AgreementThreshold,
                    override: Optional[Fraction] = None,
                    single_election: bool, pref_kind=None,
                    eligible_count: int, round_no: int,
                    mapping: Optional[ThresholdMap] = None,
                    all_proposals: Optional[dict] = None,
                    check_quorum: bool = True) -> RoundResult:
    """One aggregation pass over the closed round's binding decisions.

    Proposals meeting the threshold are approvable; conflict sets keep at
    most one of them. Under a single election the remaining proposals are
    decisively rejected when the complementary (non-approval) share itself
    meets the threshold, and stay undecided otherwise; under an iterative
    policy they stay undecided and go back to adjustment. The round
    converged when nothing is left undecided (conflict-eliminated proposals
    do not block convergence).
    """
    mapping = mapping or DEFAULT_THRESHOLDS
    by_proposal = effective_decisions(decisions, round_no)
    live_ids = [p.proposal_id for p in proposals]
    if check_quorum:
        deficits = quorum_deficits(live_ids, by_proposal, eligible_count)
        if deficits:
            raise QuorumNotReached(deficits)

    by_id = {p.proposal_id: p for p in proposals}
    tallies: dict[str, RoundTally] = {}
    met: dict[str, bool] = {}

    def decide(score):
        return Outcome.APPROVED if mapping.meets(score, threshold, override) \
            else Outcome.NOT_APPROVED

    for pid in live_ids:
        tally = _tally_from(pid, round_no, by_proposal.get(pid, {}), weights,
                            pref_kind, decide)
        tallies[pid] = tally
        met[pid] = tally.derived_outcome is Outcome.APPROVED

    statuses: dict[str, RoundStatus] = {}
    winners: dict[str, str] = {}
    in_resolved_component: set[str] = set()
    for component in conflict_components(proposals):
        winner = resolve_conflicts(component, by_id, tallies, met)
        if winner is None:
            continue
        for pid in component:
            in_resolved_component.add(pid)
            if pid == winner:
                statuses[pid] = RoundStatus.MET
            else:
                statuses[pid] = RoundStatus.ELIMINATED
                winners[pid] = winner

    for pid in live_ids:
        if pid in in_resolved_component:
            continue
        if met[pid]:
            statuses[pid] = RoundStatus.MET
        elif single_election and mapping.meets(1 - tallies[pid].score, threshold, override):
            statuses[pid] = RoundStatus.REJECTED
        else:
            statuses[pid] = RoundStatus.UNDECIDED

    converged = all(s is not RoundStatus.UNDECIDED for s in statuses.values())

    composite_statuses: dict[str, CollectiveDecision] = {}
    if all_proposals:
        as_collective = {
            RoundStatus.MET: CollectiveDecision.APPROVED,
            RoundStatus.ELIMINATED: CollectiveDecision.REJECTED,
            RoundStatus.REJECTED: CollectiveDecision.REJECTED,
            RoundStatus.UNDECIDED: CollectiveDecision.PENDING,
        }
        leaf_statuses = {pid: as_collective[s] for pid, s in statuses.items()}
        from .domain import CompositeProposal
        for p in all_proposals.values():
            if isinstance(p, CompositeProposal):
                composite_statuses[p.proposal_id] = composite_status(p, all_proposals, leaf_statuses)

    return RoundResult(round=round_no, tallies=tallies, statuses=statuses,
                       winners=winners, converged=converged,
                       composite_statuses=composite_statuses)
