"""The collaboration state machine.

Owns every legal transition from creation to closure: the common path
(define situation, choose method, notify, elaborate, evaluate, aggregate),
the iterative adjust-and-revote loop, and the single-election moderator
branch (adjust threshold or one re-evaluation). Every accepted command is
appended to the durable log before its effects become visible, and every
emitted event goes through the notification bus; replaying the command log
reconstructs bit-identical state including event sequence numbers.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, replace
from typing import Optional

from . import notation
from .aggregation import (
    RoundResult,
    RoundStatus,
    ThresholdMap,
    aggregate_round,
    effective_decisions,
    quorum_deficits,
)
from .bus import Event, EventKind, NotificationBus
from .canonical import as_fraction, frac_str
from .domain import (
    AgreementKind,
    AlternativeProposal,
    Collaboration,
    CollaborativeWorkProduct,
    CollectiveDecision,
    Comment,
    CompositeProposal,
    Decision,
    ElementaryProposal,
    InvolvedUser,
    LifecycleState,
    add_conflict,
    check_forest,
    composite_status,
    validate_decision,
)
from .errors import (
    DuplicateId,
    GdmError,
    InvalidPolicy,
    InvalidThreshold,
    NotEligible,
    NotModerator,
    QuorumNotReached,
    ReplayMismatch,
    SecondReevaluation,
    UnknownCollaboration,
    UnknownPolicy,
    UnknownProposal,
    ValidationError,
    WrongState,
)
from .eventlog import LogStore, load_snapshot, make_record, write_snapshot
from .ids import IdGenerator, SystemClock
from .policies import (
    IterationClass,
    PolicyRepository,
    SelectionCriteria,
    bind_criteria,
    eligible_decision_makers,
    validate_policy,
)

S = LifecycleState


@dataclass(frozen=True, kw_only=True)
class Transition:
    from_state: LifecycleState
    to_state: LifecycleState
    actor_id: str
    command: str
    at: int

    def to_json(self) -> dict:
        return {"from": self.from_state.value, "to": self.to_state.value,
                "actorId": self.actor_id, "command": self.command, "at": self.at}


@dataclass(frozen=True)
class CommandSpec:
    states: frozenset
    moderator_only: bool


# The static command table: anything outside it is rejected with WrongState
# and leaves the collaboration untouched.
COMMANDS: dict[str, CommandSpec] = {
    "defineSituation": CommandSpec(frozenset({S.DRAFT}), True),
    "chooseMethod": CommandSpec(frozenset({S.CONFIGURED}), True),
    "notifyActors": CommandSpec(frozenset({S.METHOD_CHOSEN}), True),
    "addProposal": CommandSpec(frozenset({S.ELABORATION, S.ADJUSTING_PROPOSALS}), False),
    "addAlternative": CommandSpec(
        frozenset({S.ELABORATION, S.EVALUATION_OPEN, S.ADJUSTING_PROPOSALS}), False),
    "addConflict": CommandSpec(
        frozenset({S.ELABORATION, S.EVALUATION_OPEN, S.ADJUSTING_PROPOSALS}), False),
    "openEvaluation": CommandSpec(frozenset({S.ELABORATION}), True),
    "submitDecision": CommandSpec(frozenset({S.EVALUATION_OPEN}), False),
    "closeRound": CommandSpec(frozenset({S.EVALUATION_OPEN}), True),
    "moderatorChoice": CommandSpec(frozenset({S.AWAITING_MODERATOR_CHOICE}), True),
    "adjustProposals": CommandSpec(frozenset({S.ADJUSTING_PROPOSALS}), False),
}


class Engine:
    """Command executor over a store of collaborations.

    Commands against one collaboration are serialized by a per-collaboration
    lock; distinct collaborations proceed in parallel. The log writer is a
    single appender owned by this engine.
    """

    def __init__(self, *, policies: Optional[PolicyRepository] = None,
                 registry: Optional[notation.RelationshipRegistry] = None,
                 log: Optional[LogStore] = None,
                 clock=None, idgen: Optional[IdGenerator] = None,
                 threshold_map: Optional[ThresholdMap] = None):
        self.policies = policies or PolicyRepository()
        self.registry = registry or notation.builtin_registry()
        self.log = log
        self.clock = clock or SystemClock()
        self.idgen = idgen or IdGenerator(self.clock)
        self.threshold_map = threshold_map or ThresholdMap()
        self.bus = NotificationBus(audit=self._append_audit)
        self._collabs: dict[str, Collaboration] = {}
        self._events: dict[str, list] = {}
        self._transitions: dict[str, list] = {}
        self._event_seq: dict[str, int] = {}
        self._rec_seq: dict[str, int] = {}
        self._locks: dict[str, threading.RLock] = {}
        self._global = threading.RLock()
        self._replaying = False

    # -- store access ----------------------------------------------------------

    def _lock_for(self, cid: str) -> threading.RLock:
        with self._global:
            return self._locks.setdefault(cid, threading.RLock())

    def get(self, cid: str) -> Collaboration:
        try:
            return self._collabs[cid]
        except KeyError:
            raise UnknownCollaboration(f"unknown collaboration {cid!r}") from None

    def collaboration_ids(self) -> list:
        with self._global:
            return sorted(self._collabs)

    def events(self, cid: str, from_seq: int = 0) -> list:
        self.get(cid)
        return [e for e in self._events.get(cid, []) if e.seq >= from_seq]

    def transitions(self, cid: str) -> list:
        self.get(cid)
        return list(self._transitions.get(cid, []))

    # -- logging ----------------------------------------------------------------

    def _append(self, cid: str, rec_type: str, payload: dict) -> None:
        if self._replaying:
            return
        seq = self._rec_seq.get(cid, 0) + 1
        self._rec_seq[cid] = seq
        if self.log is not None:
            self.log.append(make_record(seq, cid, rec_type, payload))

    def _append_audit(self, cid: str, payload: dict) -> None:
        self._append(cid, "audit", payload)

    def _publish(self, collab: Collaboration, kind: EventKind, payload: dict, at: int) -> None:
        cid = collab.collaboration_id
        seq = self._event_seq.get(cid, 0) + 1
        self._event_seq[cid] = seq
        event = Event(seq=seq, collaboration_id=cid, kind=kind, payload=payload, at=at)
        self._events.setdefault(cid, []).append(event)
        self._append(cid, "event", event.to_json())  # durable before delivery
        self.bus.publish(event)

    def _transition(self, collab: Collaboration, to_state: LifecycleState,
                    actor: str, command: str, at: int) -> None:
        t = Transition(from_state=collab.state, to_state=to_state,
                       actor_id=actor, command=command, at=at)
        collab.state = to_state
        self._transitions.setdefault(collab.collaboration_id, []).append(t)

    # -- command plumbing ---------------------------------------------------------

    def _execute(self, name: str, cid: str, actor: str, args: dict,
                 at: Optional[int] = None) -> dict:
        with self._lock_for(cid):
            collab = self.get(cid)
            spec = COMMANDS.get(name)
            if spec is None:
                raise WrongState(f"unknown command {name!r}")
            if collab.state not in spec.states:
                raise WrongState(
                    f"{name} is not allowed in state {collab.state.value}")
            if spec.moderator_only and actor != collab.moderator_id:
                raise NotModerator(f"{name} is reserved to the moderator")
            if at is None:
                at = self.clock.now_ms()
            check = getattr(self, f"_check_{name}")
            check(collab, actor, args, at)
            # validation is complete: log first, then apply (apply cannot fail)
            self._append(cid, "command", {
                "name": name, "collaborationId": cid, "actorId": actor,
                "args": args, "at": at,
            })
            apply = getattr(self, f"_apply_{name}")
            return apply(collab, actor, args, at)

    # -- createCollaboration -------------------------------------------------------

    def create_collaboration(self, involved_users, collaboration_id: Optional[str] = None,
                             actor: Optional[str] = None, at: Optional[int] = None) -> dict:
        users_json = [u.to_json() if isinstance(u, InvolvedUser) else dict(u)
                      for u in involved_users]
        cid = collaboration_id or self.idgen.new_id("c-")
        args = {"collaborationId": cid, "involvedUsers": users_json}
        with self._global:
            if cid in self._collabs:
                raise DuplicateId(f"collaboration {cid!r} already exists")
            if at is None:
                at = self.clock.now_ms()
            users = tuple(InvolvedUser.from_json(u) for u in users_json)
            collab = Collaboration(collaboration_id=cid, involved_users=users,
                                   created_at=at)
            creator = actor or collab.moderator_id
            self._append(cid, "command", {
                "name": "createCollaboration", "collaborationId": cid,
                "actorId": creator, "args": args, "at": at,
            })
            self._collabs[cid] = collab
            self.bus.add_subject(cid, cid)
            return collab.to_json()

    # -- defineSituation -------------------------------------------------------------

    def define_situation(self, cid: str, actor: str, intent: str,
                         deadline: Optional[int] = None) -> dict:
        return self._execute("defineSituation", cid, actor,
                             {"intent": intent, "deadline": deadline})

    def _check_defineSituation(self, collab, actor, args, at):
        if not str(args.get("intent", "")).strip():
            raise ValidationError("intent must be non-empty")

    def _apply_defineSituation(self, collab, actor, args, at):
        collab.intent = args["intent"]
        collab.deadline = args.get("deadline")
        self._transition(collab, S.CONFIGURED, actor, "defineSituation", at)
        return collab.to_json()

    # -- chooseMethod ------------------------------------------------------------------

    def choose_method(self, cid: str, actor: str, policy_id: str,
                      threshold_override=None, criteria: Optional[dict] = None) -> dict:
        args: dict = {"policyId": policy_id}
        if threshold_override is not None:
            args["thresholdOverride"] = frac_str(as_fraction(threshold_override))
        if criteria is not None:
            args["criteria"] = criteria
        return self._execute("chooseMethod", cid, actor, args)

    def _resolve_policy(self, collab, args):
        try:
            policy = self.policies.get(args["policyId"])
        except UnknownPolicy as exc:
            raise InvalidPolicy(str(exc)) from None
        if args.get("criteria") is not None:
            policy = bind_criteria(policy, SelectionCriteria.from_json(args["criteria"]))
        violations = validate_policy(policy)
        if violations:
            raise InvalidPolicy("; ".join(violations))
        override = None
        if args.get("thresholdOverride") is not None:
            override = as_fraction(args["thresholdOverride"])
            if not 0 < override <= 1:
                raise InvalidPolicy("threshold override must be in (0,1]")
            from .domain import AgreementThreshold
            if policy.co_decision.threshold is AgreementThreshold.STRICT and override != 1:
                raise InvalidPolicy(f"{policy.name}: strict required")
        eligible = eligible_decision_makers(collab, policy)
        return policy, override, eligible

    def _check_chooseMethod(self, collab, actor, args, at):
        self._resolve_policy(collab, args)

    def _apply_chooseMethod(self, collab, actor, args, at):
        policy, override, eligible = self._resolve_policy(collab, args)
        collab.adopted_policy_id = policy.policy_id
        collab.policy = policy
        collab.threshold_override = override
        collab.eligible_dms = eligible
        self._transition(collab, S.METHOD_CHOSEN, actor, "chooseMethod", at)
        return collab.to_json()

    # -- notifyActors ---------------------------------------------------------------------

    def notify_actors(self, cid: str, actor: str) -> dict:
        return self._execute("notifyActors", cid, actor, {})

    def _check_notifyActors(self, collab, actor, args, at):
        pass

    def _apply_notifyActors(self, collab, actor, args, at):
        self._transition(collab, S.NOTIFIED, actor, "notifyActors", at)
        for dm in sorted(collab.eligible_dms):
            self._publish(collab, EventKind.ACTOR_ASSIGNED,
                          {"userId": dm, "role": "decisionMaker"}, at)
            self._publish(collab, EventKind.EVALUATION_REQUESTED,
                          {"userId": dm, "round": collab.current_round + 1}, at)
        self.bus.auto_register_eligible(collab, at)
        # nothing happens between notification and drafting: advance directly
        self._transition(collab, S.ELABORATION, actor, "notifyActors", at)
        return collab.to_json()

    # -- addProposal -----------------------------------------------------------------------

    def add_proposal(self, cid: str, actor: str, *, proposal_id: Optional[str] = None,
                     title: str = "", body: str = "", children=None) -> dict:
        args = {
            "proposalId": proposal_id or self.idgen.new_id("p-"),
            "title": title, "body": body,
        }
        if children is not None:
            args["children"] = list(children)
        return self._execute("addProposal", cid, actor, args)

    def _check_author(self, collab, actor):
        if actor != collab.moderator_id and actor not in collab.eligible_dms:
            raise NotEligible(f"{actor!r} may not contribute proposals")

    def _check_addProposal(self, collab, actor, args, at):
        self._check_author(collab, actor)
        pid = args["proposalId"]
        if pid in collab.proposals:
            raise DuplicateId(f"proposal {pid!r} already exists")
        if args.get("children") is not None:
            children = tuple(args["children"])
            if not children:
                raise ValidationError("composite proposal needs at least one child")
            check_forest(collab.proposals, pid, children)

    def _canonical_body(self, body: str) -> str:
        parsed = notation.try_parse(body, self.registry)
        return notation.render(parsed) if parsed is not None else body

    def _apply_addProposal(self, collab, actor, args, at):
        pid = args["proposalId"]
        if args.get("children") is not None:
            proposal = CompositeProposal(
                proposal_id=pid, title=args.get("title", ""), author_id=actor,
                created_at=at, children=tuple(args["children"]))
        else:
            proposal = ElementaryProposal(
                proposal_id=pid, title=args.get("title", ""), author_id=actor,
                created_at=at, body=self._canonical_body(args.get("body", "")))
        collab.proposals[pid] = proposal
        self.bus.add_subject(pid, collab.collaboration_id)
        self._publish(collab, EventKind.PROPOSAL_CREATED, {
            "proposalId": pid, "title": proposal.title,
            "authorId": actor, "kind": proposal.kind,
        }, at)
        self.bus.auto_register_eligible(collab, at)
        return proposal.to_json()

    # -- addAlternative -------------------------------------------------------------------------

    def add_alternative(self, cid: str, actor: str, *, refines: str,
                        proposal_id: Optional[str] = None, title: str = "",
                        body: str = "", conflictual: bool = False) -> dict:
        args = {
            "proposalId": proposal_id or self.idgen.new_id("p-"),
            "refines": refines, "title": title, "body": body,
            "conflictual": bool(conflictual),
        }
        return self._execute("addAlternative", cid, actor, args)

    def _check_addAlternative(self, collab, actor, args, at):
        self._check_author(collab, actor)
        pid = args["proposalId"]
        if pid in collab.proposals:
            raise DuplicateId(f"proposal {pid!r} already exists")
        target = collab.proposal(args["refines"])
        if isinstance(target, CompositeProposal):
            raise ValidationError("alternatives refine elementary proposals")
        if target.withdrawn or target.collective_decision is not CollectiveDecision.PENDING:
            raise WrongState(f"{target.proposal_id!r} is no longer open to refinement")

    def _apply_addAlternative(self, collab, actor, args, at):
        pid = args["proposalId"]
        conflictual = bool(args.get("conflictual", False))
        proposal = AlternativeProposal(
            proposal_id=pid, title=args.get("title", ""), author_id=actor,
            created_at=at, body=self._canonical_body(args.get("body", "")),
            refines=args["refines"], conflictual=conflictual)
        collab.proposals[pid] = proposal
        if conflictual:
            add_conflict(pid, args["refines"], collab.proposals)
        self.bus.add_subject(pid, collab.collaboration_id)
        self._publish(collab, EventKind.ALTERNATIVE_PROPOSED, {
            "proposalId": pid, "refines": args["refines"],
            "conflictual": conflictual, "authorId": actor,
        }, at)
        self.bus.auto_register_eligible(collab, at)
        return collab.proposals[pid].to_json()

    # -- addConflict ---------------------------------------------------------------------------------

    def add_conflict(self, cid: str, actor: str, proposal_id: str, other_id: str) -> dict:
        return self._execute("addConflict", cid, actor,
                             {"proposalId": proposal_id, "otherId": other_id})

    def _check_addConflict(self, collab, actor, args, at):
        self._check_author(collab, actor)
        from .errors import SelfConflict
        if args["proposalId"] == args["otherId"]:
            raise SelfConflict("a proposal cannot conflict with itself")
        collab.proposal(args["proposalId"])
        collab.proposal(args["otherId"])

    def _apply_addConflict(self, collab, actor, args, at):
        add_conflict(args["proposalId"], args["otherId"], collab.proposals)
        return collab.proposals[args["proposalId"]].to_json()

    # -- openEvaluation ---------------------------------------------------------------------------------

    def open_evaluation(self, cid: str, actor: str) -> dict:
        return self._execute("openEvaluation", cid, actor, {})

    def _check_openEvaluation(self, collab, actor, args, at):
        pass

    def _apply_openEvaluation(self, collab, actor, args, at):
        collab.current_round += 1
        self._transition(collab, S.EVALUATION_OPEN, actor, "openEvaluation", at)
        return collab.to_json()

    # -- submitDecision ----------------------------------------------------------------------------------

    def submit_decision(self, cid: str, actor: str, *, proposal_id: str, kind: str,
                        rating: Optional[int] = None, comment: Optional[str] = None,
                        alternative_id: Optional[str] = None, binding: bool = True) -> dict:
        args = {
            "proposalId": proposal_id, "kind": kind, "rating": rating,
            "comment": comment, "alternativeId": alternative_id,
            "binding": bool(binding),
        }
        return self._execute("submitDecision", cid, actor, args)

    def _build_decision(self, collab, actor, args, at) -> Decision:
        comment = None
        if args.get("comment") and str(args["comment"]).strip():
            comment = Comment(author_id=actor, text=args["comment"], created_at=at)
        return Decision(
            decision_maker_id=actor,
            proposal_id=args["proposalId"],
            round=collab.current_round,
            kind=AgreementKind(args["kind"]),
            rating=args.get("rating"),
            comment=comment,
            alternative_id=args.get("alternativeId"),
            submitted_at=at,
            binding=args.get("binding", True),
        )

    def _check_submitDecision(self, collab, actor, args, at):
        proposal = collab.proposal(args["proposalId"])
        if getattr(proposal, "withdrawn", False) \
                or proposal.collective_decision is not CollectiveDecision.PENDING:
            raise WrongState(f"{proposal.proposal_id!r} is no longer under evaluation")
        try:
            decision = self._build_decision(collab, actor, args, at)
        except ValueError as exc:
            raise ValidationError(str(exc)) from None
        validate_decision(decision, collab.policy.co_decision.preference_kind, collab)

    def _apply_submitDecision(self, collab, actor, args, at):
        decision = self._build_decision(collab, actor, args, at)
        collab.decisions.append(decision)
        self._publish(collab, EventKind.DECISION_RECORDED, {
            "proposalId": decision.proposal_id,
            "decisionMakerId": actor,
            "round": decision.round,
            "kind": decision.kind.value,
            "binding": decision.binding,
        }, at)
        return decision.to_json()

    # -- closeRound ----------------------------------------------------------------------------------------

    def close_round(self, cid: str, actor: str) -> dict:
        return self._execute("closeRound", cid, actor, {})

    def _check_closeRound(self, collab, actor, args, at):
        live = [p.proposal_id for p in collab.live_elementary()]
        by_proposal = effective_decisions(collab.decisions, collab.current_round)
        deficits = quorum_deficits(live, by_proposal, len(collab.eligible_dms))
        if deficits:
            raise QuorumNotReached(deficits)

    def _apply_closeRound(self, collab, actor, args, at):
        self._transition(collab, S.EVALUATION_CLOSED, actor, "closeRound", at)
        self._publish(collab, EventKind.ROUND_CLOSED, {"round": collab.current_round}, at)
        self._aggregate_and_route(collab, actor, "closeRound", at)
        return self._round_report(collab)

    def _round_report(self, collab) -> dict:
        return {
            "collaborationId": collab.collaboration_id,
            "state": collab.state.value,
            "round": collab.current_round,
            "tallies": {pid: t.to_json() for pid, t in sorted(collab.tallies.items())},
        }

    # -- aggregation and routing ------------------------------------------------------------------------------

    def _aggregate_and_route(self, collab, actor: str, command: str, at: int) -> None:
        policy = collab.policy
        single = policy.iteration_class is IterationClass.SINGLE_ELECTION
        result = aggregate_round(
            proposals=collab.live_elementary(),
            decisions=collab.decisions,
            weights=collab.weights(),
            threshold=policy.co_decision.threshold,
            override=collab.threshold_override,
            single_election=single,
            pref_kind=policy.co_decision.preference_kind,
            eligible_count=len(collab.eligible_dms),
            round_no=collab.current_round,
            mapping=self.threshold_map,
            all_proposals=collab.proposals,
        )
        collab.tallies.update(result.tallies)
        self._transition(collab, S.AGGREGATED, actor, command, at)
        effective = collab.threshold_override if collab.threshold_override is not None \
            else self.threshold_map.value(policy.co_decision.threshold)
        for pid in sorted(result.tallies):
            tally = result.tallies[pid]
            if tally.derived_outcome is not None and tally.derived_outcome.value == "notApproved":
                self._publish(collab, EventKind.THRESHOLD_MISSED, {
                    "proposalId": pid, "round": collab.current_round,
                    "score": frac_str(tally.score), "threshold": frac_str(effective),
                    "thresholdName": policy.co_decision.threshold.value,
                }, at)

        if result.converged:
            self._finalize(collab, result, actor, command, at)
        elif policy.iteration_class is IterationClass.ITERATIVE:
            if collab.current_round < policy.max_rounds:
                self._transition(collab, S.ADJUSTING_PROPOSALS, actor, command, at)
            else:
                self._finalize(collab, result, actor, command, at)
        else:
            if collab.final_round_forced:
                self._finalize(collab, result, actor, command, at)
            else:
                self._transition(collab, S.AWAITING_MODERATOR_CHOICE, actor, command, at)

    _FINAL_STATUS = {
        RoundStatus.MET: CollectiveDecision.APPROVED,
        RoundStatus.ELIMINATED: CollectiveDecision.REJECTED,
        RoundStatus.REJECTED: CollectiveDecision.REJECTED,
        RoundStatus.UNDECIDED: CollectiveDecision.UNRESOLVED,
    }

    def _finalize(self, collab, result: RoundResult, actor: str, command: str, at: int) -> None:
        for pid, proposal in collab.proposals.items():
            if isinstance(proposal, CompositeProposal):
                continue
            if proposal.withdrawn or proposal.collective_decision is not CollectiveDecision.PENDING:
                continue
            status = self._FINAL_STATUS[result.statuses[pid]]
            collab.proposals[pid] = replace(proposal, collective_decision=status)
            tally = result.tallies.get(pid)
            self._publish(collab, EventKind.COLLECTIVE_DECISION_PUBLISHED, {
                "proposalId": pid, "decision": status.value,
                "round": collab.current_round,
                "score": frac_str(tally.score) if tally else None,
            }, at)
        for pid, proposal in collab.proposals.items():
            if not isinstance(proposal, CompositeProposal):
                continue
            status = composite_status(proposal, collab.proposals)
            collab.proposals[pid] = replace(proposal, collective_decision=status)
            self._publish(collab, EventKind.COLLECTIVE_DECISION_PUBLISHED, {
                "proposalId": pid, "decision": status.value,
                "round": collab.current_round, "score": None,
            }, at)
        approved = frozenset(
            pid for pid, p in collab.proposals.items()
            if p.collective_decision is CollectiveDecision.APPROVED)
        unresolved = sum(
            1 for p in collab.proposals.values()
            if p.collective_decision is CollectiveDecision.UNRESOLVED)
        collab.work_product = CollaborativeWorkProduct(
            collaboration_id=collab.collaboration_id,
            approved_proposal_ids=approved,
            closed_at=at, final_round=collab.current_round)
        self._transition(collab, S.CLOSED, actor, command, at)
        self._publish(collab, EventKind.COLLABORATION_CLOSED, {
            "finalRound": collab.current_round,
            "approvedProposalIds": sorted(approved),
            "unresolvedCount": unresolved,
        }, at)

    # -- moderatorChoice ---------------------------------------------------------------------------------------

    def moderator_choice(self, cid: str, actor: str, choice: str,
                         new_threshold=None) -> dict:
        args: dict = {"choice": choice}
        if new_threshold is not None:
            args["newThreshold"] = frac_str(as_fraction(new_threshold))
        return self._execute("moderatorChoice", cid, actor, args)

    def _check_moderatorChoice(self, collab, actor, args, at):
        choice = args.get("choice")
        if choice == "adjustThreshold":
            if args.get("newThreshold") is None:
                raise InvalidThreshold("adjustThreshold requires a new value")
            value = as_fraction(args["newThreshold"])
            if not 0 < value <= 1:
                raise InvalidThreshold("threshold must be in (0,1]")
        elif choice == "reevaluate":
            if collab.reevaluate_used:
                raise SecondReevaluation("a collaboration re-evaluates at most once")
        else:
            raise ValidationError(f"unknown moderator choice {choice!r}")

    def _apply_moderatorChoice(self, collab, actor, args, at):
        if args["choice"] == "adjustThreshold":
            value = as_fraction(args["newThreshold"])
            collab.threshold_override = value
            self._publish(collab, EventKind.THRESHOLD_ADJUSTED, {
                "newThreshold": frac_str(value), "round": collab.current_round,
            }, at)
            # re-run aggregation over the same round's decisions
            self._aggregate_and_route(collab, actor, "moderatorChoice", at)
        else:
            collab.reevaluate_used = True
            collab.final_round_forced = True
            collab.current_round += 1
            self._transition(collab, S.EVALUATION_OPEN, actor, "moderatorChoice", at)
            for dm in sorted(collab.eligible_dms):
                self._publish(collab, EventKind.EVALUATION_REQUESTED,
                              {"userId": dm, "round": collab.current_round}, at)
        return self._round_report(collab)

    # -- adjustProposals ------------------------------------------------------------------------------------------

    def adjust_proposals(self, cid: str, actor: str, edits) -> dict:
        prepared = []
        for edit in edits:
            edit = dict(edit)
            if edit.get("type") == "attachAlternative" and not edit.get("proposalId"):
                edit["proposalId"] = self.idgen.new_id("p-")
            prepared.append(edit)
        return self._execute("adjustProposals", cid, actor, {"edits": prepared})

    def _check_adjustProposals(self, collab, actor, args, at):
        self._check_author(collab, actor)
        new_ids = set()
        for i, edit in enumerate(args.get("edits", [])):
            kind = edit.get("type")
            if kind == "withdraw":
                target = collab.proposal(edit["proposalId"])
                if target.withdrawn or target.collective_decision is not CollectiveDecision.PENDING:
                    raise WrongState(f"edit {i}: {target.proposal_id!r} is not pending")
            elif kind == "revise":
                target = collab.proposal(edit["proposalId"])
                if isinstance(target, CompositeProposal):
                    raise ValidationError(f"edit {i}: composites carry no body")
                if target.withdrawn or target.collective_decision is not CollectiveDecision.PENDING:
                    raise WrongState(f"edit {i}: {target.proposal_id!r} is not pending")
            elif kind == "attachAlternative":
                pid = edit.get("proposalId")
                if pid in collab.proposals or pid in new_ids:
                    raise DuplicateId(f"edit {i}: proposal {pid!r} already exists")
                new_ids.add(pid)
                target = collab.proposal(edit["refines"])
                if isinstance(target, CompositeProposal):
                    raise ValidationError(f"edit {i}: alternatives refine elementary proposals")
                if target.withdrawn or target.collective_decision is not CollectiveDecision.PENDING:
                    raise WrongState(f"edit {i}: {target.proposal_id!r} is not open to refinement")
            else:
                raise ValidationError(f"edit {i}: unknown edit type {kind!r}")

    def _apply_adjustProposals(self, collab, actor, args, at):
        for edit in args.get("edits", []):
            kind = edit["type"]
            if kind == "withdraw":
                pid = edit["proposalId"]
                proposal = collab.proposals[pid]
                collab.proposals[pid] = replace(
                    proposal, withdrawn=True,
                    collective_decision=CollectiveDecision.REJECTED)
                self._publish(collab, EventKind.COLLECTIVE_DECISION_PUBLISHED, {
                    "proposalId": pid, "decision": "rejected",
                    "round": collab.current_round, "score": None,
                }, at)
            elif kind == "revise":
                pid = edit["proposalId"]
                proposal = collab.proposals[pid]
                collab.proposals[pid] = replace(
                    proposal,
                    body=self._canonical_body(edit.get("body", proposal.body)),
                    title=edit.get("title", proposal.title))
            else:  # attachAlternative
                pid = edit["proposalId"]
                proposal = AlternativeProposal(
                    proposal_id=pid, title=edit.get("title", ""), author_id=actor,
                    created_at=at, body=self._canonical_body(edit.get("body", "")),
                    refines=edit["refines"], conflictual=edit.get("conflictual", False))
                collab.proposals[pid] = proposal
                if proposal.conflictual:
                    add_conflict(pid, proposal.refines, collab.proposals)
                self.bus.add_subject(pid, collab.collaboration_id)
                self._publish(collab, EventKind.ALTERNATIVE_PROPOSED, {
                    "proposalId": pid, "refines": edit["refines"],
                    "conflictual": edit.get("conflictual", False), "authorId": actor,
                }, at)
        self.bus.auto_register_eligible(collab, at)
        collab.current_round += 1
        self._transition(collab, S.EVALUATION_OPEN, actor, "adjustProposals", at)
        for dm in sorted(collab.eligible_dms):
            self._publish(collab, EventKind.EVALUATION_REQUESTED,
                          {"userId": dm, "round": collab.current_round}, at)
        return collab.to_json()

    # -- snapshots and replay ----------------------------------------------------------------------------------------

    def snapshot_state(self) -> dict:
        with self._global:
            return {
                "collaborations": {cid: c.to_snapshot() for cid, c in self._collabs.items()},
                "recSeq": dict(self._rec_seq),
                "eventSeq": dict(self._event_seq),
                "events": {cid: [e.to_json() for e in evs]
                           for cid, evs in self._events.items()},
            }

    def write_snapshot(self, path: str) -> None:
        write_snapshot(path, self.snapshot_state())

    def _restore_state(self, state: dict) -> None:
        for cid, data in state.get("collaborations", {}).items():
            self._collabs[cid] = Collaboration.from_snapshot(data)
            self.bus.add_subject(cid, cid)
            for pid in self._collabs[cid].proposals:
                self.bus.add_subject(pid, cid)
        self._rec_seq.update(state.get("recSeq", {}))
        self._event_seq.update(state.get("eventSeq", {}))
        for cid, evs in state.get("events", {}).items():
            self._events[cid] = [Event.from_json(e) for e in evs]

    @classmethod
    def from_log(cls, log: LogStore, *, snapshot_path: Optional[str] = None,
                 strict: bool = True, **kwargs) -> "Engine":
        """Rebuild an engine by replaying the command log (optionally on top
        of a snapshot); verifies regenerated events against the logged ones."""
        engine = cls(log=None, **kwargs)
        skip_until: dict[str, int] = {}
        preloaded_events: dict[str, int] = {}
        if snapshot_path is not None:
            state = load_snapshot(snapshot_path)
            if state is not None:
                engine._restore_state(state)
                skip_until = dict(state.get("recSeq", {}))
                preloaded_events = {cid: len(evs)
                                    for cid, evs in engine._events.items()}
        records, _corruption = log.read_all()
        logged_events: dict[str, list] = {}
        engine._replaying = True
        try:
            for record in records:
                cid = record.collaboration_id
                if record.seq <= skip_until.get(cid, 0):
                    continue
                if record.type == "command":
                    payload = record.payload
                    if payload["name"] == "createCollaboration":
                        engine.create_collaboration(
                            payload["args"]["involvedUsers"],
                            collaboration_id=payload["args"]["collaborationId"],
                            actor=payload["actorId"], at=payload["at"])
                    else:
                        engine._execute(payload["name"], cid, payload["actorId"],
                                        payload["args"], at=payload["at"])
                elif record.type == "event":
                    logged_events.setdefault(cid, []).append(record.payload)
                cls._advance_seq(engine, cid, record.seq)
        finally:
            engine._replaying = False
        if strict:
            for cid, logged in logged_events.items():
                regenerated = [e.to_json() for e in
                               engine._events.get(cid, [])[preloaded_events.get(cid, 0):]]
                # a truncated tail may have lost trailing event records whose
                # command survived; the logged events must then be a prefix of
                # the regenerated ones
                if len(logged) > len(regenerated) \
                        or regenerated[:len(logged)] != logged:
                    raise ReplayMismatch(
                        f"replayed events diverge for {cid!r}: "
                        f"{len(regenerated)} regenerated vs {len(logged)} logged")
        engine.log = log
        return engine

    @staticmethod
    def _advance_seq(engine: "Engine", cid: str, seq: int) -> None:
        if engine._rec_seq.get(cid, 0) < seq:
            engine._rec_seq[cid] = seq
