import pytest

from gdmcollab.bus import EventKind
from gdmcollab.domain import CollectiveDecision, LifecycleState as S
from gdmcollab.errors import (
    DuplicateId,
    InvalidPolicy,
    InvalidThreshold,
    NotEligible,
    NotModerator,
    QuorumNotReached,
    SecondReevaluation,
    UnknownCollaboration,
    WrongState,
)

from .conftest import make_engine, quick_collab, users


def vote_all(engine, cid, pid, kind="approval", voters=("u1", "u2", "u3"), **kwargs):
    for voter in voters:
        args = dict(proposal_id=pid, kind=kind)
        if kind == "reject":
            args["comment"] = "not convincing"
        args.update(kwargs)
        engine.submit_decision(cid, voter, **args)


class TestHappyPath:
    def test_full_single_election_run(self, engine):
        quick_collab(engine)
        engine.add_proposal("c1", "u1", proposal_id="p1", title="P1")
        engine.open_evaluation("c1", "mod")
        vote_all(engine, "c1", "p1")
        engine.close_round("c1", "mod")
        collab = engine.get("c1")
        assert collab.state is S.CLOSED
        assert collab.proposals["p1"].collective_decision is CollectiveDecision.APPROVED
        assert collab.work_product is not None
        assert collab.work_product.approved_proposal_ids == {"p1"}

    def test_work_product_only_when_closed(self, engine):
        collab = quick_collab(engine)
        assert collab.work_product is None
        assert collab.state is S.ELABORATION


class TestGuards:
    def test_non_moderator_cannot_define_situation(self, engine):
        engine.create_collaboration(users(("mod", 1, True), ("u1", 1)),
                                    collaboration_id="c1")
        with pytest.raises(NotModerator):
            engine.define_situation("c1", "u1", "intent")

    def test_define_situation_twice_is_wrong_state(self, engine):
        engine.create_collaboration(users(("mod", 1, True), ("u1", 1)),
                                    collaboration_id="c1")
        engine.define_situation("c1", "mod", "intent")
        with pytest.raises(WrongState):
            engine.define_situation("c1", "mod", "intent")

    def test_every_moderator_command_rejects_others(self, engine):
        quick_collab(engine)
        engine.add_proposal("c1", "u1", proposal_id="p1")
        for command, call in [
            ("openEvaluation", lambda: engine.open_evaluation("c1", "u1")),
            ("closeRound", lambda: engine.close_round("c1", "u1")),
            ("notifyActors", lambda: engine.notify_actors("c1", "u1")),
        ]:
            with pytest.raises((NotModerator, WrongState)):
                call()
        # state unchanged by the rejected commands
        assert engine.get("c1").state is S.ELABORATION

    def test_proposal_in_draft_is_wrong_state(self, engine):
        engine.create_collaboration(users(("mod", 1, True), ("u1", 1)),
                                    collaboration_id="c1")
        with pytest.raises(WrongState):
            engine.add_proposal("c1", "u1", proposal_id="p1")

    def test_unknown_collaboration(self, engine):
        with pytest.raises(UnknownCollaboration):
            engine.open_evaluation("nope", "mod")

    def test_outsider_cannot_add_proposal(self, engine):
        quick_collab(engine)
        with pytest.raises(NotEligible):
            engine.add_proposal("c1", "stranger", proposal_id="p1")

    def test_duplicate_proposal_id(self, engine):
        quick_collab(engine)
        engine.add_proposal("c1", "u1", proposal_id="p1")
        with pytest.raises(DuplicateId):
            engine.add_proposal("c1", "u1", proposal_id="p1")


class TestChooseMethod:
    def test_strict_policy_with_lower_override_is_invalid(self, engine):
        engine.create_collaboration(users(("mod", 1, True), ("u1", 1)),
                                    collaboration_id="c1")
        engine.define_situation("c1", "mod", "intent")
        with pytest.raises(InvalidPolicy):
            engine.choose_method("c1", "mod", "ConsentingTogether",
                                 threshold_override="4/5")

    def test_unknown_policy_is_invalid(self, engine):
        engine.create_collaboration(users(("mod", 1, True), ("u1", 1)),
                                    collaboration_id="c1")
        engine.define_situation("c1", "mod", "intent")
        with pytest.raises(InvalidPolicy):
            engine.choose_method("c1", "mod", "NoSuchPolicy")

    def test_eligible_dms_computed(self, engine):
        collab = quick_collab(engine, n_dms=2)
        assert collab.eligible_dms == {"mod", "u1", "u2"}


class TestEvaluationRounds:
    def test_submit_after_close_rejected(self, engine):
        quick_collab(engine)
        engine.add_proposal("c1", "u1", proposal_id="p1")
        engine.open_evaluation("c1", "mod")
        vote_all(engine, "c1", "p1")
        engine.close_round("c1", "mod")
        with pytest.raises(WrongState):
            engine.submit_decision("c1", "u1", proposal_id="p1", kind="approval")

    def test_close_without_quorum_reports_deficits(self, engine):
        quick_collab(engine)  # 4 eligible incl. moderator -> quorum 2
        engine.add_proposal("c1", "u1", proposal_id="p1")
        engine.open_evaluation("c1", "mod")
        engine.submit_decision("c1", "u1", proposal_id="p1", kind="approval")
        with pytest.raises(QuorumNotReached) as exc:
            engine.close_round("c1", "mod")
        assert exc.value.deficits == {"p1": 1}

    def test_alternative_during_evaluation_with_conflict(self, engine):
        quick_collab(engine)
        engine.add_proposal("c1", "u1", proposal_id="p1")
        engine.open_evaluation("c1", "mod")
        engine.add_alternative("c1", "u2", refines="p1", proposal_id="ap1",
                               conflictual=True)
        collab = engine.get("c1")
        assert "ap1" in collab.proposals["p1"].conflicts_with
        assert "p1" in collab.proposals["ap1"].conflicts_with
        engine.submit_decision("c1", "u2", proposal_id="p1", kind="refinement",
                               alternative_id="ap1")

    def test_new_elementary_proposal_not_allowed_mid_round(self, engine):
        quick_collab(engine)
        engine.add_proposal("c1", "u1", proposal_id="p1")
        engine.open_evaluation("c1", "mod")
        with pytest.raises(WrongState):
            engine.add_proposal("c1", "u1", proposal_id="p2")


class TestIterativeLoop:
    def _negotiating(self, engine):
        # 5 equal DMs, one proposal, medium threshold (2/3)
        roster = [("mod", 1, True)] + [(f"u{i}", 1) for i in range(1, 5)]
        engine.create_collaboration(users(*roster), collaboration_id="c1")
        engine.define_situation("c1", "mod", "iterate")
        engine.choose_method("c1", "mod", "NegotiatingTogether")
        engine.notify_actors("c1", "mod")
        engine.add_proposal("c1", "u1", proposal_id="p1")
        engine.open_evaluation("c1", "mod")

    def test_threshold_miss_routes_to_adjusting(self, engine):
        self._negotiating(engine)
        # 3 of 5 approve: 3/5 < 2/3
        for voter, kind in [("mod", "approval"), ("u1", "approval"),
                            ("u2", "approval"), ("u3", "reject"), ("u4", "reject")]:
            args = {"comment": "no"} if kind == "reject" else {}
            engine.submit_decision("c1", voter, proposal_id="p1", kind=kind, **args)
        engine.close_round("c1", "mod")
        collab = engine.get("c1")
        assert collab.state is S.ADJUSTING_PROPOSALS
        assert collab.proposals["p1"].collective_decision is CollectiveDecision.PENDING

    def test_adjust_replaces_contested_proposal_then_converges(self, engine):
        self._negotiating(engine)
        for voter in ("mod", "u1", "u2"):
            engine.submit_decision("c1", voter, proposal_id="p1", kind="approval")
        for voter in ("u3", "u4"):
            engine.submit_decision("c1", voter, proposal_id="p1", kind="reject",
                                   comment="prefer a sharper wording")
        engine.close_round("c1", "mod")
        engine.adjust_proposals("c1", "u1", edits=[
            {"type": "withdraw", "proposalId": "p1"},
            {"type": "attachAlternative", "proposalId": "ap1", "refines": "p1",
             "title": "sharper", "body": "", "conflictual": False},
        ])
        collab = engine.get("c1")
        assert collab.state is S.EVALUATION_OPEN and collab.current_round == 2
        # prior-round decisions do not carry into the new tally
        for voter in ("mod", "u1", "u2", "u3", "u4"):
            engine.submit_decision("c1", voter, proposal_id="ap1", kind="approval")
        engine.close_round("c1", "mod")
        collab = engine.get("c1")
        assert collab.state is S.CLOSED
        assert collab.proposals["ap1"].collective_decision is CollectiveDecision.APPROVED
        assert collab.proposals["p1"].collective_decision is CollectiveDecision.REJECTED

    def test_empty_edit_set_revotes_unchanged(self, engine):
        self._negotiating(engine)
        for voter in ("mod", "u1", "u2"):
            engine.submit_decision("c1", voter, proposal_id="p1", kind="approval")
        for voter in ("u3", "u4"):
            engine.submit_decision("c1", voter, proposal_id="p1", kind="reject",
                                   comment="no")
        engine.close_round("c1", "mod")
        engine.adjust_proposals("c1", "mod", edits=[])
        collab = engine.get("c1")
        assert collab.state is S.EVALUATION_OPEN
        assert collab.proposals["p1"].collective_decision is CollectiveDecision.PENDING

    def test_max_rounds_exhaustion_marks_unresolved(self, engine):
        self._negotiating(engine)
        collab = engine.get("c1")
        max_rounds = collab.policy.max_rounds
        for round_no in range(1, max_rounds + 1):
            for voter in ("mod", "u1", "u2", "u3", "u4"):
                engine.submit_decision("c1", voter, proposal_id="p1", kind="reject",
                                       comment="never")
            engine.close_round("c1", "mod")
            if round_no < max_rounds:
                assert engine.get("c1").state is S.ADJUSTING_PROPOSALS
                engine.adjust_proposals("c1", "mod", edits=[])
        collab = engine.get("c1")
        assert collab.state is S.CLOSED
        assert collab.current_round == max_rounds
        assert collab.proposals["p1"].collective_decision is CollectiveDecision.UNRESOLVED


class TestModeratorChoice:
    def _deadlocked_majority(self, engine):
        # 4 DMs, 2-2 split: exactly half approve, neither approved nor rejected
        roster = [("mod", 1, True), ("u1", 1), ("u2", 1), ("u3", 1)]
        engine.create_collaboration(users(*roster), collaboration_id="c1")
        engine.define_situation("c1", "mod", "deadlock")
        engine.choose_method("c1", "mod", "MajorityDeciding")
        engine.notify_actors("c1", "mod")
        engine.add_proposal("c1", "u1", proposal_id="p1")
        engine.open_evaluation("c1", "mod")
        for voter, kind in [("mod", "approval"), ("u1", "approval"),
                            ("u2", "reject"), ("u3", "reject")]:
            args = {"comment": "no"} if kind == "reject" else {}
            engine.submit_decision("c1", voter, proposal_id="p1", kind=kind, **args)
        engine.close_round("c1", "mod")
        assert engine.get("c1").state is S.AWAITING_MODERATOR_CHOICE

    def test_adjust_threshold_approves_on_reaggregation(self, engine):
        self._deadlocked_majority(engine)
        engine.moderator_choice("c1", "mod", "adjustThreshold", new_threshold="1/2")
        collab = engine.get("c1")
        assert collab.state is S.CLOSED
        assert collab.proposals["p1"].collective_decision is CollectiveDecision.APPROVED
        kinds = [e.kind for e in engine.events("c1")]
        assert EventKind.THRESHOLD_ADJUSTED in kinds

    def test_invalid_threshold_rejected(self, engine):
        self._deadlocked_majority(engine)
        for bad in ("0", "0/1", "3/2"):
            with pytest.raises(InvalidThreshold):
                engine.moderator_choice("c1", "mod", "adjustThreshold",
                                        new_threshold=bad)

    def test_reevaluate_gives_one_extra_round_then_forced_closure(self, engine):
        self._deadlocked_majority(engine)
        engine.moderator_choice("c1", "mod", "reevaluate")
        collab = engine.get("c1")
        assert collab.state is S.EVALUATION_OPEN and collab.current_round == 2
        for voter, kind in [("mod", "approval"), ("u1", "approval"),
                            ("u2", "reject"), ("u3", "reject")]:
            args = {"comment": "still no"} if kind == "reject" else {}
            engine.submit_decision("c1", voter, proposal_id="p1", kind=kind, **args)
        engine.close_round("c1", "mod")
        collab = engine.get("c1")
        assert collab.state is S.CLOSED
        assert collab.proposals["p1"].collective_decision is CollectiveDecision.UNRESOLVED

    def test_second_reevaluate_rejected(self, engine):
        self._deadlocked_majority(engine)
        engine.moderator_choice("c1", "mod", "reevaluate")
        for voter, kind in [("mod", "approval"), ("u1", "approval"),
                            ("u2", "reject"), ("u3", "reject")]:
            args = {"comment": "no"} if kind == "reject" else {}
            engine.submit_decision("c1", voter, proposal_id="p1", kind=kind, **args)
        # forced closure happens at round close; a second reevaluate is
        # impossible both by flag and by state
        engine.close_round("c1", "mod")
        with pytest.raises(WrongState):
            engine.moderator_choice("c1", "mod", "reevaluate")

    def test_second_reevaluate_flag_guard(self, engine):
        self._deadlocked_majority(engine)
        collab = engine.get("c1")
        collab.reevaluate_used = True  # simulate a prior re-evaluation
        with pytest.raises(SecondReevaluation):
            engine.moderator_choice("c1", "mod", "reevaluate")


class TestTakingAdvice:
    def test_final_dm_decision_is_the_outcome(self, engine):
        roster = [("mod", 1, True), ("clare", 1), ("adv1", 1), ("adv2", 1)]
        engine.create_collaboration(users(*roster), collaboration_id="c1")
        engine.define_situation("c1", "mod", "advice")
        engine.choose_method("c1", "mod", "TakingAdvice",
                             criteria={"explicitUserIds": ["clare"]})
        engine.notify_actors("c1", "mod")
        collab = engine.get("c1")
        assert collab.eligible_dms == {"clare"}
        engine.add_proposal("c1", "clare", proposal_id="p1")
        engine.open_evaluation("c1", "mod")
        # advisors advise against; the final decision maker approves
        engine.submit_decision("c1", "adv1", proposal_id="p1", kind="reject",
                               comment="risky", binding=False)
        engine.submit_decision("c1", "adv2", proposal_id="p1", kind="reject",
                               comment="unneeded", binding=False)
        engine.submit_decision("c1", "clare", proposal_id="p1", kind="approval")
        engine.close_round("c1", "mod")
        collab = engine.get("c1")
        assert collab.state is S.CLOSED
        assert collab.proposals["p1"].collective_decision is CollectiveDecision.APPROVED

    def test_advisor_binding_vote_rejected(self, engine):
        roster = [("mod", 1, True), ("clare", 1), ("adv1", 1)]
        engine.create_collaboration(users(*roster), collaboration_id="c1")
        engine.define_situation("c1", "mod", "advice")
        engine.choose_method("c1", "mod", "TakingAdvice",
                             criteria={"explicitUserIds": ["clare"]})
        engine.notify_actors("c1", "mod")
        engine.add_proposal("c1", "clare", proposal_id="p1")
        engine.open_evaluation("c1", "mod")
        with pytest.raises(NotEligible):
            engine.submit_decision("c1", "adv1", proposal_id="p1", kind="approval")


class TestClosedIsAbsorbing:
    def test_no_command_mutates_a_closed_collaboration(self, engine):
        quick_collab(engine)
        engine.add_proposal("c1", "u1", proposal_id="p1")
        engine.open_evaluation("c1", "mod")
        vote_all(engine, "c1", "p1")
        engine.close_round("c1", "mod")
        snapshot = engine.get("c1").to_snapshot()
        attempts = [
            lambda: engine.define_situation("c1", "mod", "again"),
            lambda: engine.choose_method("c1", "mod", "MajorityDeciding"),
            lambda: engine.notify_actors("c1", "mod"),
            lambda: engine.add_proposal("c1", "u1", proposal_id="p9"),
            lambda: engine.open_evaluation("c1", "mod"),
            lambda: engine.submit_decision("c1", "u1", proposal_id="p1", kind="approval"),
            lambda: engine.close_round("c1", "mod"),
            lambda: engine.moderator_choice("c1", "mod", "reevaluate"),
            lambda: engine.adjust_proposals("c1", "mod", edits=[]),
        ]
        for attempt in attempts:
            with pytest.raises(WrongState):
                attempt()
        assert engine.get("c1").to_snapshot() == snapshot


class TestTransitions:
    def test_transition_log_records_state_changes(self, engine):
        quick_collab(engine)
        names = [(t.from_state.value, t.to_state.value) for t in engine.transitions("c1")]
        assert names == [("Draft", "Configured"), ("Configured", "MethodChosen"),
                         ("MethodChosen", "Notified"), ("Notified", "Elaboration")]

    def test_notify_emits_actor_assigned_per_dm(self, engine):
        quick_collab(engine, n_dms=3)
        assigned = [e for e in engine.events("c1")
                    if e.kind is EventKind.ACTOR_ASSIGNED]
        assert len(assigned) == 4  # three coordinators plus the moderator
        assert {e.payload["userId"] for e in assigned} == {"mod", "u1", "u2", "u3"}
