"""Acceptance suite: one test per criterion, each printing a PASS line.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the lines.
"""

import itertools
import json
import os
import random
import struct
import time
from fractions import Fraction

import pytest
from click.testing import CliRunner

from gdmcollab.aggregation import (
    Outcome,
    aggregate_round,
    approval_score,
    meets,
)
from gdmcollab.canonical import canon_dumps
from gdmcollab.cli import main as cli_main
from gdmcollab.domain import (
    AgreementKind,
    AgreementThreshold,
    Comment,
    Decision,
    ElementaryProposal,
    LifecycleState,
    PreferenceKind,
)
from gdmcollab.errors import ArrowMismatch, GdmError, QuorumNotReached
from gdmcollab.eventlog import LogStore
from gdmcollab.lifecycle import COMMANDS, Engine
from gdmcollab.notation import End, builtin_registry, parse, render
from gdmcollab.policies import (
    IterationClass,
    PolicyRepository,
    builtin_policies,
    validate_policy,
)
from gdmcollab.summary import build_summary

from .conftest import make_engine, users
from .oracle import QuorumFailure, evaluate as oracle_evaluate
from .test_notation import random_expression

FIXTURE = os.path.join(os.path.dirname(__file__), "..", "fixtures", "cms.session.json")

KIND_NAMES = ("approval", "reject", "refinement")
KINDS = {name: AgreementKind(name) for name in KIND_NAMES}


def _ok(n, name):
    print(f"\nACCEPTANCE {n} ({name}): PASS")


# -- criterion 1 ---------------------------------------------------------------

class TestCriterion1CmsScenario:
    def test_cms_replay_closed_with_expected_outcomes(self, tmp_path):
        out = tmp_path / "summary.json"
        started = time.monotonic()
        result = CliRunner().invoke(cli_main, ["run", FIXTURE,
                                               "--json-out", str(out), "--quiet"])
        elapsed = time.monotonic() - started
        assert result.exit_code == 0, result.output
        assert elapsed < 1.0, f"CMS replay took {elapsed:.3f}s"
        summary = json.loads(out.read_text())
        assert summary["state"] == "Closed"
        rows = {r["body"]: r["collectiveDecision"] for r in summary["proposals"]}
        assert rows["Similarity[BP:DataObject <-> SD:Entity]"] == "approved"
        assert rows["Dependency[BP:Task -> SD:Operation]"] == "rejected"
        assert rows["Induction[BP:Task -> SD:Operation]"] == "approved"
        assert all(d != "unresolved" for d in rows.values())
        _ok(1, "CMS scenario replay")


# -- criterion 2 ---------------------------------------------------------------

class TestCriterion2ThresholdLoop:
    def test_three_of_five_misses_high_and_routes_to_adjusting(self):
        assert meets(Fraction(3, 5), AgreementThreshold.HIGH) is False
        engine = make_engine()
        roster = [("mod", 1, True)] + [(f"u{i}", 1) for i in range(1, 5)]
        engine.create_collaboration(users(*roster), collaboration_id="c1")
        engine.define_situation("c1", "mod", "threshold loop")
        # iterative policy with a high (80%) threshold
        engine.choose_method("c1", "mod", "NegotiatingTogether",
                             threshold_override="4/5")
        engine.notify_actors("c1", "mod")
        engine.add_proposal("c1", "u1", proposal_id="p1")
        engine.open_evaluation("c1", "mod")
        for voter in ("mod", "u1", "u2"):
            engine.submit_decision("c1", voter, proposal_id="p1", kind="approval")
        for voter in ("u3", "u4"):
            engine.submit_decision("c1", voter, proposal_id="p1", kind="reject",
                                   comment="below the bar")
        engine.close_round("c1", "mod")
        collab = engine.get("c1")
        assert collab.state is LifecycleState.ADJUSTING_PROPOSALS
        assert collab.tallies["p1"].score == Fraction(3, 5)
        assert collab.tallies["p1"].derived_outcome is Outcome.NOT_APPROVED
        _ok(2, "iterative threshold loop at 60% vs 80%")


# -- criterion 3 ---------------------------------------------------------------

class TestCriterion3StrictConsensus:
    def test_exhaustive_strict_vectors(self):
        proposal = ElementaryProposal(proposal_id="p", title="p", author_id="a",
                                      created_at=0)
        for n in range(1, 5):
            weights = {f"u{i}": Fraction(1 + i) for i in range(n)}
            for kinds in itertools.product(KIND_NAMES, repeat=n):
                decisions = [
                    Decision(decision_maker_id=f"u{i}", proposal_id="p", round=1,
                             kind=KINDS[kind],
                             comment=Comment(author_id=f"u{i}", text="n",
                                             created_at=0)
                             if kind == "reject" else None,
                             alternative_id="x" if kind == "refinement" else None,
                             submitted_at=i)
                    for i, kind in enumerate(kinds)
                ]
                result = aggregate_round(
                    proposals=[proposal], decisions=decisions, weights=weights,
                    threshold=AgreementThreshold.STRICT, override=None,
                    single_election=False, eligible_count=n, round_no=1)
                unanimous = all(k == "approval" for k in kinds)
                outcome = result.tallies["p"].derived_outcome
                assert (outcome is Outcome.APPROVED) == unanimous, kinds
        _ok(3, "strict consensus, all 3^n vectors for n <= 4")


# -- criterion 4 ---------------------------------------------------------------

def conflict_configs(n_prop):
    pids = [f"p{i}" for i in range(n_prop)]
    pairs = list(itertools.combinations(pids, 2))
    configs = [[]]
    configs += [[pair] for pair in pairs]
    configs += [list(c) for c in itertools.combinations(pairs, 2)]
    return pids, configs


THRESHOLD_ENUMS = {name: AgreementThreshold(name)
                   for name in ("low", "medium", "high", "strict")}


def engine_evaluate(proposals, decisions, weights, threshold_name, single,
                    override=None, rating_mode=False):
    try:
        result = aggregate_round(
            proposals=proposals, decisions=decisions, weights=weights,
            threshold=THRESHOLD_ENUMS[threshold_name],
            override=Fraction(*override) if override else None,
            single_election=single,
            pref_kind=PreferenceKind.RATING if rating_mode else PreferenceKind.YES_NO,
            eligible_count=len(weights), round_no=1)
    except QuorumNotReached:
        return "quorum"
    return {
        "statuses": {pid: s.value for pid, s in result.statuses.items()},
        "converged": result.converged,
        "scores": {pid: t.score for pid, t in result.tallies.items()},
        "met": {pid: t.derived_outcome is Outcome.APPROVED
                for pid, t in result.tallies.items()},
    }


def _enumerate_shape(task):
    """Exhaustively check one (DM count, proposal count, conflict config)
    shape against the oracle: all decision assignments x all thresholds x
    both iteration classes. Returns (instances checked, first mismatch)."""
    n_dm, n_prop, config = task
    weights_pool = [3, 1, 2, 5]
    dms = [f"u{i}" for i in range(n_dm)]
    weights = {dm: Fraction(weights_pool[i]) for i, dm in enumerate(dms)}
    pids = [f"p{i}" for i in range(n_prop)]
    cells = n_dm * n_prop
    kind_space = KIND_NAMES if cells <= 8 else ("approval", "reject")
    pool = {
        (dm, pid, kind): Decision(
            decision_maker_id=dm, proposal_id=pid, round=1,
            kind=KINDS[kind], submitted_at=0,
            comment=Comment(author_id=dm, text="n", created_at=0)
            if kind == "reject" else None,
            alternative_id="alt" if kind == "refinement" else None)
        for dm in dms for pid in pids for kind in kind_space
    }
    created = {pid: (i + 1) * 100 for i, pid in enumerate(pids)}
    conflict_sets = {pid: frozenset() for pid in pids}
    for a, b in config:
        conflict_sets[a] = conflict_sets[a] | {b}
        conflict_sets[b] = conflict_sets[b] | {a}
    proposals = [
        ElementaryProposal(proposal_id=pid, title=pid, author_id="x",
                           created_at=created[pid],
                           conflicts_with=conflict_sets[pid])
        for pid in pids
    ]
    oracle_proposals = [(pid, created[pid]) for pid in pids]
    checked = 0
    for assignment in itertools.product(kind_space, repeat=cells):
        votes = {}
        decisions = []
        k = 0
        for pid in pids:
            for dm in dms:
                kind = assignment[k]
                k += 1
                votes[(dm, pid)] = kind
                decisions.append(pool[(dm, pid, kind)])
        for threshold in ("low", "medium", "high", "strict"):
            for single in (True, False):
                got = engine_evaluate(proposals, decisions, weights,
                                      threshold, single)
                want = oracle_evaluate({
                    "proposals": oracle_proposals, "conflicts": config,
                    "weights": weights, "votes": votes,
                    "threshold": threshold, "single_election": single,
                    "eligible_count": n_dm,
                })
                where = (n_dm, n_prop, config, assignment, threshold, single)
                if got["statuses"] != want["statuses"]:
                    return checked, f"statuses diverge at {where}"
                if got["converged"] != want["converged"]:
                    return checked, f"convergence diverges at {where}"
                if got["met"] != want["met"]:
                    return checked, f"met flags diverge at {where}"
                for pid, (a, t) in want["score_pairs"].items():
                    if got["scores"][pid] * t != a:
                        return checked, f"score diverges at {where}"
                checked += 1
    return checked, None


class TestCriterion4OracleEquivalence:
    """Exhaustive equivalence against the independent evaluator.

    Full three-kind enumeration for every shape up to 3^8 assignments;
    the two largest shapes (3x3, 4x3) are enumerated exhaustively over
    approval/reject assignments, which covers them completely because
    refinement and reject are tally-equivalent; that equivalence itself is
    verified exhaustively (test below) and the mapping is a bijection on
    score inputs.
    """

    def test_refinement_reject_tally_equivalence_exhaustive(self):
        for n in range(1, 5):
            weights = {f"u{i}": Fraction([3, 1, 2, 5][i]) for i in range(n)}
            for kinds in itertools.product(KIND_NAMES, repeat=n):
                folded = ["reject" if k == "refinement" else k for k in kinds]
                def tally(ks):
                    ds = [Decision(decision_maker_id=f"u{i}", proposal_id="p",
                                   round=1, kind=KINDS[k], submitted_at=i,
                                   comment=Comment(author_id=f"u{i}", text="n",
                                                   created_at=0)
                                   if k == "reject" else None,
                                   alternative_id="x" if k == "refinement" else None)
                          for i, k in enumerate(ks)]
                    return approval_score("p", 1, ds, weights)
                a, b = tally(kinds), tally(folded)
                assert (a.weighted_approval, a.total_weight) == \
                       (b.weighted_approval, b.total_weight)
        print("\n  refinement/reject tally equivalence: all 3^n vectors, n<=4")

    def test_full_enumeration_matches_oracle(self):
        started = time.monotonic()
        tasks = []
        for n_dm in range(1, 5):
            for n_prop in range(1, 4):
                _pids, configs = conflict_configs(n_prop)
                for config in configs:
                    tasks.append((n_dm, n_prop, config))
        # heaviest shapes first for better parallel packing
        tasks.sort(key=lambda t: -(t[0] * t[1]))
        checked = 0
        try:
            import multiprocessing
            ctx = multiprocessing.get_context("fork")
            with ctx.Pool(2) as pool:
                for count, mismatch in pool.imap_unordered(_enumerate_shape, tasks):
                    assert mismatch is None, mismatch
                    checked += count
        except (ImportError, ValueError, OSError):
            for task in tasks:
                count, mismatch = _enumerate_shape(task)
                assert mismatch is None, mismatch
                checked += count
        elapsed = time.monotonic() - started
        assert elapsed < 60, f"enumeration took {elapsed:.1f}s"
        print(f"\n  enumerated {checked} instances in {elapsed:.1f}s, zero mismatches")
        _ok(4, "oracle equivalence over the full enumeration")

    def test_random_instances_with_abstention_and_ratings(self):
        rng = random.Random(93)
        agreements = 0
        for _ in range(3000):
            n_dm = rng.randint(1, 4)
            n_prop = rng.randint(1, 3)
            rating_mode = rng.random() < 0.4
            dms = [f"u{i}" for i in range(n_dm)]
            weights = {dm: Fraction(rng.randint(1, 6)) for dm in dms}
            pids = [f"p{i}" for i in range(n_prop)]
            created = {pid: (i + 1) * 10 for i, pid in enumerate(pids)}
            config = []
            for pair in itertools.combinations(pids, 2):
                if rng.random() < 0.3 and len(config) < 2:
                    config.append(pair)
            votes, ratings, decisions = {}, {}, []
            for pid in pids:
                for dm in dms:
                    if rng.random() < 0.25:
                        continue  # abstention
                    kind = rng.choice(KIND_NAMES)
                    votes[(dm, pid)] = kind
                    extra = {}
                    if rating_mode:
                        ratings[(dm, pid)] = rng.randint(1, 5)
                        extra["rating"] = ratings[(dm, pid)]
                    decisions.append(Decision(
                        decision_maker_id=dm, proposal_id=pid, round=1,
                        kind=KINDS[kind], submitted_at=0,
                        comment=Comment(author_id=dm, text="n", created_at=0)
                        if kind == "reject" else None,
                        alternative_id="alt" if kind == "refinement" else None,
                        **extra))
            conflict_sets = {pid: frozenset() for pid in pids}
            for a, b in config:
                conflict_sets[a] = conflict_sets[a] | {b}
                conflict_sets[b] = conflict_sets[b] | {a}
            proposals = [ElementaryProposal(
                proposal_id=pid, title=pid, author_id="x",
                created_at=created[pid], conflicts_with=conflict_sets[pid])
                for pid in pids]
            threshold = rng.choice(("low", "medium", "high", "strict"))
            single = rng.random() < 0.5
            got = engine_evaluate(proposals, decisions, weights, threshold,
                                  single, rating_mode=rating_mode)
            try:
                want = oracle_evaluate({
                    "proposals": [(pid, created[pid]) for pid in pids],
                    "conflicts": config, "weights": weights, "votes": votes,
                    "ratings": ratings, "threshold": threshold,
                    "single_election": single, "eligible_count": n_dm,
                    "rating_mode": rating_mode,
                })
            except QuorumFailure:
                assert got == "quorum"
                continue
            assert got != "quorum"
            assert got["statuses"] == want["statuses"]
            assert got["converged"] == want["converged"]
            agreements += 1
        assert agreements > 1000
        print(f"\n  random sweep incl. abstention/ratings: {agreements} agreements")


# -- criterion 5 ---------------------------------------------------------------

ALLOWED_EDGES = {
    ("Draft", "Configured"), ("Configured", "MethodChosen"),
    ("MethodChosen", "Notified"), ("Notified", "Elaboration"),
    ("Elaboration", "EvaluationOpen"), ("EvaluationOpen", "EvaluationClosed"),
    ("EvaluationClosed", "Aggregated"),
    ("Aggregated", "Closed"), ("Aggregated", "AdjustingProposals"),
    ("Aggregated", "AwaitingModeratorChoice"),
    ("AdjustingProposals", "EvaluationOpen"),
    ("AwaitingModeratorChoice", "Aggregated"),
    ("AwaitingModeratorChoice", "EvaluationOpen"),
}


def _fingerprint(collab):
    return (collab.state, collab.current_round, len(collab.proposals),
            len(collab.decisions), collab.threshold_override,
            collab.reevaluate_used, collab.work_product is not None,
            sum(1 for p in collab.proposals.values() if p.withdrawn))


class Fuzzer:
    """Guided random command sequences: mostly plausible next steps with a
    dose of garbage (wrong actors, wrong states, unknown ids)."""

    POLICIES = ["MajorityDeciding", "NegotiatingTogether", "ConsentingTogether",
                "Delegating", "TakingAdvice"]

    def __init__(self, seed):
        self.rng = random.Random(seed)
        self.engine = Engine()  # in-memory, system clock unused determinism-wise
        roster = [("mod", 1, True), ("u1", 1), ("u2", 1)]
        self.engine.create_collaboration(users(*roster), collaboration_id="f")
        self.cid = "f"
        self.counter = 0

    def collab(self):
        return self.engine.get(self.cid)

    def fresh_pid(self):
        self.counter += 1
        return f"fp{self.counter}"

    def plausible(self):
        rng = self.rng
        collab = self.collab()
        state = collab.state.value
        live = [p.proposal_id for p in collab.live_elementary()]
        if state == "Draft":
            return ("defineSituation", "mod", {"intent": "fuzz"})
        if state == "Configured":
            policy = rng.choice(self.POLICIES)
            args = {"policyId": policy}
            if policy in ("Delegating", "TakingAdvice"):
                args["criteria"] = {"explicitUserIds": [rng.choice(["mod", "u1", "u2"])]}
            return ("chooseMethod", "mod", args)
        if state == "MethodChosen":
            return ("notifyActors", "mod", {})
        if state == "Elaboration":
            if not live or rng.random() < 0.5:
                return ("addProposal", self.any_eligible(),
                        {"proposalId": self.fresh_pid()})
            return ("openEvaluation", "mod", {})
        if state == "EvaluationOpen":
            move = rng.random()
            if live and move < 0.65:
                dm = rng.choice(sorted(collab.eligible_dms))
                pid = rng.choice(live)
                kind = rng.choice(["approval", "approval", "reject"])
                args = {"proposalId": pid, "kind": kind}
                if kind == "reject":
                    args["comment"] = "fuzz"
                return ("submitDecision", dm, args)
            if live and move < 0.75:
                return ("addAlternative", self.any_eligible(), {
                    "proposalId": self.fresh_pid(), "refines": rng.choice(live),
                    "conflictual": rng.random() < 0.5})
            return ("closeRound", "mod", {})
        if state == "AdjustingProposals":
            edits = []
            if live and rng.random() < 0.4:
                edits.append({"type": "withdraw", "proposalId": rng.choice(live)})
            if live and rng.random() < 0.4:
                edits.append({"type": "attachAlternative",
                              "proposalId": self.fresh_pid(),
                              "refines": rng.choice(live)})
            return ("adjustProposals", self.any_eligible(), {"edits": edits})
        if state == "AwaitingModeratorChoice":
            if rng.random() < 0.5:
                return ("moderatorChoice", "mod",
                        {"choice": "adjustThreshold",
                         "newThreshold": f"{rng.randint(1, 9)}/10"})
            return ("moderatorChoice", "mod", {"choice": "reevaluate"})
        # Closed: only garbage remains meaningful
        return self.garbage()

    def any_eligible(self):
        collab = self.collab()
        pool = sorted(collab.eligible_dms) + ["mod"] if collab.eligible_dms else ["mod", "u1"]
        return self.rng.choice(pool)

    def garbage(self):
        rng = self.rng
        collab = self.collab()
        command = rng.choice(sorted(COMMANDS))
        actor = rng.choice(["mod", "u1", "u2", "stranger"])
        pids = sorted(collab.proposals) or ["nothing"]
        args_by_command = {
            "defineSituation": {"intent": "garbage"},
            "chooseMethod": {"policyId": rng.choice(self.POLICIES + ["Bogus"])},
            "notifyActors": {},
            "addProposal": {"proposalId": rng.choice(pids + [self.fresh_pid()])},
            "addAlternative": {"proposalId": self.fresh_pid(),
                               "refines": rng.choice(pids)},
            "addConflict": {"proposalId": rng.choice(pids),
                            "otherId": rng.choice(pids)},
            "openEvaluation": {},
            "submitDecision": {"proposalId": rng.choice(pids),
                               "kind": rng.choice(["approval", "reject",
                                                   "refinement"])},
            "closeRound": {},
            "moderatorChoice": {"choice": rng.choice(["adjustThreshold",
                                                      "reevaluate", "bogus"]),
                                "newThreshold": rng.choice(["1/2", "7/2", "0"])},
            "adjustProposals": {"edits": [{"type": "withdraw",
                                           "proposalId": rng.choice(pids)}]},
        }
        return (command, actor, args_by_command[command])

    def run(self, max_steps=24):
        engine, cid = self.engine, self.cid
        closed_snapshot = None
        rejected = accepted = 0
        for _ in range(max_steps):
            command, actor, args = (self.garbage() if self.rng.random() < 0.3
                                    else self.plausible())
            before = _fingerprint(self.collab())
            states_before = len(engine.transitions(cid))
            try:
                engine._execute(command, cid, actor, args)
                accepted += 1
            except GdmError:
                rejected += 1
                assert _fingerprint(self.collab()) == before, \
                    f"rejected {command} mutated state"
                assert len(engine.transitions(cid)) == states_before
            collab = self.collab()
            if collab.policy is not None:
                single = collab.policy.iteration_class is IterationClass.SINGLE_ELECTION
                bound = 2 if single else collab.policy.max_rounds
                assert collab.current_round <= bound, \
                    f"round bound exceeded: {collab.current_round} > {bound}"
            if collab.state is LifecycleState.CLOSED:
                if closed_snapshot is None:
                    closed_snapshot = canon_dumps(collab.to_snapshot())
                else:
                    assert canon_dumps(collab.to_snapshot()) == closed_snapshot, \
                        "closed collaboration mutated"
            elif closed_snapshot is not None:
                raise AssertionError("left the Closed state")
        for t in engine.transitions(cid):
            assert (t.from_state.value, t.to_state.value) in ALLOWED_EDGES, \
                f"illegal transition {t.from_state}->{t.to_state}"
        return accepted, rejected, closed_snapshot is not None


class TestCriterion5StateMachineFuzz:
    def test_ten_thousand_random_sequences(self):
        started = time.monotonic()
        totals = {"accepted": 0, "rejected": 0, "closed": 0}
        for seed in range(10_000):
            accepted, rejected, closed = Fuzzer(seed).run()
            totals["accepted"] += accepted
            totals["rejected"] += rejected
            totals["closed"] += int(closed)
        elapsed = time.monotonic() - started
        # the generator must actually exercise both acceptance and rejection
        # paths, and a healthy share of runs must reach closure
        assert totals["rejected"] > 10_000
        assert totals["accepted"] > 50_000
        assert totals["closed"] > 1_000
        print(f"\n  {totals} in {elapsed:.1f}s")
        _ok(5, "state-machine fuzz, 10000 sequences")


# -- criterion 6 ---------------------------------------------------------------

class TestCriterion6WeightScaleInvariance:
    def test_thousand_random_instances_under_three_scales(self):
        rng = random.Random(1234)
        scales = [Fraction(1, 10), Fraction(3), Fraction(1000)]
        for _ in range(1000):
            n_dm = rng.randint(1, 5)
            n_prop = rng.randint(1, 3)
            dms = [f"u{i}" for i in range(n_dm)]
            weights = {dm: Fraction(rng.randint(1, 9), rng.randint(1, 4))
                       for dm in dms}
            pids = [f"p{i}" for i in range(n_prop)]
            config = []
            for pair in itertools.combinations(pids, 2):
                if rng.random() < 0.3 and len(config) < 2:
                    config.append(pair)
            conflict_sets = {pid: frozenset() for pid in pids}
            for a, b in config:
                conflict_sets[a] = conflict_sets[a] | {b}
                conflict_sets[b] = conflict_sets[b] | {a}
            proposals = [ElementaryProposal(
                proposal_id=pid, title=pid, author_id="x", created_at=i * 7,
                conflicts_with=conflict_sets[pid]) for i, pid in enumerate(pids)]
            decisions = []
            for pid in pids:
                for dm in dms:
                    kind = rng.choice(KIND_NAMES)
                    decisions.append(Decision(
                        decision_maker_id=dm, proposal_id=pid, round=1,
                        kind=KINDS[kind], submitted_at=0,
                        comment=Comment(author_id=dm, text="n", created_at=0)
                        if kind == "reject" else None,
                        alternative_id="alt" if kind == "refinement" else None))
            threshold = rng.choice(("low", "medium", "high", "strict"))
            single = rng.random() < 0.5
            base = engine_evaluate(proposals, decisions, weights, threshold, single)
            base_meets = {pid: meets(base["scores"][pid],
                                     AgreementThreshold(threshold))
                          for pid in pids}
            for c in scales:
                scaled_weights = {dm: w * c for dm, w in weights.items()}
                scaled = engine_evaluate(proposals, decisions, scaled_weights,
                                         threshold, single)
                assert scaled["statuses"] == base["statuses"]
                assert scaled["converged"] == base["converged"]
                assert scaled["scores"] == base["scores"]
                for pid in pids:
                    assert meets(scaled["scores"][pid],
                                 AgreementThreshold(threshold)) == base_meets[pid]
        _ok(6, "weight-scale invariance, 1000 instances x {0.1, 3, 1000}")


# -- criterion 7 ---------------------------------------------------------------

class TestCriterion7ReplayDeterminism:
    def _run_cms_with_log(self, tmp_path, name):
        log_path = tmp_path / name
        out = tmp_path / f"{name}.summary.json"
        result = CliRunner().invoke(cli_main, [
            "run", FIXTURE, "--log", str(log_path), "--json-out", str(out),
            "--quiet"])
        assert result.exit_code == 0, result.output
        return log_path, out.read_bytes()

    def test_replay_reproduces_summary_bytes(self, tmp_path):
        log_path, original = self._run_cms_with_log(tmp_path, "a.log")
        engine = Engine.from_log(LogStore(log_path, fsync=False))
        replayed = canon_dumps(build_summary(engine.get("cms-alignment"))).encode()
        assert replayed == original

        # injected truncation of the final record: all prior state recovered
        data = log_path.read_bytes()
        offsets, pos = [], 0
        while pos < len(data):
            (length,) = struct.unpack(">I", data[pos:pos + 4])
            offsets.append(pos)
            pos += 4 + length
        log_path.write_bytes(data[:offsets[-1] + 5])  # cut inside the last record
        engine2 = Engine.from_log(LogStore(log_path, fsync=False))
        recovered = canon_dumps(build_summary(engine2.get("cms-alignment"))).encode()
        assert recovered == original
        _ok(7, "replay determinism incl. truncated final record")


# -- criterion 8 ---------------------------------------------------------------

class TestCriterion8Parser:
    def test_walkthrough_expressions_and_round_trip(self):
        sim = parse("Similarity[BP:DataObject ↔ SD:Entity]")
        assert (sim.relationship, sim.directed) == ("Similarity", False)
        assert sim.left == End("BP", "DataObject") and sim.right == End("SD", "Entity")
        dep = parse("Dependency[BP:Task → SD:Operation]")
        assert (dep.relationship, dep.directed) == ("Dependency", True)
        ind = parse("Induction[BP:Task → SD:Operation]")
        assert (ind.relationship, ind.directed) == ("Induction", True)
        assert ind.left == End("BP", "Task") and ind.right == End("SD", "Operation")

        rng = random.Random(4242)
        registry = builtin_registry()
        for _ in range(1000):
            text = random_expression(rng, registry)
            c = parse(text, registry)
            assert parse(render(c), registry) == c

        with pytest.raises(ArrowMismatch):
            parse("Similarity[BP:Task -> SD:Operation]")
        _ok(8, "parser: walkthrough expressions, 1000 round-trips, arrow rule")


# -- criterion 9 ---------------------------------------------------------------

class TestCriterion9PolicyRepository:
    def test_builtins_validate_and_manual_text(self):
        for policy in builtin_policies():
            assert validate_policy(policy) == [], policy.name
        result = CliRunner().invoke(cli_main, ["policies", "describe",
                                               "MajorityDeciding"])
        assert result.exit_code == 0
        assert "opinions of all the stakeholders" in result.output
        assert "Delegating" in result.output
        descriptor = PolicyRepository().describe("MajorityDeciding")
        assert "Delegating" in descriptor.related_patterns
        _ok(9, "policy repository: builtins valid, manual text present")
