"""Scripted sessions: an actor preamble plus an ordered list of lifecycle
commands, executed against an embedded engine with a logical clock so that
identical scripts always produce identical summary bytes.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional

from .domain import LifecycleState
from .errors import GdmError, ScriptError
from .eventlog import LogStore
from .ids import IdGenerator, LogicalClock
from .lifecycle import Engine
from .summary import build_summary

EXIT_CONVERGED = 0
EXIT_UNRESOLVED = 2
EXIT_SCRIPT_ERROR = 3
EXIT_ENGINE_ERROR = 4

_STEP_COMMANDS = {
    "defineSituation", "chooseMethod", "notifyActors", "addProposal",
    "addAlternative", "addConflict", "openEvaluation", "submitDecision",
    "closeRound", "moderatorChoice", "adjustProposals",
}


@dataclass
class SessionScript:
    actors: list
    steps: list
    intent: str = ""
    collaboration_id: str = "session"

    @staticmethod
    def from_dict(data: dict) -> "SessionScript":
        if not isinstance(data, dict):
            raise ScriptError("script must be a JSON object")
        actors = data.get("actors")
        if not actors or not isinstance(actors, list):
            raise ScriptError("script needs a non-empty 'actors' preamble")
        steps = data.get("steps")
        if steps is None or not isinstance(steps, list):
            raise ScriptError("script needs a 'steps' list")
        if not steps:
            raise ScriptError("no steps")
        script = SessionScript(
            actors=actors, steps=steps,
            intent=data.get("intent", ""),
            collaboration_id=data.get("collaborationId", "session"),
        )
        script.validate()
        return script

    @staticmethod
    def load(path: str) -> "SessionScript":
        try:
            with open(path, "r", encoding="utf-8") as fh:
                data = json.load(fh)
        except FileNotFoundError:
            raise ScriptError(f"script not found: {path}") from None
        except json.JSONDecodeError as exc:
            raise ScriptError(f"script is not valid JSON: {exc}") from None
        return SessionScript.from_dict(data)

    def validate(self) -> None:
        declared = set()
        moderators = 0
        for i, actor in enumerate(self.actors):
            if not isinstance(actor, dict) or not actor.get("userId"):
                raise ScriptError(f"actor {i} needs a userId")
            if actor["userId"] in declared:
                raise ScriptError(f"actor {actor['userId']!r} declared twice")
            declared.add(actor["userId"])
            if actor.get("isModerator"):
                moderators += 1
        if moderators != 1:
            raise ScriptError("exactly one actor must carry isModerator=true")
        for i, step in enumerate(self.steps):
            if not isinstance(step, dict):
                raise ScriptError(f"step {i} must be an object", step=i)
            command = step.get("command")
            if command not in _STEP_COMMANDS:
                raise ScriptError(f"step {i}: unknown command {command!r}", step=i)
            if step.get("actor") not in declared:
                raise ScriptError(f"step {i}: undeclared actor {step.get('actor')!r}", step=i)


@dataclass
class SessionResult:
    engine: Engine
    collaboration_id: str
    summary: dict
    exit_code: int
    error: Optional[str] = None
    failed_step: Optional[int] = None
    events: list = field(default_factory=list)


def _dispatch(engine: Engine, cid: str, actor: str, command: str, args: dict):
    if command == "defineSituation":
        return engine.define_situation(cid, actor, args.get("intent", ""),
                                       args.get("deadline"))
    if command == "chooseMethod":
        return engine.choose_method(cid, actor, args["policyId"],
                                    args.get("thresholdOverride"), args.get("criteria"))
    if command == "notifyActors":
        return engine.notify_actors(cid, actor)
    if command == "addProposal":
        return engine.add_proposal(cid, actor, proposal_id=args.get("proposalId"),
                                   title=args.get("title", ""), body=args.get("body", ""),
                                   children=args.get("children"))
    if command == "addAlternative":
        return engine.add_alternative(cid, actor, refines=args["refines"],
                                      proposal_id=args.get("proposalId"),
                                      title=args.get("title", ""), body=args.get("body", ""),
                                      conflictual=args.get("conflictual", False))
    if command == "addConflict":
        return engine.add_conflict(cid, actor, args["proposalId"], args["otherId"])
    if command == "openEvaluation":
        return engine.open_evaluation(cid, actor)
    if command == "submitDecision":
        return engine.submit_decision(cid, actor, proposal_id=args["proposalId"],
                                      kind=args["kind"], rating=args.get("rating"),
                                      comment=args.get("comment"),
                                      alternative_id=args.get("alternativeId"),
                                      binding=args.get("binding", True))
    if command == "closeRound":
        return engine.close_round(cid, actor)
    if command == "moderatorChoice":
        return engine.moderator_choice(cid, actor, args["choice"],
                                       args.get("newThreshold"))
    if command == "adjustProposals":
        return engine.adjust_proposals(cid, actor, args.get("edits", []))
    raise ScriptError(f"unknown command {command!r}")


def run_script(script: SessionScript, *, log: Optional[LogStore] = None) -> SessionResult:
    clock = LogicalClock()
    engine = Engine(log=log, clock=clock, idgen=IdGenerator(clock, seed=0))
    cid = script.collaboration_id
    engine.create_collaboration(script.actors, collaboration_id=cid)

    error = None
    failed_step = None
    for i, step in enumerate(script.steps):
        actor = step["actor"]
        args = dict(step.get("args") or {})
        try:
            _dispatch(engine, cid, actor, step["command"], args)
        except ScriptError:
            raise
        except (KeyError, TypeError, ValueError) as exc:
            raise ScriptError(f"step {i} ({step['command']}): bad arguments: {exc}",
                              step=i) from exc
        except GdmError as exc:
            error = f"step {i} ({step['command']}): {exc.code}: {exc.detail}"
            failed_step = i
            break

    collab = engine.get(cid)
    summary = build_summary(collab)
    if error is not None:
        code = EXIT_ENGINE_ERROR
    elif collab.state is LifecycleState.CLOSED:
        unresolved = sum(1 for row in summary["proposals"]
                         if row["collectiveDecision"] == "unresolved")
        code = EXIT_CONVERGED if unresolved == 0 else EXIT_UNRESOLVED
    else:
        code = EXIT_UNRESOLVED
    return SessionResult(engine=engine, collaboration_id=cid, summary=summary,
                         exit_code=code, error=error, failed_step=failed_step,
                         events=engine.events(cid))
