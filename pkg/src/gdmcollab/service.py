"""HTTP facade over the lifecycle commands.

One mutating request executes exactly one lifecycle command; responses are
canonical JSON fragments of the resulting state. Errors map to a stable
(status, code) pair. Mutating requests honor an Idempotency-Key header:
a repeated key returns the original response without re-execution. The
event stream is exposed as server-sent events replayable from any sequence
number.
"""

from __future__ import annotations

import json
import queue
import threading
import uuid
from typing import Optional

from fastapi import Depends, FastAPI, Header, HTTPException, Query, Request
from fastapi.responses import Response, StreamingResponse

from .canonical import canon_dumps
from .config import Config
from .errors import GdmError, http_status
from .lifecycle import Engine
from .summary import build_summary


def _json_response(payload, status_code: int = 200) -> Response:
    return Response(content=canon_dumps(payload), status_code=status_code,
                    media_type="application/json")


def create_app(engine: Engine, config: Optional[Config] = None) -> FastAPI:
    config = config or Config()
    app = FastAPI(title="gdmcollab", version="0.1.0")
    idempotency_lock = threading.Lock()
    idempotency_cache: dict[str, tuple[int, str]] = {}

    def current_user(authorization: Optional[str] = Header(default=None)) -> str:
        if not config.tokens:
            # no token map configured: trust the bearer value as the user id
            if authorization and authorization.startswith("Bearer "):
                return authorization.removeprefix("Bearer ").strip()
            raise HTTPException(status_code=401, detail="missing bearer token")
        if not authorization or not authorization.startswith("Bearer "):
            raise HTTPException(status_code=401, detail="missing bearer token")
        token = authorization.removeprefix("Bearer ").strip()
        user = config.tokens.get(token)
        if user is None:
            raise HTTPException(status_code=401, detail="unknown token")
        return user

    @app.exception_handler(GdmError)
    async def gdm_error_handler(_request: Request, exc: GdmError):
        return _json_response(
            {"code": exc.code, "detail": exc.detail},
            status_code=http_status(exc.code),
        )

    def idempotent(key: Optional[str], run) -> Response:
        if key is None:
            payload, status = run()
            return _json_response(payload, status)
        with idempotency_lock:
            cached = idempotency_cache.get(key)
        if cached is not None:
            status, body = cached
            return Response(content=body, status_code=status,
                            media_type="application/json")
        payload, status = run()
        body = canon_dumps(payload)
        with idempotency_lock:
            idempotency_cache[key] = (status, body)
        return Response(content=body, status_code=status, media_type="application/json")

    # -- policies ---------------------------------------------------------------

    @app.get("/policies")
    def list_policies(user: str = Depends(current_user)):
        return _json_response(
            [engine.policies.get(name).to_json() for name in engine.policies.names()])

    @app.get("/policies/{name}")
    def get_policy(name: str, user: str = Depends(current_user)):
        return _json_response(engine.policies.get(name).to_json())

    # -- collaborations ------------------------------------------------------------

    @app.post("/collaborations", status_code=201)
    async def create_collaboration(request: Request, user: str = Depends(current_user),
                                   idempotency_key: Optional[str] = Header(default=None)):
        body = await request.json()
        def run():
            result = engine.create_collaboration(
                body.get("involvedUsers", []),
                collaboration_id=body.get("collaborationId"),
                actor=user)
            return result, 201
        return idempotent(idempotency_key, run)

    @app.get("/collaborations/{cid}")
    def get_collaboration(cid: str, user: str = Depends(current_user)):
        collab = engine.get(cid)
        snapshot = collab.to_json()
        events = engine.events(cid)
        snapshot["lastEventSeq"] = events[-1].seq if events else 0
        return _json_response(snapshot)

    @app.get("/collaborations/{cid}/summary")
    def get_summary(cid: str, user: str = Depends(current_user)):
        return _json_response(build_summary(engine.get(cid)))

    @app.post("/collaborations/{cid}/situation")
    async def post_situation(cid: str, request: Request, user: str = Depends(current_user),
                             idempotency_key: Optional[str] = Header(default=None)):
        body = await request.json()
        return idempotent(idempotency_key, lambda: (
            engine.define_situation(cid, user, body.get("intent", ""),
                                    body.get("deadline")), 200))

    @app.post("/collaborations/{cid}/policy")
    async def post_policy(cid: str, request: Request, user: str = Depends(current_user),
                          idempotency_key: Optional[str] = Header(default=None)):
        body = await request.json()
        return idempotent(idempotency_key, lambda: (
            engine.choose_method(cid, user, body.get("policyId", ""),
                                 body.get("thresholdOverride"),
                                 body.get("criteria")), 200))

    @app.post("/collaborations/{cid}/notify")
    def post_notify(cid: str, user: str = Depends(current_user),
                    idempotency_key: Optional[str] = Header(default=None)):
        return idempotent(idempotency_key,
                          lambda: (engine.notify_actors(cid, user), 200))

    @app.post("/collaborations/{cid}/proposals", status_code=201)
    async def post_proposal(cid: str, request: Request, user: str = Depends(current_user),
                            idempotency_key: Optional[str] = Header(default=None)):
        body = await request.json()
        return idempotent(idempotency_key, lambda: (
            engine.add_proposal(cid, user,
                                proposal_id=body.get("proposalId"),
                                title=body.get("title", ""),
                                body=body.get("body", ""),
                                children=body.get("children")), 201))

    @app.post("/collaborations/{cid}/rounds/open")
    def post_open(cid: str, user: str = Depends(current_user),
                  idempotency_key: Optional[str] = Header(default=None)):
        return idempotent(idempotency_key,
                          lambda: (engine.open_evaluation(cid, user), 200))

    @app.post("/collaborations/{cid}/rounds/close")
    def post_close(cid: str, user: str = Depends(current_user),
                   idempotency_key: Optional[str] = Header(default=None)):
        return idempotent(idempotency_key,
                          lambda: (engine.close_round(cid, user), 200))

    @app.post("/collaborations/{cid}/moderator-choice")
    async def post_choice(cid: str, request: Request, user: str = Depends(current_user),
                          idempotency_key: Optional[str] = Header(default=None)):
        body = await request.json()
        return idempotent(idempotency_key, lambda: (
            engine.moderator_choice(cid, user, body.get("choice", ""),
                                    body.get("newThreshold")), 200))

    @app.post("/collaborations/{cid}/adjustments")
    async def post_adjustments(cid: str, request: Request, user: str = Depends(current_user),
                               idempotency_key: Optional[str] = Header(default=None)):
        body = await request.json()
        return idempotent(idempotency_key, lambda: (
            engine.adjust_proposals(cid, user, body.get("edits", [])), 200))

    # -- proposal-scoped commands ----------------------------------------------------

    def _collab_of_proposal(pid: str) -> str:
        for cid in engine.collaboration_ids():
            if pid in engine.get(cid).proposals:
                return cid
        from .errors import UnknownProposal
        raise UnknownProposal(f"unknown proposal {pid!r}")

    @app.post("/proposals/{pid}/alternatives", status_code=201)
    async def post_alternative(pid: str, request: Request, user: str = Depends(current_user),
                               idempotency_key: Optional[str] = Header(default=None)):
        body = await request.json()
        cid = _collab_of_proposal(pid)
        return idempotent(idempotency_key, lambda: (
            engine.add_alternative(cid, user, refines=pid,
                                   proposal_id=body.get("proposalId"),
                                   title=body.get("title", ""),
                                   body=body.get("body", ""),
                                   conflictual=body.get("conflictual", False)), 201))

    @app.post("/proposals/{pid}/conflicts")
    async def post_conflict(pid: str, request: Request, user: str = Depends(current_user),
                            idempotency_key: Optional[str] = Header(default=None)):
        body = await request.json()
        cid = _collab_of_proposal(pid)
        return idempotent(idempotency_key, lambda: (
            engine.add_conflict(cid, user, pid, body.get("otherId", "")), 200))

    @app.post("/proposals/{pid}/decisions", status_code=201)
    async def post_decision(pid: str, request: Request, user: str = Depends(current_user),
                            idempotency_key: Optional[str] = Header(default=None)):
        body = await request.json()
        cid = _collab_of_proposal(pid)
        return idempotent(idempotency_key, lambda: (
            engine.submit_decision(cid, user, proposal_id=pid,
                                   kind=body.get("kind", ""),
                                   rating=body.get("rating"),
                                   comment=body.get("comment"),
                                   alternative_id=body.get("alternativeId"),
                                   binding=body.get("binding", True)), 201))

    # -- event stream -------------------------------------------------------------------

    @app.get("/collaborations/{cid}/events")
    def get_events(cid: str, request: Request, user: str = Depends(current_user),
                   from_: Optional[int] = Query(default=None, alias="from"),
                   from_seq: Optional[int] = None, follow: bool = True,
                   max_events: Optional[int] = None):
        engine.get(cid)
        from_seq = from_ if from_ is not None else (from_seq or 0)
        if not follow:
            return _json_response([e.to_json() for e in engine.events(cid, from_seq)])

        client_id = f"sse-{uuid.uuid4().hex}"
        incoming: "queue.Queue" = queue.Queue()
        engine.bus.attach(client_id, incoming.put)
        engine.bus.register(client_id, cid)

        def stream():
            last = from_seq - 1
            sent = 0
            try:
                for event in engine.events(cid, from_seq):
                    last = event.seq
                    sent += 1
                    yield _sse_frame(event)
                    if max_events is not None and sent >= max_events:
                        return
                while max_events is None or sent < max_events:
                    try:
                        event = incoming.get(timeout=15.0)
                    except queue.Empty:
                        yield ": keep-alive\n\n"
                        continue
                    if event.seq <= last:
                        continue  # at-least-once delivery; dedup by seq
                    last = event.seq
                    sent += 1
                    yield _sse_frame(event)
            finally:
                engine.bus.unregister(client_id, cid)
                engine.bus.detach(client_id)

        return StreamingResponse(stream(), media_type="text/event-stream",
                                 headers={"Cache-Control": "no-cache"})

    return app


def _sse_frame(event) -> str:
    return (f"id: {event.seq}\n"
            f"event: {event.kind.value}\n"
            f"data: {canon_dumps(event.to_json())}\n\n")


def build_engine(config: Config) -> Engine:
    """Build the engine from the durable log (replaying prior state if any)."""
    import os

    from .eventlog import LogStore
    from .policies import PolicyRepository

    os.makedirs(config.data_dir, exist_ok=True)
    log = LogStore(config.log_path, fsync=config.fsync)
    policies = PolicyRepository(default_max_rounds=config.max_rounds_default)
    existing, _ = log.read_all()
    if existing or os.path.exists(config.snapshot_path):
        snapshot = config.snapshot_path if os.path.exists(config.snapshot_path) else None
        return Engine.from_log(log, snapshot_path=snapshot, policies=policies,
                               threshold_map=config.thresholds)
    return Engine(log=log, policies=policies, threshold_map=config.thresholds)


def serve(config: Config) -> None:
    import uvicorn

    app = create_app(build_engine(config), config)
    uvicorn.run(app, host=config.host, port=config.port, log_level="info")
