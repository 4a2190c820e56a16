"""Observer-style notification: per-subject subscriber lists, ordered
delivery of state-change events, durable log append before any delivery.

Publishers never see subscriber identities and never block on them:
callbacks run outside the publisher's bookkeeping lock, failing observers
are retried and dropped after three consecutive failures (with an audit
record), and delivery is at-least-once with consumer-side dedup by
(collaborationId, seq).
"""

from __future__ import annotations

import threading
from collections import deque
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Optional

from .errors import UnknownSubject

MAX_DELIVERY_ATTEMPTS = 3


class EventKind(Enum):
    ACTOR_ASSIGNED = "ActorAssigned"
    PROPOSAL_CREATED = "ProposalCreated"
    ALTERNATIVE_PROPOSED = "AlternativeProposed"
    EVALUATION_REQUESTED = "EvaluationRequested"
    DECISION_RECORDED = "DecisionRecorded"
    ROUND_CLOSED = "RoundClosed"
    THRESHOLD_MISSED = "ThresholdMissed"
    THRESHOLD_ADJUSTED = "ThresholdAdjusted"
    COLLECTIVE_DECISION_PUBLISHED = "CollectiveDecisionPublished"
    COLLABORATION_CLOSED = "CollaborationClosed"


@dataclass(frozen=True, kw_only=True)
class Event:
    seq: int  # per-collaboration, gap-free
    collaboration_id: str
    kind: EventKind
    payload: dict
    at: int

    def to_json(self) -> dict:
        return {
            "seq": self.seq,
            "collaborationId": self.collaboration_id,
            "kind": self.kind.value,
            "payload": self.payload,
            "at": self.at,
        }

    @staticmethod
    def from_json(d: dict) -> "Event":
        return Event(seq=d["seq"], collaboration_id=d["collaborationId"],
                     kind=EventKind(d["kind"]), payload=d["payload"], at=d["at"])


@dataclass(frozen=True, kw_only=True)
class Subscription:
    observer_id: str
    subject_id: str
    created_at: int

    def to_json(self) -> dict:
        return {"observerId": self.observer_id, "subjectId": self.subject_id,
                "createdAt": self.created_at}


class NotificationBus:
    """In-process synchronous fan-out with bounded retry; no broker."""

    def __init__(self, sink: Optional[Callable[[Event], None]] = None,
                 audit: Optional[Callable[[str, dict], None]] = None,
                 clock=None):
        self.sink = sink          # durable append; runs before any delivery
        self.audit = audit        # audit record writer for dropped observers
        self._clock = clock
        self._lock = threading.Lock()
        self._subjects: set[str] = set()
        self._subject_collab: dict[str, str] = {}
        self._subs: dict[str, dict[str, Subscription]] = {}  # subject -> observer -> sub
        self._callbacks: dict[str, Callable[[Event], None]] = {}
        self._queues: dict[str, deque] = {}   # per-collaboration pending deliveries
        self._draining: set[str] = set()

    # -- subjects and observers ------------------------------------------------

    def add_subject(self, subject_id: str, collaboration_id: Optional[str] = None) -> None:
        with self._lock:
            self._subjects.add(subject_id)
            self._subject_collab[subject_id] = collaboration_id or subject_id

    def attach(self, observer_id: str, callback: Callable[[Event], None]) -> None:
        """Bind a delivery channel to an observer identity."""
        with self._lock:
            self._callbacks[observer_id] = callback

    def detach(self, observer_id: str) -> None:
        with self._lock:
            self._callbacks.pop(observer_id, None)

    def register(self, observer_id: str, subject_id: str, at: int = 0) -> Subscription:
        with self._lock:
            if subject_id not in self._subjects:
                raise UnknownSubject(f"unknown subject {subject_id!r}")
            existing = self._subs.get(subject_id, {}).get(observer_id)
            if existing is not None:
                return existing
            sub = Subscription(observer_id=observer_id, subject_id=subject_id, created_at=at)
            self._subs.setdefault(subject_id, {})[observer_id] = sub
            return sub

    def unregister(self, observer_id: str, subject_id: str) -> None:
        with self._lock:
            self._subs.get(subject_id, {}).pop(observer_id, None)

    def subscribers_of(self, subject_id: str) -> list:
        with self._lock:
            return sorted(self._subs.get(subject_id, {}))

    # -- publishing --------------------------------------------------------------

    def publish(self, event: Event) -> None:
        """Durably append, then deliver to the subject's current subscribers.

        Delivery targets are the observers of the collaboration plus the
        observers of the proposal named in the payload, if any. Callbacks
        never run while the bus lock is held.
        """
        if self.sink is not None:
            self.sink(event)
        cid = event.collaboration_id
        with self._lock:
            targets: dict[str, Subscription] = {}
            targets.update(self._subs.get(cid, {}))
            proposal_id = event.payload.get("proposalId")
            if proposal_id:
                targets.update(self._subs.get(proposal_id, {}))
            queue = self._queues.setdefault(cid, deque())
            queue.append((event, sorted(targets)))
            if cid in self._draining:
                return
            self._draining.add(cid)
        try:
            self._drain(cid)
        finally:
            with self._lock:
                self._draining.discard(cid)

    def _drain(self, cid: str) -> None:
        while True:
            with self._lock:
                queue = self._queues.get(cid)
                if not queue:
                    return
                event, observers = queue.popleft()
            for observer_id in observers:
                self._deliver(observer_id, event)

    def _deliver(self, observer_id: str, event: Event) -> None:
        callback = self._callbacks.get(observer_id)
        if callback is None:
            return  # identity registered without a transport; nothing to push
        for attempt in range(1, MAX_DELIVERY_ATTEMPTS + 1):
            try:
                callback(event)
                return
            except Exception:
                if attempt == MAX_DELIVERY_ATTEMPTS:
                    self._drop(observer_id, event)

    def _drop(self, observer_id: str, event: Event) -> None:
        with self._lock:
            self._callbacks.pop(observer_id, None)
            for subs in self._subs.values():
                subs.pop(observer_id, None)
        if self.audit is not None:
            self.audit(event.collaboration_id, {
                "event": "subscriberDropped",
                "observerId": observer_id,
                "afterFailures": MAX_DELIVERY_ATTEMPTS,
                "atSeq": event.seq,
            })

    # -- bulk registration --------------------------------------------------------

    def auto_register_eligible(self, collab, at: int = 0) -> list:
        """Register every eligible decision maker on every proposal they may
        evaluate; idempotent, re-run after proposal additions."""
        subs = []
        for dm in sorted(collab.eligible_dms):
            for pid in sorted(collab.proposals):
                subs.append(self.register(dm, pid, at))
        return subs
