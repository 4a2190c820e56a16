/** Client-side mirror of one collaboration.
 *
 * Server-authoritative: the model is a snapshot plus the events applied on
 * top of it, deduplicated by sequence number. Events never fabricate state
 * the server did not publish; anything not derivable from events (exact
 * tallies, new proposal bodies) is refreshed from GET when flagged dirty.
 */

import type {
  CollaborationSnapshot,
  EventJson,
  LifecycleState,
  SummaryJson,
  SummaryRow,
} from "./types.js";

export type UiAction =
  | "defineSituation" | "choosePolicy" | "notifyActors"
  | "addProposal" | "openRound"
  | "approve" | "refine" | "reject"
  | "closeRound" | "adjustProposals"
  | "adjustThreshold" | "reevaluate";

export interface VoteKey {
  proposalId: string;
  decisionMakerId: string;
  round: number;
}

export class CollaborationViewModel {
  snapshot: CollaborationSnapshot | null = null;
  lastSeq = 0;
  events: EventJson[] = [];
  /** needs a GET refresh: an applied event changed server state */
  dirty = false;
  /** binding votes seen this round, from DecisionRecorded events */
  private votes = new Map<string, Set<string>>(); // `${round}:${proposalId}` -> dm ids
  /** collective decisions published so far */
  decisions = new Map<string, string>();

  reset(snapshot: CollaborationSnapshot, events: EventJson[] = []): void {
    this.snapshot = snapshot;
    this.lastSeq = 0;
    this.events = [];
    this.votes.clear();
    this.decisions.clear();
    this.dirty = false;
    for (const event of events) this.applyEvent(event);
  }

  /** Returns false for duplicates (reconnect overlap); true when applied. */
  applyEvent(event: EventJson): boolean {
    if (event.seq <= this.lastSeq) return false;
    this.lastSeq = event.seq;
    this.events.push(event);
    switch (event.kind) {
      case "DecisionRecorded": {
        if (event.payload["binding"]) {
          const key = `${event.payload["round"]}:${event.payload["proposalId"]}`;
          if (!this.votes.has(key)) this.votes.set(key, new Set());
          this.votes.get(key)!.add(String(event.payload["decisionMakerId"]));
        }
        break;
      }
      case "CollectiveDecisionPublished":
        this.decisions.set(String(event.payload["proposalId"]),
                           String(event.payload["decision"]));
        this.dirty = true;
        break;
      default:
        this.dirty = true;
    }
    return true;
  }

  state(): LifecycleState {
    return this.snapshot?.state ?? "Draft";
  }

  isModerator(userId: string): boolean {
    return this.snapshot?.involvedUsers.some(
      (u) => u.userId === userId && u.isModerator) ?? false;
  }

  isEligible(userId: string): boolean {
    return this.snapshot?.eligibleDMs.includes(userId) ?? false;
  }

  /** Elementary proposals still awaiting a collective decision. */
  liveProposals(): string[] {
    const snapshot = this.snapshot;
    if (!snapshot) return [];
    return Object.values(snapshot.proposals)
      .filter((p) => p.kind !== "composite" && !p.withdrawn
        && p.collectiveDecision === "pending"
        && this.decisions.get(p.proposalId) === undefined)
      .map((p) => p.proposalId);
  }

  quorumSize(): number {
    const n = this.snapshot?.eligibleDMs.length ?? 0;
    return Math.ceil(n / 2);
  }

  votersOf(proposalId: string): number {
    const round = this.snapshot?.currentRound ?? 0;
    return this.votes.get(`${round}:${proposalId}`)?.size ?? 0;
  }

  /** Green once every live proposal has at least half the eligible DMs. */
  quorumReached(): boolean {
    const need = this.quorumSize();
    return this.liveProposals().every((pid) => this.votersOf(pid) >= need);
  }

  /** The only actions the current state and role could possibly accept;
   * everything else is not rendered (no dead-on-arrival commands). */
  legalActions(userId: string): UiAction[] {
    const snapshot = this.snapshot;
    if (!snapshot) return [];
    const moderator = this.isModerator(userId);
    const eligible = this.isEligible(userId);
    const actions: UiAction[] = [];
    switch (snapshot.state) {
      case "Draft":
        if (moderator) actions.push("defineSituation");
        break;
      case "Configured":
        if (moderator) actions.push("choosePolicy");
        break;
      case "MethodChosen":
        if (moderator) actions.push("notifyActors");
        break;
      case "Elaboration":
        if (moderator || eligible) actions.push("addProposal");
        if (moderator) actions.push("openRound");
        break;
      case "EvaluationOpen":
        if (eligible) actions.push("approve", "refine", "reject");
        if (moderator && this.quorumReached()) actions.push("closeRound");
        break;
      case "AdjustingProposals":
        if (moderator || eligible) actions.push("adjustProposals");
        break;
      case "AwaitingModeratorChoice":
        if (moderator) {
          actions.push("adjustThreshold");
          if (!snapshot.reevaluateUsed) actions.push("reevaluate");
        }
        break;
      default:
        break; // Closed and transient states render nothing
    }
    return actions;
  }
}

/** Live summary table: seeded from GET /summary, updated by events, rows
 * keyed by proposal id so duplicate deliveries never duplicate rows. */
export class SummaryModel {
  rows = new Map<string, SummaryRow>();
  order: string[] = [];
  lastSeq = 0;
  state: LifecycleState = "Draft";

  reset(summary: SummaryJson): void {
    this.rows.clear();
    this.order = [];
    this.state = summary.state;
    for (const row of summary.proposals) {
      this.rows.set(row.proposalId, row);
      this.order.push(row.proposalId);
    }
  }

  applyEvent(event: EventJson): boolean {
    if (event.seq <= this.lastSeq) return false;
    this.lastSeq = event.seq;
    const pid = event.payload["proposalId"] as string | undefined;
    switch (event.kind) {
      case "ProposalCreated":
      case "AlternativeProposed": {
        if (!pid || this.rows.has(pid)) break;
        this.rows.set(pid, {
          proposalId: pid,
          kind: event.kind === "ProposalCreated"
            ? String(event.payload["kind"] ?? "elementary") : "alternative",
          title: String(event.payload["title"] ?? ""),
          body: null,
          authorId: String(event.payload["authorId"] ?? ""),
          decisions: {},
          score: null,
          collectiveDecision: "pending",
          conflictsWith: [],
          withdrawn: false,
        });
        this.order.push(pid);
        break;
      }
      case "DecisionRecorded": {
        const row = pid ? this.rows.get(pid) : undefined;
        if (row && event.payload["binding"]) {
          row.decisions[String(event.payload["decisionMakerId"])] = {
            kind: event.payload["kind"] as SummaryRow["decisions"][string]["kind"],
            rating: null,
            round: Number(event.payload["round"]),
          };
        }
        break;
      }
      case "CollectiveDecisionPublished": {
        const row = pid ? this.rows.get(pid) : undefined;
        if (row) {
          row.collectiveDecision =
            event.payload["decision"] as SummaryRow["collectiveDecision"];
          if (event.payload["score"] != null) {
            row.score = String(event.payload["score"]);
          }
        }
        break;
      }
      case "CollaborationClosed":
        this.state = "Closed";
        break;
      default:
        break;
    }
    return true;
  }

  table(): SummaryRow[] {
    return this.order.map((pid) => this.rows.get(pid)!);
  }
}
