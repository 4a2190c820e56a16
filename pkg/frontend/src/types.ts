/** Wire types mirroring the service's canonical JSON. */

export type LifecycleState =
  | "Draft" | "Configured" | "MethodChosen" | "Notified" | "Elaboration"
  | "EvaluationOpen" | "EvaluationClosed" | "Aggregated"
  | "AdjustingProposals" | "AwaitingModeratorChoice" | "Closed";

export type CollectiveDecision = "pending" | "approved" | "rejected" | "unresolved";
export type AgreementKind = "approval" | "reject" | "refinement";

export interface InvolvedUser {
  userId: string;
  displayName: string;
  isModerator: boolean;
  expertiseLevel: string;
  viewpoint: string | null;
}

export interface ProposalJson {
  proposalId: string;
  kind: "elementary" | "alternative" | "composite";
  title: string;
  authorId: string;
  createdAt: number;
  body?: string;
  children?: string[];
  refines?: string;
  conflictual?: boolean;
  collectiveDecision: CollectiveDecision;
  conflictsWith: string[];
  withdrawn: boolean;
}

export interface PolicyJson {
  policyId: string;
  descriptor: {
    name: string;
    intent: string;
    applications: string[];
    solution: string;
    knownUses: string[];
    relatedPatterns: string[];
  };
  coDecision: { processKind: string; threshold: string; preferenceKind: string };
  participation: { type: "democratic" | "restricted"; criteria: unknown };
  iterationClass: "singleElection" | "iterative";
  maxRounds: number;
  advisory: boolean;
}

export interface CollaborationSnapshot {
  collaborationId: string;
  intent: string;
  deadline: number | null;
  involvedUsers: InvolvedUser[];
  adoptedPolicyId: string | null;
  policy: PolicyJson | null;
  eligibleDMs: string[];
  proposals: Record<string, ProposalJson>;
  currentRound: number;
  state: LifecycleState;
  thresholdOverride: string | null;
  workProduct: {
    collaborationId: string;
    approvedProposalIds: string[];
    closedAt: number;
    finalRound: number;
  } | null;
  reevaluateUsed: boolean;
  lastEventSeq?: number;
}

export type EventKind =
  | "ActorAssigned" | "ProposalCreated" | "AlternativeProposed"
  | "EvaluationRequested" | "DecisionRecorded" | "RoundClosed"
  | "ThresholdMissed" | "ThresholdAdjusted"
  | "CollectiveDecisionPublished" | "CollaborationClosed";

export interface EventJson {
  seq: number;
  collaborationId: string;
  kind: EventKind;
  payload: Record<string, unknown>;
  at: number;
}

export interface SummaryRow {
  proposalId: string;
  kind: string;
  title: string;
  body: string | null;
  authorId: string;
  decisions: Record<string, { kind: AgreementKind; rating: number | null; round: number }>;
  score: string | null;
  collectiveDecision: CollectiveDecision;
  conflictsWith: string[];
  withdrawn: boolean;
}

export interface SummaryJson {
  collaborationId: string;
  intent: string;
  policy: string | null;
  state: LifecycleState;
  round: number;
  proposals: SummaryRow[];
  workProduct: CollaborationSnapshot["workProduct"];
}

export interface ApiErrorBody {
  code: string;
  detail: string;
}
