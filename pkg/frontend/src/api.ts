/** Thin typed client over the HTTP API; bearer-token auth. */

import type {
  ApiErrorBody,
  CollaborationSnapshot,
  EventJson,
  PolicyJson,
  SummaryJson,
} from "./types.js";

export class ApiError extends Error {
  constructor(public status: number, public code: string, detail: string) {
    super(detail);
  }
}

export class ApiClient {
  constructor(private baseUrl: string, private token: string) {}

  private async request<T>(method: string, path: string, body?: unknown,
                           idempotencyKey?: string): Promise<T> {
    const headers: Record<string, string> = {
      Authorization: `Bearer ${this.token}`,
    };
    if (body !== undefined) headers["Content-Type"] = "application/json";
    if (idempotencyKey) headers["Idempotency-Key"] = idempotencyKey;
    const response = await fetch(`${this.baseUrl}${path}`, {
      method,
      headers,
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    const text = await response.text();
    const data = text ? JSON.parse(text) : null;
    if (!response.ok) {
      const err = (data ?? {}) as Partial<ApiErrorBody>;
      throw new ApiError(response.status, err.code ?? "HttpError",
                         err.detail ?? `HTTP ${response.status}`);
    }
    return data as T;
  }

  listPolicies(): Promise<PolicyJson[]> {
    return this.request("GET", "/policies");
  }

  getPolicy(name: string): Promise<PolicyJson> {
    return this.request("GET", `/policies/${encodeURIComponent(name)}`);
  }

  createCollaboration(involvedUsers: object[], collaborationId?: string) {
    return this.request<CollaborationSnapshot>("POST", "/collaborations",
      { involvedUsers, collaborationId });
  }

  getCollaboration(cid: string): Promise<CollaborationSnapshot> {
    return this.request("GET", `/collaborations/${encodeURIComponent(cid)}`);
  }

  getSummary(cid: string): Promise<SummaryJson> {
    return this.request("GET", `/collaborations/${encodeURIComponent(cid)}/summary`);
  }

  getEvents(cid: string, fromSeq = 0): Promise<EventJson[]> {
    return this.request("GET",
      `/collaborations/${encodeURIComponent(cid)}/events?follow=false&from_seq=${fromSeq}`);
  }

  defineSituation(cid: string, intent: string, deadline?: number) {
    return this.request<CollaborationSnapshot>(
      "POST", `/collaborations/${cid}/situation`, { intent, deadline });
  }

  choosePolicy(cid: string, policyId: string, thresholdOverride?: string,
               criteria?: object) {
    return this.request<CollaborationSnapshot>(
      "POST", `/collaborations/${cid}/policy`,
      { policyId, thresholdOverride, criteria });
  }

  notifyActors(cid: string) {
    return this.request<CollaborationSnapshot>("POST", `/collaborations/${cid}/notify`);
  }

  addProposal(cid: string, proposal: { proposalId?: string; title?: string;
                                       body?: string; children?: string[] }) {
    return this.request("POST", `/collaborations/${cid}/proposals`, proposal);
  }

  addAlternative(refinesId: string, alternative: {
    proposalId?: string; title?: string; body?: string; conflictual?: boolean;
  }) {
    return this.request("POST", `/proposals/${refinesId}/alternatives`, alternative);
  }

  submitDecision(proposalId: string, decision: {
    kind: string; rating?: number; comment?: string;
    alternativeId?: string; binding?: boolean;
  }) {
    return this.request("POST", `/proposals/${proposalId}/decisions`, decision);
  }

  openRound(cid: string) {
    return this.request("POST", `/collaborations/${cid}/rounds/open`);
  }

  closeRound(cid: string) {
    return this.request("POST", `/collaborations/${cid}/rounds/close`);
  }

  moderatorChoice(cid: string, choice: "adjustThreshold" | "reevaluate",
                  newThreshold?: string) {
    return this.request("POST", `/collaborations/${cid}/moderator-choice`,
      { choice, newThreshold });
  }

  adjustProposals(cid: string, edits: object[]) {
    return this.request("POST", `/collaborations/${cid}/adjustments`, { edits });
  }
}
