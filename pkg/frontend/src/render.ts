/** HTML renderers for the three views. Pure string templates so the views
 * are testable without a DOM; main.ts wires them to the document. */

import type { PolicyJson, SummaryRow } from "./types.js";
import type { CollaborationViewModel, UiAction } from "./viewmodel.js";

export function esc(text: unknown): string {
  return String(text ?? "")
    .replaceAll("&", "&amp;").replaceAll("<", "&lt;").replaceAll(">", "&gt;")
    .replaceAll('"', "&quot;");
}

export function renderPolicyCard(policy: PolicyJson): string {
  const d = policy.descriptor;
  return `<div class="policy-card" data-policy="${esc(d.name)}">
  <h3>${esc(d.name)}</h3>
  <p class="intent">${esc(d.intent)}</p>
  <ul>${d.applications.map((a) => `<li>${esc(a)}</li>`).join("")}</ul>
  <p class="solution">${esc(d.solution)}</p>
  <p class="related">Related: ${d.relatedPatterns.map(esc).join(", ") || "-"}</p>
  <p class="co-decision">${esc(policy.coDecision.processKind)} ·
    threshold ${esc(policy.coDecision.threshold)} ·
    ${esc(policy.coDecision.preferenceKind)} ·
    ${esc(policy.iterationClass)}</p>
</div>`;
}

function button(action: UiAction, label: string, extra = ""): string {
  return `<button data-action="${action}"${extra}>${esc(label)}</button>`;
}

/** Moderator console: wizard steps appear per lifecycle state; actions the
 * engine would reject are simply not rendered. */
export function renderModeratorConsole(vm: CollaborationViewModel,
                                       userId: string,
                                       policies: PolicyJson[] = []): string {
  const snapshot = vm.snapshot;
  if (!snapshot) return `<p>No collaboration loaded.</p>`;
  const actions = new Set(vm.legalActions(userId));
  const parts: string[] = [
    `<header><h2>${esc(snapshot.intent || snapshot.collaborationId)}</h2>
     <span class="state">${esc(snapshot.state)}</span>
     <span class="round">round ${snapshot.currentRound}</span></header>`,
  ];
  if (actions.has("defineSituation")) {
    parts.push(`<section class="wizard-step" id="situation">
      <input name="intent" placeholder="intent">
      ${button("defineSituation", "Define situation")}
    </section>`);
  }
  if (actions.has("choosePolicy")) {
    parts.push(`<section class="wizard-step" id="policy-pick">
      ${policies.map(renderPolicyCard).join("\n")}
      ${button("choosePolicy", "Adopt policy")}
    </section>`);
  }
  if (actions.has("notifyActors")) {
    const roster = snapshot.involvedUsers.map(
      (u) => `<li>${esc(u.displayName || u.userId)}
        (weight ${esc(u.expertiseLevel)})${u.isModerator ? " (moderator)" : ""}</li>`);
    parts.push(`<section class="wizard-step" id="notify">
      <ul class="roster">${roster.join("")}</ul>
      ${button("notifyActors", "Notify decision makers")}
    </section>`);
  }
  if (actions.has("openRound")) {
    parts.push(`<section id="round-control">${button("openRound", "Open evaluation")}</section>`);
  }
  if (snapshot.state === "EvaluationOpen" && vm.isModerator(userId)) {
    const green = vm.quorumReached();
    const indicator = `<span class="quorum ${green ? "green" : "red"}">quorum
      ${green ? "reached" : "pending"}</span>`;
    parts.push(`<section id="round-control">${indicator}
      ${button("closeRound", "Close round",
               green ? "" : " disabled")}</section>`);
  }
  if (actions.has("adjustThreshold") || actions.has("reevaluate")) {
    const offer: string[] = [];
    if (actions.has("adjustThreshold")) {
      offer.push(`<input name="newThreshold" placeholder="e.g. 1/2">`);
      offer.push(button("adjustThreshold", "Adjust threshold"));
    }
    if (actions.has("reevaluate")) offer.push(button("reevaluate", "Re-evaluate"));
    parts.push(`<section class="banner threshold-missed">
      Threshold missed. ${offer.join(" ")}</section>`);
  }
  if (snapshot.state === "Closed" && snapshot.workProduct) {
    parts.push(`<section class="work-product">Closed in round
      ${snapshot.workProduct.finalRound}; approved:
      ${snapshot.workProduct.approvedProposalIds.map(esc).join(", ") || "none"}.</section>`);
  }
  return parts.join("\n");
}

/** One row per proposal the decision maker may evaluate, with the three
 * actions; reject opens a mandatory comment box, refine an alternative
 * form with a conflictual checkbox. */
export function renderEvaluationView(vm: CollaborationViewModel, userId: string): string {
  const snapshot = vm.snapshot;
  if (!snapshot) return `<p>No collaboration loaded.</p>`;
  const actions = vm.legalActions(userId);
  if (!actions.includes("approve")) {
    return `<p>No evaluation is open for you right now.</p>`;
  }
  const rows = vm.liveProposals().map((pid) => {
    const p = snapshot.proposals[pid];
    const body = p?.body ? `<code>${esc(p.body)}</code>` : "";
    return `<tr data-proposal="${esc(pid)}">
      <td>${esc(p?.title || pid)} ${body}</td>
      <td>
        <button data-action="approve" data-proposal="${esc(pid)}">approve</button>
        <button data-action="refine" data-proposal="${esc(pid)}">refine</button>
        <button data-action="reject" data-proposal="${esc(pid)}">reject</button>
        <span class="recorded" data-recorded="${esc(pid)}"></span>
      </td>
    </tr>
    <tr class="reject-form hidden" data-for="${esc(pid)}">
      <td colspan="2"><textarea name="comment" required
        placeholder="justification (mandatory for reject)"></textarea>
        <button data-action="submit-reject" data-proposal="${esc(pid)}">submit reject</button></td>
    </tr>
    <tr class="refine-form hidden" data-for="${esc(pid)}">
      <td colspan="2">
        <input name="alt-title" placeholder="alternative title">
        <textarea name="alt-body" placeholder="alternative proposal body"></textarea>
        <label><input type="checkbox" name="conflictual"> conflictual with the original</label>
        <button data-action="submit-refine" data-proposal="${esc(pid)}">submit refinement</button>
      </td>
    </tr>`;
  });
  return `<table class="evaluation"><tbody>${rows.join("\n")}</tbody></table>`;
}

export function renderSummaryTable(rows: SummaryRow[], dms: string[]): string {
  const header = ["proposal", "body", "author", ...dms, "collectiveDecision"];
  const body = rows.map((row) => {
    const cells = [
      esc(row.title || row.proposalId),
      `<code>${esc(row.body ?? "")}</code>`,
      esc(row.authorId),
      ...dms.map((dm) => esc(row.decisions[dm]?.kind ?? "")),
      `<b class="decision-${esc(row.collectiveDecision)}">${esc(row.collectiveDecision)}</b>`,
    ];
    return `<tr data-proposal="${esc(row.proposalId)}">` +
      cells.map((c) => `<td>${c}</td>`).join("") + "</tr>";
  });
  return `<table class="summary">
  <thead><tr>${header.map((h) => `<th>${esc(h)}</th>`).join("")}</tr></thead>
  <tbody>${body.join("\n")}</tbody>
</table>`;
}

export function summaryDmColumns(rows: SummaryRow[]): string[] {
  const dms = new Set<string>();
  for (const row of rows) for (const dm of Object.keys(row.decisions)) dms.add(dm);
  return [...dms].sort();
}
