/** Browser bootstrap: login, open or create a collaboration, wire the
 * moderator console, evaluation view and live summary to the service. */

import { ApiClient, ApiError } from "./api.js";
import { EventStream } from "./sse.js";
import {
  renderEvaluationView,
  renderModeratorConsole,
  renderSummaryTable,
  summaryDmColumns,
} from "./render.js";
import { CollaborationViewModel, SummaryModel } from "./viewmodel.js";
import type { PolicyJson } from "./types.js";

interface AppState {
  api: ApiClient;
  userId: string;
  cid: string;
  vm: CollaborationViewModel;
  summary: SummaryModel;
  policies: PolicyJson[];
  stream: EventStream | null;
}

let app: AppState | null = null;

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing #${id}`);
  return node as T;
}

function showError(message: string): void {
  const banner = el<HTMLDivElement>("error");
  banner.textContent = message;
  banner.classList.remove("hidden");
  setTimeout(() => banner.classList.add("hidden"), 6000);
}

async function refresh(): Promise<void> {
  if (!app) return;
  const snapshot = await app.api.getCollaboration(app.cid);
  app.vm.snapshot = snapshot;
  app.vm.dirty = false;
  const summary = await app.api.getSummary(app.cid);
  app.summary.reset(summary);
  render();
}

function render(): void {
  if (!app) return;
  el("console").innerHTML = renderModeratorConsoleSafe();
  el("evaluation").innerHTML = renderEvaluationView(app.vm, app.userId);
  const rows = app.summary.table();
  el("summary").innerHTML = renderSummaryTable(rows, summaryDmColumns(rows));
}

function renderModeratorConsoleSafe(): string {
  if (!app) return "";
  return renderModeratorConsole(app.vm, app.userId, app.policies);
}

async function connect(): Promise<void> {
  const baseUrl = el<HTMLInputElement>("base-url").value.replace(/\/$/, "");
  const token = el<HTMLInputElement>("token").value.trim();
  const cid = el<HTMLInputElement>("collab-id").value.trim();
  const api = new ApiClient(baseUrl, token);
  const policies = await api.listPolicies();
  const snapshot = await api.getCollaboration(cid);
  const userId = el<HTMLInputElement>("user-id").value.trim();
  app?.stream?.stop();
  app = {
    api, userId, cid,
    vm: new CollaborationViewModel(),
    summary: new SummaryModel(),
    policies,
    stream: null,
  };
  app.vm.reset(snapshot, await api.getEvents(cid));
  app.summary.reset(await api.getSummary(cid));
  app.stream = new EventStream(baseUrl, token, cid, {
    onEvent: (event) => {
      if (!app) return;
      app.vm.applyEvent(event);
      app.summary.applyEvent(event);
      if (app.vm.dirty) void refresh();
      else render();
    },
    onError: () => showError("event stream interrupted; reconnecting"),
    fromSeq: app.vm.lastSeq + 1,
  });
  app.stream.start();
  render();
}

async function dispatch(action: string, target: HTMLElement): Promise<void> {
  if (!app) return;
  const { api, cid } = app;
  const pid = target.dataset.proposal ?? "";
  const section = target.closest("section, tr");
  const value = (name: string): string =>
    (section?.querySelector(`[name="${name}"]`) as HTMLInputElement | null)?.value ?? "";
  try {
    switch (action) {
      case "defineSituation":
        await api.defineSituation(cid, value("intent"));
        break;
      case "choosePolicy": {
        const picked = document.querySelector(".policy-card.selected");
        await api.choosePolicy(cid, picked?.getAttribute("data-policy") ?? "");
        break;
      }
      case "notifyActors":
        await api.notifyActors(cid);
        break;
      case "openRound":
        await api.openRound(cid);
        break;
      case "closeRound":
        await api.closeRound(cid);
        break;
      case "approve":
        await api.submitDecision(pid, { kind: "approval" });
        markRecorded(pid);
        break;
      case "reject":
      case "refine":
        toggleForm(action, pid);
        return;
      case "submit-reject":
        await api.submitDecision(pid, { kind: "reject", comment: value("comment") });
        markRecorded(pid);
        break;
      case "submit-refine": {
        const alternative = await api.addAlternative(pid, {
          title: value("alt-title"),
          body: value("alt-body"),
          conflictual: (section?.querySelector('[name="conflictual"]') as
            HTMLInputElement | null)?.checked ?? false,
        }) as { proposalId: string };
        await api.submitDecision(pid, {
          kind: "refinement", alternativeId: alternative.proposalId,
        });
        markRecorded(pid);
        break;
      }
      case "adjustThreshold":
        await api.moderatorChoice(cid, "adjustThreshold", value("newThreshold"));
        break;
      case "reevaluate":
        await api.moderatorChoice(cid, "reevaluate");
        break;
      case "adjustProposals":
        await api.adjustProposals(cid, []);
        break;
      default:
        return;
    }
    await refresh();
  } catch (error) {
    if (error instanceof ApiError) showError(`${error.code}: ${error.message}`);
    else showError(String(error));
  }
}

function toggleForm(kind: string, pid: string): void {
  const form = document.querySelector(`tr.${kind}-form[data-for="${pid}"]`);
  form?.classList.toggle("hidden");
}

function markRecorded(pid: string): void {
  const node = document.querySelector(`[data-recorded="${pid}"]`);
  if (node) node.textContent = "recorded";
}

export function boot(): void {
  el("connect").addEventListener("click", () => {
    void connect().catch((error) => showError(String(error)));
  });
  document.body.addEventListener("click", (e) => {
    const target = e.target as HTMLElement;
    if (target.dataset.policy !== undefined) {
      document.querySelectorAll(".policy-card").forEach(
        (card) => card.classList.remove("selected"));
      target.closest(".policy-card")?.classList.add("selected");
      return;
    }
    const action = target.dataset.action;
    if (action) void dispatch(action, target);
  });
}

if (typeof document !== "undefined") boot();
