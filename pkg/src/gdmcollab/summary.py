"""Evaluation summary: one row per proposal with each decision maker's
position and the collective decision, exported as JSON, CSV or Markdown.

The JSON form is canonical and byte-stable: replaying the same log always
produces identical bytes.
"""

from __future__ import annotations

import csv
import io

from .aggregation import effective_decisions
from .canonical import canon_dumps, frac_str
from .domain import Collaboration, CompositeProposal


def _last_decisions(collab: Collaboration, proposal_id: str) -> dict:
    """Latest binding decision per decision maker in the proposal's most
    recent voted round (earlier-round votes do not carry forward)."""
    for round_no in range(collab.current_round, 0, -1):
        per_round = effective_decisions(collab.decisions, round_no).get(proposal_id)
        if per_round:
            return {dm: d for dm, d in per_round.items()}
    return {}


def build_summary(collab: Collaboration) -> dict:
    rows = []
    for pid, proposal in collab.proposals.items():
        decisions = {}
        if not isinstance(proposal, CompositeProposal):
            for dm, d in sorted(_last_decisions(collab, pid).items()):
                decisions[dm] = {
                    "kind": d.kind.value,
                    "rating": d.rating,
                    "round": d.round,
                }
        tally = collab.tallies.get(pid)
        rows.append({
            "proposalId": pid,
            "kind": proposal.kind,
            "title": proposal.title,
            "body": getattr(proposal, "body", None),
            "authorId": proposal.author_id,
            "decisions": decisions,
            "score": frac_str(tally.score) if tally else None,
            "collectiveDecision": proposal.collective_decision.value,
            "conflictsWith": sorted(proposal.conflicts_with),
            "withdrawn": proposal.withdrawn,
        })
    rows.sort(key=lambda r: (collab.proposals[r["proposalId"]].created_at, r["proposalId"]))
    return {
        "collaborationId": collab.collaboration_id,
        "intent": collab.intent,
        "policy": collab.policy.name if collab.policy else None,
        "state": collab.state.value,
        "round": collab.current_round,
        "proposals": rows,
        "workProduct": collab.work_product.to_json() if collab.work_product else None,
    }


def summary_json(collab: Collaboration) -> str:
    return canon_dumps(build_summary(collab))


def _dm_columns(summary: dict) -> list:
    dms = set()
    for row in summary["proposals"]:
        dms.update(row["decisions"])
    return sorted(dms)


def _cell(row: dict, dm: str) -> str:
    d = row["decisions"].get(dm)
    if d is None:
        return ""
    if d.get("rating") is not None:
        return f"{d['kind']} ({d['rating']})"
    return d["kind"]


def summary_csv(summary: dict) -> str:
    dms = _dm_columns(summary)
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["proposal", "body", "author", *dms, "collectiveDecision"])
    for row in summary["proposals"]:
        writer.writerow([
            row["title"] or row["proposalId"],
            row["body"] or "",
            row["authorId"],
            *[_cell(row, dm) for dm in dms],
            row["collectiveDecision"],
        ])
    return out.getvalue()


def summary_markdown(summary: dict) -> str:
    dms = _dm_columns(summary)
    header = ["proposal", "body", "author", *dms, "collectiveDecision"]
    lines = [
        "| " + " | ".join(header) + " |",
        "| " + " | ".join("---" for _ in header) + " |",
    ]
    for row in summary["proposals"]:
        cells = [
            row["title"] or row["proposalId"],
            row["body"] or "",
            row["authorId"],
            *[_cell(row, dm) for dm in dms],
            row["collectiveDecision"],
        ]
        lines.append("| " + " | ".join(str(c) for c in cells) + " |")
    return "\n".join(lines) + "\n"
