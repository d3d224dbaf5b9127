/** HTML renderers: pure string templates over console state. */

import type { AuditRecord, PendingEntry } from "./api.js";
import type { ConsoleState } from "./store.js";

function esc(text: unknown): string {
  return String(text)
    .replaceAll("&", "&amp;")
    .replaceAll("<", "&lt;")
    .replaceAll(">", "&gt;")
    .replaceAll('"', "&quot;");
}

function when(epoch: number): string {
  return new Date(epoch * 1000).toISOString().replace("T", " ").replace(".000Z", "Z");
}

export function renderPendingList(state: ConsoleState): string {
  if (state.pending.length === 0) {
    return `<p class="empty">No pending requests.</p>`;
  }
  return state.pending
    .map(
      (entry: PendingEntry) => `
<article class="card" data-request-id="${esc(entry.request_id)}">
  <header><code>${esc(entry.subject)}</code></header>
  <dl>
    <dt>resource</dt><dd><code>${esc(entry.resource)}</code></dd>
    <dt>action</dt><dd><code>${esc(entry.action)}</code></dd>
    <dt>justification</dt><dd>${entry.justification ? esc(entry.justification) : "<em>none given</em>"}</dd>
    <dt>deadline</dt><dd>${when(entry.deadline)}</dd>
  </dl>
  <footer>
    <button class="approve" data-request-id="${esc(entry.request_id)}">Approve</button>
    <button class="deny" data-request-id="${esc(entry.request_id)}">Deny</button>
  </footer>
</article>`,
    )
    .join("\n");
}

export function renderAuditTable(state: ConsoleState): string {
  if (state.auditEvents.length === 0) {
    return `<p class="empty">No events match the filter.</p>`;
  }
  const flagged = new Set(state.flaggedSeqs);
  const rows = state.auditEvents
    .map((event: AuditRecord) => {
      const bad = flagged.has(event.seq);
      return `
<tr class="${bad ? "tampered" : "linked"}">
  <td>${event.seq}</td>
  <td>${when(event.timestamp)}</td>
  <td>${esc(event.kind)}</td>
  <td>${event.request_id ? `<code>${esc(event.request_id)}</code>` : ""}</td>
  <td><code>${esc(JSON.stringify(event.payload))}</code></td>
  <td class="chain">${bad ? "&#10007; recheck failed" : "&#10003;"}</td>
</tr>`;
    })
    .join("\n");
  const head = state.auditHead ? `<p>head hash <code>${esc(state.auditHead)}</code></p>` : "";
  return `
<table>
  <thead><tr><th>seq</th><th>time</th><th>kind</th><th>request</th><th>payload</th><th>chain</th></tr></thead>
  <tbody>${rows}</tbody>
</table>
${head}`;
}

export function renderBanner(state: ConsoleState): string {
  const parts: string[] = [];
  if (state.connectionLost) {
    parts.push(`<div class="banner lost">Connection lost, retrying&hellip;</div>`);
  }
  if (state.notice) {
    parts.push(`<div class="banner notice">${esc(state.notice)}</div>`);
  }
  return parts.join("\n");
}
