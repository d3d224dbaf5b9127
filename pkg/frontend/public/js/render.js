/** HTML renderers: pure string templates over console state. */
function esc(text) {
    return String(text)
        .replaceAll("&", "&amp;")
        .replaceAll("<", "&lt;")
        .replaceAll(">", "&gt;")
        .replaceAll('"', "&quot;");
}
function when(epoch) {
    return new Date(epoch * 1000).toISOString().replace("T", " ").replace(".000Z", "Z");
}
export function renderPendingList(state) {
    if (state.pending.length === 0) {
        return `<p class="empty">No pending requests.</p>`;
    }
    return state.pending
        .map((entry) => `
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
</article>`)
        .join("\n");
}
export function renderAuditTable(state) {
    if (state.auditEvents.length === 0) {
        return `<p class="empty">No events match the filter.</p>`;
    }
    const flagged = new Set(state.flaggedSeqs);
    const rows = state.auditEvents
        .map((event) => {
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
export function renderBanner(state) {
    const parts = [];
    if (state.connectionLost) {
        parts.push(`<div class="banner lost">Connection lost, retrying&hellip;</div>`);
    }
    if (state.notice) {
        parts.push(`<div class="banner notice">${esc(state.notice)}</div>`);
    }
    return parts.join("\n");
}
