/**
 * Console state and polling.
 *
 * The store mirrors the broker: the pending list is exactly what the last
 * GET /v1/approvals returned, verdicts are idempotent in effect (a repeat
 * click after resolution surfaces the broker's already-resolved answer and
 * refreshes, never corrupting the view), and a lost connection shows a
 * banner while polling keeps retrying.
 */

import type { AuditFilter, AuditRecord, BrokerApi, PendingEntry, VerdictOutcome } from "./api.js";
import { recheckChain } from "./chain.js";

export interface ConsoleState {
  approver: string;
  pending: PendingEntry[];
  auditEvents: AuditRecord[];
  auditHead: string | null;
  flaggedSeqs: number[];
  auditFilter: AuditFilter;
  connectionLost: boolean;
  notice: string | null;
  /** request_id -> audit link shown after a verdict */
  lastResolved: { requestId: string; outcome: string } | null;
}

export class ConsoleStore {
  state: ConsoleState = {
    approver: "",
    pending: [],
    auditEvents: [],
    auditHead: null,
    flaggedSeqs: [],
    auditFilter: {},
    connectionLost: false,
    notice: null,
    lastResolved: null,
  };

  private listeners: Array<(state: ConsoleState) => void> = [];
  private timer: ReturnType<typeof setInterval> | null = null;

  constructor(private readonly api: BrokerApi) {}

  onChange(listener: (state: ConsoleState) => void): void {
    this.listeners.push(listener);
  }

  private emit(): void {
    for (const listener of this.listeners) listener(this.state);
  }

  setApprover(name: string): void {
    this.state.approver = name.trim();
    this.emit();
  }

  setAuditFilter(filter: AuditFilter): void {
    this.state.auditFilter = filter;
  }

  async refreshPending(): Promise<void> {
    try {
      this.state.pending = await this.api.fetchPending();
      this.state.connectionLost = false;
    } catch {
      this.state.connectionLost = true;
    }
    this.emit();
  }

  async refreshAudit(): Promise<void> {
    try {
      const page = await this.api.fetchAudit(this.state.auditFilter);
      const check = await recheckChain(page.events);
      this.state.auditEvents = page.events;
      this.state.auditHead = page.head_hash;
      this.state.flaggedSeqs = check.flagged;
      this.state.connectionLost = false;
    } catch {
      this.state.connectionLost = true;
    }
    this.emit();
  }

  /** Poll the pending queue; default interval 2 s. */
  startPolling(intervalMs = 2000): void {
    this.stopPolling();
    this.timer = setInterval(() => void this.refreshPending(), intervalMs);
  }

  stopPolling(): void {
    if (this.timer !== null) {
      clearInterval(this.timer);
      this.timer = null;
    }
  }

  async resolve(requestId: string, verdict: "approve" | "deny"): Promise<VerdictOutcome> {
    if (!this.state.approver) {
      this.state.notice = "Enter an approver identity first.";
      this.emit();
      return { kind: "error", status: 0, message: "no approver set" };
    }
    const outcome = await this.api.submitVerdict(requestId, verdict, this.state.approver);
    switch (outcome.kind) {
      case "issued":
        this.state.notice = `Credential ${outcome.credentialId} issued.`;
        this.state.lastResolved = { requestId, outcome: "approved" };
        break;
      case "denied":
        this.state.notice = `Request denied (${outcome.reason}).`;
        this.state.lastResolved = { requestId, outcome: "denied" };
        break;
      case "already-resolved":
        this.state.notice = `Already resolved: ${outcome.resolution}.`;
        break;
      case "expired":
        this.state.notice = "Approval window elapsed.";
        break;
      case "error":
        this.state.notice = `Verdict failed: ${outcome.message}.`;
        break;
    }
    await this.refreshPending();
    return outcome;
  }
}
