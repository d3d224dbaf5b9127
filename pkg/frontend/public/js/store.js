/**
 * Console state and polling.
 *
 * The store mirrors the broker: the pending list is exactly what the last
 * GET /v1/approvals returned, verdicts are idempotent in effect (a repeat
 * click after resolution surfaces the broker's already-resolved answer and
 * refreshes, never corrupting the view), and a lost connection shows a
 * banner while polling keeps retrying.
 */
import { recheckChain } from "./chain.js";
export class ConsoleStore {
    api;
    state = {
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
    listeners = [];
    timer = null;
    constructor(api) {
        this.api = api;
    }
    onChange(listener) {
        this.listeners.push(listener);
    }
    emit() {
        for (const listener of this.listeners)
            listener(this.state);
    }
    setApprover(name) {
        this.state.approver = name.trim();
        this.emit();
    }
    setAuditFilter(filter) {
        this.state.auditFilter = filter;
    }
    async refreshPending() {
        try {
            this.state.pending = await this.api.fetchPending();
            this.state.connectionLost = false;
        }
        catch {
            this.state.connectionLost = true;
        }
        this.emit();
    }
    async refreshAudit() {
        try {
            const page = await this.api.fetchAudit(this.state.auditFilter);
            const check = await recheckChain(page.events);
            this.state.auditEvents = page.events;
            this.state.auditHead = page.head_hash;
            this.state.flaggedSeqs = check.flagged;
            this.state.connectionLost = false;
        }
        catch {
            this.state.connectionLost = true;
        }
        this.emit();
    }
    /** Poll the pending queue; default interval 2 s. */
    startPolling(intervalMs = 2000) {
        this.stopPolling();
        this.timer = setInterval(() => void this.refreshPending(), intervalMs);
    }
    stopPolling() {
        if (this.timer !== null) {
            clearInterval(this.timer);
            this.timer = null;
        }
    }
    async resolve(requestId, verdict) {
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
