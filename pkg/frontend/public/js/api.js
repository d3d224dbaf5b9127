/**
 * Typed client for the broker's console-facing endpoints.
 *
 * The console owns no authorization logic: it only reads
 * GET /v1/approvals and GET /v1/audit and submits verdicts to
 * POST /v1/approvals/{request_id}. Everything else is out of bounds.
 */
export function buildAuditQuery(filter) {
    const params = new URLSearchParams();
    if (filter.kind)
        params.set("kind", filter.kind);
    if (filter.request_id)
        params.set("request_id", filter.request_id);
    if (filter.subject)
        params.set("subject", filter.subject);
    if (filter.seq_min !== undefined)
        params.set("seq_min", String(filter.seq_min));
    if (filter.seq_max !== undefined)
        params.set("seq_max", String(filter.seq_max));
    const text = params.toString();
    return text ? `?${text}` : "";
}
export class BrokerApi {
    baseUrl;
    adminToken;
    fetchFn;
    constructor(baseUrl, adminToken, fetchFn = (url, init) => fetch(url, init)) {
        this.baseUrl = baseUrl;
        this.adminToken = adminToken;
        this.fetchFn = fetchFn;
    }
    async fetchPending() {
        const response = await this.fetchFn(`${this.baseUrl}/v1/approvals`);
        if (!response.ok)
            throw new Error(`approvals fetch failed: ${response.status}`);
        const body = (await response.json());
        return body.pending;
    }
    async fetchAudit(filter = {}) {
        const response = await this.fetchFn(`${this.baseUrl}/v1/audit${buildAuditQuery(filter)}`);
        if (!response.ok)
            throw new Error(`audit fetch failed: ${response.status}`);
        return (await response.json());
    }
    async submitVerdict(requestId, verdict, approver) {
        const response = await this.fetchFn(`${this.baseUrl}/v1/approvals/${requestId}`, {
            method: "POST",
            headers: {
                "Content-Type": "application/json",
                Authorization: `Bearer ${this.adminToken}`,
            },
            body: JSON.stringify({ verdict, approver }),
        });
        const body = (await response.json().catch(() => ({})));
        if (response.status === 200 && body["status"] === "issued") {
            return {
                kind: "issued",
                credentialId: String(body["credential_id"]),
                expiresAt: Number(body["expires_at"]),
            };
        }
        if (response.status === 200 && body["status"] === "denied") {
            return { kind: "denied", reason: String(body["reason"]) };
        }
        if (response.status === 409) {
            return { kind: "already-resolved", resolution: String(body["code"] ?? "resolved") };
        }
        if (response.status === 410) {
            return { kind: "expired" };
        }
        return {
            kind: "error",
            status: response.status,
            message: String(body["error"] ?? response.statusText),
        };
    }
}
