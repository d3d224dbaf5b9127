/**
 * Client-side recheck of the audit hash chain.
 *
 * The server's rule: this_hash = SHA-256(prev_hash_bytes || canonical JSON
 * of {kind, payload, request_id, seq, timestamp}), canonical JSON being
 * key-sorted compact UTF-8. The recheck recomputes that over a fetched page
 * and flags every row whose digest or linkage does not reproduce, so a
 * tampered event is visible even if the server claims the page is fine.
 */
const ZERO_HASH = "0".repeat(64);
/** Key-sorted compact JSON, matching the broker's canonical encoding. */
export function canonicalJson(value) {
    if (value === null || typeof value !== "object") {
        return JSON.stringify(value);
    }
    if (Array.isArray(value)) {
        return `[${value.map(canonicalJson).join(",")}]`;
    }
    const entries = Object.entries(value)
        .sort(([a], [b]) => (a < b ? -1 : a > b ? 1 : 0))
        .map(([key, inner]) => `${JSON.stringify(key)}:${canonicalJson(inner)}`);
    return `{${entries.join(",")}}`;
}
function hexToBytes(hex) {
    const out = new Uint8Array(hex.length / 2);
    for (let i = 0; i < out.length; i++) {
        out[i] = parseInt(hex.slice(2 * i, 2 * i + 2), 16);
    }
    return out;
}
function bytesToHex(bytes) {
    return [...new Uint8Array(bytes)].map((b) => b.toString(16).padStart(2, "0")).join("");
}
export async function recordDigest(record) {
    const body = canonicalJson({
        kind: record.kind,
        payload: record.payload,
        request_id: record.request_id,
        seq: record.seq,
        timestamp: record.timestamp,
    });
    const bodyBytes = new TextEncoder().encode(body);
    const prev = hexToBytes(record.prev_hash);
    const input = new Uint8Array(prev.length + bodyBytes.length);
    input.set(prev);
    input.set(bodyBytes, prev.length);
    return bytesToHex(await crypto.subtle.digest("SHA-256", input));
}
/**
 * Recheck a page of events in seq order. Every row's digest must reproduce
 * from its own fields; rows at consecutive seqs must link (pages filtered
 * by request id legitimately skip seqs, so links are only enforced across
 * adjacent seqs); a row at seq 0 must anchor on the zero digest.
 */
export async function recheckChain(events) {
    const flagged = [];
    let prevSeq = null;
    let prevHash = null;
    for (const record of events) {
        let bad = false;
        if (record.seq === 0 && record.prev_hash !== ZERO_HASH) {
            bad = true;
        }
        if (prevSeq !== null && (record.seq <= prevSeq || (record.seq === prevSeq + 1 && record.prev_hash !== prevHash))) {
            bad = true;
        }
        let recomputed = "";
        try {
            recomputed = await recordDigest(record);
        }
        catch {
            bad = true;
        }
        if (recomputed !== record.this_hash) {
            bad = true;
        }
        if (bad) {
            flagged.push(record.seq);
        }
        prevSeq = record.seq;
        prevHash = record.this_hash;
    }
    return { ok: flagged.length === 0, flagged };
}
