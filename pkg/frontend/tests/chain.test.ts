import { readFileSync } from "node:fs";
import { describe, expect, it } from "vitest";

import type { AuditPage, AuditRecord } from "../src/api.js";
import { canonicalJson, recheckChain, recordDigest } from "../src/chain.js";

const page = JSON.parse(
  readFileSync(new URL("./fixtures/audit-page.json", import.meta.url), "utf-8"),
) as AuditPage;

describe("canonicalJson", () => {
  it("sorts keys and uses compact separators", () => {
    expect(canonicalJson({ b: 1, a: { d: null, c: [1, "x"] } })).toBe(
      '{"a":{"c":[1,"x"],"d":null},"b":1}',
    );
  });

  it("matches the broker's encoding for a real event body", async () => {
    // The fixture hashes were produced by the broker; reproducing them
    // proves the client encodes exactly the same bytes.
    for (const event of page.events) {
      expect(await recordDigest(event)).toBe(event.this_hash);
    }
  });
});

describe("recheckChain", () => {
  it("accepts the untampered fixture page", async () => {
    const check = await recheckChain(page.events);
    expect(check).toEqual({ ok: true, flagged: [] });
  });

  it("accepts a filtered page with seq gaps", async () => {
    const filtered = page.events.filter((e) => e.request_id === "req-abc");
    expect(filtered.map((e) => e.seq)).toEqual([0, 1, 2]);
    const check = await recheckChain(filtered);
    expect(check.ok).toBe(true);
    const sparse = [page.events[0], page.events[3]];
    expect((await recheckChain(sparse)).ok).toBe(true);
  });

  it("flags a tampered payload at the right seq", async () => {
    const tampered: AuditRecord[] = page.events.map((e) => ({ ...e }));
    tampered[1] = {
      ...tampered[1],
      payload: { ...(tampered[1].payload as Record<string, unknown>), approver: "mallory" },
    };
    const check = await recheckChain(tampered);
    expect(check.ok).toBe(false);
    expect(check.flagged).toEqual([1]);
  });

  it("flags a broken link between adjacent seqs", async () => {
    const tampered = page.events.map((e) => ({ ...e }));
    tampered[2] = { ...tampered[2], prev_hash: "ab".repeat(32) };
    const check = await recheckChain(tampered);
    expect(check.flagged).toContain(2);
  });

  it("flags a genesis row that does not anchor on the zero digest", async () => {
    const tampered = page.events.map((e) => ({ ...e }));
    tampered[0] = { ...tampered[0], prev_hash: "11".repeat(32) };
    const check = await recheckChain(tampered);
    expect(check.flagged).toContain(0);
  });

  it("flags a forged this_hash even when self-consistent fields are kept", async () => {
    const tampered = page.events.map((e) => ({ ...e }));
    tampered[3] = { ...tampered[3], this_hash: "cd".repeat(32) };
    const check = await recheckChain(tampered);
    expect(check.flagged).toContain(3);
  });
});
