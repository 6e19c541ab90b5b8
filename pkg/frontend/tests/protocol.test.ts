// Conformance against the golden wire frames shared with the backend.

import { readFileSync, readdirSync } from "node:fs";
import { dirname, join } from "node:path";
import { fileURLToPath } from "node:url";
import { describe, expect, it } from "vitest";

import {
  ProtocolError,
  canonicalJson,
  decodeMessage,
  encodeMessage,
  validateMessage,
} from "../src/shim/protocol.js";

const FRAMES_DIR = join(dirname(fileURLToPath(import.meta.url)), "..", "..", "testdata", "frames");

describe("golden frames", () => {
  const names = readdirSync(FRAMES_DIR).filter(
    (n: string) => n.endsWith(".json") && n !== "manifest.json",
  );

  it("has the full frame set", () => {
    expect(names.length).toBeGreaterThanOrEqual(9);
  });

  for (const name of names) {
    it(`round-trips ${name} byte-exact`, () => {
      const raw = readFileSync(join(FRAMES_DIR, name), "utf-8");
      const msg = decodeMessage(raw);
      validateMessage(msg);
      expect(encodeMessage(msg)).toBe(raw);
    });
  }

  it("rejects every invalid golden with the expected code", () => {
    const manifest = JSON.parse(
      readFileSync(join(FRAMES_DIR, "manifest.json"), "utf-8"),
    ) as Record<string, string>;
    expect(Object.keys(manifest).length).toBeGreaterThanOrEqual(5);
    for (const [name, code] of Object.entries(manifest)) {
      const raw = readFileSync(join(FRAMES_DIR, "invalid", name), "utf-8");
      let caught: unknown;
      try {
        decodeMessage(raw);
      } catch (err) {
        caught = err;
      }
      expect(caught, name).toBeInstanceOf(ProtocolError);
      expect((caught as ProtocolError).code, name).toBe(code);
    }
  });
});

describe("canonical encoding", () => {
  it("sorts keys recursively and uses compact separators", () => {
    expect(canonicalJson({ b: 1, a: { d: [2, 3], c: "x" } })).toBe(
      '{"a":{"c":"x","d":[2,3]},"b":1}',
    );
  });

  it("keeps non-ascii text raw", () => {
    expect(canonicalJson({ t: "Flugsäure-Prüfung" })).toBe('{"t":"Flugsäure-Prüfung"}');
  });

  it("drops undefined object entries", () => {
    expect(canonicalJson({ a: 1, b: undefined })).toBe('{"a":1}');
  });

  it("refuses non-finite numbers", () => {
    expect(() => canonicalJson({ x: Infinity })).toThrow(ProtocolError);
  });
});

describe("validation", () => {
  const base = { session_id: "s", seq: 1 } as const;

  it("rejects failed results without detail", () => {
    expect(() =>
      encodeMessage({
        ...base,
        kind: "action_result",
        payload: { correlation_id: "c", status: "failed" },
      }),
    ).toThrow(/detail/);
  });

  it("allows empty detail on error frames", () => {
    const msg = {
      ...base,
      kind: "error" as const,
      payload: { code: "bad_payload", detail: "" },
    };
    expect(decodeMessage(encodeMessage(msg))).toEqual(msg);
  });

  it("enforces seq monotonicity when tracking", () => {
    const frame = encodeMessage({ ...base, seq: 3, kind: "chat_request", payload: { text: "x" } });
    expect(() => decodeMessage(frame, 3)).toThrow(/does not increase/);
    expect(decodeMessage(frame, 2).seq).toBe(3);
  });

  it("rejects unknown kinds and malformed frames", () => {
    expect(() => decodeMessage('{"session_id":"s","seq":1,"kind":"telemetry","payload":{}}'))
      .toThrow(/unknown kind/);
    expect(() => decodeMessage("{oops")).toThrow(ProtocolError);
    expect(() => decodeMessage("[1,2]")).toThrow(/JSON object/);
  });

  it("rejects href on non-link observation elements", () => {
    expect(() =>
      encodeMessage({
        ...base,
        kind: "observation",
        payload: { url: "/x", elements: [{ tag: "button", aria_label: "B", href: "/y" }] },
      }),
    ).toThrow(/link tags/);
  });
});
