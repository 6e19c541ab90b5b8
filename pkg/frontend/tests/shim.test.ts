import { afterEach, beforeEach, describe, expect, it, vi } from "vitest";

import { AgentShim } from "../src/shim/shim.js";
import { patternMatches } from "../src/shim/pages.js";
import { ShimConfig } from "../src/shim/types.js";
import { FakeBackend, FakeDocument, FakeElement } from "./fakes.js";

function searchDom(): FakeDocument {
  const doc = new FakeDocument();
  doc.elements = [
    new FakeElement("INPUT", { "aria-label": "SMILES search box", id: "smiles-input" }),
    new FakeElement("BUTTON", { "aria-label": "Analyze", id: "analyze" }),
    new FakeElement("A", { "aria-label": "Reports", href: "/reports" }),
    new FakeElement("SVG", { "aria-label": "decorative logo" }),
    new FakeElement("DIV", {}), // unlabeled: never serialized
  ];
  return doc;
}

interface Harness {
  shim: AgentShim;
  backend: FakeBackend;
  doc: FakeDocument;
  url: { value: string };
  chats: string[];
  statuses: string[];
  errors: string[];
}

function makeShim(partial: Partial<ShimConfig> = {}): Harness {
  const backend = new FakeBackend();
  const doc = searchDom();
  const url = { value: "/search" };
  const chats: string[] = [];
  const statuses: string[] = [];
  const errors: string[] = [];
  const shim = new AgentShim({
    endpoint: "ws://backend.test/agent",
    appId: "chem-analysis-demo",
    document: doc,
    urlProvider: () => url.value,
    navigate: (to) => {
      url.value = to;
    },
    webSocketFactory: backend.factory,
    functions: [
      {
        name: "type",
        description: "Type a value into a text field identified by its element id.",
        params: [
          { name: "textField", kind: "string" },
          { name: "value", kind: "string" },
        ],
        pages: ["/search"],
        handler: (args) => {
          doc.elements[0].setAttribute("value", String(args.value));
        },
      },
      {
        name: "click",
        description: "Click a button identified by its element id.",
        params: [{ name: "target", kind: "string" }],
        pages: ["/search"],
        handler: () => undefined,
      },
      {
        name: "explode",
        description: "Always throws.",
        pages: ["*"],
        handler: () => {
          throw new Error("kaboom");
        },
      },
    ],
    onChatResponse: (text) => chats.push(text),
    onStatus: (s) => statuses.push(`${s.agent}:${s.step}:${s.action ?? ""}`),
    onError: (code) => errors.push(code),
    ...partial,
  });
  shim.connect();
  return { shim, backend, doc, url, chats, statuses, errors };
}

describe("connect and register", () => {
  it("sends register then the initial observation, in that order", () => {
    const h = makeShim();
    h.backend.connectAndHello();
    const frames = h.backend.socket.frames();
    expect(frames.map((f) => f.kind)).toEqual(["register", "observation"]);
    const register = frames[0];
    expect(register.session_id).toBe("fake-session-1");
    expect(register.payload.app_id).toBe("chem-analysis-demo");
    const skillset = register.payload.skillset as Array<{ name: string }>;
    expect(skillset.map((s) => s.name)).toEqual(["type", "click", "explode"]);
    expect(register.payload.page_map).toEqual({
      "/search": ["type", "click"],
      "*": ["explode"],
    });
    const observation = frames[1];
    expect(observation.payload.url).toBe("/search");
    const labels = (observation.payload.elements as Array<{ aria_label: string }>).map(
      (e) => e.aria_label,
    );
    // all labeled elements go out; the backend does the tag filtering
    expect(labels).toEqual(["SMILES search box", "Analyze", "Reports", "decorative logo"]);
  });

  it("serializes link hrefs and element ids", () => {
    const h = makeShim();
    h.backend.connectAndHello();
    const observation = h.backend.socket.frames()[1];
    const elements = observation.payload.elements as Array<Record<string, unknown>>;
    expect(elements[0]).toEqual({
      tag: "input",
      aria_label: "SMILES search box",
      element_id: "smiles-input",
    });
    expect(elements[2]).toEqual({ tag: "a", aria_label: "Reports", href: "/reports" });
  });

  it("skips elements marked data-agent-ignore", () => {
    const h = makeShim();
    h.doc.elements.push(
      new FakeElement("INPUT", { "aria-label": "Chat input", "data-agent-ignore": "" }),
    );
    h.backend.connectAndHello();
    const observation = h.backend.socket.frames()[1];
    const labels = (observation.payload.elements as Array<{ aria_label: string }>).map(
      (e) => e.aria_label,
    );
    expect(labels).not.toContain("Chat input");
  });

  it("an empty skillset register is still valid", () => {
    const h = makeShim({ functions: [] });
    h.backend.connectAndHello();
    const register = h.backend.socket.frames()[0];
    expect(register.payload.skillset).toEqual([]);
    expect(register.payload.page_map).toEqual({});
  });

  it("reports the assigned session", () => {
    let seen = "";
    const h = makeShim({ onSession: (sid) => (seen = sid) });
    h.backend.connectAndHello();
    expect(seen).toBe("fake-session-1");
    expect(h.shim.session).toBe("fake-session-1");
  });

  it("every emitted frame is schema-valid with strictly increasing seq", async () => {
    const h = makeShim();
    h.backend.connectAndHello();
    h.backend.requestAction("type", { textField: "smiles-input", value: "CCO" }, "c1");
    h.shim.sendChat("hello");
    await flush();
    const frames = h.backend.socket.frames(); // frames() decodes = validates
    const seqs = frames.map((f) => f.seq);
    expect(seqs).toEqual([...seqs].sort((a, b) => a - b));
    expect(new Set(seqs).size).toBe(seqs.length);
  });
});

describe("observation pushes", () => {
  beforeEach(() => {
    vi.useFakeTimers();
  });
  afterEach(() => {
    vi.useRealTimers();
  });

  it("no DOM change means no frame", () => {
    const h = makeShim();
    h.backend.connectAndHello();
    const before = h.backend.socket.sent.length;
    h.shim.observationChanged();
    vi.advanceTimersByTime(200);
    h.shim.observationChanged();
    vi.advanceTimersByTime(200);
    expect(h.backend.socket.sent.length).toBe(before);
  });

  it("a label change pushes one frame within the debounce window", () => {
    const h = makeShim();
    h.backend.connectAndHello();
    const before = h.backend.socket.sent.length;
    h.doc.elements[1].setAttribute("aria-label", "Analyze compound");
    h.shim.observationChanged();
    h.shim.observationChanged(); // coalesced
    vi.advanceTimersByTime(99);
    expect(h.backend.socket.sent.length).toBe(before);
    vi.advanceTimersByTime(2);
    expect(h.backend.socket.sent.length).toBe(before + 1);
    const frame = h.backend.socket.frames().at(-1)!;
    expect(frame.kind).toBe("observation");
  });

  it("a URL change pushes", () => {
    const h = makeShim();
    h.backend.connectAndHello();
    const before = h.backend.socket.sent.length;
    h.url.value = "/reports";
    h.shim.observationChanged();
    vi.advanceTimersByTime(150);
    expect(h.backend.socket.sent.length).toBe(before + 1);
    expect(h.backend.socket.frames().at(-1)!.payload.url).toBe("/reports");
  });
});

const flush = () => new Promise<void>((resolve) => setTimeout(resolve, 0));

describe("action execution", () => {
  it("runs the handler and replies ok with the same correlation id", async () => {
    const h = makeShim();
    h.backend.connectAndHello();
    h.backend.requestAction("type", { textField: "smiles-input", value: "CCO" }, "corr-9");
    await flush();
    const result = h.backend.socket.frames().at(-1)!;
    expect(result.kind).toBe("action_result");
    expect(result.payload).toEqual({ correlation_id: "corr-9", status: "ok" });
    expect(result.correlation_id).toBe("corr-9");
    expect(h.doc.elements[0].getAttribute("value")).toBe("CCO");
  });

  it("unknown functions fail with a detail naming them", async () => {
    const h = makeShim();
    h.backend.connectAndHello();
    h.backend.requestAction("zoom", {}, "c2");
    await flush();
    const result = h.backend.socket.frames().at(-1)!;
    expect(result.payload.status).toBe("failed");
    expect(result.payload.detail).toContain("zoom");
  });

  it("refuses functions whose pages do not match the current URL", async () => {
    const h = makeShim();
    h.backend.connectAndHello();
    h.url.value = "/reports";
    h.backend.requestAction("click", { target: "analyze" }, "c3");
    await flush();
    const result = h.backend.socket.frames().at(-1)!;
    expect(result.payload.status).toBe("failed");
    expect(result.payload.detail).toContain("/reports");
  });

  it("a throwing handler fails the action but not the page", async () => {
    const h = makeShim();
    h.backend.connectAndHello();
    h.backend.requestAction("explode", {}, "c4");
    await flush();
    const failed = h.backend.socket.frames().at(-1)!;
    expect(failed.payload.status).toBe("failed");
    expect(failed.payload.detail).toContain("kaboom");
    // the shim is still alive and executes the next action
    h.backend.requestAction("click", { target: "analyze" }, "c5");
    await flush();
    const ok = h.backend.socket.frames().at(-1)!;
    expect(ok.payload).toEqual({ correlation_id: "c5", status: "ok" });
  });

  it("navigate uses the configured handler and pushes the new page", async () => {
    const h = makeShim();
    h.backend.connectAndHello();
    h.backend.requestAction("navigate", { url: "/reports" }, "c6");
    await flush();
    const frames = h.backend.socket.frames();
    // observation of the post-navigation state precedes the result
    expect(frames.at(-2)!.kind).toBe("observation");
    expect(frames.at(-2)!.payload.url).toBe("/reports");
    expect(frames.at(-1)!.payload).toEqual({ correlation_id: "c6", status: "ok" });
    expect(h.url.value).toBe("/reports");
  });

  it("executes at most one action at a time, in order", async () => {
    const order: string[] = [];
    let release: () => void = () => undefined;
    const gate = new Promise<void>((resolve) => (release = resolve));
    const h = makeShim({
      functions: [
        {
          name: "slow",
          description: "waits",
          pages: ["*"],
          handler: async () => {
            order.push("slow:start");
            await gate;
            order.push("slow:end");
          },
        },
        {
          name: "fast",
          description: "instant",
          pages: ["*"],
          handler: () => {
            order.push("fast");
          },
        },
      ],
    });
    h.backend.connectAndHello();
    h.backend.requestAction("slow", {}, "c7");
    h.backend.requestAction("fast", {}, "c8");
    expect(order).toEqual(["slow:start"]);
    release();
    await vi.waitFor(() => {
      expect(order).toEqual(["slow:start", "slow:end", "fast"]);
    });
    const results = h.backend.socket.frames().filter((f) => f.kind === "action_result");
    expect(results.map((f) => f.payload.correlation_id)).toEqual(["c7", "c8"]);
  });
});

describe("chat and callbacks", () => {
  it("empty chat input sends nothing", () => {
    const h = makeShim();
    h.backend.connectAndHello();
    const before = h.backend.socket.sent.length;
    expect(h.shim.sendChat("")).toBe(false);
    expect(h.shim.sendChat("   ")).toBe(false);
    expect(h.backend.socket.sent.length).toBe(before);
    expect(h.shim.sendChat("hello")).toBe(true);
    expect(h.backend.socket.frames().at(-1)!.payload.text).toBe("hello");
  });

  it("delivers chat responses, statuses, and backend errors", () => {
    const h = makeShim();
    h.backend.connectAndHello();
    h.backend.push("agent_status", { agent: "web", step: 0, action: "type" });
    h.backend.push("chat_response", { text: "All done." });
    h.backend.push("error", { code: "queue_full", detail: "try later" });
    expect(h.statuses).toEqual(["web:0:type"]);
    expect(h.chats).toEqual(["All done."]);
    expect(h.errors).toEqual(["queue_full"]);
  });

  it("rejects inbound frames with regressing seq", () => {
    const h = makeShim();
    h.backend.connectAndHello();
    h.backend.push("agent_status", { agent: "web", step: 0 });
    h.backend.seq = 0; // force the next frame to reuse seq 1
    h.backend.push("agent_status", { agent: "web", step: 1 });
    expect(h.errors).toContain("sequence_regression");
  });
});

describe("reconnect", () => {
  beforeEach(() => {
    vi.useFakeTimers();
  });
  afterEach(() => {
    vi.useRealTimers();
  });

  it("retries with backoff after a close and resumes the session", () => {
    const h = makeShim();
    h.backend.connectAndHello();
    expect(h.backend.sockets.length).toBe(1);
    h.backend.socket.close();
    vi.advanceTimersByTime(501);
    expect(h.backend.sockets.length).toBe(2);
    h.backend.socket.close();
    vi.advanceTimersByTime(1001); // doubled delay
    expect(h.backend.sockets.length).toBe(3);
  });

  it("passes the resume session id as a query parameter", () => {
    const h = makeShim({ resumeSessionId: "old-session" });
    expect(h.backend.socket.url).toBe("ws://backend.test/agent?session=old-session");
  });

  it("does not reconnect after an intentional disconnect", () => {
    const h = makeShim();
    h.backend.connectAndHello();
    h.shim.disconnect();
    vi.advanceTimersByTime(30_000);
    expect(h.backend.sockets.length).toBe(1);
  });
});

describe("page patterns", () => {
  it("mirrors the backend matching rule", () => {
    expect(patternMatches("*", "/anything")).toBe(true);
    expect(patternMatches("/search", "/search?q=x#y")).toBe(true);
    expect(patternMatches("/search", "/search/")).toBe(true);
    expect(patternMatches("/search", "/search/results")).toBe(false);
    expect(patternMatches("/reports/*", "/reports")).toBe(true);
    expect(patternMatches("/reports/*", "/reports/2024/q1")).toBe(true);
    expect(patternMatches("/reports/*", "/reportsarchive")).toBe(false);
  });
});
