// Full-stack walkthrough: the shim (running in node against a fake DOM model
// of the demo app) drives the real Python backend over a real WebSocket.
// Gated behind UIPILOT_E2E=1 because it spawns the backend; run with
// `npm run test:e2e` after installing the backend package.

import { ChildProcess, spawn } from "node:child_process";
import { createServer } from "node:net";
import { dirname, join } from "node:path";
import { fileURLToPath } from "node:url";
import { afterAll, beforeAll, describe, expect, it } from "vitest";
import WebSocket from "ws";

import { AgentShim } from "../src/shim/shim.js";
import { WebSocketLike } from "../src/shim/types.js";
import { FakeDocument, FakeElement } from "./fakes.js";

const HERE = dirname(fileURLToPath(import.meta.url));
const REPO = join(HERE, "..", "..");
const FIXTURES = join(REPO, "src", "uipilot", "fixtures");

const SMILES = "FC(F)(F)C(F)(F)C(=O)O";
const GOAL = `Check if this SMILES is a PFAS and generate a short report: ${SMILES}`;
const EXPECTED_SUMMARY =
  `${SMILES} is classified as a PFAS (CF3 group at token 0; CF2 group at token 1). ` +
  "I entered it on the search page, ran the analysis, and the full report is " +
  "available under Reports.";

const enabled = process.env.UIPILOT_E2E === "1";

function freePort(): Promise<number> {
  return new Promise((resolve, reject) => {
    const srv = createServer();
    srv.listen(0, "127.0.0.1", () => {
      const port = (srv.address() as { port: number }).port;
      srv.close(() => resolve(port));
    });
    srv.on("error", reject);
  });
}

async function waitForHealth(base: string, timeoutMs = 15000): Promise<void> {
  const deadline = Date.now() + timeoutMs;
  while (Date.now() < deadline) {
    try {
      const res = await fetch(`${base}/health`);
      if (res.ok) return;
    } catch {
      /* not up yet */
    }
    await new Promise((r) => setTimeout(r, 150));
  }
  throw new Error("backend did not become healthy");
}

// A miniature DOM model of the demo app, mutated by the function handlers.
function demoDom() {
  const doc = new FakeDocument();
  const url = { value: "/search" };
  const searchElements = [
    new FakeElement("INPUT", { "aria-label": "SMILES search box", id: "smiles-input" }),
    new FakeElement("BUTTON", { "aria-label": "Analyze", id: "analyze" }),
    new FakeElement("A", { "aria-label": "Reports", href: "/reports" }),
    new FakeElement("SVG", { "aria-label": "decorative logo" }),
  ];
  const reportsElements = [
    new FakeElement("A", { "aria-label": "Search", href: "/search" }),
    new FakeElement("TABLE", { "aria-label": "Analysis reports table" }),
    new FakeElement("BUTTON", { "aria-label": "Export report", id: "export" }),
  ];
  doc.elements = searchElements;
  const state = { fields: new Map<string, string>(), analyses: [] as string[] };
  const setUrl = (to: string) => {
    url.value = to;
    doc.elements = to === "/reports" ? reportsElements : searchElements;
  };
  return { doc, url, state, setUrl };
}

describe.skipIf(!enabled)("shim against the real backend", () => {
  let backend: ChildProcess;
  let base: string;
  let wsUrl: string;

  beforeAll(async () => {
    const port = await freePort();
    base = `http://127.0.0.1:${port}`;
    wsUrl = `ws://127.0.0.1:${port}/agent`;
    backend = spawn(
      "python3",
      [
        "-m", "uipilot.cli", "serve",
        "--config", join(FIXTURES, "demo_server.yaml"),
        "--port", String(port),
      ],
      { cwd: REPO, stdio: ["ignore", "pipe", "pipe"] },
    );
    await waitForHealth(base);
  }, 30000);

  afterAll(() => {
    backend?.kill();
  });

  it("replays the chemistry walkthrough end to end", async () => {
    const { doc, url, state, setUrl } = demoDom();
    const executed: string[] = [];
    const statuses: string[] = [];
    const chat: string[] = [];
    let resolveChat: (text: string) => void = () => undefined;
    const chatArrived = new Promise<string>((resolve) => (resolveChat = resolve));

    const shim = new AgentShim({
      endpoint: wsUrl,
      appId: "chem-analysis-demo",
      document: doc,
      urlProvider: () => url.value,
      navigate: (to) => {
        executed.push(`navigate:${to}`);
        setUrl(to);
      },
      webSocketFactory: (target) => new WebSocket(target) as unknown as WebSocketLike,
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
            executed.push(`type:${String(args.value)}`);
            state.fields.set(String(args.textField), String(args.value));
          },
        },
        {
          name: "click",
          description: "Click a button identified by its element id.",
          params: [{ name: "target", kind: "string" }],
          pages: ["/search"],
          handler: (args) => {
            executed.push(`click:${String(args.target)}`);
            if (args.target === "analyze") {
              state.analyses.push(state.fields.get("smiles-input") ?? "");
            }
          },
        },
        {
          name: "export",
          description: "Export the latest analysis report as a downloadable file.",
          params: [],
          pages: ["/reports"],
          handler: () => executed.push("export"),
        },
      ],
      onChatResponse: (text) => {
        chat.push(text);
        resolveChat(text);
      },
      onStatus: (s) => statuses.push(`${s.agent}${s.action ? ":" + s.action : ""}`),
      reconnect: false,
    });
    shim.connect();

    // wait for the handshake, then issue the goal
    await new Promise<void>((resolve, reject) => {
      const t = setTimeout(() => reject(new Error("no hello")), 10000);
      const poll = setInterval(() => {
        if (shim.connected) {
          clearTimeout(t);
          clearInterval(poll);
          resolve();
        }
      }, 25);
    });
    expect(shim.sendChat(GOAL)).toBe(true);

    const summary = await Promise.race([
      chatArrived,
      new Promise<string>((_, reject) =>
        setTimeout(() => reject(new Error("no chat response within 20s")), 20000),
      ),
    ]);

    // the walkthrough: type -> click -> navigate, executed on this "page"
    expect(executed).toEqual([
      `type:${SMILES}`,
      "click:analyze",
      "navigate:/reports",
    ]);
    expect(url.value).toBe("/reports");
    expect(state.fields.get("smiles-input")).toBe(SMILES);
    expect(state.analyses).toEqual([SMILES]);
    // exactly one classifier call happened backend-side
    expect(statuses.filter((s) => s === "analysis:pfas_classify")).toHaveLength(1);
    // and the user-visible summary is the scripted verdict
    expect(summary).toBe(EXPECTED_SUMMARY);
    expect(chat).toHaveLength(1);

    // second turn: memory of the first is required for the answer
    const followUp = new Promise<string>((resolve) => (resolveChat = resolve));
    shim.sendChat("What compound did we analyze just now?");
    const answer = await Promise.race([
      followUp,
      new Promise<string>((_, reject) =>
        setTimeout(() => reject(new Error("no follow-up response")), 20000),
      ),
    ]);
    expect(answer).toContain(SMILES);

    shim.disconnect();
  }, 60000);
});
