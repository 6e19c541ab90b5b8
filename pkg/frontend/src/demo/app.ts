// The chemistry demo application: a search page with a SMILES box and an
// Analyze button, and a Reports tab. Instrumented with the agent shim; the
// per-page function registry lives in registerFunctions() below.

import { AgentShim, connectAndRegister } from "../shim/index.js";

interface AnalysisEntry {
  smiles: string;
  status: string;
}

export interface DemoState {
  analyses: AnalysisEntry[];
}

export const state: DemoState = { analyses: [] };

const PAGES = ["/search", "/reports"];

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  attrs: Record<string, string> = {},
  text = "",
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  for (const [k, v] of Object.entries(attrs)) node.setAttribute(k, v);
  if (text) node.textContent = text;
  return node;
}

function navBar(): HTMLElement {
  const nav = el("nav");
  const logo = document.createElementNS("http://www.w3.org/2000/svg", "svg");
  logo.setAttribute("aria-label", "decorative logo");
  logo.setAttribute("viewBox", "0 0 24 24");
  logo.innerHTML = '<circle cx="12" cy="12" r="9"/>';
  nav.appendChild(logo);
  const links: Array<[string, string]> = currentPath() === "/reports"
    ? [["Search", "/search"]]
    : [["Reports", "/reports"]];
  for (const [label, url] of links) {
    const a = el("a", { href: url, "aria-label": label }, label);
    a.addEventListener("click", (ev) => {
      ev.preventDefault();
      go(url);
    });
    nav.appendChild(a);
  }
  return nav;
}

function renderSearch(root: HTMLElement, shim: AgentShim): void {
  root.appendChild(navBar());
  root.appendChild(el("h1", {}, "Compound search"));
  const row = el("div", { class: "row" });
  const input = el("input", {
    type: "text",
    id: "smiles-input",
    "aria-label": "SMILES search box",
    placeholder: "Enter a SMILES string",
  });
  const button = el("button", { id: "analyze", "aria-label": "Analyze" }, "Analyze");
  button.addEventListener("click", () => {
    const smiles = (document.getElementById("smiles-input") as HTMLInputElement).value.trim();
    if (smiles) {
      state.analyses.push({ smiles, status: "queued" });
      shim.observationChanged();
    }
  });
  row.append(input, button);
  root.appendChild(row);
}

function renderReports(root: HTMLElement, shim: AgentShim): void {
  root.appendChild(navBar());
  root.appendChild(el("h1", {}, "Analysis reports"));
  const table = el("table", { "aria-label": "Analysis reports table" });
  const head = el("tr");
  head.append(el("th", {}, "SMILES"), el("th", {}, "Status"));
  table.appendChild(head);
  for (const entry of state.analyses) {
    const tr = el("tr");
    tr.append(el("td", {}, entry.smiles), el("td", {}, entry.status));
    table.appendChild(tr);
  }
  if (state.analyses.length === 0) {
    const tr = el("tr");
    tr.append(el("td", {}, "(no analyses yet)"), el("td", {}, "-"));
    table.appendChild(tr);
  }
  root.appendChild(table);
  const exportBtn = el(
    "button",
    { id: "export", "aria-label": "Export report", style: "margin-top:14px" },
    "Export report",
  );
  exportBtn.addEventListener("click", exportReport);
  root.appendChild(exportBtn);
}

function exportReport(): void {
  const blob = new Blob([JSON.stringify(state.analyses, null, 2)], {
    type: "application/json",
  });
  const a = el("a", { href: URL.createObjectURL(blob), download: "reports.json" });
  a.click();
  URL.revokeObjectURL(a.href);
}

export function currentPath(): string {
  const path = location.pathname;
  return PAGES.includes(path) ? path : "/search";
}

export function render(): void {
  const root = document.getElementById("page")!;
  root.innerHTML = "";
  if (shimRef === null) return;
  if (currentPath() === "/reports") renderReports(root, shimRef);
  else renderSearch(root, shimRef);
}

export function go(url: string): void {
  if (!PAGES.includes(url)) throw new Error(`no page at ${url}`);
  history.pushState(null, "", url);
  render();
  shimRef?.observationChanged();
}

// -- chat panel --------------------------------------------------------------

function appendMessage(kind: "user" | "agent" | "status", text: string): void {
  const messages = document.getElementById("chat-messages")!;
  const msg = el("div", { class: `msg ${kind}` }, text);
  messages.appendChild(msg);
  messages.scrollTop = messages.scrollHeight;
}

function wireChatPanel(shim: AgentShim): void {
  const input = document.getElementById("chat-input") as HTMLInputElement;
  const send = () => {
    if (shim.sendChat(input.value)) {
      appendMessage("user", input.value);
      input.value = "";
    }
  };
  document.getElementById("chat-send")!.addEventListener("click", send);
  input.addEventListener("keydown", (ev) => {
    if (ev.key === "Enter") send();
  });
  for (const id of ["chat-input", "chat-send", "chat-messages"]) {
    document.getElementById(id)!.setAttribute("data-agent-ignore", "");
  }
}

// -- boot ---------------------------------------------------------------------

export function bootDemo(): AgentShim {
  const params = new URLSearchParams(location.search);
  const endpoint = params.get("backend") ?? "ws://127.0.0.1:8765/agent";
  const shim = connectAndRegister({
    endpoint,
    appId: "chem-analysis-demo",
    resumeSessionId: sessionStorage.getItem("agent-session") ?? undefined,
    urlProvider: () => currentPath(),
    // invoked by the agent's synthesized navigation action
    navigate: (url) => go(url),
    functions: registerFunctions(),
    onSession: (sid) => sessionStorage.setItem("agent-session", sid),
    onChatResponse: (text) => appendMessage("agent", text),
    onStatus: (s) =>
      appendMessage("status", `${s.agent} #${s.step}${s.action ? `: ${s.action}` : ""}`),
    onError: (code, detail) => appendMessage("status", `error ${code}: ${detail}`),
    onConnectionChange: (connected) => {
      document.getElementById("conn-dot")!.className = connected ? "on" : "";
      if (!connected) appendMessage("status", "assistant disconnected");
    },
  });
  shimRef = shim;
  wireChatPanel(shim);
  window.addEventListener("popstate", () => render());
  render();
  return shim;
}

let shimRef: AgentShim | null = null;

// The demo's function registry: GUI primitives plus one composite, each
// annotated for the agent and scoped to its page.
function registerFunctions() {
  return [
    {
      name: "type",
      description: "Type a value into a text field identified by its element id.",
      params: [
        { name: "textField", kind: "string" as const, description: "Target field element id" },
        { name: "value", kind: "string" as const, description: "Text to enter" },
      ],
      pages: ["/search"],
      granularity: "primitive" as const,
      handler: (args: Record<string, unknown>) => {
        const field = document.getElementById(String(args.textField)) as HTMLInputElement | null;
        if (!field) throw new Error(`no field ${String(args.textField)}`);
        field.value = String(args.value);
        field.dispatchEvent(new Event("input", { bubbles: true }));
      },
    },
    {
      name: "click",
      description: "Click a button identified by its element id.",
      params: [{ name: "target", kind: "string" as const, description: "Button element id" }],
      pages: ["/search"],
      granularity: "primitive" as const,
      handler: (args: Record<string, unknown>) => {
        const button = document.getElementById(String(args.target));
        if (!button) throw new Error(`no element ${String(args.target)}`);
        (button as HTMLElement).click();
      },
    },
    {
      name: "export",
      description: "Export the latest analysis report as a downloadable file.",
      params: [],
      pages: ["/reports"],
      granularity: "composite" as const,
      handler: () => exportReport(),
    },
  ];
}
