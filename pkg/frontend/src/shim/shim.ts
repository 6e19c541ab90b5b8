// The in-page agent shim: collects aria-labeled elements, registers the
// page's function skillset with the backend, pushes observations lazily
// (URL change, DOM mutation, post-action), and executes action requests
// against the registered handlers. Implementations never leave the page;
// only metadata goes to the backend.

import { patternMatches } from "./pages.js";
import {
  ProtocolError,
  WireMessage,
  decodeMessage,
  encodeMessage,
  canonicalJson,
} from "./protocol.js";
import {
  DocumentLike,
  ElementLike,
  FunctionRegistration,
  ShimConfig,
  WebSocketLike,
} from "./types.js";

const LINK_TAGS = new Set(["a", "area"]);

interface ObservedElement {
  tag: string;
  aria_label: string;
  element_id?: string;
  href?: string;
}

export class AgentShim {
  private config: ShimConfig;
  private functions: Map<string, FunctionRegistration>;
  private ws: WebSocketLike | null = null;
  private sessionId = "";
  private outSeq = 0;
  private inSeq = 0;
  private lastSentDigest: string | null = null;
  private pushTimer: ReturnType<typeof setTimeout> | null = null;
  private reconnectTimer: ReturnType<typeof setTimeout> | null = null;
  private reconnectDelay: number;
  private closedByUser = false;
  private actionQueue: WireMessage[] = [];
  private actionRunning = false;

  constructor(config: ShimConfig) {
    this.config = config;
    this.functions = new Map();
    for (const fn of config.functions) {
      if (this.functions.has(fn.name)) {
        throw new Error(`function ${fn.name} registered twice`);
      }
      this.functions.set(fn.name, fn);
    }
    this.reconnectDelay = config.reconnectBaseMs ?? 500;
  }

  // -- lifecycle -----------------------------------------------------------

  connect(): void {
    this.closedByUser = false;
    const factory =
      this.config.webSocketFactory ??
      ((url: string) => new (globalThis as any).WebSocket(url) as WebSocketLike);
    let url = this.config.endpoint;
    const resume = this.config.resumeSessionId;
    if (resume) {
      url += (url.includes("?") ? "&" : "?") + "session=" + encodeURIComponent(resume);
    }
    let ws: WebSocketLike;
    try {
      ws = factory(url);
    } catch (err) {
      this.scheduleReconnect();
      return;
    }
    this.ws = ws;
    this.outSeq = 0;
    this.inSeq = 0;
    this.lastSentDigest = null;
    ws.onopen = () => {
      this.reconnectDelay = this.config.reconnectBaseMs ?? 500;
    };
    ws.onmessage = (ev) => this.handleFrame(String(ev.data));
    ws.onerror = () => {
      /* onclose follows; the page stays functional without the agent */
    };
    ws.onclose = () => {
      if (this.ws === ws) {
        this.ws = null;
        this.sessionId = "";
        this.config.onConnectionChange?.(false);
        this.scheduleReconnect();
      }
    };
  }

  disconnect(): void {
    this.closedByUser = true;
    if (this.reconnectTimer !== null) clearTimeout(this.reconnectTimer);
    if (this.pushTimer !== null) clearTimeout(this.pushTimer);
    this.ws?.close();
    this.ws = null;
  }

  get connected(): boolean {
    return this.ws !== null && this.sessionId !== "";
  }

  get session(): string {
    return this.sessionId;
  }

  private scheduleReconnect(): void {
    if (this.closedByUser || this.config.reconnect === false) return;
    if (this.reconnectTimer !== null) return;
    this.reconnectTimer = setTimeout(() => {
      this.reconnectTimer = null;
      this.connect();
    }, this.reconnectDelay);
    this.reconnectDelay = Math.min(this.reconnectDelay * 2, 10_000);
  }

  // -- outbound ------------------------------------------------------------

  private send(kind: WireMessage["kind"], payload: Record<string, unknown>, correlationId?: string): boolean {
    if (this.ws === null || this.sessionId === "") return false;
    const msg: WireMessage = {
      session_id: this.sessionId,
      seq: ++this.outSeq,
      kind,
      payload,
    };
    if (correlationId !== undefined) msg.correlation_id = correlationId;
    try {
      this.ws.send(encodeMessage(msg));
      return true;
    } catch (err) {
      this.config.onError?.("send_failed", String(err));
      return false;
    }
  }

  private registerPayload(): Record<string, unknown> {
    const skillset = [];
    const pageMap: Record<string, string[]> = {};
    for (const fn of this.functions.values()) {
      const pages = fn.pages ?? ["*"];
      skillset.push({
        name: fn.name,
        description: fn.description,
        params: (fn.params ?? []).map((p) => ({
          name: p.name,
          kind: p.kind,
          required: p.required ?? true,
          description: p.description ?? "",
          ...(p.kind === "enum" ? { values: p.values ?? [] } : {}),
        })),
        pages,
        granularity: fn.granularity ?? "primitive",
      });
      for (const pattern of pages) {
        (pageMap[pattern] ??= []).push(fn.name);
      }
    }
    return { app_id: this.config.appId, skillset, page_map: pageMap };
  }

  currentUrl(): string {
    if (this.config.urlProvider) return this.config.urlProvider();
    return (globalThis as any).location?.pathname ?? "/";
  }

  collectObservation(): { url: string; elements: ObservedElement[] } {
    const doc: DocumentLike | undefined =
      this.config.document ?? ((globalThis as any).document as DocumentLike | undefined);
    const elements: ObservedElement[] = [];
    if (doc) {
      for (const el of Array.from(doc.querySelectorAll("[aria-label]"))) {
        const label = (el as ElementLike).getAttribute("aria-label");
        if (!label) continue; // unlabeled elements are never serialized
        // Chrome of the shim's own UI (e.g. the chat panel) opts out.
        if ((el as ElementLike).getAttribute("data-agent-ignore") !== null) continue;
        const tag = (el as ElementLike).tagName.toLowerCase();
        const entry: ObservedElement = { tag, aria_label: label };
        const id = (el as ElementLike).getAttribute("id");
        if (id) entry.element_id = id;
        if (LINK_TAGS.has(tag)) {
          const href = (el as ElementLike).getAttribute("href");
          if (href) entry.href = href;
        }
        elements.push(entry);
      }
    }
    return { url: this.currentUrl(), elements };
  }

  /** Serialize and send iff the digest differs from the last sent frame. */
  pushObservationIfChanged(force = false): boolean {
    const payload = this.collectObservation();
    const digest = canonicalJson(payload);
    if (!force && digest === this.lastSentDigest) return false;
    if (!this.send("observation", payload)) return false;
    this.lastSentDigest = digest;
    return true;
  }

  /** Debounced change notification: URL change, mutation, or post-action. */
  observationChanged(): void {
    if (this.pushTimer !== null) return;
    this.pushTimer = setTimeout(() => {
      this.pushTimer = null;
      this.pushObservationIfChanged();
    }, this.config.debounceMs ?? 100);
  }

  /** Send a user goal; empty input sends nothing. */
  sendChat(text: string, correlationId?: string): boolean {
    if (!text.trim()) return false;
    return this.send("chat_request", { text }, correlationId);
  }

  // -- inbound -------------------------------------------------------------

  private handleFrame(raw: string): void {
    let msg: WireMessage;
    try {
      msg = decodeMessage(raw, this.inSeq || undefined);
    } catch (err) {
      const code = err instanceof ProtocolError ? err.code : "decode_failed";
      this.config.onError?.(code, String(err));
      return;
    }
    this.inSeq = msg.seq;
    switch (msg.kind) {
      case "hello": {
        this.sessionId = msg.payload.session_id as string;
        this.config.onSession?.(this.sessionId, msg.payload.resumed as boolean);
        this.config.onConnectionChange?.(true);
        // The skillset and page map go once per page load, then the
        // initial observation.
        this.send("register", this.registerPayload());
        this.pushObservationIfChanged(true);
        break;
      }
      case "action_request": {
        this.actionQueue.push(msg);
        void this.drainActions();
        break;
      }
      case "chat_response":
        this.config.onChatResponse?.(msg.payload.text as string, msg.correlation_id);
        break;
      case "agent_status":
        this.config.onStatus?.({
          agent: msg.payload.agent as string,
          step: msg.payload.step as number,
          action: msg.payload.action as string | undefined,
          detail: msg.payload.detail as string | undefined,
        });
        break;
      case "error":
        this.config.onError?.(
          msg.payload.code as string,
          (msg.payload.detail as string) ?? "",
        );
        break;
      default:
        this.config.onError?.("unexpected_kind", `frontend does not accept ${msg.kind}`);
    }
  }

  // At most one action executes at a time, matching the gateway's
  // one-pending-action rule.
  private async drainActions(): Promise<void> {
    if (this.actionRunning) return;
    this.actionRunning = true;
    try {
      while (this.actionQueue.length > 0) {
        const msg = this.actionQueue.shift()!;
        await this.executeAction(msg);
      }
    } finally {
      this.actionRunning = false;
    }
  }

  private async executeAction(msg: WireMessage): Promise<void> {
    const name = msg.payload.function_name as string;
    const args = (msg.payload.arguments as Record<string, unknown>) ?? {};
    const correlationId = msg.payload.correlation_id as string;
    let status = "ok";
    let detail: string | undefined;
    if (name === "navigate") {
      try {
        await this.navigate(String(args.url ?? ""));
      } catch (err) {
        status = "failed";
        detail = `navigation failed: ${String(err)}`;
      }
    } else {
      const fn = this.functions.get(name);
      if (fn === undefined) {
        status = "failed";
        detail = `unknown function ${name}`;
      } else if (!(fn.pages ?? ["*"]).some((p) => patternMatches(p, this.currentUrl()))) {
        // Page-scoped execution: refuse locally even if requested.
        status = "failed";
        detail = `${name} is not available on ${this.currentUrl()}`;
      } else {
        try {
          await fn.handler(args);
        } catch (err) {
          status = "failed";
          detail = `handler threw: ${String(err)}`;
        }
      }
    }
    const payload: Record<string, unknown> = { correlation_id: correlationId, status };
    if (detail) payload.detail = detail;
    // Push the resulting UI state before acknowledging, so the agent's next
    // step is grounded in the post-action snapshot.
    this.pushObservationIfChanged();
    this.send("action_result", payload, correlationId);
    this.observationChanged(); // catch slower re-renders within the debounce window
  }

  /** Default navigation: history.pushState plus a popstate event. */
  private async navigate(url: string): Promise<void> {
    if (this.config.navigate) {
      await this.config.navigate(url);
      return;
    }
    const history = (globalThis as any).history;
    if (history?.pushState === undefined) {
      throw new Error("no navigation handler configured");
    }
    history.pushState(null, "", url);
    (globalThis as any).dispatchEvent?.(new (globalThis as any).PopStateEvent("popstate"));
  }

  /** Wire up browser-side push triggers (no-op outside a real browser). */
  installBrowserTriggers(): void {
    const g = globalThis as any;
    if (typeof g.addEventListener === "function") {
      g.addEventListener("popstate", () => this.observationChanged());
      g.addEventListener("hashchange", () => this.observationChanged());
    }
    if (typeof g.MutationObserver === "function" && g.document) {
      const observer = new g.MutationObserver(() => this.observationChanged());
      observer.observe(g.document.documentElement, {
        subtree: true,
        childList: true,
        attributes: true,
        attributeFilter: ["aria-label", "href", "id"],
      });
    }
  }
}

export function connectAndRegister(config: ShimConfig): AgentShim {
  const shim = new AgentShim(config);
  shim.installBrowserTriggers();
  shim.connect();
  return shim;
}
