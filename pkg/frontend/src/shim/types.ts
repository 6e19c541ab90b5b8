// Public configuration surface of the shim.

export interface ParamSpec {
  name: string;
  kind: "string" | "number" | "boolean" | "enum";
  required?: boolean; // default true
  description?: string;
  values?: string[]; // enum only
}

export type ActionHandler = (args: Record<string, unknown>) => unknown | Promise<unknown>;

export interface FunctionRegistration {
  name: string;
  description: string;
  params?: ParamSpec[];
  pages?: string[]; // default ["*"]
  granularity?: "primitive" | "composite";
  handler: ActionHandler;
}

// Structural slices of the DOM so the shim runs against the real document in
// a browser and against plain fakes in tests.
export interface ElementLike {
  tagName: string;
  getAttribute(name: string): string | null;
}

export interface DocumentLike {
  querySelectorAll(selector: string): ArrayLike<ElementLike> & Iterable<ElementLike>;
}

export interface WebSocketLike {
  send(data: string): void;
  close(): void;
  onopen: ((ev?: unknown) => void) | null;
  onmessage: ((ev: { data: unknown }) => void) | null;
  onclose: ((ev?: unknown) => void) | null;
  onerror: ((ev?: unknown) => void) | null;
}

export type WebSocketFactory = (url: string) => WebSocketLike;

export interface AgentStatus {
  agent: string;
  step: number;
  action?: string;
  detail?: string;
}

export interface ShimConfig {
  endpoint: string; // ws:// or wss:// URL of the backend gateway
  appId: string;
  functions: FunctionRegistration[];
  /** Source of the current app-relative URL; defaults to location.pathname. */
  urlProvider?: () => string;
  /** Executes the synthesized navigation action; defaults to history.pushState. */
  navigate?: (url: string) => void | Promise<void>;
  document?: DocumentLike; // defaults to globalThis.document
  webSocketFactory?: WebSocketFactory; // defaults to globalThis.WebSocket
  debounceMs?: number; // observation debounce, default 100
  reconnect?: boolean; // default true
  reconnectBaseMs?: number; // default 500, doubling, capped at 10s
  resumeSessionId?: string; // resume within the server's grace period
  onSession?: (sessionId: string, resumed: boolean) => void;
  onChatResponse?: (text: string, correlationId?: string) => void;
  onStatus?: (status: AgentStatus) => void;
  onError?: (code: string, detail: string) => void;
  onConnectionChange?: (connected: boolean) => void;
}
