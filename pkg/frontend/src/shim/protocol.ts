// Wire protocol mirror: canonical encoding plus schema validation for every
// frame the shim sends or receives. Byte-compatible with the backend encoder
// (sorted keys, compact separators, UTF-8, raw non-ASCII), checked against
// the shared golden vectors in testdata/frames.

export type Kind =
  | "hello"
  | "register"
  | "observation"
  | "chat_request"
  | "action_request"
  | "action_result"
  | "chat_response"
  | "agent_status"
  | "error";

export interface WireMessage {
  session_id: string;
  seq: number;
  kind: Kind;
  payload: Record<string, unknown>;
  correlation_id?: string;
}

export class ProtocolError extends Error {
  constructor(public code: string, message: string) {
    super(message);
    this.name = "ProtocolError";
  }
}

const malformed = (msg: string) => new ProtocolError("malformed_frame", msg);
const unknownKind = (msg: string) => new ProtocolError("unknown_kind", msg);
const violation = (msg: string) => new ProtocolError("schema_violation", msg);

type FieldType = "string" | "int" | "bool" | "list" | "object";

interface FieldSpec {
  type: FieldType;
  required: boolean;
  allowEmpty?: boolean; // strings only; default true
}

type Checker = (payload: Record<string, unknown>) => void;

const LINK_TAGS = new Set(["a", "area"]);

function checkElements(payload: Record<string, unknown>): void {
  const elements = payload.elements as unknown[];
  for (const raw of elements) {
    if (raw === null || typeof raw !== "object" || Array.isArray(raw)) {
      throw violation("observation element must be an object");
    }
    const el = raw as Record<string, unknown>;
    if (typeof el.tag !== "string" || !/^[a-z][a-z0-9-]*$/.test(el.tag)) {
      throw violation(`element tag must be a lowercase tag name, got ${JSON.stringify(el.tag)}`);
    }
    if (typeof el.aria_label !== "string" || el.aria_label.length === 0) {
      throw violation("element aria_label must be a non-empty string");
    }
    if (el.href !== undefined && el.href !== null && !LINK_TAGS.has(el.tag)) {
      throw violation(`href is only allowed on link tags, not <${el.tag}>`);
    }
  }
}

function checkRegister(payload: Record<string, unknown>): void {
  const names = new Set<string>();
  for (const raw of payload.skillset as unknown[]) {
    const spec = raw as Record<string, unknown>;
    if (typeof spec.name !== "string" || spec.name.length === 0) {
      throw violation("function spec needs a non-empty name");
    }
    if (names.has(spec.name)) throw violation(`duplicate function ${spec.name} in skillset`);
    names.add(spec.name);
  }
  const pageMap = payload.page_map as Record<string, unknown>;
  for (const [pattern, listed] of Object.entries(pageMap)) {
    if (!Array.isArray(listed)) throw violation(`page map entry ${pattern} must be a list`);
    for (const fn of listed) {
      if (typeof fn !== "string" || !names.has(fn)) {
        throw violation(`page map ${pattern} names unknown function ${String(fn)}`);
      }
    }
  }
}

function checkActionResult(payload: Record<string, unknown>): void {
  if (payload.status !== "ok" && payload.status !== "failed") {
    throw violation(`action_result status must be ok|failed, got ${String(payload.status)}`);
  }
  if (payload.status === "failed" && !payload.detail) {
    throw violation("action_result with status=failed needs a non-empty detail");
  }
}

function checkAgentStatus(payload: Record<string, unknown>): void {
  if (!["router", "web", "analysis", "chat"].includes(payload.agent as string)) {
    throw violation(`unknown agent ${String(payload.agent)} in agent_status`);
  }
  if ((payload.step as number) < 0) throw violation("agent_status step must be >= 0");
}

const KIND_SCHEMAS: Record<Kind, { fields: Record<string, FieldSpec>; check?: Checker }> = {
  hello: {
    fields: {
      session_id: { type: "string", required: true, allowEmpty: false },
      resumed: { type: "bool", required: true },
    },
  },
  register: {
    fields: {
      app_id: { type: "string", required: true, allowEmpty: false },
      skillset: { type: "list", required: true },
      page_map: { type: "object", required: true },
    },
    check: checkRegister,
  },
  observation: {
    fields: {
      url: { type: "string", required: true, allowEmpty: false },
      elements: { type: "list", required: true },
    },
    check: checkElements,
  },
  chat_request: {
    fields: { text: { type: "string", required: true, allowEmpty: false } },
  },
  action_request: {
    fields: {
      function_name: { type: "string", required: true, allowEmpty: false },
      arguments: { type: "object", required: true },
      correlation_id: { type: "string", required: true, allowEmpty: false },
    },
  },
  action_result: {
    fields: {
      correlation_id: { type: "string", required: true, allowEmpty: false },
      status: { type: "string", required: true, allowEmpty: false },
      detail: { type: "string", required: false },
    },
    check: checkActionResult,
  },
  chat_response: {
    fields: { text: { type: "string", required: true, allowEmpty: false } },
  },
  agent_status: {
    fields: {
      agent: { type: "string", required: true, allowEmpty: false },
      step: { type: "int", required: true },
      action: { type: "string", required: false },
      detail: { type: "string", required: false },
    },
    check: checkAgentStatus,
  },
  error: {
    fields: {
      code: { type: "string", required: true, allowEmpty: false },
      detail: { type: "string", required: false },
      offending_seq: { type: "int", required: false },
    },
  },
};

function typeOk(type: FieldType, value: unknown): boolean {
  switch (type) {
    case "string":
      return typeof value === "string";
    case "int":
      return typeof value === "number" && Number.isInteger(value);
    case "bool":
      return typeof value === "boolean";
    case "list":
      return Array.isArray(value);
    case "object":
      return value !== null && typeof value === "object" && !Array.isArray(value);
  }
}

export function validatePayload(kind: string, payload: Record<string, unknown>): void {
  const schema = KIND_SCHEMAS[kind as Kind];
  if (schema === undefined) throw unknownKind(`unknown kind ${JSON.stringify(kind)}`);
  for (const [name, spec] of Object.entries(schema.fields)) {
    const value = payload[name];
    if (value === undefined || value === null) {
      if (spec.required) throw violation(`${kind} payload missing required field ${name}`);
      continue;
    }
    if (!typeOk(spec.type, value)) {
      throw violation(`${kind} payload field ${name} must be ${spec.type}`);
    }
    if (spec.type === "string" && spec.allowEmpty === false && value === "") {
      throw violation(`${kind} payload field ${name} must be non-empty`);
    }
  }
  schema.check?.(payload);
}

export function validateMessage(msg: WireMessage): void {
  if (typeof msg.session_id !== "string" || msg.session_id.length === 0) {
    throw violation("session_id must be a non-empty string");
  }
  if (!Number.isInteger(msg.seq) || msg.seq < 1) {
    throw violation("seq must be an integer >= 1");
  }
  if (msg.correlation_id !== undefined && (typeof msg.correlation_id !== "string" || !msg.correlation_id)) {
    throw violation("correlation_id must be a non-empty string when present");
  }
  validatePayload(msg.kind, msg.payload);
}

// Canonical JSON: recursively sorted keys, compact separators. Key order
// matches the backend for ASCII keys (all protocol keys are ASCII).
export function canonicalJson(value: unknown): string {
  if (value === null || typeof value === "boolean" || typeof value === "string") {
    return JSON.stringify(value);
  }
  if (typeof value === "number") {
    if (!Number.isFinite(value)) throw violation("non-finite numbers are not wire JSON");
    return JSON.stringify(value);
  }
  if (Array.isArray(value)) {
    return "[" + value.map(canonicalJson).join(",") + "]";
  }
  if (typeof value === "object") {
    const entries = Object.entries(value as Record<string, unknown>)
      .filter(([, v]) => v !== undefined)
      .sort(([a], [b]) => (a < b ? -1 : a > b ? 1 : 0));
    return "{" + entries.map(([k, v]) => JSON.stringify(k) + ":" + canonicalJson(v)).join(",") + "}";
  }
  throw violation(`value is not wire-encodable: ${typeof value}`);
}

export function encodeMessage(msg: WireMessage): string {
  validateMessage(msg);
  const envelope: Record<string, unknown> = {
    session_id: msg.session_id,
    seq: msg.seq,
    kind: msg.kind,
    payload: msg.payload,
  };
  if (msg.correlation_id !== undefined) envelope.correlation_id = msg.correlation_id;
  return canonicalJson(envelope);
}

export function decodeMessage(frame: string, lastSeq?: number): WireMessage {
  let data: unknown;
  try {
    data = JSON.parse(frame);
  } catch (err) {
    throw malformed(`frame is not valid JSON: ${String(err)}`);
  }
  if (data === null || typeof data !== "object" || Array.isArray(data)) {
    throw violation("frame must be a JSON object");
  }
  const obj = data as Record<string, unknown>;
  if (typeof obj.kind !== "string") throw violation("frame needs a string 'kind'");
  if (!(obj.kind in KIND_SCHEMAS)) throw unknownKind(`unknown kind ${JSON.stringify(obj.kind)}`);
  if (obj.payload === null || typeof obj.payload !== "object" || Array.isArray(obj.payload)) {
    throw violation("frame needs an object 'payload'");
  }
  const msg: WireMessage = {
    session_id: (obj.session_id as string) ?? "",
    seq: (obj.seq as number) ?? 0,
    kind: obj.kind as Kind,
    payload: obj.payload as Record<string, unknown>,
  };
  if (obj.correlation_id !== undefined && obj.correlation_id !== null) {
    msg.correlation_id = obj.correlation_id as string;
  }
  validateMessage(msg);
  if (lastSeq !== undefined && msg.seq <= lastSeq) {
    throw new ProtocolError("sequence_regression", `seq ${msg.seq} does not increase over ${lastSeq}`);
  }
  return msg;
}
