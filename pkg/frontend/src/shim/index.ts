export { AgentShim, connectAndRegister } from "./shim.js";
export { patternMatches } from "./pages.js";
export {
  ProtocolError,
  canonicalJson,
  decodeMessage,
  encodeMessage,
  validateMessage,
  validatePayload,
} from "./protocol.js";
export type { Kind, WireMessage } from "./protocol.js";
export type {
  ActionHandler,
  AgentStatus,
  DocumentLike,
  ElementLike,
  FunctionRegistration,
  ParamSpec,
  ShimConfig,
  WebSocketFactory,
  WebSocketLike,
} from "./types.js";
