"""Wire protocol: every frame exchanged between frontend and backend.

One JSON object per WebSocket text frame. The envelope carries a session id,
a per-direction sequence number, a kind, an optional correlation id, and a
kind-specific payload. Unknown payload fields are ignored (and preserved);
unknown kinds are hard errors. Encoding is canonical (sorted keys, compact
separators, UTF-8) so frames are byte-reproducible.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any, Callable, Mapping

from . import observation as obs
from . import registry as reg


class ProtocolError(Exception):
    """Base class for frame encode/decode failures."""

    code = "protocol_error"


class MalformedFrame(ProtocolError):
    """Frame is not valid UTF-8 JSON."""

    code = "malformed_frame"


class UnknownKind(ProtocolError):
    """Frame kind is not part of the protocol."""

    code = "unknown_kind"


class SchemaViolation(ProtocolError):
    """Envelope or payload does not match the kind's schema."""

    code = "schema_violation"


class SequenceRegression(ProtocolError):
    """Sequence number repeated or decreased within one direction."""

    code = "sequence_regression"


@dataclass(frozen=True)
class WireMessage:
    session_id: str
    seq: int
    kind: str
    payload: dict
    correlation_id: str | None = None


@dataclass(frozen=True)
class FieldSpec:
    type: str  # string | int | bool | list | object
    required: bool = True
    allow_empty: bool = True  # strings only
    doc: str = ""


def _is_int(v: Any) -> bool:
    return isinstance(v, int) and not isinstance(v, bool)


_TYPE_CHECKS: dict[str, Callable[[Any], bool]] = {
    "string": lambda v: isinstance(v, str),
    "int": _is_int,
    "bool": lambda v: isinstance(v, bool),
    "list": lambda v: isinstance(v, list),
    "object": lambda v: isinstance(v, dict),
}


def _check_register(payload: Mapping[str, Any]) -> None:
    try:
        specs = [reg.FunctionSpec.from_dict(s) for s in payload["skillset"]]
        page_map = reg.PageFunctionMap.from_dict(payload["page_map"])
    except reg.RegistryError as exc:
        raise SchemaViolation(str(exc)) from exc
    names = set()
    for spec in specs:
        if spec.name in names:
            raise SchemaViolation(f"duplicate function {spec.name!r} in skillset")
        names.add(spec.name)
    for pattern, listed in page_map.entries:
        for fn in listed:
            if fn not in names:
                raise SchemaViolation(f"page map {pattern!r} names unknown function {fn!r}")


def _check_observation(payload: Mapping[str, Any]) -> None:
    try:
        obs.AriaSnapshot.from_payload(dict(payload))
    except obs.ObservationError as exc:
        raise SchemaViolation(str(exc)) from exc


def _check_action_result(payload: Mapping[str, Any]) -> None:
    if payload["status"] not in ("ok", "failed"):
        raise SchemaViolation(f"action_result status must be ok|failed, got {payload['status']!r}")
    if payload["status"] == "failed" and not payload.get("detail"):
        raise SchemaViolation("action_result with status=failed needs a non-empty detail")


def _check_agent_status(payload: Mapping[str, Any]) -> None:
    if payload["agent"] not in ("router", "web", "analysis", "chat"):
        raise SchemaViolation(f"unknown agent {payload['agent']!r} in agent_status")
    if payload["step"] < 0:
        raise SchemaViolation("agent_status step must be >= 0")


@dataclass(frozen=True)
class KindSchema:
    doc: str
    direction: str  # "frontend->backend" | "backend->frontend"
    fields: dict[str, FieldSpec]
    check: Callable[[Mapping[str, Any]], None] | None = None


KIND_SCHEMAS: dict[str, KindSchema] = {
    "hello": KindSchema(
        doc="Handshake reply: the backend-assigned session id.",
        direction="backend->frontend",
        fields={
            "session_id": FieldSpec("string", allow_empty=False, doc="Assigned session id"),
            "resumed": FieldSpec("bool", doc="True when an existing session was resumed"),
        },
    ),
    "register": KindSchema(
        doc="Skillset metadata and the page-function map, sent once at page load.",
        direction="frontend->backend",
        fields={
            "app_id": FieldSpec("string", allow_empty=False, doc="Application identifier"),
            "skillset": FieldSpec("list", doc="Function specs (metadata only)"),
            "page_map": FieldSpec("object", doc="Page pattern -> function names"),
        },
        check=_check_register,
    ),
    "observation": KindSchema(
        doc="Full accessibility snapshot: page URL plus labeled elements.",
        direction="frontend->backend",
        fields={
            "url": FieldSpec("string", allow_empty=False, doc="Current page URL"),
            "elements": FieldSpec("list", doc="Labeled elements in document order"),
        },
        check=_check_observation,
    ),
    "chat_request": KindSchema(
        doc="A user goal for the agents.",
        direction="frontend->backend",
        fields={"text": FieldSpec("string", allow_empty=False, doc="User message")},
    ),
    "action_request": KindSchema(
        doc="A function call for the frontend to execute.",
        direction="backend->frontend",
        fields={
            "function_name": FieldSpec("string", allow_empty=False, doc="Registered function"),
            "arguments": FieldSpec("object", doc="Arguments conforming to the function schema"),
            "correlation_id": FieldSpec("string", allow_empty=False, doc="Id echoed by the result"),
        },
    ),
    "action_result": KindSchema(
        doc="Outcome of an action_request.",
        direction="frontend->backend",
        fields={
            "correlation_id": FieldSpec("string", allow_empty=False, doc="Id of the request"),
            "status": FieldSpec("string", allow_empty=False, doc="ok | failed"),
            "detail": FieldSpec("string", required=False, doc="Required non-empty when failed"),
        },
        check=_check_action_result,
    ),
    "chat_response": KindSchema(
        doc="Final agent answer for the chat panel.",
        direction="backend->frontend",
        fields={"text": FieldSpec("string", allow_empty=False, doc="Agent answer")},
    ),
    "agent_status": KindSchema(
        doc="Per-step progress while a goal is being worked on.",
        direction="backend->frontend",
        fields={
            "agent": FieldSpec("string", allow_empty=False, doc="router | web | analysis | chat"),
            "step": FieldSpec("int", doc="Step index within the agent run"),
            "action": FieldSpec("string", required=False, doc="Dispatched function, if any"),
            "detail": FieldSpec("string", required=False, doc="Free-form progress note"),
        },
        check=_check_agent_status,
    ),
    "error": KindSchema(
        doc="Protocol-level rejection; the connection stays open.",
        direction="backend->frontend",
        fields={
            "code": FieldSpec("string", allow_empty=False, doc="Machine-readable error code"),
            "detail": FieldSpec("string", required=False, doc="Human-readable detail (may be empty)"),
            "offending_seq": FieldSpec("int", required=False, doc="Seq of the rejected frame"),
        },
    ),
}

KINDS = tuple(KIND_SCHEMAS)


def validate_payload(kind: str, payload: Mapping[str, Any]) -> None:
    """Check ``payload`` against the kind's schema; unknown fields are ignored."""
    schema = KIND_SCHEMAS.get(kind)
    if schema is None:
        raise UnknownKind(f"unknown kind {kind!r}")
    if not isinstance(payload, Mapping):
        raise SchemaViolation(f"{kind} payload must be an object")
    for name, spec in schema.fields.items():
        if name not in payload or payload[name] is None:
            if spec.required:
                raise SchemaViolation(f"{kind} payload missing required field {name!r}")
            continue
        value = payload[name]
        if not _TYPE_CHECKS[spec.type](value):
            raise SchemaViolation(f"{kind} payload field {name!r} must be {spec.type}")
        if spec.type == "string" and not spec.allow_empty and not value:
            raise SchemaViolation(f"{kind} payload field {name!r} must be non-empty")
    if schema.check is not None:
        schema.check(payload)


def validate_message(msg: WireMessage) -> None:
    if not isinstance(msg.session_id, str) or not msg.session_id:
        raise SchemaViolation("session_id must be a non-empty string")
    if not _is_int(msg.seq) or msg.seq < 1:
        raise SchemaViolation("seq must be an integer >= 1")
    if msg.correlation_id is not None and (
        not isinstance(msg.correlation_id, str) or not msg.correlation_id
    ):
        raise SchemaViolation("correlation_id must be a non-empty string when present")
    if not isinstance(msg.kind, str):
        raise SchemaViolation("kind must be a string")
    validate_payload(msg.kind, msg.payload)


def canonical_json(value: Any) -> str:
    return json.dumps(
        value, sort_keys=True, separators=(",", ":"), ensure_ascii=False, allow_nan=False
    )


def encode_message(msg: WireMessage) -> bytes:
    """Serialize a validated message to one UTF-8 JSON text frame."""
    validate_message(msg)
    envelope: dict[str, Any] = {
        "session_id": msg.session_id,
        "seq": msg.seq,
        "kind": msg.kind,
        "payload": dict(msg.payload),
    }
    if msg.correlation_id is not None:
        envelope["correlation_id"] = msg.correlation_id
    try:
        text = canonical_json(envelope)
        return text.encode("utf-8")
    except (TypeError, ValueError, UnicodeEncodeError) as exc:
        raise SchemaViolation(f"payload is not wire-encodable: {exc}") from exc


def _reject_constant(name: str) -> Any:
    raise ValueError(f"non-finite constant {name} is not valid wire JSON")


def decode_message(frame: bytes | str, last_seq: int | None = None) -> WireMessage:
    """Parse and validate one frame; never aborts on arbitrary input.

    With ``last_seq`` given, additionally enforces strict seq monotonicity for
    the sender direction the caller is tracking.
    """
    if isinstance(frame, (bytes, bytearray)):
        try:
            text = bytes(frame).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise MalformedFrame(f"frame is not valid UTF-8: {exc}") from exc
    elif isinstance(frame, str):
        text = frame
    else:
        raise MalformedFrame(f"frame must be bytes or str, got {type(frame).__name__}")
    try:
        data = json.loads(text, parse_constant=_reject_constant)
    except (json.JSONDecodeError, ValueError, RecursionError) as exc:
        raise MalformedFrame(f"frame is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise SchemaViolation("frame must be a JSON object")
    kind = data.get("kind")
    if not isinstance(kind, str):
        raise SchemaViolation("frame needs a string 'kind'")
    if kind not in KIND_SCHEMAS:
        raise UnknownKind(f"unknown kind {kind!r}")
    payload = data.get("payload")
    if not isinstance(payload, dict):
        raise SchemaViolation("frame needs an object 'payload'")
    msg = WireMessage(
        session_id=data.get("session_id", ""),
        seq=data.get("seq", 0),
        kind=kind,
        payload=payload,
        correlation_id=data.get("correlation_id"),
    )
    validate_message(msg)
    if last_seq is not None:
        check_seq(last_seq, msg.seq)
    return msg


def check_seq(last_seq: int, seq: int) -> None:
    """Enforce strictly increasing sequence numbers per sender per session."""
    if seq <= last_seq:
        raise SequenceRegression(f"seq {seq} does not increase over {last_seq}")
