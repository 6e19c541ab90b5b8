"""Generates the protocol reference document from the schema tables."""

from __future__ import annotations

from .protocol import KIND_SCHEMAS

_HEADER = """\
# Wire protocol reference

*Generated by `uipilot gen-docs`; do not edit by hand.*

Every frame is one JSON object sent as a WebSocket text frame. Encoding is
canonical: sorted keys, compact separators, UTF-8, no NaN/Infinity.

## Envelope

| field | type | notes |
| --- | --- | --- |
| `session_id` | string | non-empty; assigned by the backend in the `hello` frame |
| `seq` | integer | starts at 1, strictly increasing per sender per session; a repeat or decrease is a protocol violation |
| `kind` | string | one of the kinds below; unknown kinds are hard errors |
| `correlation_id` | string, optional | pairs requests with responses (actions, chats) |
| `payload` | object | kind-specific body; unknown payload fields are ignored and preserved |

Connection flow: the client connects to the WebSocket endpoint (default
`/agent`, append `?session=<id>` to resume within the grace period), receives
`hello`, then sends `register` followed by the initial `observation`.
Observations are pushed lazily afterwards: only when the URL changes or UI
state is modified. The backend deduplicates identical snapshots by content
hash, so a duplicate push is acknowledged but not re-applied.

## Frame kinds
"""

_FOOTER = """\
## Error codes

| code | meaning |
| --- | --- |
| `malformed_frame` | frame is not valid UTF-8 JSON |
| `unknown_kind` | frame kind is not part of the protocol |
| `schema_violation` | envelope or payload does not match the kind's schema |
| `sequence_regression` | seq repeated or decreased |
| `session_mismatch` | envelope session_id differs from the connection's session |
| `unexpected_kind` | a backend-only kind was sent to the backend |
| `register_rejected` | skillset or page map failed registry validation |
| `no_registry` | observation arrived before register |
| `unknown_correlation` | action_result for a correlation id that is not pending |
| `queue_full` | too many queued goals for this session |

## Element schema (observation payload)

Each entry of `observation.elements`:

| field | type | notes |
| --- | --- | --- |
| `tag` | string | lowercase HTML tag name |
| `aria_label` | string | non-empty human-readable label |
| `element_id` | string, optional | stable identifier |
| `href` | string, optional | link tags (`a`, `area`) only |

## Function spec schema (register payload)

Each entry of `register.skillset`:

| field | type | notes |
| --- | --- | --- |
| `name` | string | unique within the skillset |
| `description` | string | purpose annotation shown to the agent |
| `params` | list | see parameter schema below |
| `pages` | list of string | page patterns; `*` means all pages |
| `granularity` | string | `primitive` or `composite` (informational) |

Parameter schema: `{"name": str, "kind": "string"|"number"|"boolean"|"enum",
"required": bool, "description": str, "values": [str, ...]}` - `values` only
for `enum`, and it must be non-empty at registration.

`register.page_map` maps page patterns to lists of function names; every name
must exist in the skillset. A function is visible on a URL when any of its
own patterns matches or any page-map pattern listing it matches.

Page patterns: `*` matches everything; a pattern ending in `/*` matches the
prefix (`/reports/*` covers `/reports` and `/reports/2024`); anything else
must equal the URL path. Query strings, fragments, and trailing slashes are
ignored.

## HTTP tool transport

Tools with `transport: http` are invoked by POSTing the call arguments as a
JSON object to the configured endpoint. A 2xx response body (JSON) becomes
the tool result; an `evidence` list in the body is surfaced to the agents;
any non-2xx response yields a failed tool result.
"""


def generate_protocol_doc() -> str:
    parts = [_HEADER]
    for kind, schema in KIND_SCHEMAS.items():
        parts.append(f"### `{kind}`  ({schema.direction})\n")
        parts.append(schema.doc + "\n")
        parts.append("| payload field | type | required | notes |")
        parts.append("| --- | --- | --- | --- |")
        for name, fld in schema.fields.items():
            required = "yes" if fld.required else "no"
            notes = fld.doc
            if fld.type == "string" and not fld.allow_empty:
                notes = (notes + "; non-empty").lstrip("; ")
            parts.append(f"| `{name}` | {fld.type} | {required} | {notes} |")
        parts.append("")
    parts.append(_FOOTER)
    return "\n".join(parts)
