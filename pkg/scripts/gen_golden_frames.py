"""Regenerate the golden wire frames under testdata/frames/.

Run from the repo root: python3 scripts/gen_golden_frames.py
The valid frames are canonical encoder output (byte-exact vectors shared
with the frontend shim); the invalid ones are hand-written rejections
listed in manifest.json with their expected error codes.
"""

from __future__ import annotations

import json
from pathlib import Path

from uipilot.demo import DEMO_GOAL, DEMO_SMILES, demo_app, demo_summary
from uipilot.protocol import WireMessage, encode_message

ROOT = Path(__file__).resolve().parent.parent
FRAMES = ROOT / "testdata" / "frames"

SESSION = "a3c1f2e4d5b6978811223344556677ff"


def valid_frames() -> dict[str, WireMessage]:
    app = demo_app()
    return {
        "hello": WireMessage(
            session_id=SESSION, seq=1, kind="hello",
            payload={"session_id": SESSION, "resumed": False},
        ),
        "register": WireMessage(
            session_id=SESSION, seq=1, kind="register", payload=app.register_payload(),
        ),
        "observation_search": WireMessage(
            session_id=SESSION, seq=2, kind="observation", payload=app.observe(),
        ),
        "chat_request": WireMessage(
            session_id=SESSION, seq=3, kind="chat_request",
            payload={"text": DEMO_GOAL}, correlation_id="chat-1",
        ),
        "action_request_type": WireMessage(
            session_id=SESSION, seq=2, kind="action_request",
            payload={
                "function_name": "type",
                "arguments": {"textField": "smiles-input", "value": DEMO_SMILES},
                "correlation_id": "corr-1",
            },
            correlation_id="corr-1",
        ),
        "action_result_ok": WireMessage(
            session_id=SESSION, seq=4, kind="action_result",
            payload={"correlation_id": "corr-1", "status": "ok"},
            correlation_id="corr-1",
        ),
        "action_result_failed": WireMessage(
            session_id=SESSION, seq=5, kind="action_result",
            payload={
                "correlation_id": "corr-2",
                "status": "failed",
                "detail": "unknown function 'zoom'",
            },
            correlation_id="corr-2",
        ),
        "chat_response": WireMessage(
            session_id=SESSION, seq=3, kind="chat_response",
            payload={"text": demo_summary(DEMO_SMILES)}, correlation_id="chat-1",
        ),
        "agent_status": WireMessage(
            session_id=SESSION, seq=4, kind="agent_status",
            payload={"agent": "web", "step": 0, "action": "type"},
        ),
        "error_empty_detail": WireMessage(
            session_id=SESSION, seq=5, kind="error",
            payload={"code": "bad_payload", "detail": ""},
        ),
    }


INVALID = {
    "malformed.json": ('{"session_id": "x", "seq": 1,', "malformed_frame"),
    "unknown_kind.json": (
        json.dumps({"session_id": SESSION, "seq": 1, "kind": "telemetry", "payload": {}}),
        "unknown_kind",
    ),
    "observation_missing_url.json": (
        json.dumps({
            "session_id": SESSION, "seq": 2, "kind": "observation",
            "payload": {"elements": []},
        }),
        "schema_violation",
    ),
    "failed_without_detail.json": (
        json.dumps({
            "session_id": SESSION, "seq": 3, "kind": "action_result",
            "payload": {"correlation_id": "corr-1", "status": "failed"},
        }),
        "schema_violation",
    ),
    "zero_seq.json": (
        json.dumps({
            "session_id": SESSION, "seq": 0, "kind": "chat_request",
            "payload": {"text": "hi"},
        }),
        "schema_violation",
    ),
    "empty_session.json": (
        json.dumps({"session_id": "", "seq": 1, "kind": "chat_request",
                    "payload": {"text": "hi"}}),
        "schema_violation",
    ),
    "array_frame.json": ("[1, 2, 3]", "schema_violation"),
}


def main() -> None:
    valid_dir = FRAMES
    invalid_dir = FRAMES / "invalid"
    valid_dir.mkdir(parents=True, exist_ok=True)
    invalid_dir.mkdir(parents=True, exist_ok=True)
    for name, msg in valid_frames().items():
        (valid_dir / f"{name}.json").write_bytes(encode_message(msg))
    manifest = {}
    for name, (text, code) in INVALID.items():
        (invalid_dir / name).write_text(text)
        manifest[name] = code
    (FRAMES / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    print(f"wrote {len(valid_frames())} valid frames and {len(INVALID)} invalid frames")


if __name__ == "__main__":
    main()
