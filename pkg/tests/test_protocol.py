import json
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from uipilot.demo import DEMO_GOAL
from uipilot.protocol import (
    KIND_SCHEMAS,
    MalformedFrame,
    ProtocolError,
    SchemaViolation,
    SequenceRegression,
    UnknownKind,
    WireMessage,
    check_seq,
    decode_message,
    encode_message,
)

from conftest import FRAMES_DIR
from genframes import random_message

ERROR_CLASSES = {
    "malformed_frame": MalformedFrame,
    "unknown_kind": UnknownKind,
    "schema_violation": SchemaViolation,
    "sequence_regression": SequenceRegression,
}

# Minimal valid payload per kind, used to probe required-field deletions.
VALID_PAYLOADS = {
    "hello": {"session_id": "s1", "resumed": False},
    "register": {"app_id": "app", "skillset": [], "page_map": {}},
    "observation": {"url": "/search", "elements": []},
    "chat_request": {"text": "hi"},
    "action_request": {"function_name": "click", "arguments": {}, "correlation_id": "c1"},
    "action_result": {"correlation_id": "c1", "status": "ok"},
    "chat_response": {"text": "done"},
    "agent_status": {"agent": "web", "step": 0},
    "error": {"code": "oops"},
}


def make(kind, payload, seq=1, session="s-test", corr=None):
    return WireMessage(session_id=session, seq=seq, kind=kind, payload=payload,
                       correlation_id=corr)


# ---------------------------------------------------------------------------
# Golden frames (byte-exact, shared with the frontend shim)


def test_golden_frames_roundtrip_byte_exact():
    frames = sorted(FRAMES_DIR.glob("*.json"))
    frames = [f for f in frames if f.name != "manifest.json"]
    assert len(frames) >= 9
    for path in frames:
        raw = path.read_bytes()
        msg = decode_message(raw)
        assert encode_message(msg) == raw, f"{path.name} is not canonical"


def test_golden_chat_request_carries_goal_verbatim():
    msg = decode_message((FRAMES_DIR / "chat_request.json").read_bytes())
    assert msg.payload["text"] == DEMO_GOAL
    assert msg.payload["text"] == "Check if this SMILES is a PFAS and generate a short report."


def test_golden_invalid_frames_reject_with_expected_code():
    manifest = json.loads((FRAMES_DIR / "manifest.json").read_text())
    assert len(manifest) >= 5
    for name, code in manifest.items():
        raw = (FRAMES_DIR / "invalid" / name).read_bytes()
        with pytest.raises(ERROR_CLASSES[code]):
            decode_message(raw)


# ---------------------------------------------------------------------------
# Spec-level examples


def test_error_frame_with_empty_detail_roundtrips():
    msg = make("error", {"code": "bad_payload", "detail": ""})
    assert decode_message(encode_message(msg)) == msg


def test_failed_action_result_with_empty_detail_rejected():
    msg = make("action_result", {"correlation_id": "c", "status": "failed", "detail": ""})
    with pytest.raises(SchemaViolation):
        encode_message(msg)


def test_failed_action_result_without_detail_rejected():
    msg = make("action_result", {"correlation_id": "c", "status": "failed"})
    with pytest.raises(SchemaViolation):
        encode_message(msg)


def test_required_field_deletion_rejected_for_every_kind():
    # Fuzz-delete each required payload field; every deletion must be rejected.
    for kind, schema in KIND_SCHEMAS.items():
        base = VALID_PAYLOADS[kind]
        encode_message(make(kind, base))  # sanity: the base is valid
        for field_name, spec in schema.fields.items():
            if not spec.required:
                continue
            broken = {k: v for k, v in base.items() if k != field_name}
            with pytest.raises(SchemaViolation):
                encode_message(make(kind, broken))
            with pytest.raises(SchemaViolation):
                decode_message(
                    json.dumps(
                        {"session_id": "s", "seq": 1, "kind": kind, "payload": broken}
                    )
                )


def test_one_mib_of_random_bytes_is_malformed_not_fatal():
    rng = random.Random(0xF00D)
    blob = rng.randbytes(1 << 20)
    with pytest.raises(MalformedFrame):
        decode_message(blob)


def test_unknown_kind_is_hard_error():
    frame = json.dumps({"session_id": "s", "seq": 1, "kind": "telemetry", "payload": {}})
    with pytest.raises(UnknownKind):
        decode_message(frame)


def test_unknown_payload_fields_are_ignored_and_preserved():
    payload = {"text": "hi", "x_extra": {"nested": [1, 2]}}
    msg = make("chat_request", payload)
    decoded = decode_message(encode_message(msg))
    assert decoded.payload["x_extra"] == {"nested": [1, 2]}
    assert decoded == msg


def test_envelope_validation():
    with pytest.raises(SchemaViolation):
        encode_message(make("chat_request", {"text": "x"}, seq=0))
    with pytest.raises(SchemaViolation):
        encode_message(make("chat_request", {"text": "x"}, session=""))
    with pytest.raises(SchemaViolation):
        encode_message(make("chat_request", {"text": "x"}, corr=""))
    with pytest.raises(SchemaViolation):
        decode_message(json.dumps({"session_id": "s", "seq": 1.5, "kind": "error",
                                   "payload": {"code": "x"}}))


def test_register_payload_invariants():
    dup = {
        "app_id": "a",
        "skillset": [
            {"name": "click", "pages": ["*"]},
            {"name": "click", "pages": ["*"]},
        ],
        "page_map": {},
    }
    with pytest.raises(SchemaViolation):
        encode_message(make("register", dup))
    dangling = {
        "app_id": "a",
        "skillset": [{"name": "click", "pages": ["*"]}],
        "page_map": {"/x": ["zoom"]},
    }
    with pytest.raises(SchemaViolation):
        encode_message(make("register", dangling))


def test_sequence_regression():
    check_seq(1, 2)
    with pytest.raises(SequenceRegression):
        check_seq(2, 2)
    with pytest.raises(SequenceRegression):
        check_seq(5, 3)
    msg = make("chat_request", {"text": "x"}, seq=4)
    with pytest.raises(SequenceRegression):
        decode_message(encode_message(msg), last_seq=4)
    assert decode_message(encode_message(msg), last_seq=3) == msg


def test_non_finite_json_rejected():
    with pytest.raises(MalformedFrame):
        decode_message('{"session_id": "s", "seq": NaN, "kind": "error", "payload": {}}')


def test_surrogate_text_rejected_at_encode():
    msg = make("chat_request", {"text": "bad \udcff surrogate"})
    with pytest.raises(SchemaViolation):
        encode_message(msg)


# ---------------------------------------------------------------------------
# Properties


_SAFE_TEXT = st.text(
    st.characters(blacklist_categories=("Cs",)), min_size=1, max_size=30
)


@st.composite
def wire_messages(draw):
    rng = random.Random(draw(st.integers(0, 2**32 - 1)))
    msg = random_message(rng)
    # Sprinkle hypothesis-generated unicode into the free-text fields.
    if msg.kind in ("chat_request", "chat_response"):
        return WireMessage(
            session_id=msg.session_id,
            seq=msg.seq,
            kind=msg.kind,
            payload={**msg.payload, "text": draw(_SAFE_TEXT)},
            correlation_id=msg.correlation_id,
        )
    return msg


@given(wire_messages())
@settings(max_examples=300, deadline=None)
def test_roundtrip_property(msg):
    assert decode_message(encode_message(msg)) == msg


@given(st.binary(max_size=2048))
@settings(max_examples=300, deadline=None)
def test_decoder_totality_on_bytes(blob):
    try:
        decode_message(blob)
    except ProtocolError:
        pass  # typed rejection is the contract; anything else would fail


@given(st.text(max_size=2048))
@settings(max_examples=300, deadline=None)
def test_decoder_totality_on_text(text):
    try:
        decode_message(text)
    except ProtocolError:
        pass
