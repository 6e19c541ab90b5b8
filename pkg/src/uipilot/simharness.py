"""Headless frontend emulator and scenario runner.

A VirtualApp stands in for the browser: declarative pages with labeled
elements, functions with deterministic effects, and a current-URL/field
state. A Scenario drives one chat-and-action exchange against a live
backend over a real WebSocket and checks every expectation in order. The
runner validates every inbound frame against the wire protocol, so each
scenario doubles as a conformance check.
"""

from __future__ import annotations

import asyncio
import hashlib
import json
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

import websockets
import yaml

from . import protocol
from .observation import AriaElement
from .registry import NAVIGATE_FUNCTION, FunctionSpec, pattern_matches


class ScenarioError(Exception):
    pass


class StepMismatch(ScenarioError):
    """The agent did something other than what the step expects."""


class ProtocolFailure(ScenarioError):
    """The backend sent a frame the harness rejects."""


# ---------------------------------------------------------------------------
# Virtual application


@dataclass(frozen=True)
class Effect:
    """Deterministic state change executed when a function is called."""

    type: str  # set_field | navigate | add_element | remove_element | fail | noop
    params: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "Effect":
        data = dict(data)
        kind = data.pop("type", "noop")
        if kind not in ("set_field", "navigate", "add_element", "remove_element", "fail", "noop"):
            raise ScenarioError(f"unknown effect type {kind!r}")
        return cls(type=kind, params=data)


@dataclass(frozen=True)
class VirtualFunction:
    spec: FunctionSpec
    effect: Effect


class VirtualApp:
    """Pages, functions, and mutable UI state for one emulated frontend."""

    def __init__(
        self,
        app_id: str,
        initial_url: str,
        pages: Mapping[str, list[dict]],
        functions: list[VirtualFunction],
    ) -> None:
        self.app_id = app_id
        self.initial_url = initial_url
        self._page_templates = {url: [dict(e) for e in elements] for url, elements in pages.items()}
        for url, elements in self._page_templates.items():
            for element in elements:
                AriaElement.from_dict(element)  # fail fast on bad fixtures
        if initial_url not in self._page_templates:
            raise ScenarioError(f"initial_url {initial_url!r} is not a defined page")
        self.functions = list(functions)
        self.current_url = initial_url
        self.fields: dict[str, Any] = {}
        self.pages: dict[str, list[dict]] = {}
        self.reset()

    def reset(self) -> None:
        self.current_url = self.initial_url
        self.fields = {}
        self.pages = {url: [dict(e) for e in elements] for url, elements in self._page_templates.items()}

    # -- registration payload ------------------------------------------------

    def skillset(self) -> list[dict]:
        return [fn.spec.to_dict() for fn in self.functions]

    def page_map(self) -> dict[str, list[str]]:
        out: dict[str, list[str]] = {}
        for fn in self.functions:
            for pattern in fn.spec.pages:
                out.setdefault(pattern, []).append(fn.spec.name)
        return out

    def register_payload(self) -> dict:
        return {
            "app_id": self.app_id,
            "skillset": self.skillset(),
            "page_map": self.page_map(),
        }

    # -- observations ----------------------------------------------------------

    def observe(self) -> dict:
        return {
            "url": self.current_url,
            "elements": [dict(e) for e in self.pages[self.current_url]],
        }

    def state_digest(self) -> str:
        return hashlib.sha256(
            protocol.canonical_json(self.observe()).encode("utf-8")
        ).hexdigest()

    # -- action execution ---------------------------------------------------------

    def execute(self, name: str, args: Mapping[str, Any]) -> tuple[str, str | None, bool]:
        """Apply a function call; returns (status, detail, state_changed)."""
        before = (self.state_digest(), dict(self.fields))
        if name == NAVIGATE_FUNCTION:
            url = args.get("url")
            if url not in self.pages:
                return "failed", f"no page at {url!r}", False
            self.current_url = url
            changed = (self.state_digest(), dict(self.fields)) != before
            return "ok", None, changed
        fn = next((f for f in self.functions if f.spec.name == name), None)
        if fn is None:
            return "failed", f"unknown function {name!r}", False
        if not any(pattern_matches(p, self.current_url) for p in fn.spec.pages):
            return "failed", f"{name!r} is not available on {self.current_url}", False
        status, detail = self._apply_effect(fn.effect, args)
        changed = (self.state_digest(), dict(self.fields)) != before
        return status, detail, changed

    def _apply_effect(self, effect: Effect, args: Mapping[str, Any]) -> tuple[str, str | None]:
        p = effect.params
        if effect.type == "noop":
            return "ok", None
        if effect.type == "fail":
            return "failed", p.get("detail", "injected failure")
        if effect.type == "set_field":
            name = args.get(p["field_from"]) if "field_from" in p else p.get("field")
            if "value_from" in p:
                value = args.get(p["value_from"])
            elif "value_from_field" in p:
                value = self.fields.get(p["value_from_field"])
            else:
                value = p.get("value")
            if not name:
                return "failed", "set_field effect resolved no field name"
            self.fields[str(name)] = value
            return "ok", None
        if effect.type == "navigate":
            url = args.get(p.get("url_from", "url")) if "url" not in p else p["url"]
            if url not in self.pages:
                return "failed", f"no page at {url!r}"
            self.current_url = url
            return "ok", None
        if effect.type == "add_element":
            page = p.get("page", self.current_url)
            element = dict(p["element"])
            AriaElement.from_dict(element)
            self.pages.setdefault(page, []).append(element)
            return "ok", None
        if effect.type == "remove_element":
            label = p.get("aria_label")
            page = p.get("page", self.current_url)
            kept = [e for e in self.pages.get(page, []) if e.get("aria_label") != label]
            self.pages[page] = kept
            return "ok", None
        return "failed", f"unhandled effect {effect.type!r}"

    # -- loading ---------------------------------------------------------------

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "VirtualApp":
        functions = [
            VirtualFunction(
                spec=FunctionSpec.from_dict(item["spec"]),
                effect=Effect.from_dict(item.get("effect", {"type": "noop"})),
            )
            for item in data.get("functions", [])
        ]
        return cls(
            app_id=data.get("app_id", "app"),
            initial_url=data["initial_url"],
            pages=data.get("pages", {}),
            functions=functions,
        )

    @classmethod
    def from_file(cls, path: str | Path) -> "VirtualApp":
        return cls.from_dict(_load_doc(path))


# ---------------------------------------------------------------------------
# Scenario definition


@dataclass(frozen=True)
class SendChat:
    text: str


@dataclass(frozen=True)
class ExpectAction:
    name: str
    args: dict = field(default_factory=dict)  # value | {"contains": s} | "*"
    reply_status: str = "ok"
    reply_detail: str | None = None
    withhold: bool = False


@dataclass(frozen=True)
class ExpectChat:
    exact: str | None = None
    contains: str | None = None
    semantic: str | None = None


@dataclass(frozen=True)
class ExpectState:
    url: str | None = None
    field_name: str | None = None
    field_value: Any = None


@dataclass(frozen=True)
class PushObservation:
    force: bool = False


Step = SendChat | ExpectAction | ExpectChat | ExpectState | PushObservation


def _parse_step(data: Mapping[str, Any]) -> Step:
    if "send_chat" in data:
        body = data["send_chat"]
        return SendChat(text=body["text"] if isinstance(body, Mapping) else str(body))
    if "expect_action" in data:
        body = data["expect_action"]
        reply = data.get("reply", {})
        return ExpectAction(
            name=body["name"],
            args=dict(body.get("args", {})),
            reply_status=reply.get("status", "ok"),
            reply_detail=reply.get("detail"),
            withhold=bool(reply.get("withhold", False)),
        )
    if "expect_chat" in data:
        body = data["expect_chat"]
        return ExpectChat(
            exact=body.get("exact"), contains=body.get("contains"), semantic=body.get("semantic")
        )
    if "expect_state" in data:
        body = data["expect_state"]
        fld = body.get("field", {})
        return ExpectState(
            url=body.get("url"),
            field_name=fld.get("name") if isinstance(fld, Mapping) else None,
            field_value=fld.get("value") if isinstance(fld, Mapping) else None,
        )
    if "push_observation" in data:
        body = data["push_observation"] or {}
        return PushObservation(force=bool(body.get("force", False)))
    raise ScenarioError(f"step needs one of send_chat/expect_action/expect_chat/expect_state/push_observation: {sorted(data)}")


@dataclass
class Scenario:
    name: str
    app: VirtualApp
    steps: list[Step]
    isolation_token: str | None = None

    @classmethod
    def from_dict(cls, data: Mapping[str, Any], base_dir: Path | None = None) -> "Scenario":
        app_def = data["app"]
        if isinstance(app_def, str):
            path = Path(app_def)
            if base_dir is not None and not path.is_absolute():
                path = base_dir / path
            app = VirtualApp.from_file(path)
        else:
            app = VirtualApp.from_dict(app_def)
        return cls(
            name=data.get("name", "scenario"),
            app=app,
            steps=[_parse_step(s) for s in data.get("steps", [])],
            isolation_token=data.get("isolation_token"),
        )

    @classmethod
    def from_file(cls, path: str | Path) -> "Scenario":
        path = Path(path)
        return cls.from_dict(_load_doc(path), base_dir=path.parent)


def _load_doc(path: str | Path) -> dict:
    path = Path(path)
    text = path.read_text()
    if path.suffix in (".yaml", ".yml"):
        return yaml.safe_load(text)
    return json.loads(text)


# ---------------------------------------------------------------------------
# Reports


@dataclass
class StepReport:
    index: int
    kind: str
    ok: bool
    detail: str = ""
    skipped: bool = False
    elapsed_ms: float = 0.0

    def to_dict(self, timings: bool = True) -> dict:
        out = {
            "index": self.index,
            "kind": self.kind,
            "ok": self.ok,
            "detail": self.detail,
            "skipped": self.skipped,
        }
        if timings:
            out["elapsed_ms"] = round(self.elapsed_ms, 3)
        return out


@dataclass
class ScenarioReport:
    scenario: str
    session_id: str = ""
    ok: bool = True
    error: str | None = None
    steps: list[StepReport] = field(default_factory=list)
    chat_responses: list[str] = field(default_factory=list)
    actions: list[dict] = field(default_factory=list)
    statuses: list[dict] = field(default_factory=list)
    duration_ms: float = 0.0

    def to_dict(self, timings: bool = True) -> dict:
        out = {
            "scenario": self.scenario,
            "ok": self.ok,
            "error": self.error,
            "steps": [s.to_dict(timings=timings) for s in self.steps],
            "chat_responses": list(self.chat_responses),
            "actions": [dict(a) for a in self.actions],
            "statuses": [dict(s) for s in self.statuses],
        }
        if timings:
            out["session_id"] = self.session_id
            out["duration_ms"] = round(self.duration_ms, 3)
        return out

    def received_text(self) -> str:
        """Everything this scenario's connection received, for isolation checks."""
        return protocol.canonical_json(
            {
                "chat": self.chat_responses,
                "actions": self.actions,
                "statuses": self.statuses,
            }
        )


@dataclass
class BatchReport:
    ok: bool
    reports: list[ScenarioReport]
    contamination: list[str] = field(default_factory=list)

    def to_dict(self, timings: bool = True) -> dict:
        return {
            "ok": self.ok,
            "contamination": list(self.contamination),
            "scenarios": [r.to_dict(timings=timings) for r in self.reports],
        }


# ---------------------------------------------------------------------------
# Runner


def _match_arg(expected: Any, actual: Any) -> bool:
    if expected == "*":
        return True
    if isinstance(expected, Mapping) and "contains" in expected:
        return isinstance(actual, str) and expected["contains"] in actual
    return expected == actual


class _Client:
    """One scenario's WebSocket client with protocol bookkeeping."""

    def __init__(self, ws, report: ScenarioReport) -> None:
        self.ws = ws
        self.report = report
        self.session_id = ""
        self.out_seq = 0
        self.server_seq = 0
        self.last_pushed: str | None = None

    async def send(self, kind: str, payload: dict, correlation_id: str | None = None) -> None:
        self.out_seq += 1
        msg = protocol.WireMessage(
            session_id=self.session_id or "pending",
            seq=self.out_seq,
            kind=kind,
            payload=payload,
            correlation_id=correlation_id,
        )
        await self.ws.send(protocol.encode_message(msg).decode("utf-8"))

    async def recv(self, timeout: float) -> protocol.WireMessage:
        try:
            raw = await asyncio.wait_for(self.ws.recv(), timeout=timeout)
        except asyncio.TimeoutError:
            raise ScenarioError(f"no frame from backend within {timeout}s") from None
        try:
            msg = protocol.decode_message(raw, last_seq=self.server_seq)
        except protocol.ProtocolError as exc:
            raise ProtocolFailure(f"backend frame rejected: {exc}") from exc
        self.server_seq = msg.seq
        if self.session_id and msg.session_id != self.session_id:
            raise ProtocolFailure(
                f"frame for session {msg.session_id!r} on connection {self.session_id!r}"
            )
        if msg.kind == "agent_status":
            self.report.statuses.append(dict(msg.payload))
        return msg

    async def recv_until(self, kinds: tuple[str, ...], timeout: float) -> protocol.WireMessage:
        """Next frame of one of ``kinds``; statuses are recorded and skipped."""
        deadline = asyncio.get_running_loop().time() + timeout
        while True:
            remaining = deadline - asyncio.get_running_loop().time()
            if remaining <= 0:
                raise ScenarioError(f"no {'/'.join(kinds)} frame within {timeout}s")
            msg = await self.recv(remaining)
            if msg.kind in kinds:
                return msg
            if msg.kind == "agent_status":
                continue
            if msg.kind == "error":
                raise ProtocolFailure(f"backend error frame: {msg.payload}")
            raise StepMismatch(f"expected {'/'.join(kinds)}, backend sent {msg.kind}")


async def run_scenario(
    endpoint: str,
    scenario: Scenario,
    *,
    step_timeout: float = 10.0,
    semantic_enabled: bool = False,
) -> ScenarioReport:
    """Drive one scenario against a live backend; never raises on step failures."""
    report = ScenarioReport(scenario=scenario.name)
    app = scenario.app
    app.reset()
    started = time.perf_counter()
    try:
        async with websockets.connect(endpoint, open_timeout=step_timeout) as ws:
            client = _Client(ws, report)
            hello = await client.recv(step_timeout)
            if hello.kind != "hello":
                raise ProtocolFailure(f"first frame was {hello.kind}, not hello")
            client.session_id = hello.payload["session_id"]
            report.session_id = client.session_id
            await client.send("register", app.register_payload())
            await client.send("observation", app.observe())
            client.last_pushed = app.state_digest()

            for index, step in enumerate(scenario.steps):
                step_started = time.perf_counter()
                kind = type(step).__name__
                try:
                    skipped = await _run_step(
                        client, app, step, step_timeout, semantic_enabled, report
                    )
                    report.steps.append(
                        StepReport(
                            index=index,
                            kind=kind,
                            ok=True,
                            skipped=bool(skipped),
                            detail="skipped: no remote provider" if skipped else "",
                            elapsed_ms=(time.perf_counter() - step_started) * 1000,
                        )
                    )
                except ScenarioError as exc:
                    report.steps.append(
                        StepReport(
                            index=index,
                            kind=kind,
                            ok=False,
                            detail=f"{type(exc).__name__}: {exc}",
                            elapsed_ms=(time.perf_counter() - step_started) * 1000,
                        )
                    )
                    report.ok = False
                    report.error = f"step {index} ({kind}): {exc}"
                    break
    except (OSError, websockets.WebSocketException) as exc:
        report.ok = False
        report.error = f"connection failed: {exc}"
    report.duration_ms = (time.perf_counter() - started) * 1000
    return report


async def _run_step(
    client: _Client,
    app: VirtualApp,
    step: Step,
    timeout: float,
    semantic_enabled: bool,
    report: ScenarioReport,
) -> bool:
    """Execute one step; returns True when the step was skipped."""
    if isinstance(step, SendChat):
        await client.send("chat_request", {"text": step.text})
        return False

    if isinstance(step, ExpectAction):
        msg = await client.recv_until(("action_request", "chat_response"), timeout)
        if msg.kind == "chat_response":
            raise StepMismatch(
                f"expected action {step.name!r}, agent finished with chat: "
                f"{msg.payload.get('text', '')[:120]!r}"
            )
        payload = msg.payload
        report.actions.append(
            {"function_name": payload["function_name"], "arguments": payload["arguments"]}
        )
        actual_name = payload["function_name"]
        if actual_name != step.name:
            raise StepMismatch(f"expected action {step.name!r}, agent sent {actual_name!r}")
        actual_args = payload["arguments"]
        for arg_name, expected in step.args.items():
            if arg_name not in actual_args or not _match_arg(expected, actual_args[arg_name]):
                raise StepMismatch(
                    f"action {actual_name!r} arg {arg_name!r}: expected "
                    f"{expected!r}, got {actual_args.get(arg_name)!r}"
                )
        extra = set(actual_args) - set(step.args)
        if extra:
            raise StepMismatch(f"action {actual_name!r} carries unexpected args {sorted(extra)}")
        if step.withhold:
            return False
        if step.reply_status == "ok":
            status, detail, changed = app.execute(actual_name, actual_args)
        else:
            status, detail, changed = step.reply_status, step.reply_detail or "injected failure", False
        if changed:
            # Push on any virtual-state change, even when the serialized
            # elements are identical; the backend's dedupe absorbs those.
            await client.send("observation", app.observe())
            client.last_pushed = app.state_digest()
        result_payload: dict[str, Any] = {
            "correlation_id": payload["correlation_id"],
            "status": status,
        }
        if detail:
            result_payload["detail"] = detail
        await client.send("action_result", result_payload, correlation_id=payload["correlation_id"])
        return False

    if isinstance(step, ExpectChat):
        if step.semantic is not None and not semantic_enabled:
            # Semantic grading needs a live model; reserved but skipped here.
            await client.recv_until(("chat_response",), timeout)
            return True
        msg = await client.recv_until(("chat_response",), timeout)
        text = msg.payload["text"]
        report.chat_responses.append(text)
        if step.exact is not None and text != step.exact:
            raise StepMismatch(f"chat text {text!r} != expected {step.exact!r}")
        if step.contains is not None and step.contains not in text:
            raise StepMismatch(f"chat text {text!r} does not contain {step.contains!r}")
        return False

    if isinstance(step, ExpectState):
        if step.url is not None and app.current_url != step.url:
            raise StepMismatch(f"virtual url is {app.current_url!r}, expected {step.url!r}")
        if step.field_name is not None:
            actual = app.fields.get(step.field_name)
            if not _match_arg(step.field_value, actual):
                raise StepMismatch(
                    f"virtual field {step.field_name!r} is {actual!r}, "
                    f"expected {step.field_value!r}"
                )
        return False

    if isinstance(step, PushObservation):
        if step.force:
            await client.send("observation", app.observe())
            client.last_pushed = app.state_digest()
        else:
            await _push_if_changed(client, app)
        return False

    raise ScenarioError(f"unhandled step {step!r}")


async def _push_if_changed(client: _Client, app: VirtualApp) -> None:
    # The client mirrors the shim's contract: one observation per state change.
    digest = app.state_digest()
    if client.last_pushed != digest:
        await client.send("observation", app.observe())
        client.last_pushed = digest


async def run_concurrent(
    endpoint: str,
    scenarios: list[Scenario],
    parallelism: int = 4,
    *,
    step_timeout: float = 10.0,
) -> BatchReport:
    """Run scenarios against one server in parallel and check cross-talk."""
    if parallelism < 1:
        raise ValueError("parallelism must be >= 1")
    semaphore = asyncio.Semaphore(parallelism)

    async def bounded(sc: Scenario) -> ScenarioReport:
        async with semaphore:
            return await run_scenario(endpoint, sc, step_timeout=step_timeout)

    reports = list(await asyncio.gather(*(bounded(sc) for sc in scenarios)))
    contamination = []
    for i, report in enumerate(reports):
        blob = report.received_text()
        own_token = scenarios[i].isolation_token
        for j, other in enumerate(scenarios):
            # Identical tokens (e.g. copies of one scenario) cannot
            # distinguish the two streams, so they prove nothing.
            if i == j or not other.isolation_token or other.isolation_token == own_token:
                continue
            if other.isolation_token in blob:
                contamination.append(
                    f"scenario {reports[i].scenario!r} observed token of {other.name!r}"
                )
    ok = all(r.ok for r in reports) and not contamination
    return BatchReport(ok=ok, reports=reports, contamination=contamination)
