"""WebSocket gateway: handshake, event dispatch, and action correlation.

Each connection gets (or resumes) a session. Inbound frames are processed in
arrival order per session; observations are deduplicated by content hash
before they touch session state; chat requests queue agent runs on a
per-session worker; action results resolve the single pending action the web
agent is awaiting. Sessions survive a disconnect for a grace period.
"""

from __future__ import annotations

import asyncio
import contextlib
import hashlib
import json
import uuid
from dataclasses import dataclass, field
from typing import Any

from fastapi import FastAPI, HTTPException, WebSocket, WebSocketDisconnect

from . import protocol
from .config import ServerConfig
from .observation import AriaSnapshot, filter_by_tag
from .orchestrator import (
    ActionTimeout,
    ConnectionClosed,
    DispatchError,
    Orchestrator,
    OrchestratorConfig,
)
from .providers import ScriptedProvider, load_provider
from .registry import FunctionSpec, PageFunctionMap, ParamSpec, RegistryError, build_registry
from .session import NoRegistry, Session
from .tools import ToolBus, ToolSpec, default_bus
from .tracelog import EventLog


class GatewayError(Exception):
    pass


class PendingActionExists(DispatchError):
    """A second frontend action was dispatched while one is still pending."""


@dataclass
class ConnectionState:
    session_id: str
    last_observation_hash: str | None = None
    pending_actions: dict[str, float] = field(default_factory=dict)
    inbound_seq: int = 0
    outbound_seq: int = 0


class Connection:
    """One live WebSocket plus its per-direction protocol state."""

    def __init__(self, ws: Any, runtime: "SessionRuntime") -> None:
        self.ws = ws
        self.runtime = runtime
        self.state = ConnectionState(session_id=runtime.session.id)
        self._send_lock = asyncio.Lock()

    async def send(
        self, kind: str, payload: dict, correlation_id: str | None = None
    ) -> protocol.WireMessage:
        async with self._send_lock:
            self.state.outbound_seq += 1
            msg = protocol.WireMessage(
                session_id=self.state.session_id,
                seq=self.state.outbound_seq,
                kind=kind,
                payload=payload,
                correlation_id=correlation_id,
            )
            frame = protocol.encode_message(msg)
            await self.ws.send_text(frame.decode("utf-8"))
        return msg


class SessionRuntime:
    """Everything the gateway keeps per session beyond the Session itself."""

    def __init__(self, session: Session, queue_depth: int) -> None:
        self.session = session
        self.connection: Connection | None = None
        self.run_queue: asyncio.Queue = asyncio.Queue(maxsize=queue_depth)
        self.runner_task: asyncio.Task | None = None
        self.pending: dict[str, asyncio.Future] = {}
        self.obs_event = asyncio.Event()
        self.grace_handle: asyncio.TimerHandle | None = None
        self.observations_received = 0
        self.observations_deduped = 0

    def notify_observation(self) -> None:
        event = self.obs_event
        self.obs_event = asyncio.Event()
        event.set()


class SessionDispatcher:
    """Binds the orchestrator's action contract to one session."""

    def __init__(self, gateway: "Gateway", runtime: SessionRuntime) -> None:
        self.gateway = gateway
        self.runtime = runtime

    async def dispatch_action(self, name: str, args: dict) -> dict:
        return await self.gateway.dispatch_action(self.runtime, name, args)

    async def wait_for_observation(self, after_seq: int, timeout: float) -> bool:
        return await self.gateway.wait_for_observation(self.runtime, after_seq, timeout)


class Gateway:
    def __init__(
        self,
        config: ServerConfig,
        provider: Any,
        bus: ToolBus,
        event_log: EventLog | None = None,
    ) -> None:
        self.config = config
        self.provider = provider
        self.bus = bus
        self.log = event_log or EventLog(config.event_log_path)
        self.orchestrator = Orchestrator(
            provider,
            bus,
            OrchestratorConfig(
                max_steps=config.max_steps,
                max_invalid=config.max_invalid,
                action_timeout=config.action_timeout,
            ),
            event_log=self.log,
        )
        self.runtimes: dict[str, SessionRuntime] = {}

    # -- connection lifecycle ------------------------------------------------

    async def attach(self, ws: Any, resume_id: str | None = None) -> Connection:
        runtime = self.runtimes.get(resume_id) if resume_id else None
        resumed = runtime is not None
        if runtime is None:
            session = Session(
                history_turns=self.config.history_turns,
                tag_allowlist=self.config.tag_allowlist,
            )
            runtime = SessionRuntime(session, self.config.queue_depth)
            self.runtimes[session.id] = runtime
            runtime.runner_task = asyncio.create_task(self._run_worker(runtime))
        elif runtime.grace_handle is not None:
            runtime.grace_handle.cancel()
            runtime.grace_handle = None
        conn = Connection(ws, runtime)
        runtime.connection = conn
        await conn.send(
            "hello", {"session_id": runtime.session.id, "resumed": resumed}
        )
        self.log.emit("session_attached", session=runtime.session.id, resumed=resumed)
        return conn

    async def detach(self, conn: Connection) -> None:
        runtime = conn.runtime
        if runtime.connection is not conn:
            return
        runtime.connection = None
        for corr, fut in list(runtime.pending.items()):
            if not fut.done():
                fut.set_exception(ConnectionClosed(f"connection lost with {corr} pending"))
        conn.state.pending_actions.clear()
        loop = asyncio.get_running_loop()
        runtime.grace_handle = loop.call_later(
            self.config.session_grace, self._drop_session, runtime.session.id
        )
        self.log.emit("session_detached", session=runtime.session.id)

    def _drop_session(self, session_id: str) -> None:
        runtime = self.runtimes.pop(session_id, None)
        if runtime is None:
            return
        if runtime.runner_task is not None:
            runtime.runner_task.cancel()
        self.log.emit("session_dropped", session=session_id)

    async def shutdown(self) -> None:
        for runtime in list(self.runtimes.values()):
            if runtime.grace_handle is not None:
                runtime.grace_handle.cancel()
            if runtime.runner_task is not None:
                runtime.runner_task.cancel()
                with contextlib.suppress(asyncio.CancelledError):
                    await runtime.runner_task
        self.runtimes.clear()
        self.log.close()

    # -- inbound frames --------------------------------------------------------

    async def handle_frame(self, conn: Connection, raw: str | bytes) -> None:
        try:
            msg = protocol.decode_message(raw, last_seq=conn.state.inbound_seq)
        except protocol.ProtocolError as exc:
            await self._protocol_error(conn, exc, raw)
            return
        conn.state.inbound_seq = msg.seq
        if msg.session_id != conn.state.session_id:
            await self._send_error(
                conn, "session_mismatch",
                f"frame names session {msg.session_id!r}", msg.seq,
            )
            return
        self.log.emit(
            "frame_in", session=conn.state.session_id, kind=msg.kind, seq=msg.seq
        )
        handler = {
            "register": self._on_register,
            "observation": self._on_observation,
            "chat_request": self._on_chat_request,
            "action_result": self._on_action_result,
        }.get(msg.kind)
        if handler is None:
            await self._send_error(
                conn, "unexpected_kind", f"backend does not accept {msg.kind!r}", msg.seq
            )
            return
        await handler(conn, msg)

    async def _protocol_error(
        self, conn: Connection, exc: protocol.ProtocolError, raw: str | bytes
    ) -> None:
        payload: dict[str, Any] = {"code": exc.code, "detail": str(exc)}
        seq = _best_effort_seq(raw)
        if seq is not None:
            payload["offending_seq"] = seq
        self.log.emit(
            "frame_rejected", session=conn.state.session_id, code=exc.code, detail=str(exc)
        )
        with contextlib.suppress(Exception):
            await conn.send("error", payload)

    async def _send_error(
        self, conn: Connection, code: str, detail: str, offending_seq: int | None = None
    ) -> None:
        payload: dict[str, Any] = {"code": code, "detail": detail}
        if offending_seq is not None:
            payload["offending_seq"] = offending_seq
        self.log.emit(
            "frame_rejected", session=conn.state.session_id, code=code, detail=detail
        )
        with contextlib.suppress(Exception):
            await conn.send("error", payload)

    async def _on_register(self, conn: Connection, msg: protocol.WireMessage) -> None:
        runtime = conn.runtime
        try:
            specs = [FunctionSpec.from_dict(s) for s in msg.payload["skillset"]]
            registry = build_registry(specs, PageFunctionMap.from_dict(msg.payload["page_map"]))
        except RegistryError as exc:
            await self._send_error(conn, "register_rejected", str(exc), msg.seq)
            return
        runtime.session.set_registry(registry)
        dump = registry.to_dict()
        self.log.emit(
            "registry",
            session=runtime.session.id,
            app_id=msg.payload.get("app_id"),
            skillset=dump["skillset"],
            page_map=dump["page_map"],
        )

    async def _on_observation(self, conn: Connection, msg: protocol.WireMessage) -> None:
        runtime = conn.runtime
        runtime.observations_received += 1
        snapshot = AriaSnapshot.from_payload(msg.payload, captured_seq=msg.seq)
        filtered = filter_by_tag(snapshot, runtime.session.tag_allowlist)
        digest = hashlib.sha256(
            protocol.canonical_json(filtered.to_payload()).encode("utf-8")
        ).hexdigest()
        if digest == conn.state.last_observation_hash:
            runtime.observations_deduped += 1
            self.log.emit(
                "observation_deduped", session=runtime.session.id, seq=msg.seq, hash=digest
            )
            return
        try:
            runtime.session.apply_observation(filtered)
        except NoRegistry as exc:
            await self._send_error(conn, "no_registry", str(exc), msg.seq)
            return
        conn.state.last_observation_hash = digest
        runtime.notify_observation()
        self.log.emit(
            "observation_applied",
            session=runtime.session.id,
            seq=msg.seq,
            url=filtered.url,
            hash=digest,
        )

    async def _on_chat_request(self, conn: Connection, msg: protocol.WireMessage) -> None:
        runtime = conn.runtime
        try:
            runtime.run_queue.put_nowait((msg.payload["text"], msg.correlation_id))
        except asyncio.QueueFull:
            await self._send_error(
                conn, "queue_full",
                f"run queue holds {self.config.queue_depth} goals", msg.seq,
            )

    async def _on_action_result(self, conn: Connection, msg: protocol.WireMessage) -> None:
        runtime = conn.runtime
        corr = msg.payload["correlation_id"]
        fut = runtime.pending.get(corr)
        if fut is None or fut.done():
            await self._send_error(
                conn, "unknown_correlation",
                f"no pending action with correlation_id {corr!r}", msg.seq,
            )
            return
        fut.set_result(dict(msg.payload))

    # -- agent-facing operations -------------------------------------------------

    async def dispatch_action(self, runtime: SessionRuntime, name: str, args: dict) -> dict:
        conn = runtime.connection
        if conn is None:
            raise ConnectionClosed(f"session {runtime.session.id} has no live connection")
        if runtime.pending:
            raise PendingActionExists(
                f"session {runtime.session.id} already awaits {sorted(runtime.pending)}"
            )
        corr = uuid.uuid4().hex
        loop = asyncio.get_running_loop()
        fut: asyncio.Future = loop.create_future()
        runtime.pending[corr] = fut
        conn.state.pending_actions[corr] = loop.time() + self.config.action_timeout
        try:
            await conn.send(
                "action_request",
                {"function_name": name, "arguments": args, "correlation_id": corr},
                correlation_id=corr,
            )
            payload = await asyncio.wait_for(fut, timeout=self.config.action_timeout)
        except asyncio.TimeoutError:
            raise ActionTimeout(
                f"no result for {name!r} within {self.config.action_timeout}s"
            ) from None
        except (ConnectionClosed, ActionTimeout):
            raise
        except Exception as exc:
            raise ConnectionClosed(f"send failed for {name!r}: {exc}") from exc
        finally:
            runtime.pending.pop(corr, None)
            conn.state.pending_actions.pop(corr, None)
        return payload

    async def wait_for_observation(
        self, runtime: SessionRuntime, after_seq: int, timeout: float
    ) -> bool:
        loop = asyncio.get_running_loop()
        deadline = loop.time() + timeout
        while True:
            snapshot = runtime.session.latest_snapshot
            if snapshot is not None and snapshot.captured_seq > after_seq:
                return True
            remaining = deadline - loop.time()
            if remaining <= 0:
                return False
            event = runtime.obs_event
            try:
                await asyncio.wait_for(event.wait(), timeout=remaining)
            except asyncio.TimeoutError:
                return False

    # -- per-session run worker ----------------------------------------------------

    async def _run_worker(self, runtime: SessionRuntime) -> None:
        while True:
            goal, correlation_id = await runtime.run_queue.get()
            dispatcher = SessionDispatcher(self, runtime)

            async def send_status(
                agent: str, step: int, action: str | None = None, detail: str | None = None
            ) -> None:
                conn = runtime.connection
                if conn is None:
                    return
                payload: dict[str, Any] = {"agent": agent, "step": step}
                if action is not None:
                    payload["action"] = action
                if detail is not None:
                    payload["detail"] = detail
                with contextlib.suppress(Exception):
                    await conn.send("agent_status", payload, correlation_id=correlation_id)

            try:
                text = await self.orchestrator.handle_goal(
                    runtime.session, goal, dispatcher, send_status
                )
            except asyncio.CancelledError:
                raise
            except Exception as exc:  # a run must never kill the worker
                self.log.emit(
                    "run_crashed",
                    session=runtime.session.id,
                    error=f"{type(exc).__name__}: {exc}",
                )
                text = "Sorry - something went wrong while working on that."
            conn = runtime.connection
            if conn is not None:
                with contextlib.suppress(Exception):
                    await conn.send("chat_response", {"text": text}, correlation_id=correlation_id)

    # -- introspection ----------------------------------------------------------------

    def session_count(self) -> int:
        return len(self.runtimes)

    def debug_dump(self, session_id: str) -> dict | None:
        runtime = self.runtimes.get(session_id)
        if runtime is None:
            return None
        dump = runtime.session.debug_dump()
        dump.update(
            {
                "connected": runtime.connection is not None,
                "observations_received": runtime.observations_received,
                "observations_deduped": runtime.observations_deduped,
                "pending_actions": sorted(runtime.pending),
                "queued_goals": runtime.run_queue.qsize(),
            }
        )
        return dump


def _best_effort_seq(raw: str | bytes) -> int | None:
    try:
        if isinstance(raw, (bytes, bytearray)):
            raw = bytes(raw).decode("utf-8")
        data = json.loads(raw)
        seq = data.get("seq") if isinstance(data, dict) else None
        return seq if isinstance(seq, int) and not isinstance(seq, bool) else None
    except Exception:
        return None


def build_bus(config: ServerConfig) -> ToolBus:
    bus = default_bus() if config.builtin_tools else ToolBus()
    for entry in config.tools:
        spec = ToolSpec(
            name=entry["name"],
            description=entry.get("description", ""),
            params=tuple(ParamSpec.from_dict(p) for p in entry.get("params", [])),
            transport=entry.get("transport", "http"),
            endpoint=entry.get("endpoint"),
        )
        bus.register_tool(spec)
    return bus


def create_app(
    config: ServerConfig | None = None,
    provider: Any | None = None,
    bus: ToolBus | None = None,
    event_log: EventLog | None = None,
) -> FastAPI:
    """Assemble the FastAPI app; provider/bus may be injected for tests."""
    config = config or ServerConfig()
    if provider is None:
        provider = load_provider(config.provider) if config.provider else ScriptedProvider([])
    if bus is None:
        bus = build_bus(config)
    gateway = Gateway(config, provider, bus, event_log)

    @contextlib.asynccontextmanager
    async def lifespan(app: FastAPI):
        yield
        await gateway.shutdown()

    app = FastAPI(title="uipilot gateway", lifespan=lifespan)
    app.state.gateway = gateway

    @app.websocket(config.ws_path)
    async def agent_socket(websocket: WebSocket) -> None:
        await websocket.accept()
        conn = await gateway.attach(websocket, websocket.query_params.get("session"))
        try:
            while True:
                message = await websocket.receive()
                if message["type"] == "websocket.disconnect":
                    break
                raw = message.get("text")
                if raw is None:
                    raw = message.get("bytes") or b""
                await gateway.handle_frame(conn, raw)
        except WebSocketDisconnect:
            pass
        finally:
            await gateway.detach(conn)

    @app.get("/health")
    async def health() -> dict:
        return {"status": "ok", "sessions": gateway.session_count()}

    if config.debug:

        @app.get("/debug/sessions")
        async def debug_sessions() -> dict:
            return {"sessions": sorted(gateway.runtimes)}

        @app.get("/debug/sessions/{session_id}")
        async def debug_session(session_id: str) -> dict:
            dump = gateway.debug_dump(session_id)
            if dump is None:
                raise HTTPException(status_code=404, detail="unknown session")
            return dump

    return app
