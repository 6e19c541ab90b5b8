"""Per-session grounding state.

Each connected user gets one Session holding the latest tag-filtered
snapshot, the URL-filtered active function set (always including the
synthesized navigation action), a bounded chat memory, and an append-only
action log. Operations on one session are serialized by the gateway; there
is no shared mutable state between sessions.
"""

from __future__ import annotations

import secrets
import time
from collections import deque
from dataclasses import dataclass
from typing import Any, Iterable

from .observation import (
    DEFAULT_TAG_ALLOWLIST,
    AriaSnapshot,
    extract_nav_links,
    filter_by_tag,
)
from .registry import FunctionSpec, Registry, filter_for_url, synthesize_navigation_fn

DEFAULT_HISTORY_TURNS = 10


class SessionError(Exception):
    pass


class NoRegistry(SessionError):
    """Observation or agent run arrived before the register message."""


class CorrelationMismatch(SessionError):
    """Action result does not answer the paired request."""


@dataclass(frozen=True)
class ChatTurn:
    role: str  # "user" | "agent"
    text: str
    timestamp: float = 0.0

    def __post_init__(self) -> None:
        if self.role not in ("user", "agent"):
            raise ValueError(f"bad chat role {self.role!r}")
        if not self.text:
            raise ValueError("chat turn text must be non-empty")


@dataclass(frozen=True)
class ActionRecord:
    function_name: str
    arguments: dict
    correlation_id: str
    status: str
    detail: str | None
    timestamp: float


def new_session_id() -> str:
    return secrets.token_hex(16)


class Session:
    """Mutable per-user state; agents read immutable views of it."""

    def __init__(
        self,
        session_id: str | None = None,
        history_turns: int = DEFAULT_HISTORY_TURNS,
        tag_allowlist: Iterable[str] = DEFAULT_TAG_ALLOWLIST,
    ) -> None:
        self.id = session_id or new_session_id()
        self.history_turns = history_turns
        self.tag_allowlist = frozenset(tag_allowlist)
        self.registry: Registry | None = None
        self.current_url: str = ""
        self.latest_snapshot: AriaSnapshot | None = None
        self.chat_history: deque[ChatTurn] = deque(maxlen=history_turns)
        self.action_log: list[ActionRecord] = []
        self.observations_applied = 0
        self._navigate = synthesize_navigation_fn([])
        self._page_functions: tuple[FunctionSpec, ...] = ()

    # -- registry ----------------------------------------------------------

    def set_registry(self, registry: Registry) -> None:
        """Install or atomically replace the registry, refiltering in place."""
        self.registry = registry
        self._refilter()

    # -- observations ------------------------------------------------------

    def apply_observation(self, snapshot: AriaSnapshot) -> None:
        if self.registry is None:
            raise NoRegistry("observation received before register")
        filtered = filter_by_tag(snapshot, self.tag_allowlist)
        self.latest_snapshot = filtered
        self.current_url = filtered.url
        self._navigate = synthesize_navigation_fn(extract_nav_links(filtered))
        self._refilter()
        self.observations_applied += 1

    def _refilter(self) -> None:
        if self.registry is None:
            self._page_functions = ()
        else:
            self._page_functions = tuple(filter_for_url(self.registry, self.current_url))

    @property
    def active_functions(self) -> list[FunctionSpec]:
        """URL-filtered skillset plus the synthesized navigation action."""
        return [*self._page_functions, self._navigate]

    @property
    def navigate_spec(self) -> FunctionSpec:
        return self._navigate

    # -- chat memory -------------------------------------------------------

    def append_chat(self, turn: ChatTurn) -> None:
        self.chat_history.append(turn)

    # -- action log --------------------------------------------------------

    def record_action(
        self, request: dict, result: dict, timestamp: float | None = None
    ) -> ActionRecord:
        if request.get("correlation_id") != result.get("correlation_id"):
            raise CorrelationMismatch(
                f"result {result.get('correlation_id')!r} does not answer "
                f"request {request.get('correlation_id')!r}"
            )
        record = ActionRecord(
            function_name=request["function_name"],
            arguments=dict(request.get("arguments", {})),
            correlation_id=request["correlation_id"],
            status=result.get("status", "ok"),
            detail=result.get("detail"),
            timestamp=time.time() if timestamp is None else timestamp,
        )
        self.action_log.append(record)
        return record

    # -- introspection -----------------------------------------------------

    def debug_dump(self) -> dict[str, Any]:
        """JSON-friendly state dump for the debug endpoint and tests."""
        return {
            "id": self.id,
            "current_url": self.current_url,
            "registered": self.registry is not None,
            "active_functions": [s.name for s in self.active_functions],
            "navigate_targets": list(self._navigate.params[0].values or ()),
            "chat_history": [
                {"role": t.role, "text": t.text, "timestamp": t.timestamp}
                for t in self.chat_history
            ],
            "action_log": [
                {
                    "function_name": r.function_name,
                    "arguments": r.arguments,
                    "correlation_id": r.correlation_id,
                    "status": r.status,
                    "detail": r.detail,
                    "timestamp": r.timestamp,
                }
                for r in self.action_log
            ],
            "observations_applied": self.observations_applied,
            "snapshot_seq": self.latest_snapshot.captured_seq if self.latest_snapshot else None,
        }


def create_session(
    history_turns: int = DEFAULT_HISTORY_TURNS,
    tag_allowlist: Iterable[str] = DEFAULT_TAG_ALLOWLIST,
) -> Session:
    return Session(history_turns=history_turns, tag_allowlist=tag_allowlist)
