"""Structured JSON-lines event log and post-hoc trace checks.

Every server emits one event stream: frames in/out, registry installs,
observation applies, and per-step agent progress. The grounding checker
replays those logs and re-derives, for every dispatched action, the function
set that was active under the snapshot grounding that step.
"""

from __future__ import annotations

import io
import json
import threading
import time
from pathlib import Path
from typing import Any, Iterable

from .registry import (
    NAVIGATE_FUNCTION,
    FunctionSpec,
    PageFunctionMap,
    build_registry,
    filter_for_url,
)


class EventLog:
    """Thread-safe JSONL writer; with no sink it records in memory only."""

    def __init__(self, path: str | Path | None = None) -> None:
        self._lock = threading.Lock()
        self._fh: io.TextIOBase | None = None
        self.path = Path(path) if path else None
        if self.path:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            self._fh = open(self.path, "a", encoding="utf-8")
        self.events: list[dict] = []

    def emit(self, event: str, **fields: Any) -> dict:
        record = {"ts": time.time(), "event": event, **fields}
        with self._lock:
            self.events.append(record)
            if self._fh is not None:
                self._fh.write(json.dumps(record, ensure_ascii=False) + "\n")
                self._fh.flush()
        return record

    def close(self) -> None:
        with self._lock:
            if self._fh is not None:
                self._fh.close()
                self._fh = None


def read_events(path: str | Path) -> list[dict]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                out.append(json.loads(line))
    return out


class GroundingViolation(Exception):
    pass


def check_grounding(events: Iterable[dict]) -> int:
    """Verify every dispatched action against its step's snapshot.

    For each agent_step event carrying a web action, rebuild the session's
    registry from the latest registry event and recompute the visible set for
    the step's snapshot URL. The dispatched function must be in that set (or
    be the synthesized navigation action, whose target must then be one of
    the snapshot's links). Returns the number of action steps checked.
    """
    registries: dict[str, Any] = {}
    checked = 0
    for event in events:
        kind = event.get("event")
        session = event.get("session")
        if kind == "registry":
            specs = [FunctionSpec.from_dict(s) for s in event["skillset"]]
            page_map = PageFunctionMap.from_dict(event["page_map"])
            registries[session] = build_registry(specs, page_map)
        elif kind == "agent_step" and event.get("action") and event.get("agent") == "web":
            registry = registries.get(session)
            if registry is None:
                raise GroundingViolation(f"step before registry in session {session}")
            url = event.get("snapshot_url")
            action = event["action"]
            name = action["name"]
            allowed = {s.name for s in filter_for_url(registry, url)}
            if name == NAVIGATE_FUNCTION:
                targets = event.get("nav_targets") or []
                dest = action.get("args", {}).get("url")
                if dest not in targets:
                    raise GroundingViolation(
                        f"session {session}: navigate to {dest!r} not among "
                        f"snapshot links {targets} (url={url!r})"
                    )
            elif name not in allowed:
                raise GroundingViolation(
                    f"session {session}: dispatched {name!r} not active on {url!r} "
                    f"(active: {sorted(allowed)})"
                )
            checked += 1
    return checked


def check_grounding_files(paths: Iterable[str | Path]) -> int:
    checked = 0
    for path in paths:
        checked += check_grounding(read_events(path))
    return checked
