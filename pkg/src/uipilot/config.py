"""Server configuration, loadable from a JSON or YAML file."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

import yaml

from .observation import DEFAULT_TAG_ALLOWLIST


@dataclass(frozen=True)
class ServerConfig:
    host: str = "127.0.0.1"
    port: int = 8765
    ws_path: str = "/agent"
    action_timeout: float = 10.0
    session_grace: float = 60.0
    queue_depth: int = 4
    history_turns: int = 10
    max_steps: int = 8
    max_invalid: int = 2
    tag_allowlist: tuple[str, ...] = tuple(sorted(DEFAULT_TAG_ALLOWLIST))
    provider: dict = field(default_factory=dict)
    tools: tuple[dict, ...] = ()  # extra tool definitions (http transport)
    builtin_tools: bool = True
    debug: bool = False
    event_log_path: str | None = None

    @classmethod
    def from_dict(cls, data: Mapping[str, Any], base_dir: Path | None = None) -> "ServerConfig":
        kwargs: dict[str, Any] = {}
        for key in (
            "host",
            "port",
            "ws_path",
            "action_timeout",
            "session_grace",
            "queue_depth",
            "history_turns",
            "max_steps",
            "max_invalid",
            "builtin_tools",
            "debug",
            "event_log_path",
        ):
            if key in data:
                kwargs[key] = data[key]
        if "tag_allowlist" in data:
            kwargs["tag_allowlist"] = tuple(data["tag_allowlist"])
        if "provider" in data:
            provider = dict(data["provider"])
            script = provider.get("script")
            if base_dir is not None and script and not Path(script).is_absolute():
                provider["script"] = str(base_dir / script)
            kwargs["provider"] = provider
        if "tools" in data:
            kwargs["tools"] = tuple(dict(t) for t in data["tools"])
        return cls(**kwargs)

    @classmethod
    def from_file(cls, path: str | Path) -> "ServerConfig":
        path = Path(path)
        text = path.read_text()
        data = yaml.safe_load(text) if path.suffix in (".yaml", ".yml") else json.loads(text)
        return cls.from_dict(data or {}, base_dir=path.parent)
