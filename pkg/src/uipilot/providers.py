"""Language-model completion with tool calling.

Two providers share one contract: a deterministic scripted provider driven by
declarative fixture files (so the whole suite runs with no network and no
live model), and a remote JSON-over-HTTP provider speaking a
chat-completions-style API for live use.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Protocol, Sequence

import httpx
import yaml

from .registry import FunctionSpec, ParamSpec
from .session import ChatTurn
from .tools import ToolSpec

MODES = ("react_step", "cot_answer", "route")


class ProviderError(Exception):
    pass


class ProviderUnavailable(ProviderError):
    """Remote transport failed or returned garbage."""


class ScriptExhausted(ProviderError):
    """The scripted provider has no entry for this call."""


@dataclass(frozen=True)
class AgentPrompt:
    system: str
    turns: tuple[ChatTurn, ...]
    observation_text: str
    tools: tuple[Any, ...]  # FunctionSpec | ToolSpec
    mode: str
    scratchpad: str = ""  # prior steps and tool results, rendered as text

    def __post_init__(self) -> None:
        if self.mode not in MODES:
            raise ValueError(f"unknown prompt mode {self.mode!r}")
        if self.mode == "react_step" and not self.tools:
            raise ValueError("react_step prompts need a non-empty tool list")
        object.__setattr__(self, "turns", tuple(self.turns))
        object.__setattr__(self, "tools", tuple(self.tools))


@dataclass(frozen=True)
class Completion:
    variant: str  # "tool_call" | "final"
    name: str | None = None
    args: dict | None = None
    text: str | None = None
    reasoning: str | None = None

    def __post_init__(self) -> None:
        if self.variant == "tool_call":
            if not self.name or self.args is None:
                raise ValueError("tool_call completion needs name and args")
        elif self.variant == "final":
            if self.text is None:
                raise ValueError("final completion needs text")
        else:
            raise ValueError(f"unknown completion variant {self.variant!r}")


def _tool_signature(tool: Any) -> str:
    parts = []
    for p in tool.params:
        kind = p.kind
        if kind == "enum":
            kind = "enum{" + ", ".join(p.values or ()) + "}"
        suffix = "" if p.required else "?"
        parts.append(f"{p.name}{suffix}: {kind}")
    return f"{tool.name}({', '.join(parts)})"


def render_prompt(prompt: AgentPrompt) -> str:
    """Deterministic flat text for scripted matching and remote transport."""
    lines = ["[system]", prompt.system, "", "[conversation]"]
    for turn in prompt.turns:
        lines.append(f"{turn.role}: {turn.text}")
    lines += ["", "[observation]", prompt.observation_text or "(none)"]
    lines += ["", "[tools]"]
    if prompt.tools:
        for tool in prompt.tools:
            lines.append(f"- {_tool_signature(tool)}: {tool.description}")
    else:
        lines.append("(none)")
    if prompt.scratchpad:
        lines += ["", "[steps]", prompt.scratchpad]
    return "\n".join(lines)


class Provider(Protocol):
    async def complete(self, prompt: AgentPrompt, session_id: str = "default") -> Completion:
        ...


# ---------------------------------------------------------------------------
# Scripted provider


REPEAT_FOREVER = -1


def _completion_from_spec(data: Mapping[str, Any]) -> Completion:
    if "tool_call" in data:
        body = data["tool_call"]
        return Completion(
            variant="tool_call",
            name=body.get("name"),
            args=dict(body.get("args", {})),
            reasoning=body.get("reasoning"),
        )
    if "final" in data:
        body = data["final"]
        return Completion(
            variant="final", text=body.get("text"), reasoning=body.get("reasoning")
        )
    raise ValueError(f"script response needs 'tool_call' or 'final', got {sorted(data)}")


@dataclass(frozen=True)
class ScriptEntry:
    mode: str
    response: Completion
    match: str | None = None
    repeat: int = 1  # REPEAT_FOREVER never advances the cursor

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "ScriptEntry":
        repeat = data.get("repeat", 1)
        if repeat == "forever":
            repeat = REPEAT_FOREVER
        return cls(
            mode=data["mode"],
            response=_completion_from_spec(data["response"]),
            match=data.get("match"),
            repeat=int(repeat),
        )


@dataclass(frozen=True)
class Script:
    key: str
    entries: tuple[ScriptEntry, ...]
    match: str | None = None  # selects this script when found in the prompt

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "Script":
        return cls(
            key=data["key"],
            match=data.get("match"),
            entries=tuple(ScriptEntry.from_dict(e) for e in data.get("entries", [])),
        )


class ScriptedProvider:
    """Pure function of (mode, matching key over the prompt, call index).

    The provider holds one or more keyed scripts. Each call selects the first
    script whose match string occurs in the rendered prompt (a script without
    a match string is a catch-all), then consumes that script's next entry for
    the calling session. Identical call sequences produce identical
    completions.
    """

    def __init__(self, scripts: Sequence[Script]) -> None:
        self.scripts = list(scripts)
        self._cursors: dict[tuple[str, str], tuple[int, int]] = {}

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "ScriptedProvider":
        scripts = [Script.from_dict(s) for s in data.get("scripts", [])]
        return cls(scripts)

    @classmethod
    def from_file(cls, path: str | Path) -> "ScriptedProvider":
        text = Path(path).read_text()
        data = yaml.safe_load(text) if str(path).endswith((".yaml", ".yml")) else json.loads(text)
        return cls.from_dict(data)

    def reset(self, session_id: str | None = None) -> None:
        if session_id is None:
            self._cursors.clear()
        else:
            for key in [k for k in self._cursors if k[0] == session_id]:
                del self._cursors[key]

    def _select(self, rendered: str) -> Script:
        for script in self.scripts:
            if script.match is None or script.match in rendered:
                return script
        raise ScriptExhausted("no script key matches the prompt")

    async def complete(self, prompt: AgentPrompt, session_id: str = "default") -> Completion:
        rendered = render_prompt(prompt)
        script = self._select(rendered)
        cursor_key = (session_id, script.key)
        index, uses = self._cursors.get(cursor_key, (0, 0))
        if index >= len(script.entries):
            raise ScriptExhausted(
                f"script {script.key!r} has no entry for call {index} (mode={prompt.mode})"
            )
        entry = script.entries[index]
        if entry.mode != prompt.mode:
            raise ScriptExhausted(
                f"script {script.key!r} entry {index} expects mode {entry.mode!r}, "
                f"call is {prompt.mode!r}"
            )
        if entry.match is not None and entry.match not in rendered:
            raise ScriptExhausted(
                f"script {script.key!r} entry {index} requires {entry.match!r} in the prompt"
            )
        uses += 1
        if entry.repeat != REPEAT_FOREVER and uses >= entry.repeat:
            self._cursors[cursor_key] = (index + 1, 0)
        else:
            self._cursors[cursor_key] = (index, uses)
        return entry.response


# ---------------------------------------------------------------------------
# Remote provider (chat-completions-style JSON over HTTP)


@dataclass(frozen=True)
class RemoteProviderConfig:
    endpoint: str
    model: str = "default"
    api_key_env: str | None = None
    timeout: float = 30.0


def _param_schema(p: ParamSpec) -> dict:
    if p.kind == "enum":
        schema: dict[str, Any] = {"type": "string", "enum": list(p.values or ())}
    else:
        schema = {"type": {"string": "string", "number": "number", "boolean": "boolean"}[p.kind]}
    if p.description:
        schema["description"] = p.description
    return schema


def tool_definition(tool: FunctionSpec | ToolSpec) -> dict:
    return {
        "type": "function",
        "function": {
            "name": tool.name,
            "description": tool.description,
            "parameters": {
                "type": "object",
                "properties": {p.name: _param_schema(p) for p in tool.params},
                "required": [p.name for p in tool.params if p.required],
            },
        },
    }


_MODE_INSTRUCTIONS = {
    "react_step": (
        "Decide the next step. Either call exactly one tool or answer with a "
        "short final statement when the goal is complete."
    ),
    "cot_answer": "Reason step by step, then give a concise final answer for the user.",
    "route": (
        'Output a JSON object {"stages": [...]} choosing an ordered subset of '
        '["web", "analysis"] for this goal. Output JSON only.'
    ),
}


class RemoteProvider:
    def __init__(self, config: RemoteProviderConfig, transport: httpx.AsyncBaseTransport | None = None) -> None:
        self.config = config
        self._transport = transport

    def _headers(self) -> dict:
        headers = {"content-type": "application/json"}
        if self.config.api_key_env:
            key = os.environ.get(self.config.api_key_env, "")
            if key:
                headers["authorization"] = f"Bearer {key}"
        return headers

    def _request_body(self, prompt: AgentPrompt) -> dict:
        messages = [{"role": "system", "content": prompt.system}]
        for turn in prompt.turns:
            role = "assistant" if turn.role == "agent" else "user"
            messages.append({"role": role, "content": turn.text})
        user_parts = [f"Current observation:\n{prompt.observation_text or '(none)'}"]
        if prompt.scratchpad:
            user_parts.append(f"Steps so far:\n{prompt.scratchpad}")
        user_parts.append(_MODE_INSTRUCTIONS[prompt.mode])
        messages.append({"role": "user", "content": "\n\n".join(user_parts)})
        body: dict[str, Any] = {"model": self.config.model, "messages": messages}
        if prompt.mode == "react_step":
            body["tools"] = [tool_definition(t) for t in prompt.tools]
        return body

    async def complete(self, prompt: AgentPrompt, session_id: str = "default") -> Completion:
        try:
            async with httpx.AsyncClient(
                timeout=self.config.timeout, transport=self._transport
            ) as client:
                response = await client.post(
                    self.config.endpoint, json=self._request_body(prompt), headers=self._headers()
                )
        except httpx.HTTPError as exc:
            raise ProviderUnavailable(f"remote provider transport failed: {exc}") from exc
        if response.status_code >= 400:
            raise ProviderUnavailable(f"remote provider returned HTTP {response.status_code}")
        try:
            data = response.json()
            message = data["choices"][0]["message"]
        except (ValueError, LookupError, TypeError) as exc:
            raise ProviderUnavailable(f"remote provider response unparsable: {exc}") from exc
        tool_calls = message.get("tool_calls") or []
        if tool_calls:
            call = tool_calls[0].get("function", {})
            raw_args = call.get("arguments", "{}")
            try:
                args = json.loads(raw_args) if isinstance(raw_args, str) else dict(raw_args)
            except (ValueError, TypeError) as exc:
                raise ProviderUnavailable(f"remote tool arguments unparsable: {exc}") from exc
            name = call.get("name")
            if not name:
                raise ProviderUnavailable("remote tool call carries no function name")
            return Completion(variant="tool_call", name=name, args=args)
        content = message.get("content")
        if not isinstance(content, str):
            raise ProviderUnavailable("remote provider returned neither text nor tool call")
        return Completion(variant="final", text=content)


def load_provider(config: Mapping[str, Any], base_dir: Path | None = None):
    """Build a provider from a server-config block."""
    kind = config.get("type", "scripted")
    if kind == "scripted":
        script = config.get("script")
        if script is None:
            raise ValueError("scripted provider config needs a 'script' path")
        path = Path(script)
        if base_dir is not None and not path.is_absolute():
            path = base_dir / path
        return ScriptedProvider.from_file(path)
    if kind == "remote":
        return RemoteProvider(
            RemoteProviderConfig(
                endpoint=config["endpoint"],
                model=config.get("model", "default"),
                api_key_env=config.get("api_key_env"),
                timeout=float(config.get("timeout", 30.0)),
            )
        )
    raise ValueError(f"unknown provider type {kind!r}")
