"""Domain tool registry and dispatcher.

Tools are either in-process callables or remote HTTP endpoints; the analysis
agent sees both through the same ToolSpec surface. Ships the deterministic
fluorocarbon classifier used by the chemistry demo.
"""

from __future__ import annotations

import asyncio
from dataclasses import dataclass, field
from typing import Any, Callable, Mapping
from urllib.parse import urlparse

import httpx

from .registry import CallError, ParamSpec, validate_args


class ToolError(Exception):
    pass


class DuplicateTool(ToolError):
    pass


class UnknownTool(ToolError):
    pass


class ArgsInvalid(ToolError):
    pass


class TransportFailure(ToolError):
    pass


class EmptyInput(ToolError):
    pass


@dataclass(frozen=True)
class ToolSpec:
    name: str
    description: str = ""
    params: tuple[ParamSpec, ...] = ()
    transport: str = "in_process"  # "in_process" | "http"
    endpoint: str | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "params", tuple(self.params))
        if not self.name:
            raise ToolError("tool name must be non-empty")
        if self.transport not in ("in_process", "http"):
            raise ToolError(f"unknown transport {self.transport!r}")
        if self.transport == "http":
            parsed = urlparse(self.endpoint or "")
            if parsed.scheme not in ("http", "https") or not parsed.netloc:
                raise ToolError(f"http tool {self.name!r} needs a well-formed endpoint URL")

    def to_dict(self) -> dict:
        out: dict[str, Any] = {
            "name": self.name,
            "description": self.description,
            "params": [p.to_dict() for p in self.params],
            "transport": self.transport,
        }
        if self.endpoint:
            out["endpoint"] = self.endpoint
        return out


@dataclass(frozen=True)
class ToolResult:
    tool: str
    status: str  # "ok" | "failed"
    body: Any
    evidence: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        out: dict[str, Any] = {"tool": self.tool, "status": self.status, "body": self.body}
        if self.evidence:
            out["evidence"] = list(self.evidence)
        return out


Handler = Callable[..., Any]


class ToolBus:
    """Read-mostly registry; invocations are independent and concurrent."""

    def __init__(self, http_timeout: float = 10.0) -> None:
        self._specs: dict[str, ToolSpec] = {}
        self._handlers: dict[str, Handler] = {}
        self.http_timeout = http_timeout

    def register_tool(self, spec: ToolSpec, handler: Handler | None = None) -> None:
        if spec.name in self._specs:
            raise DuplicateTool(f"tool {spec.name!r} already registered")
        if spec.transport == "in_process" and handler is None:
            raise ToolError(f"in-process tool {spec.name!r} needs a handler")
        self._specs[spec.name] = spec
        if handler is not None:
            self._handlers[spec.name] = handler

    def list_tools(self) -> list[ToolSpec]:
        return list(self._specs.values())

    def get(self, name: str) -> ToolSpec | None:
        return self._specs.get(name)

    async def invoke_tool(self, name: str, args: Mapping[str, Any]) -> ToolResult:
        spec = self._specs.get(name)
        if spec is None:
            raise UnknownTool(f"no tool named {name!r}")
        try:
            validate_args(spec.params, args)
        except CallError as exc:
            raise ArgsInvalid(str(exc)) from exc
        if spec.transport == "http":
            return await self._invoke_http(spec, dict(args))
        handler = self._handlers[name]
        try:
            result = handler(**args)
            if asyncio.iscoroutine(result):
                result = await result
        except ToolError:
            raise
        except Exception as exc:  # tool bugs become failed results, not crashes
            return ToolResult(tool=name, status="failed", body={"error": str(exc)})
        return self._wrap(name, result)

    async def _invoke_http(self, spec: ToolSpec, args: dict) -> ToolResult:
        try:
            async with httpx.AsyncClient(timeout=self.http_timeout) as client:
                response = await client.post(spec.endpoint, json=args)
        except httpx.HTTPError as exc:
            raise TransportFailure(f"tool {spec.name!r}: {exc}") from exc
        if response.status_code >= 400:
            return ToolResult(
                tool=spec.name,
                status="failed",
                body={"error": f"HTTP {response.status_code}: {response.text[:200]}"},
            )
        try:
            body = response.json()
        except ValueError:
            body = {"text": response.text}
        return self._wrap(spec.name, body)

    def _wrap(self, name: str, result: Any) -> ToolResult:
        if isinstance(result, ToolResult):
            return result
        evidence: tuple[str, ...] = ()
        if isinstance(result, dict) and isinstance(result.get("evidence"), list):
            evidence = tuple(str(e) for e in result["evidence"])
        return ToolResult(tool=name, status="ok", body=result, evidence=evidence)


# ---------------------------------------------------------------------------
# Demo classifier. This is a deliberate string-level mock, not chemistry: a
# compound counts as per/polyfluorinated when some carbon token carries at
# least two fluorines, detected by scanning for "C(F)(F)F", "C(F)(F)", and
# "FC(F)" around each carbon. Real structure-level classification is out of
# scope; the demo only relies on determinism.

PFAS_TOOL_NAME = "pfas_classify"


def pfas_classify(smiles: str) -> dict:
    """Classify a SMILES-like string by its fluorinated-carbon patterns.

    Evidence names each qualifying carbon as "CF<n> group at token <i>" where
    i is the carbon's ordinal among carbon tokens, in string order.
    """
    if not isinstance(smiles, str) or not smiles or not smiles.isprintable():
        raise EmptyInput("smiles must be a non-empty printable string")
    evidence = []
    carbon_ordinal = 0
    for i, ch in enumerate(smiles):
        if ch != "C":
            continue
        # 'C' followed by a lowercase letter is a different element token (Cl, Ca, ...)
        if i + 1 < len(smiles) and smiles[i + 1].islower():
            continue
        fluorines = 0
        if i > 0 and smiles[i - 1] == "F":
            fluorines += 1  # leading F, as in FC(F)
        paren_groups = 0
        j = i + 1
        while smiles.startswith("(F)", j):
            paren_groups += 1
            j += 3
        fluorines += paren_groups
        if paren_groups == 2 and j < len(smiles) and smiles[j] == "F":
            fluorines += 1  # trailing F, as in C(F)(F)F
        if fluorines >= 2:
            evidence.append(f"CF{fluorines} group at token {carbon_ordinal}")
        carbon_ordinal += 1
    return {"is_pfas": bool(evidence), "evidence": evidence}


def builtin_tool_specs() -> list[tuple[ToolSpec, Handler]]:
    return [
        (
            ToolSpec(
                name=PFAS_TOOL_NAME,
                description=(
                    "Classify whether a SMILES string is a PFAS (per- and "
                    "polyfluoroalkyl substance) and return supporting evidence."
                ),
                params=(
                    ParamSpec(
                        name="smiles",
                        kind="string",
                        required=True,
                        description="SMILES line notation of the compound",
                    ),
                ),
            ),
            pfas_classify,
        )
    ]


def default_bus() -> ToolBus:
    bus = ToolBus()
    for spec, handler in builtin_tool_specs():
        bus.register_tool(spec, handler)
    return bus
