"""Routes user goals to the web, analysis, and chat agents.

The web and analysis agents run bounded ReAct loops: observe, pick one tool
call, dispatch it, fold the result back in. Web actions go out through the
gateway to the frontend; analysis calls go to the tool bus. The chat agent
turns everything into one concise user-facing reply. Stages run strictly
sequentially and at most one goal is worked on per session at a time.
"""

from __future__ import annotations

import json
import re
import time
import uuid
from dataclasses import dataclass, field
from typing import Any, Awaitable, Callable, Protocol

from .observation import render_observation
from .providers import AgentPrompt, Completion, Provider, ProviderError
from .registry import NAVIGATE_FUNCTION, CallError, validate_call
from .session import ChatTurn, Session
from .tools import ToolBus, ToolError, ToolResult, TransportFailure
from .tracelog import EventLog

STAGES = ("web", "analysis")

APOLOGY_TEXT = "Sorry - I could not complete that request right now. Please try again."


class DispatchError(Exception):
    """Raised by an action dispatcher when the frontend cannot answer."""


class ActionTimeout(DispatchError):
    pass


class ConnectionClosed(DispatchError):
    pass


class ActionDispatcher(Protocol):
    """The gateway-side contract the web agent drives actions through."""

    async def dispatch_action(self, name: str, args: dict) -> dict:
        """Send an action_request, await its result payload or raise."""

    async def wait_for_observation(self, after_seq: int, timeout: float) -> bool:
        """Block until a snapshot newer than ``after_seq`` is applied."""


StatusCallback = Callable[..., Awaitable[None]]


async def _null_status(agent: str, step: int, action: str | None = None, detail: str | None = None) -> None:
    return None


@dataclass
class TraceStep:
    agent: str
    thought: str = ""
    action: tuple[str, dict] | None = None
    result: str | None = None
    snapshot_seq: int = 0
    dispatched: bool = False


@dataclass
class AgentTrace:
    agent: str
    steps: list[TraceStep] = field(default_factory=list)
    status: str = "complete"
    detail: str | None = None

    @property
    def dispatched_count(self) -> int:
        return sum(1 for s in self.steps if s.dispatched)


@dataclass(frozen=True)
class RoutePlan:
    stages: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        seen = []
        for stage in self.stages:
            if stage not in STAGES:
                raise ValueError(f"unknown stage {stage!r}")
            if stage not in seen:
                seen.append(stage)
        object.__setattr__(self, "stages", tuple(seen))


@dataclass(frozen=True)
class OrchestratorConfig:
    max_steps: int = 8
    max_invalid: int = 2
    action_timeout: float = 10.0


WEB_SYSTEM = (
    "You are a web-interaction agent embedded in a live application. The "
    "observation lists the current page's labeled elements. Act only through "
    "the listed functions, one call per step, and finish with a short status "
    "line once the on-page work for the goal is done."
)

ANALYSIS_SYSTEM = (
    "You are an analysis agent. Use the available domain tools to compute "
    "what the goal needs, then finish with a short status line."
)

CHAT_SYSTEM = (
    "You are the chat agent. Write one concise, friendly reply to the user "
    "summarizing what was done and what was found. No internal mechanics."
)

ROUTER_SYSTEM = (
    "You route user goals to agent stages. Reply with a JSON object "
    '{"stages": [...]} using an ordered subset of ["web", "analysis"]: '
    '"web" when the goal needs page interaction or navigation, "analysis" '
    "when it needs domain tools, an empty list for plain conversation."
)

_STOPWORDS = frozenset(
    "this that with from into then than them they what when where which "
    "whether your please would could should there here have will want "
    "need make give take about over under been being also".split()
)


def _keywords(text: str) -> set[str]:
    return {
        w for w in re.findall(r"[a-z0-9]+", text.lower()) if len(w) >= 4 and w not in _STOPWORDS
    }


def render_steps(steps: list[TraceStep]) -> str:
    lines = []
    for i, step in enumerate(steps, start=1):
        if step.action is not None:
            name, args = step.action
            call = f"{name}({json.dumps(args, sort_keys=True, ensure_ascii=False)})"
        else:
            call = "(no action)"
        lines.append(f"step {i}: {call} -> {step.result or ''}".rstrip())
    return "\n".join(lines)


def render_tool_results(results: list[ToolResult]) -> str:
    return "\n".join(
        f"tool {r.tool} -> {json.dumps(r.to_dict(), sort_keys=True, ensure_ascii=False)}"
        for r in results
    )


class Orchestrator:
    def __init__(
        self,
        provider: Provider,
        bus: ToolBus,
        config: OrchestratorConfig | None = None,
        event_log: EventLog | None = None,
    ) -> None:
        self.provider = provider
        self.bus = bus
        self.config = config or OrchestratorConfig()
        self.log = event_log or EventLog()

    # -- routing -------------------------------------------------------------

    def _observation_text(self, session: Session) -> str:
        if session.latest_snapshot is None:
            return ""
        return render_observation(session.latest_snapshot)

    def _goal_turns(self, session: Session, goal: str) -> tuple[ChatTurn, ...]:
        return (*session.chat_history, ChatTurn(role="user", text=goal, timestamp=time.time()))

    def _fallback_route(self, session: Session, goal: str) -> RoutePlan:
        goal_words = _keywords(goal)
        stages = []
        for spec in session.active_functions:
            if goal_words & (_keywords(spec.description) | _keywords(spec.name)):
                stages.append("web")
                break
        for tool in self.bus.list_tools():
            if goal_words & (_keywords(tool.description) | _keywords(tool.name)):
                stages.append("analysis")
                break
        return RoutePlan(stages=tuple(stages))

    async def route_goal(self, session: Session, goal: str) -> RoutePlan:
        prompt = AgentPrompt(
            system=ROUTER_SYSTEM,
            turns=self._goal_turns(session, goal),
            observation_text=self._observation_text(session),
            tools=(),
            mode="route",
        )
        try:
            completion = await self.provider.complete(prompt, session.id)
            if completion.variant != "final":
                raise ValueError("router must answer with text")
            data = json.loads(completion.text)
            stages = data["stages"]
            if not isinstance(stages, list) or any(s not in STAGES for s in stages):
                raise ValueError(f"bad stages {stages!r}")
            return RoutePlan(stages=tuple(stages))
        except (ProviderError, ValueError, KeyError, TypeError) as exc:
            plan = self._fallback_route(session, goal)
            self.log.emit(
                "route_fallback", session=session.id, reason=str(exc), stages=list(plan.stages)
            )
            return plan

    # -- web agent -------------------------------------------------------------

    async def run_web_agent(
        self,
        session: Session,
        goal: str,
        dispatcher: ActionDispatcher,
        send_status: StatusCallback = _null_status,
    ) -> AgentTrace:
        trace = AgentTrace(agent="web")
        invalid_streak = 0
        for step_idx in range(self.config.max_steps):
            prompt = AgentPrompt(
                system=WEB_SYSTEM,
                turns=self._goal_turns(session, goal),
                observation_text=self._observation_text(session),
                tools=tuple(session.active_functions),
                mode="react_step",
                scratchpad=render_steps(trace.steps),
            )
            try:
                completion = await self.provider.complete(prompt, session.id)
            except ProviderError as exc:
                trace.status = "error"
                trace.detail = f"{type(exc).__name__}: {exc}"
                break
            if completion.variant == "final":
                step = TraceStep(
                    agent="web",
                    thought=completion.reasoning or "",
                    result=completion.text,
                    snapshot_seq=self._snapshot_seq(session),
                )
                trace.steps.append(step)
                self._log_step(session.id, step_idx, step, self._grounding_facts(session))
                await send_status("web", step_idx, detail="final")
                break

            name, args = completion.name, dict(completion.args or {})
            # Validation and the grounding facts are captured in one atomic
            # block: the dispatch decision is made against this exact state,
            # so an observation applied while the provider was thinking counts.
            facts = self._grounding_facts(session)
            active = {s.name: s for s in session.active_functions}
            error = None
            spec = active.get(name)
            if spec is None:
                error = f"function {name!r} is not active on {session.current_url or '(no page)'}"
            else:
                try:
                    validate_call(spec, args)
                except CallError as exc:
                    error = f"{type(exc).__name__}: {exc}"
            if error is not None:
                invalid_streak += 1
                step = TraceStep(
                    agent="web",
                    thought=completion.reasoning or "",
                    result=f"invalid_call: {error}",
                    snapshot_seq=facts["snapshot_seq"],
                )
                trace.steps.append(step)
                self._log_step(
                    session.id, step_idx, step, facts, rejected={"name": name, "args": args}
                )
                await send_status("web", step_idx, detail=f"invalid call: {name}")
                if invalid_streak >= self.config.max_invalid:
                    trace.status = "invalid_calls"
                    trace.detail = error
                    break
                continue
            invalid_streak = 0

            snap_seq = facts["snapshot_seq"]
            step = TraceStep(
                agent="web",
                thought=completion.reasoning or "",
                action=(name, args),
                snapshot_seq=snap_seq,
                dispatched=True,
            )
            await send_status("web", step_idx, action=name)
            try:
                result_payload = await dispatcher.dispatch_action(name, args)
            except ActionTimeout as exc:
                step.result = "timeout"
                step.dispatched = True
                trace.steps.append(step)
                self._log_step(session.id, step_idx, step, facts)
                trace.status = "action_timeout"
                trace.detail = str(exc)
                break
            except DispatchError as exc:
                step.result = f"dispatch_failed: {exc}"
                step.dispatched = False
                trace.steps.append(step)
                self._log_step(session.id, step_idx, step, facts)
                trace.status = "error"
                trace.detail = f"{type(exc).__name__}: {exc}"
                break
            step.result = result_payload.get("status", "ok")
            if result_payload.get("detail"):
                step.result += f": {result_payload['detail']}"
            session.record_action(
                {
                    "function_name": name,
                    "arguments": args,
                    "correlation_id": result_payload.get("correlation_id", ""),
                },
                result_payload,
            )
            if name == NAVIGATE_FUNCTION and result_payload.get("status") == "ok":
                arrived = await dispatcher.wait_for_observation(
                    after_seq=snap_seq, timeout=self.config.action_timeout
                )
                if not arrived:
                    self.log.emit(
                        "navigation_observation_timeout", session=session.id, step=step_idx
                    )
            trace.steps.append(step)
            self._log_step(session.id, step_idx, step, facts)
        else:
            trace.status = "max_steps"
            trace.detail = f"stopped after {self.config.max_steps} steps"
        return trace

    # -- analysis agent --------------------------------------------------------

    async def run_analysis_agent(
        self,
        session: Session,
        goal: str,
        web_trace: AgentTrace | None = None,
        send_status: StatusCallback = _null_status,
    ) -> tuple[AgentTrace, list[ToolResult]]:
        trace = AgentTrace(agent="analysis")
        results: list[ToolResult] = []
        tools = tuple(self.bus.list_tools())
        if not tools:
            return trace, results
        scratch_prefix = ""
        if web_trace is not None and web_trace.steps:
            scratch_prefix = "web agent steps:\n" + render_steps(web_trace.steps) + "\n"
        failure_streak = 0
        invalid_streak = 0
        for step_idx in range(self.config.max_steps):
            facts = self._grounding_facts(session)
            prompt = AgentPrompt(
                system=ANALYSIS_SYSTEM,
                turns=self._goal_turns(session, goal),
                observation_text=self._observation_text(session),
                tools=tools,
                mode="react_step",
                scratchpad=scratch_prefix + render_steps(trace.steps),
            )
            try:
                completion = await self.provider.complete(prompt, session.id)
            except ProviderError as exc:
                trace.status = "error"
                trace.detail = f"{type(exc).__name__}: {exc}"
                break
            if completion.variant == "final":
                step = TraceStep(
                    agent="analysis",
                    thought=completion.reasoning or "",
                    result=completion.text,
                    snapshot_seq=self._snapshot_seq(session),
                )
                trace.steps.append(step)
                self._log_step(session.id, step_idx, step, facts)
                await send_status("analysis", step_idx, detail="final")
                break
            name, args = completion.name, dict(completion.args or {})
            step = TraceStep(
                agent="analysis",
                thought=completion.reasoning or "",
                action=(name, args),
                snapshot_seq=self._snapshot_seq(session),
            )
            await send_status("analysis", step_idx, action=name)
            try:
                result = await self.bus.invoke_tool(name, args)
            except TransportFailure as exc:
                failure_streak += 1
                step.result = f"tool_failure: {exc}"
                trace.steps.append(step)
                self._log_step(session.id, step_idx, step, facts)
                if failure_streak >= self.config.max_invalid:
                    trace.status = "tool_failures"
                    trace.detail = str(exc)
                    break
                continue
            except ToolError as exc:
                invalid_streak += 1
                step.result = f"invalid_call: {type(exc).__name__}: {exc}"
                trace.steps.append(step)
                self._log_step(
                    session.id, step_idx, step, facts, rejected={"name": name, "args": args}
                )
                if invalid_streak >= self.config.max_invalid:
                    trace.status = "invalid_calls"
                    trace.detail = str(exc)
                    break
                continue
            invalid_streak = 0
            step.dispatched = True
            if result.status == "failed":
                failure_streak += 1
                step.result = f"tool_failure: {json.dumps(result.body, sort_keys=True)}"
                results.append(result)
                trace.steps.append(step)
                self._log_step(session.id, step_idx, step, facts)
                if failure_streak >= self.config.max_invalid:
                    trace.status = "tool_failures"
                    trace.detail = step.result
                    break
                continue
            failure_streak = 0
            results.append(result)
            step.result = json.dumps(result.to_dict(), sort_keys=True, ensure_ascii=False)
            trace.steps.append(step)
            self._log_step(session.id, step_idx, step, facts)
        else:
            trace.status = "max_steps"
            trace.detail = f"stopped after {self.config.max_steps} steps"
        return trace, results

    # -- chat agent --------------------------------------------------------------

    async def run_chat_agent(
        self,
        session: Session,
        goal: str,
        traces: list[AgentTrace] | None = None,
        tool_results: list[ToolResult] | None = None,
        send_status: StatusCallback = _null_status,
    ) -> str:
        traces = traces or []
        tool_results = tool_results or []
        scratch_parts = []
        for trace in traces:
            scratch_parts.append(
                f"{trace.agent} agent ({trace.status}):\n{render_steps(trace.steps)}"
            )
        if tool_results:
            scratch_parts.append("tool results:\n" + render_tool_results(tool_results))
        prompt = AgentPrompt(
            system=CHAT_SYSTEM,
            turns=self._goal_turns(session, goal),
            observation_text=self._observation_text(session),
            tools=(),
            mode="cot_answer",
            scratchpad="\n\n".join(scratch_parts),
        )
        await send_status("chat", 0)
        text = None
        reasoning = None
        try:
            completion = await self.provider.complete(prompt, session.id)
        except ProviderError as exc:
            self.log.emit("chat_agent_failed", session=session.id, reason=str(exc))
        else:
            if completion.variant == "final":
                text = completion.text
                reasoning = completion.reasoning
            else:
                self.log.emit(
                    "chat_agent_failed", session=session.id, reason="non-final chat completion"
                )
        if text is None:
            text = APOLOGY_TEXT
        now = time.time()
        session.append_chat(ChatTurn(role="user", text=goal, timestamp=now))
        session.append_chat(ChatTurn(role="agent", text=text, timestamp=now))
        if reasoning:
            self.log.emit("chat_reasoning", session=session.id, reasoning=reasoning)
        return text

    # -- full pipeline -------------------------------------------------------------

    async def handle_goal(
        self,
        session: Session,
        goal: str,
        dispatcher: ActionDispatcher,
        send_status: StatusCallback = _null_status,
    ) -> str:
        run_id = uuid.uuid4().hex[:12]
        plan = await self.route_goal(session, goal)
        self.log.emit(
            "run_start", session=session.id, run=run_id, goal=goal, stages=list(plan.stages)
        )
        await send_status("router", 0, detail=f"stages: {', '.join(plan.stages) or 'chat-only'}")
        traces: list[AgentTrace] = []
        tool_results: list[ToolResult] = []
        web_trace: AgentTrace | None = None
        for stage in plan.stages:
            if stage == "web":
                web_trace = await self.run_web_agent(session, goal, dispatcher, send_status)
                traces.append(web_trace)
            elif stage == "analysis":
                analysis_trace, tool_results = await self.run_analysis_agent(
                    session, goal, web_trace, send_status
                )
                traces.append(analysis_trace)
        text = await self.run_chat_agent(session, goal, traces, tool_results, send_status)
        self.log.emit(
            "run_end",
            session=session.id,
            run=run_id,
            statuses={t.agent: t.status for t in traces},
        )
        return text

    # -- helpers ---------------------------------------------------------------------

    @staticmethod
    def _snapshot_seq(session: Session) -> int:
        return session.latest_snapshot.captured_seq if session.latest_snapshot else 0

    @staticmethod
    def _grounding_facts(session: Session) -> dict:
        """State the dispatch decision rests on, captured atomically."""
        return {
            "snapshot_seq": Orchestrator._snapshot_seq(session),
            "snapshot_url": session.current_url,
            "nav_targets": list(session.navigate_spec.params[0].values or ()),
            "active": [s.name for s in session.active_functions],
        }

    def _log_step(
        self,
        session_id: str,
        step_idx: int,
        step: TraceStep,
        facts: dict,
        rejected: dict | None = None,
    ) -> None:
        self.log.emit(
            "agent_step",
            session=session_id,
            agent=step.agent,
            step=step_idx,
            thought=step.thought,
            action=(
                {"name": step.action[0], "args": step.action[1]}
                if step.action is not None and step.dispatched
                else None
            ),
            rejected=rejected,
            result=step.result,
            **facts,
        )
