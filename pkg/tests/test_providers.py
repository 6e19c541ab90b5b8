import asyncio
import json
import socket
import time

import httpx
import pytest

from uipilot.demo import DEMO_GOAL_TEMPLATE, DEMO_SMILES, demo_provider
from uipilot.providers import (
    AgentPrompt,
    Completion,
    ProviderUnavailable,
    RemoteProvider,
    RemoteProviderConfig,
    Script,
    ScriptedProvider,
    ScriptEntry,
    ScriptExhausted,
    load_provider,
    render_prompt,
    tool_definition,
)
from uipilot.registry import FunctionSpec, ParamSpec
from uipilot.session import ChatTurn


def run(coro):
    return asyncio.run(coro)


def prompt(mode="react_step", goal="do it", observation="page: /search", tools=None,
           scratchpad=""):
    tools = tools if tools is not None else (
        FunctionSpec(name="click", params=(ParamSpec(name="target", kind="string"),)),
    )
    return AgentPrompt(
        system="sys",
        turns=(ChatTurn(role="user", text=goal, timestamp=0.0),),
        observation_text=observation,
        tools=tuple(tools),
        mode=mode,
        scratchpad=scratchpad,
    )


def test_prompt_invariant_react_needs_tools():
    with pytest.raises(ValueError):
        prompt(tools=())
    prompt(mode="cot_answer", tools=())  # fine for other modes


def test_completion_validation():
    with pytest.raises(ValueError):
        Completion(variant="tool_call", name="x")  # args missing
    with pytest.raises(ValueError):
        Completion(variant="final")
    with pytest.raises(ValueError):
        Completion(variant="monologue", text="x")


# ---------------------------------------------------------------------------
# Scripted provider


def test_demo_script_first_react_step_is_type():
    provider = demo_provider()
    goal = DEMO_GOAL_TEMPLATE.format(smiles=DEMO_SMILES)
    route = run(provider.complete(prompt(mode="route", goal=goal, tools=()), "s1"))
    assert route.variant == "final"
    assert json.loads(route.text) == {"stages": ["web", "analysis"]}
    step1 = run(
        provider.complete(
            prompt(goal=goal, observation="page: /search\ninput | SMILES search box"), "s1"
        )
    )
    assert step1.variant == "tool_call"
    assert step1.name == "type"
    assert step1.args == {"textField": "smiles-input", "value": DEMO_SMILES}


def test_scripted_cot_fixture_for_empty_results():
    provider = ScriptedProvider(
        [
            Script(
                key="empty",
                entries=(
                    ScriptEntry(
                        mode="cot_answer",
                        response=Completion(
                            variant="final", text="No analysis results available."
                        ),
                    ),
                ),
            )
        ]
    )
    out = run(provider.complete(prompt(mode="cot_answer", tools=()), "s"))
    assert out.text == "No analysis results available."


def test_scripted_determinism_across_sessions():
    goal = DEMO_GOAL_TEMPLATE.format(smiles=DEMO_SMILES)
    p = prompt(mode="route", goal=goal, tools=())
    first = [run(demo_provider().complete(p, "a")) for _ in range(2)]
    provider = demo_provider()
    same_provider = [run(provider.complete(p, "a1")), run(provider.complete(p, "a2"))]
    assert first[0] == first[1] == same_provider[0] == same_provider[1]


def test_script_cursor_is_per_session():
    provider = demo_provider()
    goal = DEMO_GOAL_TEMPLATE.format(smiles=DEMO_SMILES)
    run(provider.complete(prompt(mode="route", goal=goal, tools=()), "a"))
    # session b starts from entry 0 again
    out = run(provider.complete(prompt(mode="route", goal=goal, tools=()), "b"))
    assert out.variant == "final"


def test_script_exhausted_on_missing_entries():
    provider = ScriptedProvider([Script(key="k", entries=())])
    with pytest.raises(ScriptExhausted):
        run(provider.complete(prompt(), "s"))


def test_script_exhausted_on_mode_mismatch():
    provider = ScriptedProvider(
        [Script(key="k", entries=(ScriptEntry(mode="route",
                                              response=Completion(variant="final", text="{}")),))]
    )
    with pytest.raises(ScriptExhausted):
        run(provider.complete(prompt(mode="react_step"), "s"))


def test_script_entry_match_gates_on_prompt_content():
    provider = ScriptedProvider(
        [
            Script(
                key="k",
                entries=(
                    ScriptEntry(
                        mode="react_step",
                        match="page: /reports",
                        response=Completion(variant="final", text="ok"),
                    ),
                ),
            )
        ]
    )
    with pytest.raises(ScriptExhausted):
        run(provider.complete(prompt(observation="page: /search"), "s"))
    provider.reset()
    out = run(provider.complete(prompt(observation="page: /reports"), "s2"))
    assert out.text == "ok"


def test_script_key_selection_by_prompt_match():
    provider = ScriptedProvider(
        [
            Script(key="a", match="AAA",
                   entries=(ScriptEntry(mode="react_step",
                                        response=Completion(variant="final", text="for-a")),)),
            Script(key="b", match="BBB",
                   entries=(ScriptEntry(mode="react_step",
                                        response=Completion(variant="final", text="for-b")),)),
        ]
    )
    assert run(provider.complete(prompt(goal="goal BBB"), "s")).text == "for-b"
    assert run(provider.complete(prompt(goal="goal AAA"), "s")).text == "for-a"
    with pytest.raises(ScriptExhausted):
        run(provider.complete(prompt(goal="goal CCC"), "s"))


def test_script_repeat_forever():
    provider = ScriptedProvider(
        [
            Script(
                key="loop",
                entries=(
                    ScriptEntry(
                        mode="react_step",
                        repeat=-1,
                        response=Completion(variant="tool_call", name="zoom", args={}),
                    ),
                ),
            )
        ]
    )
    for _ in range(20):
        out = run(provider.complete(prompt(), "s"))
        assert out.name == "zoom"


def test_render_prompt_contains_all_sections():
    text = render_prompt(prompt(scratchpad="step 1: click({}) -> ok"))
    for needle in ("[system]", "[conversation]", "user: do it", "[observation]",
                   "page: /search", "[tools]", "click(target: string)", "[steps]"):
        assert needle in text


# ---------------------------------------------------------------------------
# Remote provider


def _mock_remote(handler):
    transport = httpx.MockTransport(handler)
    config = RemoteProviderConfig(endpoint="http://llm.test/v1/chat", model="m")
    return RemoteProvider(config, transport=transport)


def test_remote_provider_tool_call_parsing():
    def handler(request: httpx.Request) -> httpx.Response:
        body = json.loads(request.content)
        assert body["model"] == "m"
        assert body["tools"][0]["function"]["name"] == "click"
        return httpx.Response(
            200,
            json={
                "choices": [
                    {
                        "message": {
                            "tool_calls": [
                                {
                                    "function": {
                                        "name": "click",
                                        "arguments": json.dumps({"target": "analyze"}),
                                    }
                                }
                            ]
                        }
                    }
                ]
            },
        )

    out = run(_mock_remote(handler).complete(prompt(), "s"))
    assert out == Completion(variant="tool_call", name="click", args={"target": "analyze"})


def test_remote_provider_final_parsing():
    def handler(request):
        return httpx.Response(200, json={"choices": [{"message": {"content": "done"}}]})

    out = run(_mock_remote(handler).complete(prompt(mode="cot_answer", tools=()), "s"))
    assert out == Completion(variant="final", text="done")


def test_remote_provider_http_error():
    def handler(request):
        return httpx.Response(500, text="boom")

    with pytest.raises(ProviderUnavailable):
        run(_mock_remote(handler).complete(prompt(), "s"))


def test_remote_provider_garbage_response():
    def handler(request):
        return httpx.Response(200, json={"surprise": True})

    with pytest.raises(ProviderUnavailable):
        run(_mock_remote(handler).complete(prompt(), "s"))


def test_remote_provider_unreachable_within_timeout():
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        port = s.getsockname()[1]
    config = RemoteProviderConfig(endpoint=f"http://127.0.0.1:{port}/v1", timeout=5.0)
    provider = RemoteProvider(config)
    started = time.perf_counter()
    with pytest.raises(ProviderUnavailable):
        run(provider.complete(prompt(), "s"))
    assert time.perf_counter() - started < 5.0


def test_remote_provider_reads_credential_env(monkeypatch):
    seen = {}

    def handler(request):
        seen["auth"] = request.headers.get("authorization")
        return httpx.Response(200, json={"choices": [{"message": {"content": "ok"}}]})

    monkeypatch.setenv("TEST_LLM_KEY", "sekret")
    transport = httpx.MockTransport(handler)
    provider = RemoteProvider(
        RemoteProviderConfig(endpoint="http://llm.test/v1", api_key_env="TEST_LLM_KEY"),
        transport=transport,
    )
    run(provider.complete(prompt(mode="cot_answer", tools=()), "s"))
    assert seen["auth"] == "Bearer sekret"


def test_tool_definition_schema():
    spec = FunctionSpec(
        name="navigate",
        description="go",
        params=(ParamSpec(name="url", kind="enum", values=("/a", "/b")),),
    )
    d = tool_definition(spec)
    assert d["function"]["parameters"]["properties"]["url"] == {
        "type": "string",
        "enum": ["/a", "/b"],
    }
    assert d["function"]["parameters"]["required"] == ["url"]


def test_load_provider_dispatch(tmp_path):
    script = tmp_path / "s.yaml"
    script.write_text(
        "scripts:\n  - key: k\n    entries:\n      - mode: route\n"
        "        response: {final: {text: '{}'}}\n"
    )
    provider = load_provider({"type": "scripted", "script": str(script)})
    assert isinstance(provider, ScriptedProvider)
    remote = load_provider({"type": "remote", "endpoint": "http://x/y"})
    assert isinstance(remote, RemoteProvider)
    with pytest.raises(ValueError):
        load_provider({"type": "psychic"})
