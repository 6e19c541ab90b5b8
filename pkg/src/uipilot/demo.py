"""Canonical chemistry demo: app, provider script, and scenario builders.

The packaged YAML fixtures mirror these builders one-to-one; tests assert the
two stay in sync. The walkthrough: the user asks for a PFAS check, the web
agent types the SMILES, clicks Analyze, navigates to Reports; the analysis
agent runs the classifier; the chat agent reports the verdict.
"""

from __future__ import annotations

from importlib import resources
from pathlib import Path

from .providers import Completion, Script, ScriptedProvider, ScriptEntry
from .registry import FunctionSpec, ParamSpec
from .tools import pfas_classify
from .simharness import (
    Effect,
    ExpectAction,
    ExpectChat,
    ExpectState,
    Scenario,
    SendChat,
    VirtualApp,
    VirtualFunction,
)

DEMO_SMILES = "FC(F)(F)C(F)(F)C(=O)O"
DEMO_GOAL_TEMPLATE = "Check if this SMILES is a PFAS and generate a short report: {smiles}"
DEMO_GOAL = "Check if this SMILES is a PFAS and generate a short report."

FOLLOWUP_GOAL = "What compound did we analyze just now?"


def fixture_path(name: str) -> Path:
    return Path(str(resources.files("uipilot").joinpath("fixtures", name)))


def demo_app() -> VirtualApp:
    """The two-page chemistry UI: /search with the input+button, /reports."""
    type_fn = VirtualFunction(
        spec=FunctionSpec(
            name="type",
            description="Type a value into a text field identified by its element id.",
            params=(
                ParamSpec(name="textField", kind="string", description="Target field element id"),
                ParamSpec(name="value", kind="string", description="Text to enter"),
            ),
            pages=("/search",),
            granularity="primitive",
        ),
        effect=Effect(type="set_field", params={"field_from": "textField", "value_from": "value"}),
    )
    click_fn = VirtualFunction(
        spec=FunctionSpec(
            name="click",
            description="Click a button identified by its element id.",
            params=(ParamSpec(name="target", kind="string", description="Button element id"),),
            pages=("/search",),
            granularity="primitive",
        ),
        effect=Effect(
            type="set_field",
            params={"field": "analysis_of", "value_from_field": "smiles-input"},
        ),
    )
    export_fn = VirtualFunction(
        spec=FunctionSpec(
            name="export",
            description="Export the latest analysis report as a downloadable file.",
            params=(),
            pages=("/reports",),
            granularity="composite",
        ),
        effect=Effect(type="set_field", params={"field": "export_requested", "value": "yes"}),
    )
    return VirtualApp(
        app_id="chem-analysis-demo",
        initial_url="/search",
        pages={
            "/search": [
                {"tag": "input", "aria_label": "SMILES search box", "element_id": "smiles-input"},
                {"tag": "button", "aria_label": "Analyze", "element_id": "analyze"},
                {"tag": "a", "aria_label": "Reports", "href": "/reports"},
                {"tag": "svg", "aria_label": "decorative logo"},
            ],
            "/reports": [
                {"tag": "a", "aria_label": "Search", "href": "/search"},
                {"tag": "table", "aria_label": "Analysis reports table"},
                {"tag": "button", "aria_label": "Export report", "element_id": "export"},
            ],
        },
        functions=[type_fn, click_fn, export_fn],
    )


def demo_summary(smiles: str) -> str:
    """The scripted chat summary, grounded in the real classifier output."""
    result = pfas_classify(smiles)
    kind = "a PFAS" if result["is_pfas"] else "not a PFAS"
    evidence = "; ".join(result["evidence"]) or "no fluorinated carbons found"
    return (
        f"{smiles} is classified as {kind} ({evidence}). I entered it on the "
        "search page, ran the analysis, and the full report is available "
        "under Reports."
    )


def demo_script(smiles: str = DEMO_SMILES, key: str = "pfas-demo") -> Script:
    """The deterministic provider transcript for one walkthrough."""
    goal = DEMO_GOAL_TEMPLATE.format(smiles=smiles)
    classification = pfas_classify(smiles)
    # The chat entry refuses to fire unless the real tool evidence reached its
    # prompt, so the script asserts the analysis result flowed through.
    chat_gate = (
        classification["evidence"][0] if classification["evidence"] else '"is_pfas": false'
    )
    return Script(
        key=key,
        match=smiles,
        entries=(
            ScriptEntry(
                mode="route",
                match=goal,
                response=Completion(variant="final", text='{"stages": ["web", "analysis"]}'),
            ),
            ScriptEntry(
                mode="react_step",
                match="SMILES search box",
                response=Completion(
                    variant="tool_call",
                    name="type",
                    args={"textField": "smiles-input", "value": smiles},
                    reasoning="The goal names a SMILES; it belongs in the search box.",
                ),
            ),
            ScriptEntry(
                mode="react_step",
                response=Completion(
                    variant="tool_call",
                    name="click",
                    args={"target": "analyze"},
                    reasoning="Trigger the analysis of the entered compound.",
                ),
            ),
            ScriptEntry(
                mode="react_step",
                response=Completion(
                    variant="tool_call",
                    name="navigate",
                    args={"url": "/reports"},
                    reasoning="The report lives under the Reports tab.",
                ),
            ),
            ScriptEntry(
                mode="react_step",
                match="page: /reports",
                response=Completion(
                    variant="final",
                    text="Entered the SMILES, started the analysis, now on Reports.",
                ),
            ),
            ScriptEntry(
                mode="react_step",
                match="pfas_classify",
                response=Completion(
                    variant="tool_call",
                    name="pfas_classify",
                    args={"smiles": smiles},
                    reasoning="Classify the compound with the domain tool.",
                ),
            ),
            ScriptEntry(
                mode="react_step",
                match="is_pfas",
                response=Completion(variant="final", text="Classification result retrieved."),
            ),
            ScriptEntry(
                mode="cot_answer",
                match=chat_gate,
                response=Completion(
                    variant="final",
                    text=demo_summary(smiles),
                    reasoning="Summarize the classifier verdict for the user.",
                ),
            ),
        ),
    )


def followup_script_entries(smiles: str = DEMO_SMILES) -> tuple[ScriptEntry, ...]:
    """Second-turn entries for the multi-turn memory scenario.

    The cot entry's match only occurs in the chat-history section of the
    prompt, so the provider refuses to answer unless memory carried over.
    """
    verdict = "a PFAS" if pfas_classify(smiles)["is_pfas"] else "not a PFAS"
    return (
        ScriptEntry(
            mode="route",
            match=FOLLOWUP_GOAL,
            response=Completion(variant="final", text='{"stages": []}'),
        ),
        ScriptEntry(
            mode="cot_answer",
            match=f"user: Check if this SMILES is a PFAS and generate a short report: {smiles}",
            response=Completion(
                variant="final",
                text=f"We analyzed {smiles}; the classifier marked it as {verdict}.",
            ),
        ),
    )


def demo_provider(smiles: str = DEMO_SMILES, multiturn: bool = False) -> ScriptedProvider:
    script = demo_script(smiles)
    if multiturn:
        script = Script(
            key=script.key,
            match=script.match,
            entries=(*script.entries, *followup_script_entries(smiles)),
        )
    return ScriptedProvider([script])


def demo_scenario(smiles: str = DEMO_SMILES, name: str = "pfas-demo") -> Scenario:
    goal = DEMO_GOAL_TEMPLATE.format(smiles=smiles)
    return Scenario(
        name=name,
        app=demo_app(),
        isolation_token=smiles,
        steps=[
            SendChat(text=goal),
            ExpectAction(name="type", args={"textField": "smiles-input", "value": smiles}),
            ExpectAction(name="click", args={"target": "analyze"}),
            ExpectAction(name="navigate", args={"url": "/reports"}),
            ExpectState(url="/reports"),
            ExpectChat(exact=demo_summary(smiles)),
            ExpectState(field_name="analysis_of", field_value=smiles),
        ],
    )


def multiturn_scenario(smiles: str = DEMO_SMILES) -> Scenario:
    base = demo_scenario(smiles, name="pfas-demo-multiturn")
    base.steps += [
        SendChat(text=FOLLOWUP_GOAL),
        ExpectChat(contains=smiles),
    ]
    return base
