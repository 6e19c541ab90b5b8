"""Command-line interface: serve the gateway, run scenarios, generate docs."""

from __future__ import annotations

import asyncio
import json
import sys
from pathlib import Path

import click
import httpx

from .config import ServerConfig
from .demo import demo_provider, demo_scenario, fixture_path, multiturn_scenario
from .docsgen import generate_protocol_doc
from .serving import BackgroundServer
from .simharness import BatchReport, Scenario, ScenarioReport, run_concurrent, run_scenario


@click.group()
def main() -> None:
    """Embedded web-agent backend and its headless simulator."""


@main.command()
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--host", default=None, help="Override the configured bind host.")
@click.option("--port", type=int, default=None, help="Override the configured port.")
@click.option("--debug", is_flag=True, help="Enable the session debug endpoints.")
def serve(config_path: str | None, host: str | None, port: int | None, debug: bool) -> None:
    """Run the WebSocket gateway."""
    import uvicorn

    from .gateway import create_app

    config = ServerConfig.from_file(config_path) if config_path else ServerConfig()
    overrides = {}
    if host is not None:
        overrides["host"] = host
    if port is not None:
        overrides["port"] = port
    if debug:
        overrides["debug"] = True
    if overrides:
        config = ServerConfig.from_dict({**_config_as_dict(config), **overrides})
    app = create_app(config)
    click.echo(f"listening on ws://{config.host}:{config.port}{config.ws_path}")
    uvicorn.run(app, host=config.host, port=config.port, log_level="info", ws="websockets-sansio")


def _config_as_dict(config: ServerConfig) -> dict:
    return {
        "host": config.host,
        "port": config.port,
        "ws_path": config.ws_path,
        "action_timeout": config.action_timeout,
        "session_grace": config.session_grace,
        "queue_depth": config.queue_depth,
        "history_turns": config.history_turns,
        "max_steps": config.max_steps,
        "max_invalid": config.max_invalid,
        "tag_allowlist": list(config.tag_allowlist),
        "provider": dict(config.provider),
        "tools": [dict(t) for t in config.tools],
        "builtin_tools": config.builtin_tools,
        "debug": config.debug,
        "event_log_path": config.event_log_path,
    }


def _print_report(report: ScenarioReport, verbose: bool) -> None:
    mark = "PASS" if report.ok else "FAIL"
    click.echo(f"[{mark}] {report.scenario} ({report.duration_ms:.0f} ms)")
    for step in report.steps:
        if verbose or not step.ok:
            status = "skip" if step.skipped else ("ok" if step.ok else "FAIL")
            click.echo(f"  step {step.index} {step.kind}: {status} {step.detail}".rstrip())
    if report.error and not report.steps:
        click.echo(f"  {report.error}")


def _write_report(data: dict, report_path: str | None) -> None:
    if report_path:
        Path(report_path).write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")


def _with_optional_server(serve_config: str | None):
    if serve_config is None:
        return None
    config = ServerConfig.from_file(serve_config)
    config = ServerConfig.from_dict({**_config_as_dict(config), "port": 0})
    return BackgroundServer(config).start()


_ENDPOINT_OPT = click.option(
    "--endpoint", default="ws://127.0.0.1:8765/agent", show_default=True,
    help="WebSocket endpoint of a running backend.",
)
_SERVE_OPT = click.option(
    "--serve-config", type=click.Path(exists=True), default=None,
    help="Boot an ephemeral in-process backend from this config for the run.",
)
_REPORT_OPT = click.option("--report", "report_path", type=click.Path(), default=None)
_TIMEOUT_OPT = click.option("--timeout", type=float, default=10.0, show_default=True)
_VERBOSE_OPT = click.option("-v", "--verbose", is_flag=True)


@main.group()
def sim() -> None:
    """Headless frontend simulator."""


@sim.command("run")
@click.argument("scenario_file", type=click.Path(exists=True))
@_ENDPOINT_OPT
@_SERVE_OPT
@_REPORT_OPT
@_TIMEOUT_OPT
@_VERBOSE_OPT
def sim_run(scenario_file, endpoint, serve_config, report_path, timeout, verbose) -> None:
    """Run one scenario file."""
    scenario = Scenario.from_file(scenario_file)
    server = _with_optional_server(serve_config)
    try:
        target = server.ws_url if server else endpoint
        report = asyncio.run(run_scenario(target, scenario, step_timeout=timeout))
    finally:
        if server:
            server.stop()
    _print_report(report, verbose)
    _write_report(report.to_dict(), report_path)
    sys.exit(0 if report.ok else 1)


@sim.command("run-dir")
@click.argument("scenario_dir", type=click.Path(exists=True, file_okay=False))
@_ENDPOINT_OPT
@_SERVE_OPT
@_REPORT_OPT
@_TIMEOUT_OPT
@_VERBOSE_OPT
def sim_run_dir(scenario_dir, endpoint, serve_config, report_path, timeout, verbose) -> None:
    """Run every scenario file (*.yaml, *.yml, *.json) in a directory."""
    paths = sorted(
        p for p in Path(scenario_dir).iterdir() if p.suffix in (".yaml", ".yml", ".json")
    )
    if not paths:
        raise click.ClickException(f"no scenario files in {scenario_dir}")
    server = _with_optional_server(serve_config)
    reports = []
    try:
        target = server.ws_url if server else endpoint
        for path in paths:
            scenario = Scenario.from_file(path)
            reports.append(asyncio.run(run_scenario(target, scenario, step_timeout=timeout)))
    finally:
        if server:
            server.stop()
    for report in reports:
        _print_report(report, verbose)
    _write_report({"scenarios": [r.to_dict() for r in reports]}, report_path)
    sys.exit(0 if all(r.ok for r in reports) else 1)


@sim.command("concurrent")
@click.argument("scenario_files", nargs=-1, required=True, type=click.Path(exists=True))
@click.option("--copies", type=int, default=1, show_default=True,
              help="Run each scenario file this many times.")
@click.option("--parallelism", type=int, default=4, show_default=True)
@_ENDPOINT_OPT
@_SERVE_OPT
@_REPORT_OPT
@_TIMEOUT_OPT
@_VERBOSE_OPT
def sim_concurrent(
    scenario_files, copies, parallelism, endpoint, serve_config, report_path, timeout, verbose
) -> None:
    """Run scenarios in parallel against one backend and check isolation."""
    scenarios = []
    for path in scenario_files:
        for i in range(copies):
            scenario = Scenario.from_file(path)
            if copies > 1:
                scenario.name = f"{scenario.name}#{i}"
            scenarios.append(scenario)
    server = _with_optional_server(serve_config)
    try:
        target = server.ws_url if server else endpoint
        batch: BatchReport = asyncio.run(
            run_concurrent(target, scenarios, parallelism, step_timeout=timeout)
        )
    finally:
        if server:
            server.stop()
    for report in batch.reports:
        _print_report(report, verbose)
    for line in batch.contamination:
        click.echo(f"[CONTAMINATION] {line}")
    _write_report(batch.to_dict(), report_path)
    sys.exit(0 if batch.ok else 1)


@main.command()
@click.option("--multiturn", is_flag=True, help="Also run the follow-up memory turn.")
@_REPORT_OPT
@_VERBOSE_OPT
def demo(multiturn: bool, report_path: str | None, verbose: bool) -> None:
    """Run the packaged chemistry walkthrough end to end (no browser, no LLM)."""
    scenario = multiturn_scenario() if multiturn else demo_scenario()
    config = ServerConfig(port=0, debug=True)
    server = BackgroundServer(
        config, provider=demo_provider(multiturn=multiturn)
    ).start()
    try:
        report = asyncio.run(run_scenario(server.ws_url, scenario))
    finally:
        server.stop()
    _print_report(report, verbose)
    _write_report(report.to_dict(), report_path)
    sys.exit(0 if report.ok else 1)


@main.command("gen-docs")
@click.option("--out", type=click.Path(file_okay=False), default="docs", show_default=True)
def gen_docs(out: str) -> None:
    """Write the protocol reference document."""
    out_dir = Path(out)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / "protocol.md"
    path.write_text(generate_protocol_doc())
    click.echo(f"wrote {path}")


@main.command("dump-session")
@click.argument("session_id")
@click.option("--base-url", default="http://127.0.0.1:8765", show_default=True)
def dump_session(session_id: str, base_url: str) -> None:
    """Fetch a session state dump from a backend running with --debug."""
    response = httpx.get(f"{base_url}/debug/sessions/{session_id}", timeout=10.0)
    if response.status_code != 200:
        raise click.ClickException(f"HTTP {response.status_code}: {response.text}")
    click.echo(json.dumps(response.json(), indent=2, sort_keys=True))


@main.command("fixtures-path")
def fixtures_path_cmd() -> None:
    """Print where the packaged demo fixtures live."""
    click.echo(str(fixture_path("demo_scenario.yaml").parent))


if __name__ == "__main__":
    main()
