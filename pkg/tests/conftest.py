from __future__ import annotations

import contextlib
from pathlib import Path

import pytest

from uipilot.config import ServerConfig
from uipilot.gateway import Gateway
from uipilot.providers import ScriptedProvider
from uipilot.serving import BackgroundServer
from uipilot.tools import default_bus
from uipilot.tracelog import EventLog

REPO_ROOT = Path(__file__).resolve().parent.parent
FRAMES_DIR = REPO_ROOT / "testdata" / "frames"


@pytest.fixture
def server_factory():
    """Start real uvicorn servers on ephemeral ports; stop them afterwards."""
    servers: list[BackgroundServer] = []

    def make(provider=None, config: ServerConfig | None = None, **kwargs) -> BackgroundServer:
        config = config or ServerConfig(port=0, debug=True)
        server = BackgroundServer(config, provider=provider, **kwargs).start()
        servers.append(server)
        return server

    yield make
    for server in servers:
        server.stop()


@contextlib.asynccontextmanager
async def gateway_ctx(
    provider=None, bus=None, config: ServerConfig | None = None, event_log: EventLog | None = None
):
    """An in-process Gateway without a socket layer, for core-logic tests."""
    gateway = Gateway(
        config or ServerConfig(),
        provider or ScriptedProvider([]),
        bus or default_bus(),
        event_log or EventLog(),
    )
    try:
        yield gateway
    finally:
        await gateway.shutdown()


class FakeSocket:
    """Captures outbound frames from the gateway core."""

    def __init__(self) -> None:
        self.sent: list[str] = []
        self.closed = False

    async def send_text(self, data: str) -> None:
        if self.closed:
            raise RuntimeError("socket closed")
        self.sent.append(data)
