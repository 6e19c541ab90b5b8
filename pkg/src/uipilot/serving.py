"""Run the gateway app in a background thread (used by the CLI and tests)."""

from __future__ import annotations

import asyncio
import threading
import time

import uvicorn

from .config import ServerConfig
from .gateway import create_app


class ServerStartupError(RuntimeError):
    pass


class BackgroundServer:
    """An in-process uvicorn server on its own event loop thread."""

    def __init__(self, config: ServerConfig, app=None, **app_kwargs) -> None:
        self.config = config
        self.app = app or create_app(config, **app_kwargs)
        self._uv = uvicorn.Server(
            uvicorn.Config(
                self.app,
                host=config.host,
                port=config.port,
                log_level="warning",
                ws="websockets-sansio",
            )
        )
        self._thread = threading.Thread(target=self._run, name="uipilot-server", daemon=True)
        self._startup_error: BaseException | None = None

    def _run(self) -> None:
        try:
            asyncio.run(self._uv.serve())
        except BaseException as exc:  # surfaced by start()
            self._startup_error = exc

    def start(self, timeout: float = 10.0) -> "BackgroundServer":
        self._thread.start()
        deadline = time.monotonic() + timeout
        while not self._uv.started:
            if self._startup_error is not None:
                raise ServerStartupError(str(self._startup_error)) from self._startup_error
            if time.monotonic() > deadline:
                raise ServerStartupError("server did not start in time")
            time.sleep(0.01)
        return self

    @property
    def port(self) -> int:
        return self._uv.servers[0].sockets[0].getsockname()[1]

    @property
    def base_url(self) -> str:
        return f"http://{self.config.host}:{self.port}"

    @property
    def ws_url(self) -> str:
        return f"ws://{self.config.host}:{self.port}{self.config.ws_path}"

    @property
    def gateway(self):
        return self.app.state.gateway

    def stop(self, timeout: float = 10.0) -> None:
        self._uv.should_exit = True
        self._thread.join(timeout=timeout)

    def __enter__(self) -> "BackgroundServer":
        return self.start()

    def __exit__(self, *exc_info) -> None:
        self.stop()
