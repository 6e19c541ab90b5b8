"""Backend runtime for embedding an LLM agent into an existing web app.

A small frontend shim (shipped separately) exposes accessibility-label
observations and a per-page function registry over a WebSocket; this package
is everything behind that socket: the wire protocol, session-grounded state,
the web/analysis/chat agent pipeline, the tool bus, the gateway server, and
a headless frontend simulator so the whole stack is testable with no browser
and no live model.
"""

__version__ = "0.1.0"
