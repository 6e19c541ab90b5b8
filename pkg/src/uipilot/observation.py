"""Curated accessibility observations: labeled elements plus the page URL.

The frontend serializes every element carrying an aria-label together with
its HTML tag. The backend filters that list by tag to drop decorative
elements, extracts reachable navigation targets from links, and renders the
result as deterministic prompt text for the agents.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field, replace
from typing import Iterable

# Tags that may carry an href and count as navigation sources.
LINK_TAGS = frozenset({"a", "area"})

# Default keep-list for tag filtering. Everything else (icons, layout
# wrappers, svg, div, span, ...) is discarded before reasoning.
DEFAULT_TAG_ALLOWLIST = frozenset(
    {"button", "a", "input", "select", "textarea", "option", "form", "nav", "table"}
)

_TAG_RE = re.compile(r"^[a-z][a-z0-9-]*$")


class ObservationError(ValueError):
    """Raised for structurally invalid elements or snapshots."""


@dataclass(frozen=True)
class AriaElement:
    tag: str
    aria_label: str
    element_id: str | None = None
    href: str | None = None

    def __post_init__(self) -> None:
        if not _TAG_RE.match(self.tag):
            raise ObservationError(f"tag must be a lowercase tag name, got {self.tag!r}")
        if not self.aria_label:
            raise ObservationError("aria_label must be non-empty")
        if self.href is not None and self.tag not in LINK_TAGS:
            raise ObservationError(f"href is only allowed on link tags, not <{self.tag}>")

    @classmethod
    def from_dict(cls, data: dict) -> "AriaElement":
        if not isinstance(data, dict):
            raise ObservationError("element must be an object")
        for key in ("tag", "aria_label"):
            if not isinstance(data.get(key), str):
                raise ObservationError(f"element field {key!r} must be a string")
        for key in ("element_id", "href"):
            if key in data and data[key] is not None and not isinstance(data[key], str):
                raise ObservationError(f"element field {key!r} must be a string")
        return cls(
            tag=data["tag"],
            aria_label=data["aria_label"],
            element_id=data.get("element_id"),
            href=data.get("href"),
        )

    def to_dict(self) -> dict:
        out = {"tag": self.tag, "aria_label": self.aria_label}
        if self.element_id is not None:
            out["element_id"] = self.element_id
        if self.href is not None:
            out["href"] = self.href
        return out


@dataclass(frozen=True)
class AriaSnapshot:
    url: str
    elements: tuple[AriaElement, ...] = ()
    captured_seq: int = 0

    def __post_init__(self) -> None:
        if not self.url:
            raise ObservationError("snapshot url must be non-empty")
        if not isinstance(self.elements, tuple):
            object.__setattr__(self, "elements", tuple(self.elements))

    @classmethod
    def from_payload(cls, payload: dict, captured_seq: int = 0) -> "AriaSnapshot":
        url = payload.get("url")
        if not isinstance(url, str) or not url:
            raise ObservationError("observation payload needs a non-empty url")
        raw = payload.get("elements", [])
        if not isinstance(raw, list):
            raise ObservationError("observation elements must be a list")
        return cls(
            url=url,
            elements=tuple(AriaElement.from_dict(e) for e in raw),
            captured_seq=captured_seq,
        )

    def to_payload(self) -> dict:
        return {"url": self.url, "elements": [e.to_dict() for e in self.elements]}


@dataclass(frozen=True)
class NavLink:
    label: str
    url: str


def filter_by_tag(snapshot: AriaSnapshot, allowlist: Iterable[str] = DEFAULT_TAG_ALLOWLIST) -> AriaSnapshot:
    """Keep only elements whose tag is in the allowlist, preserving order."""
    allowed = frozenset(allowlist)
    kept = tuple(e for e in snapshot.elements if e.tag in allowed)
    if kept == snapshot.elements:
        return snapshot
    return replace(snapshot, elements=kept)


def extract_nav_links(snapshot: AriaSnapshot) -> list[NavLink]:
    """One link per distinct href among link-tagged elements; first label wins."""
    links: dict[str, str] = {}
    for el in snapshot.elements:
        if el.tag in LINK_TAGS and el.href and el.href not in links:
            links[el.href] = el.aria_label
    return [NavLink(label=label, url=url) for url, label in links.items()]


def _escape(text: str) -> str:
    # Keeps the rendering injective: the field separator and line breaks
    # cannot be forged by label content.
    return (
        text.replace("\\", "\\\\")
        .replace("|", "\\|")
        .replace("\n", "\\n")
        .replace("\r", "\\r")
    )


def render_observation(snapshot: AriaSnapshot) -> str:
    """Deterministic prompt text: URL first, then one line per element."""
    lines = [f"page: {_escape(snapshot.url)}"]
    for el in snapshot.elements:
        parts = [el.tag, _escape(el.aria_label)]
        if el.element_id is not None:
            parts.append(_escape(el.element_id))
        lines.append(" | ".join(parts))
    return "\n".join(lines)
