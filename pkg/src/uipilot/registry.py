"""Registered frontend functions, page scoping, and call validation.

The skillset (function metadata only) arrives once per page load together
with a page-function map. A function is visible on a URL when any of its own
page patterns matches or when a map entry listing it matches. Patterns are
exact paths, prefixes ending in "/*", or the global "*"; query strings,
fragments, and trailing slashes are ignored.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping

from .observation import NavLink

NAVIGATE_FUNCTION = "navigate"

PARAM_KINDS = ("string", "number", "boolean", "enum")
GRANULARITIES = ("primitive", "composite")


class RegistryError(Exception):
    """Base class for registration failures."""


class DuplicateName(RegistryError):
    pass


class UnknownFunctionInMap(RegistryError):
    pass


class InvalidSpec(RegistryError):
    pass


class CallError(Exception):
    """Base class for call-validation failures."""


class MissingParam(CallError):
    pass


class UnknownParam(CallError):
    pass


class TypeMismatch(CallError):
    pass


class EnumViolation(CallError):
    pass


@dataclass(frozen=True)
class ParamSpec:
    name: str
    kind: str
    required: bool = True
    description: str = ""
    values: tuple[str, ...] | None = None  # enum kind only

    def __post_init__(self) -> None:
        if not self.name:
            raise InvalidSpec("param name must be non-empty")
        if self.kind not in PARAM_KINDS:
            raise InvalidSpec(f"unknown param kind {self.kind!r}")
        if self.kind == "enum":
            if self.values is None:
                raise InvalidSpec(f"enum param {self.name!r} needs a values list")
            object.__setattr__(self, "values", tuple(self.values))
        elif self.values is not None:
            raise InvalidSpec(f"param {self.name!r} of kind {self.kind} cannot carry values")

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "ParamSpec":
        if not isinstance(data, Mapping):
            raise InvalidSpec("param spec must be an object")
        name = data.get("name")
        kind = data.get("kind")
        if not isinstance(name, str) or not isinstance(kind, str):
            raise InvalidSpec("param spec needs string 'name' and 'kind'")
        values = data.get("values")
        if values is not None:
            if not isinstance(values, (list, tuple)) or not all(isinstance(v, str) for v in values):
                raise InvalidSpec(f"enum values of {name!r} must be a list of strings")
            values = tuple(values)
        required = data.get("required", True)
        if not isinstance(required, bool):
            raise InvalidSpec(f"param {name!r}: 'required' must be a boolean")
        return cls(
            name=name,
            kind=kind,
            required=required,
            description=str(data.get("description", "")),
            values=values,
        )

    def to_dict(self) -> dict:
        out: dict[str, Any] = {
            "name": self.name,
            "kind": self.kind,
            "required": self.required,
            "description": self.description,
        }
        if self.kind == "enum":
            out["values"] = list(self.values or ())
        return out

    def check_value(self, value: Any) -> None:
        if self.kind == "string":
            if not isinstance(value, str):
                raise TypeMismatch(f"param {self.name!r} expects a string")
        elif self.kind == "number":
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise TypeMismatch(f"param {self.name!r} expects a number")
        elif self.kind == "boolean":
            if not isinstance(value, bool):
                raise TypeMismatch(f"param {self.name!r} expects a boolean")
        elif self.kind == "enum":
            if not isinstance(value, str):
                raise TypeMismatch(f"param {self.name!r} expects a string")
            if value not in (self.values or ()):
                raise EnumViolation(
                    f"param {self.name!r}: {value!r} not in {list(self.values or ())}"
                )


@dataclass(frozen=True)
class FunctionSpec:
    name: str
    description: str = ""
    params: tuple[ParamSpec, ...] = ()
    pages: tuple[str, ...] = ("*",)
    granularity: str = "primitive"

    def __post_init__(self) -> None:
        if not self.name:
            raise InvalidSpec("function name must be non-empty")
        object.__setattr__(self, "params", tuple(self.params))
        object.__setattr__(self, "pages", tuple(self.pages))
        if not self.pages:
            raise InvalidSpec(f"function {self.name!r} needs at least one page pattern")
        if self.granularity not in GRANULARITIES:
            raise InvalidSpec(f"function {self.name!r}: bad granularity {self.granularity!r}")
        seen = set()
        for p in self.params:
            if p.name in seen:
                raise InvalidSpec(f"function {self.name!r}: duplicate param {p.name!r}")
            seen.add(p.name)

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "FunctionSpec":
        if not isinstance(data, Mapping):
            raise InvalidSpec("function spec must be an object")
        name = data.get("name")
        if not isinstance(name, str):
            raise InvalidSpec("function spec needs a string 'name'")
        raw_params = data.get("params", [])
        if not isinstance(raw_params, (list, tuple)):
            raise InvalidSpec(f"function {name!r}: params must be a list")
        params = tuple(ParamSpec.from_dict(p) for p in raw_params)
        for p in params:
            if p.kind == "enum" and not p.values:
                raise InvalidSpec(f"function {name!r}: enum param {p.name!r} needs >=1 value")
        pages = data.get("pages", ["*"])
        if not isinstance(pages, (list, tuple)) or not all(isinstance(p, str) for p in pages):
            raise InvalidSpec(f"function {name!r}: pages must be a list of strings")
        return cls(
            name=name,
            description=str(data.get("description", "")),
            params=params,
            pages=tuple(pages),
            granularity=str(data.get("granularity", "primitive")),
        )

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "description": self.description,
            "params": [p.to_dict() for p in self.params],
            "pages": list(self.pages),
            "granularity": self.granularity,
        }


@dataclass(frozen=True)
class PageFunctionMap:
    entries: tuple[tuple[str, tuple[str, ...]], ...] = ()

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "PageFunctionMap":
        if not isinstance(data, Mapping):
            raise InvalidSpec("page map must be an object")
        entries = []
        for pattern, names in data.items():
            if not isinstance(pattern, str):
                raise InvalidSpec("page map keys must be strings")
            if not isinstance(names, (list, tuple)) or not all(isinstance(n, str) for n in names):
                raise InvalidSpec(f"page map entry {pattern!r} must list function names")
            entries.append((pattern, tuple(names)))
        return cls(entries=tuple(entries))

    def to_dict(self) -> dict:
        return {pattern: list(names) for pattern, names in self.entries}


def _strip_url(url: str) -> str:
    for sep in ("?", "#"):
        pos = url.find(sep)
        if pos >= 0:
            url = url[:pos]
    while len(url) > 1 and url.endswith("/"):
        url = url[:-1]
    return url


def pattern_matches(pattern: str, url: str) -> bool:
    """Decide whether a page pattern covers a URL."""
    url = _strip_url(url)
    if pattern == "*":
        return True
    if pattern.endswith("/*"):
        base = _strip_url(pattern[:-2]) if pattern[:-2] else ""
        return url == base or url.startswith(base + "/")
    return url == _strip_url(pattern)


@dataclass(frozen=True)
class Registry:
    skillset: tuple[FunctionSpec, ...]
    page_map: PageFunctionMap
    _by_name: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "_by_name", {s.name: s for s in self.skillset})

    def get(self, name: str) -> FunctionSpec | None:
        return self._by_name.get(name)

    def to_dict(self) -> dict:
        return {
            "skillset": [s.to_dict() for s in self.skillset],
            "page_map": self.page_map.to_dict(),
        }


def build_registry(
    skillset: Iterable[FunctionSpec], page_map: PageFunctionMap | Mapping[str, Any]
) -> Registry:
    """Validate and cache the registered skillset plus its page map."""
    specs = tuple(skillset)
    if not isinstance(page_map, PageFunctionMap):
        page_map = PageFunctionMap.from_dict(page_map)
    names = set()
    for spec in specs:
        if spec.name in names:
            raise DuplicateName(f"function {spec.name!r} registered twice")
        names.add(spec.name)
        for p in spec.params:
            if p.kind == "enum" and not p.values:
                raise InvalidSpec(f"function {spec.name!r}: enum param {p.name!r} is empty")
    for pattern, listed in page_map.entries:
        for fn in listed:
            if fn not in names:
                raise UnknownFunctionInMap(f"page map {pattern!r} references unknown {fn!r}")
    return Registry(skillset=specs, page_map=page_map)


def filter_for_url(registry: Registry, url: str) -> list[FunctionSpec]:
    """Functions visible on ``url``, in registration order, each at most once."""
    mapped: dict[str, bool] = {}
    for pattern, names in registry.page_map.entries:
        if pattern_matches(pattern, url):
            for n in names:
                mapped[n] = True
    out = []
    for spec in registry.skillset:
        if spec.name in mapped or any(pattern_matches(p, url) for p in spec.pages):
            out.append(spec)
    return out


def synthesize_navigation_fn(links: Iterable[NavLink]) -> FunctionSpec:
    """Build the explicit navigation action from the snapshot's links.

    The url parameter is an enum over the reachable targets; with no links the
    enum is empty and every call is rejected by validate_call.
    """
    links = list(links)
    targets = tuple(l.url for l in links)
    if links:
        listing = "; ".join(f"{l.label} -> {l.url}" for l in links)
        description = f"Navigate to one of the reachable pages: {listing}."
    else:
        description = "Navigate to a reachable page (none available on this page)."
    return FunctionSpec(
        name=NAVIGATE_FUNCTION,
        description=description,
        params=(
            ParamSpec(
                name="url",
                kind="enum",
                required=True,
                description="Destination URL",
                values=targets,
            ),
        ),
        pages=("*",),
        granularity="primitive",
    )


def validate_args(params: Iterable[ParamSpec], args: Mapping[str, Any]) -> None:
    """Raise a CallError unless ``args`` satisfies the parameter schema."""
    by_name = {p.name: p for p in params}
    for name in args:
        if name not in by_name:
            raise UnknownParam(f"unknown param {name!r}")
    for p in by_name.values():
        if p.name not in args:
            if p.required:
                raise MissingParam(f"missing required param {p.name!r}")
            continue
        p.check_value(args[p.name])


def validate_call(spec: FunctionSpec, args: Mapping[str, Any]) -> None:
    """Raise a CallError unless ``args`` is a valid call of ``spec``."""
    validate_args(spec.params, args)
