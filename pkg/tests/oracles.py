"""Independent brute-force oracles used by the test suite.

These are deliberately naive implementations written before (and kept
independent of) the production code paths they check. Keep them dumb:
no imports from uipilot.
"""

from __future__ import annotations

# ---------------------------------------------------------------------------
# Fluorinated-carbon classifier oracle: a plain substring scan over the three
# mock patterns. Returns True iff any pattern occurs anywhere in the string.

PFAS_PATTERNS = ("C(F)(F)F", "C(F)(F)", "FC(F)")


def pfas_scan_oracle(smiles: str) -> bool:
    return any(p in smiles for p in PFAS_PATTERNS)


def pfas_pattern_positions(smiles: str) -> list[tuple[str, int]]:
    """Every (pattern, index) occurrence, scanned left to right per pattern."""
    hits = []
    for pattern in PFAS_PATTERNS:
        start = 0
        while True:
            i = smiles.find(pattern, start)
            if i < 0:
                break
            hits.append((pattern, i))
            start = i + 1
    return hits


# ---------------------------------------------------------------------------
# Page-pattern matching oracle. Rule (stated once, implemented twice):
# "*" matches everything; a pattern ending in "/*" prefix-matches; anything
# else must match the URL path exactly. Query strings and fragments are
# stripped, trailing slashes are ignored (except for the bare root "/").


def _oracle_strip(url: str) -> str:
    for sep in ("?", "#"):
        pos = url.find(sep)
        if pos >= 0:
            url = url[:pos]
    while len(url) > 1 and url.endswith("/"):
        url = url[:-1]
    return url


def page_match_oracle(pattern: str, url: str) -> bool:
    url = _oracle_strip(url)
    if pattern == "*":
        return True
    pattern = _oracle_strip(pattern) if not pattern.endswith("/*") else pattern
    if pattern.endswith("/*"):
        base = pattern[:-2]
        base = _oracle_strip(base) if base else base
        return url == base or url.startswith(base + "/")
    return url == pattern


def visible_functions_oracle(
    skillset: list[dict], page_map: dict[str, list[str]], url: str
) -> list[str]:
    """Registration-order list of function names visible on ``url``.

    A function is visible iff any of its own page patterns matches, or any
    page-map pattern listing it matches.
    """
    visible = []
    for spec in skillset:
        own = any(page_match_oracle(p, url) for p in spec["pages"])
        mapped = any(
            page_match_oracle(pattern, url) and spec["name"] in names
            for pattern, names in page_map.items()
        )
        if own or mapped:
            visible.append(spec["name"])
    return visible


# ---------------------------------------------------------------------------
# Chat-memory oracle: last-n semantics by list slicing.


def ring_oracle(turns: list, n: int) -> list:
    return list(turns)[-n:] if n > 0 else []


# ---------------------------------------------------------------------------
# Navigation-link dedup oracle: first label wins, URL order preserved.


def nav_links_oracle(elements: list[dict]) -> list[tuple[str, str]]:
    seen = {}
    for el in elements:
        href = el.get("href")
        if el.get("tag") in ("a", "area") and href and href not in seen:
            seen[href] = el["aria_label"]
    return [(label, url) for url, label in seen.items()]
