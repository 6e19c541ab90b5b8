// Page-pattern matching, mirroring the backend rule: "*" matches everything,
// a trailing "/*" prefix-matches, anything else is an exact path match.
// Query strings, fragments, and trailing slashes are ignored.

function strip(url: string): string {
  for (const sep of ["?", "#"]) {
    const pos = url.indexOf(sep);
    if (pos >= 0) url = url.slice(0, pos);
  }
  while (url.length > 1 && url.endsWith("/")) url = url.slice(0, -1);
  return url;
}

export function patternMatches(pattern: string, url: string): boolean {
  url = strip(url);
  if (pattern === "*") return true;
  if (pattern.endsWith("/*")) {
    const raw = pattern.slice(0, -2);
    const base = raw ? strip(raw) : "";
    return url === base || url.startsWith(base + "/");
  }
  return url === strip(pattern);
}
