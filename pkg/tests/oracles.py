"""Reference implementations used only by tests.

Each oracle recomputes a result through a mechanism deliberately different
from the package's own (placeholder substitution instead of a streaming
emitter, reachability closure instead of Tarjan, plain math instead of numpy),
so agreement between the two is evidence rather than tautology.
"""

from __future__ import annotations

import math
import re
from fractions import Fraction


class OracleUnterminatedComment(Exception):
    def __init__(self, offset: int):
        super().__init__(f"unterminated block comment at {offset}")
        self.offset = offset


class OracleUnterminatedString(Exception):
    def __init__(self, offset: int):
        super().__init__(f"unterminated string at {offset}")
        self.offset = offset


_WS_RUN = re.compile(r"[ \t\r\n\f\v]+")


def reference_normalize(raw: str) -> str:
    """Normalize by cutting the text into string/non-string segments, masking
    the strings behind NUL placeholders, regex-collapsing whitespace, then
    substituting the strings back. Precondition: no NUL in the input.
    """
    assert "\x00" not in raw
    strings: list[str] = []
    pieces: list[str] = []
    i, n = 0, len(raw)
    while i < n:
        c = raw[i]
        if raw.startswith("//", i):
            nl = raw.find("\n", i)
            i = n if nl == -1 else nl  # the newline itself stays, as whitespace
            pieces.append(" ")
        elif raw.startswith("/*", i):
            end = raw.find("*/", i + 2)
            if end == -1:
                raise OracleUnterminatedComment(i)
            pieces.append(" ")
            i = end + 2
        elif c in "'\"":
            j = i + 1
            while True:
                if j >= n or raw[j] == "\n":
                    raise OracleUnterminatedString(i)
                if raw[j] == "\\":
                    j += 2
                elif raw[j] == c:
                    break
                else:
                    j += 1
            strings.append(raw[i : j + 1])
            pieces.append("\x00")
            i = j + 1
        else:
            pieces.append(c)
            i += 1
    text = _WS_RUN.sub(" ", "".join(pieces)).strip(" ")
    out: list[str] = []
    k = 0
    for ch in text:
        if ch == "\x00":
            out.append(strings[k])
            k += 1
        else:
            out.append(ch)
    return "".join(out)


def count_distinct_normalized(texts: list[str]) -> int:
    """How many entries a dedup-on-normalized-text ingest should keep."""
    return len({reference_normalize(t) for t in texts})


# Identifier immediately applied like a call. Only sound on deliberately plain
# fixture code: no comments, no strings, no builtins-as-calls, no new/emit.
_CALL_RE = re.compile(r"\b([A-Za-z_$][A-Za-z0-9_$]*)\s*\(")

_FLAT_FN_RE = re.compile(
    r"function\s+([A-Za-z_$][A-Za-z0-9_$]*)\s*\([^)]*\)[^{;]*\{([^{}]*)\}")


def regex_calls(source: str) -> dict[str, list[str]]:
    """Per-function call names for flat one-brace-deep fixture functions."""
    out: dict[str, list[str]] = {}
    for m in _FLAT_FN_RE.finditer(source):
        name, body = m.group(1), m.group(2)
        seen: list[str] = []
        for call in _CALL_RE.finditer(body):
            if call.group(1) not in seen:
                seen.append(call.group(1))
        out[name] = seen
    return out


def reachability(vertices, edges) -> dict[str, set[str]]:
    adj: dict[str, set[str]] = {v: set() for v in vertices}
    for a, b in edges:
        adj[a].add(b)
    reach: dict[str, set[str]] = {}
    for v in vertices:
        seen = {v}
        stack = [v]
        while stack:
            x = stack.pop()
            for y in adj[x]:
                if y not in seen:
                    seen.add(y)
                    stack.append(y)
        reach[v] = seen
    return reach


def scc_partition(vertices, edges) -> dict[str, frozenset[str]]:
    """v and w share a component iff each reaches the other."""
    reach = reachability(vertices, edges)
    return {
        v: frozenset(w for w in vertices if w in reach[v] and v in reach[w])
        for v in vertices
    }


def check_schedule(order, vertices, edges) -> None:
    """Assert the callee-first contract directly from the edge list."""
    assert sorted(order) == sorted(vertices), "schedule is not a permutation"
    pos = {v: i for i, v in enumerate(order)}
    comp = scc_partition(vertices, edges)
    for caller, callee in edges:
        if comp[caller] != comp[callee]:
            assert pos[callee] < pos[caller], (
                f"callee {callee} scheduled after caller {caller}")
    for group in {c for c in comp.values() if len(c) > 1}:
        positions = sorted(pos[v] for v in group)
        assert positions == list(range(positions[0], positions[0] + len(group))), (
            f"cycle group {sorted(group)} is not scheduled consecutively")


def cyclic_groups(vertices, edges) -> set[frozenset[str]]:
    """The strongly connected components of size > 1."""
    comp = scc_partition(vertices, edges)
    return {c for c in comp.values() if len(c) > 1}


def reference_similarity(a, b) -> tuple[float, float]:
    """(distance, similarity) with plain math, no numpy."""
    norm_a = math.hypot(*a) if a else 0.0
    norm_b = math.hypot(*b) if b else 0.0
    if norm_a == 0.0 and norm_b == 0.0:
        return 0.0, 1.0
    dist = math.dist(a, b) / (norm_a + norm_b)
    dist = min(max(dist, 0.0), 1.0)
    return dist, 1.0 - dist


def full_sort_top_k(target_values, labeled_vectors, k) -> list[tuple[str, float]]:
    """Score every entry, sort all of them, take k: the retrieval contract.

    labeled_vectors is a list of (entry_id, values); the result is
    [(entry_id, similarity)] in the promised order.
    """
    scored = []
    for entry_id, values in labeled_vectors:
        _, sim = reference_similarity(target_values, values)
        scored.append((entry_id, sim))
    scored.sort(key=lambda t: (-t[1], t[0]))
    return scored[:k]


def reference_metrics(tp: int, tn: int, fp: int, fn: int) -> dict:
    """Confusion-matrix rates in exact rational arithmetic; None when the
    denominator vanishes."""
    def ratio(num, den):
        return None if den == 0 else Fraction(num, den)

    precision = ratio(tp, tp + fp)
    recall = ratio(tp, tp + fn)
    accuracy = ratio(tp + tn, tp + tn + fp + fn)
    if precision is None or recall is None or precision + recall == 0:
        f1 = None
    else:
        f1 = 2 * precision * recall / (precision + recall)
    as_float = lambda x: None if x is None else float(x)  # noqa: E731
    return {
        "precision": as_float(precision),
        "recall": as_float(recall),
        "f1": as_float(f1),
        "accuracy": as_float(accuracy),
    }
