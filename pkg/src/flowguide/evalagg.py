"""Parsing and aggregation of per-comparison ranking records.

Records arrive as line-delimited JSON from an external evaluator. Mean ranks
are computed per view within each object first, then averaged across objects,
so objects with many rendered views do not dominate the table. A flat mean
over records is available for sensitivity checks.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

from .errors import NoRecords, NotAPermutation, ParseError

CRITERIA = ("fidelity", "clarity", "integration", "quality", "adaptation", "overall")


@dataclass(frozen=True)
class RankingRecord:
    """One evaluator judgement: method -> rank for one object view and criterion.

    Ranks within a record are a permutation of 1..M for its M methods.
    """

    object_id: str
    view_id: str
    criterion: str
    ranks: dict[str, int]


def _parse_line(line_no: int, line: str) -> RankingRecord:
    try:
        raw = json.loads(line)
    except json.JSONDecodeError as exc:
        raise ParseError(line_no, f"invalid JSON ({exc.msg})") from exc
    if not isinstance(raw, dict):
        raise ParseError(line_no, "record is not an object")
    for key in ("object_id", "view_id", "criterion", "ranks"):
        if key not in raw:
            raise ParseError(line_no, f"missing field {key!r}")
    criterion = raw["criterion"]
    if criterion not in CRITERIA:
        raise ParseError(line_no, f"unknown criterion {criterion!r}")
    ranks = raw["ranks"]
    if not isinstance(ranks, dict) or not ranks:
        raise ParseError(line_no, "ranks must be a non-empty object")
    clean: dict[str, int] = {}
    for method, rank in ranks.items():
        if not isinstance(rank, int) or isinstance(rank, bool):
            raise ParseError(line_no, f"rank for {method!r} is not an integer")
        clean[str(method)] = rank
    if sorted(clean.values()) != list(range(1, len(clean) + 1)):
        raise NotAPermutation(line_no, clean.values())
    return RankingRecord(
        object_id=str(raw["object_id"]),
        view_id=str(raw["view_id"]),
        criterion=criterion,
        ranks=clean,
    )


def parse_records(stream, strict: bool = True) -> tuple[list[RankingRecord], list[tuple[int, str]]]:
    """Parse line-delimited JSON ranking records.

    ``stream`` is any iterable of lines (an open file works). Returns the
    parsed records plus a list of (line number, reason) for skipped lines.
    In strict mode the first malformed line is fatal, and so is an empty
    stream.
    """
    records: list[RankingRecord] = []
    skipped: list[tuple[int, str]] = []
    line_no = 0
    for line_no, line in enumerate(stream, start=1):
        if not line.strip():
            continue
        try:
            records.append(_parse_line(line_no, line))
        except (ParseError, NotAPermutation) as exc:
            if strict:
                raise
            skipped.append((line_no, str(exc)))
    if strict and not records:
        raise ParseError(0, "empty record stream")
    return records, skipped


def aggregate(
    records: list[RankingRecord],
    criterion: str,
    flat: bool = False,
) -> dict[str, float]:
    """Mean rank per method for one criterion.

    Default is two-level averaging: mean over views within each object, then
    mean over objects. ``flat=True`` averages over all records directly.
    A record that lacks a method simply does not contribute to that method's
    mean.
    """
    pool = [r for r in records if r.criterion == criterion]
    if not pool:
        raise NoRecords(criterion)
    methods = sorted({m for r in pool for m in r.ranks})
    out: dict[str, float] = {}
    for method in methods:
        if flat:
            ranks = [r.ranks[method] for r in pool if method in r.ranks]
            out[method] = sum(ranks) / len(ranks)
            continue
        per_object: dict[str, list[int]] = {}
        for r in pool:
            if method in r.ranks:
                per_object.setdefault(r.object_id, []).append(r.ranks[method])
        object_means = [sum(v) / len(v) for v in per_object.values()]
        out[method] = sum(object_means) / len(object_means)
    return out


def aggregate_all(
    records: list[RankingRecord], flat: bool = False
) -> dict[str, dict[str, float]]:
    """Mean-rank tables for every criterion present in the records."""
    present = [c for c in CRITERIA if any(r.criterion == c for r in records)]
    return {c: aggregate(records, c, flat=flat) for c in present}


def render_table(tables: dict[str, dict[str, float]]) -> str:
    """Aligned text table, methods as rows, criteria as columns, 2 decimals."""
    criteria = [c for c in CRITERIA if c in tables]
    methods = sorted({m for t in tables.values() for m in t})
    name_width = max([len("method")] + [len(m) for m in methods])
    col_width = max([12] + [len(c) + 2 for c in criteria])
    header = "method".ljust(name_width) + "".join(c.rjust(col_width) for c in criteria)
    lines = [header]
    for method in methods:
        cells = []
        for c in criteria:
            value = tables[c].get(method)
            cells.append(("-" if value is None else f"{value:.2f}").rjust(col_width))
        lines.append(method.ljust(name_width) + "".join(cells))
    return "\n".join(lines)


def render_csv(tables: dict[str, dict[str, float]]) -> str:
    criteria = [c for c in CRITERIA if c in tables]
    methods = sorted({m for t in tables.values() for m in t})
    lines = ["method," + ",".join(criteria)]
    for method in methods:
        cells = []
        for c in criteria:
            value = tables[c].get(method)
            cells.append("" if value is None else f"{value:.2f}")
        lines.append(method + "," + ",".join(cells))
    return "\n".join(lines)
