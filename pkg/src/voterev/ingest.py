"""Reading cast-vote-record exports into validated elections.

Three layouts are supported, all declared by a :class:`FormatDescriptor`:

* ``long`` — one row per (ballot, contest) with a choice column,
* ``wide`` — one row per ballot, one column per contest,
* ``jsonl`` — one record per line with a ``marks`` object.

The wide reader is the fast path: columns are factorized through polars
categoricals, so million-ballot files stay cheap. Long and jsonl trade speed
for flexibility.
"""

from __future__ import annotations

import json
from collections.abc import Sequence
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import polars as pl

from .errors import ConfigError, IngestError
from .records import (
    ABSENT,
    OVERVOTE,
    UNDERVOTE,
    WRITEIN,
    CastVoteRecord,
    ContestSpec,
    Election,
    Mark,
    normalize_code,
    normalize_method,
)

QI_ROLES = ("ballot_id", "precinct", "ballot_style", "vote_method")


@dataclass(frozen=True)
class FormatDescriptor:
    """Declares how a CVR export maps onto the normalized schema."""

    layout: str
    delimiter: str = ","
    columns: dict[str, str] = field(default_factory=dict)
    contest_columns: tuple[str, ...] | None = None  # wide: None = all others
    undervote_token: str = "<undervote>"
    overvote_token: str = "<overvote>"
    writein_token: str = "<writein>"

    def __post_init__(self) -> None:
        if self.layout not in ("long", "wide", "jsonl"):
            raise ConfigError(f"unknown layout {self.layout!r}")
        if self.layout != "jsonl":
            missing = [r for r in QI_ROLES if r not in self.columns]
            if missing:
                raise ConfigError(f"descriptor missing column roles: {missing}")
            if self.layout == "long":
                for role in ("contest", "choice"):
                    if role not in self.columns:
                        raise ConfigError(f"long layout needs a {role} column")

    @classmethod
    def from_dict(cls, raw: dict) -> "FormatDescriptor":
        known = {
            "layout", "delimiter", "columns", "contest_columns",
            "undervote_token", "overvote_token", "writein_token",
        }
        bad = set(raw) - known
        if bad:
            raise ConfigError(f"unknown descriptor fields: {sorted(bad)}")
        raw = dict(raw)
        if "contest_columns" in raw and raw["contest_columns"] is not None:
            raw["contest_columns"] = tuple(raw["contest_columns"])
        return cls(**raw)

    @classmethod
    def from_json_file(cls, path: str | Path) -> "FormatDescriptor":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def special_code(self, token: str) -> int | None:
        token = normalize_code(token)
        if token == normalize_code(self.undervote_token):
            return UNDERVOTE
        if token == normalize_code(self.overvote_token):
            return OVERVOTE
        if token == normalize_code(self.writein_token):
            return WRITEIN
        return None


@dataclass
class IngestReport:
    rows_total: int = 0
    ballots: int = 0
    rejected: list[tuple[int, str]] = field(default_factory=list)
    contests: int = 0
    precincts: int = 0
    styles: int = 0
    methods: int = 0
    flags: list[str] = field(default_factory=list)

    @property
    def rows_rejected(self) -> int:
        return len(self.rejected)

    def to_dict(self) -> dict:
        return {
            "rows_total": self.rows_total,
            "rows_rejected": self.rows_rejected,
            "ballots": self.ballots,
            "contests": self.contests,
            "precincts": self.precincts,
            "styles": self.styles,
            "methods": self.methods,
            "rejected": [list(r) for r in self.rejected[:100]],
            "flags": self.flags,
        }


def read_contest_specs(path: str | Path) -> list[ContestSpec]:
    """Contest config: a JSON list of {contest_id, title?, choices, votes_allowed?}."""
    with open(path) as fh:
        raw = json.load(fh)
    specs = []
    for item in raw:
        try:
            specs.append(
                ContestSpec(
                    contest_id=normalize_code(item["contest_id"]),
                    title=item.get("title", item["contest_id"]),
                    listed_choices=tuple(
                        normalize_code(c) for c in item["choices"]
                    ),
                    votes_allowed=int(item.get("votes_allowed", 1)),
                )
            )
        except KeyError as e:
            raise ConfigError(f"contest config missing field {e}") from None
    return specs


def read_certified_totals(path: str | Path) -> dict[tuple[str, str], int]:
    """Certified canvass totals: JSON {contest_id: {choice: count}}."""
    with open(path) as fh:
        raw = json.load(fh)
    return {
        (normalize_code(cid), normalize_code(choice)): int(count)
        for cid, choices in raw.items()
        for choice, count in choices.items()
    }


def _read_table(path: Path, descriptor: FormatDescriptor) -> pl.DataFrame:
    try:
        return pl.read_csv(
            path, separator=descriptor.delimiter, infer_schema=False,
            comment_prefix="#",
        )
    except pl.exceptions.NoDataError:
        return pl.DataFrame()


def _require_columns(df: pl.DataFrame, names: Sequence[str]) -> None:
    missing = [n for n in names if n not in df.columns]
    if missing:
        raise IngestError(f"missing mandatory columns: {missing}")


def _finish_report(
    report: IngestReport, election: Election
) -> tuple[Election, IngestReport]:
    report.ballots = election.n_ballots
    report.contests = len(
        [c for c in election.contests if c.contest_id in election.mark_columns]
    )
    report.precincts = len(election.precinct_labels) if election.n_ballots else 0
    report.styles = len(election.style_labels) if election.n_ballots else 0
    report.methods = len(election.method_labels) if election.n_ballots else 0
    if election.n_ballots == 0 and "empty_input" not in report.flags:
        report.flags.append("empty_input")
    return election, report


def ingest_cvr(
    path: str | Path,
    descriptor: FormatDescriptor,
    contests: Sequence[ContestSpec] | None = None,
) -> tuple[Election, IngestReport]:
    """Parse a CVR export; reject bad rows, fail hard on structural damage."""
    path = Path(path)
    if not path.exists():
        raise IngestError(f"no such file: {path}")
    if descriptor.layout == "wide":
        return _ingest_wide(path, descriptor, contests)
    if descriptor.layout == "long":
        return _ingest_long(path, descriptor, contests)
    return _ingest_jsonl(path, descriptor, contests)


# -- wide layout (fast path) -----------------------------------------------


def _factorize_labels(series: pl.Series, normalize) -> tuple[np.ndarray, list[str]]:
    """Dictionary-encode a string column, normalizing only the dictionary.

    Raw values that normalize to the same label share one code.
    """
    cat = series.fill_null("").cast(pl.Categorical)
    codes = cat.to_physical().to_numpy().astype(np.int32)
    raw_labels = [normalize(c) for c in cat.cat.get_categories().to_list()]
    merged: dict[str, int] = {}
    remap = np.empty(max(len(raw_labels), 1), dtype=np.int32)
    for i, lab in enumerate(raw_labels):
        remap[i] = merged.setdefault(lab, len(merged))
    return remap[codes], list(merged)


def _ingest_wide(
    path: Path,
    descriptor: FormatDescriptor,
    contests: Sequence[ContestSpec] | None,
) -> tuple[Election, IngestReport]:
    df = _read_table(path, descriptor)
    report = IngestReport(rows_total=df.height)
    if df.height == 0:
        election = Election.from_records([], list(contests or []))
        return _finish_report(report, election)
    _require_columns(df, [descriptor.columns[r] for r in QI_ROLES])

    qi_names = [descriptor.columns[r] for r in QI_ROLES]
    if descriptor.contest_columns is not None:
        contest_names = list(descriptor.contest_columns)
        _require_columns(df, contest_names)
    else:
        contest_names = [c for c in df.columns if c not in qi_names]

    ballot_ids = df.get_column(descriptor.columns["ballot_id"]).to_list()
    if len(set(ballot_ids)) != len(ballot_ids):
        raise IngestError("duplicate ballot_id in input")
    if any(b is None or b == "" for b in ballot_ids):
        raise IngestError("empty ballot_id in input")
    precinct_code, precincts = _factorize_labels(
        df.get_column(descriptor.columns["precinct"]), normalize_code
    )
    style_code, styles = _factorize_labels(
        df.get_column(descriptor.columns["ballot_style"]), normalize_code
    )
    method_code, methods = _factorize_labels(
        df.get_column(descriptor.columns["vote_method"]), normalize_method
    )
    for name, labels in (
        ("precinct", precincts), ("ballot_style", styles),
        ("vote_method", methods),
    ):
        if any(lab == "" for lab in labels):
            raise IngestError(f"empty {name} value in input")

    inferred = contests is None
    spec_by_id: dict[str, ContestSpec] = {}
    if contests is not None:
        spec_by_id = {c.contest_id: c for c in contests}

    reject_mask = np.zeros(df.height, dtype=bool)
    reject_reason: dict[int, str] = {}
    columns: dict[str, tuple[np.ndarray, list[str]]] = {}
    for name in contest_names:
        cid = normalize_code(name)
        codes, tokens = _factorize_labels(df.get_column(name), normalize_code)
        columns[cid] = (codes, tokens)
        if inferred:
            choices = tuple(
                sorted(
                    t for t in tokens
                    if t and descriptor.special_code(t) is None
                )
            )
            spec_by_id[cid] = ContestSpec(cid, cid, choices)

    mark_columns: dict[str, np.ndarray] = {}
    multi_marks: dict[tuple[str, str], tuple[Mark, ...]] = {}
    for cid, (codes, tokens) in columns.items():
        spec = spec_by_id.get(cid)
        if spec is None:
            raise IngestError(f"contest column {cid!r} not in contest config")
        choice_index = {ch: k for k, ch in enumerate(spec.listed_choices)}
        lut = np.empty(len(tokens), dtype=np.int16)
        bad_tokens = []
        for t_idx, token in enumerate(tokens):
            if token == "":
                lut[t_idx] = ABSENT
                continue
            special = descriptor.special_code(token)
            if special is not None:
                lut[t_idx] = special
            elif token in choice_index:
                lut[t_idx] = choice_index[token]
            else:
                lut[t_idx] = ABSENT
                bad_tokens.append(t_idx)
        col = lut[codes]
        if bad_tokens:
            bad = np.isin(codes, np.array(bad_tokens))
            for i in np.nonzero(bad)[0]:
                reject_mask[i] = True
                reject_reason.setdefault(
                    int(i), f"unparseable mark in {cid}: {tokens[codes[i]]!r}"
                )
        if not spec.single_winner:
            present = col != ABSENT
            for i in np.nonzero(present)[0]:
                mark = _mark_from_wide_code(int(col[i]), spec)
                multi_marks[(ballot_ids[i], cid)] = (mark,)
            if f"multi_vote:{cid}" not in report.flags:
                report.flags.append(f"multi_vote:{cid}")
            continue
        mark_columns[cid] = col

    if inferred:
        report.flags.append("contests_inferred")
    keep = ~reject_mask
    for i in sorted(reject_reason):
        report.rejected.append((i + 1, reject_reason[i]))
    if reject_mask.any():
        ballot_ids = [b for i, b in enumerate(ballot_ids) if keep[i]]
        precinct_code = precinct_code[keep]
        style_code = style_code[keep]
        method_code = method_code[keep]
        mark_columns = {cid: col[keep] for cid, col in mark_columns.items()}
        kept_ids = set(ballot_ids)
        multi_marks = {
            (b, cid): m for (b, cid), m in multi_marks.items() if b in kept_ids
        }

    election = Election(
        ballot_ids=ballot_ids,
        precinct_labels=precincts,
        style_labels=styles,
        method_labels=methods,
        precinct_code=precinct_code,
        style_code=style_code,
        method_code=method_code,
        contests=tuple(spec_by_id.values()),
        mark_columns=mark_columns,
        multi_marks=multi_marks,
        flags=list(report.flags),
    )
    return _finish_report(report, election)


def _mark_from_wide_code(code: int, spec: ContestSpec) -> Mark:
    if code >= 0:
        return Mark.candidate(spec.listed_choices[code])
    if code == UNDERVOTE:
        return Mark.undervote()
    if code == OVERVOTE:
        return Mark.overvote()
    return Mark.writein()


# -- long layout -------------------------------------------------------------


def _ingest_long(
    path: Path,
    descriptor: FormatDescriptor,
    contests: Sequence[ContestSpec] | None,
) -> tuple[Election, IngestReport]:
    df = _read_table(path, descriptor)
    report = IngestReport(rows_total=df.height)
    if df.height == 0:
        election = Election.from_records([], list(contests or []))
        return _finish_report(report, election)
    cols = descriptor.columns
    _require_columns(
        df, [cols[r] for r in QI_ROLES] + [cols["contest"], cols["choice"]]
    )

    # ballot_id -> (qi values, marks); insertion order preserved
    ballots: dict[str, dict] = {}
    marks_raw: dict[str, dict[str, list[tuple[int, str]]]] = {}
    for row_no, row in enumerate(df.iter_rows(named=True), start=1):
        bid = (row[cols["ballot_id"]] or "").strip()
        precinct = normalize_code(row[cols["precinct"]] or "")
        style = normalize_code(row[cols["ballot_style"]] or "")
        method = normalize_method(row[cols["vote_method"]] or "")
        contest = normalize_code(row[cols["contest"]] or "")
        choice = normalize_code(row[cols["choice"]] or "")
        if not bid or not precinct or not style or not method or not contest:
            report.rejected.append((row_no, "missing identifier field"))
            continue
        qi = (precinct, style, method)
        seen = ballots.get(bid)
        if seen is None:
            ballots[bid] = {"qi": qi}
            marks_raw[bid] = {}
        elif seen["qi"] != qi:
            raise IngestError(
                f"ballot {bid!r} appears with conflicting quasi-identifiers"
            )
        marks_raw[bid].setdefault(contest, []).append((row_no, choice))

    inferred = contests is None
    spec_by_id = {c.contest_id: c for c in contests} if contests else {}
    if inferred:
        observed: dict[str, set[str]] = {}
        multi_cids = set()
        for per_ballot in marks_raw.values():
            for cid, entries in per_ballot.items():
                bucket = observed.setdefault(cid, set())
                for _, choice in entries:
                    if choice and descriptor.special_code(choice) is None:
                        bucket.add(choice)
                if len(entries) > 1:
                    multi_cids.add(cid)
        for cid, choices in observed.items():
            spec_by_id[cid] = ContestSpec(
                cid, cid, tuple(sorted(choices)),
                votes_allowed=2 if cid in multi_cids else 1,
            )
        report.flags.append("contests_inferred")
        if multi_cids:
            for cid in sorted(multi_cids):
                report.flags.append(f"multi_vote:{cid}")

    records = []
    multi_marks: dict[tuple[str, str], tuple[Mark, ...]] = {}
    dropped_ballots = set()
    for bid, info in ballots.items():
        marks: dict[str, Mark] = {}
        ok = True
        for cid, entries in marks_raw[bid].items():
            spec = spec_by_id.get(cid)
            if spec is None:
                report.rejected.append(
                    (entries[0][0], f"unknown contest {cid!r}")
                )
                ok = False
                continue
            parsed = []
            for row_no, choice in entries:
                special = descriptor.special_code(choice)
                if special == UNDERVOTE or choice == "":
                    parsed.append(Mark.undervote())
                elif special == OVERVOTE:
                    parsed.append(Mark.overvote())
                elif special == WRITEIN:
                    parsed.append(Mark.writein())
                elif choice in spec.listed_choices:
                    parsed.append(Mark.candidate(choice))
                else:
                    report.rejected.append(
                        (row_no, f"unparseable mark in {cid}: {choice!r}")
                    )
                    ok = False
            if not ok:
                continue
            if spec.single_winner:
                if len(parsed) > 1:
                    report.rejected.append(
                        (entries[0][0], f"multiple marks in {cid}")
                    )
                    ok = False
                elif parsed:
                    marks[cid] = parsed[0]
            else:
                multi_marks[(bid, cid)] = tuple(parsed)
                flag = f"multi_vote:{cid}"
                if flag not in report.flags:
                    report.flags.append(flag)
        if not ok:
            dropped_ballots.add(bid)
            continue
        precinct, style, method = info["qi"]
        records.append(
            CastVoteRecord(bid, precinct, style, method, marks)
        )
    multi_marks = {
        k: v for k, v in multi_marks.items() if k[0] not in dropped_ballots
    }
    election = Election.from_records(records, list(spec_by_id.values()))
    election.multi_marks.update(multi_marks)
    return _finish_report(report, election)


# -- jsonl layout ------------------------------------------------------------


def _ingest_jsonl(
    path: Path,
    descriptor: FormatDescriptor,
    contests: Sequence[ContestSpec] | None,
) -> tuple[Election, IngestReport]:
    rows = []
    report = IngestReport()
    with open(path) as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            report.rows_total += 1
            try:
                rows.append((line_no, json.loads(line)))
            except json.JSONDecodeError:
                report.rejected.append((line_no, "invalid record syntax"))

    inferred = contests is None
    spec_by_id = {c.contest_id: c for c in contests} if contests else {}
    if inferred:
        observed: dict[str, set[str]] = {}
        for _, raw in rows:
            for cid, token in (raw.get("marks") or {}).items():
                cid = normalize_code(cid)
                token = normalize_code(token)
                bucket = observed.setdefault(cid, set())
                if token and descriptor.special_code(token) is None:
                    bucket.add(token)
        spec_by_id = {
            cid: ContestSpec(cid, cid, tuple(sorted(choices)))
            for cid, choices in observed.items()
        }
        report.flags.append("contests_inferred")

    records = []
    seen_ids = set()
    for line_no, raw in rows:
        bid = str(raw.get("ballot_id") or "")
        if not bid:
            report.rejected.append((line_no, "missing ballot_id"))
            continue
        if bid in seen_ids:
            raise IngestError(f"duplicate ballot_id {bid!r}")
        try:
            precinct = normalize_code(raw["precinct"])
            style = normalize_code(raw["ballot_style"])
            method = normalize_method(raw["vote_method"])
        except KeyError as e:
            report.rejected.append((line_no, f"missing field {e}"))
            continue
        marks: dict[str, Mark] = {}
        ok = True
        for cid, token in (raw.get("marks") or {}).items():
            cid = normalize_code(cid)
            token = normalize_code(token)
            spec = spec_by_id.get(cid)
            if spec is None:
                report.rejected.append((line_no, f"unknown contest {cid!r}"))
                ok = False
                break
            special = descriptor.special_code(token)
            if special == UNDERVOTE or token == "":
                marks[cid] = Mark.undervote()
            elif special == OVERVOTE:
                marks[cid] = Mark.overvote()
            elif special == WRITEIN:
                marks[cid] = Mark.writein()
            elif token in spec.listed_choices:
                marks[cid] = Mark.candidate(token)
            else:
                report.rejected.append(
                    (line_no, f"unparseable mark in {cid}: {token!r}")
                )
                ok = False
                break
        if not ok:
            continue
        seen_ids.add(bid)
        records.append(CastVoteRecord(bid, precinct, style, method, marks))
    election = Election.from_records(records, list(spec_by_id.values()))
    return _finish_report(report, election)


# -- canvass validation ------------------------------------------------------


@dataclass
class ValidationReport:
    passed: bool
    discrepancies: dict[tuple[str, str], int]
    uncovered_contests: list[str]

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "discrepancies": {
                f"{cid}/{choice}": d
                for (cid, choice), d in sorted(self.discrepancies.items())
            },
            "uncovered_contests": self.uncovered_contests,
        }


def validate_against_canvass(
    election: Election, certified: dict[tuple[str, str], int]
) -> ValidationReport:
    """Exact integer comparison of CVR tallies against certified totals."""
    tally = election.candidate_tally()
    certified_contests = {cid for cid, _ in certified}
    uncovered = sorted(
        {
            c.contest_id
            for c in election.contests
            if c.contest_id in election.mark_columns
            and c.contested
            and c.contest_id not in certified_contests
        }
    )
    keys = set(tally) | set(certified)
    discrepancies = {}
    for key in keys:
        if key[0] not in certified_contests:
            continue
        diff = tally.get(key, 0) - certified.get(key, 0)
        if diff != 0:
            discrepancies[key] = diff
    return ValidationReport(
        passed=not discrepancies and not uncovered,
        discrepancies=discrepancies,
        uncovered_contests=uncovered,
    )
