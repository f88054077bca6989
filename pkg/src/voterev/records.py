"""Core ballot-record types and the validated in-memory election table.

The canonical layout is columnar: ballots carry integer codes for their
quasi-identifiers (precinct, ballot style, vote method) and each contest is a
dense int16 column of per-ballot mark codes. Negative codes are sentinels for
marks that are not a listed candidate; nonnegative codes index the contest's
listed choices. This keeps million-ballot elections cheap to group and tally
while :class:`CastVoteRecord` objects remain available for row-level work.
"""

from __future__ import annotations

from collections.abc import Iterable, Iterator, Sequence
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import DataError

# Mark code sentinels for the per-contest columns.
ABSENT = -4  # contest not on this ballot
WRITEIN = -3
OVERVOTE = -2
UNDERVOTE = -1
# Offset turning a mark code into a nonnegative tally column index.
MARK_OFFSET = 3
# Columns 0..2 of a tally matrix are writein/overvote/undervote; 3.. are choices.
N_SPECIAL = 3

CANONICAL_METHODS = ("mail", "in_person", "provisional")
COARSE_IN_PERSON = "in_person_or_provisional"

_METHOD_ALIASES = {
    "mail": "mail",
    "early": "mail",
    "absentee": "mail",
    "vote_by_mail": "mail",
    "vbm": "mail",
    "in_person": "in_person",
    "inperson": "in_person",
    "in-person": "in_person",
    "election_day": "in_person",
    "polling": "in_person",
    "poll": "in_person",
    "provisional": "provisional",
    "prov": "provisional",
    COARSE_IN_PERSON: COARSE_IN_PERSON,
}


def normalize_code(raw: str) -> str:
    """Trim and case-normalize a quasi-identifier or choice code."""
    return " ".join(str(raw).split()).upper()


def normalize_method(raw: str) -> str:
    """Map a raw vote-method label onto the canonical method vocabulary.

    Unknown labels are kept (lower-cased, underscored) so uncommon methods
    survive ingest instead of being coerced into a wrong bucket.
    """
    token = "_".join(str(raw).split()).lower().replace("-", "_")
    return _METHOD_ALIASES.get(token, token)


class MarkKind(Enum):
    CANDIDATE = "candidate"
    UNDERVOTE = "undervote"
    OVERVOTE = "overvote"
    WRITEIN = "writein"


@dataclass(frozen=True)
class Mark:
    """One contest's marking on one ballot."""

    kind: MarkKind
    choice_id: str | None = None

    def __post_init__(self) -> None:
        if self.kind is MarkKind.CANDIDATE and not self.choice_id:
            raise DataError("candidate mark requires a choice_id")
        if self.kind is not MarkKind.CANDIDATE and self.choice_id is not None:
            raise DataError(f"{self.kind.value} mark cannot carry a choice_id")

    @classmethod
    def candidate(cls, choice_id: str) -> "Mark":
        return cls(MarkKind.CANDIDATE, normalize_code(choice_id))

    @classmethod
    def undervote(cls) -> "Mark":
        return cls(MarkKind.UNDERVOTE)

    @classmethod
    def overvote(cls) -> "Mark":
        return cls(MarkKind.OVERVOTE)

    @classmethod
    def writein(cls) -> "Mark":
        return cls(MarkKind.WRITEIN)

    @property
    def is_candidate(self) -> bool:
        return self.kind is MarkKind.CANDIDATE

    def token(self) -> str:
        """Serialized form used in delimited files and finding exports."""
        if self.kind is MarkKind.CANDIDATE:
            return self.choice_id  # type: ignore[return-value]
        return f"<{self.kind.value}>"


@dataclass(frozen=True)
class ContestSpec:
    """A contest's identity and its listed (on-ballot) choices.

    Write-ins never appear in ``listed_choices``; a contest is contested when
    two or more choices are listed. Contests allowing more than one selection
    are retained at ingest but excluded from revelation computations.
    """

    contest_id: str
    title: str
    listed_choices: tuple[str, ...]
    votes_allowed: int = 1

    def __post_init__(self) -> None:
        if len(set(self.listed_choices)) != len(self.listed_choices):
            raise DataError(f"duplicate choice ids in contest {self.contest_id}")
        if self.votes_allowed < 1:
            raise DataError(f"votes_allowed must be >= 1 in contest {self.contest_id}")

    @property
    def contested(self) -> bool:
        return len(self.listed_choices) >= 2

    @property
    def single_winner(self) -> bool:
        return self.votes_allowed == 1


@dataclass
class CastVoteRecord:
    """One anonymous ballot: quasi-identifiers plus per-contest marks."""

    ballot_id: str
    precinct: str
    ballot_style: str
    vote_method: str
    marks: dict[str, Mark] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.ballot_id:
            raise DataError("ballot_id must be non-empty")
        for name in ("precinct", "ballot_style", "vote_method"):
            if not getattr(self, name):
                raise DataError(f"{name} must be non-empty on ballot {self.ballot_id}")


@dataclass(frozen=True)
class VotedRecord:
    """One row of the participation roster: who voted, with quasi-identifiers.

    ``vote_method_coarse`` may be a canonical method or the merged
    in-person/provisional bucket some jurisdictions publish.
    """

    voter_id: str
    precinct: str
    vote_method_coarse: str
    ballot_style: str | None = None
    name: str | None = None
    address: str | None = None

    def __post_init__(self) -> None:
        if not self.voter_id:
            raise DataError("voter_id must be non-empty")
        if not self.precinct:
            raise DataError(f"precinct must be non-empty for voter {self.voter_id}")


def _mark_from_code(code: int, contest: ContestSpec) -> Mark:
    if code >= 0:
        return Mark(MarkKind.CANDIDATE, contest.listed_choices[code])
    if code == UNDERVOTE:
        return Mark.undervote()
    if code == OVERVOTE:
        return Mark.overvote()
    if code == WRITEIN:
        return Mark.writein()
    raise DataError(f"no mark for sentinel code {code}")


def _mark_to_code(mark: Mark, choice_index: dict[str, int], contest_id: str) -> int:
    if mark.kind is MarkKind.CANDIDATE:
        try:
            return choice_index[mark.choice_id]  # type: ignore[index]
        except KeyError:
            raise DataError(
                f"choice {mark.choice_id!r} is not listed for contest {contest_id}"
            ) from None
    if mark.kind is MarkKind.UNDERVOTE:
        return UNDERVOTE
    if mark.kind is MarkKind.OVERVOTE:
        return OVERVOTE
    return WRITEIN


class Election:
    """Immutable columnar table of validated cast vote records.

    Construction validates the ballot-data invariants: unique ballot ids,
    non-empty quasi-identifiers, and marks restricted to listed choices of
    known contests. All arrays are read-only after construction.
    """

    def __init__(
        self,
        *,
        ballot_ids: Sequence[str],
        precinct_labels: Sequence[str],
        style_labels: Sequence[str],
        method_labels: Sequence[str],
        precinct_code: np.ndarray,
        style_code: np.ndarray,
        method_code: np.ndarray,
        contests: Sequence[ContestSpec],
        mark_columns: dict[str, np.ndarray],
        multi_marks: dict[tuple[str, str], tuple[Mark, ...]] | None = None,
        flags: Sequence[str] = (),
        check: bool = True,
    ) -> None:
        self.ballot_ids = list(ballot_ids)
        self.precinct_labels = tuple(precinct_labels)
        self.style_labels = tuple(style_labels)
        self.method_labels = tuple(method_labels)
        self.precinct_code = np.asarray(precinct_code, dtype=np.int32)
        self.style_code = np.asarray(style_code, dtype=np.int32)
        self.method_code = np.asarray(method_code, dtype=np.int32)
        self.contests = tuple(contests)
        self.contest_index = {c.contest_id: i for i, c in enumerate(self.contests)}
        self.mark_columns = {
            cid: np.asarray(col, dtype=np.int16) for cid, col in mark_columns.items()
        }
        self.multi_marks = dict(multi_marks or {})
        self.flags = list(flags)
        self._unit_cache: dict[tuple, "object"] = {}
        if check:
            self._check()
        for arr in (self.precinct_code, self.style_code, self.method_code):
            arr.setflags(write=False)
        for col in self.mark_columns.values():
            col.setflags(write=False)

    def _check(self) -> None:
        n = len(self.ballot_ids)
        if len(set(self.ballot_ids)) != n:
            raise DataError("duplicate ballot_id in election table")
        for name, arr, labels in (
            ("precinct", self.precinct_code, self.precinct_labels),
            ("ballot_style", self.style_code, self.style_labels),
            ("vote_method", self.method_code, self.method_labels),
        ):
            if arr.shape != (n,):
                raise DataError(f"{name} column length mismatch")
            if n and (arr.min() < 0 or arr.max() >= len(labels)):
                raise DataError(f"{name} code out of range")
            if any(not lab for lab in labels):
                raise DataError(f"empty {name} label")
        if len(self.contest_index) != len(self.contests):
            raise DataError("duplicate contest_id")
        for cid, col in self.mark_columns.items():
            if cid not in self.contest_index:
                raise DataError(f"mark column for unknown contest {cid}")
            if col.shape != (n,):
                raise DataError(f"mark column length mismatch for {cid}")
            spec = self.contests[self.contest_index[cid]]
            if n and (col.max(initial=ABSENT) >= len(spec.listed_choices) or col.min(initial=0) < ABSENT):
                raise DataError(f"mark code out of range in contest {cid}")

    # -- basic accessors ---------------------------------------------------

    @property
    def n_ballots(self) -> int:
        return len(self.ballot_ids)

    def contest(self, contest_id: str) -> ContestSpec:
        return self.contests[self.contest_index[contest_id]]

    def revelation_contests(self, contested_only: bool = True) -> list[ContestSpec]:
        """Contests eligible for revelation math: single-winner, with marks."""
        out = []
        for spec in self.contests:
            if spec.contest_id not in self.mark_columns:
                continue
            if not spec.single_winner:
                continue
            if contested_only and not spec.contested:
                continue
            out.append(spec)
        return out

    def qi_values(self, dim: str) -> tuple[str, ...]:
        return {
            "precinct": self.precinct_labels,
            "ballot_style": self.style_labels,
            "vote_method": self.method_labels,
        }[dim]

    def qi_codes(self, dim: str) -> np.ndarray:
        return {
            "precinct": self.precinct_code,
            "ballot_style": self.style_code,
            "vote_method": self.method_code,
        }[dim]

    def record(self, i: int) -> CastVoteRecord:
        marks: dict[str, Mark] = {}
        for cid, col in self.mark_columns.items():
            code = int(col[i])
            if code == ABSENT:
                continue
            marks[cid] = _mark_from_code(code, self.contests[self.contest_index[cid]])
        for (bid, cid), extra in self.multi_marks.items():
            if bid == self.ballot_ids[i]:
                marks[cid] = extra[0]
        return CastVoteRecord(
            ballot_id=self.ballot_ids[i],
            precinct=self.precinct_labels[self.precinct_code[i]],
            ballot_style=self.style_labels[self.style_code[i]],
            vote_method=self.method_labels[self.method_code[i]],
            marks=marks,
        )

    def iter_records(self) -> Iterator[CastVoteRecord]:
        return (self.record(i) for i in range(self.n_ballots))

    def mark(self, ballot_idx: int, contest_id: str) -> Mark | None:
        col = self.mark_columns.get(contest_id)
        if col is None:
            return None
        code = int(col[ballot_idx])
        if code == ABSENT:
            return None
        return _mark_from_code(code, self.contests[self.contest_index[contest_id]])

    def candidate_tally(self) -> dict[tuple[str, str], int]:
        """Total candidate-mark counts per (contest, choice), side marks included."""
        out: dict[tuple[str, str], int] = {}
        for spec in self.contests:
            col = self.mark_columns.get(spec.contest_id)
            if col is None:
                continue
            counts = np.bincount(
                col[col >= 0], minlength=len(spec.listed_choices)
            )
            for k, choice in enumerate(spec.listed_choices):
                out[(spec.contest_id, choice)] = int(counts[k])
        for (_, cid), extra in self.multi_marks.items():
            for mark in extra:
                if mark.is_candidate:
                    key = (cid, mark.choice_id)
                    out[key] = out.get(key, 0) + 1
        return out

    # -- construction ------------------------------------------------------

    @classmethod
    def from_records(
        cls,
        records: Iterable[CastVoteRecord],
        contests: Iterable[ContestSpec],
        flags: Sequence[str] = (),
    ) -> "Election":
        records = list(records)
        contests = list(contests)
        contest_by_id = {c.contest_id: c for c in contests}
        choice_index = {
            c.contest_id: {ch: k for k, ch in enumerate(c.listed_choices)}
            for c in contests
        }
        n = len(records)

        def factorize(values: list[str]) -> tuple[np.ndarray, list[str]]:
            labels: list[str] = []
            index: dict[str, int] = {}
            codes = np.empty(n, dtype=np.int32)
            for i, v in enumerate(values):
                code = index.get(v)
                if code is None:
                    code = index[v] = len(labels)
                    labels.append(v)
                codes[i] = code
            return codes, labels

        precinct_code, precincts = factorize([r.precinct for r in records])
        style_code, styles = factorize([r.ballot_style for r in records])
        method_code, methods = factorize([r.vote_method for r in records])

        seen_contests = {cid for r in records for cid in r.marks}
        unknown = seen_contests - set(contest_by_id)
        if unknown:
            raise DataError(f"marks reference unknown contests: {sorted(unknown)}")
        mark_columns = {
            cid: np.full(n, ABSENT, dtype=np.int16) for cid in sorted(seen_contests)
        }
        for i, r in enumerate(records):
            for cid, mark in r.marks.items():
                mark_columns[cid][i] = _mark_to_code(mark, choice_index[cid], cid)

        return cls(
            ballot_ids=[r.ballot_id for r in records],
            precinct_labels=precincts,
            style_labels=styles,
            method_labels=methods,
            precinct_code=precinct_code,
            style_code=style_code,
            method_code=method_code,
            contests=contests,
            mark_columns=mark_columns,
            flags=flags,
        )
