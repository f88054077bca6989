"""Per-unit mark tallies and the published-aggregate view of an election.

Two finding routes meet here. The per-ballot engine (revelation module) scans
mark columns directly. The published route works from unit-level tallies
alone: :func:`findings_from_published` derives unit findings from counts
without ever touching a ballot's mark, which is what makes the
aggregates-equal-individual-records equivalence a real test instead of the
same code called twice.
"""

from __future__ import annotations

from collections.abc import Iterable, Sequence
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DataError
from .records import (
    MARK_OFFSET,
    N_SPECIAL,
    ABSENT,
    ContestSpec,
    Election,
    Mark,
)
from .units import Granularity, UnitAssignment, assign_units

_SPECIAL_TOKENS = ("<writein>", "<overvote>", "<undervote>")


@dataclass(frozen=True)
class FindingKind:
    """Revelation category, with its coalition size or threshold parameter."""

    category: str
    level: float | None = None

    def __post_init__(self) -> None:
        if self.category == "public":
            if self.level is not None:
                raise ConfigError("public findings carry no parameter")
        elif self.category == "local":
            if self.level is None or self.level < 1 or self.level != int(self.level):
                raise ConfigError("local findings need an integer coalition size >= 1")
        elif self.category == "probabilistic":
            if self.level is None or not 0.0 < self.level <= 1.0:
                raise ConfigError("probabilistic findings need a threshold in (0, 1]")
        else:
            raise ConfigError(f"unknown finding category {self.category!r}")

    @classmethod
    def public(cls) -> "FindingKind":
        return cls("public")

    @classmethod
    def local(cls, coalition_size: int) -> "FindingKind":
        return cls("local", int(coalition_size))

    @classmethod
    def probabilistic(cls, threshold: float) -> "FindingKind":
        return cls("probabilistic", float(threshold))

    @property
    def label(self) -> str:
        if self.category == "public":
            return "public"
        if self.category == "local":
            return f"local_{int(self.level)}"
        return f"probabilistic_{self.level:g}"


def column_token(contest: ContestSpec, col: int) -> str:
    """Mark token for a tally-matrix column."""
    if col < N_SPECIAL:
        return _SPECIAL_TOKENS[col]
    return contest.listed_choices[col - N_SPECIAL]


def token_mark(contest: ContestSpec, token: str) -> Mark:
    if token == "<writein>":
        return Mark.writein()
    if token == "<overvote>":
        return Mark.overvote()
    if token == "<undervote>":
        return Mark.undervote()
    if token in contest.listed_choices:
        return Mark.candidate(token)
    raise DataError(f"token {token!r} not valid in contest {contest.contest_id}")


def contest_tally(
    election: Election, assignment: UnitAssignment, contest_id: str
) -> np.ndarray:
    """Mark counts per unit for one contest: shape (units, 3 + choices).

    Columns 0..2 count write-ins, overvotes, undervotes; the rest follow the
    contest's listed-choice order. Ballots without the contest do not count.
    """
    spec = election.contest(contest_id)
    col = election.mark_columns[contest_id]
    width = N_SPECIAL + len(spec.listed_choices)
    present = col != ABSENT
    flat = (
        assignment.unit_of_ballot[present].astype(np.int64) * width
        + (col[present].astype(np.int64) + MARK_OFFSET)
    )
    counts = np.bincount(flat, minlength=assignment.n_units * width)
    return counts.reshape(assignment.n_units, width)


@dataclass
class PublishedTally:
    """What a jurisdiction would release at a granularity: counts only.

    ``counts[contest_id]`` has one row per unit (aligned with ``key_values``)
    and one column per mark token. No per-ballot information survives here.
    """

    granularity: Granularity
    key_values: list[tuple[str, ...]]
    unit_sizes: np.ndarray
    contests: tuple[ContestSpec, ...]
    counts: dict[str, np.ndarray]

    @property
    def n_units(self) -> int:
        return len(self.key_values)

    def contest(self, contest_id: str) -> ContestSpec:
        for c in self.contests:
            if c.contest_id == contest_id:
                return c
        raise DataError(f"unknown contest {contest_id}")

    def total_ballots(self) -> int:
        return int(self.unit_sizes.sum())

    def candidate_totals(self) -> dict[tuple[str, str], int]:
        out: dict[tuple[str, str], int] = {}
        for spec in self.contests:
            mat = self.counts[spec.contest_id]
            for k, choice in enumerate(spec.listed_choices):
                out[(spec.contest_id, choice)] = int(mat[:, N_SPECIAL + k].sum())
        return out


def publish_tallies(election: Election, granularity: Granularity) -> PublishedTally:
    assignment = assign_units(election, granularity)
    contests = tuple(
        c for c in election.contests if c.contest_id in election.mark_columns
    )
    counts = {
        c.contest_id: contest_tally(election, assignment, c.contest_id)
        for c in contests
    }
    return PublishedTally(
        granularity=granularity,
        key_values=list(assignment.key_values),
        unit_sizes=np.asarray(assignment.sizes, dtype=np.int64),
        contests=contests,
        counts=counts,
    )


@dataclass(frozen=True, order=True)
class UnitFinding:
    """A revelation stated at the unit level: which mark group is exposed."""

    key_values: tuple[str, ...]
    contest_id: str
    kind: FindingKind
    mark_token: str
    revealed_count: int
    contest_ballots: int


def findings_from_published(
    published: PublishedTally,
    *,
    alphas: Sequence[int] = (),
    thresholds: Sequence[float] = (),
    include_public: bool = True,
    contested_only: bool = True,
    count_all_abstain: bool = False,
) -> set[UnitFinding]:
    """Derive unit findings from released counts alone.

    Deliberately plain loops over count rows: this path must stay independent
    of the per-ballot engine so the two can check each other.
    """
    for a in alphas:
        FindingKind.local(a)
    for p in thresholds:
        FindingKind.probabilistic(p)

    out: set[UnitFinding] = set()
    for spec in published.contests:
        if not spec.single_winner:
            continue
        if contested_only and not spec.contested:
            continue
        mat = published.counts[spec.contest_id]
        for u in range(published.n_units):
            row = mat[u]
            n_c = int(row.sum())
            if n_c == 0:
                continue
            key = tuple(published.key_values[u])
            for j, c in enumerate(row.tolist()):
                if c == 0:
                    continue
                is_candidate = j >= N_SPECIAL
                token = column_token(spec, j)
                others = n_c - c
                if others == 0 and (is_candidate or count_all_abstain):
                    if include_public:
                        out.add(
                            UnitFinding(
                                key, spec.contest_id, FindingKind.public(),
                                token, c, n_c,
                            )
                        )
                for a in alphas:
                    if 1 <= others <= a and (is_candidate or count_all_abstain):
                        out.add(
                            UnitFinding(
                                key, spec.contest_id, FindingKind.local(a),
                                token, c, n_c,
                            )
                        )
                if is_candidate:
                    for p in thresholds:
                        if c / n_c >= p:
                            out.add(
                                UnitFinding(
                                    key, spec.contest_id,
                                    FindingKind.probabilistic(p), token, c, n_c,
                                )
                            )
    return out


def aggregate_findings(findings: Iterable) -> set[UnitFinding]:
    """Collapse per-ballot findings to unit findings for equivalence checks."""
    grouped: dict[tuple, list] = {}
    for f in findings:
        key = (
            tuple(f.unit_key.values),
            f.contest_id,
            f.kind,
            f.revealed_choice.token(),
            f.unit_size,
        )
        grouped.setdefault(key, []).append(f)
    return {
        UnitFinding(kv, cid, kind, token, len(group), n_c)
        for (kv, cid, kind, token, n_c), group in grouped.items()
    }
