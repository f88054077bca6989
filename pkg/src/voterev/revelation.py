"""Per-ballot revelation engine.

Finds, for each ballot and contest, whether the released tallies at a chosen
granularity expose that ballot's mark: to everyone (public, unit unanimous),
to a small coalition pooling its own α votes (local), or as a high-posterior
guess under uniform assignment of ballots to unit members (probabilistic).

Default abstention convention: only candidate marks yield findings; units
unanimous in a residual mark (undervote/overvote/write-in) are counted only
under ``count_all_abstain=True``. Residual marks always break candidate
unanimity either way.
"""

from __future__ import annotations

from collections.abc import Callable, Iterable, Sequence
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DataError
from .records import (
    MARK_OFFSET,
    N_SPECIAL,
    ABSENT,
    UNDERVOTE,
    Election,
    Mark,
)
from .tallies import FindingKind, contest_tally
from .units import Granularity, ReportingUnitKey, UnitAssignment, assign_units


@dataclass(frozen=True)
class RevelationFinding:
    """One ballot's mark in one contest, exposed by released tallies."""

    ballot_id: str
    contest_id: str
    kind: FindingKind
    revealed_choice: Mark
    unit_key: ReportingUnitKey
    unit_size: int  # ballots in the unit that contain this contest

    def sort_key(self) -> tuple:
        return (
            self.contest_id,
            self.kind.label,
            self.unit_key.values,
            self.ballot_id,
        )


def _qualifier_matrix(
    tally: np.ndarray, kind: FindingKind, count_all_abstain: bool
) -> np.ndarray:
    """Which (unit, mark) cells are revealed under the given kind."""
    n_c = tally.sum(axis=1)
    occupied = tally > 0
    if kind.category == "public":
        qual = occupied & (tally == n_c[:, None])
    elif kind.category == "local":
        different = n_c[:, None] - tally
        qual = occupied & (different >= 1) & (different <= int(kind.level))
    else:
        denom = np.maximum(n_c, 1)[:, None]
        qual = occupied & (tally / denom >= kind.level)
    if kind.category == "probabilistic" or not count_all_abstain:
        qual[:, :N_SPECIAL] = False
    return qual


def _revealed_ballot_mask(
    election: Election,
    assignment: UnitAssignment,
    contest_id: str,
    qual: np.ndarray,
) -> np.ndarray:
    """Per-ballot boolean: does the ballot's own mark sit in a revealed cell."""
    col = election.mark_columns[contest_id]
    mask = np.zeros(election.n_ballots, dtype=bool)
    idx = np.nonzero(col != ABSENT)[0]
    mask[idx] = qual[
        assignment.unit_of_ballot[idx],
        col[idx].astype(np.int64) + MARK_OFFSET,
    ]
    return mask


def _emit_findings(
    election: Election,
    assignment: UnitAssignment,
    contest_id: str,
    kind: FindingKind,
    mask: np.ndarray,
    contest_ballots: np.ndarray,
) -> Iterable[RevelationFinding]:
    for i in np.nonzero(mask)[0]:
        u = int(assignment.unit_of_ballot[i])
        yield RevelationFinding(
            ballot_id=election.ballot_ids[i],
            contest_id=contest_id,
            kind=kind,
            revealed_choice=election.mark(int(i), contest_id),
            unit_key=assignment.key(u),
            unit_size=int(contest_ballots[u]),
        )


def _findings_for_kind(
    election: Election,
    granularity: Granularity,
    kind: FindingKind,
    contested_only: bool,
    count_all_abstain: bool,
) -> set[RevelationFinding]:
    assignment = assign_units(election, granularity)
    out: set[RevelationFinding] = set()
    for spec in election.revelation_contests(contested_only):
        tally = contest_tally(election, assignment, spec.contest_id)
        qual = _qualifier_matrix(tally, kind, count_all_abstain)
        if not qual.any():
            continue
        mask = _revealed_ballot_mask(election, assignment, spec.contest_id, qual)
        out.update(
            _emit_findings(
                election, assignment, spec.contest_id, kind, mask,
                tally.sum(axis=1),
            )
        )
    return out


def public_revelations(
    election: Election,
    granularity: Granularity,
    contested_only: bool = True,
    count_all_abstain: bool = False,
) -> set[RevelationFinding]:
    """Ballots whose unit marked a contest unanimously."""
    return _findings_for_kind(
        election, granularity, FindingKind.public(), contested_only,
        count_all_abstain,
    )


def local_revelations(
    election: Election,
    granularity: Granularity,
    coalition_size: int,
    contested_only: bool = True,
    count_all_abstain: bool = False,
) -> set[RevelationFinding]:
    """Ballots a coalition of up to ``coalition_size`` insiders can deduce.

    A mark group is exposed when every ballot outside it would fit inside a
    coalition of that size: 1 <= (others) <= coalition_size. Publicly
    revealed ballots (others = 0) are excluded by construction, so these
    findings are the increments past public. ``coalition_size=0`` is empty.
    """
    if coalition_size < 0:
        raise ConfigError("coalition_size must be >= 0")
    if coalition_size == 0:
        return set()
    return _findings_for_kind(
        election, granularity, FindingKind.local(coalition_size),
        contested_only, count_all_abstain,
    )


def probabilistic_revelations(
    election: Election,
    granularity: Granularity,
    threshold: float,
    contested_only: bool = True,
) -> set[RevelationFinding]:
    """Ballots matching a candidate whose unit share reaches the threshold.

    Findings attach only to ballots actually carrying the dominant mark,
    since the uniform-assignment guess is right only for them. Unanimous
    units qualify too, so at threshold 1.0 the set collapses to the public
    one (default abstention mode).
    """
    kind = FindingKind.probabilistic(threshold)
    return _findings_for_kind(election, granularity, kind, contested_only, False)


def probabilistic_unit_voters(
    election: Election,
    granularity: Granularity,
    threshold: float,
    contested_only: bool = True,
) -> int:
    """Alternate count: every voter in a unit-contest where some candidate's
    share reaches the threshold, whatever they themselves marked."""
    kind = FindingKind.probabilistic(threshold)
    assignment = assign_units(election, granularity)
    any_ballot = np.zeros(election.n_ballots, dtype=bool)
    for spec in election.revelation_contests(contested_only):
        tally = contest_tally(election, assignment, spec.contest_id)
        qual = _qualifier_matrix(tally, kind, False)
        unit_hit = qual.any(axis=1)
        col = election.mark_columns[spec.contest_id]
        present = col != ABSENT
        any_ballot |= present & unit_hit[assignment.unit_of_ballot]
    return int(any_ballot.sum())


def revealed_voter_mask(
    election: Election,
    granularity: Granularity,
    kind: FindingKind,
    contested_only: bool = True,
    count_all_abstain: bool = False,
) -> np.ndarray:
    """Per-ballot boolean: at least one contest revealed under ``kind``.

    Count-only fast path; skips materializing finding objects.
    """
    assignment = assign_units(election, granularity)
    return revealed_mask_in_units(
        election, assignment, kind, contested_only, count_all_abstain
    )


def revealed_mask_in_units(
    election: Election,
    assignment: UnitAssignment,
    kind: FindingKind,
    contested_only: bool = True,
    count_all_abstain: bool = False,
) -> np.ndarray:
    """Same per-ballot mask over a prebuilt assignment.

    The assignment need not come from :func:`assign_units`; the policy lab
    passes merged groups whose keys span mixed dimension sets.
    """
    out = np.zeros(election.n_ballots, dtype=bool)
    for spec in election.revelation_contests(contested_only):
        tally = contest_tally(election, assignment, spec.contest_id)
        qual = _qualifier_matrix(tally, kind, count_all_abstain)
        if qual.any():
            out |= _revealed_ballot_mask(election, assignment, spec.contest_id, qual)
    return out


def expand_unit_findings(
    unit_findings: Iterable,
    election: Election,
    granularity: Granularity,
) -> set[RevelationFinding]:
    """Attach unit-level findings to the ballots carrying the exposed mark.

    Pure bookkeeping: the revelation logic happened at the unit level; this
    step only looks up which ballots sit in the unit with that mark.
    """
    assignment = assign_units(election, granularity)
    unit_index = {tuple(kv): u for u, kv in enumerate(assignment.key_values)}
    out: set[RevelationFinding] = set()
    by_unit_contest: dict[tuple[int, str], list] = {}
    for uf in unit_findings:
        u = unit_index.get(tuple(uf.key_values))
        if u is None:
            raise DataError(f"no unit with key {uf.key_values}")
        by_unit_contest.setdefault((u, uf.contest_id), []).append(uf)

    for (u, contest_id), ufs in by_unit_contest.items():
        col = election.mark_columns[contest_id]
        in_unit = np.nonzero(
            (assignment.unit_of_ballot == u) & (col != ABSENT)
        )[0]
        spec = election.contest(contest_id)
        for uf in ufs:
            matched = []
            for i in in_unit:
                mark = election.mark(int(i), contest_id)
                if mark.token() == uf.mark_token:
                    matched.append((int(i), mark))
            if len(matched) != uf.revealed_count:
                raise DataError(
                    f"unit finding claims {uf.revealed_count} ballots with "
                    f"{uf.mark_token!r}, found {len(matched)}"
                )
            for i, mark in matched:
                out.add(
                    RevelationFinding(
                        ballot_id=election.ballot_ids[i],
                        contest_id=contest_id,
                        kind=uf.kind,
                        revealed_choice=mark,
                        unit_key=assignment.key(u),
                        unit_size=uf.contest_ballots,
                    )
                )
    return out


@dataclass(frozen=True)
class RevelationSummary:
    """Voter-level rollup: voters with at least one revealed contest."""

    granularity: str
    total_voters: int
    public_voters: int
    local_increments: dict[int, int]
    probabilistic_voters: dict[float, int]
    any_revealed: int

    def percent(self, count: int) -> float:
        if self.total_voters == 0:
            return 0.0
        return 100.0 * count / self.total_voters

    def cumulative_local(self, coalition_size: int) -> int:
        total = self.public_voters
        for a in sorted(self.local_increments):
            if a <= coalition_size:
                total += self.local_increments[a]
        return total


def any_contest_summary(
    findings: Iterable[RevelationFinding], total_voters: int
) -> RevelationSummary:
    """Count voters with at least one finding, by kind.

    Local counts are reported as increments: voters newly revealed at each
    coalition size beyond public and all smaller sizes.
    """
    by_kind: dict[FindingKind, set[str]] = {}
    granularities = set()
    for f in findings:
        by_kind.setdefault(f.kind, set()).add(f.ballot_id)
        granularities.add(f.unit_key.granularity.name)
    if len(granularities) > 1:
        raise DataError(f"findings mix granularities: {sorted(granularities)}")
    all_revealed = set().union(*by_kind.values()) if by_kind else set()
    if total_voters < len(all_revealed):
        raise DataError("more revealed ballots than voters")

    public = by_kind.get(FindingKind.public(), set())
    increments: dict[int, int] = {}
    seen = set(public)
    local_kinds = sorted(
        (k for k in by_kind if k.category == "local"), key=lambda k: k.level
    )
    for kind in local_kinds:
        new = by_kind[kind] - seen
        increments[int(kind.level)] = len(new)
        seen |= new
    probabilistic = {
        float(k.level): len(v)
        for k, v in by_kind.items()
        if k.category == "probabilistic"
    }
    return RevelationSummary(
        granularity=granularities.pop() if granularities else "",
        total_voters=total_voters,
        public_voters=len(public),
        local_increments=increments,
        probabilistic_voters=probabilistic,
        any_revealed=len(all_revealed),
    )


@dataclass(frozen=True)
class GroupRate:
    group: str
    voters: int
    revealed: int

    @property
    def rate(self) -> float:
        return self.revealed / self.voters if self.voters else 0.0


def decompose_by(
    findings: Iterable[RevelationFinding],
    election: Election,
    dimension: str,
    style_classifier: Callable[[str], str] | None = None,
    exclude_styles: Sequence[str] = (),
    exclude_contests: Sequence[str] = (),
) -> list[GroupRate]:
    """Conditional revelation rates by voter group.

    ``dimension`` is one of ``vote_method``, ``ballot_style_type``,
    ``contest``, or ``choice:<contest_id>``. The contest dimension computes
    per-contest rates over ballots containing that contest and honors the
    exclusion lists; the others count a voter as revealed when any passed
    finding names their ballot.
    """
    findings = list(findings)
    ballot_pos = {bid: i for i, bid in enumerate(election.ballot_ids)}

    if dimension == "contest":
        excluded_styles = {s for s in exclude_styles}
        keep = np.ones(election.n_ballots, dtype=bool)
        if excluded_styles:
            style_of = np.array(
                [s in excluded_styles for s in election.style_labels]
            )
            keep = ~style_of[election.style_code]
        rows = []
        revealed_by_contest: dict[str, set[str]] = {}
        for f in findings:
            revealed_by_contest.setdefault(f.contest_id, set()).add(f.ballot_id)
        for spec in election.revelation_contests(contested_only=False):
            if spec.contest_id in exclude_contests:
                continue
            col = election.mark_columns[spec.contest_id]
            voter_mask = (col != ABSENT) & keep
            revealed = sum(
                1
                for bid in revealed_by_contest.get(spec.contest_id, ())
                if voter_mask[ballot_pos[bid]]
            )
            rows.append(
                GroupRate(spec.contest_id, int(voter_mask.sum()), revealed)
            )
        return rows

    revealed_ballots = {f.ballot_id for f in findings}
    if dimension == "vote_method":
        group_of = [
            election.method_labels[c] for c in election.method_code
        ]
    elif dimension == "ballot_style_type":
        if style_classifier is None:
            raise ConfigError("ballot_style_type needs a style classifier")
        type_of_style = {s: style_classifier(s) for s in election.style_labels}
        group_of = [
            type_of_style[election.style_labels[c]] for c in election.style_code
        ]
    elif dimension.startswith("choice:"):
        contest_id = dimension.split(":", 1)[1]
        if contest_id not in election.mark_columns:
            raise ConfigError(f"unknown contest {contest_id!r}")
        col = election.mark_columns[contest_id]
        group_of = []
        for i in range(election.n_ballots):
            mark = election.mark(i, contest_id)
            group_of.append(mark.token() if mark is not None else None)
    else:
        raise ConfigError(f"unknown decomposition dimension {dimension!r}")

    voters: dict[str, int] = {}
    revealed: dict[str, int] = {}
    for i, g in enumerate(group_of):
        if g is None:
            continue
        voters[g] = voters.get(g, 0) + 1
        if election.ballot_ids[i] in revealed_ballots:
            revealed[g] = revealed.get(g, 0) + 1
    return [
        GroupRate(g, voters[g], revealed.get(g, 0)) for g in sorted(voters)
    ]


@dataclass(frozen=True)
class ContestStat:
    contest_id: str
    ballots: int
    undervote_rate: float
    lopsidedness: float | None  # None when no candidate votes were cast

    @property
    def lopsidedness_defined(self) -> bool:
        return self.lopsidedness is not None


def contest_stats(election: Election) -> list[ContestStat]:
    """Undervote rate and leading-choice share per contest."""
    rows = []
    for spec in election.contests:
        col = election.mark_columns.get(spec.contest_id)
        if col is None:
            continue
        ballots = int((col != ABSENT).sum())
        if ballots == 0:
            rows.append(ContestStat(spec.contest_id, 0, 0.0, None))
            continue
        undervotes = int((col == UNDERVOTE).sum())
        cand = np.bincount(col[col >= 0], minlength=len(spec.listed_choices))
        total_cand = int(cand.sum())
        lopsided = float(cand.max() / total_cand) if total_cand else None
        rows.append(
            ContestStat(
                spec.contest_id, ballots, undervotes / ballots, lopsided
            )
        )
    return rows
