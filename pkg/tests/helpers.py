"""Shared fixture builders for the test suite."""

import numpy as np

from voterev.records import CastVoteRecord, ContestSpec, Election, Mark

DEFAULT_CONTESTS = (
    ContestSpec("C1", "Contest One", ("A", "B")),
    ContestSpec("C2", "Contest Two", ("X", "Y", "Z")),
    ContestSpec("C3", "Contest Three", ("P", "Q")),
)


def random_election(
    seed,
    n_ballots=60,
    n_precincts=3,
    n_styles=2,
    n_methods=2,
    contests=DEFAULT_CONTESTS,
    residual_prob=0.12,
    concentration=1.2,
):
    """Random small election; contest presence is determined by style.

    Style S0 carries every contest, the last style only the first contest
    (a federal-only analog); middle styles drop the tail. Residual marks are
    split among undervote, overvote, and write-in.
    """
    rng = np.random.default_rng(seed)
    methods = ["mail", "in_person", "provisional"][:n_methods]
    styles = [f"S{j}" for j in range(n_styles)]
    style_contests = {}
    for j, s in enumerate(styles):
        if j == 0:
            style_contests[s] = [c.contest_id for c in contests]
        elif j == n_styles - 1 and n_styles > 1:
            style_contests[s] = [contests[0].contest_id]
        else:
            style_contests[s] = [c.contest_id for c in contests[: max(1, len(contests) - j)]]
    by_id = {c.contest_id: c for c in contests}

    records = []
    for i in range(n_ballots):
        style = styles[rng.integers(n_styles)]
        marks = {}
        for cid in style_contests[style]:
            spec = by_id[cid]
            r = rng.random()
            if r < residual_prob:
                kind = rng.integers(3)
                marks[cid] = (
                    Mark.undervote(), Mark.overvote(), Mark.writein()
                )[kind]
            else:
                w = rng.dirichlet([concentration] * len(spec.listed_choices))
                choice = rng.choice(len(spec.listed_choices), p=w)
                marks[cid] = Mark.candidate(spec.listed_choices[choice])
        records.append(
            CastVoteRecord(
                ballot_id=f"b{i:05d}",
                precinct=f"P{rng.integers(n_precincts)}",
                ballot_style=style,
                vote_method=methods[rng.integers(n_methods)],
                marks=marks,
            )
        )
    return Election.from_records(records, list(contests))


def election_from_group_marks(group_marks, contest=None):
    """Build an election from {(precinct, style, method): [mark, ...]}.

    Same mark vocabulary as :func:`election_from_unit_marks`, with all three
    quasi-identifiers under the caller's control.
    """
    if contest is None:
        choices = {
            m
            for marks in group_marks.values()
            for m in marks
            if m not in ("under", "over", "writein", None)
        }
        contest = ContestSpec("C1", "Contest One", tuple(sorted(choices | {"A", "B"})))
    special = {
        "under": Mark.undervote(),
        "over": Mark.overvote(),
        "writein": Mark.writein(),
    }
    records = []
    i = 0
    for (precinct, style, method), marks in group_marks.items():
        for m in marks:
            ballot_marks = {}
            if m is not None:
                ballot_marks[contest.contest_id] = special.get(m) or Mark.candidate(m)
            records.append(
                CastVoteRecord(
                    ballot_id=f"b{i:05d}",
                    precinct=precinct,
                    ballot_style=style,
                    vote_method=method,
                    marks=ballot_marks,
                )
            )
            i += 1
    return Election.from_records(records, [contest])


def election_from_unit_marks(unit_marks, contest=None):
    """Build an election from {precinct: [mark, ...]} for a single contest.

    Marks are choice-id strings or one of "under"/"over"/"writein"/None
    (None = ballot does not contain the contest). One style, one method.
    """
    if contest is None:
        choices = {
            m
            for marks in unit_marks.values()
            for m in marks
            if m not in ("under", "over", "writein", None)
        }
        # keep the contest contested even when the fixture is unanimous
        contest = ContestSpec("C1", "Contest One", tuple(sorted(choices | {"A", "B"})))
    special = {
        "under": Mark.undervote(),
        "over": Mark.overvote(),
        "writein": Mark.writein(),
    }
    records = []
    i = 0
    for precinct, marks in unit_marks.items():
        for m in marks:
            ballot_marks = {}
            if m is not None:
                ballot_marks[contest.contest_id] = special.get(m) or Mark.candidate(m)
            records.append(
                CastVoteRecord(
                    ballot_id=f"b{i:05d}",
                    precinct=precinct,
                    ballot_style="S1",
                    vote_method="mail",
                    marks=ballot_marks,
                )
            )
            i += 1
    return Election.from_records(records, [contest])
