"""Engine findings vs. a definitional brute-force pass, plus decompositions."""

from collections import Counter, defaultdict

import pytest

from helpers import election_from_unit_marks, random_election
from voterev.errors import ConfigError, DataError
from voterev.records import ContestSpec, Election, CastVoteRecord, Mark
from voterev.revelation import (
    any_contest_summary,
    contest_stats,
    decompose_by,
    expand_unit_findings,
    local_revelations,
    probabilistic_revelations,
    probabilistic_unit_voters,
    public_revelations,
    revealed_voter_mask,
)
from voterev.tallies import (
    FindingKind,
    aggregate_findings,
    findings_from_published,
    publish_tallies,
)
from voterev.units import BALLOT_EQUIVALENT, PRECINCT, granularity_by_name


def brute_force(election, granularity, kind, contested_only=True,
                count_all_abstain=False):
    """Definitional re-computation from raw records; returns
    (ballot_id, contest_id, mark token) triples."""
    groups = defaultdict(list)
    for rec in election.iter_records():
        row = {
            "precinct": rec.precinct,
            "ballot_style": rec.ballot_style,
            "vote_method": rec.vote_method,
        }
        groups[tuple(row[d] for d in granularity.dims)].append(rec)

    out = set()
    for recs in groups.values():
        contest_ids = {cid for r in recs for cid in r.marks}
        for cid in contest_ids:
            spec = election.contest(cid)
            if not spec.single_winner:
                continue
            if contested_only and not spec.contested:
                continue
            holders = [(r.ballot_id, r.marks[cid].token()) for r in recs
                       if cid in r.marks]
            n_c = len(holders)
            counts = Counter(token for _, token in holders)
            for token, c in counts.items():
                is_candidate = not token.startswith("<")
                others = n_c - c
                if kind.category == "public":
                    hit = others == 0 and (is_candidate or count_all_abstain)
                elif kind.category == "local":
                    hit = 1 <= others <= kind.level and (
                        is_candidate or count_all_abstain
                    )
                else:
                    hit = is_candidate and c / n_c >= kind.level
                if hit:
                    out |= {(b, cid, t) for b, t in holders if t == token}
    return out


def triples(findings):
    return {(f.ballot_id, f.contest_id, f.revealed_choice.token())
            for f in findings}


class TestWorkedExamples:
    def test_unanimous_unit_reveals_everyone(self):
        e = election_from_unit_marks({"P1": ["A"] * 10})
        fs = public_revelations(e, PRECINCT)
        assert len(fs) == 10
        assert {f.kind for f in fs} == {FindingKind.public()}
        assert all(f.unit_size == 10 for f in fs)

    def test_singleton_unit_always_reveals_candidate_marks(self):
        e = election_from_unit_marks({"P1": ["A"], "P2": ["B"]})
        assert len(public_revelations(e, PRECINCT)) == 2

    def test_residual_mark_blocks_unanimity(self):
        e = election_from_unit_marks({"P1": ["A"] * 5 + ["under"]})
        assert public_revelations(e, PRECINCT) == set()

    def test_near_unanimous_unit_local_alpha_one(self):
        e = election_from_unit_marks({"P1": ["A"] * 19 + ["B"]})
        fs = local_revelations(e, PRECINCT, 1)
        assert len(fs) == 19
        assert {f.revealed_choice.token() for f in fs} == {"A"}

    def test_local_alpha_zero_is_empty(self):
        e = election_from_unit_marks({"P1": ["A"] * 3})
        assert local_revelations(e, PRECINCT, 0) == set()

    def test_local_respects_coalition_bound(self):
        e = election_from_unit_marks({"P1": ["A"] * 8 + ["B"] * 2})
        assert local_revelations(e, PRECINCT, 1) == set()
        fs = local_revelations(e, PRECINCT, 2)
        # the two B voters pool and expose the eight A voters
        assert triples(fs) == {(f"b{i:05d}", "C1", "A") for i in range(8)}

    def test_probabilistic_share_boundary(self):
        e = election_from_unit_marks({"P1": ["A"] * 19 + ["B"]})
        fs = probabilistic_revelations(e, PRECINCT, 0.95)
        assert len(fs) == 19
        e2 = election_from_unit_marks({"P1": ["A"] * 94 + ["B"] * 6})
        assert probabilistic_revelations(e2, PRECINCT, 0.95) == set()

    def test_probabilistic_collapses_to_public_at_one(self):
        e = election_from_unit_marks(
            {"P1": ["A"] * 4, "P2": ["A"] * 9 + ["B"], "P3": ["under"] * 3}
        )
        prob = probabilistic_revelations(e, PRECINCT, 1.0)
        pub = public_revelations(e, PRECINCT)
        assert triples(prob) == triples(pub)

    def test_probabilistic_alternate_count_covers_whole_unit(self):
        e = election_from_unit_marks({"P1": ["A"] * 19 + ["B"]})
        assert probabilistic_unit_voters(e, PRECINCT, 0.95) == 20

    def test_all_abstain_mode(self):
        e = election_from_unit_marks({"P1": ["under"] * 3})
        assert public_revelations(e, PRECINCT) == set()
        fs = public_revelations(e, PRECINCT, count_all_abstain=True)
        assert len(fs) == 3
        assert {f.revealed_choice.token() for f in fs} == {"<undervote>"}

    def test_local_all_abstain_mode(self):
        e = election_from_unit_marks({"P1": ["under"] * 5 + ["A"]})
        assert local_revelations(e, PRECINCT, 1) == set()
        fs = local_revelations(e, PRECINCT, 1, count_all_abstain=True)
        assert triples(fs) == {(f"b{i:05d}", "C1", "<undervote>")
                               for i in range(5)}

    def test_uncontested_contest_skipped_by_default(self):
        solo = ContestSpec("SOLO", "Uncontested", ("ONLY",))
        records = [
            CastVoteRecord(f"b{i}", "P1", "S1", "mail",
                           {"SOLO": Mark.candidate("ONLY")})
            for i in range(4)
        ]
        e = Election.from_records(records, [solo])
        assert public_revelations(e, PRECINCT) == set()
        assert len(public_revelations(e, PRECINCT, contested_only=False)) == 4

    def test_per_contest_ballot_count(self):
        # contest present on 3 of 5 ballots in the unit; those 3 are unanimous
        e = election_from_unit_marks({"P1": ["A", "A", "A", None, None]})
        fs = public_revelations(e, PRECINCT)
        assert len(fs) == 3
        assert all(f.unit_size == 3 for f in fs)


class TestBruteForceEquivalence:
    KINDS = [
        (FindingKind.public(), dict()),
        (FindingKind.public(), dict(count_all_abstain=True)),
        (FindingKind.local(1), dict()),
        (FindingKind.local(2), dict(count_all_abstain=True)),
        (FindingKind.local(5), dict()),
        (FindingKind.probabilistic(0.95), dict()),
        (FindingKind.probabilistic(0.6), dict()),
        (FindingKind.probabilistic(1.0), dict()),
    ]

    def engine(self, e, g, kind, mode):
        if kind.category == "public":
            return public_revelations(e, g, **mode)
        if kind.category == "local":
            return local_revelations(e, g, int(kind.level), **mode)
        return probabilistic_revelations(e, g, kind.level)

    @pytest.mark.parametrize("seed", range(12))
    def test_engine_matches_definition(self, seed):
        e = random_election(seed, n_ballots=50 + 7 * seed)
        for gname in ("precinct", "ballot_equivalent", "precinct_method"):
            g = granularity_by_name(gname)
            for kind, mode in self.KINDS:
                if kind.category == "probabilistic" and mode:
                    continue
                got = triples(self.engine(e, g, kind, mode))
                want = brute_force(e, g, kind, **mode)
                assert got == want, (gname, kind)

    @pytest.mark.parametrize("seed", range(8))
    def test_published_route_matches_engine(self, seed):
        e = random_election(100 + seed)
        pub = publish_tallies(e, BALLOT_EQUIVALENT)
        unit_findings = findings_from_published(
            pub, alphas=(1, 3), thresholds=(0.9,)
        )
        per_ballot = (
            public_revelations(e, BALLOT_EQUIVALENT)
            | local_revelations(e, BALLOT_EQUIVALENT, 1)
            | local_revelations(e, BALLOT_EQUIVALENT, 3)
            | probabilistic_revelations(e, BALLOT_EQUIVALENT, 0.9)
        )
        assert aggregate_findings(per_ballot) == unit_findings
        assert expand_unit_findings(unit_findings, e, BALLOT_EQUIVALENT) == per_ballot

    @pytest.mark.parametrize("seed", range(6))
    def test_voter_mask_agrees_with_findings(self, seed):
        e = random_election(300 + seed)
        for kind, mode in [(FindingKind.public(), {}), (FindingKind.local(2), {})]:
            mask = revealed_voter_mask(e, PRECINCT, kind, **mode)
            fs = self.engine(e, PRECINCT, kind, mode)
            assert {e.ballot_ids[i] for i in mask.nonzero()[0]} == {
                f.ballot_id for f in fs
            }

    @pytest.mark.parametrize("seed", range(6))
    def test_coarser_units_never_add_public_findings(self, seed):
        e = random_election(600 + seed)
        fine = public_revelations(e, BALLOT_EQUIVALENT)
        coarse = public_revelations(e, PRECINCT)
        by_contest_fine = Counter(f.contest_id for f in fine)
        by_contest_coarse = Counter(f.contest_id for f in coarse)
        for cid, n in by_contest_coarse.items():
            assert n <= by_contest_fine.get(cid, 0)

    def test_finding_invariants_recheckable(self):
        e = random_election(42, n_ballots=80)
        marks_of = {
            (r.ballot_id, cid): m.token()
            for r in e.iter_records()
            for cid, m in r.marks.items()
        }
        unit_of = {
            r.ballot_id: (r.precinct,) for r in e.iter_records()
        }
        fs = (
            public_revelations(e, PRECINCT)
            | local_revelations(e, PRECINCT, 2)
            | probabilistic_revelations(e, PRECINCT, 0.8)
        )
        for f in fs:
            assert marks_of[(f.ballot_id, f.contest_id)] == f.revealed_choice.token()
            assert unit_of[f.ballot_id] == f.unit_key.values
            peers = [
                t for (b, cid), t in marks_of.items()
                if cid == f.contest_id and unit_of[b] == f.unit_key.values
            ]
            assert len(peers) == f.unit_size
            same = sum(1 for t in peers if t == f.revealed_choice.token())
            if f.kind.category == "public":
                assert same == f.unit_size
            elif f.kind.category == "local":
                assert 1 <= f.unit_size - same <= f.kind.level
            else:
                assert same / f.unit_size >= f.kind.level


class TestSummary:
    def build(self):
        e = election_from_unit_marks(
            {
                "P1": ["A"] * 4,                   # public
                "P2": ["A"] * 6 + ["B"],           # local(1)
                "P3": ["A"] * 5 + ["B"] * 2,       # local(2)
                "P4": ["A"] * 3 + ["B"] * 3,       # nothing
            }
        )
        fs = (
            public_revelations(e, PRECINCT)
            | local_revelations(e, PRECINCT, 1)
            | local_revelations(e, PRECINCT, 2)
            | probabilistic_revelations(e, PRECINCT, 0.8)
        )
        return e, fs

    def test_increment_convention(self):
        e, fs = self.build()
        s = any_contest_summary(fs, e.n_ballots)
        assert s.public_voters == 4
        assert s.local_increments == {1: 6, 2: 5}
        assert s.cumulative_local(1) == 10
        assert s.cumulative_local(2) == 15
        # probabilistic(0.8): P1 share 1.0, P2 6/7, P3 5/7 < 0.8
        assert s.probabilistic_voters == {0.8: 10}
        assert s.any_revealed == 15
        assert s.granularity == "precinct"
        assert s.percent(s.public_voters) == pytest.approx(100 * 4 / 24)

    def test_total_voters_validated(self):
        e, fs = self.build()
        with pytest.raises(DataError):
            any_contest_summary(fs, 3)

    def test_mixed_granularity_rejected(self):
        e, _ = self.build()
        mixed = public_revelations(e, PRECINCT) | public_revelations(
            e, BALLOT_EQUIVALENT
        )
        with pytest.raises(DataError):
            any_contest_summary(mixed, e.n_ballots)

    def test_empty_findings(self):
        s = any_contest_summary([], 10)
        assert s.public_voters == 0 and s.any_revealed == 0
        assert s.percent(s.public_voters) == 0.0


class TestDecompose:
    def test_single_group_rate_equals_overall(self):
        e = election_from_unit_marks({"P1": ["A"] * 5, "P2": ["A", "B"]})
        fs = public_revelations(e, PRECINCT)
        rows = decompose_by(fs, e, "vote_method")
        assert rows == [type(rows[0])("mail", 7, 5)]
        assert rows[0].rate == pytest.approx(5 / 7)

    def test_vote_method_groups(self):
        records = []
        for i in range(6):
            records.append(
                CastVoteRecord(
                    f"b{i}", "P1", "S1", "mail" if i < 4 else "provisional",
                    {"C1": Mark.candidate("A")},
                )
            )
        e = Election.from_records(
            records, [ContestSpec("C1", "One", ("A", "B"))]
        )
        fs = public_revelations(e, granularity_by_name("precinct+vote_method"))
        rows = {r.group: r for r in decompose_by(fs, e, "vote_method")}
        assert rows["mail"].voters == 4 and rows["mail"].revealed == 4
        assert rows["provisional"].voters == 2 and rows["provisional"].revealed == 2

    def test_style_type_needs_classifier(self):
        e = election_from_unit_marks({"P1": ["A", "B"]})
        with pytest.raises(ConfigError):
            decompose_by(set(), e, "ballot_style_type")
        rows = decompose_by(
            set(), e, "ballot_style_type",
            style_classifier=lambda s: "full",
        )
        assert [(r.group, r.voters, r.revealed) for r in rows] == [("full", 2, 0)]

    def test_choice_dimension(self):
        e = election_from_unit_marks({"P1": ["A"] * 3, "P2": ["A", "B"]})
        fs = public_revelations(e, PRECINCT)
        rows = {r.group: r for r in decompose_by(fs, e, "choice:C1")}
        assert rows["A"].voters == 4 and rows["A"].revealed == 3
        assert rows["B"].voters == 1 and rows["B"].revealed == 0

    def test_contest_dimension_with_exclusions(self):
        e = random_election(7)
        fs = public_revelations(e, PRECINCT)
        rows = {r.group: r for r in decompose_by(fs, e, "contest")}
        assert set(rows) == {"C1", "C2", "C3"}
        rows2 = {
            r.group: r
            for r in decompose_by(fs, e, "contest", exclude_contests=("C3",))
        }
        assert set(rows2) == {"C1", "C2"}

    def test_unknown_dimension(self):
        e = election_from_unit_marks({"P1": ["A", "B"]})
        with pytest.raises(ConfigError):
            decompose_by(set(), e, "zodiac_sign")


class TestContestStats:
    def test_hand_computed(self):
        e = election_from_unit_marks(
            {"P1": ["A"] * 60 + ["B"] * 40 + ["under"] * 25}
        )
        (row,) = contest_stats(e)
        assert row.undervote_rate == pytest.approx(25 / 125)
        assert row.lopsidedness == pytest.approx(0.6)
        assert row.lopsidedness_defined

    def test_all_undervote_contest(self):
        e = election_from_unit_marks({"P1": ["under", "under"]},
                                     contest=ContestSpec("C1", "One", ("A", "B")))
        (row,) = contest_stats(e)
        assert row.undervote_rate == 1.0
        assert row.lopsidedness is None and not row.lopsidedness_defined
