"""Format readers, reject handling, and canvass validation."""

import json

import pytest

from voterev.errors import ConfigError, IngestError
from voterev.ingest import (
    FormatDescriptor,
    ingest_cvr,
    read_certified_totals,
    read_contest_specs,
    validate_against_canvass,
)
from voterev.records import ContestSpec, Election, CastVoteRecord, Mark
from voterev.synth import ContestModel, SynthSpec, emit, generate

WIDE = FormatDescriptor(
    layout="wide",
    columns={
        "ballot_id": "ballot_id",
        "precinct": "precinct",
        "ballot_style": "ballot_style",
        "vote_method": "vote_method",
    },
)


def small_spec(seed=1):
    return SynthSpec(
        precinct_sizes=(40, 25, 10),
        contests=(
            ContestModel("PRES", ("ALPHA", "BETA"), (0.6, 0.4), 0.05),
            ContestModel("PROP1", ("YES", "NO"), (0.5, 0.5), 0.2,
                         residual_split=(0.8, 0.1, 0.1)),
        ),
        n_styles=2,
        style_contests={"S1": ("PRES", "PROP1"), "S2": ("PRES",)},
        seed=seed,
    )


def token_table(election):
    """Contest -> per-ballot mark token (None when absent), id-keyed."""
    out = {}
    for rec in election.iter_records():
        for cid, mark in rec.marks.items():
            out[(rec.ballot_id, cid)] = mark.token()
    return out


def assert_same_election(a: Election, b: Election):
    assert a.ballot_ids == b.ballot_ids
    for dim in ("precinct", "ballot_style", "vote_method"):
        la = [a.qi_values(dim)[c] for c in a.qi_codes(dim)]
        lb = [b.qi_values(dim)[c] for c in b.qi_codes(dim)]
        assert la == lb, dim
    assert token_table(a) == token_table(b)


class TestRoundTrip:
    @pytest.mark.parametrize("layout", ["wide", "long", "jsonl"])
    def test_emit_then_ingest_is_identity(self, layout, tmp_path):
        result = generate(small_spec())
        paths = emit(result, tmp_path, layout=layout)
        descriptor = FormatDescriptor.from_json_file(paths["descriptor"])
        contests = read_contest_specs(paths["contests"])
        election, report = ingest_cvr(paths["cvr"], descriptor, contests)
        assert_same_election(election, result.election)
        assert report.rows_rejected == 0
        assert report.ballots == 75
        assert report.contests == 2 and report.precincts == 3

    @pytest.mark.parametrize("layout", ["wide", "long", "jsonl"])
    def test_ingest_with_inferred_contests(self, layout, tmp_path):
        result = generate(small_spec(seed=5))
        paths = emit(result, tmp_path, layout=layout)
        descriptor = FormatDescriptor.from_json_file(paths["descriptor"])
        election, report = ingest_cvr(paths["cvr"], descriptor)
        assert "contests_inferred" in report.flags
        assert token_table(election) == token_table(result.election)

    def test_thirty_ballot_two_unit_layout(self, tmp_path):
        path = tmp_path / "cvr.csv"
        lines = ["ballot_id,precinct,ballot_style,vote_method,PRES,REF"]
        for i in range(20):
            pres = "ALPHA" if i < 19 else "BETA"
            ref = "YES" if i < 12 else "NO"
            lines.append(f"m{i},P1,S1,mail,{pres},{ref}")
        for i in range(10):
            ref = "YES" if i < 6 else "NO"
            lines.append(f"d{i},P1,S1,in_person,ALPHA,{ref}")
        path.write_text("\n".join(lines) + "\n")
        election, report = ingest_cvr(path, WIDE)
        assert report.ballots == 30
        assert report.contests == 2
        assert report.precincts == 1 and report.styles == 1
        assert report.methods == 2


class TestErrorHandling:
    def test_empty_file(self, tmp_path):
        path = tmp_path / "empty.csv"
        path.write_text("")
        election, report = ingest_cvr(path, WIDE)
        assert election.n_ballots == 0
        assert "empty_input" in report.flags

    def test_missing_file(self):
        with pytest.raises(IngestError):
            ingest_cvr("/nonexistent/file.csv", WIDE)

    def test_missing_mandatory_column(self, tmp_path):
        path = tmp_path / "cvr.csv"
        path.write_text("ballot_id,precinct,PRES\nb1,P1,ALPHA\n")
        with pytest.raises(IngestError, match="missing mandatory"):
            ingest_cvr(path, WIDE)

    def test_duplicate_ballot_id_fatal_wide(self, tmp_path):
        path = tmp_path / "cvr.csv"
        path.write_text(
            "ballot_id,precinct,ballot_style,vote_method,PRES\n"
            "b1,P1,S1,mail,ALPHA\nb1,P1,S1,mail,BETA\n"
        )
        with pytest.raises(IngestError, match="duplicate"):
            ingest_cvr(path, WIDE)

    def test_conflicting_quasi_identifiers_fatal_long(self, tmp_path):
        path = tmp_path / "cvr.csv"
        path.write_text(
            "ballot_id,precinct,ballot_style,vote_method,contest_id,choice\n"
            "b1,P1,S1,mail,PRES,ALPHA\nb1,P2,S1,mail,REF,YES\n"
        )
        descriptor = FormatDescriptor(
            layout="long",
            columns={**WIDE.columns, "contest": "contest_id",
                     "choice": "choice"},
        )
        with pytest.raises(IngestError, match="conflicting"):
            ingest_cvr(path, descriptor)

    def test_unparseable_mark_rejects_row(self, tmp_path):
        path = tmp_path / "cvr.csv"
        path.write_text(
            "ballot_id,precinct,ballot_style,vote_method,PRES\n"
            "b1,P1,S1,mail,ALPHA\n"
            "b2,P1,S1,mail,MYSTERY\n"
            "b3,P1,S1,mail,BETA\n"
        )
        contests = [ContestSpec("PRES", "President", ("ALPHA", "BETA"))]
        election, report = ingest_cvr(path, WIDE, contests)
        assert election.ballot_ids == ["b1", "b3"]
        assert report.rows_rejected == 1
        assert "MYSTERY" in report.rejected[0][1]

    def test_unknown_layout(self):
        with pytest.raises(ConfigError):
            FormatDescriptor(layout="parquet", columns=WIDE.columns)

    def test_descriptor_requires_roles(self):
        with pytest.raises(ConfigError):
            FormatDescriptor(layout="wide", columns={"ballot_id": "id"})
        with pytest.raises(ConfigError):
            FormatDescriptor.from_dict({"layout": "wide",
                                        "columns": dict(WIDE.columns),
                                        "compression": "zip"})


class TestNormalization:
    def test_codes_merged_after_normalization(self, tmp_path):
        path = tmp_path / "cvr.csv"
        path.write_text(
            "ballot_id,precinct,ballot_style,vote_method,PRES\n"
            "b1,p 01,S1,Mail,ALPHA\n"
            "b2,P  01,s1,MAIL,alpha\n"
        )
        election, report = ingest_cvr(path, WIDE)
        assert election.precinct_labels == ("P 01",)
        assert election.style_labels == ("S1",)
        assert election.method_labels == ("mail",)
        assert report.precincts == 1

    def test_special_tokens_case_insensitive(self, tmp_path):
        path = tmp_path / "cvr.csv"
        path.write_text(
            "ballot_id,precinct,ballot_style,vote_method,PRES\n"
            "b1,P1,S1,mail,<UNDERVOTE>\n"
            "b2,P1,S1,mail,<overvote>\n"
        )
        election, _ = ingest_cvr(path, WIDE)
        marks = token_table(election)
        assert marks[("b1", "PRES")] == "<undervote>"
        assert marks[("b2", "PRES")] == "<overvote>"


class TestMultiVote:
    def test_configured_multi_vote_contest_goes_to_side_table(self, tmp_path):
        path = tmp_path / "cvr.csv"
        path.write_text(
            "ballot_id,precinct,ballot_style,vote_method,PRES,COUNCIL\n"
            "b1,P1,S1,mail,ALPHA,CM1\n"
            "b2,P1,S1,mail,BETA,CM2\n"
        )
        contests = [
            ContestSpec("PRES", "President", ("ALPHA", "BETA")),
            ContestSpec("COUNCIL", "Council", ("CM1", "CM2", "CM3"),
                        votes_allowed=2),
        ]
        election, report = ingest_cvr(path, WIDE, contests)
        assert "multi_vote:COUNCIL" in report.flags
        assert "COUNCIL" not in election.mark_columns
        assert election.multi_marks[("b1", "COUNCIL")] == (Mark.candidate("CM1"),)
        assert [c.contest_id for c in election.revelation_contests()] == ["PRES"]

    def test_long_duplicate_contest_rows_inferred_as_multi_vote(self, tmp_path):
        path = tmp_path / "cvr.csv"
        path.write_text(
            "ballot_id,precinct,ballot_style,vote_method,contest_id,choice\n"
            "b1,P1,S1,mail,COUNCIL,CM1\n"
            "b1,P1,S1,mail,COUNCIL,CM2\n"
            "b2,P1,S1,mail,COUNCIL,CM3\n"
        )
        descriptor = FormatDescriptor(
            layout="long",
            columns={**WIDE.columns, "contest": "contest_id",
                     "choice": "choice"},
        )
        election, report = ingest_cvr(path, descriptor)
        assert "multi_vote:COUNCIL" in report.flags
        assert election.multi_marks[("b1", "COUNCIL")] == (
            Mark.candidate("CM1"), Mark.candidate("CM2"),
        )


class TestCanvass:
    def test_self_consistency_passes(self, tmp_path):
        result = generate(small_spec(seed=9))
        report = validate_against_canvass(result.election, result.certified)
        assert report.passed
        assert report.discrepancies == {}

    def test_single_flipped_vote(self):
        records = [
            CastVoteRecord(f"b{i}", "P1", "S1", "mail",
                           {"PRES": Mark.candidate("ALPHA" if i else "BETA")})
            for i in range(5)
        ]
        e = Election.from_records(
            records, [ContestSpec("PRES", "President", ("ALPHA", "BETA"))]
        )
        certified = {("PRES", "ALPHA"): 5, ("PRES", "BETA"): 0}
        report = validate_against_canvass(e, certified)
        assert not report.passed
        assert report.discrepancies == {
            ("PRES", "ALPHA"): -1, ("PRES", "BETA"): +1,
        }

    def test_uncovered_contest_fails(self):
        records = [
            CastVoteRecord("b1", "P1", "S1", "mail",
                           {"PRES": Mark.candidate("ALPHA"),
                            "REF": Mark.candidate("YES")}),
            CastVoteRecord("b2", "P1", "S1", "mail",
                           {"PRES": Mark.candidate("BETA"),
                            "REF": Mark.candidate("NO")}),
        ]
        e = Election.from_records(
            records,
            [ContestSpec("PRES", "President", ("ALPHA", "BETA")),
             ContestSpec("REF", "Referendum", ("YES", "NO"))],
        )
        report = validate_against_canvass(
            e, {("PRES", "ALPHA"): 1, ("PRES", "BETA"): 1}
        )
        assert not report.passed
        assert report.uncovered_contests == ["REF"]
        assert report.discrepancies == {}


class TestConfigLoaders:
    def test_contest_specs(self, tmp_path):
        path = tmp_path / "contests.json"
        path.write_text(json.dumps([
            {"contest_id": "pres", "title": "President",
             "choices": ["alpha", "beta"]},
            {"contest_id": "cc", "choices": ["x", "y"], "votes_allowed": 2},
        ]))
        specs = read_contest_specs(path)
        assert specs[0].contest_id == "PRES"
        assert specs[0].listed_choices == ("ALPHA", "BETA")
        assert specs[1].votes_allowed == 2 and specs[1].title == "cc"

    def test_contest_specs_missing_field(self, tmp_path):
        path = tmp_path / "contests.json"
        path.write_text(json.dumps([{"title": "President"}]))
        with pytest.raises(ConfigError):
            read_contest_specs(path)

    def test_certified_totals(self, tmp_path):
        path = tmp_path / "certified.json"
        path.write_text(json.dumps({"pres": {"alpha": 10, "beta": 7}}))
        totals = read_certified_totals(path)
        assert totals == {("PRES", "ALPHA"): 10, ("PRES", "BETA"): 7}
