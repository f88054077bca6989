"""Centroid distances and local agreement curves."""

import math

import numpy as np
import pytest

from helpers import election_from_group_marks, election_from_unit_marks
from voterev.errors import ConfigError, DataError, IngestError
from voterev.geo import (
    EARTH_RADIUS_MILES,
    AgreementPoint,
    CentroidIndex,
    PrecinctCentroid,
    agreement_curve,
    read_centroids,
    within_radius,
)
from voterev.revelation import public_revelations
from voterev.units import BALLOT_EQUIVALENT, PRECINCT, STYLE


def meridian_index(miles_offsets, planar=False):
    """Centroids spaced along one meridian at exact arc distances."""
    return CentroidIndex(
        [
            PrecinctCentroid(f"G{i}", math.degrees(m / EARTH_RADIUS_MILES), 0.0)
            for i, m in enumerate(miles_offsets)
        ],
        planar=planar,
    )


class TestCentroids:
    def test_coordinate_validation(self):
        with pytest.raises(DataError):
            PrecinctCentroid("P1", 91.0, 0.0)
        with pytest.raises(DataError):
            PrecinctCentroid("P1", 0.0, 200.0)
        with pytest.raises(DataError):
            PrecinctCentroid("", 0.0, 0.0)

    def test_one_centroid_per_precinct(self):
        with pytest.raises(DataError):
            CentroidIndex(
                [PrecinctCentroid("P1", 0, 0), PrecinctCentroid("P1", 1, 1)]
            )

    def test_unknown_origin(self):
        index = CentroidIndex([PrecinctCentroid("P1", 0, 0)])
        with pytest.raises(DataError):
            index.distances_from("P9")

    def test_meridian_arc_distances_are_exact(self):
        # Points placed at arc lengths along a meridian: the great-circle
        # distance equals the arc length, so haversine must recover it.
        index = meridian_index([0.0, 5.0, 9.9, 10.1])
        d = index.distances_from("G0")
        assert d == pytest.approx([0.0, 5.0, 9.9, 10.1], abs=1e-9)

    def test_within_radius_boundary(self):
        index = meridian_index([0.0, 5.0, 9.9, 10.1])
        assert within_radius(index, "G0", 10.0) == {"G0", "G1", "G2"}
        assert within_radius(index, "G0", 0.0) == {"G0"}
        with pytest.raises(ConfigError):
            within_radius(index, "G0", -1.0)

    def test_antipodal_points_far_apart(self):
        index = CentroidIndex(
            [PrecinctCentroid("A", 0.0, 0.0), PrecinctCentroid("B", 0.0, 180.0)]
        )
        assert index.distance_miles("A", "B") == pytest.approx(
            math.pi * EARTH_RADIUS_MILES
        )
        assert "B" not in within_radius(index, "A", 12000.0)

    def test_within_radius_monotone(self):
        rng = np.random.default_rng(4)
        pts = [
            PrecinctCentroid(f"P{i}", float(lat), float(lon))
            for i, (lat, lon) in enumerate(
                zip(rng.uniform(-60, 60, 25), rng.uniform(-170, 170, 25))
            )
        ]
        index = CentroidIndex(pts)
        prev: set = set()
        for x in (0, 100, 500, 2000, 8000, 30000):
            cur = within_radius(index, "P0", x)
            assert prev <= cur
            prev = cur
        assert prev == set(index.precincts)

    def test_planar_mode(self):
        index = CentroidIndex(
            [PrecinctCentroid("A", 0.0, 0.0), PrecinctCentroid("B", 3.0, 4.0)],
            planar=True,
        )
        assert index.distance_miles("A", "B") == pytest.approx(5.0)

    def test_read_centroids(self, tmp_path):
        path = tmp_path / "centroids.csv"
        path.write_text("precinct,latitude,longitude\np 1,33.4,-112.1\nP2,33.5,-112.0\n")
        index = read_centroids(path)
        assert set(index.precincts) == {"P 1", "P2"}
        assert "P 1" in index

    def test_read_centroids_errors(self, tmp_path):
        bad = tmp_path / "bad.csv"
        bad.write_text("precinct,latitude\nP1,33.4\n")
        with pytest.raises(IngestError):
            read_centroids(bad)
        bad.write_text("precinct,lat,lon\nP1,abc,0\n")
        with pytest.raises(IngestError, match="bad centroid row"):
            read_centroids(bad)


def line_fixture():
    """Three precincts a mile apart; G0 is unanimous for A."""
    elec = election_from_unit_marks(
        {
            "G0": ["A"] * 4,
            "G1": ["A"] * 2 + ["B"] * 6 + ["under"] * 2,
            "G2": ["B"] * 10,
        }
    )
    index = CentroidIndex(
        [
            PrecinctCentroid("G0", 0.0, 0.0),
            PrecinctCentroid("G1", 0.0, 1.0),
            PrecinctCentroid("G2", 0.0, 2.0),
        ],
        planar=True,
    )
    return elec, index


class TestAgreementCurve:
    def test_hand_tally_on_line_fixture(self):
        elec, index = line_fixture()
        findings = public_revelations(elec, PRECINCT)
        # G0 is unanimous for A (4 voters) and G2 for B (10 voters).
        assert len(findings) == 14
        curve = agreement_curve(findings, elec, index, [0.0, 1.0, 2.0])
        by_precinct = {s.precinct: s for s in curve.sites}
        assert set(by_precinct) == {"G0", "G2"}
        a_site = by_precinct["G0"]
        assert (a_site.revealed_choice, a_site.weight) == ("A", 4)
        # Candidate votes: G0 4A; G1 2A+6B; G2 10B.
        assert [p.agreement for p in a_site.points] == pytest.approx(
            [4 / 4, 6 / 12, 6 / 22]
        )
        b_site = by_precinct["G2"]
        assert (b_site.revealed_choice, b_site.weight) == ("B", 10)
        assert [p.agreement for p in b_site.points] == pytest.approx(
            [10 / 10, 16 / 18, 16 / 22]
        )
        assert curve.mean_agreement["A"] == pytest.approx(
            [p.agreement for p in a_site.points]
        )
        assert curve.mean_agreement["B"] == pytest.approx(
            [p.agreement for p in b_site.points]
        )
        assert curve.choice_weights == {"A": 4, "B": 10}

    def test_denominator_modes(self):
        elec, index = line_fixture()
        findings = public_revelations(elec, PRECINCT)
        with_residual = agreement_curve(
            findings, elec, index, [0.0, 1.0], include_residual=True
        )
        # G1 adds two undervotes to the within-1-mile denominator.
        assert with_residual.sites[0].points[1].agreement == pytest.approx(6 / 14)

    def test_precinct_finding_starts_at_one(self):
        elec, index = line_fixture()
        findings = public_revelations(elec, PRECINCT)
        curve = agreement_curve(findings, elec, index, [0.0])
        assert curve.sites[0].points[0].agreement == 1.0

    def test_subprecinct_finding_starts_at_precinct_share(self):
        elec = election_from_group_marks(
            {
                ("P1", "S1", "mail"): ["A"] * 3,
                ("P1", "S1", "in_person"): ["A"] + ["B"] * 4,
            }
        )
        index = CentroidIndex([PrecinctCentroid("P1", 0.0, 0.0)], planar=True)
        findings = public_revelations(elec, BALLOT_EQUIVALENT)
        assert len(findings) == 3
        curve = agreement_curve(findings, elec, index, [0.0])
        assert curve.sites[0].points[0].agreement == pytest.approx(4 / 8)

    def test_single_precinct_universe_constant(self):
        elec = election_from_unit_marks({"G0": ["A"] * 5})
        index = CentroidIndex([PrecinctCentroid("G0", 10.0, 20.0)])
        findings = public_revelations(elec, PRECINCT)
        curve = agreement_curve(findings, elec, index, [0.0, 3.0, 100.0])
        assert [p.agreement for p in curve.sites[0].points] == [1.0, 1.0, 1.0]

    def test_weighted_mean(self):
        # Two A-sites with weights 4 and 1: mean = (4*a0 + 1*a1) / 5.
        elec = election_from_unit_marks(
            {
                "G0": ["A"] * 4,
                "G1": ["A"],
                "G2": ["A"] * 2 + ["B"] * 8,
            }
        )
        index = CentroidIndex(
            [
                PrecinctCentroid("G0", 0.0, 0.0),
                PrecinctCentroid("G1", 0.0, 10.0),
                PrecinctCentroid("G2", 0.0, 11.0),
            ],
            planar=True,
        )
        findings = public_revelations(elec, PRECINCT)
        curve = agreement_curve(findings, elec, index, [0.0, 1.5])
        by_precinct = {s.precinct: s for s in curve.sites}
        a_g0 = [p.agreement for p in by_precinct["G0"].points]
        a_g1 = [p.agreement for p in by_precinct["G1"].points]
        assert a_g0 == pytest.approx([1.0, 1.0])
        assert a_g1 == pytest.approx([1.0, 3 / 11])
        expected = [(4 * x + 1 * y) / 5 for x, y in zip(a_g0, a_g1)]
        assert curve.mean_agreement["A"] == pytest.approx(expected)
        assert curve.choice_weights == {"A": 5}

    def test_missing_centroid_excludes_and_reports(self):
        elec, _ = line_fixture()
        index = CentroidIndex(
            [
                PrecinctCentroid("G0", 0.0, 0.0),
                PrecinctCentroid("G1", 0.0, 1.0),
            ],
            planar=True,
        )
        findings = public_revelations(elec, PRECINCT)
        curve = agreement_curve(findings, elec, index, [0.0, 2.0])
        # G2 has no centroid: its B votes vanish from the 2-mile pool.
        assert curve.missing_centroid_precincts == ("G2",)
        assert curve.sites[0].points[1].agreement == pytest.approx(6 / 12)

    def test_finding_in_uncentroided_precinct_excluded(self):
        elec = election_from_unit_marks({"G0": ["A"] * 3, "G1": ["B", "A"]})
        index = CentroidIndex([PrecinctCentroid("G1", 0.0, 0.0)], planar=True)
        findings = public_revelations(elec, PRECINCT)
        curve = agreement_curve(findings, elec, index, [0.0])
        assert curve.sites == ()
        assert curve.excluded_findings == 3
        assert curve.mean_agreement == {}

    def test_residual_findings_skipped(self):
        elec = election_from_unit_marks({"G0": ["under"] * 3, "G1": ["A", "B"]})
        index = CentroidIndex(
            [PrecinctCentroid("G0", 0.0, 0.0), PrecinctCentroid("G1", 0.0, 1.0)],
            planar=True,
        )
        findings = public_revelations(elec, PRECINCT, count_all_abstain=True)
        assert len(findings) == 3
        curve = agreement_curve(findings, elec, index, [0.0])
        assert curve.skipped_residual_findings == 3
        assert curve.sites == ()

    def test_validation(self):
        elec, index = line_fixture()
        findings = public_revelations(elec, PRECINCT)
        with pytest.raises(ConfigError):
            agreement_curve(findings, elec, index, [])
        with pytest.raises(ConfigError):
            agreement_curve(findings, elec, index, [1.0])
        with pytest.raises(ConfigError):
            agreement_curve(findings, elec, index, [0.0, -2.0])
        style_findings = public_revelations(elec, STYLE)
        if style_findings:
            with pytest.raises(ConfigError):
                agreement_curve(style_findings, elec, index, [0.0])

    def test_empty_findings(self):
        elec, index = line_fixture()
        curve = agreement_curve([], elec, index, [0.0, 1.0])
        assert curve.sites == ()
        assert curve.contest_id == ""

    def test_agreement_point_validation(self):
        with pytest.raises(DataError):
            AgreementPoint(0.0, "A", 1.5, 1)
        with pytest.raises(DataError):
            AgreementPoint(0.0, "A", 0.5, 0)
