"""Local agreement around revealed votes.

Given revelation findings for one contest and precinct centroid coordinates,
measures how popular each revealed choice is among surrounding voters as the
neighborhood radius grows. Distance is approximated centroid-to-centroid on a
sphere; a planar mode treats coordinates as miles directly for synthetic
fixtures with hand-placed points.
"""

from __future__ import annotations

import csv
from collections.abc import Iterable, Sequence
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DataError, IngestError
from .records import MarkKind, N_SPECIAL, Election, normalize_code
from .revelation import RevelationFinding
from .tallies import contest_tally
from .units import PRECINCT, assign_units

EARTH_RADIUS_MILES = 3958.761


@dataclass(frozen=True)
class PrecinctCentroid:
    precinct: str
    latitude: float
    longitude: float

    def __post_init__(self) -> None:
        if not self.precinct:
            raise DataError("centroid without a precinct code")
        if not (-90.0 <= self.latitude <= 90.0):
            raise DataError(f"latitude {self.latitude} out of range")
        if not (-180.0 <= self.longitude <= 180.0):
            raise DataError(f"longitude {self.longitude} out of range")


class CentroidIndex:
    """Immutable precinct location lookup with vectorized distance queries."""

    def __init__(
        self, centroids: Iterable[PrecinctCentroid], planar: bool = False
    ) -> None:
        items = list(centroids)
        self.planar = planar
        self.precincts = tuple(c.precinct for c in items)
        if len(set(self.precincts)) != len(self.precincts):
            raise DataError("more than one centroid for a precinct")
        self._index = {p: i for i, p in enumerate(self.precincts)}
        self._lat = np.array([c.latitude for c in items], dtype=np.float64)
        self._lon = np.array([c.longitude for c in items], dtype=np.float64)
        self._lat.setflags(write=False)
        self._lon.setflags(write=False)

    def __len__(self) -> int:
        return len(self.precincts)

    def __contains__(self, precinct: str) -> bool:
        return precinct in self._index

    def distances_from(self, origin: str) -> np.ndarray:
        """Miles from the origin precinct to every indexed precinct."""
        i = self._index.get(origin)
        if i is None:
            raise DataError(f"no centroid for precinct {origin!r}")
        if self.planar:
            return np.hypot(self._lat - self._lat[i], self._lon - self._lon[i])
        lat1 = np.radians(self._lat[i])
        lon1 = np.radians(self._lon[i])
        lat2 = np.radians(self._lat)
        lon2 = np.radians(self._lon)
        a = (
            np.sin((lat2 - lat1) / 2.0) ** 2
            + np.cos(lat1) * np.cos(lat2) * np.sin((lon2 - lon1) / 2.0) ** 2
        )
        return 2.0 * EARTH_RADIUS_MILES * np.arcsin(np.sqrt(np.clip(a, 0.0, 1.0)))

    def distance_miles(self, a: str, b: str) -> float:
        j = self._index.get(b)
        if j is None:
            raise DataError(f"no centroid for precinct {b!r}")
        return float(self.distances_from(a)[j])


def within_radius(index: CentroidIndex, origin: str, x: float) -> set[str]:
    """Precincts whose centroid lies within x miles; the origin always is."""
    if x < 0:
        raise ConfigError("radius must be >= 0")
    d = index.distances_from(origin)
    return {index.precincts[i] for i in np.nonzero(d <= x)[0]}


def read_centroids(
    path, delimiter: str = ",", planar: bool = False
) -> CentroidIndex:
    """Load delimited centroid rows: precinct, lat, lon (header required)."""
    aliases = {"lat": "lat", "latitude": "lat", "lon": "lon", "longitude": "lon",
               "lng": "lon", "precinct": "precinct"}
    centroids = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh, delimiter=delimiter)
        if reader.fieldnames is None:
            raise IngestError(f"{path}: empty centroid file")
        fields = {}
        for name in reader.fieldnames:
            role = aliases.get(name.strip().lower())
            if role:
                fields[role] = name
        missing = {"precinct", "lat", "lon"} - set(fields)
        if missing:
            raise IngestError(f"{path}: missing centroid columns {sorted(missing)}")
        for row_no, row in enumerate(reader, start=2):
            try:
                centroids.append(
                    PrecinctCentroid(
                        precinct=normalize_code(row[fields["precinct"]]),
                        latitude=float(row[fields["lat"]]),
                        longitude=float(row[fields["lon"]]),
                    )
                )
            except (TypeError, ValueError) as exc:
                raise IngestError(f"{path}:{row_no}: bad centroid row: {exc}") from exc
    return CentroidIndex(centroids, planar=planar)


@dataclass(frozen=True)
class AgreementPoint:
    radius: float
    revealed_choice: str
    agreement: float
    weight: int

    def __post_init__(self) -> None:
        if not (0.0 <= self.agreement <= 1.0):
            raise DataError(f"agreement {self.agreement} outside [0, 1]")
        if self.weight <= 0:
            raise DataError("agreement point without revealed voters")


@dataclass(frozen=True)
class SiteAgreement:
    """Curve for one revealed precinct and choice.

    Findings from different units in the same precinct share a curve, since
    neighborhoods are defined by the precinct centroid alone.
    """

    precinct: str
    revealed_choice: str
    weight: int
    points: tuple[AgreementPoint, ...]


@dataclass(frozen=True)
class AgreementCurve:
    contest_id: str
    radii: tuple[float, ...]
    sites: tuple[SiteAgreement, ...]
    mean_agreement: dict[str, tuple[float, ...]]
    choice_weights: dict[str, int]
    missing_centroid_precincts: tuple[str, ...]
    excluded_findings: int
    skipped_residual_findings: int


def agreement_curve(
    findings: Iterable[RevelationFinding],
    election: Election,
    centroids: CentroidIndex,
    radii: Sequence[float],
    include_residual: bool = False,
) -> AgreementCurve:
    """Agreement between each revealed site and its widening neighborhood.

    At radius x the agreement is the revealed choice's share of candidate
    votes across precincts whose centroids lie within x miles of the site's
    precinct. ``include_residual`` switches the denominator to all ballots
    holding the contest, abstentions included. Findings in precincts without
    centroids are excluded and reported, as are neighbors without centroids.
    """
    rs = [float(x) for x in radii]
    if not rs:
        raise ConfigError("radii list is empty")
    if any(not np.isfinite(x) or x < 0 for x in rs):
        raise ConfigError("radii must be finite and >= 0")
    if 0.0 not in rs:
        raise ConfigError("radii must include 0")

    items = list(findings)
    contest_ids = {f.contest_id for f in items}
    if len(contest_ids) > 1:
        raise ConfigError(f"findings span several contests: {sorted(contest_ids)}")
    if not items:
        return AgreementCurve(
            contest_id="",
            radii=tuple(rs),
            sites=(),
            mean_agreement={},
            choice_weights={},
            missing_centroid_precincts=(),
            excluded_findings=0,
            skipped_residual_findings=0,
        )
    contest_id = contest_ids.pop()
    spec = election.contest(contest_id)

    # Pool findings to (precinct, choice) sites.
    weights: dict[tuple[str, str], int] = {}
    skipped_residual = 0
    for f in items:
        dims = f.unit_key.granularity.dims
        if "precinct" not in dims:
            raise ConfigError(
                f"granularity {f.unit_key.granularity.name} has no precinct"
            )
        if f.revealed_choice.kind is not MarkKind.CANDIDATE:
            skipped_residual += 1
            continue
        precinct = f.unit_key.values[dims.index("precinct")]
        key = (precinct, f.revealed_choice.choice_id)
        weights[key] = weights.get(key, 0) + 1

    assignment = assign_units(election, PRECINCT)
    tally = contest_tally(election, assignment, contest_id)
    centroid_row = np.full(assignment.n_units, -1, dtype=np.int64)
    missing = []
    for u, key in enumerate(assignment.key_values):
        if key[0] in centroids:
            centroid_row[u] = centroids._index[key[0]]
        else:
            missing.append(key[0])

    excluded = 0
    sites = []
    dist_cache: dict[str, np.ndarray] = {}
    for (precinct, choice), weight in sorted(weights.items()):
        if precinct not in centroids:
            excluded += weight
            continue
        if precinct not in dist_cache:
            d = centroids.distances_from(precinct)
            row_dist = np.full(assignment.n_units, np.inf)
            located = centroid_row >= 0
            row_dist[located] = d[centroid_row[located]]
            dist_cache[precinct] = row_dist
        row_dist = dist_cache[precinct]
        if choice not in spec.listed_choices:
            raise DataError(f"choice {choice!r} not listed for {contest_id}")
        col = N_SPECIAL + spec.listed_choices.index(choice)
        points = []
        for x in rs:
            rows = row_dist <= x
            numerator = int(tally[rows, col].sum())
            if include_residual:
                denominator = int(tally[rows].sum())
            else:
                denominator = int(tally[rows, N_SPECIAL:].sum())
            if denominator == 0:
                raise DataError(
                    f"no countable votes within {x} miles of {precinct}"
                )
            points.append(
                AgreementPoint(
                    radius=x,
                    revealed_choice=choice,
                    agreement=numerator / denominator,
                    weight=weight,
                )
            )
        sites.append(
            SiteAgreement(
                precinct=precinct,
                revealed_choice=choice,
                weight=weight,
                points=tuple(points),
            )
        )

    mean_agreement: dict[str, tuple[float, ...]] = {}
    choice_weights: dict[str, int] = {}
    for choice in sorted({s.revealed_choice for s in sites}):
        group = [s for s in sites if s.revealed_choice == choice]
        total = sum(s.weight for s in group)
        choice_weights[choice] = total
        mean_agreement[choice] = tuple(
            sum(s.weight * s.points[i].agreement for s in group) / total
            for i in range(len(rs))
        )

    return AgreementCurve(
        contest_id=contest_id,
        radii=tuple(rs),
        sites=tuple(sites),
        mean_agreement=mean_agreement,
        choice_weights=choice_weights,
        missing_centroid_precincts=tuple(sorted(set(missing))),
        excluded_findings=excluded,
        skipped_residual_findings=skipped_residual,
    )
