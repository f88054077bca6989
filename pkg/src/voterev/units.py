"""Reporting units: grouping ballots by quasi-identifier keys.

A granularity names the quasi-identifier dimensions that define a reporting
unit. The columnar :class:`UnitAssignment` (one unit index per ballot) is what
the revelation kernels consume; :func:`build_reporting_units` materializes
per-unit objects when row-level views are wanted.
"""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DataError
from .records import Election

QI_DIMENSIONS = ("precinct", "ballot_style", "vote_method")


@dataclass(frozen=True)
class Granularity:
    """An ordered choice of quasi-identifier dimensions."""

    name: str
    dims: tuple[str, ...]

    def __post_init__(self) -> None:
        if not self.dims:
            raise ConfigError("granularity needs at least one dimension")
        if len(set(self.dims)) != len(self.dims):
            raise ConfigError(f"repeated dimension in granularity {self.name}")
        for d in self.dims:
            if d not in QI_DIMENSIONS:
                raise ConfigError(f"unknown quasi-identifier dimension {d!r}")

    @classmethod
    def custom(cls, dims: Sequence[str]) -> "Granularity":
        return cls("+".join(dims), tuple(dims))


PRECINCT = Granularity("precinct", ("precinct",))
PRECINCT_METHOD = Granularity("precinct_method", ("precinct", "vote_method"))
PRECINCT_STYLE = Granularity("precinct_style", ("precinct", "ballot_style"))
BALLOT_EQUIVALENT = Granularity(
    "ballot_equivalent", ("precinct", "ballot_style", "vote_method")
)
STYLE = Granularity("style", ("ballot_style",))

STANDARD_GRANULARITIES = {
    g.name: g
    for g in (PRECINCT, PRECINCT_METHOD, PRECINCT_STYLE, BALLOT_EQUIVALENT, STYLE)
}


def granularity_by_name(name: str) -> Granularity:
    """Resolve a CLI/config granularity label, allowing ``a+b`` custom forms."""
    if name in STANDARD_GRANULARITIES:
        return STANDARD_GRANULARITIES[name]
    if "+" in name:
        return Granularity.custom(tuple(name.split("+")))
    raise ConfigError(f"unknown granularity {name!r}")


@dataclass(frozen=True)
class ReportingUnitKey:
    granularity: Granularity
    values: tuple[str, ...]

    def __post_init__(self) -> None:
        if len(self.values) != len(self.granularity.dims):
            raise DataError(
                f"key has {len(self.values)} values for "
                f"{len(self.granularity.dims)} dimensions"
            )

    def as_dict(self) -> dict[str, str]:
        return dict(zip(self.granularity.dims, self.values))


@dataclass(frozen=True)
class ReportingUnit:
    key: ReportingUnitKey
    ballot_ids: frozenset[str]

    def __post_init__(self) -> None:
        if not self.ballot_ids:
            raise DataError("reporting unit cannot be empty")

    @property
    def size(self) -> int:
        return len(self.ballot_ids)


class UnitAssignment:
    """Columnar mapping ballot index → reporting unit index.

    ``unit_of_ballot[i]`` gives ballot i's unit; ``sizes[u]`` its ballot
    count; ``key_values[u]`` the unit's quasi-identifier values in the
    granularity's dimension order.
    """

    def __init__(
        self,
        granularity: Granularity,
        unit_of_ballot: np.ndarray,
        sizes: np.ndarray,
        key_values: list[tuple[str, ...]],
    ) -> None:
        self.granularity = granularity
        self.unit_of_ballot = unit_of_ballot
        self.sizes = sizes
        self.key_values = key_values

    @property
    def n_units(self) -> int:
        return len(self.sizes)

    def key(self, u: int) -> ReportingUnitKey:
        return ReportingUnitKey(self.granularity, self.key_values[u])

    def ballots_by_unit(self) -> list[np.ndarray]:
        """Ballot indices grouped by unit, each group in ballot order."""
        order = np.argsort(self.unit_of_ballot, kind="stable")
        bounds = np.cumsum(self.sizes)[:-1]
        return np.split(order, bounds)


def assign_units(election: Election, granularity: Granularity) -> UnitAssignment:
    """Group ballots by granularity key. Cached per election and granularity."""
    cache_key = granularity.dims
    cached = election._unit_cache.get(cache_key)
    if cached is not None:
        return cached  # type: ignore[return-value]

    n = election.n_ballots
    combined = np.zeros(n, dtype=np.int64)
    radices: list[int] = []
    for dim in granularity.dims:
        card = max(len(election.qi_values(dim)), 1)
        combined = combined * card + election.qi_codes(dim).astype(np.int64)
        radices.append(card)

    uniq, inverse, counts = np.unique(
        combined, return_inverse=True, return_counts=True
    )

    # Decode each distinct combined key back into per-dimension labels.
    key_values: list[tuple[str, ...]] = []
    rem = uniq.copy()
    parts: list[np.ndarray] = []
    for card in reversed(radices):
        parts.append(rem % card)
        rem //= card
    parts.reverse()
    for u in range(len(uniq)):
        key_values.append(
            tuple(
                election.qi_values(dim)[int(parts[d][u])]
                for d, dim in enumerate(granularity.dims)
            )
        )

    assignment = UnitAssignment(
        granularity,
        inverse.astype(np.int32),
        counts.astype(np.int64),
        key_values,
    )
    election._unit_cache[cache_key] = assignment
    return assignment


def build_reporting_units(
    election: Election, granularity: Granularity
) -> list[ReportingUnit]:
    """Materialize reporting units with their ballot id sets."""
    assignment = assign_units(election, granularity)
    groups = assignment.ballots_by_unit()
    units = []
    for u, ballot_idx in enumerate(groups):
        units.append(
            ReportingUnit(
                key=assignment.key(u),
                ballot_ids=frozenset(election.ballot_ids[i] for i in ballot_idx),
            )
        )
    return units


def unit_size_ecdf(
    units: Sequence[ReportingUnit] | UnitAssignment | Sequence[int],
    thresholds: Sequence[int],
) -> list[tuple[int, float]]:
    """Voters per 100,000 residing in units of size ≤ t, for each threshold t.

    Weighted by unit size, so the value at a threshold covering all units is
    exactly 100,000.
    """
    if isinstance(units, UnitAssignment):
        sizes = np.asarray(units.sizes, dtype=np.int64)
    else:
        units = list(units)
        if units and isinstance(units[0], ReportingUnit):
            sizes = np.array([u.size for u in units], dtype=np.int64)
        else:
            sizes = np.asarray(units, dtype=np.int64)
    if sizes.size == 0:
        raise DataError("no reporting units")
    lo = 0
    for t in thresholds:
        if t < 1 or t <= lo:
            raise ConfigError("thresholds must be strictly increasing and >= 1")
        lo = t
    total = int(sizes.sum())
    out = []
    for t in thresholds:
        covered = int(sizes[sizes <= t].sum())
        out.append((int(t), 100000.0 * covered / total))
    return out
