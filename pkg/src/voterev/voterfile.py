"""Voter participation rosters and their linkage to reporting units.

The roster says who voted and with which quasi-identifiers, never how. Linking
it to an election's reporting units shows how many named voters each unit's
key captures: an exact match means the unit's ballots belong to exactly those
voters; shortfalls point at roster gaps (confidentiality programs, churn).
"""

from __future__ import annotations

import json
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field
from pathlib import Path

import polars as pl

from .errors import ConfigError, IngestError
from .records import (
    COARSE_IN_PERSON,
    Election,
    VotedRecord,
    normalize_code,
    normalize_method,
)
from .units import Granularity, assign_units

REQUIRED_ROLES = ("voter_id", "precinct", "vote_method")
OPTIONAL_ROLES = ("ballot_style", "name", "address")


def coarse_method(label: str) -> str:
    """Collapse a method label to the merged vocabulary some rosters use.

    Anything that is not mail is treated as an in-person variant.
    """
    return "mail" if label == "mail" else COARSE_IN_PERSON


def read_voted_file(
    path: str | Path,
    columns: Mapping[str, str],
    delimiter: str = ",",
) -> list[VotedRecord]:
    """Read a delimited participation roster."""
    for role in REQUIRED_ROLES:
        if role not in columns:
            raise ConfigError(f"voted-file columns missing role {role!r}")
    path = Path(path)
    if not path.exists():
        raise IngestError(f"no such file: {path}")
    try:
        df = pl.read_csv(path, separator=delimiter, infer_schema=False,
                         comment_prefix="#")
    except pl.exceptions.NoDataError:
        return []
    missing = [columns[r] for r in columns if columns[r] not in df.columns]
    if missing:
        raise IngestError(f"missing mandatory columns: {missing}")

    records = []
    seen = set()
    for row in df.iter_rows(named=True):
        voter_id = (row[columns["voter_id"]] or "").strip()
        if not voter_id:
            raise IngestError("empty voter_id in roster")
        if voter_id in seen:
            raise IngestError(f"duplicate voter_id {voter_id!r}")
        seen.add(voter_id)
        style = None
        if "ballot_style" in columns and row.get(columns["ballot_style"]):
            style = normalize_code(row[columns["ballot_style"]])
        records.append(
            VotedRecord(
                voter_id=voter_id,
                precinct=normalize_code(row[columns["precinct"]] or ""),
                vote_method_coarse=normalize_method(
                    row[columns["vote_method"]] or ""
                ),
                ballot_style=style,
                name=row.get(columns["name"]) if "name" in columns else None,
                address=row.get(columns["address"]) if "address" in columns else None,
            )
        )
    return records


@dataclass
class LinkageReport:
    granularity: str
    degraded_to_coarse_method: bool
    units_total: int
    units_exact: int
    units_excess: int
    units_shortfall: int
    shortfall_slots: int
    voters_total: int
    voters_unassigned: int
    # key -> (unit ballots, matched voters); voter ids stay in matched_voters,
    # which report writers must not export by default
    unit_rows: dict[tuple[str, ...], tuple[int, int]] = field(default_factory=dict)
    matched_voters: dict[tuple[str, ...], tuple[str, ...]] = field(
        default_factory=dict
    )

    def to_dict(self) -> dict:
        return {
            "granularity": self.granularity,
            "degraded_to_coarse_method": self.degraded_to_coarse_method,
            "units_total": self.units_total,
            "units_exact": self.units_exact,
            "units_excess": self.units_excess,
            "units_shortfall": self.units_shortfall,
            "shortfall_slots": self.shortfall_slots,
            "voters_total": self.voters_total,
            "voters_unassigned": self.voters_unassigned,
        }


def _voter_style(
    record: VotedRecord, style_map: Mapping[str, str] | None
) -> str | None:
    if record.ballot_style:
        return record.ballot_style
    if style_map is not None:
        if record.address and record.address in style_map:
            return normalize_code(style_map[record.address])
        if record.precinct in style_map:
            return normalize_code(style_map[record.precinct])
    return None


def link_voted_file(
    election: Election,
    voted: Sequence[VotedRecord],
    granularity: Granularity,
    style_map: Mapping[str, str] | None = None,
) -> LinkageReport:
    """Match roster voters to reporting units by quasi-identifier key.

    If the granularity includes vote method but the roster only carries the
    merged in-person/provisional bucket, both sides are degraded to coarse
    methods and the report says so; in-person and provisional units then only
    exist merged.
    """
    dims = granularity.dims
    needs_method = "vote_method" in dims
    roster_is_coarse = needs_method and any(
        v.vote_method_coarse == COARSE_IN_PERSON for v in voted
    )

    assignment = assign_units(election, granularity)
    unit_sizes: dict[tuple[str, ...], int] = {}
    for u, key in enumerate(assignment.key_values):
        if roster_is_coarse:
            key = tuple(
                coarse_method(v) if d == "vote_method" else v
                for d, v in zip(dims, key)
            )
        unit_sizes[key] = unit_sizes.get(key, 0) + int(assignment.sizes[u])

    matched: dict[tuple[str, ...], list[str]] = {}
    unassigned = 0
    for v in voted:
        parts = []
        ok = True
        for d in dims:
            if d == "precinct":
                parts.append(v.precinct)
            elif d == "vote_method":
                m = v.vote_method_coarse
                parts.append(coarse_method(m) if roster_is_coarse else m)
            else:
                style = _voter_style(v, style_map)
                if style is None:
                    ok = False
                    break
                parts.append(style)
        if not ok:
            unassigned += 1
            continue
        key = tuple(parts)
        if key in unit_sizes:
            matched.setdefault(key, []).append(v.voter_id)
        else:
            unassigned += 1

    exact = excess = shortfall = slots = 0
    unit_rows = {}
    matched_voters = {}
    for key, n in unit_sizes.items():
        m = len(matched.get(key, ()))
        unit_rows[key] = (n, m)
        if m:
            matched_voters[key] = tuple(sorted(matched[key]))
        if m == n:
            exact += 1
        elif m > n:
            excess += 1
        else:
            shortfall += 1
            slots += n - m
    return LinkageReport(
        granularity=granularity.name,
        degraded_to_coarse_method=roster_is_coarse,
        units_total=len(unit_sizes),
        units_exact=exact,
        units_excess=excess,
        units_shortfall=shortfall,
        shortfall_slots=slots,
        voters_total=len(voted),
        voters_unassigned=unassigned,
        unit_rows=unit_rows,
        matched_voters=matched_voters,
    )


def read_style_map(path: str | Path) -> dict[str, str]:
    """JSON map from address or precinct to ballot style."""
    with open(path) as fh:
        raw = json.load(fh)
    return {str(k): str(v) for k, v in raw.items()}
