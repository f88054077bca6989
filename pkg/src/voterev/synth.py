"""Synthetic elections with known ground truth.

The generator plants unanimity where told, draws everything else from
per-contest vote distributions, and keeps its own definitional record of what
is revealed. That ground truth is computed here with plain counting over the
generated rows, on purpose: the revelation engine must be checkable against
an implementation it shares no code with.
"""

from __future__ import annotations

import csv
import json
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import polars as pl

from .errors import ConfigError
from .records import (
    CastVoteRecord,
    ContestSpec,
    Election,
    Mark,
    VotedRecord,
)

METHODS = ("mail", "in_person", "provisional")
RESIDUAL_TOKENS = ("<undervote>", "<overvote>", "<writein>")


@dataclass(frozen=True)
class ContestModel:
    """Vote distribution for one generated contest."""

    contest_id: str
    choices: tuple[str, ...]
    support: tuple[float, ...]
    abstain_prob: float = 0.0
    residual_split: tuple[float, float, float] = (1.0, 0.0, 0.0)

    def __post_init__(self) -> None:
        if len(self.choices) != len(self.support):
            raise ConfigError(f"{self.contest_id}: support length mismatch")
        if any(w < 0 for w in self.support) or abs(sum(self.support) - 1) > 1e-9:
            raise ConfigError(f"{self.contest_id}: support must be a distribution")
        if not 0 <= self.abstain_prob <= 1:
            raise ConfigError(f"{self.contest_id}: bad abstain_prob")
        if any(r < 0 for r in self.residual_split) or abs(
            sum(self.residual_split) - 1
        ) > 1e-9:
            raise ConfigError(f"{self.contest_id}: bad residual_split")


@dataclass(frozen=True)
class PlantedUnit:
    """Force one ballot-equivalent unit unanimous in one contest."""

    precinct: str
    ballot_style: str
    vote_method: str
    contest_id: str
    choice: str
    min_ballots: int = 1

    def key(self) -> tuple[str, str, str]:
        return (self.precinct, self.ballot_style, self.vote_method)


@dataclass(frozen=True)
class SynthSpec:
    precinct_sizes: tuple[int, ...]
    contests: tuple[ContestModel, ...]
    n_styles: int = 1
    method_mix: tuple[float, float, float] = (0.6, 0.35, 0.05)
    style_contests: dict[str, tuple[str, ...]] | None = None
    planted: tuple[PlantedUnit, ...] = ()
    seed: int = 0

    def __post_init__(self) -> None:
        if any(n < 0 for n in self.precinct_sizes):
            raise ConfigError("precinct sizes must be >= 0")
        if self.n_styles < 1:
            raise ConfigError("need at least one style")
        if any(p < 0 for p in self.method_mix) or abs(
            sum(self.method_mix) - 1
        ) > 1e-9:
            raise ConfigError("method_mix must be a distribution")
        cids = [c.contest_id for c in self.contests]
        if len(set(cids)) != len(cids):
            raise ConfigError("duplicate contest_id")
        by_id = {c.contest_id: c for c in self.contests}
        precincts = set(self.precinct_labels())
        styles = set(self.style_labels())
        seen_plants: dict[tuple, str] = {}
        for p in self.planted:
            if p.min_ballots < 1:
                raise ConfigError("planted units need min_ballots >= 1")
            if p.precinct not in precincts:
                raise ConfigError(f"planted precinct {p.precinct!r} not generated")
            if p.ballot_style not in styles or p.vote_method not in METHODS:
                raise ConfigError(f"planted key {p.key()} out of vocabulary")
            model = by_id.get(p.contest_id)
            if model is None:
                raise ConfigError(f"planted contest {p.contest_id!r} unknown")
            if p.choice not in model.choices:
                raise ConfigError(f"planted choice {p.choice!r} not listed")
            slot = (p.key(), p.contest_id)
            if seen_plants.get(slot, p.choice) != p.choice:
                raise ConfigError(f"contradictory plants for {slot}")
            seen_plants[slot] = p.choice
        if self.style_contests is not None:
            for s, cids_ in self.style_contests.items():
                if s not in styles:
                    raise ConfigError(f"style_contests names unknown style {s!r}")
                for cid in cids_:
                    if cid not in by_id:
                        raise ConfigError(f"style_contests names unknown contest {cid!r}")

    def precinct_labels(self) -> list[str]:
        return [f"P{i + 1:04d}" for i in range(len(self.precinct_sizes))]

    def style_labels(self) -> list[str]:
        return [f"S{j + 1}" for j in range(self.n_styles)]

    def contests_for_style(self, style: str) -> tuple[str, ...]:
        if self.style_contests is None:
            return tuple(c.contest_id for c in self.contests)
        return self.style_contests.get(style, ())

    @classmethod
    def from_dict(cls, raw: dict) -> "SynthSpec":
        contests = tuple(
            ContestModel(
                contest_id=c["contest_id"],
                choices=tuple(c["choices"]),
                support=tuple(c["support"]),
                abstain_prob=c.get("abstain_prob", 0.0),
                residual_split=tuple(c.get("residual_split", (1.0, 0.0, 0.0))),
            )
            for c in raw["contests"]
        )
        planted = tuple(
            PlantedUnit(
                precinct=p["precinct"],
                ballot_style=p["ballot_style"],
                vote_method=p["vote_method"],
                contest_id=p["contest_id"],
                choice=p["choice"],
                min_ballots=p.get("min_ballots", 1),
            )
            for p in raw.get("planted", ())
        )
        style_contests = raw.get("style_contests")
        if style_contests is not None:
            style_contests = {s: tuple(v) for s, v in style_contests.items()}
        return cls(
            precinct_sizes=tuple(raw["precinct_sizes"]),
            contests=contests,
            n_styles=raw.get("n_styles", 1),
            method_mix=tuple(raw.get("method_mix", (0.6, 0.35, 0.05))),
            style_contests=style_contests,
            planted=planted,
            seed=raw.get("seed", 0),
        )

    @classmethod
    def from_json_file(cls, path: str | Path) -> "SynthSpec":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


@dataclass
class SynthResult:
    spec: SynthSpec
    rows: list[tuple[str, str, str, str, dict[str, str]]]
    election: Election
    roster: list[VotedRecord]
    certified: dict[tuple[str, str], int]

    def ground_truth(
        self,
        dims: tuple[str, ...],
        kind: tuple,
        contested_only: bool = True,
        count_all_abstain: bool = False,
    ) -> set[tuple[str, str, str]]:
        """Definitional findings as (ballot_id, contest_id, token) triples.

        ``kind`` is ("public",), ("local", a) or ("probabilistic", p). Plain
        counting over generated rows; shares no code with the engine.
        """
        contested = {
            c.contest_id for c in self.spec.contests if len(c.choices) >= 2
        }
        dim_pos = {"precinct": 1, "ballot_style": 2, "vote_method": 3}
        groups = defaultdict(list)
        for row in self.rows:
            key = tuple(row[dim_pos[d]] for d in dims)
            groups[key].append(row)

        out = set()
        for rows in groups.values():
            cids = {cid for row in rows for cid in row[4]}
            for cid in cids:
                if contested_only and cid not in contested:
                    continue
                holders = [
                    (row[0], row[4][cid]) for row in rows if cid in row[4]
                ]
                n_c = len(holders)
                counts = Counter(token for _, token in holders)
                for token, c in counts.items():
                    is_candidate = token not in RESIDUAL_TOKENS
                    others = n_c - c
                    if kind[0] == "public":
                        hit = others == 0 and (is_candidate or count_all_abstain)
                    elif kind[0] == "local":
                        hit = 1 <= others <= kind[1] and (
                            is_candidate or count_all_abstain
                        )
                    elif kind[0] == "probabilistic":
                        hit = is_candidate and c / n_c >= kind[1]
                    else:
                        raise ConfigError(f"unknown kind {kind!r}")
                    if hit:
                        out |= {
                            (b, cid, t) for b, t in holders if t == token
                        }
        return out


def _draw_token(model: ContestModel, rng: np.random.Generator) -> str:
    if model.abstain_prob and rng.random() < model.abstain_prob:
        r = rng.choice(3, p=model.residual_split)
        return RESIDUAL_TOKENS[r]
    k = rng.choice(len(model.choices), p=model.support)
    return model.choices[k]


def generate(spec: SynthSpec) -> SynthResult:
    """Deterministic synthetic election; per-precinct derived random streams."""
    precincts = spec.precinct_labels()
    styles = spec.style_labels()
    by_id = {c.contest_id: c for c in spec.contests}
    plants_by_precinct: dict[str, list[PlantedUnit]] = defaultdict(list)
    plant_choice: dict[tuple, str] = {}
    for p in spec.planted:
        plants_by_precinct[p.precinct].append(p)
        plant_choice[(p.key(), p.contest_id)] = p.choice

    master = np.random.SeedSequence(spec.seed)
    children = master.spawn(len(precincts))

    rows: list[tuple[str, str, str, str, dict[str, str]]] = []
    ballot_no = 0
    for i, precinct in enumerate(precincts):
        rng = np.random.Generator(np.random.Philox(children[i]))
        n = spec.precinct_sizes[i]
        cells: list[tuple[str, str]] = []
        for plant in plants_by_precinct.get(precinct, ()):
            cells.extend(
                [(plant.ballot_style, plant.vote_method)] * plant.min_ballots
            )
        if len(cells) > n:
            raise ConfigError(
                f"planted ballots exceed precinct size in {precinct}"
            )
        for _ in range(n - len(cells)):
            style = styles[rng.integers(spec.n_styles)]
            method = METHODS[rng.choice(3, p=spec.method_mix)]
            cells.append((style, method))
        for style, method in cells:
            ballot_no += 1
            bid = f"B{ballot_no:07d}"
            marks: dict[str, str] = {}
            for cid in spec.contests_for_style(style):
                forced = plant_choice.get(((precinct, style, method), cid))
                marks[cid] = forced or _draw_token(by_id[cid], rng)
            rows.append((bid, precinct, style, method, marks))

    certified: dict[tuple[str, str], int] = {}
    for model in spec.contests:
        for choice in model.choices:
            certified[(model.contest_id, choice)] = 0
    for row in rows:
        for cid, token in row[4].items():
            if token not in RESIDUAL_TOKENS:
                certified[(cid, token)] += 1

    contests = [
        ContestSpec(m.contest_id, m.contest_id, m.choices) for m in spec.contests
    ]
    special = {
        "<undervote>": Mark.undervote(),
        "<overvote>": Mark.overvote(),
        "<writein>": Mark.writein(),
    }
    records = [
        CastVoteRecord(
            bid, precinct, style, method,
            {
                cid: special.get(token) or Mark.candidate(token)
                for cid, token in marks.items()
            },
        )
        for bid, precinct, style, method, marks in rows
    ]
    election = Election.from_records(records, contests)
    roster = [
        VotedRecord(
            voter_id=f"V{j + 1:07d}",
            precinct=row[1],
            vote_method_coarse=row[3],
            ballot_style=row[2],
            name=f"Voter {j + 1:07d}",
        )
        for j, row in enumerate(rows)
    ]
    return SynthResult(
        spec=spec, rows=rows, election=election, roster=roster,
        certified=certified,
    )


def emit(result: SynthResult, out_dir: str | Path, layout: str = "wide") -> dict:
    """Write a generated election as ingestible files; returns the paths.

    Deterministic byte-for-byte for a fixed result: rows keep generation
    order and no timestamps are written.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    contest_ids = [c.contest_id for c in result.spec.contests]
    paths = {
        "cvr": out / f"cvr_{layout}.csv",
        "descriptor": out / "descriptor.json",
        "contests": out / "contests.json",
        "certified": out / "certified.json",
        "roster": out / "roster.csv",
    }
    if layout == "jsonl":
        paths["cvr"] = out / "cvr.jsonl"

    descriptor = {
        "layout": layout,
        "delimiter": ",",
        "columns": {
            "ballot_id": "ballot_id",
            "precinct": "precinct",
            "ballot_style": "ballot_style",
            "vote_method": "vote_method",
        },
    }
    if layout == "wide":
        descriptor["contest_columns"] = contest_ids
        table = {
            "ballot_id": [r[0] for r in result.rows],
            "precinct": [r[1] for r in result.rows],
            "ballot_style": [r[2] for r in result.rows],
            "vote_method": [r[3] for r in result.rows],
        }
        for cid in contest_ids:
            table[cid] = [r[4].get(cid, "") for r in result.rows]
        pl.DataFrame(table).write_csv(paths["cvr"])
    elif layout == "long":
        descriptor["columns"]["contest"] = "contest_id"
        descriptor["columns"]["choice"] = "choice"
        with open(paths["cvr"], "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(
                ["ballot_id", "precinct", "ballot_style", "vote_method",
                 "contest_id", "choice"]
            )
            for bid, precinct, style, method, marks in result.rows:
                for cid in contest_ids:
                    if cid in marks:
                        w.writerow([bid, precinct, style, method, cid,
                                    marks[cid]])
    elif layout == "jsonl":
        with open(paths["cvr"], "w") as fh:
            for bid, precinct, style, method, marks in result.rows:
                fh.write(
                    json.dumps(
                        {
                            "ballot_id": bid,
                            "precinct": precinct,
                            "ballot_style": style,
                            "vote_method": method,
                            "marks": marks,
                        },
                        sort_keys=True,
                    )
                    + "\n"
                )
    else:
        raise ConfigError(f"unknown layout {layout!r}")

    with open(paths["descriptor"], "w") as fh:
        json.dump(descriptor, fh, indent=2, sort_keys=True)
    with open(paths["contests"], "w") as fh:
        json.dump(
            [
                {
                    "contest_id": c.contest_id,
                    "title": c.contest_id,
                    "choices": list(c.choices),
                    "votes_allowed": 1,
                }
                for c in result.spec.contests
            ],
            fh, indent=2,
        )
    certified_nested: dict[str, dict[str, int]] = {}
    for (cid, choice), count in sorted(result.certified.items()):
        certified_nested.setdefault(cid, {})[choice] = count
    with open(paths["certified"], "w") as fh:
        json.dump(certified_nested, fh, indent=2, sort_keys=True)
    with open(paths["roster"], "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["voter_id", "name", "precinct", "ballot_style",
                    "vote_method"])
        for v in result.roster:
            w.writerow([v.voter_id, v.name, v.precinct, v.ballot_style,
                        v.vote_method_coarse])
    return {k: str(v) for k, v in paths.items()}


def generate_unit_grid(
    n_units: int,
    unit_size: int,
    support: tuple[float, ...],
    abstain_prob: float = 0.0,
    seed: int = 0,
) -> Election:
    """Many same-sized single-contest units, one per precinct, drawn from the
    unit-level vote model. Vectorized; used for statistical convergence runs.

    Abstentions appear as undervotes, so the model-consistent revelation
    count is the engine's ``count_all_abstain=True`` mode.
    """
    if n_units < 1 or unit_size < 1:
        raise ConfigError("need at least one unit and one ballot")
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
    probs = (abstain_prob, *((1.0 - abstain_prob) * w for w in support))
    n = n_units * unit_size
    cats = rng.choice(len(probs), size=n, p=probs)
    # category 0 = abstain (undervote), k>0 = candidate k-1
    col = (cats - 1).astype(np.int16)

    choices = tuple(f"CAND{k + 1}" for k in range(len(support)))
    contest = ContestSpec("C1", "C1", choices)
    precinct_labels = [f"P{u + 1:06d}" for u in range(n_units)]
    return Election(
        ballot_ids=[f"B{i + 1:07d}" for i in range(n)],
        precinct_labels=precinct_labels,
        style_labels=["S1"],
        method_labels=["mail"],
        precinct_code=np.repeat(
            np.arange(n_units, dtype=np.int32), unit_size
        ),
        style_code=np.zeros(n, dtype=np.int32),
        method_code=np.zeros(n, dtype=np.int32),
        contests=(contest,),
        mark_columns={"C1": col},
        check=False,
    )
