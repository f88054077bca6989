"""Report builders: auditable delimited tables for the CLI bundles.

Every rate in a report carries its numerator and denominator as separate
integer columns; rounding happens only when the rendered column is written.
Reports open with '#' comment lines naming the granularity, abstention
mode, and exclusions that shaped the numbers. Builders return Report
values; writing and manifest bookkeeping stay in the CLI layer.
"""

from __future__ import annotations

import csv
import hashlib
import io
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import polars as pl

from .errors import ConfigError, ModelDomainError
from .geo import CentroidIndex, agreement_curve
from .model import (
    ModelParams,
    enumerate_exact,
    expected_local,
    expected_public,
    peak_expected_public,
    tipping_point,
)
from .policy import (
    CoarseningPolicy,
    NoisingSpec,
    RedactionPolicy,
    apply_coarsening,
    apply_noising,
    apply_redaction,
    dp_feasibility_check,
    tradeoff_curve,
)
from .records import ABSENT, Election
from .revelation import (
    RevelationFinding,
    any_contest_summary,
    contest_stats,
    decompose_by,
    local_revelations,
    probabilistic_revelations,
    probabilistic_unit_voters,
    public_revelations,
)
from .tallies import FindingKind, PublishedTally, column_token, publish_tallies
from .units import Granularity, assign_units

FULL_STYLE = "full"
LIMITED_STYLE = "limited"
PROVISIONAL = "provisional"


def sha256_file(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def fmt_rate(numerator: int | float, denominator: int | float) -> str:
    if not denominator:
        return ""
    return f"{numerator / denominator:.6f}"


def fmt_percent(numerator: int | float, denominator: int | float) -> str:
    if not denominator:
        return ""
    return f"{100.0 * numerator / denominator:.4f}"


@dataclass
class Report:
    """One delimited output file: '#' header lines, then a CSV table."""

    name: str
    header: list[str]
    columns: list[str]
    rows: Sequence[Sequence] | pl.DataFrame

    def filename(self) -> str:
        return f"{self.name}.csv"

    def render(self) -> str:
        buf = io.StringIO()
        for line in self.header:
            buf.write(f"# {line}\n")
        if isinstance(self.rows, pl.DataFrame):
            assert list(self.rows.columns) == self.columns
            buf.write(self.rows.write_csv(line_terminator="\n"))
        else:
            w = csv.writer(buf, lineterminator="\n")
            w.writerow(self.columns)
            w.writerows(self.rows)
        return buf.getvalue()

    def write(self, out_dir: str | Path) -> Path:
        path = Path(out_dir) / self.filename()
        with open(path, "w", newline="") as fh:
            fh.write(self.render())
        return path


def _exclusion_lines(style_types: Sequence[str], contests: Sequence[str]) -> list[str]:
    return [
        "excluded_style_types: " + (", ".join(style_types) if style_types else "none"),
        "excluded_contests: " + (", ".join(contests) if contests else "none"),
    ]


def style_types(election: Election) -> dict[str, str]:
    """Classify ballot styles by contest coverage.

    A style whose ballots carry fewer distinct contests than the widest
    style is 'limited' (the restricted-ballot analog); the rest are 'full'.
    """
    n_styles = len(election.style_labels)
    contest_count = np.zeros(n_styles, dtype=np.int64)
    for col in election.mark_columns.values():
        present = np.bincount(
            election.style_code[col != ABSENT], minlength=n_styles
        )
        contest_count += present > 0
    widest = contest_count.max() if n_styles else 0
    return {
        label: (LIMITED_STYLE if contest_count[i] < widest else FULL_STYLE)
        for i, label in enumerate(election.style_labels)
    }


# -- analyze bundle ----------------------------------------------------------


@dataclass(frozen=True)
class AnalyzeOptions:
    granularities: tuple[Granularity, ...]
    coalition_sizes: tuple[int, ...] = ()
    thresholds: tuple[float, ...] = ()
    count_all_abstain: bool = False
    exclude_style_types: tuple[str, ...] = ()
    exclude_contests: tuple[str, ...] = ()
    focus_contest: str | None = None
    size_cutoffs: tuple[int, ...] = (9, 29)

    def __post_init__(self) -> None:
        if not self.granularities:
            raise ConfigError("need at least one granularity")
        if any(a < 1 for a in self.coalition_sizes):
            raise ConfigError("coalition sizes must be >= 1")
        if any(not 0.0 < t <= 1.0 for t in self.thresholds):
            raise ConfigError("thresholds must lie in (0, 1]")
        lo = 0
        for t in self.size_cutoffs:
            if t < 1 or t <= lo:
                raise ConfigError("size cutoffs must be positive and increasing")
            lo = t

    @property
    def abstain_mode(self) -> str:
        return "count_all" if self.count_all_abstain else "candidates_only"


def _resolve_focus_contest(election: Election, wanted: str | None) -> str | None:
    if wanted is not None:
        if wanted not in election.mark_columns:
            raise ConfigError(f"focus contest {wanted!r} not in the data")
        return wanted
    for spec in election.revelation_contests(contested_only=True):
        return spec.contest_id
    return None


def _collect_findings(
    election: Election, opts: AnalyzeOptions
) -> dict[str, dict[FindingKind, set[RevelationFinding]]]:
    out: dict[str, dict[FindingKind, set[RevelationFinding]]] = {}
    for g in opts.granularities:
        per_kind: dict[FindingKind, set[RevelationFinding]] = {
            FindingKind.public(): public_revelations(
                election, g, count_all_abstain=opts.count_all_abstain
            )
        }
        for a in sorted(set(opts.coalition_sizes)):
            per_kind[FindingKind.local(a)] = local_revelations(
                election, g, a, count_all_abstain=opts.count_all_abstain
            )
        for t in sorted(set(opts.thresholds)):
            per_kind[FindingKind.probabilistic(t)] = probabilistic_revelations(
                election, g, t
            )
        out[g.name] = per_kind
    return out


def summary_report(
    election: Election,
    opts: AnalyzeOptions,
    findings: dict[str, dict[FindingKind, set[RevelationFinding]]],
) -> Report:
    """Voters with at least one revealed contest, by granularity and kind.

    Local rows are increments past public and smaller coalitions. Each
    probabilistic threshold gets two rows: ballots carrying the dominant
    mark, and the headcount of every voter in a qualifying unit.
    """
    header = [
        "report: voters with at least one revealed contest",
        "granularities: " + ", ".join(g.name for g in opts.granularities),
        f"abstain_mode: {opts.abstain_mode}",
        *_exclusion_lines((), ()),
    ]
    columns = [
        "granularity", "kind", "parameter",
        "revealed_voters", "total_voters", "percent",
    ]
    total = election.n_ballots
    rows: list[tuple] = []
    for g in opts.granularities:
        per_kind = findings[g.name]
        summary = any_contest_summary(
            set().union(*per_kind.values()), total
        )
        rows.append((
            g.name, "public", "", summary.public_voters, total,
            fmt_percent(summary.public_voters, total),
        ))
        for a in sorted(summary.local_increments):
            n = summary.local_increments[a]
            rows.append((
                g.name, "local_increment", a, n, total, fmt_percent(n, total),
            ))
        for t in sorted(summary.probabilistic_voters):
            n = summary.probabilistic_voters[t]
            rows.append((
                g.name, "probabilistic", f"{t:g}", n, total,
                fmt_percent(n, total),
            ))
            headcount = probabilistic_unit_voters(election, g, t)
            rows.append((
                g.name, "probabilistic_unit_voters", f"{t:g}", headcount,
                total, fmt_percent(headcount, total),
            ))
        rows.append((
            g.name, "any", "", summary.any_revealed, total,
            fmt_percent(summary.any_revealed, total),
        ))
    return Report("revelation_summary", header, columns, rows)


def group_report(
    election: Election,
    opts: AnalyzeOptions,
    findings: dict[str, dict[FindingKind, set[RevelationFinding]]],
    types: dict[str, str],
) -> Report:
    """Publicly revealed voters by vote method, style type, and their union."""
    header = [
        "report: publicly revealed voters by ballot group",
        "granularities: " + ", ".join(g.name for g in opts.granularities),
        f"abstain_mode: {opts.abstain_mode}",
        "style_type rule: a style carrying fewer contests than the widest "
        "style is 'limited'",
        *_exclusion_lines((), ()),
    ]
    columns = [
        "granularity", "dimension", "group",
        "voters", "revealed_voters", "percent",
    ]
    limited_styles = {s for s, t in types.items() if t == LIMITED_STYLE}
    limited_mask = np.array(
        [election.style_labels[c] in limited_styles for c in election.style_code]
    )
    prov_mask = np.array(
        [election.method_labels[c] == PROVISIONAL for c in election.method_code]
    )
    either_mask = limited_mask | prov_mask

    rows: list[tuple] = []
    for g in opts.granularities:
        public = findings[g.name][FindingKind.public()]
        for dim in ("vote_method", "ballot_style_type"):
            for gr in decompose_by(
                public, election, dim, style_classifier=types.get
            ):
                rows.append((
                    g.name, dim, gr.group, gr.voters, gr.revealed,
                    fmt_percent(gr.revealed, gr.voters),
                ))
        revealed_ballots = {f.ballot_id for f in public}
        revealed_mask = np.array(
            [bid in revealed_ballots for bid in election.ballot_ids]
        )
        for label, mask in (
            ("provisional_or_limited", either_mask),
            ("other", ~either_mask),
        ):
            voters = int(mask.sum())
            revealed = int((mask & revealed_mask).sum())
            rows.append((
                g.name, "either", label, voters, revealed,
                fmt_percent(revealed, voters),
            ))
    return Report("revelation_by_group", header, columns, rows)


def choice_report(
    election: Election,
    opts: AnalyzeOptions,
    findings: dict[str, dict[FindingKind, set[RevelationFinding]]],
    focus: str,
) -> Report:
    """Publicly revealed voters by their mark in the focus contest."""
    header = [
        "report: publicly revealed voters by vote choice",
        f"focus_contest: {focus}",
        "granularities: " + ", ".join(g.name for g in opts.granularities),
        f"abstain_mode: {opts.abstain_mode}",
        *_exclusion_lines((), ()),
    ]
    columns = [
        "granularity", "contest_id", "choice",
        "voters", "revealed_voters", "percent",
    ]
    rows: list[tuple] = []
    for g in opts.granularities:
        public = findings[g.name][FindingKind.public()]
        for gr in decompose_by(public, election, f"choice:{focus}"):
            rows.append((
                g.name, focus, gr.group, gr.voters, gr.revealed,
                fmt_percent(gr.revealed, gr.voters),
            ))
    return Report("revelation_by_choice", header, columns, rows)


def contest_report(
    election: Election,
    opts: AnalyzeOptions,
    findings: dict[str, dict[FindingKind, set[RevelationFinding]]],
    types: dict[str, str],
) -> Report:
    """Per-contest public revelation rates, honoring the exclusion lists."""
    excluded_styles = tuple(
        s for s, t in types.items() if t in opts.exclude_style_types
    )
    header = [
        "report: publicly revealed voters per contest",
        "granularities: " + ", ".join(g.name for g in opts.granularities),
        f"abstain_mode: {opts.abstain_mode}",
        *_exclusion_lines(opts.exclude_style_types, opts.exclude_contests),
    ]
    columns = [
        "granularity", "contest_id", "voters", "revealed_voters", "percent",
    ]
    rows: list[tuple] = []
    for g in opts.granularities:
        public = findings[g.name][FindingKind.public()]
        for gr in decompose_by(
            public, election, "contest",
            exclude_styles=excluded_styles,
            exclude_contests=opts.exclude_contests,
        ):
            rows.append((
                g.name, gr.group, gr.voters, gr.revealed,
                fmt_percent(gr.revealed, gr.voters),
            ))
    return Report("contest_revelation", header, columns, rows)


def exposure_report(election: Election, opts: AnalyzeOptions) -> Report:
    """Voters per 100,000 in reporting units at or below each size cutoff."""
    header = [
        "report: voters in small reporting units",
        "granularities: " + ", ".join(g.name for g in opts.granularities),
        "cutoffs count units with at most max_unit_size ballots",
        *_exclusion_lines((), ()),
    ]
    columns = [
        "granularity", "max_unit_size",
        "voters_in_small_units", "total_voters", "per_100k",
    ]
    rows: list[tuple] = []
    for g in opts.granularities:
        sizes = np.asarray(assign_units(election, g).sizes, dtype=np.int64)
        total = int(sizes.sum())
        for cutoff in opts.size_cutoffs:
            small = int(sizes[sizes <= cutoff].sum())
            per_100k = 100_000.0 * small / total if total else 0.0
            rows.append((g.name, cutoff, small, total, f"{per_100k:.2f}"))
    return Report("unit_size_exposure", header, columns, rows)


def contest_stats_report(election: Election, opts: AnalyzeOptions) -> Report:
    header = [
        "report: per-contest residual and lopsidedness statistics",
        "lopsidedness: leading choice's share of candidate votes",
        f"abstain_mode: {opts.abstain_mode}",
        *_exclusion_lines((), ()),
    ]
    columns = [
        "contest_id", "ballots", "undervotes", "undervote_rate",
        "lopsidedness",
    ]
    rows: list[tuple] = []
    for st in contest_stats(election):
        undervotes = round(st.undervote_rate * st.ballots)
        rows.append((
            st.contest_id, st.ballots, undervotes,
            fmt_rate(undervotes, st.ballots),
            f"{st.lopsidedness:.6f}" if st.lopsidedness_defined else "",
        ))
    return Report("contest_stats", header, columns, rows)


def findings_report(
    opts: AnalyzeOptions,
    findings: dict[str, dict[FindingKind, set[RevelationFinding]]],
) -> Report:
    """Finding-level export: every summary number is an aggregate of this."""
    header = [
        "report: every revelation finding, one ballot-contest pair per row",
        "granularities: " + ", ".join(g.name for g in opts.granularities),
        f"abstain_mode: {opts.abstain_mode}",
        *_exclusion_lines((), ()),
    ]
    columns = [
        "granularity", "kind", "parameter", "contest_id", "ballot_id",
        "revealed_choice", "unit_key", "unit_size",
    ]
    rows: list[tuple] = []
    for gname in sorted(findings):
        kind_order = lambda k: (k.category, k.level or 0)
        for kind in sorted(findings[gname], key=kind_order):
            param = "" if kind.level is None else f"{kind.level:g}"
            for f in sorted(findings[gname][kind], key=RevelationFinding.sort_key):
                rows.append((
                    gname, kind.category, param, f.contest_id, f.ballot_id,
                    f.revealed_choice.token(), "|".join(f.unit_key.values),
                    f.unit_size,
                ))
    return Report("findings", header, columns, rows)


def ballots_report(
    election: Election,
    opts: AnalyzeOptions,
    types: dict[str, str],
    focus: str | None,
) -> Report:
    """Per-ballot quasi-identifiers, for re-deriving group denominators."""
    header = [
        "report: ballot quasi-identifiers and the focus-contest mark",
        f"focus_contest: {focus or 'none'}",
        *_exclusion_lines((), ()),
    ]
    precinct = [election.precinct_labels[c] for c in election.precinct_code]
    style = [election.style_labels[c] for c in election.style_code]
    method = [election.method_labels[c] for c in election.method_code]
    table = {
        "ballot_id": list(election.ballot_ids),
        "precinct": precinct,
        "ballot_style": style,
        "vote_method": method,
        "style_type": [types[s] for s in style],
    }
    columns = list(table)
    if focus is not None:
        marks = []
        for i in range(election.n_ballots):
            m = election.mark(i, focus)
            marks.append(m.token() if m is not None else "")
        col = f"mark_{focus}"
        table[col] = marks
        columns.append(col)
    return Report("ballots", header, columns, pl.DataFrame(table))


def tally_report(published: PublishedTally, name: str = "published_tally") -> Report:
    """Unit-level counts as a jurisdiction would release them."""
    header = [
        "report: released per-unit counts",
        f"granularity: {published.granularity.name}",
        "dimensions: " + ", ".join(published.granularity.dims),
        *_exclusion_lines((), ()),
    ]
    columns = ["unit_key", "unit_size", "contest_id", "token", "count"]
    rows: list[tuple] = []
    for u in range(published.n_units):
        key = "|".join(published.key_values[u])
        size = int(published.unit_sizes[u])
        for spec in published.contests:
            mat = published.counts[spec.contest_id]
            for col in range(mat.shape[1]):
                count = int(mat[u, col])
                if count:
                    rows.append((
                        key, size, spec.contest_id,
                        column_token(spec, col), count,
                    ))
    return Report(name, header, columns, rows)


def run_analysis(election: Election, opts: AnalyzeOptions) -> list[Report]:
    types = style_types(election)
    focus = _resolve_focus_contest(election, opts.focus_contest)
    findings = _collect_findings(election, opts)
    reports = [
        summary_report(election, opts, findings),
        group_report(election, opts, findings, types),
        contest_report(election, opts, findings, types),
        exposure_report(election, opts),
        contest_stats_report(election, opts),
        findings_report(opts, findings),
        ballots_report(election, opts, types, focus),
    ]
    if focus is not None:
        reports.insert(2, choice_report(election, opts, findings, focus))
    return reports


# -- policy bundle -----------------------------------------------------------


@dataclass(frozen=True)
class PolicyOptions:
    granularity: Granularity
    redaction: RedactionPolicy | None = None
    coarsening: CoarseningPolicy | None = None
    noising: NoisingSpec | None = None
    k_max: int = 40
    coalition_sizes: tuple[int, ...] = ()
    thresholds: tuple[float, ...] = ()
    count_all_abstain: bool = False
    seed: int = 0

    def __post_init__(self) -> None:
        if self.k_max < 0:
            raise ConfigError("k_max must be >= 0")

    @property
    def abstain_mode(self) -> str:
        return "count_all" if self.count_all_abstain else "candidates_only"


def tradeoff_report(election: Election, opts: PolicyOptions) -> Report:
    action = (opts.redaction.action if opts.redaction
              else "merge_into_parent_unit")
    curve = tradeoff_curve(
        election, opts.granularity, range(opts.k_max + 1),
        action=action, count_all_abstain=opts.count_all_abstain,
    )
    header = [
        "report: revelation against redaction threshold",
        f"granularity: {opts.granularity.name}",
        f"action: {action}",
        f"abstain_mode: {opts.abstain_mode}",
        *_exclusion_lines((), ()),
    ]
    columns = [
        "k", "revelations_before", "revelations_after",
        "redacted_vulnerable", "redacted_not_vulnerable", "redacted_total",
    ]
    rows = [
        (
            k, o.revelations_before, o.revelations_after,
            o.ballots_redacted_vulnerable, o.ballots_redacted_not_vulnerable,
            o.ballots_redacted,
        )
        for k, o in curve
    ]
    return Report("tradeoff_curve", header, columns, rows)


def redaction_report(election: Election, opts: PolicyOptions) -> list[Report]:
    redacted, outcome = apply_redaction(
        election, opts.granularity, opts.redaction,
        count_all_abstain=opts.count_all_abstain,
    )
    header = [
        "report: one redaction policy applied",
        f"granularity: {opts.granularity.name}",
        f"k: {opts.redaction.k}",
        f"action: {opts.redaction.action}",
        f"abstain_mode: {opts.abstain_mode}",
        *_exclusion_lines((), ()),
    ]
    outcome_report = Report(
        "redaction_outcome", header,
        [
            "k", "action", "revelations_before", "revelations_after",
            "redacted_vulnerable", "redacted_not_vulnerable",
            "suppressed_ballots",
        ],
        [(
            opts.redaction.k, opts.redaction.action,
            outcome.revelations_before, outcome.revelations_after,
            outcome.ballots_redacted_vulnerable,
            outcome.ballots_redacted_not_vulnerable,
            redacted.suppressed_ballots,
        )],
    )

    tally_rows: list[tuple] = []
    for gidx in range(redacted.n_groups):
        dims = "+".join(redacted.group_dims[gidx]) or "whole_election"
        key = "|".join(redacted.group_keys[gidx]) or "(all)"
        size = int(redacted.group_sizes[gidx])
        withheld = gidx in redacted.counts_withheld
        for spec in redacted.contests:
            mat = redacted.counts[spec.contest_id]
            for col in range(mat.shape[1]):
                count = int(mat[gidx, col])
                if count or withheld:
                    tally_rows.append((
                        dims, key, size, int(withheld), spec.contest_id,
                        column_token(spec, col), count,
                    ))
    tally = Report(
        "redacted_tally",
        header + ["withheld groups keep their size but zero counts"],
        [
            "group_dims", "group_key", "group_size", "withheld",
            "contest_id", "token", "count",
        ],
        tally_rows,
    )
    return [outcome_report, tally]


def coarsening_report(election: Election, opts: PolicyOptions) -> Report:
    outcome = apply_coarsening(
        election, opts.coarsening, opts.granularity,
        coalition_sizes=opts.coalition_sizes,
        thresholds=opts.thresholds,
        count_all_abstain=opts.count_all_abstain,
    )
    header = [
        "report: revelation before and after label coarsening",
        f"granularity: {opts.granularity.name}",
        f"rules: {len(opts.coarsening.rules)}",
        f"abstain_mode: {opts.abstain_mode}",
        *_exclusion_lines((), ()),
    ]
    columns = [
        "phase", "kind", "parameter",
        "revealed_voters", "total_voters", "percent",
    ]
    rows: list[tuple] = []
    for phase, summary in (("before", outcome.before), ("after", outcome.after)):
        total = summary.total_voters
        rows.append((
            phase, "public", "", summary.public_voters, total,
            fmt_percent(summary.public_voters, total),
        ))
        for a in sorted(summary.local_increments):
            n = summary.local_increments[a]
            rows.append((
                phase, "local_increment", a, n, total, fmt_percent(n, total),
            ))
        for t in sorted(summary.probabilistic_voters):
            n = summary.probabilistic_voters[t]
            rows.append((
                phase, "probabilistic", f"{t:g}", n, total,
                fmt_percent(n, total),
            ))
        rows.append((
            phase, "any", "", summary.any_revealed, total,
            fmt_percent(summary.any_revealed, total),
        ))
    return Report("coarsening_summary", header, columns, rows)


def noising_reports(election: Election, opts: PolicyOptions) -> list[Report]:
    published = publish_tallies(election, opts.granularity)
    noised, fidelity = apply_noising(published, opts.noising, opts.seed)
    header = [
        "report: leader flips introduced by count noising",
        f"granularity: {opts.granularity.name}",
        f"magnitude: {opts.noising.magnitude}",
        f"seed: {opts.seed}",
        f"cells: {fidelity.cells}",
        f"flips: {fidelity.flip_count}",
        f"flip_rate: {fidelity.flip_rate:.6f}",
        *_exclusion_lines((), ()),
    ]
    flips = Report(
        "noising_fidelity", header,
        ["unit_key", "contest_id", "true_leader", "noised_leader"],
        [
            (
                "|".join(published.key_values[fl.unit_index]),
                fl.contest_id, fl.true_leader, fl.noised_leader,
            )
            for fl in fidelity.flips
        ],
    )
    out = [flips, tally_report(noised, name="noised_tally")]
    if opts.noising.epsilon is not None:
        out.append(dp_report(opts.noising))
    return out


def dp_report(spec: NoisingSpec, margins: Iterable[int] = range(11)) -> Report:
    header = [
        "report: bounded-noise feasibility against a privacy budget",
        f"epsilon: {spec.epsilon:g}",
        f"noise_magnitude: {spec.magnitude}",
        *_exclusion_lines((), ()),
    ]
    columns = [
        "margin", "epsilon", "noise_magnitude",
        "ratio", "feasible", "reason",
    ]
    rows: list[tuple] = []
    for m in margins:
        v = dp_feasibility_check(m, spec.epsilon, spec.magnitude)
        ratio = f"{v.ratio:.6f}" if v.ratio_bounded else "inf"
        rows.append((
            m, f"{spec.epsilon:g}", spec.magnitude, ratio,
            int(v.feasible), v.reason,
        ))
    return Report("dp_feasibility", header, columns, rows)


def run_policy(election: Election, opts: PolicyOptions) -> list[Report]:
    reports = [tradeoff_report(election, opts)]
    if opts.redaction is not None:
        reports.extend(redaction_report(election, opts))
    if opts.coarsening is not None:
        reports.append(coarsening_report(election, opts))
    if opts.noising is not None:
        reports.extend(noising_reports(election, opts))
    return reports


# -- model bundle ------------------------------------------------------------


@dataclass(frozen=True)
class ModelScenario:
    label: str
    support: tuple[float, ...]
    abstain_prob: float = 0.0
    max_unit_size: int = 60
    coalition_sizes: tuple[int, ...] = (1, 2)

    def __post_init__(self) -> None:
        if self.max_unit_size < 1:
            raise ConfigError("max_unit_size must be >= 1")
        if any(a < 1 for a in self.coalition_sizes):
            raise ConfigError("coalition sizes must be >= 1")

    @classmethod
    def from_dict(cls, raw: dict) -> "ModelScenario":
        unknown = set(raw) - {
            "label", "support", "abstain_prob", "max_unit_size",
            "coalition_sizes",
        }
        if unknown:
            raise ConfigError(f"unknown scenario fields: {sorted(unknown)}")
        return cls(
            label=raw["label"],
            support=tuple(raw["support"]),
            abstain_prob=raw.get("abstain_prob", 0.0),
            max_unit_size=raw.get("max_unit_size", 60),
            coalition_sizes=tuple(raw.get("coalition_sizes", (1, 2))),
        )


DEFAULT_SCENARIOS = (
    ModelScenario("default", (0.7, 0.3)),
    ModelScenario("concentrated", (0.95, 0.05), abstain_prob=0.05),
    ModelScenario("uniform_four", (0.25, 0.25, 0.25, 0.25), abstain_prob=0.20),
    ModelScenario("certain", (1.0,)),
)


@dataclass(frozen=True)
class ModelOptions:
    scenarios: tuple[ModelScenario, ...] = DEFAULT_SCENARIOS
    tipping_thresholds: tuple[float, ...] = (0.01, 0.001)

    def __post_init__(self) -> None:
        if not self.scenarios:
            raise ConfigError("need at least one scenario")
        labels = [s.label for s in self.scenarios]
        if len(set(labels)) != len(labels):
            raise ConfigError("scenario labels must be unique")
        if any(t <= 0 for t in self.tipping_thresholds):
            raise ConfigError("tipping thresholds must be positive")


def model_report(opts: ModelOptions) -> Report:
    """Expected revelations per unit against unit size, per scenario.

    coalition_size 0 rows are the unanimity-only expectation; positive
    rows admit coalitions up to that size. Header lines carry each
    scenario's tipping points and expectation peak when they exist.
    """
    header = [
        "report: expected revealed ballots per reporting unit",
        "scenarios: " + ", ".join(s.label for s in opts.scenarios),
    ]
    for sc in opts.scenarios:
        support = ", ".join(f"{w:g}" for w in sc.support)
        header.append(
            f"scenario {sc.label}: support=({support}) "
            f"abstain={sc.abstain_prob:g}"
        )
        for thr in opts.tipping_thresholds:
            try:
                n = tipping_point(sc.support, sc.abstain_prob, thr)
            except ModelDomainError:
                header.append(
                    f"tipping {sc.label} threshold={thr:g}: none (expectation "
                    "never stays below it)"
                )
                continue
            header.append(
                f"tipping {sc.label} threshold={thr:g}: unit_size={n}"
            )
        try:
            peak_n, peak_v = peak_expected_public(sc.support, sc.abstain_prob)
            header.append(
                f"peak {sc.label}: unit_size={peak_n} expected={peak_v:.6f}"
            )
        except ModelDomainError:
            header.append(f"peak {sc.label}: unbounded")
    columns = [
        "scenario", "unit_size", "coalition_size", "expected_revealed",
    ]
    rows: list[tuple] = []
    for sc in opts.scenarios:
        sizes = range(1, sc.max_unit_size + 1)
        for n in sizes:
            params = ModelParams(
                unit_size=n, support=sc.support, abstain_prob=sc.abstain_prob
            )
            rows.append((sc.label, n, 0, f"{expected_public(params):.12g}"))
            for a in sorted(set(sc.coalition_sizes)):
                if a >= n:
                    continue  # a coalition needs someone left to reveal
                local = ModelParams(
                    unit_size=n, support=sc.support,
                    abstain_prob=sc.abstain_prob, coalition_size=a,
                )
                try:
                    v = expected_local(local)
                except ModelDomainError:
                    # closed form needs coalition < half the unit; tiny
                    # units fall back to exact enumeration
                    v = enumerate_exact(local)
                rows.append((sc.label, n, a, f"{v:.12g}"))
    return Report("model_sweep", header, columns, rows)


def run_model(opts: ModelOptions) -> list[Report]:
    return [model_report(opts)]


# -- geo bundle --------------------------------------------------------------


@dataclass(frozen=True)
class GeoOptions:
    centroids: CentroidIndex
    radii: tuple[float, ...]
    granularity: Granularity
    contest: str | None = None
    include_residual: bool = False
    count_all_abstain: bool = False


def run_geo(election: Election, opts: GeoOptions) -> list[Report]:
    focus = _resolve_focus_contest(election, opts.contest)
    if focus is None:
        raise ConfigError("no contested contest to map")
    findings = {
        f for f in public_revelations(
            election, opts.granularity,
            count_all_abstain=opts.count_all_abstain,
        )
        if f.contest_id == focus
    }
    curve = agreement_curve(
        findings, election, opts.centroids, opts.radii,
        include_residual=opts.include_residual,
    )
    header = [
        "report: neighborhood agreement with revealed choices",
        f"contest: {focus}",
        f"granularity: {opts.granularity.name}",
        f"distance_mode: {'planar' if opts.centroids.planar else 'sphere'}",
        f"denominator: {'all ballots' if opts.include_residual else 'candidate votes'}",
        "missing_centroid_precincts: "
        + (", ".join(curve.missing_centroid_precincts) or "none"),
        f"excluded_findings: {curve.excluded_findings}",
        f"skipped_residual_findings: {curve.skipped_residual_findings}",
        *_exclusion_lines((), ()),
    ]
    sites_rows: list[tuple] = []
    for site in curve.sites:
        for pt in site.points:
            sites_rows.append((
                site.precinct, site.revealed_choice, site.weight,
                f"{pt.radius:g}", f"{pt.agreement:.6f}",
            ))
    sites = Report(
        "agreement_sites", header,
        ["precinct", "revealed_choice", "weight", "radius_miles", "agreement"],
        sites_rows,
    )
    means_rows: list[tuple] = []
    for choice in sorted(curve.mean_agreement):
        for r, v in zip(curve.radii, curve.mean_agreement[choice]):
            means_rows.append((
                choice, curve.choice_weights[choice], f"{r:g}", f"{v:.6f}",
            ))
    means = Report(
        "agreement_means", header,
        ["revealed_choice", "weight", "radius_miles", "mean_agreement"],
        means_rows,
    )
    published = publish_tallies(election, opts.granularity)
    geo_findings = Report(
        "geo_findings",
        header,
        ["contest_id", "ballot_id", "revealed_choice", "unit_key", "unit_size"],
        [
            (
                f.contest_id, f.ballot_id, f.revealed_choice.token(),
                "|".join(f.unit_key.values), f.unit_size,
            )
            for f in sorted(findings, key=RevelationFinding.sort_key)
        ],
    )
    return [sites, means, geo_findings, tally_report(published)]
