"""Ex-post mitigation policies and the privacy-transparency tradeoff.

Three levers a jurisdiction can pull after ballots are cast: hide small
reporting units (redaction), rewrite quasi-identifiers so sensitive subgroups
pool into larger ones (coarsening), and perturb published counts (noising).
Each operation reports enough before/after structure to chart what the policy
bought and what it cost.

Merge redaction collapses whole sibling groups: when any unit under a parent
key falls at or below the threshold, the parent reports as one pooled unit.
Dropping happens dimension by dimension (vote method first, then ballot
style) and re-checks pools until nothing small remains; still-small pools at
the floor are suppressed outright. Collapsing whole groups keeps every
ballot's published group nested as the threshold grows, which is what makes
the tradeoff curve monotone.
"""

from __future__ import annotations

import math
import warnings
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .errors import ConfigError, DataError
from .records import (
    CANONICAL_METHODS,
    N_SPECIAL,
    ContestSpec,
    Election,
    normalize_code,
    normalize_method,
)
from .revelation import (
    RevelationSummary,
    any_contest_summary,
    local_revelations,
    probabilistic_revelations,
    public_revelations,
    revealed_mask_in_units,
    revealed_voter_mask,
)
from .tallies import FindingKind, PublishedTally, contest_tally
from .units import QI_DIMENSIONS, Granularity, UnitAssignment, assign_units

MERGE_INTO_PARENT_UNIT = "merge_into_parent_unit"
SUPPRESS_CHOICE_COUNTS = "suppress_choice_counts"
SUPPRESS_QUASI_IDENTIFIER = "suppress_quasi_identifier"
REDACTION_ACTIONS = (
    MERGE_INTO_PARENT_UNIT,
    SUPPRESS_CHOICE_COUNTS,
    SUPPRESS_QUASI_IDENTIFIER,
)

# Key value for the pooled remainder group under suppress_quasi_identifier.
REDACTED_VALUE = "<redacted>"

# Merge drop order; precinct is never dropped (it has no coarser parent).
_DROP_ORDER = ("vote_method", "ballot_style")


@dataclass(frozen=True)
class RedactionPolicy:
    """Hide reporting units with ``k`` or fewer ballots.

    ``k=0`` changes nothing. ``merge_into_parent_unit`` pools siblings into
    the parent key; the suppress actions withhold choice counts or pool the
    affected ballots under a redacted key.
    """

    k: int
    action: str = MERGE_INTO_PARENT_UNIT

    def __post_init__(self) -> None:
        if self.k < 0:
            raise ConfigError("redaction threshold k must be >= 0")
        if self.action not in REDACTION_ACTIONS:
            raise ConfigError(
                f"unknown redaction action {self.action!r}; "
                f"expected one of {REDACTION_ACTIONS}"
            )

    @classmethod
    def from_dict(cls, raw: Mapping) -> "RedactionPolicy":
        extra = set(raw) - {"k", "action"}
        if extra:
            raise ConfigError(f"unknown redaction policy fields {sorted(extra)}")
        if "k" not in raw:
            raise ConfigError("redaction policy needs a k threshold")
        return cls(k=int(raw["k"]), action=raw.get("action", MERGE_INTO_PARENT_UNIT))


@dataclass(frozen=True)
class PolicyOutcome:
    """What a redaction bought (fewer revelations) and cost (hidden ballots).

    Revelation counts are distinct voters with at least one publicly revealed
    contest. Redacted counts cover ballots whose original unit fell at or
    below the threshold, split by whether the ballot was vulnerable before
    the policy; siblings dragged along by a merge are reported coarser but
    not counted as redacted.
    """

    revelations_before: int
    revelations_after: int
    ballots_redacted_vulnerable: int
    ballots_redacted_not_vulnerable: int

    def __post_init__(self) -> None:
        for name in (
            "revelations_before",
            "revelations_after",
            "ballots_redacted_vulnerable",
            "ballots_redacted_not_vulnerable",
        ):
            if getattr(self, name) < 0:
                raise DataError(f"{name} is negative")
        if self.revelations_after > self.revelations_before:
            raise DataError("redaction increased public revelations")

    @property
    def ballots_redacted(self) -> int:
        return self.ballots_redacted_vulnerable + self.ballots_redacted_not_vulnerable


@dataclass
class RedactedTally:
    """Publication after redaction: groups at possibly mixed dimension sets.

    Merged groups carry the surviving dimensions in ``group_dims``; withheld
    groups stay listed with sizes but zeroed counts; suppressed ballots are
    absent from every matrix (``group_of_ballot`` holds -1 for them).
    """

    granularity: Granularity
    policy: RedactionPolicy
    group_dims: list[tuple[str, ...]]
    group_keys: list[tuple[str, ...]]
    group_sizes: np.ndarray
    contests: tuple[ContestSpec, ...]
    counts: dict[str, np.ndarray]
    counts_withheld: frozenset[int]
    suppressed_ballots: int
    group_of_ballot: np.ndarray

    @property
    def n_groups(self) -> int:
        return len(self.group_keys)

    def published_ballots(self) -> int:
        return int(self.group_sizes.sum())


@dataclass
class _GroupPlan:
    group_of_ballot: np.ndarray
    dims: list[tuple[str, ...]]
    keys: list[tuple[str, ...]]
    withheld: frozenset[int]
    fell_back: bool = False


def _merge_chain(dims: tuple[str, ...]) -> list[tuple[str, ...]]:
    chain = [dims]
    for drop in _DROP_ORDER:
        if drop in chain[-1]:
            chain.append(tuple(d for d in chain[-1] if d != drop))
    return chain


def _level_assignment(election: Election, dims: tuple[str, ...]) -> UnitAssignment:
    if dims:
        return assign_units(election, Granularity.custom(dims))
    # The whole election as one pool, for granularities without precinct.
    n = election.n_ballots
    return UnitAssignment(
        Granularity("precinct", ("precinct",)),
        np.zeros(n, dtype=np.int32),
        np.array([n], dtype=np.int64),
        [()],
    )


def _plan_identity(assignment: UnitAssignment) -> _GroupPlan:
    return _GroupPlan(
        group_of_ballot=assignment.unit_of_ballot.astype(np.int64),
        dims=[assignment.granularity.dims] * assignment.n_units,
        keys=list(assignment.key_values),
        withheld=frozenset(),
    )


def _plan_merge(election: Election, granularity: Granularity, k: int) -> _GroupPlan:
    chain = _merge_chain(granularity.dims)
    levels = [_level_assignment(election, dims) for dims in chain]
    n = election.n_ballots

    level_of_ballot = np.zeros(n, dtype=np.int64)
    first = levels[0]
    trigger = (first.sizes <= k)[first.unit_of_ballot]
    for lv in range(1, len(levels)):
        if not trigger.any():
            break
        parent = levels[lv]
        collapse = np.zeros(parent.n_units, dtype=bool)
        collapse[parent.unit_of_ballot[trigger]] = True
        member = collapse[parent.unit_of_ballot]
        level_of_ballot[member] = lv
        # A collapsed pool holds every ballot under its key, so its size is
        # the full parent size; still-small pools keep merging upward.
        trigger = member & (parent.sizes <= k)[parent.unit_of_ballot]
    suppressed = trigger

    width = max(a.n_units for a in levels)
    composite = np.empty(n, dtype=np.int64)
    for lv, a in enumerate(levels):
        sel = level_of_ballot == lv
        if sel.any():
            composite[sel] = lv * width + a.unit_of_ballot[sel].astype(np.int64)
    composite[suppressed] = -1

    published = composite >= 0
    group_of_ballot = np.full(n, -1, dtype=np.int64)
    dims: list[tuple[str, ...]] = []
    keys: list[tuple[str, ...]] = []
    if published.any():
        uniq, inverse = np.unique(composite[published], return_inverse=True)
        group_of_ballot[published] = inverse
        for code in uniq:
            lv, u = divmod(int(code), width)
            dims.append(chain[lv])
            keys.append(levels[lv].key_values[u])
    return _GroupPlan(
        group_of_ballot=group_of_ballot,
        dims=dims,
        keys=keys,
        withheld=frozenset(),
        fell_back=bool(suppressed.any()),
    )


def _plan_suppress_counts(assignment: UnitAssignment, k: int) -> _GroupPlan:
    plan = _plan_identity(assignment)
    small = np.nonzero(assignment.sizes <= k)[0]
    return _GroupPlan(
        group_of_ballot=plan.group_of_ballot,
        dims=plan.dims,
        keys=plan.keys,
        withheld=frozenset(int(u) for u in small),
    )


def _plan_suppress_qi(assignment: UnitAssignment, k: int) -> _GroupPlan:
    small = assignment.sizes <= k
    kept = np.nonzero(~small)[0]
    relabel = np.full(assignment.n_units, len(kept), dtype=np.int64)
    relabel[kept] = np.arange(len(kept))
    dims = [assignment.granularity.dims] * len(kept)
    keys = [assignment.key_values[int(u)] for u in kept]
    if small.any():
        dims.append(assignment.granularity.dims)
        keys.append((REDACTED_VALUE,) * len(assignment.granularity.dims))
    return _GroupPlan(
        group_of_ballot=relabel[assignment.unit_of_ballot],
        dims=dims,
        keys=keys,
        withheld=frozenset(),
    )


def _finish(
    election: Election,
    granularity: Granularity,
    policy: RedactionPolicy,
    plan: _GroupPlan,
    count_all_abstain: bool,
) -> tuple[RedactedTally, int]:
    n_groups = len(plan.keys)
    safe = plan.group_of_ballot.copy()
    suppressed = safe < 0
    safe[suppressed] = n_groups  # ghost row, sliced off below
    grouping = UnitAssignment(
        granularity,
        safe.astype(np.int32),
        np.bincount(safe, minlength=n_groups + 1).astype(np.int64),
        plan.keys + [("<suppressed>",)],
    )

    mask = revealed_mask_in_units(
        election,
        grouping,
        FindingKind.public(),
        count_all_abstain=count_all_abstain,
    )
    mask &= ~suppressed
    if plan.withheld:
        mask &= ~np.isin(plan.group_of_ballot, list(plan.withheld))
    revealed_after = int(mask.sum())

    contests = tuple(
        c for c in election.contests if c.contest_id in election.mark_columns
    )
    counts: dict[str, np.ndarray] = {}
    for spec in contests:
        mat = contest_tally(election, grouping, spec.contest_id)[:n_groups]
        for u in plan.withheld:
            mat[u, :] = 0
        counts[spec.contest_id] = mat

    tally = RedactedTally(
        granularity=granularity,
        policy=policy,
        group_dims=plan.dims,
        group_keys=plan.keys,
        group_sizes=grouping.sizes[:n_groups].copy(),
        contests=contests,
        counts=counts,
        counts_withheld=plan.withheld,
        suppressed_ballots=int(suppressed.sum()),
        group_of_ballot=plan.group_of_ballot,
    )
    return tally, revealed_after


def apply_redaction(
    election: Election,
    granularity: Granularity,
    policy: RedactionPolicy,
    count_all_abstain: bool = False,
) -> tuple[RedactedTally, PolicyOutcome]:
    """Redact small units and report the resulting tradeoff.

    Vulnerability labels come from the pre-policy granularity; the after
    count is recomputed over whatever group structure the action produced.
    """
    assignment = assign_units(election, granularity)
    vulnerable = revealed_voter_mask(
        election,
        granularity,
        FindingKind.public(),
        count_all_abstain=count_all_abstain,
    )
    before = int(vulnerable.sum())

    small_unit = assignment.sizes <= policy.k
    redacted = small_unit[assignment.unit_of_ballot]
    if not small_unit.any():
        plan = _plan_identity(assignment)
    elif policy.action == MERGE_INTO_PARENT_UNIT:
        plan = _plan_merge(election, granularity, policy.k)
        if plan.fell_back:
            warnings.warn(
                "merge redaction hit units with no coarser parent; "
                "suppressing them instead",
                stacklevel=2,
            )
    elif policy.action == SUPPRESS_CHOICE_COUNTS:
        plan = _plan_suppress_counts(assignment, policy.k)
    else:
        plan = _plan_suppress_qi(assignment, policy.k)

    tally, after = _finish(election, granularity, policy, plan, count_all_abstain)
    outcome = PolicyOutcome(
        revelations_before=before,
        revelations_after=after,
        ballots_redacted_vulnerable=int((redacted & vulnerable).sum()),
        ballots_redacted_not_vulnerable=int((redacted & ~vulnerable).sum()),
    )
    return tally, outcome


def tradeoff_curve(
    election: Election,
    granularity: Granularity,
    k_range: Iterable[int],
    action: str = MERGE_INTO_PARENT_UNIT,
    count_all_abstain: bool = False,
) -> list[tuple[int, PolicyOutcome]]:
    """Per-threshold outcomes, in the caller's k order.

    Affected-ballot counts grow with k and surviving revelations shrink;
    both are checked as properties in the test suite rather than here.
    """
    ks = [int(k) for k in k_range]
    if not ks:
        raise ConfigError("k_range is empty")
    out = []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for k in ks:
            policy = RedactionPolicy(k=k, action=action)
            _, outcome = apply_redaction(
                election, granularity, policy, count_all_abstain=count_all_abstain
            )
            out.append((k, outcome))
    return out


# -- coarsening --------------------------------------------------------------


def _normalize_qi(dim: str, value: str) -> str:
    if dim == "vote_method":
        return normalize_method(value)
    return normalize_code(value)


@dataclass(frozen=True)
class CoarseningRule:
    """Rewrite quasi-identifier values on every ballot matching ``match``.

    ``match`` conditions are ANDed; an empty match applies to all ballots.
    Rewriting the vote method must land on a canonical method name.
    """

    match: Mapping[str, str]
    rewrite: Mapping[str, str]

    def __post_init__(self) -> None:
        for label, mapping in (("match", self.match), ("rewrite", self.rewrite)):
            for dim, value in mapping.items():
                if dim not in QI_DIMENSIONS:
                    raise ConfigError(f"{label} on unknown dimension {dim!r}")
                if not str(value).strip():
                    raise ConfigError(f"empty {label} value for {dim}")
        if not self.rewrite:
            raise ConfigError("coarsening rule rewrites nothing")
        normal_match = {d: _normalize_qi(d, v) for d, v in self.match.items()}
        normal_rewrite = {d: _normalize_qi(d, v) for d, v in self.rewrite.items()}
        bad = normal_rewrite.get("vote_method")
        if bad is not None and bad not in CANONICAL_METHODS:
            raise ConfigError(f"rewrite to undefined vote method {bad!r}")
        object.__setattr__(self, "match", normal_match)
        object.__setattr__(self, "rewrite", normal_rewrite)


@dataclass(frozen=True)
class CoarseningPolicy:
    """An ordered list of rewrite rules, applied in sequence."""

    rules: tuple[CoarseningRule, ...]

    @classmethod
    def from_dict(cls, raw: Sequence[Mapping]) -> "CoarseningPolicy":
        rules = []
        for entry in raw:
            extra = set(entry) - {"match", "rewrite"}
            if extra:
                raise ConfigError(f"unknown coarsening rule fields {sorted(extra)}")
            rules.append(
                CoarseningRule(
                    match=dict(entry.get("match", {})),
                    rewrite=dict(entry.get("rewrite", {})),
                )
            )
        return cls(tuple(rules))


@dataclass(frozen=True)
class CoarseningOutcome:
    election: Election
    before: RevelationSummary
    after: RevelationSummary


_DIM_FIELDS = {
    "precinct": ("precinct_labels", "precinct_code"),
    "ballot_style": ("style_labels", "style_code"),
    "vote_method": ("method_labels", "method_code"),
}


def _rewrite_election(election: Election, policy: CoarseningPolicy) -> Election:
    labels = {d: list(getattr(election, f[0])) for d, f in _DIM_FIELDS.items()}
    codes = {
        d: getattr(election, f[1]).astype(np.int64).copy()
        for d, f in _DIM_FIELDS.items()
    }
    changed = False
    for rule in policy.rules:
        mask = np.ones(election.n_ballots, dtype=bool)
        for dim, value in rule.match.items():
            if value not in labels[dim]:
                mask[:] = False
                break
            mask &= codes[dim] == labels[dim].index(value)
        if not mask.any():
            continue
        for dim, value in rule.rewrite.items():
            if value not in labels[dim]:
                labels[dim].append(value)
            target = labels[dim].index(value)
            if (codes[dim][mask] != target).any():
                changed = True
            codes[dim][mask] = target
    if not changed:
        return election

    # Drop labels no longer referenced so unit listings stay clean.
    for dim in labels:
        used = np.unique(codes[dim])
        if len(used) < len(labels[dim]):
            lut = np.full(len(labels[dim]), -1, dtype=np.int64)
            lut[used] = np.arange(len(used))
            codes[dim] = lut[codes[dim]]
            labels[dim] = [labels[dim][int(u)] for u in used]

    return Election(
        ballot_ids=election.ballot_ids,
        precinct_labels=labels["precinct"],
        style_labels=labels["ballot_style"],
        method_labels=labels["vote_method"],
        precinct_code=codes["precinct"].astype(np.int32),
        style_code=codes["ballot_style"].astype(np.int32),
        method_code=codes["vote_method"].astype(np.int32),
        contests=election.contests,
        mark_columns=election.mark_columns,
        multi_marks=election.multi_marks,
        flags=list(election.flags) + ["coarsened"],
    )


def revelation_summary(
    election: Election,
    granularity: Granularity,
    coalition_sizes: Sequence[int] = (),
    thresholds: Sequence[float] = (),
    contested_only: bool = True,
    count_all_abstain: bool = False,
) -> RevelationSummary:
    """Voter-level rollup across the requested revelation kinds."""
    findings = set(
        public_revelations(election, granularity, contested_only, count_all_abstain)
    )
    for a in coalition_sizes:
        findings |= local_revelations(
            election, granularity, a, contested_only, count_all_abstain
        )
    for p in thresholds:
        findings |= probabilistic_revelations(election, granularity, p, contested_only)
    summary = any_contest_summary(findings, election.n_ballots)
    if not findings:
        # Keep the granularity label meaningful even when nothing revealed.
        summary = RevelationSummary(
            granularity=granularity.name,
            total_voters=election.n_ballots,
            public_voters=0,
            local_increments=summary.local_increments,
            probabilistic_voters=summary.probabilistic_voters,
            any_revealed=0,
        )
    return summary


def apply_coarsening(
    election: Election,
    policy: CoarseningPolicy,
    granularity: Granularity,
    coalition_sizes: Sequence[int] = (),
    thresholds: Sequence[float] = (),
    count_all_abstain: bool = False,
) -> CoarseningOutcome:
    """Rewrite quasi-identifiers and summarize revelation before and after.

    Ballot count is preserved by construction (rows are relabeled, never
    dropped). Both summaries use the same granularity, so the delta is
    attributable to the rewrites alone.
    """
    before = revelation_summary(
        election,
        granularity,
        coalition_sizes,
        thresholds,
        count_all_abstain=count_all_abstain,
    )
    rewritten = _rewrite_election(election, policy)
    after = revelation_summary(
        rewritten,
        granularity,
        coalition_sizes,
        thresholds,
        count_all_abstain=count_all_abstain,
    )
    return CoarseningOutcome(election=rewritten, before=before, after=after)


# -- noising -----------------------------------------------------------------


@dataclass(frozen=True)
class NoisingSpec:
    """Bounded integer noise on published choice counts.

    ``magnitude`` bounds the absolute perturbation per cell; the only
    distribution implemented is discrete uniform on [-magnitude, magnitude].
    ``epsilon`` is carried for the differential-privacy feasibility check.
    """

    magnitude: int
    distribution: str = "uniform"
    epsilon: float | None = None

    def __post_init__(self) -> None:
        if self.magnitude < 0:
            raise ConfigError("noise magnitude must be >= 0")
        if self.distribution != "uniform":
            raise ConfigError(f"unknown noise distribution {self.distribution!r}")
        if self.epsilon is not None and not (
            math.isfinite(self.epsilon) and self.epsilon >= 0
        ):
            raise ConfigError("epsilon must be finite and >= 0")

    @classmethod
    def from_dict(cls, raw: Mapping) -> "NoisingSpec":
        extra = set(raw) - {"magnitude", "distribution", "epsilon"}
        if extra:
            raise ConfigError(f"unknown noising fields {sorted(extra)}")
        return cls(
            magnitude=int(raw.get("magnitude", 0)),
            distribution=raw.get("distribution", "uniform"),
            epsilon=raw.get("epsilon"),
        )


@dataclass(frozen=True)
class LeaderFlip:
    unit_index: int
    contest_id: str
    true_leader: str
    noised_leader: str


@dataclass(frozen=True)
class NoiseFidelity:
    """Where noising changed which choice leads a unit's count."""

    cells: int
    flips: tuple[LeaderFlip, ...]

    @property
    def flip_count(self) -> int:
        return len(self.flips)

    @property
    def flip_rate(self) -> float:
        return len(self.flips) / self.cells if self.cells else 0.0


def apply_noising(
    published: PublishedTally, spec: NoisingSpec, seed: int
) -> tuple[PublishedTally, NoiseFidelity]:
    """Perturb per-unit choice counts, truncating at zero.

    Residual counts and unit sizes pass through unchanged. The fidelity
    report lists unit/contest cells whose leading choice differs from the
    true leader; ties break toward the earlier listed choice in both views.
    """
    rng = np.random.Generator(np.random.Philox(seed))
    counts: dict[str, np.ndarray] = {}
    flips: list[LeaderFlip] = []
    cells = 0
    for contest in published.contests:
        cid = contest.contest_id
        mat = published.counts[cid]
        cand = mat[:, N_SPECIAL:]
        if spec.magnitude == 0:
            noised_cand = cand.copy()
        else:
            noise = rng.integers(
                -spec.magnitude, spec.magnitude + 1, size=cand.shape, dtype=np.int64
            )
            noised_cand = np.maximum(cand + noise, 0)
        out = mat.copy()
        out[:, N_SPECIAL:] = noised_cand
        counts[cid] = out

        if cand.shape[1] == 0:
            continue
        has_leader = cand.sum(axis=1) > 0
        cells += int(has_leader.sum())
        true_lead = np.argmax(cand, axis=1)
        noised_lead = np.argmax(noised_cand, axis=1)
        for u in np.nonzero(has_leader & (true_lead != noised_lead))[0]:
            flips.append(
                LeaderFlip(
                    unit_index=int(u),
                    contest_id=cid,
                    true_leader=contest.listed_choices[int(true_lead[u])],
                    noised_leader=contest.listed_choices[int(noised_lead[u])],
                )
            )

    noised = PublishedTally(
        granularity=published.granularity,
        key_values=list(published.key_values),
        unit_sizes=published.unit_sizes,
        contests=published.contests,
        counts=counts,
    )
    return noised, NoiseFidelity(cells=cells, flips=tuple(flips))


# -- differential-privacy feasibility ----------------------------------------


@dataclass(frozen=True)
class DpVerdict:
    feasible: bool
    ratio: float
    ratio_bounded: bool
    epsilon: float
    margin: int
    noise_magnitude: int
    reason: str


def _sign_weights(shift: int, magnitude: int) -> tuple[int, int, int]:
    """Outcome weights for sign(shift + noise difference).

    The difference of two independent discrete-uniform draws on
    [-magnitude, magnitude] takes value d with weight 2*magnitude+1-|d|,
    over a total of (2*magnitude+1)**2.
    """
    pos = zero = neg = 0
    for d in range(-2 * magnitude, 2 * magnitude + 1):
        w = 2 * magnitude + 1 - abs(d)
        s = shift + d
        if s > 0:
            pos += w
        elif s < 0:
            neg += w
        else:
            zero += w
    return pos, zero, neg


def dp_feasibility_check(
    margin: int,
    epsilon: float,
    noise_magnitude: int = 0,
    constant_output: bool = False,
) -> DpVerdict:
    """Can reporting the winner meet a likelihood-ratio bound of exp(epsilon)?

    Models the statistic as the sign of the leader's margin after optional
    uniform integer noise on each candidate count, and the adjacent dataset
    as the same election minus one ballot cast for the leader. The ratio is
    the worst case over reportable outcomes in either direction; feasible
    means ratio <= exp(epsilon). A margin of one with no noise makes an
    outcome certain on one side and impossible on the other, so no finite
    epsilon suffices.
    """
    if margin < 0:
        raise ConfigError("margin must be >= 0")
    if not (math.isfinite(epsilon) and epsilon >= 0):
        raise ConfigError("epsilon must be finite and >= 0")
    if noise_magnitude < 0:
        raise ConfigError("noise magnitude must be >= 0")

    if constant_output:
        return DpVerdict(
            feasible=True,
            ratio=1.0,
            ratio_bounded=True,
            epsilon=epsilon,
            margin=margin,
            noise_magnitude=noise_magnitude,
            reason="output ignores the data, so the likelihood ratio is 1",
        )

    with_row = _sign_weights(margin, noise_magnitude)
    without_row = _sign_weights(margin - 1, noise_magnitude)
    worst = Fraction(0)
    unbounded = False
    for a, b in zip(with_row, without_row):
        if a == 0 and b == 0:
            continue
        if a == 0 or b == 0:
            unbounded = True
            break
        worst = max(worst, Fraction(a, b), Fraction(b, a))

    if unbounded:
        return DpVerdict(
            feasible=False,
            ratio=math.inf,
            ratio_bounded=False,
            epsilon=epsilon,
            margin=margin,
            noise_magnitude=noise_magnitude,
            reason=(
                "an outcome is possible on one side of the removed ballot "
                "and impossible on the other"
            ),
        )
    # Exact comparison against the float bound the caller asked for.
    feasible = worst <= Fraction(math.exp(epsilon))
    return DpVerdict(
        feasible=feasible,
        ratio=float(worst),
        ratio_bounded=True,
        epsilon=epsilon,
        margin=margin,
        noise_magnitude=noise_magnitude,
        reason=(
            "likelihood ratio computed by enumeration over the noise support"
            if noise_magnitude
            else "one removed ballot cannot change the reported outcome"
        ),
    )
