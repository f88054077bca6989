"""Statistical model of expected revelations in a randomly voting unit.

Voters in a unit of size ``unit_size`` independently abstain with probability
``abstain_prob`` or otherwise pick candidate h with probability
``support[h]``, so the outcome counts follow a multinomial with category
probabilities (abstain_prob, (1-abstain_prob)*support[0], ...).

A background-knowledge coalition of ``coalition_size`` voters learns the
remaining votes exactly when some single category accounts for at least
``unit_size - coalition_size`` ballots; each such event reveals the
``unit_size - coalition_size`` non-coalition ballots. ``coalition_size = 0``
is the public case (full unanimity). Closed forms cover
``coalition_size < unit_size / 2`` where the per-category events are
disjoint; enumeration and simulation cover everything.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import BudgetError, ModelDomainError

ENUMERATION_BUDGET = 10**7
# Above this unit size, binomial coefficients leave exact-integer territory
# and the tail sums switch to log-space arithmetic.
_EXACT_COMB_LIMIT = 500


@dataclass(frozen=True)
class ModelParams:
    unit_size: int
    support: tuple[float, ...]
    abstain_prob: float = 0.0
    coalition_size: int = 0

    def __post_init__(self) -> None:
        if self.unit_size < 1:
            raise ModelDomainError("unit_size must be >= 1")
        if not self.support:
            raise ModelDomainError("need at least one candidate")
        if any(w < 0.0 or w > 1.0 for w in self.support):
            raise ModelDomainError("support probabilities must lie in [0, 1]")
        if abs(math.fsum(self.support) - 1.0) > 1e-12:
            raise ModelDomainError("support probabilities must sum to 1")
        if not 0.0 <= self.abstain_prob <= 1.0:
            raise ModelDomainError("abstain_prob must lie in [0, 1]")
        if self.coalition_size < 0:
            raise ModelDomainError("coalition_size must be >= 0")

    @property
    def n_candidates(self) -> int:
        return len(self.support)

    def category_probs(self) -> tuple[float, ...]:
        """Multinomial category probabilities: abstain first, then candidates."""
        s = self.abstain_prob
        return (s, *((1.0 - s) * w for w in self.support))

    def with_unit_size(self, n: int) -> "ModelParams":
        return replace(self, unit_size=n)


def expected_public(params: ModelParams) -> float:
    """Expected number of ballots revealed by unit unanimity."""
    n = params.unit_size
    s = params.abstain_prob
    core = s**n + (1.0 - s) ** n * math.fsum(w**n for w in params.support)
    return n * core


def _binom_tail(n: int, lo: int, p: float) -> float:
    """P(X >= lo) for X ~ Binomial(n, p), summed over the upper tail."""
    if lo <= 0:
        return 1.0
    if p <= 0.0:
        return 0.0
    if p >= 1.0:
        return 1.0
    if n <= _EXACT_COMB_LIMIT:
        return math.fsum(
            math.comb(n, m) * p**m * (1.0 - p) ** (n - m) for m in range(lo, n + 1)
        )
    log_p = math.log(p)
    log_q = math.log1p(-p)
    terms = []
    for m in range(lo, n + 1):
        log_comb = (
            math.lgamma(n + 1) - math.lgamma(m + 1) - math.lgamma(n - m + 1)
        )
        terms.append(math.exp(log_comb + m * log_p + (n - m) * log_q))
    return math.fsum(terms)


def expected_local(params: ModelParams) -> float:
    """Expected revelations against a coalition, closed form.

    Valid only while per-category majority events are disjoint
    (coalition_size < unit_size / 2); the boundary coalition_size = 0
    reproduces :func:`expected_public`.
    """
    n = params.unit_size
    a = params.coalition_size
    if a >= n:
        raise ModelDomainError("coalition must be smaller than the unit")
    if 2 * a >= n and a > 0:
        raise ModelDomainError(
            "closed form needs coalition_size < unit_size/2; "
            "use enumerate_exact or simulate_revelation"
        )
    lo = n - a
    s = params.abstain_prob
    tail = _binom_tail(n, lo, s) + math.fsum(
        _binom_tail(n, lo, (1.0 - s) * w) for w in params.support
    )
    return (n - a) * tail


def _compositions(total: int, parts: int):
    """Yield all tuples of `parts` nonnegative ints summing to `total`."""
    if parts == 1:
        yield (total,)
        return
    for head in range(total + 1):
        for rest in _compositions(total - head, parts - 1):
            yield (head, *rest)


def enumerate_exact(params: ModelParams) -> float:
    """Exact expected revelations by summing over all outcome assignments.

    Works for every coalition size below the unit size, including the
    overlapping-event regime the closed form cannot handle.
    """
    n = params.unit_size
    a = params.coalition_size
    if a >= n:
        raise ModelDomainError("coalition must be smaller than the unit")
    k = params.n_candidates + 1
    if k**n > ENUMERATION_BUDGET:
        raise BudgetError(
            f"{k}^{n} outcome assignments exceed the enumeration budget"
        )
    probs = params.category_probs()
    lo = n - a
    terms = []
    for counts in _compositions(n, k):
        if max(counts) < lo:
            continue
        prob_factor = 1.0
        coeff = 1
        remaining = n
        skip = False
        for c, p in zip(counts, probs):
            if c:
                if p == 0.0:
                    skip = True
                    break
                coeff *= math.comb(remaining, c)
                remaining -= c
                prob_factor *= p**c
        if skip:
            continue
        terms.append(coeff * prob_factor * lo)
    return math.fsum(terms)


@dataclass(frozen=True)
class SimulationResult:
    estimate: float
    standard_error: float
    draws: int


def simulate_revelation(
    params: ModelParams, draws: int, seed: int = 0
) -> SimulationResult:
    """Monte Carlo estimate of expected revelations.

    Uses a counter-based generator so a fixed seed gives the same stream
    regardless of how draws are batched across workers.
    """
    if draws < 1:
        raise ModelDomainError("draws must be >= 1")
    n = params.unit_size
    a = params.coalition_size
    if a >= n:
        raise ModelDomainError("coalition must be smaller than the unit")
    rng = np.random.Generator(np.random.Philox(seed))
    counts = rng.multinomial(n, params.category_probs(), size=draws)
    hit = counts.max(axis=1) >= (n - a)
    p_hat = float(hit.mean())
    reveal = n - a
    estimate = reveal * p_hat
    se = reveal * math.sqrt(p_hat * (1.0 - p_hat) / draws)
    return SimulationResult(estimate=estimate, standard_error=se, draws=draws)


def _decay_rate(support: tuple[float, ...], abstain_prob: float) -> float:
    """max category probability; the geometric rate of the unanimity terms."""
    return max(abstain_prob, (1.0 - abstain_prob) * max(support))


def tipping_point(
    support: tuple[float, ...],
    abstain_prob: float,
    threshold: float,
    max_unit_size: int = 1_000_000,
) -> int:
    """Smallest unit size past which expected public revelations stay below
    the threshold.

    The expectation is bounded by (H+1) * N * x^N with x the largest category
    probability; once N is past the bound's own maximizer and the bound dips
    below the threshold, every larger N is below it too, so the scan can stop.
    """
    if threshold <= 0.0:
        raise ModelDomainError("threshold must be positive")
    probe = ModelParams(unit_size=1, support=support, abstain_prob=abstain_prob)
    x = _decay_rate(support, abstain_prob)
    if x >= 1.0:
        raise ModelDomainError(
            "a certain outcome keeps expected revelations growing; "
            "no tipping point exists"
        )
    n_cats = len(support) + 1
    bound_peak = -1.0 / math.log(x)
    last_at_or_above = 0
    n = 0
    while n < max_unit_size:
        n += 1
        if expected_public(probe.with_unit_size(n)) >= threshold:
            last_at_or_above = n
        if n >= bound_peak and n_cats * n * x**n < threshold:
            return last_at_or_above + 1
    raise ModelDomainError("threshold unreachable within the scan bound")


def peak_expected_public(
    support: tuple[float, ...],
    abstain_prob: float,
    max_unit_size: int = 1_000_000,
) -> tuple[int, float]:
    """Unit size maximizing expected public revelations, with the maximum.

    Scenario-dependent (the expectation can rise before it decays), so it is
    located by scanning rather than asserted from a formula.
    """
    probe = ModelParams(unit_size=1, support=support, abstain_prob=abstain_prob)
    x = _decay_rate(support, abstain_prob)
    best_n, best_v = 1, expected_public(probe)
    if x >= 1.0:
        raise ModelDomainError("expected revelations grow without bound")
    n_cats = len(support) + 1
    bound_peak = -1.0 / math.log(x)
    n = 1
    while n < max_unit_size:
        n += 1
        v = expected_public(probe.with_unit_size(n))
        if v > best_v:
            best_n, best_v = n, v
        if n >= bound_peak and n_cats * n * x**n < best_v:
            return best_n, best_v
    raise ModelDomainError("maximizer not bracketed within the scan bound")
