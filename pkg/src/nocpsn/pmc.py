"""Explicit-state transient analysis by forward distribution propagation.

The engines work against any object satisfying the model protocol
(:class:`nocpsn.levels.ProbabilisticModel`): states are hashable canonical
keys, ``step`` yields an exact successor distribution. Propagation is
cycle-synchronous; states whose observed counter has reached the property
threshold are absorbed and their mass accumulates into the result, which by
counter monotonicity equals the probability of reaching the threshold within
the bound.

When a model's clock is transient its canonical keys merge across cycles, the
reachable quotient can be finite, and the engine memoizes expansions, detects
closure of the reachable set, and can certify an exact zero with full state
coverage. With a tracked clock every cycle's states are fresh and the engine
simply sweeps forward.

Arithmetic is exact (fractions) in ``rational`` mode and float64 in ``float``
mode; models always emit exact branch probabilities, converted once per
expansion in float mode. Accumulation order is fixed by expansion order, so
results are deterministic in both modes.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable

RESISTIVE = "resistive"
INDUCTIVE = "inductive"
NOISE_KINDS = (RESISTIVE, INDUCTIVE)
_KIND_INDEX = {RESISTIVE: 0, INDUCTIVE: 1}

DEFAULT_STATE_BUDGET = 20_000_000

# Full path-tree enumeration is only sane for very short horizons.
MAX_BRUTE_FORCE_BOUND = 8


@dataclass(frozen=True)
class PropertySpec:
    """Does a noise counter reach ``threshold`` within ``bound`` cycles."""

    kind: str
    threshold: int
    bound: int

    def __post_init__(self) -> None:
        if self.kind not in NOISE_KINDS:
            raise ValueError(f"kind must be one of {NOISE_KINDS}, got {self.kind!r}")
        if self.threshold < 1:
            raise ValueError(f"threshold must be >= 1, got {self.threshold}")
        if self.bound < 0:
            raise ValueError(f"cycle bound must be >= 0, got {self.bound}")

    @property
    def counter_index(self) -> int:
        return _KIND_INDEX[self.kind]


@dataclass
class StateSpaceStats:
    """Per-cycle reachable-state counts and exploration timing."""

    per_cycle: list[int] = field(default_factory=list)
    cumulative: list[int] = field(default_factory=list)
    cycle_seconds: list[float] = field(default_factory=list)
    total_states: int = 0
    truncated: bool = False
    closed: bool = False
    closed_at: int | None = None

    def cycles(self) -> list[int]:
        return list(range(len(self.per_cycle)))


@dataclass
class CheckResult:
    """Outcome of one transient probability query."""

    probability: Fraction | float
    states_explored: int
    cycles: int
    exact: bool
    coverage_full: bool = False
    reachable_states: int | None = None
    per_cycle: list | None = None

    def probability_float(self) -> float:
        return float(self.probability)


class BudgetExhausted(RuntimeError):
    """State budget exceeded; carries whatever was computed so far."""

    def __init__(
        self,
        message: str,
        stats: StateSpaceStats | None = None,
        partial_probability: Fraction | float | None = None,
        cycles_completed: int = 0,
    ) -> None:
        super().__init__(message)
        self.stats = stats
        self.partial_probability = partial_probability
        self.cycles_completed = cycles_completed


def _make_expander(model, mode: str) -> tuple[Callable, dict]:
    """Expansion closure plus its memo table (empty when memoizing is off).

    Memoization only pays off when canonical keys recur across cycles, i.e.
    when the model's clock is transient.
    """
    if mode not in ("rational", "float"):
        raise ValueError(f"mode must be 'rational' or 'float', got {mode!r}")
    cache: dict = {}
    use_cache = not getattr(model, "track_clk", False)
    as_float = mode == "float"

    def expand(state):
        if use_cache:
            hit = cache.get(state)
            if hit is not None:
                return hit
        branches = model.step(state)
        if as_float:
            branches = [(float(p), succ) for p, succ in branches]
        if use_cache:
            cache[state] = branches
        return branches

    return expand, cache


def _validate_property(model, prop: PropertySpec) -> None:
    tracks = getattr(model, "tracks", None)
    if tracks is not None and not tracks(prop.kind):
        raise ValueError(
            f"model does not track the {prop.kind} counter; "
            f"rebuild it with track='{prop.kind}' or track='both'"
        )
    options = getattr(model, "options", None)
    if options is not None:
        cap = (
            options.resistive_cap if prop.kind == RESISTIVE else options.inductive_cap
        )
        if cap is not None and prop.threshold > cap:
            raise ValueError(
                f"threshold {prop.threshold} exceeds the configured "
                f"{prop.kind} cap {cap}; raise or disable the cap"
            )


def _check(
    model,
    prop: PropertySpec,
    *,
    mode: str,
    state_budget: int,
) -> CheckResult:
    _validate_property(model, prop)
    expand, cache = _make_expander(model, mode)
    zero = Fraction(0) if mode == "rational" else 0.0
    idx = prop.counter_index
    threshold = prop.threshold

    initial = model.canonicalize(model.initial())
    absorbed = zero
    frontier: dict = {}
    if model.observe(initial)[idx] >= threshold:
        absorbed = Fraction(1) if mode == "rational" else 1.0
    else:
        frontier[initial] = Fraction(1) if mode == "rational" else 1.0

    transient_clk = not getattr(model, "track_clk", False)
    seen: set = {initial}
    explored = 1
    per_cycle: list = []
    coverage_full = False

    for cycle in range(1, prop.bound + 1):
        if not frontier:
            break
        next_frontier: dict = {}
        for state, mass in frontier.items():
            for p, succ in expand(state):
                m = mass * p
                if model.observe(succ)[idx] >= threshold:
                    absorbed += m
                else:
                    prev = next_frontier.get(succ)
                    next_frontier[succ] = m if prev is None else prev + m
        frontier = next_frontier

        if transient_clk:
            before = len(seen)
            seen.update(frontier)
            new_states = len(seen) - before
            explored = len(seen)
            if new_states == 0 and not coverage_full:
                coverage_full = True
                if absorbed == 0:
                    # Reachable set closed and threshold-free: exactly zero
                    # for every bound, certified by full coverage.
                    per_cycle.extend([zero] * (prop.bound - len(per_cycle)))
                    return CheckResult(
                        probability=zero,
                        states_explored=explored,
                        cycles=prop.bound,
                        exact=mode == "rational",
                        coverage_full=True,
                        reachable_states=len(seen),
                        per_cycle=per_cycle,
                    )
        else:
            explored += len(frontier)

        per_cycle.append(absorbed)
        if explored > state_budget:
            raise BudgetExhausted(
                f"state budget {state_budget} exceeded at cycle {cycle} "
                f"({explored} states)",
                partial_probability=absorbed,
                cycles_completed=cycle,
            )

    if len(per_cycle) < prop.bound:
        per_cycle.extend([absorbed] * (prop.bound - len(per_cycle)))

    return CheckResult(
        probability=absorbed,
        states_explored=explored,
        cycles=prop.bound,
        exact=mode == "rational",
        coverage_full=coverage_full,
        reachable_states=len(seen) if transient_clk else None,
        per_cycle=per_cycle,
    )


def check_transient(
    model,
    prop: PropertySpec,
    *,
    mode: str = "rational",
    state_budget: int = DEFAULT_STATE_BUDGET,
) -> CheckResult:
    """P(counter >= threshold within ``bound`` cycles), by forward sweep."""
    return _check(model, prop, mode=mode, state_budget=state_budget)


def check_reward_bounded(
    model,
    prop: PropertySpec,
    *,
    mode: str = "rational",
    state_budget: int = DEFAULT_STATE_BUDGET,
) -> CheckResult:
    """Same query over the clock-free quotient, cycles as accumulated reward.

    Requires a model built with a transient clock, so the reachable quotient
    can be finite and the result can carry a full-coverage certificate.
    """
    if getattr(model, "track_clk", False):
        raise ValueError(
            "reward-bounded checking needs a transient clock; "
            "rebuild the model with track_clk=False"
        )
    return _check(model, prop, mode=mode, state_budget=state_budget)


def explore(
    model,
    max_cycles: int,
    *,
    state_budget: int = DEFAULT_STATE_BUDGET,
) -> StateSpaceStats:
    """Cycle-synchronous breadth-first expansion; counts states, no masses.

    On budget exhaustion the partial stats are returned with ``truncated``
    set instead of raising.
    """
    expand, _ = _make_expander(model, "rational")
    transient_clk = not getattr(model, "track_clk", False)

    initial = model.canonicalize(model.initial())
    frontier = {initial}
    seen = {initial}
    stats = StateSpaceStats(per_cycle=[1], cumulative=[1], cycle_seconds=[0.0])
    total = 1

    for cycle in range(1, max_cycles + 1):
        t0 = time.perf_counter()
        next_frontier = set()
        for state in frontier:
            for _, succ in expand(state):
                next_frontier.add(succ)
        frontier = next_frontier

        if transient_clk:
            before = len(seen)
            seen.update(frontier)
            new_states = len(seen) - before
            total = len(seen)
            if new_states == 0 and not stats.closed:
                stats.closed = True
                stats.closed_at = cycle
        else:
            total += len(frontier)

        stats.per_cycle.append(len(frontier))
        stats.cumulative.append(total)
        stats.cycle_seconds.append(time.perf_counter() - t0)
        stats.total_states = total

        if stats.closed:
            break
        if total > state_budget:
            stats.truncated = True
            break

    stats.total_states = total
    return stats


def brute_force_check(
    model,
    prop: PropertySpec,
    *,
    max_bound: int = MAX_BRUTE_FORCE_BOUND,
) -> Fraction:
    """Independent oracle: enumerate every probabilistic path, no merging.

    Each length-``bound`` path is a distinct leaf; a path counts as a hit if
    the observed counter reached the threshold at any of its cycles. Exact
    rational arithmetic throughout. Refuses bounds past ``max_bound``.
    """
    if prop.bound > max_bound:
        raise ValueError(
            f"bound {prop.bound} too large for full path enumeration "
            f"(limit {max_bound})"
        )
    _validate_property(model, prop)
    hit_mass, total_mass, _ = _enumerate_paths(model, prop)
    assert total_mass == 1
    return hit_mass


def _enumerate_paths(model, prop: PropertySpec) -> tuple[Fraction, Fraction, int]:
    """(hit mass, total mass, leaf count) of the full depth-``bound`` tree."""
    idx = prop.counter_index
    threshold = prop.threshold
    hit_mass = Fraction(0)
    total_mass = Fraction(0)
    leaves = 0

    def rec(state, depth: int, prob: Fraction, hit: bool) -> None:
        nonlocal hit_mass, total_mass, leaves
        if not hit and model.observe(state)[idx] >= threshold:
            hit = True
        if depth == prop.bound:
            leaves += 1
            total_mass += prob
            if hit:
                hit_mass += prob
            return
        for p, succ in model.step(state):
            rec(succ, depth + 1, prob * p, hit)

    rec(model.canonicalize(model.initial()), 0, Fraction(1), False)
    return hit_mass, total_mass, leaves


def observable_distributions(
    model,
    max_cycles: int,
    *,
    mode: str = "rational",
    state_budget: int = DEFAULT_STATE_BUDGET,
) -> list[dict]:
    """Joint (resistive, inductive) counter distribution per cycle 0..N.

    No absorption: the full state distribution is propagated and aggregated
    onto the observable pair each cycle.
    """
    expand, _ = _make_expander(model, mode)
    one = Fraction(1) if mode == "rational" else 1.0
    transient_clk = not getattr(model, "track_clk", False)

    initial = model.canonicalize(model.initial())
    frontier = {initial: one}
    seen = {initial}
    explored = 1

    def aggregate(front: dict) -> dict:
        agg: dict = {}
        for state, mass in front.items():
            obs = model.observe(state)
            key = (obs[0], obs[1])
            prev = agg.get(key)
            agg[key] = mass if prev is None else prev + mass
        return agg

    out = [aggregate(frontier)]
    for _cycle in range(1, max_cycles + 1):
        next_frontier: dict = {}
        for state, mass in frontier.items():
            for p, succ in expand(state):
                m = mass * p
                prev = next_frontier.get(succ)
                next_frontier[succ] = m if prev is None else prev + m
        frontier = next_frontier
        if transient_clk:
            seen.update(frontier)
            explored = len(seen)
        else:
            explored += len(frontier)
        if explored > state_budget:
            raise BudgetExhausted(
                f"state budget {state_budget} exceeded at cycle {_cycle} "
                f"({explored} states)",
                cycles_completed=_cycle,
            )
        out.append(aggregate(frontier))
    return out
