"""Monte-Carlo statistical checking of the same transient properties.

Each run samples one path of the model. Streams are counter-based and keyed
by (seed, run index), so runs are independent, order-insensitive, and exactly
reproducible; parallel execution would aggregate identically. Intervals are
exact Clopper-Pearson. Rare-event results (fewer than 30 successes) are
flagged as low-confidence rather than trusted.
"""

from __future__ import annotations

import sys
import time
from bisect import bisect_right
from dataclasses import dataclass

import numpy as np
from scipy.stats import beta

from .pmc import _KIND_INDEX, PropertySpec

LOW_CONFIDENCE_SUCCESSES = 30


@dataclass(frozen=True)
class SimConfig:
    """One statistical experiment: independent seeded runs of bounded length."""

    runs: int
    max_cycles: int
    seed: int
    prop: PropertySpec

    def __post_init__(self) -> None:
        if self.runs < 1:
            raise ValueError(f"runs must be >= 1, got {self.runs}")
        if self.max_cycles < 0:
            raise ValueError(f"max_cycles must be >= 0, got {self.max_cycles}")


@dataclass
class Estimate:
    """Bernoulli estimate with an exact 95% confidence interval."""

    p_hat: float
    successes: int
    runs: int
    ci_low: float
    ci_high: float
    seed: int
    low_confidence: bool

    def contains(self, probability: float) -> bool:
        return self.ci_low <= probability <= self.ci_high


def run_stream(seed: int, run_index: int) -> np.random.Generator:
    """Counter-based stream for one run, keyed by (seed, run index)."""
    key = np.array([seed % (1 << 64), run_index % (1 << 64)], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def clopper_pearson(
    successes: int, runs: int, confidence: float = 0.95
) -> tuple[float, float]:
    """Exact binomial confidence interval."""
    if not 0 <= successes <= runs:
        raise ValueError(f"need 0 <= successes <= runs, got {successes}/{runs}")
    alpha = 1.0 - confidence
    lo = 0.0 if successes == 0 else float(beta.ppf(alpha / 2, successes, runs - successes + 1))
    hi = 1.0 if successes == runs else float(beta.ppf(1 - alpha / 2, successes + 1, runs - successes))
    return lo, hi


class BranchSampler:
    """Sample successors from memoized step distributions.

    Enumerates each visited state's exact successor distribution once and
    thereafter draws a branch with a single uniform, which is much faster
    than re-resolving every probabilistic choice per cycle. Only worthwhile
    when canonical keys recur, i.e. for transient-clock models.
    """

    def __init__(self, model) -> None:
        self.model = model
        self._cache: dict = {}

    def sample(self, state, rng: np.random.Generator):
        entry = self._cache.get(state)
        if entry is None:
            branches = self.model.step(state)
            succs = [succ for _, succ in branches]
            cum = []
            acc = 0.0
            for p, _ in branches:
                acc += float(p)
                cum.append(acc)
            cum[-1] = 1.0 + 1e-12  # guard the top bin against rounding
            entry = (cum, succs)
            self._cache[state] = entry
        cum, succs = entry
        return succs[bisect_right(cum, rng.random())]


class _InternedChain:
    """The model's reachable quotient as integer-indexed branch tables.

    States are interned on first visit; afterwards a path step is a bisect
    over a float list plus two list lookups, with the threshold test
    precomputed per state. Sampling law matches ``model.step`` exactly up to
    float rounding of the branch probabilities.
    """

    def __init__(self, model, counter_index: int, threshold: int) -> None:
        self.model = model
        self.counter_index = counter_index
        self.threshold = threshold
        self.index: dict = {}
        self.states: list = []
        self.cums: list[list[float] | None] = []
        self.succs: list[list[int] | None] = []
        self.hit: list[bool] = []
        self.initial_index = self.intern(model.initial())

    def intern(self, state) -> int:
        idx = self.index.get(state)
        if idx is None:
            idx = len(self.states)
            self.index[state] = idx
            self.states.append(state)
            self.cums.append(None)
            self.succs.append(None)
            obs = self.model.observe(state)
            self.hit.append(obs[self.counter_index] >= self.threshold)
        return idx

    def expand(self, idx: int) -> None:
        branches = self.model.step(self.states[idx])
        cum: list[float] = []
        succ_idx: list[int] = []
        acc = 0.0
        for p, succ in branches:
            acc += float(p)
            cum.append(acc)
            succ_idx.append(self.intern(succ))
        cum[-1] = 1.0 + 1e-12
        self.cums[idx] = cum
        self.succs[idx] = succ_idx


def simulate_run(
    model,
    max_cycles: int,
    rng: np.random.Generator,
    thresholds: dict[str, int],
    on_choice=None,
    sampler: BranchSampler | None = None,
) -> dict[str, int | None]:
    """Sample one path; first cycle each counter reaches its threshold.

    Stops early once every configured threshold has been hit. With a
    ``sampler`` the path is drawn branch-wise from memoized distributions;
    otherwise every probabilistic choice is drawn individually (and reported
    through ``on_choice``). Both follow the model's step law exactly.
    """
    pending = {kind: _KIND_INDEX[kind] for kind in thresholds}
    hits: dict[str, int | None] = {kind: None for kind in thresholds}
    state = model.initial()
    observe = model.observe
    for cycle in range(1, max_cycles + 1):
        if sampler is not None:
            state = sampler.sample(state, rng)
        else:
            state = model.sample_step(state, rng, on_choice)
        if not pending:
            continue
        obs = observe(state)
        for kind in list(pending):
            if obs[pending[kind]] >= thresholds[kind]:
                hits[kind] = cycle
                del pending[kind]
        if not pending:
            break
    return hits


def estimate(
    model,
    config: SimConfig,
    *,
    progress_every: int | None = None,
    progress_stream=None,
) -> Estimate:
    """Estimate P(counter >= threshold within max_cycles) over seeded runs."""
    prop = config.prop
    tracks = getattr(model, "tracks", None)
    if tracks is not None and not tracks(prop.kind):
        raise ValueError(f"model does not track the {prop.kind} counter")

    stream = progress_stream if progress_stream is not None else sys.stderr
    successes = 0
    started = time.perf_counter()

    if not getattr(model, "track_clk", False):
        # Fast path over the interned finite quotient.
        chain = _InternedChain(model, prop.counter_index, prop.threshold)
        cums, succs, hit = chain.cums, chain.succs, chain.hit
        start = chain.initial_index
        for run_index in range(config.runs):
            rng = run_stream(config.seed, run_index)
            idx = start
            if hit[idx]:
                successes += 1
            else:
                for u in rng.random(config.max_cycles):
                    row = cums[idx]
                    if row is None:
                        chain.expand(idx)
                        row = cums[idx]
                    idx = succs[idx][bisect_right(row, u)]
                    if hit[idx]:
                        successes += 1
                        break
            if progress_every and (run_index + 1) % progress_every == 0:
                elapsed = time.perf_counter() - started
                print(
                    f"  {run_index + 1}/{config.runs} runs, "
                    f"{successes} hits, {elapsed:.1f}s",
                    file=stream,
                )
    else:
        thresholds = {prop.kind: prop.threshold}
        for run_index in range(config.runs):
            rng = run_stream(config.seed, run_index)
            hits = simulate_run(model, config.max_cycles, rng, thresholds)
            if hits[prop.kind] is not None:
                successes += 1
            if progress_every and (run_index + 1) % progress_every == 0:
                elapsed = time.perf_counter() - started
                print(
                    f"  {run_index + 1}/{config.runs} runs, "
                    f"{successes} hits, {elapsed:.1f}s",
                    file=stream,
                )

    lo, hi = clopper_pearson(successes, config.runs)
    return Estimate(
        p_hat=successes / config.runs,
        successes=successes,
        runs=config.runs,
        ci_low=lo,
        ci_high=hi,
        seed=config.seed,
        low_confidence=successes < LOW_CONFIDENCE_SUCCESSES,
    )
