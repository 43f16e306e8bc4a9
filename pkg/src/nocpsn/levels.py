"""The four model levels behind one probabilistic-transition-system interface.

Levels are cumulative rewrites of the same mesh semantics:

* ``concrete``: buffers hold destination ids (see :mod:`nocpsn.mesh`).
* ``predicate``: buffers hold per-flit direction predicates (needs an x hop /
  needs a y hop); routing reads the predicates instead of comparing ids.
* ``prob-choice``: buffers hold anonymous tokens; a front token's direction is
  drawn lazily the first time the arbiter needs it (local front: to-x with
  probability 2/3, to-y with 1/3; x-channel front: deliver-here or to-y with
  probability 1/2 each; y-channel fronts always deliver). A denied front keeps
  its drawn direction as a lock instead of re-rolling.
* ``boolean-queue``: buffers collapse to occupancy counts and front locks, and
  the per-router priority permutation collapses to two booleans (local and
  y-channel priority relative to the x-channel, the only channel either can
  conflict with), giving four service orders instead of six.

Every level exposes ``initial`` / ``step`` / ``sample_step`` / ``observe`` /
``canonicalize`` through :class:`NocModel`, the interface both engines consume.
"""

from __future__ import annotations

from enum import Enum
from fractions import Fraction
from itertools import product
from typing import Callable, Protocol

from .mesh import (
    BUFFER_CAPACITY,
    EJECT,
    LOCAL,
    LOW,
    NUM_ROUTERS,
    TO_X,
    TO_Y,
    XCHAN,
    YCHAN,
    FlitCodec,
    StepOptions,
    activity_level,
    initial_flit_state,
    noise_increments,
    observe,
    resolve_grants,
    sample_flit_step,
    saturating_add,
    stable_partition,
    step_flit_level,
)
from .mesh import CONCRETE_CODEC, DEFAULT_OPTIONS, INITIAL_CHANNEL_ORDER
from .patterns import BURST, InjectionPattern


def _predicate_from_dest(router: int, dest: int) -> int:
    hops = router ^ dest
    return ((hops & 1) << 1) | ((hops >> 1) & 1)


def _predicate_route(router: int, flit: int) -> int:
    if flit & 2:
        return TO_X
    if flit & 1:
        return TO_Y
    return EJECT


def _predicate_after_transfer(flit: int, port: int) -> int:
    return (flit & 1) if port == TO_X else 0


# Predicate level: a flit is the pair of direction predicates it still needs,
# encoded as (needs_x << 1) | needs_y.
PREDICATE_CODEC = FlitCodec(
    from_dest=_predicate_from_dest,
    route=_predicate_route,
    after_transfer=_predicate_after_transfer,
)


def predicate_step(
    state: tuple, pattern: InjectionPattern, options: StepOptions = DEFAULT_OPTIONS
) -> list[tuple[Fraction, tuple]]:
    """One-cycle successor distribution of the predicate-flit model."""
    return step_flit_level(state, pattern, PREDICATE_CODEC, options)


# ---------------------------------------------------------------------------
# Lazy-choice levels: buffers are (occupancy, front lock) pairs.
# ---------------------------------------------------------------------------

# Lock values: 0 = front unresolved (or buffer empty); otherwise port + 1.
LOCK_NONE = 0

TWO_THIRDS = Fraction(2, 3)
THIRD = Fraction(1, 3)
HALF = Fraction(1, 2)

# Direction distributions drawn when an unresolved front is first routed.
LOCAL_CHOICES: tuple[tuple[int, Fraction], ...] = ((TO_X, TWO_THIRDS), (TO_Y, THIRD))
XCHAN_CHOICES: tuple[tuple[int, Fraction], ...] = ((EJECT, HALF), (TO_Y, HALF))


def _front_choices(cls: int) -> tuple[tuple[int, Fraction], ...] | None:
    if cls == LOCAL:
        return LOCAL_CHOICES
    if cls == XCHAN:
        return XCHAN_CHOICES
    return None  # y-channel fronts always deliver here; no branch, no lock


def initial_lazy_state() -> tuple:
    channels = tuple((cls, 0, LOCK_NONE) for cls in INITIAL_CHANNEL_ORDER)
    routers = tuple((channels, LOW) for _ in range(NUM_ROUTERS))
    return (routers, 0, 0, 0, 0, 0)


def _inject_tokens(
    lens: list[list[int]], local_index: list[int], phase: int, pattern: InjectionPattern
) -> int:
    """Append one anonymous token per local buffer on injection cycles."""
    if not pattern.injects(phase):
        return 0
    dropped = 0
    for r in range(NUM_ROUTERS):
        li = local_index[r]
        if lens[r][li] < BUFFER_CAPACITY:
            lens[r][li] += 1
        else:
            dropped += 1
    return dropped


def _advance_lazy(
    state: tuple,
    classes: list[list[int]],
    lens: list[list[int]],
    locks: list[list[int]],
    directions: list[list[int | None]],
    requested: list[list[int]],
    dropped_delta: int,
    pattern: InjectionPattern,
    options: StepOptions,
    rebuild_router: Callable[[int, list[int], list[int], set[int], set[int], int], tuple],
) -> tuple:
    """Shared deterministic tail of a lazy-choice cycle.

    ``directions[r][ci]`` holds the resolved port of every non-empty channel,
    ``requested[r]`` lists channel indexes in service order. ``rebuild_router``
    turns the updated per-router pieces back into that level's router tuple.
    """
    _, resistive, inductive, phase, clk, dropped = state

    occupancy = [[0, 0, 0] for _ in range(NUM_ROUTERS)]
    for r in range(NUM_ROUTERS):
        for ci in range(3):
            occupancy[r][classes[r][ci]] = lens[r][ci]

    requests = [
        [(ci, directions[r][ci]) for ci in requested[r]] for r in range(NUM_ROUTERS)
    ]
    granted = resolve_grants(requests, occupancy)

    class_index = [
        {cls: ci for ci, cls in enumerate(classes[r])} for r in range(NUM_ROUTERS)
    ]
    for r in range(NUM_ROUTERS):
        for ci, port in granted[r]:
            lens[r][ci] -= 1
            locks[r][ci] = LOCK_NONE
            if port == TO_X:
                target = r ^ 1
                lens[target][class_index[target][XCHAN]] += 1
            elif port == TO_Y:
                target = r ^ 2
                lens[target][class_index[target][YCHAN]] += 1

    activities = tuple(activity_level(len(granted[r])) for r in range(NUM_ROUTERS))
    prev_activities = tuple(router[1] for router in state[0])
    d_res, d_ind = noise_increments(activities, prev_activities)
    if options.track_resistive:
        resistive = saturating_add(resistive, d_res, options.resistive_cap)
    if options.track_inductive:
        inductive = saturating_add(inductive, d_ind, options.inductive_cap)

    new_routers = []
    for r in range(NUM_ROUTERS):
        serviced = {ci for ci, _ in granted[r]}
        requested_set = set(requested[r])
        for ci in requested_set - serviced:
            # Denied front keeps its direction for next cycle; y-channel
            # fronts re-derive it deterministically, so no lock is stored.
            if classes[r][ci] != YCHAN:
                locks[r][ci] = directions[r][ci] + 1
        act = activities[r] if options.track_inductive else LOW
        new_routers.append(
            rebuild_router(r, lens[r], locks[r], requested_set, serviced, act)
        )

    return (
        tuple(new_routers),
        resistive,
        inductive,
        (phase + 1) % pattern.period,
        clk + 1 if options.track_clk else 0,
        dropped + dropped_delta,
    )


def _lazy_cycle_setup(routers: tuple):
    classes = [[cls for cls, _, _ in chans] for chans, _ in routers]
    lens = [[length for _, length, _ in chans] for chans, _ in routers]
    locks = [[lock for _, _, lock in chans] for chans, _ in routers]
    local_index = [cls_row.index(LOCAL) for cls_row in classes]
    return classes, lens, locks, local_index


def _resolution_slots(
    classes: list[list[int]], lens: list[list[int]], locks: list[list[int]]
):
    """Fronts whose direction must be drawn this cycle, in scan order."""
    slots = []
    for r in range(NUM_ROUTERS):
        for ci in range(3):
            if lens[r][ci] == 0 or locks[r][ci] != LOCK_NONE:
                continue
            choices = _front_choices(classes[r][ci])
            if choices is not None:
                slots.append((r, ci, choices))
    return slots


def _fill_directions(
    classes: list[list[int]], lens: list[list[int]], locks: list[list[int]]
) -> tuple[list[list[int | None]], list[list[int]]]:
    """Directions already determined by locks or by the y-channel rule."""
    directions: list[list[int | None]] = [[None] * 3 for _ in range(NUM_ROUTERS)]
    requested: list[list[int]] = [[] for _ in range(NUM_ROUTERS)]
    for r in range(NUM_ROUTERS):
        for ci in range(3):
            if lens[r][ci] == 0:
                continue
            requested[r].append(ci)
            if locks[r][ci] != LOCK_NONE:
                directions[r][ci] = locks[r][ci] - 1
            elif classes[r][ci] == YCHAN:
                directions[r][ci] = EJECT
    return directions, requested


def prob_choice_step(
    state: tuple, pattern: InjectionPattern, options: StepOptions = DEFAULT_OPTIONS
) -> list[tuple[Fraction, tuple]]:
    """One-cycle successor distribution of the lazy-choice token model."""
    routers, _, _, phase, _, _ = state
    classes, lens, locks, local_index = _lazy_cycle_setup(routers)
    dropped_delta = _inject_tokens(lens, local_index, phase, pattern)

    directions, requested = _fill_directions(classes, lens, locks)
    slots = _resolution_slots(classes, lens, locks)

    def rebuild(r, row_lens, row_locks, requested_set, serviced, act):
        chans = tuple(
            (classes[r][ci], row_lens[ci], row_locks[ci]) for ci in range(3)
        )
        unserviced = [ci in requested_set and ci not in serviced for ci in range(3)]
        return (stable_partition(chans, unserviced), act)

    out = []
    for combo in product(*(choices for _, _, choices in slots)):
        prob = Fraction(1)
        for (r, ci, _), (port, p) in zip(slots, combo):
            directions[r][ci] = port
            prob *= p
        succ = _advance_lazy(
            state,
            [row[:] for row in classes],
            [row[:] for row in lens],
            [row[:] for row in locks],
            [row[:] for row in directions],
            requested,
            dropped_delta,
            pattern,
            options,
            rebuild,
        )
        out.append((prob, succ))
    return out


# ---------------------------------------------------------------------------
# Boolean-queue level
# ---------------------------------------------------------------------------

# Router tuple: (local_len, local_lock, x_len, x_lock, y_len, local_pri, y_pri,
# prev_activity). Locks as above; priority booleans are relative to the
# x-channel, the only channel local or y can conflict with.

# Service order by (local_pri, y_pri); six concrete orders collapse onto four.
_SERVICE_ORDER = {
    (True, True): (LOCAL, YCHAN, XCHAN),
    (True, False): (LOCAL, XCHAN, YCHAN),
    (False, True): (YCHAN, XCHAN, LOCAL),
    (False, False): (XCHAN, LOCAL, YCHAN),
}


def initial_bool_queue_state() -> tuple:
    routers = tuple((0, LOCK_NONE, 0, LOCK_NONE, 0, True, False, LOW) for _ in range(NUM_ROUTERS))
    return (routers, 0, 0, 0, 0, 0)


def _pair_priority(pri: bool, self_served: bool, x_served: bool) -> bool:
    """Project the round-robin stable partition onto one relative order.

    The relative order of two channels flips only when exactly one of them was
    serviced (unserviced channels move in front of serviced ones); otherwise
    it is preserved.
    """
    if not self_served and x_served:
        return True
    if self_served and not x_served:
        return False
    return pri


def bool_queue_step(
    state: tuple, pattern: InjectionPattern, options: StepOptions = DEFAULT_OPTIONS
) -> list[tuple[Fraction, tuple]]:
    """One-cycle successor distribution of the occupancy-count model."""
    routers, resistive, inductive, phase, clk, dropped = state

    lens = [[r_[0], r_[2], r_[4]] for r_ in routers]  # indexed by channel class
    locks = [[r_[1], r_[3], LOCK_NONE] for r_ in routers]
    pris = [(r_[5], r_[6]) for r_ in routers]

    dropped_delta = 0
    if pattern.injects(phase):
        for r in range(NUM_ROUTERS):
            if lens[r][LOCAL] < BUFFER_CAPACITY:
                lens[r][LOCAL] += 1
            else:
                dropped_delta += 1

    # Unresolved fronts to draw, and directions fixed by locks / y-rule.
    slots = []
    directions: list[list[int | None]] = [[None] * 3 for _ in range(NUM_ROUTERS)]
    for r in range(NUM_ROUTERS):
        for cls in (LOCAL, XCHAN, YCHAN):
            if lens[r][cls] == 0:
                continue
            if locks[r][cls] != LOCK_NONE:
                directions[r][cls] = locks[r][cls] - 1
            elif cls == YCHAN:
                directions[r][cls] = EJECT
            else:
                slots.append((r, cls, _front_choices(cls)))

    out = []
    for combo in product(*(choices for _, _, choices in slots)):
        prob = Fraction(1)
        for (r, cls, _), (port, p) in zip(slots, combo):
            directions[r][cls] = port
            prob *= p

        requests = []
        for r in range(NUM_ROUTERS):
            order = _SERVICE_ORDER[pris[r]]
            requests.append(
                [(cls, directions[r][cls]) for cls in order if lens[r][cls] > 0]
            )
        occupancy = [lens[r][:] for r in range(NUM_ROUTERS)]
        granted = resolve_grants(requests, occupancy)

        new_lens = [row[:] for row in lens]
        new_locks = [row[:] for row in locks]
        for r in range(NUM_ROUTERS):
            for cls, port in granted[r]:
                new_lens[r][cls] -= 1
                new_locks[r][cls] = LOCK_NONE
                if port == TO_X:
                    new_lens[r ^ 1][XCHAN] += 1
                elif port == TO_Y:
                    new_lens[r ^ 2][YCHAN] += 1

        activities = tuple(activity_level(len(granted[r])) for r in range(NUM_ROUTERS))
        prev_activities = tuple(r_[7] for r_ in routers)
        d_res, d_ind = noise_increments(activities, prev_activities)
        rn = resistive
        ind = inductive
        if options.track_resistive:
            rn = saturating_add(rn, d_res, options.resistive_cap)
        if options.track_inductive:
            ind = saturating_add(ind, d_ind, options.inductive_cap)

        new_routers = []
        for r in range(NUM_ROUTERS):
            serviced = {cls for cls, _ in granted[r]}
            for cls in (LOCAL, XCHAN):
                if lens[r][cls] > 0 and cls not in serviced:
                    new_locks[r][cls] = directions[r][cls] + 1
            # Empty channels count as serviced for the round-robin update.
            l_served = lens[r][LOCAL] == 0 or LOCAL in serviced
            x_served = lens[r][XCHAN] == 0 or XCHAN in serviced
            y_served = lens[r][YCHAN] == 0 or YCHAN in serviced
            lpri, ypri = pris[r]
            new_routers.append(
                (
                    new_lens[r][LOCAL],
                    new_locks[r][LOCAL],
                    new_lens[r][XCHAN],
                    new_locks[r][XCHAN],
                    new_lens[r][YCHAN],
                    _pair_priority(lpri, l_served, x_served),
                    _pair_priority(ypri, y_served, x_served),
                    activities[r] if options.track_inductive else LOW,
                )
            )

        out.append(
            (
                prob,
                (
                    tuple(new_routers),
                    rn,
                    ind,
                    (phase + 1) % pattern.period,
                    clk + 1 if options.track_clk else 0,
                    dropped + dropped_delta,
                ),
            )
        )
    return out


def priority_booleans(channels: tuple) -> tuple[bool, bool]:
    """Project an ordered channel tuple onto (local_pri, y_pri) vs the x-channel."""
    ranks = {chan[0]: ci for ci, chan in enumerate(channels)}
    return (ranks[LOCAL] < ranks[XCHAN], ranks[YCHAN] < ranks[XCHAN])


# ---------------------------------------------------------------------------
# Uniform model interface
# ---------------------------------------------------------------------------


class ModelLevel(str, Enum):
    CONCRETE = "concrete"
    PREDICATE = "predicate"
    PROB_CHOICE = "prob-choice"
    BOOLEAN_QUEUE = "boolean-queue"


ABSTRACT_LEVELS = (ModelLevel.PREDICATE, ModelLevel.PROB_CHOICE, ModelLevel.BOOLEAN_QUEUE)


class ProbabilisticModel(Protocol):
    """What the checking engines require of a model."""

    def initial(self) -> tuple: ...

    def step(self, state: tuple) -> list[tuple[Fraction, tuple]]: ...

    def observe(self, state: tuple) -> tuple[int, int, int]: ...

    def canonicalize(self, state: tuple) -> tuple: ...


TRACK_MODES = ("both", "resistive", "inductive")


class NocModel:
    """One mesh model level bound to a pattern and counter configuration.

    States are canonical value tuples, so ``canonicalize`` is the identity;
    when the clock is transient the step pins the clk field to zero and keys
    merge across cycles.
    """

    def __init__(
        self, level: ModelLevel, pattern: InjectionPattern, options: StepOptions
    ) -> None:
        self.level = level
        self.pattern = pattern
        self.options = options
        if level == ModelLevel.CONCRETE:
            self._initial = initial_flit_state
            self._codec = CONCRETE_CODEC
        elif level == ModelLevel.PREDICATE:
            self._initial = initial_flit_state
            self._codec = PREDICATE_CODEC
        elif level == ModelLevel.PROB_CHOICE:
            self._initial = initial_lazy_state
            self._codec = None
        elif level == ModelLevel.BOOLEAN_QUEUE:
            self._initial = initial_bool_queue_state
            self._codec = None
        else:
            raise ValueError(f"unknown level {level!r}")

    def initial(self) -> tuple:
        return self._initial()

    def step(self, state: tuple) -> list[tuple[Fraction, tuple]]:
        if self._codec is not None:
            return step_flit_level(state, self.pattern, self._codec, self.options)
        if self.level == ModelLevel.PROB_CHOICE:
            return prob_choice_step(state, self.pattern, self.options)
        return bool_queue_step(state, self.pattern, self.options)

    def sample_step(self, state: tuple, rng, on_choice=None) -> tuple:
        if self._codec is not None:
            return sample_flit_step(
                state, self.pattern, self._codec, self.options, rng, on_choice
            )
        return _sample_lazy_step(self, state, rng, on_choice)

    def observe(self, state: tuple) -> tuple[int, int, int]:
        return observe(state)

    def canonicalize(self, state: tuple) -> tuple:
        return state

    @property
    def track_clk(self) -> bool:
        return self.options.track_clk

    def tracks(self, kind: str) -> bool:
        if kind == "resistive":
            return self.options.track_resistive
        if kind == "inductive":
            return self.options.track_inductive
        raise ValueError(f"unknown noise kind {kind!r}")

    def describe(self) -> dict:
        return {
            "level": self.level.value,
            "pattern": self.pattern.label(),
            "resistive_cap": self.options.resistive_cap,
            "inductive_cap": self.options.inductive_cap,
            "track": (
                "both"
                if self.options.track_resistive and self.options.track_inductive
                else "resistive" if self.options.track_resistive else "inductive"
            ),
            "track_clk": self.options.track_clk,
        }


def _sample_lazy_step(model: NocModel, state: tuple, rng, on_choice) -> tuple:
    """Draw each unresolved front's direction, then take the matching branch.

    Sampling and enumeration share the same deterministic cycle core, so the
    sampled law matches ``step`` exactly.
    """
    routers, _, _, phase, _, _ = state
    if model.level == ModelLevel.PROB_CHOICE:
        classes, lens, locks, local_index = _lazy_cycle_setup(routers)
        dropped_delta = _inject_tokens(lens, local_index, phase, model.pattern)
        directions, requested = _fill_directions(classes, lens, locks)
        slots = _resolution_slots(classes, lens, locks)
        for r, ci, choices in slots:
            port = _draw_choice(classes[r][ci], choices, rng, on_choice)
            directions[r][ci] = port

        def rebuild(r, row_lens, row_locks, requested_set, serviced, act):
            chans = tuple(
                (classes[r][ci], row_lens[ci], row_locks[ci]) for ci in range(3)
            )
            unserviced = [ci in requested_set and ci not in serviced for ci in range(3)]
            return (stable_partition(chans, unserviced), act)

        return _advance_lazy(
            state,
            classes,
            lens,
            locks,
            directions,
            requested,
            dropped_delta,
            model.pattern,
            model.options,
            rebuild,
        )

    # Boolean-queue level: reuse the enumerating step over a single sampled
    # combo by drawing directions first and temporarily locking them in.
    lens = [[r_[0], r_[2], r_[4]] for r_ in routers]
    locks = [[r_[1], r_[3], LOCK_NONE] for r_ in routers]
    injecting = model.pattern.injects(phase)
    sampled_locks = []
    for r in range(NUM_ROUTERS):
        for cls in (LOCAL, XCHAN):
            length = lens[r][cls]
            if cls == LOCAL and injecting and length < BUFFER_CAPACITY:
                length += 1
            if length > 0 and locks[r][cls] == LOCK_NONE:
                port = _draw_choice(cls, _front_choices(cls), rng, on_choice)
                sampled_locks.append((r, cls, port))

    if not sampled_locks:
        branches = bool_queue_step(state, model.pattern, model.options)
        assert len(branches) == 1
        return branches[0][1]

    pinned_routers = []
    pin = {(r, cls): port for r, cls, port in sampled_locks}
    for r, r_ in enumerate(routers):
        llock = pin.get((r, LOCAL), None)
        xlock = pin.get((r, XCHAN), None)
        pinned_routers.append(
            (
                r_[0],
                r_[1] if llock is None else llock + 1,
                r_[2],
                r_[3] if xlock is None else xlock + 1,
                r_[4],
                r_[5],
                r_[6],
                r_[7],
            )
        )
    pinned = (tuple(pinned_routers),) + state[1:]
    branches = bool_queue_step(pinned, model.pattern, model.options)
    assert len(branches) == 1
    return branches[0][1]


def _draw_choice(cls: int, choices, rng, on_choice) -> int:
    u = rng.random()
    port = choices[0][0] if u < float(choices[0][1]) else choices[1][0]
    if on_choice is not None:
        on_choice("local" if cls == LOCAL else "xchan", port)
    return port


def make_model(
    level: ModelLevel | str,
    pattern: InjectionPattern,
    *,
    resistive_cap: int | None = None,
    inductive_cap: int | None = None,
    track: str = "both",
    track_clk: bool | None = None,
) -> NocModel:
    """Build a model level bound to an injection pattern.

    ``track`` selects which noise counters live in the state ("both",
    "resistive" or "inductive"); an untracked counter (and, for inductive, the
    previous-activity helper) is pinned to zero so it cannot split states.
    ``track_clk`` defaults to transient for boolean-queue burst runs, where
    the reachable quotient is finite, and tracked elsewhere.
    """
    level = ModelLevel(level)
    if track not in TRACK_MODES:
        raise ValueError(f"track must be one of {TRACK_MODES}, got {track!r}")
    if track_clk is None:
        track_clk = not (level == ModelLevel.BOOLEAN_QUEUE and pattern.kind == BURST)
    options = StepOptions(
        resistive_cap=resistive_cap,
        inductive_cap=inductive_cap,
        track_resistive=track in ("both", "resistive"),
        track_inductive=track in ("both", "inductive"),
        track_clk=track_clk,
    )
    return NocModel(level, pattern, options)
