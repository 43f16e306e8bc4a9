"""Cycle-accurate semantics of the 2x2 mesh.

Topology: routers 0,1 on the top row and 2,3 on the bottom row. Router r's
horizontal neighbor is ``r ^ 1`` and its vertical neighbor is ``r ^ 2``. Each
router has three incoming channels (local, x, y), each backed by a FIFO buffer
of capacity 4, and an arbiter that grants each output port (to-x-neighbor,
to-y-neighbor, deliver-here) to at most one channel per cycle, scanning the
channels in round-robin priority order.

States are canonical value tuples so the exploration engines can hash and
compare them directly::

    state   = (routers, resistive, inductive, phase, clk, dropped)
    routers = 4-tuple of (channels, prev_activity)
    channels = 3-tuple, in priority order (front first), of (class, buffer)
    buffer  = tuple of flits (small ints; encoding depends on the model level)

One cycle applies, in order: injection, routing-direction lookup for every
buffer front, synchronous arbitration and transfer (receiving-buffer space is
judged on pre-transfer occupancy), noise accounting, round-robin priority
update, and the phase/clock advance. Flits injected this cycle are eligible
for forwarding this same cycle.
"""

from __future__ import annotations

from fractions import Fraction
from itertools import product
from typing import Callable, NamedTuple

NUM_ROUTERS = 4
BUFFER_CAPACITY = 4

# Channel classes.
LOCAL, XCHAN, YCHAN = 0, 1, 2

# Output ports. EJECT consumes the flit (delivery at its destination).
EJECT, TO_X, TO_Y = 0, 1, 2

# Router activity levels for one cycle.
LOW, MID, HIGH = 0, 1, 2

ONE = Fraction(1)
THIRD = Fraction(1, 3)


def x_neighbor(router: int) -> int:
    return router ^ 1


def y_neighbor(router: int) -> int:
    return router ^ 2


def xy_route(current: int, dest: int) -> int:
    """Dimension-ordered routing: resolve the column first, then the row."""
    if dest == current:
        return EJECT
    if (dest ^ current) & 1:
        return TO_X
    return TO_Y


class FlitCodec(NamedTuple):
    """How a model level encodes flits in buffers.

    ``from_dest`` builds the injected flit, ``route`` maps a buffered flit to
    the port it requests at its current router, ``after_transfer`` rewrites
    the flit as it moves through a port.
    """

    from_dest: Callable[[int, int], int]
    route: Callable[[int, int], int]
    after_transfer: Callable[[int, int], int]


# Concrete level: a flit is its destination router id.
CONCRETE_CODEC = FlitCodec(
    from_dest=lambda router, dest: dest,
    route=xy_route,
    after_transfer=lambda flit, port: flit,
)


class StepOptions(NamedTuple):
    """Counter tracking and clock configuration shared by all model levels."""

    resistive_cap: int | None = None
    inductive_cap: int | None = None
    track_resistive: bool = True
    track_inductive: bool = True
    track_clk: bool = True


DEFAULT_OPTIONS = StepOptions()

# Arbitration priority at reset: local first, then x, then y.
INITIAL_CHANNEL_ORDER = (LOCAL, XCHAN, YCHAN)


def initial_flit_state() -> tuple:
    """All buffers empty, reset priority order, activity low, counters zero."""
    channels = tuple((cls, ()) for cls in INITIAL_CHANNEL_ORDER)
    routers = tuple((channels, LOW) for _ in range(NUM_ROUTERS))
    return (routers, 0, 0, 0, 0, 0)


def observe(state: tuple) -> tuple[int, int, int]:
    """(resistive, inductive, clk) of a state at any model level."""
    return (state[1], state[2], state[4])


def injection_branches(
    routers: tuple, phase: int, pattern
) -> list[tuple[Fraction, tuple, int]]:
    """Enumerate injection outcomes for one cycle.

    Returns ``(probability, dests, dropped_delta)`` triples where ``dests``
    holds one destination per router (or None when that router injects
    nothing). On idle cycles this is a singleton. On injection cycles each
    router draws a destination uniformly from the other three; a router whose
    local buffer is already full drops the new flit instead of branching.
    """
    if not pattern.injects(phase):
        return [(ONE, (None, None, None, None), 0)]
    per_router: list[tuple[int | None, ...]] = []
    dropped = 0
    weight = ONE
    for r in range(NUM_ROUTERS):
        channels = routers[r][0]
        local_len = 0
        for cls, buf in channels:
            if cls == LOCAL:
                local_len = len(buf)
                break
        if local_len >= BUFFER_CAPACITY:
            per_router.append((None,))
            dropped += 1
        else:
            per_router.append((r ^ 1, r ^ 2, r ^ 3))
            weight *= THIRD
    return [(weight, dests, dropped) for dests in product(*per_router)]


def resolve_grants(
    requests: list[list[tuple[int, int]]], occupancy: list[list[int]]
) -> list[list[tuple[int, int]]]:
    """Grant ports to requesting channels, synchronously over all routers.

    ``requests[r]`` lists ``(channel_index, port)`` in service (priority)
    order for router r's non-empty channels. ``occupancy[r][cls]`` is the
    pre-transfer buffer occupancy; a transfer into a buffer that started the
    cycle full is denied even if that buffer also sends this cycle. Each port
    goes to at most the first requester; later requesters of a taken port and
    requesters of a full target are denied.
    """
    granted: list[list[tuple[int, int]]] = []
    for r, reqs in enumerate(requests):
        taken = 0
        grants: list[tuple[int, int]] = []
        for ci, port in reqs:
            bit = 1 << port
            if taken & bit:
                continue
            if port == TO_X and occupancy[r ^ 1][XCHAN] >= BUFFER_CAPACITY:
                continue
            if port == TO_Y and occupancy[r ^ 2][YCHAN] >= BUFFER_CAPACITY:
                continue
            taken |= bit
            grants.append((ci, port))
        granted.append(grants)
    return granted


def activity_level(granted_count: int) -> int:
    """High when all three channels forwarded, low when none did."""
    if granted_count == 3:
        return HIGH
    if granted_count == 0:
        return LOW
    return MID


def noise_increments(
    activities: tuple[int, ...], prev_activities: tuple[int, ...]
) -> tuple[int, int]:
    """Per-cycle (resistive, inductive) increments.

    Resistive counts routers at high activity this cycle; inductive counts
    routers that switched directly between high and low since the previous
    cycle (an intervening mid level breaks the switch).
    """
    resistive = 0
    inductive = 0
    for act, prev in zip(activities, prev_activities):
        if act == HIGH:
            resistive += 1
        if (prev == HIGH and act == LOW) or (prev == LOW and act == HIGH):
            inductive += 1
    return resistive, inductive


def saturating_add(value: int, delta: int, cap: int | None) -> int:
    total = value + delta
    if cap is not None and total > cap:
        return cap
    return total


def stable_partition(items: tuple, unserviced: list[bool]) -> tuple:
    """Unserviced items move to the front; both groups keep relative order."""
    front = tuple(item for item, u in zip(items, unserviced) if u)
    back = tuple(item for item, u in zip(items, unserviced) if not u)
    return front + back


def advance_flit_state(
    state: tuple,
    dests: tuple,
    dropped_delta: int,
    pattern,
    codec: FlitCodec,
    options: StepOptions,
) -> tuple:
    """One deterministic cycle, given the injection outcome for each router."""
    routers, resistive, inductive, phase, clk, dropped = state

    classes = [[cls for cls, _ in chans] for chans, _ in routers]
    buffers = [[list(buf) for _, buf in chans] for chans, _ in routers]

    for r in range(NUM_ROUTERS):
        dest = dests[r]
        if dest is not None:
            buffers[r][classes[r].index(LOCAL)].append(codec.from_dest(r, dest))

    occupancy = [[0, 0, 0] for _ in range(NUM_ROUTERS)]
    for r in range(NUM_ROUTERS):
        for ci in range(3):
            occupancy[r][classes[r][ci]] = len(buffers[r][ci])

    requests: list[list[tuple[int, int]]] = []
    for r in range(NUM_ROUTERS):
        requests.append(
            [(ci, codec.route(r, buffers[r][ci][0])) for ci in range(3) if buffers[r][ci]]
        )

    granted = resolve_grants(requests, occupancy)

    for r in range(NUM_ROUTERS):
        for ci, port in granted[r]:
            flit = buffers[r][ci].pop(0)
            if port == TO_X:
                target = r ^ 1
                buffers[target][classes[target].index(XCHAN)].append(
                    codec.after_transfer(flit, port)
                )
            elif port == TO_Y:
                target = r ^ 2
                buffers[target][classes[target].index(YCHAN)].append(
                    codec.after_transfer(flit, port)
                )

    activities = tuple(activity_level(len(granted[r])) for r in range(NUM_ROUTERS))
    prev_activities = tuple(router[1] for router in routers)
    d_res, d_ind = noise_increments(activities, prev_activities)
    if options.track_resistive:
        resistive = saturating_add(resistive, d_res, options.resistive_cap)
    if options.track_inductive:
        inductive = saturating_add(inductive, d_ind, options.inductive_cap)

    new_routers = []
    for r in range(NUM_ROUTERS):
        requested = {ci for ci, _ in requests[r]}
        serviced = {ci for ci, _ in granted[r]}
        # Channels that requested nothing (empty) count as serviced here.
        unserviced = [ci in requested and ci not in serviced for ci in range(3)]
        chans = tuple(
            (classes[r][ci], tuple(buffers[r][ci])) for ci in range(3)
        )
        prev = activities[r] if options.track_inductive else LOW
        new_routers.append((stable_partition(chans, unserviced), prev))

    return (
        tuple(new_routers),
        resistive,
        inductive,
        (phase + 1) % pattern.period,
        clk + 1 if options.track_clk else 0,
        dropped + dropped_delta,
    )


def step_flit_level(
    state: tuple, pattern, codec: FlitCodec, options: StepOptions
) -> list[tuple[Fraction, tuple]]:
    """One-cycle successor distribution for a flit-buffer model level."""
    routers, _, _, phase, _, _ = state
    return [
        (prob, advance_flit_state(state, dests, dropped, pattern, codec, options))
        for prob, dests, dropped in injection_branches(routers, phase, pattern)
    ]


def sample_flit_step(
    state: tuple,
    pattern,
    codec: FlitCodec,
    options: StepOptions,
    rng,
    on_choice: Callable[[str, int], None] | None = None,
) -> tuple:
    """Sample one successor; equivalent in law to ``step_flit_level``."""
    routers, _, _, phase, _, _ = state
    dests: list[int | None] = [None] * NUM_ROUTERS
    dropped = 0
    if pattern.injects(phase):
        for r in range(NUM_ROUTERS):
            channels = routers[r][0]
            local_full = any(
                cls == LOCAL and len(buf) >= BUFFER_CAPACITY for cls, buf in channels
            )
            if local_full:
                dropped += 1
            else:
                pick = int(rng.integers(1, 4))
                dests[r] = r ^ pick
                if on_choice is not None:
                    on_choice("dest", pick)
    return advance_flit_state(state, tuple(dests), dropped, pattern, codec, options)


def inject_distribution(
    state: tuple, pattern, codec: FlitCodec = CONCRETE_CODEC
) -> list[tuple[Fraction, tuple]]:
    """Distribution over states after injection only (no routing yet)."""
    routers, resistive, inductive, phase, clk, dropped = state
    out = []
    for prob, dests, dropped_delta in injection_branches(routers, phase, pattern):
        new_routers = []
        for r in range(NUM_ROUTERS):
            chans, prev = routers[r]
            if dests[r] is not None:
                chans = tuple(
                    (cls, buf + (codec.from_dest(r, dests[r]),)) if cls == LOCAL else (cls, buf)
                    for cls, buf in chans
                )
            new_routers.append((chans, prev))
        out.append(
            (prob, (tuple(new_routers), resistive, inductive, phase, clk, dropped + dropped_delta))
        )
    return out


def step_concrete(
    state: tuple, pattern, options: StepOptions = DEFAULT_OPTIONS
) -> list[tuple[Fraction, tuple]]:
    """One-cycle successor distribution of the concrete model."""
    return step_flit_level(state, pattern, CONCRETE_CODEC, options)


def total_buffered_flits(state: tuple) -> int:
    routers = state[0]
    return sum(len(buf) for chans, _ in routers for _, buf in chans)
