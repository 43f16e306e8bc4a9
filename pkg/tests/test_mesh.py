"""Concrete mesh semantics: routing, arbitration, priority rotation, noise."""

from fractions import Fraction

import pytest
from hypothesis import given, strategies as st

from nocpsn.mesh import (
    BUFFER_CAPACITY,
    CONCRETE_CODEC,
    EJECT,
    HIGH,
    LOCAL,
    LOW,
    MID,
    TO_X,
    TO_Y,
    XCHAN,
    YCHAN,
    DEFAULT_OPTIONS,
    StepOptions,
    advance_flit_state,
    initial_flit_state,
    inject_distribution,
    injection_branches,
    noise_increments,
    resolve_grants,
    stable_partition,
    step_concrete,
    total_buffered_flits,
    xy_route,
)
from nocpsn.patterns import InjectionPattern

EVERY_OTHER = InjectionPattern.every_other()


def make_state(buffers=None, order=(LOCAL, XCHAN, YCHAN), phase=0, prev=LOW):
    """Build a flit-level state; ``buffers[(router, cls)]`` lists flits."""
    buffers = buffers or {}
    routers = []
    for r in range(4):
        chans = tuple((cls, tuple(buffers.get((r, cls), ()))) for cls in order)
        routers.append((chans, prev))
    return (tuple(routers), 0, 0, phase, 0, 0)


class TestRouting:
    def test_x_first_for_diagonal(self):
        assert xy_route(0, 3) == TO_X

    def test_column_match_goes_vertical(self):
        assert xy_route(0, 2) == TO_Y

    def test_at_destination_ejects(self):
        assert xy_route(1, 1) == EJECT

    def test_every_pair_delivers_within_two_hops(self):
        for src in range(4):
            for dest in range(4):
                at, hops = src, 0
                while xy_route(at, dest) != EJECT:
                    port = xy_route(at, dest)
                    at = at ^ 1 if port == TO_X else at ^ 2
                    hops += 1
                    assert hops <= 2
                assert at == dest


class TestPriorityRotation:
    """The three worked round-robin examples: unserviced channels jump the queue."""

    ORDER = ("local", "east", "south")

    def test_two_unserviced_move_to_front_in_order(self):
        out = stable_partition(self.ORDER, [True, False, True])
        assert out == ("local", "south", "east")

    def test_single_unserviced_takes_the_front(self):
        out = stable_partition(self.ORDER, [False, True, False])
        assert out == ("east", "local", "south")

    def test_last_unserviced_overtakes_both(self):
        out = stable_partition(self.ORDER, [False, False, True])
        assert out == ("south", "local", "east")

    def test_none_unserviced_is_identity(self):
        assert stable_partition(self.ORDER, [False] * 3) == self.ORDER

    def test_all_unserviced_is_identity(self):
        assert stable_partition(self.ORDER, [True] * 3) == self.ORDER

    @given(st.lists(st.booleans(), min_size=3, max_size=3))
    def test_partition_keeps_relative_order(self, flags):
        out = stable_partition(self.ORDER, flags)
        unserviced = [c for c, f in zip(self.ORDER, flags) if f]
        serviced = [c for c, f in zip(self.ORDER, flags) if not f]
        assert list(out) == unserviced + serviced


class TestInjection:
    def test_idle_cycle_single_branch(self):
        state = make_state(phase=1)
        dist = inject_distribution(state, EVERY_OTHER)
        assert len(dist) == 1
        assert dist[0][0] == 1
        assert dist[0][1] == state

    def test_injection_cycle_has_81_uniform_branches(self):
        dist = inject_distribution(make_state(), EVERY_OTHER)
        assert len(dist) == 81
        assert all(p == Fraction(1, 81) for p, _ in dist)
        assert sum(p for p, _ in dist) == 1

    def test_destination_never_self(self):
        for _, state in inject_distribution(make_state(), EVERY_OTHER):
            for r, (chans, _) in enumerate(state[0]):
                for cls, buf in chans:
                    if cls == LOCAL:
                        assert buf[0] != r

    def test_full_local_buffer_drops_and_counts(self):
        buffers = {(0, LOCAL): [1] * BUFFER_CAPACITY}
        dist = inject_distribution(make_state(buffers), EVERY_OTHER)
        # Router 0 stopped branching: 3 choices for the other three routers.
        assert len(dist) == 27
        for _, state in dist:
            assert state[5] == 1  # dropped
            chans = state[0][0][0]
            local = next(buf for cls, buf in chans if cls == LOCAL)
            assert len(local) == BUFFER_CAPACITY

    def test_probabilities_always_sum_to_one(self):
        state = make_state(buffers={(2, LOCAL): [0, 1]})
        assert sum(p for p, _ in inject_distribution(state, EVERY_OTHER)) == 1


class TestArbitration:
    def occ(self, over=None):
        occupancy = [[0, 0, 0] for _ in range(4)]
        for (r, cls), n in (over or {}).items():
            occupancy[r][cls] = n
        return occupancy

    def test_conflicting_requests_go_to_higher_priority(self):
        requests = [[(0, TO_Y), (1, TO_Y)], [], [], []]
        granted = resolve_grants(requests, self.occ())
        assert granted[0] == [(0, TO_Y)]

    def test_three_distinct_ports_all_granted(self):
        requests = [[(0, TO_X), (1, EJECT), (2, TO_Y)], [], [], []]
        granted = resolve_grants(requests, self.occ())
        assert [g for g, _ in granted[0]] == [0, 1, 2]

    def test_full_receiving_buffer_denies(self):
        requests = [[(0, TO_Y)], [], [], []]
        occupancy = self.occ({(2, YCHAN): BUFFER_CAPACITY})
        assert resolve_grants(requests, occupancy)[0] == []

    def test_full_target_denies_every_requester_of_that_port(self):
        requests = [[(0, TO_X), (1, TO_X)], [], [], []]
        occupancy = self.occ({(1, XCHAN): BUFFER_CAPACITY})
        assert resolve_grants(requests, occupancy)[0] == []

    def test_eject_is_a_contended_port(self):
        requests = [[(1, EJECT), (2, EJECT)], [], [], []]
        granted = resolve_grants(requests, self.occ())
        assert granted[0] == [(1, EJECT)]

    def test_routers_arbitrate_independently(self):
        requests = [[(0, TO_Y)], [(0, TO_Y)], [], []]
        granted = resolve_grants(requests, self.occ())
        assert granted[0] and granted[1]


class TestOneCycle:
    def advance(self, state, options=DEFAULT_OPTIONS):
        return advance_flit_state(
            state, (None,) * 4, 0, EVERY_OTHER, CONCRETE_CODEC, options
        )

    def test_empty_router_is_low_activity_no_transfers(self):
        state = make_state(phase=1)
        out = self.advance(state)
        assert total_buffered_flits(out) == 0
        assert all(prev == LOW for _, prev in out[0])
        assert out[1] == 0 and out[2] == 0

    def test_flit_moves_to_x_neighbor_buffer(self):
        state = make_state({(0, LOCAL): [1]}, phase=1)
        out = self.advance(state)
        chans1 = out[0][1][0]
        xbuf = next(buf for cls, buf in chans1 if cls == XCHAN)
        assert xbuf == (1,)

    def test_three_serviced_channels_give_high_activity_and_noise(self):
        # Local goes x, the x-front ejects here, the y-front ejects... the
        # x and y fronts would collide on eject, so send the x-front south.
        state = make_state(
            {(0, LOCAL): [1], (0, XCHAN): [2], (0, YCHAN): [0]}, phase=1
        )
        out = self.advance(state)
        assert out[1] == 1  # one high-activity router this cycle
        chans0 = out[0][0][0]
        assert all(len(buf) == 0 for _, buf in chans0)

    def test_high_to_low_switch_counts_inductive_noise(self):
        # Mid before the burst, so only the trailing high-to-low edge counts.
        state = make_state(
            {(0, LOCAL): [1], (0, XCHAN): [2], (0, YCHAN): [0]}, phase=1, prev=MID
        )
        after_high = self.advance(state)
        assert after_high[0][0][1] == HIGH
        assert after_high[1] == 1 and after_high[2] == 0
        after_idle = self.advance(after_high)
        assert after_idle[2] == 1  # high-to-low switch

    def test_mid_activity_breaks_the_switch(self):
        # One serviced channelleaves activity mid: no high/low switch.
        assert noise_increments((MID,) * 4, (HIGH,) * 4) == (0, 0)

    def test_noise_oracle_three_cycle_trace(self):
        # high at t, mid at t+1, low at t+2: no direct high/low switch ever.
        activities = [(HIGH, LOW, LOW, LOW), (MID, LOW, LOW, LOW), (LOW, LOW, LOW, LOW)]
        prev = (LOW, LOW, LOW, LOW)
        resistive = inductive = 0
        for act in activities:
            d_res, d_ind = noise_increments(act, prev)
            resistive += d_res
            inductive += d_ind
            prev = act
        assert resistive == 1  # the high cycle
        assert inductive == 1  # only the initial low-to-high switch

    def test_low_to_high_also_counts(self):
        assert noise_increments((HIGH, LOW, LOW, LOW), (LOW,) * 4) == (1, 1)

    def test_caps_saturate_counters(self):
        options = StepOptions(resistive_cap=0, inductive_cap=0)
        state = make_state(
            {(0, LOCAL): [1], (0, XCHAN): [2], (0, YCHAN): [0]}, phase=1
        )
        out = self.advance(state, options)
        assert out[1] == 0  # saturated at the cap


class TestStepDistribution:
    def test_initial_idle_like_step_counts(self):
        state = make_state(phase=1)
        dist = step_concrete(state, EVERY_OTHER)
        assert len(dist) == 1 and dist[0][0] == 1

    def test_injection_step_has_81_branches(self):
        dist = step_concrete(initial_flit_state(), EVERY_OTHER)
        assert len(dist) == 81
        assert sum(p for p, _ in dist) == 1

    def test_noise_unchanged_on_first_cycle(self):
        for _, succ in step_concrete(initial_flit_state(), EVERY_OTHER):
            assert succ[1] == 0 and succ[2] == 0

    @given(st.integers(0, 3), st.integers(0, 3))
    def test_mass_conservation_along_random_walk(self, pick1, pick2):
        state = initial_flit_state()
        for pick in (pick1, pick2):
            dist = step_concrete(state, EVERY_OTHER)
            assert sum(p for p, _ in dist) == 1
            state = dist[pick % len(dist)][1]

    def test_flit_conservation_per_cycle(self):
        # after = before + injected - ejected - dropped; ejected >= 0 and each
        # router ejects at most one flit per cycle.
        state = initial_flit_state()
        rng_states = [state]
        for _ in range(6):
            dist = step_concrete(state, EVERY_OTHER)
            for _, succ in dist[:10]:
                injected = 4 if EVERY_OTHER.injects(state[3]) else 0
                before = total_buffered_flits(state)
                after = total_buffered_flits(succ)
                dropped = succ[5] - state[5]
                ejected = before + injected - dropped - after
                assert 0 <= ejected <= 4
            state = dist[0][1]
            rng_states.append(state)
