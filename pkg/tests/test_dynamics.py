"""Neighbor sets, the synchronous update, traces, and the line lift."""

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hk_torus.dynamics import (
    LineSystemState,
    SystemState,
    Trace,
    compute_neighbors,
    detect_cut,
    detect_merges,
    equally_spaced_state,
    initial_state,
    line_step,
    random_state,
    run,
    step,
    unroll,
)
from hk_torus.errors import InvalidN
from hk_torus.torus import CircleParams, canonicalize_array, distance_between, phi_array, vect_between

P10 = CircleParams(10.0, 1.0)
P5 = CircleParams(5.0, 1.0)


def state(positions, params=P10, t=0):
    return SystemState(t, np.asarray(positions, dtype=float), params)


positions_strategy = st.lists(
    st.floats(min_value=0.0, max_value=9.999, allow_nan=False), min_size=1, max_size=10
)
radius_strategy = st.sampled_from([0.3, 1.0, 2.4, 5.0])


class TestStateConstruction:
    def test_initial_state_sorts_by_phi(self):
        st0 = initial_state([3.0, 9.5, 0.2], P10)
        assert st0.positions.tolist() == [9.5, 0.2, 3.0]
        values = phi_array(st0.positions, 10.0)
        assert np.all(np.diff(values) >= 0)

    def test_positions_are_read_only(self):
        st0 = equally_spaced_state(P5, 5)
        with pytest.raises(ValueError):
            st0.positions[0] = 1.0

    def test_rejects_non_canonical_positions(self):
        with pytest.raises(ValueError):
            state([0.0, 10.0])
        with pytest.raises(ValueError):
            state([-0.5, 1.0])

    def test_rejects_bad_shape_and_time(self):
        with pytest.raises(ValueError):
            SystemState(0, np.zeros((2, 2)), P10)
        with pytest.raises(ValueError):
            SystemState(-1, np.array([1.0]), P10)

    def test_random_state_is_reproducible(self):
        a = random_state(P10, 8, seed=7)
        b = random_state(P10, 8, seed=7)
        c = random_state(P10, 8, seed=8)
        assert np.array_equal(a.positions, b.positions)
        assert not np.array_equal(a.positions, c.positions)

    def test_equally_spaced(self):
        # the phi sort rotates the grid so negative-phi points lead
        st0 = equally_spaced_state(P5, 5)
        assert st0.positions.tolist() == [3.0, 4.0, 0.0, 1.0, 2.0]
        assert np.all(np.diff(phi_array(st0.positions, 5.0)) > 0)


class TestNeighbors:
    def test_pair_within_range(self):
        g = compute_neighbors(state([0.0, 0.5]))
        assert g.neighbors(1) == {1, 2}
        assert g.neighbors(2) == {1, 2}

    def test_pair_out_of_range(self):
        g = compute_neighbors(state([0.0, 5.0]))
        assert g.neighbors(1) == {1}
        assert g.neighbors(2) == {2}

    def test_equally_spaced_boundary_counts(self):
        # spacing exactly r: the closed window keeps both sides in
        g = compute_neighbors(equally_spaced_state(P5, 5))
        assert g.counts().tolist() == [3, 3, 3, 3, 3]

    def test_left_right_split(self):
        g = compute_neighbors(state([0.0, 0.6, 1.2]))
        assert g.right(1) == {1, 2} and g.left(1) == {1}
        assert g.right(2) == {2, 3} and g.left(2) == {1, 2}
        assert g.right(3) == {3} and g.left(3) == {2, 3}
        for i in (1, 2, 3):
            assert g.neighbors(i) == g.left(i) | g.right(i)

    def test_merged_agents_sit_on_both_sides(self):
        g = compute_neighbors(state([0.0, 0.0, 0.5]))
        assert 2 in g.left(1) and 2 in g.right(1)
        assert 1 in g.left(2) and 1 in g.right(2)

    def test_window_extents_plain(self):
        g = compute_neighbors(state([0.0, 0.6, 1.2, 5.0]))
        assert g.left_index.tolist() == [1, 1, 2, 4]
        assert g.right_index.tolist() == [2, 3, 3, 4]

    def test_window_extents_wrap(self):
        g = compute_neighbors(equally_spaced_state(P5, 5))
        assert g.left_index.tolist() == [0, 1, 2, 3, 4]
        assert g.right_index.tolist() == [2, 3, 4, 5, 6]

    def test_window_extents_complete_graph(self):
        g = compute_neighbors(state([0.0, 0.1, 0.2]))
        spans = g.right_index - g.left_index + 1
        assert spans.tolist() == [3, 3, 3]

    def test_tau_nbr_widens_the_window(self):
        base = state([0.0, 1.05])
        assert compute_neighbors(base).neighbors(1) == {1}
        assert compute_neighbors(base, tau_nbr=0.1).neighbors(1) == {1, 2}
        with pytest.raises(ValueError):
            compute_neighbors(base, tau_nbr=-0.1)

    def test_edges_and_signature(self):
        g = compute_neighbors(state([0.0, 0.5]))
        assert g.edges() == {(1, 2), (2, 1)}
        h = compute_neighbors(state([0.0, 0.5], t=3))
        assert g.signature() == h.signature()
        assert g.signature() != compute_neighbors(state([0.0, 5.0])).signature()

    @given(positions=positions_strategy, r=radius_strategy)
    def test_structure_invariants(self, positions, r):
        st0 = initial_state(positions, CircleParams(10.0, r))
        g = compute_neighbors(st0)
        n = st0.n
        assert np.array_equal(g.neighbor_mask, g.neighbor_mask.T)
        assert np.all(np.diag(g.neighbor_mask))
        assert np.array_equal(g.neighbor_mask, g.right_mask | g.left_mask)
        for i in range(1, n + 1):
            assert i in g.left(i) and i in g.right(i)
            lo, hi = int(g.left_index[i - 1]), int(g.right_index[i - 1])
            assert lo <= i <= hi
            window = {(lo - 1 + k) % n + 1 for k in range(hi - lo + 1)}
            assert window == g.neighbors(i)


class TestStep:
    def test_pair_averages_to_midpoint(self):
        nxt, moves = step(state([0.0, 0.5]))
        assert nxt.positions.tolist() == [0.25, 0.25]
        assert moves.tolist() == [0.25, 0.25]
        assert nxt.t == 1

    def test_fixed_point_of_equal_spacing(self):
        st0 = equally_spaced_state(P5, 5)
        nxt, moves = step(st0)
        assert np.array_equal(nxt.positions, st0.positions)
        assert np.all(moves == 0.0)

    def test_three_agent_chain(self):
        nxt, moves = step(state([0.0, 0.6, 1.2]))
        assert np.allclose(nxt.positions, [0.3, 0.6, 0.9], atol=1e-12, rtol=0.0)
        assert np.allclose(moves, [0.3, 0.0, 0.3], atol=1e-12, rtol=0.0)

    def test_update_matches_definition(self):
        # the post condition, recomputed without the mask machinery
        st0 = random_state(P10, 9, seed=3)
        nxt, _ = step(st0)
        for i in range(9):
            disp = [
                float(vect_between(st0.positions[i : i + 1], st0.positions[j : j + 1], 10.0)[0])
                for j in range(9)
                if float(distance_between(st0.positions[i : i + 1], st0.positions[j : j + 1], 10.0)[0]) <= 1.0
            ]
            target = canonicalize_array(np.array([st0.positions[i] + np.mean(disp)]), 10.0)[0]
            assert abs(float(vect_between(nxt.positions[i : i + 1], np.array([target]), 10.0)[0])) <= 1e-12

    def test_wraparound_averaging(self):
        nxt, _ = step(state([9.8, 0.1]))
        assert np.allclose(nxt.positions, [9.95, 9.95], atol=1e-12, rtol=0.0)


class TestCut:
    def test_pair_cut_with_witness(self):
        res = detect_cut(compute_neighbors(state([0.0, 5.0])))
        assert res.cut and res.witness == 1

    def test_equal_spacing_has_no_cut(self):
        res = detect_cut(compute_neighbors(equally_spaced_state(P5, 5)))
        assert not res.cut and res.witness is None

    def test_chain_is_cut_at_the_wrap(self):
        res = detect_cut(compute_neighbors(state([0.0, 0.6, 1.2])))
        assert res.cut and res.witness == 3

    def test_witness_is_smallest(self):
        res = detect_cut(compute_neighbors(state([0.0, 2.0, 4.0])))
        assert res.cut and res.witness == 1


class TestMerges:
    def test_identical_pair(self):
        assert detect_merges(state([0.25, 0.25]), tol_merge=0.0) == [[1, 2]]

    def test_equal_spacing_all_singletons(self):
        assert detect_merges(equally_spaced_state(P5, 5)) == [[1], [2], [3], [4], [5]]

    def test_below_tolerance_pair(self):
        assert detect_merges(state([0.0, 1e-15, 5.0]), tol_merge=1e-12) == [[1, 2], [3]]

    def test_wraparound_class(self):
        classes = detect_merges(state([0.0, 5.0, 10.0 - 1e-15]), tol_merge=1e-12)
        assert sorted(map(sorted, classes)) == [[1, 3], [2]]

    def test_single_agent(self):
        assert detect_merges(state([4.0])) == [[1]]

    def test_all_merged(self):
        assert detect_merges(state([2.0, 2.0, 2.0])) == [[1, 2, 3]]

    def test_rejects_negative_tolerance(self):
        with pytest.raises(ValueError):
            detect_merges(state([0.0, 1.0]), tol_merge=-1.0)


class TestLineStep:
    def test_pair_midpoint(self):
        out = line_step(LineSystemState(0, np.array([0.0, 0.5]), 1.0))
        assert out.positions.tolist() == [0.25, 0.25]
        assert out.t == 1

    def test_disconnected_pair_frozen(self):
        out = line_step(LineSystemState(0, np.array([0.0, 2.0]), 1.0))
        assert out.positions.tolist() == [0.0, 2.0]

    def test_three_agent_chain(self):
        out = line_step(LineSystemState(0, np.array([0.0, 0.6, 1.2]), 1.0))
        assert np.allclose(out.positions, [0.3, 0.6, 0.9], atol=1e-12, rtol=0.0)


class TestUnroll:
    def test_two_agent_lift(self):
        lifted = unroll(state([0.0, 0.5]), 4)
        assert lifted.positions.tolist() == [0.0, 0.5, 10.0, 10.5, 20.0, 20.5, 30.0, 30.5]
        assert lifted.radius == 1.0

    def test_single_agent_lift(self):
        lifted = unroll(state([3.0]), 4)
        assert lifted.positions.tolist() == [3.0, 13.0, 23.0, 33.0]

    def test_too_few_copies(self):
        with pytest.raises(InvalidN):
            unroll(state([0.0, 0.5]), 3)

    @given(positions=positions_strategy, copies=st.sampled_from([4, 6, 8]))
    def test_middle_copies_track_the_circle(self, positions, copies):
        # one line step of the lift agrees with one circle step on every
        # interior copy; boundary copies are the ones allowed to drift
        st0 = initial_state(positions, P10)
        n = st0.n
        lifted_next = line_step(unroll(st0, copies))
        circle_next, _ = step(st0)
        for k in range(1, copies - 1):
            block = canonicalize_array(lifted_next.positions[k * n : (k + 1) * n].copy(), 10.0)
            gap = distance_between(block, circle_next.positions, 10.0)
            assert float(gap.max()) <= 1e-9 * 10.0


class TestRun:
    def test_fixed_point_trace_is_two_records(self):
        trace = run(equally_spaced_state(P5, 5), horizon=100, stop_eps=0.0)
        assert len(trace) == 2
        assert trace.records[0].moves.tolist() == [0.0] * 5
        assert trace.records[1].moves is None
        assert trace.records[0].events is None and trace.records[1].events is None
        assert trace.records[0].W == trace.records[1].W

    def test_midpoint_merge_converges_at_one(self):
        trace = run(state([0.0, 0.5]), horizon=10)
        assert trace.last_t == 2
        assert trace.records[1].positions.tolist() == [0.25, 0.25]
        assert trace.records[1].moves.tolist() == [0.0, 0.0]

    def test_horizon_zero(self):
        trace = run(state([0.0, 0.5]), horizon=0)
        assert len(trace) == 1 and trace.records[0].moves is None

    def test_negative_stop_eps_runs_to_horizon(self):
        trace = run(equally_spaced_state(P5, 5), horizon=7, stop_eps=-1.0)
        assert trace.last_t == 7
        # fixed-point closure: once the moves vanish they stay vanished
        for rec in trace.records[:-1]:
            assert np.all(rec.moves == 0.0)

    def test_quiet_steps_delays_the_stop(self):
        st0 = state([0.0, 0.5])
        assert run(st0, horizon=10, quiet_steps=3).last_t == 4
        with pytest.raises(ValueError):
            run(st0, horizon=10, quiet_steps=0)

    def test_records_are_contiguous_and_cut_is_sticky(self):
        trace = run(random_state(P10, 10, seed=1), horizon=2000)
        ts = [rec.t for rec in trace.records]
        assert ts == list(range(len(trace)))
        seen_cut = False
        for rec in trace.records:
            seen_cut = seen_cut or rec.cut
            assert rec.cut == seen_cut

    def test_no_crossing_on_uncut_records(self, ring_trace):
        p = ring_trace.params.p
        for rec in ring_trace.records:
            gaps = vect_between(rec.positions, np.roll(rec.positions, -1), p)
            assert float(gaps.min()) >= -1e-12 * p

    def test_events_record_the_link_diff(self, event_trace):
        previous = compute_neighbors(event_trace.state_at(0))
        for rec in event_trace.records[1:]:
            current = compute_neighbors(event_trace.state_at(rec.t))
            added = current.edges() - previous.edges()
            removed = previous.edges() - current.edges()
            if added or removed:
                assert rec.events is not None
                assert set(rec.events.added) == added
                assert set(rec.events.removed) == removed
            else:
                assert rec.events is None
            previous = current

    def test_moves_match_successive_positions(self, event_trace):
        p = event_trace.params.p
        for rec, nxt in zip(event_trace.records, event_trace.records[1:]):
            expected = distance_between(rec.positions, nxt.positions, p)
            assert np.array_equal(rec.moves, expected)

    def test_state_at(self, ring_trace):
        st5 = ring_trace.state_at(5)
        assert st5.t == 5
        assert np.array_equal(st5.positions, ring_trace.records[5].positions)

    def test_state_at_detects_gaps(self, ring_trace):
        broken = Trace(ring_trace.params, ring_trace.records[:3] + ring_trace.records[4:])
        with pytest.raises(IndexError):
            broken.state_at(3)

    @given(seed=st.integers(min_value=0, max_value=30), n=st.sampled_from([3, 5, 10]))
    def test_w_field_matches_positions(self, seed, n):
        from hk_torus.dynamics import capped_sq_sum

        trace = run(random_state(P10, n, seed), horizon=50)
        for rec in trace.records:
            assert rec.W == capped_sq_sum(rec.positions, 10.0)
