import numpy as np
import pytest

from services.adaptation import (
    DecisionMaker,
    DecisionState,
    apply_step,
    calibrate_rest,
    decide_step,
    index_timeline,
    init_state,
    ladder_size_for,
    map_rr_to_index,
    warn_on_ladder_size,
    window_mean,
    window_origin,
)
from services.errors import NoDataError
from services.schemas import HrvParams
from tests.conftest import rr_stream_from_means


def state_after(prev, hrv, index=8, n=15):
    return DecisionState(prev_mean_rr=prev, indices=(index,), sizes=(n,), rr_stress_max=hrv.rr_stress_max)


class TestWindowMean:
    def test_single_value(self):
        assert window_mean([(1.0, 0.8), (2.0, 0.8)], 30.0, 30.0) == pytest.approx(0.8)

    def test_arithmetic_mean(self):
        assert window_mean([(10.0, 0.7), (11.0, 0.9)], 30.0, 30.0) == pytest.approx(0.8)

    def test_window_is_open_left_closed_right(self):
        stream = [(0.0, 5.0), (15.0, 0.6), (30.0, 0.8), (30.5, 9.0)]
        assert window_mean(stream, 30.0, 30.0) == pytest.approx(0.7)

    def test_matches_brute_force_filter(self, rng):
        ts = np.cumsum(rng.uniform(0.5, 1.1, size=400))
        rr = rng.uniform(0.5, 1.1, size=400)
        stream = np.column_stack([ts, rr])
        for end in (30.0, 75.5, 120.0, 200.0):
            inside = [r for t, r in zip(ts, rr) if end - 30.0 < t <= end]
            assert window_mean(stream, end, 30.0) == pytest.approx(sum(inside) / len(inside), rel=1e-12)

    def test_empty_window(self):
        with pytest.raises(NoDataError):
            window_mean([(1.0, 0.8)], 90.0, 30.0)

    def test_non_positive_window(self):
        with pytest.raises(ValueError):
            window_mean([(1.0, 0.8)], 30.0, 0.0)


class TestDecideStep:
    def test_default_levels(self, hrv):
        assert hrv.rr_stress == pytest.approx(0.70)
        assert hrv.rr_stress_max == pytest.approx(0.64)

    @pytest.mark.parametrize(
        "prev, mean, expected",
        [
            (0.78, 0.75, -1),  # stress detected, one step
            (0.80, 0.74, -2),  # drop of three thresholds below rest
            (0.69, 0.73, 3),  # rest detected above the stress level
            (0.80, 0.79, 0),  # small drop, no action
            (0.63, 0.62, -1),  # cumulative stress
            (0.84, 0.79, 0),  # drop mostly above the rest line
        ],
    )
    def test_worked_examples(self, hrv, prev, mean, expected):
        assert decide_step(mean, state_after(prev, hrv), hrv) == expected

    def test_first_window_only_initializes(self, hrv):
        assert decide_step(0.5, state_after(None, hrv), hrv) == 0

    def test_rest_branch_always_moves_up(self, hrv, rng):
        for _ in range(200):
            prev = rng.uniform(0.5, 1.0)
            mean = prev + rng.uniform(1e-3, 0.2)
            if mean >= hrv.rr_stress:
                assert decide_step(mean, state_after(prev, hrv), hrv) >= 1

    def test_stress_branch_below_rest_moves_down(self, hrv, rng):
        for _ in range(200):
            prev = rng.uniform(0.55, hrv.rr_rest)
            mean = prev - rng.uniform(hrv.delta_rs + 1e-3, 0.2)
            assert decide_step(mean, state_after(prev, hrv), hrv) <= -1


class TestApplyStep:
    @pytest.mark.parametrize("index, delta, expected", [(8, -2, 6), (15, 3, 15), (1, -1, 1)])
    def test_clamped(self, hrv, index, delta, expected):
        assert apply_step(state_after(0.8, hrv, index=index), delta).index == expected

    def test_every_path_uses_its_own_ladder(self, hrv):
        state = init_state(hrv, [15, 10])
        moved = apply_step(state, 5)
        assert moved.indices == (13, 8)

    def test_size_mismatch(self, hrv):
        with pytest.raises(ValueError):
            apply_step(state_after(0.8, hrv), 1, sizes=[15, 15])


class TestInitialization:
    def test_default_start_index(self, hrv):
        assert init_state(hrv, 15).index == 8

    def test_no_spread_starts_at_min_time(self):
        assert init_state(HrvParams(sigma_rest=0.0), 15).index == 15

    def test_huge_spread_clamps_to_min_jerk(self):
        assert init_state(HrvParams(sigma_rest=10.0), 15).index == 1

    def test_ladder_size_for_defaults(self, hrv):
        assert ladder_size_for(hrv) == 15

    def test_ladder_size_warning(self, hrv, caplog):
        assert not warn_on_ladder_size(hrv, 15)
        assert caplog.text == ""
        assert warn_on_ladder_size(hrv, [15, 10])
        assert "implied by the RR span" in caplog.text

    def test_map_rest_level(self, hrv):
        assert map_rr_to_index(0.80, hrv, 15) == 8
        assert map_rr_to_index(0.30, hrv, 15) == 1
        assert map_rr_to_index(2.00, hrv, 15) == 15

    def test_calibrate_rest(self):
        mean, sigma = calibrate_rest([(1.0, 0.7), (2.0, 0.9)])
        assert mean == pytest.approx(0.8)
        assert sigma == pytest.approx(np.std([0.7, 0.9], ddof=1))

    def test_calibrate_empty(self):
        with pytest.raises(ValueError):
            calibrate_rest([])

    def test_rejects_inverted_levels(self):
        with pytest.raises(ValueError):
            HrvParams(rr_rest=0.8, rr_stress=0.9)


class TestIndexTimeline:
    def test_worked_stream(self, hrv):
        stream = rr_stream_from_means([0.80, 0.74, 0.77, 0.80, 0.79])
        rows = index_timeline(stream, hrv, 15)
        assert [r.delta for r in rows] == [0, -2, 3, 3, 0]
        assert [r.index for r in rows] == [8, 6, 9, 12, 12]
        assert [r.window_end_s for r in rows] == [30.0, 60.0, 90.0, 120.0, 150.0]
        assert rows[1].normalized_rr == pytest.approx(0.74 / 0.80)

    def test_constant_rest_stream_holds_index(self, hrv):
        rows = index_timeline(rr_stream_from_means([0.8] * 20), hrv, 15)
        assert {r.index for r in rows} == {8}

    def test_gap_carries_previous_mean(self, hrv):
        stream = rr_stream_from_means([0.80, 0.74, 0.74, 0.74])
        stream = stream[(stream[:, 0] <= 60.0) | (stream[:, 0] > 90.0)]
        rows = index_timeline(stream, hrv, 15)
        assert rows[2].gap
        assert rows[2].delta == 0
        assert rows[2].mean_rr_s == pytest.approx(0.74)
        assert rows[2].index == rows[1].index == 6

    def test_deterministic(self, hrv, rng):
        ts = np.cumsum(rng.uniform(0.6, 1.0, size=800))
        stream = np.column_stack([ts, rng.uniform(0.55, 0.95, size=800)])
        first = index_timeline(stream, hrv, 15)
        second = index_timeline(stream, hrv, 15)
        assert [r.model_dump() for r in first] == [r.model_dump() for r in second]
        assert all(1 <= r.index <= 15 for r in first)

    def test_rejects_unsorted_stream(self, hrv):
        with pytest.raises(ValueError):
            index_timeline([(2.0, 0.8), (1.0, 0.8)], hrv, 15)

    def test_rejects_empty_stream(self, hrv):
        with pytest.raises(ValueError):
            index_timeline([], hrv, 15)

    @pytest.mark.parametrize("first", [0.0, 30.0, 36000.0])
    def test_recording_shorter_than_one_window(self, hrv, first):
        with pytest.raises(ValueError, match="shorter than one window"):
            index_timeline([(first, 0.8)], hrv, 15)

    def test_wall_clock_stream_starts_at_first_sample(self, hrv):
        stream = rr_stream_from_means([0.80, 0.74, 0.77, 0.80, 0.79]) + [36000.0, 0.0]
        rows = index_timeline(stream, hrv, 15)
        assert not any(r.gap for r in rows)
        assert [r.window_end_s for r in rows] == [36030.0, 36060.0, 36090.0, 36120.0, 36150.0]
        assert [r.delta for r in rows] == [0, -2, 3, 3, 0]

    def test_explicit_origin(self, hrv):
        rows = index_timeline(rr_stream_from_means([0.8] * 3), hrv, 15, origin=-60.0)
        assert [r.gap for r in rows] == [True, True, False, False, False]

    @pytest.mark.parametrize("ts, expected", [(3.0, 0.0), (30.0, 30.0), (36012.5, 36000.0), (3.0e6, 3.0e6)])
    def test_window_origin(self, ts, expected):
        assert window_origin(ts, 30.0) == expected


class TestDecisionMaker:
    def test_push_closes_passed_windows(self, hrv):
        maker = DecisionMaker(hrv, 15)
        stream = rr_stream_from_means([0.80, 0.74])
        assert maker.push(stream[:10]) == []
        rows = maker.push(stream[10:])
        assert len(rows) == 1 and rows[0].window_end_s == 30.0
        rows = maker.push([(61.0, 0.74)])
        assert rows[0].delta == -2
        assert maker.current_indices() == (6,)

    def test_push_rejects_bad_samples(self, hrv):
        maker = DecisionMaker(hrv, 15)
        maker.push([(1.0, 0.8)])
        with pytest.raises(ValueError):
            maker.push([(1.0, 0.8)])
        with pytest.raises(ValueError):
            maker.push([(2.0, -0.1)])

    def test_push_rejects_timestamps_before_closed_windows(self, hrv):
        maker = DecisionMaker(hrv, 15)
        maker.push(rr_stream_from_means([0.8, 0.8]))
        with pytest.raises(ValueError):
            maker.push([(10.0, 0.8)])

    def test_push_on_epoch_clock(self, hrv):
        maker = DecisionMaker(hrv, 15)
        assert maker.push([(3.0e6, 0.8)]) == []
        stream = rr_stream_from_means([0.80, 0.74]) + [3.0e6, 0.0]
        rows = maker.push(stream) + maker.push([(3.0e6 + 61.0, 0.74)])
        assert [r.window_end_s for r in rows] == [3.0e6 + 30.0, 3.0e6 + 60.0]
        assert [r.delta for r in rows] == [0, -2]

    def test_pinned_never_steps(self, hrv):
        maker = DecisionMaker(hrv, 15, pin_index=3)
        for row in index_timeline(rr_stream_from_means([0.8, 0.6, 0.9, 1.2]), hrv, 15, pin_index=3):
            assert row.index == 3
        maker.process_stream(rr_stream_from_means([0.8, 0.6]), 60.0)
        assert maker.current_indices() == (3,)

    @pytest.mark.parametrize("pin", [0, 16])
    def test_invalid_pin(self, hrv, pin):
        with pytest.raises(ValueError):
            DecisionMaker(hrv, 15, pin_index=pin)

    def test_initial_rr_mapping(self, hrv):
        assert DecisionMaker(hrv, 15, initial_rr=0.70).current_indices() == (3,)
