import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spikelasso.errors import DataError, FormatError, ParameterError
from spikelasso.events import (BinaryProcessMatrix, EventDetectorParams, bin_index,
                               bin_occurrences, bin_processes, detect_events, detect_spikes,
                               one_sided_slopes, qualifying_samples, read_raster, write_raster)
from spikelasso.sim import VoltageTraces

DT = 0.1


def ramp_trace(flat_ms=10.0, slope=5.0, total_ms=20.0, dt=DT, base=-70.0):
    t = np.arange(round(total_ms / dt) + 1) * dt
    v = base + slope * np.clip(t - flat_ms, 0, None)
    return VoltageTraces(dt, v[:, None])


def polyfit_slope(v, dt):
    return np.polyfit(np.arange(len(v)) * dt, v, 1)[0]


class TestParams:
    @pytest.mark.parametrize("kw", [
        {"right_deriv_threshold": 0.0}, {"deriv_jump_threshold": -1.0},
        {"left_deriv_threshold": 0.5}, {"use_condition": (False, False, False)},
        {"deriv_window": 0},
    ])
    def test_invalid(self, kw):
        with pytest.raises(ParameterError):
            EventDetectorParams(**kw)

    def test_only(self):
        p = EventDetectorParams().only(3)
        assert p.use_condition == (False, False, True)


class TestSlopes:
    def test_against_polyfit(self, rng):
        v = rng.normal(size=40).cumsum()
        w = 5
        left, right = one_sided_slopes(v, w, DT)
        for k, t in enumerate(range(w, len(v) - w)):
            assert left[k] == pytest.approx(polyfit_slope(v[t - w:t + 1], DT), abs=1e-9)
            assert right[k] == pytest.approx(polyfit_slope(v[t:t + w + 1], DT), abs=1e-9)

    def test_linear_trace_is_exact(self):
        v = 3.0 - 2.0 * np.arange(30) * DT
        left, right = one_sided_slopes(v, 4, DT)
        np.testing.assert_allclose(left, -2.0)
        np.testing.assert_allclose(right, -2.0)

    def test_right_slopes_near_kink(self):
        # hand values: right slope at kink - j samples for a slope-5 ramp, window 5, dt 0.1
        tr = ramp_trace()
        _, right = one_sided_slopes(tr.values[:, 0], 5, DT)
        kink = 100
        expected = {0: 5.0, 1: 7.5 / 1.75, 2: 5.5 / 1.75, 3: 3.25 / 1.75, 4: 1.25 / 1.75,
                    5: 0.0}
        for j, val in expected.items():
            assert right[kink - j - 5] == pytest.approx(val, abs=1e-12)


class TestDetectEvents:
    def test_ramp_kink(self):
        # first qualifying sample is three samples before the kink (right slope 1.857 >= 1)
        evs = detect_events(ramp_trace(), EventDetectorParams())
        assert len(evs) == 1
        neuron, t = evs[0]
        assert neuron == 0 and t == pytest.approx(9.7, abs=1e-12)
        assert bin_index(t, 1.0) == bin_index(10.0, 1.0) == 9

    def test_constant(self):
        tr = VoltageTraces(DT, np.full((200, 3), -70.0))
        for flags in [(1, 0, 0), (0, 1, 0), (1, 1, 0), (1, 0, 1), (0, 1, 1), (1, 1, 1)]:
            assert detect_events(tr, EventDetectorParams(use_condition=flags)) == []

    def test_constant_condition_iii_alone(self):
        # left slope 0 >= -1 everywhere: one run covering the interior
        tr = VoltageTraces(DT, np.full((200, 1), -70.0))
        evs = detect_events(tr, EventDetectorParams(use_condition=(0, 0, 1)))
        assert evs == [(0, pytest.approx(5 * DT))]

    def test_recovery_rejected_by_jump(self):
        # left slope +2, right slope +2.5: (i) and (iii) hold, (ii) fails by 0.5
        t = np.arange(301) * DT
        v = -80 + 2.0 * t + 0.5 * np.clip(t - 15.0, 0, None)
        tr = VoltageTraces(DT, v[:, None])
        k = 150 - 5
        left, right = one_sided_slopes(v, 5, DT)
        assert left[k] == pytest.approx(2.0) and right[k] == pytest.approx(2.5)
        q13 = qualifying_samples(v, DT, EventDetectorParams(use_condition=(1, 0, 1)))
        assert q13[k]
        assert detect_events(tr, EventDetectorParams(use_condition=(1, 0, 1))) != []
        q_all = qualifying_samples(v, DT, EventDetectorParams())
        assert not q_all.any()
        assert detect_events(tr, EventDetectorParams()) == []

    def test_two_ramps_two_events(self):
        t = np.arange(601) * DT
        v = -70 + 5 * np.clip(t - 10, 0, 1) + 5 * np.clip(t - 40, 0, 1)
        evs = detect_events(VoltageTraces(DT, v[:, None]))
        assert [round(e[1], 9) for e in evs] == [9.7, 39.7]

    def test_too_short(self):
        with pytest.raises(ParameterError):
            detect_events(VoltageTraces(DT, np.zeros((10, 1))), EventDetectorParams())

    def test_sorted_by_neuron(self):
        tr = ramp_trace()
        v = np.hstack([tr.values, tr.values + 1.0])
        evs = detect_events(VoltageTraces(DT, v))
        assert [e[0] for e in evs] == [0, 1]

    @settings(max_examples=60, deadline=None)
    @given(steps=st.lists(st.integers(-3, 3), min_size=20, max_size=80),
           offset=st.integers(-1000, 1000),
           flags=st.tuples(st.booleans(), st.booleans(), st.booleans()).filter(any))
    def test_offset_invariance(self, steps, offset, flags):
        # integer slopes are multiples of 1/35; thresholds sit halfway between
        p = EventDetectorParams(1.3, 0.7, -1.1, flags, 5)
        v = np.cumsum(steps).astype(float)[:, None]
        a = detect_events(VoltageTraces(1.0, v), p)
        b = detect_events(VoltageTraces(1.0, v + offset), p)
        assert a == b

    @settings(max_examples=60, deadline=None)
    @given(steps=st.lists(st.integers(-3, 3), min_size=20, max_size=80),
           flags=st.tuples(st.booleans(), st.booleans(), st.booleans()).filter(any),
           extra=st.integers(0, 2))
    def test_conjunction_monotone(self, steps, flags, extra):
        v = np.cumsum(steps).astype(float)
        more = list(flags)
        more[extra] = True
        q = qualifying_samples(v, 1.0, EventDetectorParams(1.3, 0.7, -1.1, flags, 5))
        q_more = qualifying_samples(v, 1.0, EventDetectorParams(1.3, 0.7, -1.1, tuple(more), 5))
        assert np.all(q_more <= q)


class TestDetectSpikes:
    def test_passthrough(self):
        tr = VoltageTraces(DT, np.zeros((5, 2)),
                           spike_times=[np.array([1.0, 3.5]), np.array([])])
        assert detect_spikes(tr) == [(0, 1.0), (0, 3.5)]

    def test_flat(self):
        assert detect_spikes(VoltageTraces(DT, np.full((100, 2), -70.0))) == []

    def test_two_crossings(self):
        t = np.arange(1001) * DT
        pulse = lambda t0: np.clip(200 * (t - t0), 0, 100) - np.clip(200 * (t - t0 - 1), 0, 100)
        v = -70 + pulse(10.0) + pulse(60.0)
        spikes = detect_spikes(VoltageTraces(DT, v[:, None]))
        # -20 mV is 50 mV above baseline: 50 / 200 = 0.25 ms after each onset
        assert [n for n, _ in spikes] == [0, 0]
        np.testing.assert_allclose([s for _, s in spikes], [10.25, 60.25], atol=1e-9)

    def test_lockout(self):
        t = np.arange(301) * DT
        v = np.where((t > 10) & (t < 10.5) | (t > 11) & (t < 11.5), 0.0, -70.0)
        assert len(detect_spikes(VoltageTraces(DT, v[:, None]))) == 1
        assert len(detect_spikes(VoltageTraces(DT, v[:, None]), lockout=0.2)) == 2


class TestBinning:
    def test_bin_edges(self):
        assert bin_index(1.5, 1.0) == 1
        assert bin_index(2.0, 1.0) == 1  # right-closed
        assert bin_index(0.0, 1.0) == 0
        assert bin_index(0.3 * 3, 0.3) == 2  # rounding slack

    def test_spike_in_bin(self):
        x, _ = bin_processes([(0, 1.5)], [], 1, 5.0)
        assert x.values[:, 0].tolist() == [0, 1, 0, 0, 0]

    def test_collapse(self):
        _, y = bin_processes([], [(0, 2.1), (0, 2.3)], 1, 5.0)
        assert y.values[:, 0].tolist() == [0, 0, 1, 0, 0]

    def test_empty(self):
        x, y = bin_processes([], [], 3, 10.5, 1.0)
        assert x.values.shape == (10, 3) and not x.values.any() and not y.values.any()

    def test_out_of_range(self):
        with pytest.raises(DataError):
            bin_occurrences([(0, 11.0)], 1, 10.0, 1.0, "spike")
        with pytest.raises(DataError):
            bin_occurrences([(2, 1.0)], 2, 10.0, 1.0, "spike")

    def test_values_validated(self):
        with pytest.raises(DataError):
            BinaryProcessMatrix(1.0, np.array([[2]]), "spike")
        with pytest.raises(ParameterError):
            BinaryProcessMatrix(1.0, np.array([[1]]), "burst")


class TestRasterIO:
    def test_sparse_round_trip(self, tmp_path, rng):
        x = BinaryProcessMatrix(1.0, (rng.random((50, 4)) < 0.2).astype(np.int8), "spike")
        y = BinaryProcessMatrix(1.0, (rng.random((50, 4)) < 0.2).astype(np.int8), "event")
        write_raster(x, y, tmp_path / "r.csv")
        bx, by = read_raster(tmp_path / "r.csv", 4, 50, 1.0)
        np.testing.assert_array_equal(bx.values, x.values)
        np.testing.assert_array_equal(by.values, y.values)

    def test_dense(self, tmp_path):
        x = BinaryProcessMatrix(1.0, np.eye(3, dtype=np.int8), "spike")
        y = BinaryProcessMatrix(1.0, np.zeros((3, 3), dtype=np.int8), "event")
        write_raster(x, y, tmp_path / "r.csv", dense=True)
        np.testing.assert_array_equal(
            np.loadtxt(tmp_path / "r_spike.csv", delimiter=","), np.eye(3))

    def test_bad_row(self, tmp_path):
        p = tmp_path / "r.csv"
        p.write_text("neuron,bin_index,kind\n0,1,spike\n0,1,burst\n")
        with pytest.raises(FormatError) as err:
            read_raster(p, 1, 5, 1.0)
        assert err.value.line == 3
