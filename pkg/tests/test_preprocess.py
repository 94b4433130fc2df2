import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from swhforecast import preprocess as pp
from swhforecast.ndbc import FEATURES, TimeSeriesTable
from swhforecast.preprocess import AngleEncoding, ScalerParams, decode_angle, encode_angle

TABLE1 = ScalerParams({"WVHT": 0.20}, {"WVHT": 4.54})


class TestInterpolate:
    def test_midpoint(self):
        out = pp.interpolate_missing([1.0, np.nan, 3.0], [0, 1, 2])
        np.testing.assert_array_equal(out, [1.0, 2.0, 3.0])

    def test_quarter_weights(self):
        out = pp.interpolate_missing([10.0, np.nan, np.nan, np.nan, 20.0], np.arange(5))
        np.testing.assert_allclose(out, [10, 12.5, 15, 17.5, 20], rtol=0, atol=1e-12)

    def test_edges_extend(self):
        out = pp.interpolate_missing([np.nan, 5.0, np.nan], [0, 1, 2])
        np.testing.assert_array_equal(out, [5.0, 5.0, 5.0])

    def test_uneven_positions(self):
        # neighbours at t=0 and t=4, missing at t=1
        out = pp.interpolate_missing([0.0, np.nan, 8.0], [0.0, 1.0, 4.0])
        assert out[1] == pytest.approx(2.0)

    def test_all_missing_names_feature(self):
        with pytest.raises(ValueError, match="WVHT"):
            pp.interpolate_missing([np.nan, np.nan], [0, 1], name="WVHT")

    @settings(max_examples=100, deadline=None)
    @given(
        slope=st.floats(-50, 50),
        icept=st.floats(-100, 100),
        n=st.integers(3, 40),
        seed=st.integers(0, 2**31),
    )
    def test_linear_exactness(self, slope, icept, n, seed):
        rng = np.random.default_rng(seed)
        pos = np.cumsum(rng.uniform(0.5, 3.0, size=n))
        line = icept + slope * pos
        col = line.copy()
        holes = rng.random(n) < 0.4
        holes[0] = holes[-1] = False
        col[holes] = np.nan
        out = pp.interpolate_missing(col, pos)
        np.testing.assert_allclose(out, line, rtol=1e-10, atol=1e-9)
        np.testing.assert_array_equal(out[~holes], line[~holes])


class TestAngles:
    @pytest.mark.parametrize(
        "x, expected",
        [(0.0, (0.0, 0)), (180.0, (1.0, 0)), (270.0, (0.5, 1)), (90.0, (0.5, 0)), (360.0, (0.0, 0))],
    )
    def test_table(self, x, expected):
        enc = encode_angle(x, 360.0)
        assert enc.x_new == pytest.approx(expected[0], abs=1e-15)
        assert enc.x_sign == expected[1]

    @pytest.mark.parametrize(
        "enc, x", [(AngleEncoding(0.5, 1), 270.0), (AngleEncoding(1.0, 0), 180.0), (AngleEncoding(0.0, 0), 0.0)]
    )
    def test_decode_table(self, enc, x):
        assert decode_angle(enc, 360.0) == pytest.approx(x, abs=1e-9)

    def test_negative_angle_normalised(self):
        assert encode_angle(-90.0) == encode_angle(270.0)

    def test_errors(self):
        with pytest.raises(ValueError):
            encode_angle(math.nan)
        with pytest.raises(ValueError):
            encode_angle(10.0, 0.0)
        with pytest.raises(ValueError):
            decode_angle(AngleEncoding(1.5, 0))

    def test_neighbourhood(self):
        a, b, c = (encode_angle(x).x_new for x in (1.0, 359.0, 180.0))
        assert abs(a - b) < abs(a - c)

    @settings(max_examples=200, deadline=None)
    @given(x=st.floats(-1e4, 1e4), k=st.integers(-5, 5))
    def test_periodicity(self, x, k):
        e1, e2 = encode_angle(x), encode_angle(x + k * 360.0)
        assert e1.x_new == pytest.approx(e2.x_new, abs=1e-9)
        r = x % 360.0
        # sign may only differ when x sits within rounding of a half-period boundary
        assume(min(abs(r - 180.0), r, 360.0 - r) > 1e-6)
        assert e1.x_sign == e2.x_sign

    @settings(max_examples=200, deadline=None)
    @given(x=st.floats(0.0, 360.0, exclude_max=True))
    def test_round_trip(self, x):
        enc = encode_angle(x)
        back = decode_angle(enc)
        again = encode_angle(back)
        assert again.x_new == pytest.approx(enc.x_new, abs=1e-9)
        assert again.x_sign == enc.x_sign or min(abs(x - 180.0), x, 360 - x) < 1e-6

    def test_vectorised_matches_scalar(self, rng):
        x = rng.uniform(-720, 720, size=200)
        new, sign = pp.encode_angles(x)
        for xi, ni, si in zip(x, new, sign):
            e = encode_angle(xi)
            assert ni == pytest.approx(e.x_new, abs=1e-15)
            assert si == e.x_sign


def _dense(cols, start="2019-01-01T00:00"):
    n = len(next(iter(cols.values())))
    ts = np.datetime64(start, "s") + np.arange(n) * np.timedelta64(3600, "s")
    return pp.DenseTable(ts, {k: np.asarray(v, dtype=float) for k, v in cols.items()})


class TestScaler:
    def test_table1_bounds(self):
        t = _dense({"WVHT": [0.20, 1.13, 4.54, 2.0]})
        s = pp.fit_scaler(t)
        assert (s.x_min["WVHT"], s.x_max["WVHT"]) == (0.20, 4.54)

    def test_constant_error(self):
        with pytest.raises(ValueError, match="WVHT"):
            pp.fit_scaler(_dense({"WVHT": [5.0, 5.0, 5.0]}))

    def test_unit(self):
        s = pp.fit_scaler(_dense({"A": [0.0, 1.0]}))
        assert (s.x_min["A"], s.x_max["A"]) == (0.0, 1.0)

    def test_train_rows_only(self):
        t = _dense({"A": [0.0, 1.0, 2.0, 100.0]})
        s = pp.fit_scaler(t, (None, "2019-01-01T03:00"))
        assert s.x_max["A"] == 2.0
        out = pp.apply_scaler(t, s).columns["A"]
        assert out[-1] == 50.0  # not clipped

    def test_known_value(self):
        assert pp.scale_values(1.13, "WVHT", TABLE1) == pytest.approx(0.2142857, abs=1e-7)
        assert pp.scale_values(0.20, "WVHT", TABLE1) == 0.0
        assert pp.scale_values(4.54, "WVHT", TABLE1) == 1.0
        assert pp.invert_scaler(0.2142857142857143, "WVHT", TABLE1) == pytest.approx(1.13, abs=1e-12)

    def test_unknown_feature(self):
        with pytest.raises(KeyError):
            pp.invert_scaler(0.5, "NOPE", TABLE1)

    @settings(max_examples=200, deadline=None)
    @given(x=st.floats(-1e3, 1e3), lo=st.floats(-100, 100), width=st.floats(1e-3, 1e3))
    def test_round_trip(self, x, lo, width):
        p = ScalerParams({"A": lo}, {"A": lo + width})
        back = pp.invert_scaler(pp.scale_values(x, "A", p), "A", p)
        # 1e-12 relative to the magnitudes involved
        assert abs(back - x) <= 1e-12 * max(1.0, abs(x), abs(lo) + width)

    def test_round_trip_tight(self, rng):
        p = ScalerParams({"WVHT": 0.20}, {"WVHT": 4.54})
        x = rng.uniform(0.0, 10.0, size=10_000)
        back = pp.invert_scaler(pp.scale_values(x, "WVHT", p), "WVHT", p)
        assert np.max(np.abs(back - x)) < 1e-12

    def test_json(self, tmp_path):
        TABLE1.save(tmp_path / "s.json")
        assert ScalerParams.load(tmp_path / "s.json") == TABLE1


class TestPipeline:
    def test_expanded_names(self):
        names = pp.expanded_feature_names()
        assert "WDIR_new" in names and "MWD_sign" in names and "WDIR" not in names
        assert len(names) == 13
        assert len(pp.expanded_feature_names(pp.PAPER_ANGLE_FEATURES)) == 16

    def test_preprocess_dense_and_bounded(self, synth_table):
        boundary = synth_table.timestamps[800]
        clean, dense, scaler = pp.preprocess(synth_table, (None, boundary))
        rows = clean.timestamps < boundary
        for name, col in clean.columns.items():
            assert not np.isnan(col).any()
            assert col[rows].min() == 0.0 and col[rows].max() == 1.0, name
        # paper-faithful fits over all rows
        clean_pf, _, _ = pp.preprocess(synth_table, (None, boundary), paper_faithful=True)
        assert all(c.min() == 0.0 and c.max() == 1.0 for c in clean_pf.columns.values())

    def test_unknown_angle_feature(self, synth_table):
        with pytest.raises(ValueError, match="angle"):
            pp.fill_and_encode(synth_table, ("FOO",))

    def test_no_silent_fill_of_valid_cells(self):
        ts = np.datetime64("2019-01-01", "s") + np.arange(4) * np.timedelta64(3600, "s")
        cols = {f: np.array([1.0, np.nan, 3.0, 4.0]) for f in FEATURES}
        dense = pp.fill_and_encode(TimeSeriesTable(ts, cols), ())
        np.testing.assert_array_equal(dense.columns["WVHT"], [1.0, 2.0, 3.0, 4.0])
