import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from loops_spmm import (
    EngineConfig,
    Precision,
    fmopa,
    fmopa_2way_fp16,
    load_tile,
    make_accumulator,
    store_tile,
    zip_lower,
    zip_upper,
)


def rank1_oracle(acc, a, b):
    """Scalar double-loop rank-1 update at the accumulator's own precision."""
    out = acc.copy()
    dt = acc.dtype.type
    for i in range(len(a)):
        for j in range(len(b)):
            out[i, j] = dt(out[i, j] + dt(dt(a[i]) * dt(b[j])))
    return out


class TestEngineConfig:
    @pytest.mark.parametrize("svl", [128, 256, 512, 1024])
    def test_lane_relations(self, svl):
        cfg = EngineConfig(svl)
        assert cfg.cnth == 2 * cfg.cntf == 4 * cfg.cntd
        assert cfg.lanes(Precision.FP64) == cfg.cntd
        assert cfg.lanes(Precision.FP32) == cfg.cntf
        assert cfg.lanes(Precision.FP16) == cfg.cnth

    @pytest.mark.parametrize("svl", [64, 192, 384, 2048, 0])
    def test_invalid_svl(self, svl):
        with pytest.raises(ValueError):
            EngineConfig(svl)

    def test_default_engine_is_512(self):
        cfg = EngineConfig()
        assert (cfg.cntd, cfg.cntf, cfg.cnth) == (8, 16, 32)

    def test_tile_budget(self):
        cfg = EngineConfig(512)
        assert cfg.max_tiles(Precision.FP64) == 8
        assert cfg.max_tiles(Precision.FP32) == 4
        assert cfg.max_tiles(Precision.FP16) == 4

    def test_fp16_accumulator_is_fp32_sized(self):
        cfg = EngineConfig(128)
        acc = make_accumulator(cfg, Precision.FP16)
        assert acc.shape == (cfg.cntf, cfg.cntf)
        assert acc.dtype == np.float32


class TestFmopa:
    def test_outer_product_definition(self):
        acc = np.zeros((2, 2))
        fmopa(acc, np.array([1.0, 2.0]), np.array([3.0, 4.0]))
        assert acc.tolist() == [[3.0, 4.0], [6.0, 8.0]]

    def test_zero_vector_is_identity(self):
        acc = np.array([[1.0, 2.0], [3.0, 4.0]])
        fmopa(acc, np.zeros(2), np.array([5.0, 6.0]))
        assert acc.tolist() == [[1.0, 2.0], [3.0, 4.0]]

    def test_accumulates(self):
        acc = np.ones((2, 2))
        fmopa(acc, np.array([1.0, 2.0]), np.array([3.0, 4.0]))
        assert acc.tolist() == [[4.0, 5.0], [7.0, 9.0]]

    def test_lane_mismatch(self):
        with pytest.raises(ValueError, match="lane count"):
            fmopa(np.zeros((2, 2)), np.zeros(3), np.zeros(2))

    @pytest.mark.parametrize("svl", [128, 512])
    @pytest.mark.parametrize("precision", list(Precision))
    def test_matches_scalar_oracle(self, svl, precision):
        cfg = EngineConfig(svl)
        lanes = cfg.lanes(precision)
        rng = np.random.default_rng(svl + lanes)
        a = rng.uniform(-1, 1, lanes).astype(precision.dtype)
        b = rng.uniform(-1, 1, lanes).astype(precision.dtype)
        acc = np.zeros((lanes, lanes), dtype=precision.accum_dtype)
        expected = rank1_oracle(acc, a.astype(acc.dtype), b.astype(acc.dtype))
        fmopa(acc, a, b)
        assert np.array_equal(acc, expected)

    def test_deterministic(self):
        rng = np.random.default_rng(0)
        a = rng.uniform(-1, 1, 8)
        b = rng.uniform(-1, 1, 8)
        accs = [fmopa(np.zeros((8, 8)), a, b) for _ in range(3)]
        assert accs[0].tobytes() == accs[1].tobytes() == accs[2].tobytes()


class TestZip:
    def test_interleave_definition(self):
        v0 = np.array([10.0, 11.0, 12.0, 13.0])
        v1 = np.array([20.0, 21.0, 22.0, 23.0])
        assert zip_lower(v0, v1).tolist() == [10.0, 20.0, 11.0, 21.0]
        assert zip_upper(v0, v1).tolist() == [12.0, 22.0, 13.0, 23.0]

    def test_self_zip_duplicates(self):
        v = np.array([1.0, 2.0, 3.0, 4.0])
        assert zip_lower(v, v).tolist() == [1.0, 1.0, 2.0, 2.0]

    def test_deinterleave_recovers_input(self):
        rng = np.random.default_rng(1)
        v0 = rng.uniform(-1, 1, 16)
        v1 = rng.uniform(-1, 1, 16)
        lo, hi = zip_lower(v0, v1), zip_upper(v0, v1)
        assert np.array_equal(np.concatenate([lo[0::2], hi[0::2]]), v0)
        assert np.array_equal(np.concatenate([lo[1::2], hi[1::2]]), v1)

    def test_length_mismatch(self):
        with pytest.raises(ValueError, match="mismatch"):
            zip_lower(np.zeros(4), np.zeros(6))

    def test_odd_length(self):
        with pytest.raises(ValueError, match="even"):
            zip_upper(np.zeros(3), np.zeros(3))


class TestFmopa2Way:
    def test_worked_example(self):
        # cntf=2: even lanes give [[5,7],[15,21]], odd lanes [[12,16],[24,32]]
        acc = np.zeros((2, 2), dtype=np.float32)
        h0 = np.array([1, 2, 3, 4], dtype=np.float16)
        h1 = np.array([5, 6, 7, 8], dtype=np.float16)
        fmopa_2way_fp16(acc, h0, h1)
        assert acc.tolist() == [[17.0, 23.0], [39.0, 53.0]]

    def test_zero_pair_is_identity(self):
        rng = np.random.default_rng(2)
        acc = rng.uniform(-1, 1, (4, 4)).astype(np.float32)
        before = acc.copy()
        fmopa_2way_fp16(acc, rng.uniform(-1, 1, 8).astype(np.float16), np.zeros(8, np.float16))
        assert np.array_equal(acc, before)

    def test_zero_odd_lanes_reduce_to_plain_fmopa(self):
        rng = np.random.default_rng(3)
        h0 = rng.uniform(-1, 1, 8).astype(np.float16)
        h1 = rng.uniform(-1, 1, 8).astype(np.float16)
        h0[1::2] = 0
        h1[1::2] = 0
        acc = np.zeros((4, 4), dtype=np.float32)
        fmopa_2way_fp16(acc, h0, h1)
        expected = np.zeros((4, 4), dtype=np.float32)
        fmopa(expected, h0[0::2].astype(np.float32), h1[0::2].astype(np.float32))
        assert np.array_equal(acc, expected)

    def test_rejects_non_fp16(self):
        with pytest.raises(ValueError, match="float16"):
            fmopa_2way_fp16(np.zeros((2, 2), np.float32), np.zeros(4, np.float32), np.zeros(4, np.float16))

    def test_rejects_wrong_lane_count(self):
        with pytest.raises(ValueError, match="lanes"):
            fmopa_2way_fp16(np.zeros((2, 2), np.float32), np.zeros(6, np.float16), np.zeros(6, np.float16))

    @settings(max_examples=60, deadline=None)
    @given(cnth=st.sampled_from([8, 16, 32, 64]), seed=st.integers(0, 2**32 - 1))
    def test_equals_composed_widen_then_fmopa(self, cnth, seed):
        rng = np.random.default_rng(seed)
        h0 = rng.uniform(-2, 2, cnth).astype(np.float16)
        h1 = rng.uniform(-2, 2, cnth).astype(np.float16)
        start = rng.uniform(-2, 2, (cnth // 2, cnth // 2)).astype(np.float32)
        via_2way = fmopa_2way_fp16(start.copy(), h0, h1)
        composed = start.copy()
        fmopa(composed, h0[0::2].astype(np.float32), h1[0::2].astype(np.float32))
        fmopa(composed, h0[1::2].astype(np.float32), h1[1::2].astype(np.float32))
        assert via_2way.tobytes() == composed.tobytes()


class TestTileLoadStore:
    def test_full_tile_copy(self):
        c = np.arange(24, dtype=np.float64).reshape(4, 6)
        acc = np.zeros((3, 3))
        load_tile(acc, c, 1, 2, 3)
        assert np.array_equal(acc, c[1:4, 2:5])
        acc += 1
        store_tile(acc, c, 1, 2, 3)
        assert np.array_equal(c[1:4, 2:5], acc)

    def test_boundary_guard_rows(self):
        c = np.ones((5, 4))
        acc = np.full((4, 4), 7.0)
        load_tile(acc, c, 4, 0, 1)
        assert np.array_equal(acc[0], c[4])
        assert np.all(acc[1:] == 0)  # untouched rows zeroed on load
        acc[:] = 3.0
        store_tile(acc, c, 4, 0, 1)
        assert np.all(c[4] == 3.0)
        assert np.all(c[:4] == 1.0)  # rows beyond valid_rows never written

    def test_load_store_is_identity(self):
        rng = np.random.default_rng(4)
        c = rng.uniform(-1, 1, (6, 8))
        before = c.copy()
        acc = np.zeros((4, 4))
        load_tile(acc, c, 2, 4, 4)
        store_tile(acc, c, 2, 4, 4)
        assert np.array_equal(c, before)

    def test_column_window_out_of_bounds(self):
        with pytest.raises(ValueError, match="column window"):
            load_tile(np.zeros((4, 4)), np.zeros((4, 5)), 0, 2, 4)

    def test_dtype_mismatch(self):
        with pytest.raises(ValueError, match="dtype"):
            load_tile(np.zeros((2, 2), np.float32), np.zeros((2, 2), np.float64), 0, 0, 2)
