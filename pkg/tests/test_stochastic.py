import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hetprice import BlackScholes, Heston
from hetprice.mcengine import estimate, run_chunks
from hetprice.stochastic import (
    StreamKey,
    fnv1a_64,
    normals_per_path,
    open_stream,
    simulate_block,
    simulate_path,
    simulate_paths,
)

from conftest import heston_flat
from oracles import heston_call

BS = BlackScholes(spot=100.0, rate=0.05, volatility=0.2)
KEY = StreamKey(fnv1a_64("task"), 7, 123)


def test_fnv_reference_values():
    assert fnv1a_64("") == 0xCBF29CE484222325
    assert fnv1a_64("a") == 0xAF63DC4C8601EC8C


class TestStreams:
    def test_same_key_same_draws(self):
        a = open_stream(KEY).normals(1000)
        b = open_stream(KEY).normals(1000)
        assert np.array_equal(a, b)

    def test_chunks_uncorrelated(self):
        other = StreamKey(KEY.task_id_hash, KEY.chunk_index + 1, KEY.base_seed)
        a = open_stream(KEY).normals(10**6)
        b = open_stream(other).normals(10**6)
        assert abs(np.corrcoef(a, b)[0, 1]) < 0.01

    def test_moments(self):
        z = open_stream(KEY).normals(10**6)
        assert abs(z.mean()) < 0.004
        assert abs(z.var(ddof=1) - 1) < 0.01

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 5000), st.integers(0, 300))
    def test_seek_matches_sequential_reads(self, offset, count):
        whole = open_stream(KEY).normals(offset + count)
        stream = open_stream(KEY).seek(offset)
        assert np.array_equal(stream.normals(count), whole[offset:])
        assert stream.position == offset + count

    def test_split_reads(self):
        s = open_stream(KEY)
        parts = np.concatenate([s.normals(3), s.normals(5), s.normals(1)])
        assert np.array_equal(parts, open_stream(KEY).normals(9))

    @pytest.mark.parametrize("field", ["task_id_hash", "chunk_index", "base_seed"])
    def test_key_fits_64_bits(self, field):
        kwargs = {"task_id_hash": 0, "chunk_index": 0, "base_seed": 0, field: 1 << 64}
        with pytest.raises(ValueError):
            StreamKey(**kwargs)


class TestBlackScholes:
    def test_zero_vol_is_deterministic_drift(self):
        u = BlackScholes(100.0, 0.05, 0.0)
        paths = simulate_paths(u, 2.0, 8, open_stream(KEY), 50)
        expected = 100.0 * np.exp(0.05 * 2.0 * np.arange(1, 9) / 8)
        np.testing.assert_allclose(paths, np.broadcast_to(expected, paths.shape), rtol=1e-12, atol=0)

    def test_terminal_mean_and_martingale(self):
        n = 10**6
        terminal = simulate_paths(BS, 1.0, 1, open_stream(KEY), n)[:, -1]
        se = terminal.std(ddof=1) / math.sqrt(n)
        assert abs(terminal.mean() - 100 * math.exp(0.05)) < 3 * se
        disc = math.exp(-0.05) * terminal
        assert abs(disc.mean() - 100) < 3 * disc.std(ddof=1) / math.sqrt(n)

    def test_consumption(self):
        stream = open_stream(KEY)
        simulate_paths(BS, 1.0, 12, stream, 10)
        assert stream.position == 120
        simulate_path(BS, 1.0, 12, stream)
        assert stream.position == 132

    def test_single_path_matches_batch_of_one(self):
        one = simulate_path(BS, 1.0, 5, open_stream(KEY))
        batch = simulate_paths(BS, 1.0, 5, open_stream(KEY), 1)[0]
        assert np.array_equal(one, batch)


class TestHeston:
    def test_consumption(self):
        u = heston_flat(xi=0.3).underlying
        assert normals_per_path(u, 12) == 24
        stream = open_stream(KEY)
        simulate_paths(u, 1.0, 12, stream, 10)
        assert stream.position == 240

    def test_flat_variance_matches_black_scholes(self):
        u = heston_flat(xi=0.0).underlying
        h = simulate_paths(u, 1.0, 16, open_stream(KEY), 2000)
        b = simulate_paths(BS, 1.0, 16, open_stream(KEY), 2000)
        np.testing.assert_allclose(h, b, rtol=1e-12)

    def test_truncation_keeps_sqrt_arguments_nonnegative(self, monkeypatch):
        # Feller condition badly violated, so v itself goes negative often
        u = Heston(100.0, 0.0, 0.04, 0.5, 0.04, 1.5, -0.9)
        real_sqrt = np.sqrt
        seen = []

        def checked_sqrt(x, *args, **kwargs):
            seen.append(float(np.min(x)))
            return real_sqrt(x, *args, **kwargs)

        monkeypatch.setattr(np, "sqrt", checked_sqrt)
        spots, v = simulate_paths(u, 1.0, 50, open_stream(KEY), 4000, return_variance=True)
        monkeypatch.undo()
        assert (v < 0).any()
        assert len(seen) >= 50
        assert min(seen) >= 0
        assert np.isfinite(spots).all()

    def test_blocks_reproduce_whole_batch(self):
        u = heston_flat(xi=0.3).underlying
        whole = simulate_block(u, 1.0, 8, open_stream(KEY), 100, 0, 100)
        parts = [simulate_block(u, 1.0, 8, open_stream(KEY), 100, s, 25) for s in range(0, 100, 25)]
        assert np.array_equal(whole, np.vstack(parts))

    @pytest.mark.slow
    def test_european_against_semi_analytic(self):
        task = heston_flat(xi=0.3, steps=64)
        est = estimate(run_chunks(task, 400_000))
        ref = heston_call(100.0, 100.0, 0.05, 0.04, 2.0, 0.04, 0.3, -0.7, 1.0)
        assert abs(est.price - ref) < 3 * est.ci_half_width
