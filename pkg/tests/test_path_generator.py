import math

import numpy as np
import pandas as pd
import pytest
from scipy import stats
from src.drawdown_put.models import MarketState
from src.drawdown_put.path_generator import (
    INITIAL_CHUNK,
    MAX_CHUNK,
    PathPoint,
    increment_chunks,
    log_increments,
    log_price_generator,
    path_rng,
    sample_path,
)


class TestPathRng:
    def test_same_key_same_stream(self):
        """Test that (base_seed, path_index) fixes the stream"""
        a = path_rng(42, 7).standard_normal(5)
        b = path_rng(42, 7).standard_normal(5)
        np.testing.assert_array_equal(a, b)

    def test_different_index_different_stream(self):
        a = path_rng(42, 7).standard_normal(5)
        b = path_rng(42, 8).standard_normal(5)
        assert not np.array_equal(a, b)

    def test_order_independent(self):
        """Test that drawing path 3 before path 1 does not change either"""
        late = [path_rng(1, i).standard_normal(3) for i in (3, 1)]
        early = [path_rng(1, i).standard_normal(3) for i in (1, 3)]
        np.testing.assert_array_equal(late[0], early[1])
        np.testing.assert_array_equal(late[1], early[0])


class TestLogIncrements:
    def test_exact_gaussian_law(self, params):
        """Test pooled increments against N((r - sigma^2/2) dt, sigma^2 dt) at the 1e-3 level"""
        dt = 1e-3
        pooled = np.concatenate([log_increments(params, dt, path_rng(5, i), 2_000) for i in range(20)])
        mean = (params.r - 0.5 * params.sigma**2) * dt
        sd = params.sigma * math.sqrt(dt)
        assert stats.kstest(pooled, "norm", args=(mean, sd)).pvalue > 1e-3
        assert stats.normaltest(pooled).pvalue > 1e-3
        # variance: (n - 1) s^2 / sd^2 is chi-square with n - 1 degrees of freedom
        n = pooled.size
        chi2 = (n - 1) * pooled.var(ddof=1) / sd**2
        assert 1e-3 / 2 < stats.chi2.cdf(chi2, n - 1) < 1 - 1e-3 / 2

    def test_length(self, params):
        assert len(log_increments(params, 0.01, path_rng(0, 0), 17)) == 17


class TestIncrementChunks:
    def test_chunks_double(self, params):
        gen = increment_chunks(params, 1e-3, path_rng(0, 0))
        sizes = [len(next(gen)) for _ in range(8)]
        assert sizes[0] == INITIAL_CHUNK
        assert sizes[1] == 2 * INITIAL_CHUNK
        assert sizes[-1] == MAX_CHUNK

    def test_stride_sums_fine_steps(self, params):
        """Test that a stride of 4 sums the same fine increments"""
        fine = next(increment_chunks(params, 1e-4, path_rng(3, 0)))
        coarse = next(increment_chunks(params, 1e-4, path_rng(3, 0), stride=4))
        assert len(coarse) == INITIAL_CHUNK
        np.testing.assert_allclose(coarse[: INITIAL_CHUNK // 4], fine.reshape(-1, 4).sum(axis=1))


class TestLogPriceGenerator:
    def test_starts_at_state(self, params):
        gen = log_price_generator(params, MarketState(4.5, 4.6), 1e-3, base_seed=1)
        first = next(gen)
        assert isinstance(first, PathPoint)
        assert (first.t, first.x, first.x_bar) == (0.0, 4.5, 4.6)

    def test_running_max_includes_history(self, params):
        """Test that the running max never drops below the historical max"""
        gen = log_price_generator(params, MarketState(4.5, 4.6), 1e-3, base_seed=1)
        points = [next(gen) for _ in range(500)]
        assert all(p.x_bar >= 4.6 for p in points)
        assert all(p.x <= p.x_bar for p in points)
        assert all(b.x_bar == max(a.x_bar, b.x) for a, b in zip(points, points[1:]))

    def test_time_grid(self, params):
        gen = log_price_generator(params, MarketState(4.5, 4.5), 0.01, base_seed=1)
        points = [next(gen) for _ in range(4)]
        assert [p.t for p in points] == pytest.approx([0.0, 0.01, 0.02, 0.03])


class TestSamplePath:
    def test_returns_dataframe(self, params):
        frame = sample_path(params, MarketState(4.5, 4.6), 1e-3, n_steps=100, base_seed=9)
        assert isinstance(frame, pd.DataFrame)
        assert list(frame.columns) == ["t", "x", "x_bar", "drawdown"]
        assert len(frame) == 101

    def test_drawdown_column(self, params):
        frame = sample_path(params, MarketState(4.5, 4.6), 1e-3, n_steps=50, base_seed=9)
        assert (frame["drawdown"] >= 0).all()
        assert frame["drawdown"].iloc[0] == pytest.approx(0.1)

    def test_deterministic(self, params):
        a = sample_path(params, MarketState(4.5, 4.6), 1e-3, n_steps=50, base_seed=9, path_index=2)
        b = sample_path(params, MarketState(4.5, 4.6), 1e-3, n_steps=50, base_seed=9, path_index=2)
        pd.testing.assert_frame_equal(a, b)
