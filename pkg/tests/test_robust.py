"""Moving-block estimator: oracle equivalence, equivariance, edge cases."""

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from uncreg.core import ConfigError, Dataset, RankDeficiencyError
from uncreg.ols import ols_fit
from uncreg.robust import default_block_length, predict, robust_lse_fit

from _oracles import brute_robust_fit


def random_dataset(rng, t, q):
    x = rng.standard_normal((t, q)) + rng.uniform(-2, 2, size=q)
    beta = rng.uniform(-3, 3, size=q)
    y = x @ beta + rng.uniform(-5, 5) + rng.standard_normal(t) * rng.uniform(0.2, 3.0)
    return Dataset(x, y)


# ---------------------------------------------------------------------------
# oracle equivalence: rolling scan vs direct enumeration
# ---------------------------------------------------------------------------

def test_matches_brute_force_enumeration():
    # the production scan runs on rolling prefix sums; the oracle refits
    # every block from scratch by SVD; they must agree to 1e-10
    rng = np.random.default_rng(20_250_101)
    for _ in range(100):
        t = int(rng.integers(8, 61))
        q = int(rng.integers(1, 4))
        data = random_dataset(rng, t, q)
        n = int(rng.integers(q + 2, t + 1))
        n1 = int(rng.integers(2, n + 1))

        fit = robust_lse_fit(data, n=n, n1=n1)
        ref = brute_robust_fit(data.x, data.y, n, n1)

        assert fit.k_hat == ref["k_hat"]
        assert_allclose(fit.beta_hat, ref["beta_hat"], rtol=0, atol=1e-10)
        assert_allclose(fit.envelope.mu_lo, ref["mu_lo"], rtol=0, atol=1e-10)
        assert_allclose(fit.envelope.mu_hi, ref["mu_hi"], rtol=0, atol=1e-10)
        assert_allclose(fit.envelope.sigma2_lo, ref["sigma2_lo"], rtol=0, atol=1e-10)
        assert_allclose(fit.envelope.sigma2_hi, ref["sigma2_hi"], rtol=0, atol=1e-10)
        assert_allclose(fit.block_means, ref["block_means"], rtol=0, atol=1e-10)


def test_rolling_scan_matches_per_block_refit():
    # diagnostics expose every block the scan fit; each must equal an
    # independent OLS on that block alone
    rng = np.random.default_rng(77)
    data = random_dataset(rng, 120, 2)
    fit = robust_lse_fit(data, n=30, n1=10, diagnostics=True)
    assert fit.diagnostics is not None
    assert len(fit.diagnostics) == fit.m - len(fit.skipped_blocks)
    for d in fit.diagnostics:
        block = ols_fit(data.block(d.l - 1, fit.n))
        assert_allclose(d.beta_l, block.beta, rtol=0, atol=1e-10)
        assert_allclose(d.mu_l, block.mu, rtol=0, atol=1e-10)
        assert_allclose(d.sigma2_l, block.mse, rtol=0, atol=1e-10)


def test_winning_block_stats_match_its_own_ols():
    rng = np.random.default_rng(78)
    data = random_dataset(rng, 200, 1)
    fit = robust_lse_fit(data, n=50, n1=10)
    block = ols_fit(data.block(fit.k_hat - 1, 50))
    assert_allclose(fit.beta_hat, block.beta, rtol=0, atol=1e-10)
    assert_allclose(fit.envelope.sigma2_lo, block.mse, rtol=0, atol=1e-10)
    # for the winning block the mean of w equals its OLS intercept
    assert_allclose(fit.block_means[fit.k_hat - 1], block.mu, rtol=0, atol=1e-10)


# ---------------------------------------------------------------------------
# structural properties
# ---------------------------------------------------------------------------

def test_noiseless_is_exact():
    x = np.linspace(1.0, 4.0, 100)
    y = x + 2.0
    fit = robust_lse_fit(Dataset(x, y), n=20, n1=10)
    assert_allclose(fit.beta_hat[0], 1.0, rtol=0, atol=1e-10)
    assert_allclose(fit.envelope.mu_lo, 2.0, rtol=0, atol=1e-10)
    assert_allclose(fit.envelope.mu_hi, 2.0, rtol=0, atol=1e-10)
    assert fit.envelope.sigma2_lo <= 1e-20
    assert fit.envelope.sigma2_hi <= 1e-20


def test_sigma2_ties_break_to_earliest_block():
    # noiseless data: every block attains sigma2 = 0, so the argmin ties
    x = np.arange(1.0, 41.0)
    fit = robust_lse_fit(Dataset(x, 3.0 * x - 1.0), n=10, n1=5)
    assert fit.k_hat == 1


def test_envelope_brackets_block_means():
    rng = np.random.default_rng(79)
    data = random_dataset(rng, 150, 1)
    fit = robust_lse_fit(data, n=40, n1=8)
    assert fit.m == 150 - 40 + 1
    assert fit.envelope.mu_lo == fit.block_means.min()
    assert fit.envelope.mu_hi == fit.block_means.max()
    assert fit.envelope.mu_lo <= fit.block_means[fit.k_hat - 1] <= fit.envelope.mu_hi


def test_variance_floor_is_minimum_over_blocks():
    # sigma2_lo is the winner's mean square, no other block is lower
    rng = np.random.default_rng(80)
    data = random_dataset(rng, 90, 1)
    fit = robust_lse_fit(data, n=25, n1=5, diagnostics=True)
    sigmas = [d.sigma2_l for d in fit.diagnostics]
    assert_allclose(fit.envelope.sigma2_lo, min(sigmas), rtol=0, atol=1e-14)


def test_variance_floor_below_any_aligned_group():
    # with group boundaries at multiples of n, the aligned blocks are a
    # subset of all blocks, so the floor can only be lower
    rng = np.random.default_rng(81)
    t, n = 200, 50
    x = np.linspace(0.0, 2.0, t)
    scales = np.repeat([0.3, 1.0, 2.0, 0.6], n)
    y = 1.5 * x + rng.standard_normal(t) * scales
    data = Dataset(x, y)
    fit = robust_lse_fit(data, n=n, n1=10)
    aligned = [ols_fit(data.block(s, n)).mse for s in range(0, t, n)]
    assert fit.envelope.sigma2_lo <= min(aligned) + 1e-12


def test_shift_equivariance():
    rng = np.random.default_rng(82)
    data = random_dataset(rng, 100, 2)
    base = robust_lse_fit(data, n=30, n1=10)
    c = 4.25
    shifted = robust_lse_fit(Dataset(data.x, data.y + c), n=30, n1=10)
    assert shifted.k_hat == base.k_hat
    assert_allclose(shifted.beta_hat, base.beta_hat, rtol=0, atol=1e-10)
    assert_allclose(shifted.envelope.mu_lo, base.envelope.mu_lo + c, rtol=0, atol=1e-10)
    assert_allclose(shifted.envelope.mu_hi, base.envelope.mu_hi + c, rtol=0, atol=1e-10)
    assert_allclose(shifted.envelope.sigma2_lo, base.envelope.sigma2_lo, rtol=1e-10)
    assert_allclose(shifted.envelope.sigma2_hi, base.envelope.sigma2_hi, rtol=1e-10)


def test_covariate_scale_equivariance():
    rng = np.random.default_rng(83)
    data = random_dataset(rng, 100, 1)
    base = robust_lse_fit(data, n=30, n1=10)
    a = 8.0  # power of two: the rescale is exact in floating point
    scaled = robust_lse_fit(Dataset(data.x * a, data.y), n=30, n1=10)
    assert scaled.k_hat == base.k_hat
    assert_allclose(scaled.beta_hat, base.beta_hat / a, rtol=1e-10)
    assert_allclose(scaled.envelope.mu_lo, base.envelope.mu_lo, rtol=0, atol=1e-10)
    assert_allclose(scaled.envelope.mu_hi, base.envelope.mu_hi, rtol=0, atol=1e-10)
    assert_allclose(scaled.envelope.sigma2_lo, base.envelope.sigma2_lo, rtol=1e-10)
    assert_allclose(scaled.envelope.sigma2_hi, base.envelope.sigma2_hi, rtol=1e-10)


def test_consistency_trend_under_growing_t():
    # median |beta_hat - beta| over a modest replication set must not
    # increase along a doubling T grid (one small inversion tolerated)
    rng = np.random.default_rng(84)
    t_grid = (100, 200, 400, 800)
    medians = []
    for t in t_grid:
        errs = []
        for _ in range(30):
            x = 1.0 + 0.01 * np.arange(1, t + 1)
            noise = rng.standard_normal(t)
            noise[int(0.9 * t):] *= 10.0
            y = 2.0 * x + noise
            fit = robust_lse_fit(Dataset(x, y), n=max(4, int(0.85 * t)), n1=20)
            errs.append(abs(fit.beta_hat[0] - 2.0))
        medians.append(float(np.median(errs)))
    inversions = [
        (a, b) for a, b in zip(medians, medians[1:]) if b > a * 1.10
    ]
    assert len(inversions) <= 1, medians


# ---------------------------------------------------------------------------
# rank handling
# ---------------------------------------------------------------------------

def test_skips_rank_deficient_blocks():
    # x constant on a long run: blocks inside the run cannot identify a slope
    t, n = 60, 10
    x = np.ones(t)
    x[30:] = np.arange(1.0, 31.0)
    rng = np.random.default_rng(85)
    y = x + rng.standard_normal(t) * 0.1
    fit = robust_lse_fit(Dataset(x, y), n=n, n1=5)
    assert fit.skipped_blocks  # some blocks sit entirely on the flat run
    assert all(1 <= l <= fit.m for l in fit.skipped_blocks)
    assert fit.k_hat not in fit.skipped_blocks
    # every block fully inside the flat region must be skipped
    for l in range(1, 30 - n + 2):
        assert l in fit.skipped_blocks


def test_all_blocks_rank_deficient():
    with pytest.raises(RankDeficiencyError, match="every block"):
        robust_lse_fit(Dataset(np.ones(30), np.arange(30.0)), n=10, n1=5)


# ---------------------------------------------------------------------------
# parameter handling
# ---------------------------------------------------------------------------

def test_parameter_validation_messages():
    data = Dataset(np.arange(20.0), np.arange(20.0))
    with pytest.raises(ConfigError, match=r"q \+ 2 = 3 <= n <= T = 20, got n=25"):
        robust_lse_fit(data, n=25)
    with pytest.raises(ConfigError, match="got n=2"):
        robust_lse_fit(data, n=2)
    with pytest.raises(ConfigError, match="2 <= n1 <= n = 10, got n1=11"):
        robust_lse_fit(data, n=10, n1=11)
    with pytest.raises(ConfigError, match="got n1=1"):
        robust_lse_fit(data, n=10, n1=1)


def test_defaults():
    assert default_block_length(3200, 1) == 400
    assert default_block_length(20, 1) == 3   # clamped up to q + 2
    assert default_block_length(10, 3) == 5
    rng = np.random.default_rng(86)
    data = random_dataset(rng, 400, 1)
    fit = robust_lse_fit(data)
    assert fit.n == 50 and fit.n1 == 20
    small = robust_lse_fit(random_dataset(rng, 40, 1))
    assert small.n == 5 and small.n1 == 5  # n1 default clamps to n


def test_single_block_degenerate():
    rng = np.random.default_rng(87)
    data = random_dataset(rng, 30, 1)
    fit = robust_lse_fit(data, n=30, n1=10)
    assert fit.m == 1 and fit.k_hat == 1
    assert fit.envelope.mu_lo == fit.envelope.mu_hi
    whole = ols_fit(data)
    assert_allclose(fit.beta_hat, whole.beta, rtol=0, atol=1e-12)


def test_remainder_window_is_self_centered():
    # T = 25, n1 = 10: windows are 10, 10, and a remainder of 5; the
    # centered scatter feeding sigma2_hi must treat the remainder alone
    rng = np.random.default_rng(88)
    t, n, n1 = 25, 12, 10
    data = random_dataset(rng, t, 1)
    fit = robust_lse_fit(data, n=n, n1=n1)
    ref = brute_robust_fit(data.x, data.y, n, n1)
    assert_allclose(fit.envelope.sigma2_hi, ref["sigma2_hi"], rtol=0, atol=1e-12)


def test_predict_rules():
    rng = np.random.default_rng(89)
    data = random_dataset(rng, 80, 1)
    fit = robust_lse_fit(data, n=20, n1=10)
    xq = np.array([[1.0], [2.0]])
    env = fit.envelope
    b = fit.beta_hat[0]
    assert_allclose(predict(fit, xq, "lower"), xq[:, 0] * b + env.mu_lo, rtol=1e-14)
    assert_allclose(predict(fit, xq, "upper"), xq[:, 0] * b + env.mu_hi, rtol=1e-14)
    assert_allclose(
        predict(fit, xq, "midpoint"),
        xq[:, 0] * b + 0.5 * (env.mu_lo + env.mu_hi),
        rtol=1e-14,
    )
    assert_allclose(
        fit.predict(xq), xq[:, 0] * b + fit.block_means[fit.k_hat - 1], rtol=1e-14
    )
    with pytest.raises(ConfigError, match="unknown mu_rule"):
        predict(fit, xq, "nope")
    with pytest.raises(ConfigError, match="columns"):
        predict(fit, np.ones((2, 3)))


def test_fit_outputs_are_immutable():
    rng = np.random.default_rng(90)
    fit = robust_lse_fit(random_dataset(rng, 50, 1), n=10, n1=5)
    with pytest.raises(ValueError):
        fit.beta_hat[0] = 0.0
    with pytest.raises(ValueError):
        fit.block_means[0] = 0.0
