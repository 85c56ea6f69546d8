"""Acceptance battery: one test per release gate.

Heavy replication tables are built once per module in fixtures; every test
finishes by printing a single `criterion N: PASS` line with the measured
numbers, so the run log tells the whole story even when nothing fails.
"""

import math
import os
import time
from pathlib import Path

import numpy as np
import pytest

from _oracles import brute_robust_fit
from uncreg.bench import DEFAULT_F_CRIT, ExperimentSpec, run_experiment, run_sp500
from uncreg.core import Dataset, SeededRng
from uncreg.gexp import (
    PAYOFF_NAMES,
    GexpProblem,
    builtin_payoff,
    gexp_dp,
    gexp_mc_lower_bound,
    gexp_pde,
)
from uncreg.ols import ols_fit
from uncreg.robust import robust_lse_fit

REPS = 500

# Reference values each table must land on; the tolerance band for every
# gate is stated where the gate is asserted.
T1_BETA = {400: 0.9729, 800: 0.9820, 1600: 0.9994, 3200: 0.9916}
T1_MU = {
    400: (1.7479, 3.2705),
    800: (0.8607, 3.9908),
    1600: (0.4028, 4.5665),
    3200: (0.0730, 4.9132),
}
T1_SIGMA = {
    400: (0.3742, 0.7129),
    800: (0.2703, 0.8399),
    1600: (0.1861, 0.9164),
    3200: (0.1427, 0.9776),
}
T2_BETA = {60: 0.9877, 80: 0.9950, 160: 1.0028, 200: 1.0016}
T3_LSE_MSE = {1: 0.2075, 2: 0.3459, 3: 0.5733, 4: 0.6875, 5: 0.6970, 6: 0.7033}
T3_RLSE_MSE = {1: 0.0228, 2: 0.0237, 3: 0.0405, 4: 0.0547, 5: 0.1060, 6: 0.1667}
HETERO_TRUTH = (0.1304, 0.7165)
HETERO_REF = (0.1267, 0.7466)


@pytest.fixture
def announce(capsys):
    def _announce(line):
        with capsys.disabled():
            print(line, flush=True)

    return _announce


def _timed_run(spec):
    start = time.perf_counter()
    report = run_experiment(spec)
    return report, time.perf_counter() - start


@pytest.fixture(scope="module")
def table1():
    return _timed_run(ExperimentSpec(design="table1", replications=REPS))


@pytest.fixture(scope="module")
def table2():
    return _timed_run(ExperimentSpec(design="table2", replications=REPS))


@pytest.fixture(scope="module")
def scenarios():
    return _timed_run(ExperimentSpec(design="scenarios", replications=REPS))


@pytest.fixture(scope="module")
def scenarios_large_t():
    return _timed_run(ExperimentSpec(design="scenarios_large_t", replications=REPS))


@pytest.fixture(scope="module")
def hetero():
    return _timed_run(
        ExperimentSpec(design="hetero", replications=REPS, t_values=(2000,))
    )


def _by_param(report, key):
    return {cell["params"][key]: cell["stats"] for cell in report.cells}


# ---------------------------------------------------------------------------
# 1. grouped design, T sweep: slope and envelope means, runtime bound
# ---------------------------------------------------------------------------

def test_criterion_1_table1(table1, announce):
    report, elapsed = table1
    stats = _by_param(report, "t")
    assert sorted(stats) == sorted(T1_BETA)

    beta_dev = envl_dev = 0.0
    for t, ref_beta in T1_BETA.items():
        rlse = stats[t]["rlse"]
        beta_dev = max(beta_dev, abs(rlse["beta_mean"] - ref_beta))
        assert abs(rlse["beta_mean"] - ref_beta) <= 0.05, (t, rlse["beta_mean"])
        pairs = (
            (rlse["mu_lo_mean"], T1_MU[t][0]),
            (rlse["mu_hi_mean"], T1_MU[t][1]),
            (rlse["sigma_lo_mean"], T1_SIGMA[t][0]),
            (rlse["sigma_hi_mean"], T1_SIGMA[t][1]),
        )
        for got, ref in pairs:
            envl_dev = max(envl_dev, abs(got - ref))
            assert abs(got - ref) <= 0.15, (t, got, ref)
    assert elapsed <= 600.0, f"grid took {elapsed:.1f} s"
    announce(
        f"criterion 1: PASS - T sweep beta within 0.05 (max dev {beta_dev:.4f}), "
        f"envelope means within 0.15 (max dev {envl_dev:.4f}), "
        f"runtime {elapsed:.1f} s <= 600 s"
    )


# ---------------------------------------------------------------------------
# 2. grouped design, block-length sweep at T=1600
# ---------------------------------------------------------------------------

def test_criterion_2_table2(table2, announce):
    report, _ = table2
    stats = _by_param(report, "n")
    assert sorted(stats) == sorted(T2_BETA)
    worst = 0.0
    for n, ref in T2_BETA.items():
        got = stats[n]["rlse"]["beta_mean"]
        worst = max(worst, abs(got - ref))
        assert abs(got - ref) <= 0.05, (n, got)
    announce(
        f"criterion 2: PASS - block sweep beta within 0.05 (max dev {worst:.4f})"
    )


# ---------------------------------------------------------------------------
# 3. contamination scenarios at T=200: MSE ordering, ratio, magnitudes
# ---------------------------------------------------------------------------

def test_criterion_3_scenarios(scenarios, announce):
    report, _ = scenarios
    stats = _by_param(report, "m")
    assert sorted(stats) == list(range(1, 7))

    rel_dev = 0.0
    for m in range(1, 7):
        rlse = stats[m]["rlse"]["beta_mse"]
        lse = stats[m]["lse"]["beta_mse"]
        if m >= 2:
            assert rlse < lse, (m, rlse, lse)
        for got, ref in ((rlse, T3_RLSE_MSE[m]), (lse, T3_LSE_MSE[m])):
            rel_dev = max(rel_dev, abs(got - ref) / ref)
            assert abs(got - ref) <= 0.40 * ref, (m, got, ref)
    ratio = stats[6]["lse"]["beta_mse"] / stats[6]["rlse"]["beta_mse"]
    assert ratio >= 3.0, ratio
    announce(
        "criterion 3: PASS - robust MSE below plain MSE in scenarios 2-6, "
        f"scenario-6 ratio {ratio:.2f} >= 3, all MSEs within 40% "
        f"(max rel dev {rel_dev:.1%})"
    )


# ---------------------------------------------------------------------------
# 4. consistency in T for scenarios 1 and 4
# ---------------------------------------------------------------------------

def test_criterion_4_large_t(scenarios_large_t, announce):
    report, _ = scenarios_large_t
    worst_inv = 0.0
    for m in (1, 4):
        cells = sorted(
            (c for c in report.cells if c["params"]["m"] == m),
            key=lambda c: c["params"]["t"],
        )
        assert [c["params"]["t"] for c in cells] == [200, 400, 600, 800, 1000]
        for est in ("rlse", "lse"):
            mse = [c["stats"][est]["beta_mse"] for c in cells]
            inversions = [
                mse[i + 1] / mse[i] - 1.0
                for i in range(len(mse) - 1)
                if mse[i + 1] > mse[i]
            ]
            assert len(inversions) <= 1, (m, est, mse)
            if inversions:
                worst_inv = max(worst_inv, inversions[0])
                assert inversions[0] <= 0.10, (m, est, mse)
        if m == 4:
            for c in cells:
                assert (
                    c["stats"]["rlse"]["beta_mse"] <= c["stats"]["lse"]["beta_mse"]
                ), c["params"]
    announce(
        "criterion 4: PASS - MSE decreases along T for both estimators in "
        f"scenarios 1 and 4 (worst inversion {worst_inv:.1%}), robust <= plain "
        "at every T in scenario 4"
    )


# ---------------------------------------------------------------------------
# 5. ten-scale heteroscedastic ladder at T=2000
# ---------------------------------------------------------------------------

def test_criterion_5_hetero(hetero, announce):
    report, _ = hetero
    stats = _by_param(report, "t")[2000]
    lo = stats["rlse"]["sigma_lo_mean"]
    hi = stats["rlse"]["sigma_hi_mean"]
    for got, truth, ref in ((lo, HETERO_TRUTH[0], HETERO_REF[0]),
                            (hi, HETERO_TRUTH[1], HETERO_REF[1])):
        assert abs(got - truth) <= 0.05, (got, truth)
        assert abs(got - ref) <= 0.05, (got, ref)
    announce(
        f"criterion 5: PASS - scale envelope ({lo:.4f}, {hi:.4f}) within 0.05 "
        f"of {HETERO_TRUTH} and of {HETERO_REF}"
    )


# ---------------------------------------------------------------------------
# 6. nonlinear-expectation engine on the band (0.25, 1)
# ---------------------------------------------------------------------------

def test_criterion_6_gexp(announce):
    band = {"sigma2_lo": 0.25, "sigma2_hi": 1.0}

    def pde(name):
        return gexp_pde(GexpProblem(payoff=builtin_payoff(name), **band))

    start = time.perf_counter()
    targets = {
        "linear": (pde("linear"), 0.0, 1e-3),
        "quadratic": (pde("quadratic"), 1.0, 1e-2),
        "neg_quadratic": (pde("neg_quadratic"), -0.25, 1e-2),
    }
    for name, (got, ref, tol) in targets.items():
        assert abs(got - ref) <= tol, (name, got)
    quartic = pde("quartic")
    assert abs(quartic - 3.0) <= 0.03 * 3.0, quartic

    worst_gap = 0.0
    slowest = 0.0
    for name in PAYOFF_NAMES:
        problem = GexpProblem(payoff=builtin_payoff(name), **band)
        t0 = time.perf_counter()
        v_pde = gexp_pde(problem)
        slowest = max(slowest, time.perf_counter() - t0)
        v_dp = gexp_dp(problem)
        gap = abs(v_pde - v_dp) / max(1.0, abs(v_pde))
        worst_gap = max(worst_gap, gap)
        assert gap <= 0.02, (name, v_pde, v_dp)
        for k, sigma2 in enumerate((0.25, 0.5, 1.0)):
            mc = gexp_mc_lower_bound(problem, sigma2, 40_000, SeededRng(271828, k))
            assert mc.value <= v_pde + 3.0 * mc.stderr, (name, sigma2, mc, v_pde)
        assert time.perf_counter() - t0 <= 30.0, name
    elapsed = time.perf_counter() - start
    announce(
        "criterion 6: PASS - solver moments 0/1/-0.25/3 within stated bands "
        f"(quartic {quartic:.4f}), pde-dp gap <= 2% (max {worst_gap:.2%}), all "
        "constant-scale Monte Carlo lower bounds within 3 se, slowest payoff "
        f"{slowest:.2f} s <= 30 s (battery {elapsed:.1f} s)"
    )


# ---------------------------------------------------------------------------
# 7. equality with an independent brute-force enumeration
# ---------------------------------------------------------------------------

def test_criterion_7_oracle_equivalence(announce):
    dims = np.random.default_rng(9_442)
    worst = 0.0
    for i in range(100):
        t = int(dims.integers(8, 61))
        q = int(dims.integers(1, 4))
        n = int(dims.integers(q + 2, t + 1))
        n1 = int(dims.integers(2, n + 1))
        draw = np.random.default_rng(7_000 + i)
        x = draw.normal(size=(t, q))
        y = draw.normal(size=t) + x @ draw.normal(size=q)

        fit = robust_lse_fit(Dataset(x, y), n=n, n1=n1)
        ref = brute_robust_fit(x, y, n, n1)
        assert fit.k_hat == ref["k_hat"], (i, fit.k_hat, ref["k_hat"])
        for got, want in (
            (fit.beta_hat, ref["beta_hat"]),
            (fit.envelope.mu_lo, ref["mu_lo"]),
            (fit.envelope.mu_hi, ref["mu_hi"]),
            (fit.envelope.sigma2_lo, ref["sigma2_lo"]),
            (fit.envelope.sigma2_hi, ref["sigma2_hi"]),
        ):
            dev = float(np.max(np.abs(np.asarray(got) - np.asarray(want))))
            worst = max(worst, dev)
            assert dev <= 1e-10, (i, t, q, n, n1, dev)
    announce(
        "criterion 7: PASS - 100 random datasets (T <= 60) match the "
        f"brute-force enumeration componentwise (max |dev| {worst:.2e} <= 1e-10)"
    )


# ---------------------------------------------------------------------------
# 8. exact recovery and equivariance identities
# ---------------------------------------------------------------------------

def test_criterion_8_exact_recovery(announce):
    draw = np.random.default_rng(88)
    worst = 0.0

    def track(dev):
        nonlocal worst
        worst = max(worst, dev)
        assert dev <= 1e-10, dev

    for q in (1, 2, 3):
        beta = draw.normal(size=q) * 3.0
        intercept = float(draw.normal() * 5.0)
        x = draw.normal(size=(120, q))
        y = x @ beta + intercept
        data = Dataset(x, y)

        ofit = ols_fit(data)
        track(float(np.max(np.abs(ofit.beta - beta))))
        track(abs(ofit.mu - intercept))

        rfit = robust_lse_fit(data, n=40, n1=10)
        track(float(np.max(np.abs(rfit.beta_hat - beta))))
        track(abs(rfit.envelope.mu_lo - intercept))
        track(abs(rfit.envelope.mu_hi - intercept))

    # ols affine equivariance: y -> a*y + b maps (beta, mu) -> (a*beta, a*mu + b)
    x = draw.normal(size=(80, 2))
    y = x @ np.array([1.5, -0.5]) + 0.3 + draw.normal(size=80)
    a, b = 2.5, -1.75
    base = ols_fit(Dataset(x, y))
    moved = ols_fit(Dataset(x, a * y + b))
    track(float(np.max(np.abs(moved.beta - a * base.beta))))
    track(abs(moved.mu - (a * base.mu + b)))

    # robust shift equivariance: y + c moves only the mean envelope, by c
    rbase = robust_lse_fit(Dataset(x, y), n=30, n1=10)
    c = 4.25
    rshift = robust_lse_fit(Dataset(x, y + c), n=30, n1=10)
    track(float(np.max(np.abs(rshift.beta_hat - rbase.beta_hat))))
    track(abs(rshift.envelope.mu_lo - (rbase.envelope.mu_lo + c)))
    track(abs(rshift.envelope.mu_hi - (rbase.envelope.mu_hi + c)))
    track(abs(rshift.envelope.sigma2_lo - rbase.envelope.sigma2_lo))
    track(abs(rshift.envelope.sigma2_hi - rbase.envelope.sigma2_hi))

    # robust covariate-scale equivariance: a*x halves nothing but the slope
    s = 8.0
    rscale = robust_lse_fit(Dataset(s * x, y), n=30, n1=10)
    track(float(np.max(np.abs(rscale.beta_hat - rbase.beta_hat / s))))
    track(abs(rscale.envelope.mu_lo - rbase.envelope.mu_lo))
    track(abs(rscale.envelope.mu_hi - rbase.envelope.mu_hi))
    track(abs(rscale.envelope.sigma2_lo - rbase.envelope.sigma2_lo))
    track(abs(rscale.envelope.sigma2_hi - rbase.envelope.sigma2_hi))

    announce(
        "criterion 8: PASS - noiseless recovery and shift/scale equivariances "
        f"hold to 1e-10 (max |dev| {worst:.2e})"
    )


# ---------------------------------------------------------------------------
# 9. equity close series (conditional on the data being supplied)
# ---------------------------------------------------------------------------

def _close_series_path():
    env = os.environ.get("UNCREG_SP500_CSV")
    if env:
        return Path(env)
    bundled = Path(__file__).resolve().parents[1] / "data" / "sp500_close.csv"
    return bundled if bundled.exists() else None


def test_criterion_9_sp500(announce):
    path = _close_series_path()
    if path is None or not path.exists():
        announce(
            "criterion 9: SKIP - no close series supplied (set UNCREG_SP500_CSV "
            "or add data/sp500_close.csv); on real data the preprocessing "
            "choice is log returns over calendar windows"
        )
        pytest.skip("close series not supplied; would preprocess as log returns")

    monthly = run_sp500(str(path))
    fitted = [c for c in monthly.cells if "error" not in c]
    wins = sum(
        c["stats"]["rlse"]["f"] > c["stats"]["lse"]["f"] for c in fitted
    )
    assert monthly.config["preprocessing"] == "log-returns"
    assert wins >= 4, [c["stats"] for c in monthly.cells]

    yearly = run_sp500(
        str(path), windows=[(f"{y}-01", f"{y + 1}-01") for y in range(2000, 2021)]
    )
    summary = yearly.config["summary"]
    assert summary["rlse_significant"] > summary["lse_significant"], summary
    announce(
        f"criterion 9: PASS - data file {path.name}; moving-block F above plain "
        f"F in {wins} of {len(fitted)} monthly windows; yearly significance "
        f"(crit {DEFAULT_F_CRIT}): robust {summary['rlse_significant']} > "
        f"plain {summary['lse_significant']} of {summary['fitted']} fitted "
        "windows; preprocessing: log returns (stated in the report config)"
    )
