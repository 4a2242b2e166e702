import math

import numpy as np
import pytest

from goat_opt.environment import (
    SYNTHETIC_DEFAULT,
    BivariateLogNormal,
    HoldRecord,
    RectRegion,
    cdf_rect_montecarlo,
    cdf_rect_riemann,
    fit_lognormal,
    pdf,
    qq_points,
    read_holds_csv,
    support_region,
    synthetic_holds,
    write_holds_csv,
)
from goat_opt.errors import DegenerateVariance, NonPositiveValue, TooFewRecords

MODEL = BivariateLogNormal((4.2, 3.6), (0.5, 0.6), 0.4)


def _records(model, n, seed):
    s = model.sample(n, seed)
    return [HoldRecord(w, w, h) for w, h in s]


def test_model_invariants():
    with pytest.raises(DegenerateVariance):
        BivariateLogNormal((0, 0), (0.0, 1.0), 0.0)
    with pytest.raises(DegenerateVariance):
        BivariateLogNormal((0, 0), (1.0, 1.0), 1.0)
    with pytest.raises(ValueError):
        RectRegion(2.0, 1.0, 0.0, 1.0)


@pytest.mark.parametrize("n, tol", [(10_000, 0.02), (100_000, 0.007)])
def test_fit_round_trip_default_seed(n, tol):
    fit = fit_lognormal(_records(MODEL, n, seed=0), width_from="width")
    assert np.allclose(fit.mu, MODEL.mu, rtol=tol)
    assert np.allclose(fit.sigma, MODEL.sigma, rtol=tol)
    assert fit.rho == pytest.approx(MODEL.rho, rel=tol)


@pytest.mark.parametrize("seed", [1, 2, 3, 7])
def test_fit_within_sampling_error(seed):
    # 4 standard errors: sd/sqrt(n), sd/sqrt(2n) and (1 - rho^2)/sqrt(n)
    n = 10_000
    fit = fit_lognormal(_records(MODEL, n, seed=seed), width_from="width")
    sig = np.array(MODEL.sigma)
    assert np.all(np.abs(np.subtract(fit.mu, MODEL.mu)) < 4 * sig / math.sqrt(n))
    assert np.all(np.abs(np.subtract(fit.sigma, sig)) < 4 * sig / math.sqrt(2 * n))
    assert abs(fit.rho - MODEL.rho) < 4 * (1 - MODEL.rho**2) / math.sqrt(n)


def test_fit_matches_log_moments():
    recs = _records(MODEL, 50, seed=1)
    x = np.log([[r.width, r.height] for r in recs])
    fit = fit_lognormal(recs, width_from="width")
    assert np.allclose(fit.mu, x.mean(axis=0), atol=1e-12)
    assert np.allclose(fit.sigma, x.std(axis=0), atol=1e-12)
    assert fit.rho == pytest.approx(np.corrcoef(x.T)[0, 1], abs=1e-12)


def test_both_orientations_doubles_width_observations():
    recs = [HoldRecord(10.0, 40.0, 5.0), HoldRecord(20.0, 30.0, 6.0), HoldRecord(15.0, 25.0, 7.0)]
    fit = fit_lognormal(recs, width_from="both-orientations")
    assert fit.mu[0] == pytest.approx(np.mean(np.log([10, 20, 15, 40, 30, 25])), abs=1e-12)


def test_fit_errors():
    with pytest.raises(TooFewRecords):
        fit_lognormal([HoldRecord(1, 1, 1)] * 2)
    with pytest.raises(DegenerateVariance):
        fit_lognormal([HoldRecord(3, 3, 3)] * 5)
    with pytest.raises((NonPositiveValue, ValueError)):
        fit_lognormal([HoldRecord(1, 2, 3), HoldRecord(2, 3, 4), HoldRecord(1, 1, -1)])


def test_synthetic_holds_follow_model():
    fit = fit_lognormal(synthetic_holds(20_000, seed=3))
    assert np.allclose(fit.mu, SYNTHETIC_DEFAULT.mu, rtol=0.02)
    assert np.allclose(fit.sigma, SYNTHETIC_DEFAULT.sigma, rtol=0.03)
    assert fit.rho == pytest.approx(SYNTHETIC_DEFAULT.rho, rel=0.05)


def test_pdf_support_and_closed_form():
    assert pdf(MODEL, 0.0, 10.0) == 0.0
    assert pdf(MODEL, -5.0, 10.0) == 0.0
    (m1, m2), (s1, s2), r = MODEL.mu, MODEL.sigma, MODEL.rho
    expect = 1.0 / (2 * math.pi * s1 * s2 * math.sqrt(1 - r * r) * math.exp(m1 + m2))
    assert pdf(MODEL, math.exp(m1), math.exp(m2)) == pytest.approx(expect, abs=1e-12)


def test_pdf_matches_scipy():
    from scipy import stats

    w, h = 55.0, 40.0
    mvn = stats.multivariate_normal(MODEL.mu, MODEL.cov)
    assert pdf(MODEL, w, h) == pytest.approx(mvn.pdf([math.log(w), math.log(h)]) / (w * h), rel=1e-12)


def test_pdf_normalized():
    assert cdf_rect_riemann(MODEL, support_region(MODEL, 8.0), 4_000_000) == pytest.approx(1.0, abs=1e-3)


def test_riemann_empty_and_total():
    assert cdf_rect_riemann(MODEL, RectRegion(50, 50, 0, 100)) == 0.0
    assert cdf_rect_riemann(MODEL, support_region(MODEL)) == pytest.approx(1.0, abs=0.01)
    assert cdf_rect_riemann(SYNTHETIC_DEFAULT, support_region(SYNTHETIC_DEFAULT, 10.0), 1_000_000) == pytest.approx(1.0, abs=0.01)


def test_riemann_monotone_and_refining():
    base = RectRegion(40.0, 90.0, 20.0, 60.0)
    big = RectRegion(35.0, 95.0, 20.0, 70.0)
    assert cdf_rect_riemann(MODEL, big) >= cdf_rect_riemann(MODEL, base)
    vals = [cdf_rect_riemann(MODEL, base, g) for g in (250, 1000, 4000, 16000)]
    diffs = np.abs(np.diff(vals))
    assert np.all(diffs[1:] < diffs[:-1])


def test_riemann_vs_montecarlo():
    rng = np.random.default_rng(11)
    for _ in range(5):
        w0, h0 = rng.uniform(10, 80), rng.uniform(5, 40)
        reg = RectRegion(w0, w0 + rng.uniform(5, 100), h0, h0 + rng.uniform(5, 80))
        assert abs(cdf_rect_riemann(MODEL, reg) - cdf_rect_montecarlo(MODEL, reg, 200_000, seed=5)) < 0.01


def test_montecarlo_properties():
    full = support_region(MODEL, 10.0)
    p = cdf_rect_montecarlo(MODEL, full, 100_000, seed=2)
    assert p == pytest.approx(1.0, abs=3 * math.sqrt(0.25 / 100_000))
    reg = RectRegion(40, 90, 20, 60)
    assert cdf_rect_montecarlo(MODEL, reg, 5000, 9) == cdf_rect_montecarlo(MODEL, reg, 5000, 9)
    a = cdf_rect_montecarlo(MODEL, RectRegion(40, 60, 20, 60), 100_000, 4)
    b = cdf_rect_montecarlo(MODEL, RectRegion(60, 90, 20, 60), 100_000, 4)
    ab = cdf_rect_montecarlo(MODEL, reg, 100_000, 4)
    assert abs(a + b - ab) < 4 * math.sqrt(ab * (1 - ab) / 100_000) + 1e-12
    with pytest.raises(ValueError):
        cdf_rect_montecarlo(MODEL, reg, 10, 0)


def test_qq_points():
    x = np.exp(np.random.default_rng(0).normal(3.0, 0.5, 5000))
    q = qq_points(x)
    assert q.shape == (5000, 2)
    assert np.corrcoef(q.T)[0, 1] ** 2 > 0.99
    assert np.all(np.diff(q[:, 1]) >= 0)
    assert np.all(qq_points([4.0] * 5)[:, 1] == math.log(4.0))
    assert len(qq_points([1.0, 2.0, 3.0])) == 3
    with pytest.raises(TooFewRecords):
        qq_points([1.0, 2.0])


def test_csv_round_trip(tmp_path):
    recs = synthetic_holds(20, seed=1)
    p = tmp_path / "holds.csv"
    write_holds_csv(p, recs)
    assert read_holds_csv(p) == recs


def test_csv_bad_row_reports_row(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("width_mm,length_mm,height_mm\n1,2,3\n4,x,6\n")
    with pytest.raises(ValueError, match="row 2"):
        read_holds_csv(p)


def test_model_json_round_trip(tmp_path):
    MODEL.save(tmp_path / "m.json")
    assert BivariateLogNormal.load(tmp_path / "m.json") == MODEL
