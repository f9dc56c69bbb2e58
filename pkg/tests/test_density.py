import math

import numpy as np
import pytest
from scipy import integrate, special, stats

from fairthresh import density as dens
from fairthresh.density import FittedDensity, KdeDensity
from fairthresh.errors import AllFitsFailed, DegenerateSampleError, FitFailure, InfiniteNLL, OutOfSupport
from fairthresh.synth import CellMixture

STD = FittedDensity("gaussian", (0.0, 1.0))


def h00_sample(n=5000, seed=0):
    mix = CellMixture((-7.0, -2.0, 1.1), (3.0, 1.5, 2.0), (0.3, 0.5, 0.2), n)
    rng = np.random.default_rng(seed)
    comp = rng.choice(3, size=n, p=mix.weights)
    return rng.normal(np.array(mix.means)[comp], np.sqrt(np.array(mix.variances))[comp])


def test_gaussian_two_point():
    d = dens.fit_gaussian([-1.0, 1.0])
    assert d.params == pytest.approx((0.0, 1.0))


def test_gaussian_degenerate():
    with pytest.raises(DegenerateSampleError):
        dens.fit_gaussian([5.0, 5.0, 5.0])


def test_gaussian_recovers_generator():
    x = np.random.default_rng(1).normal(2.0, 1.5, 5000)
    mu, sd = dens.fit_gaussian(x).params
    assert abs(mu - 2.0) < 0.1 and abs(sd - 1.5) < 0.1


def test_student_t_recovers_df():
    x = stats.t.rvs(3, size=5000, random_state=np.random.default_rng(2))
    df, loc, scale = dens.fit_student_t(x).params
    assert 2.0 <= df <= 5.0
    assert abs(loc) < 0.1 and abs(scale - 1.0) < 0.1


def test_gamma_on_negative_samples():
    x = -30.0 + np.random.default_rng(3).gamma(2.0, 1.0, 3000)
    assert x.max() < 0
    g = dens.fit_gamma_loc(x)
    assert g.params[1] < x.min()
    assert dens.mean_nll(g, x) <= dens.mean_nll(dens.fit_gaussian(x), x)


@pytest.mark.parametrize("fit", [dens.fit_student_t, dens.fit_gamma_loc])
def test_numeric_fits_need_samples(fit):
    with pytest.raises(FitFailure):
        fit([0.1, 0.5, 0.9])


def test_kde_single_bin_is_kernel():
    k = dens.fit_kde(np.zeros(7), num_bins=1, kernel_sd=0.5)
    x = np.linspace(-3, 3, 13)
    np.testing.assert_allclose(k.pdf(x), stats.norm.pdf(x, 0, 0.5), rtol=1e-12)


def test_kde_equal_bins():
    k = dens.fit_kde([0.0, 0.0, 1.0, 1.0], num_bins=2)
    np.testing.assert_allclose(k.weights, [0.5, 0.5])
    np.testing.assert_allclose(k.centers, [0.0, 1.0])


def test_kde_beats_gaussian_on_mixture():
    x = h00_sample()
    assert dens.mean_nll(dens.fit_kde(x), x) < dens.mean_nll(dens.fit_gaussian(x), x)


def test_default_bins():
    assert dens.default_num_bins(4) == 10
    assert dens.default_num_bins(2500) == 50
    assert dens.default_num_bins(10 ** 6) == 200


def test_mean_nll_analytic():
    half_log_2pi = 0.5 * math.log(2 * math.pi)
    assert dens.mean_nll(STD, [0.0]) == pytest.approx(0.91894, abs=1e-5)
    assert dens.mean_nll(STD, [0.0, 0.0, 0.0]) == pytest.approx(half_log_2pi, rel=1e-14)


def test_mean_nll_gamma_below_location():
    g = FittedDensity("gamma_loc", (2.0, 0.0, 1.0))
    with pytest.raises(InfiniteNLL):
        dens.mean_nll(g, [-1.0, 1.0])


def test_select_singleton():
    x = np.random.default_rng(4).normal(size=200)
    assert dens.select_density(x, ["gaussian"]).params == dens.fit_gaussian(x).params


def test_select_heavy_tail():
    x = stats.t.rvs(2, size=4000, random_state=np.random.default_rng(5))
    assert dens.select_density(x, ["gaussian", "student_t"]).family == "student_t"


def test_select_bimodal_kde():
    rng = np.random.default_rng(6)
    x = np.concatenate([rng.normal(-4, 0.7, 2000), rng.normal(4, 0.7, 2000)])
    assert dens.select_density(x, dens.FAMILIES).family == "kde"


def test_select_never_worse():
    x = h00_sample(2000, seed=9)
    fits = dens.fit_candidates(x, dens.FAMILIES)
    chosen = dens.best_candidate(fits)
    assert all(chosen.nll <= f.nll for f in fits if f.density is not None)


def test_all_fits_failed():
    with pytest.raises(AllFitsFailed):
        dens.select_density([1.0, 1.0, 1.0], ["gaussian", "student_t"])


def test_aliases_and_unknown_family():
    assert dens.canonical_family("Normal") == "gaussian"
    with pytest.raises(ValueError):
        dens.canonical_family("cauchy")


def test_standard_normal_values():
    assert STD.cdf(0.0) == 0.5
    assert STD.max_pdf() == pytest.approx(1 / math.sqrt(2 * math.pi), rel=1e-14)
    assert STD.max_pdf() == pytest.approx(0.39894, abs=1e-5)
    assert STD.inv_cdf(0.975) == pytest.approx(1.95996, abs=1e-5)
    assert STD.inv_cdf(0.975) == pytest.approx(special.ndtri(0.975), abs=1e-9)


def test_inv_cdf_domain():
    for p in (0.0, 1.0, -0.1):
        with pytest.raises(OutOfSupport):
            STD.inv_cdf(p)


def test_kde_cdf_normalized_and_monotone():
    k = dens.fit_kde(h00_sample(3000, seed=1))
    assert k.cdf(1e3) == pytest.approx(1.0, abs=1e-6)
    grid = np.linspace(-20, 10, 1000)
    assert np.all(np.diff(k.cdf(grid)) >= 0)


def test_kde_max_pdf_matches_dense_grid():
    k = dens.fit_kde(h00_sample(3000, seed=1))
    dense = np.linspace(k.centers.min() - 3, k.centers.max() + 3, 200001)
    assert k.max_pdf() == pytest.approx(k.pdf(dense).max(), rel=1e-4)


def test_student_t_and_gamma_max_pdf_at_mode():
    for d in (FittedDensity("student_t", (4.0, 1.0, 2.0)), FittedDensity("gamma_loc", (3.0, -2.0, 0.5))):
        lo, hi = d.quantile_range(1e-4, 1 - 1e-4)
        grid = np.linspace(lo, hi, 200001)
        assert d.max_pdf() >= d.pdf(grid).max() - 1e-12
        assert d.max_pdf() == pytest.approx(d.pdf(grid).max(), rel=1e-6)


def test_round_trip_dict():
    k = dens.fit_kde([0.0, 1.0, 3.0], num_bins=3)
    for d in (STD, FittedDensity("student_t", (3.0, 0.5, 1.0)), k):
        back = dens.density_from_dict(d.to_dict())
        np.testing.assert_allclose(back.cdf(np.linspace(-3, 3, 7)), d.cdf(np.linspace(-3, 3, 7)))


def test_kde_copies_input():
    c = np.array([0.0, 1.0])
    k = KdeDensity(c, np.array([1.0, 1.0]))
    c[0] = 9.0
    assert k.centers.tolist() == [0.0, 1.0]


def _all_densities():
    x = h00_sample(2000, seed=11)
    return [STD, FittedDensity("student_t", (3.0, -1.0, 1.5)), FittedDensity("gamma_loc", (2.5, -3.0, 1.2)),
            dens.fit_kde(x), dens.fit_gamma_loc(-x)]


@pytest.mark.parametrize("d", _all_densities(), ids=lambda d: d.family)
def test_density_invariants(d):
    lo, hi = d.quantile_range(1e-6, 1 - 1e-6)
    grid = np.linspace(lo, hi, 1000)
    assert np.all(np.diff(d.cdf(grid)) >= -1e-15)
    mass, _ = integrate.quad(lambda t: float(d.pdf(t)), lo, hi, limit=200)
    assert mass >= 1 - 1e-4
    p = np.random.default_rng(0).uniform(0.01, 0.99, 100)
    np.testing.assert_allclose(d.cdf(d.inv_cdf(p)), p, atol=1e-8)
    x = d.inv_cdf(p)
    np.testing.assert_allclose(d.inv_cdf(d.cdf(x)), x, atol=1e-8)
    h = 1e-5
    fd = (d.cdf(x + h) - d.cdf(x - h)) / (2 * h)
    np.testing.assert_allclose(fd, d.pdf(x), rtol=1e-5)
