import itertools
import math

import mpmath
import numpy as np
import pytest
from scipy import integrate
from scipy.stats import norm

from fastising import edgestats as es
from fastising import graph
from fastising.errors import InputError, NumericalDomainError

CIRCULANTS = [(8, [1]), (10, [1]), (12, [1]), (14, [1]), (10, [1, 2]), (12, [1, 2]), (13, [1, 3]), (14, [1, 2]), (14, [1, 2, 3])]


def _subset_degrees(n, offsets, ell):
    """Within-subset degree of every vertex, for every ell-subset of a circulant."""
    g = graph.circulant(n, offsets)
    a = np.zeros((n, n), dtype=np.int64)
    a[g.edges[:, 0], g.edges[:, 1]] = 1
    a[g.edges[:, 1], g.edges[:, 0]] = 1
    subs = np.array(list(itertools.combinations(range(n), ell)))
    x = np.zeros((len(subs), n), dtype=np.int64)
    x[np.arange(len(subs))[:, None], subs] = 1
    return g.k_nominal, x, (x @ a) * x


def _conditional_pair_cov(x, deg):
    """Mean over vertex pairs (t, h) of Cov(r_t, r_h) given both lie in the subset."""
    n = x.shape[1]
    out = []
    for t in range(n):
        for h in range(t + 1, n):
            sel = (x[:, t] == 1) & (x[:, h] == 1)
            out.append(np.cov(deg[sel, t], deg[sel, h], bias=True)[0, 1])
    return float(np.mean(out))


def _cov_formula(n, k, ell):
    theta = k / (n - 1)
    return -(ell - 1) * (n - ell) / ((n - 1) * (n - 2)) * (n - 2 * k) / (n - 2) * theta


class TestSubgraphStats:
    def test_two_vertex_subset(self):
        st = es.subgraph_stats(100, 4, 2, 0.0)
        assert st.mu_ell == pytest.approx(2 * 4 / 99, rel=1e-15)
        assert st.y_n2 == 0.0

    @pytest.mark.parametrize("k,ell", [(2, 3), (4, 5), (12, 17)])
    def test_rho_vanishes_at_half_density(self, k, ell):
        assert es.subgraph_stats(2 * k, k, ell, 0.3).rho_ell == 0.0

    def test_exhaustive_mean_n12(self):
        k, x, deg = _subset_degrees(12, [1, 2], 5)
        assert len(x) == 792
        assert deg.sum(axis=1).mean() == pytest.approx(2 * 10 * 4 / 11, abs=1e-12)
        assert es.subgraph_stats(12, k, 5, 0.0).mu_ell == pytest.approx(2 * 10 * 4 / 11, abs=1e-14)

    def test_field_formulas(self):
        n, k, ell, b = 4096, 8, 300, 0.4
        st = es.subgraph_stats(n, k, ell, b)
        theta = k / (n - 1)
        ell2 = ell * (ell - 1) / 2
        y2 = (ell - 2) / (n - 2)
        rho = (ell - 1) * (n - 2 * k) / ((n - 2) * (n - k - 1))
        assert st.sigma2_ell == pytest.approx(2 * ell2 * theta * (1 - theta) * (1 - y2), rel=1e-14)
        assert st.nu_ell == pytest.approx(theta * (1 + b * (1 - theta) * (1 - y2) * (1 - rho)), rel=1e-14)
        assert st.s_lo == 0.0 and st.s_hi == k * ell / 2
        assert st.sigma2_ell1 == pytest.approx((ell - 1) * (1 - (ell - 1) / (n - 1)) * theta * (1 - theta), rel=1e-14)

    @pytest.mark.parametrize("n,k,ell", [(10, 4, 1), (10, 4, 10), (10, 0, 3), (10, 10, 3)])
    def test_out_of_range(self, n, k, ell):
        with pytest.raises(InputError):
            es.subgraph_stats(n, k, ell, 0.1)

    @pytest.mark.parametrize("n,k", [(4096, 4), (4096, 24), (17632, 8)])
    def test_window_bounds_ordered(self, n, k):
        ell = np.arange(2, n)
        a = es.stats_arrays(n, k, ell, 0.5)
        assert np.all(a["s_lo"] <= a["s_hi"])
        assert np.all((a["rho"] > -1) & (a["rho"] < 1))
        assert np.all(a["sigma2"] >= 0)
        assert 0 <= a["theta"] <= 1


@pytest.mark.invariant
class TestHypergeometric:
    def test_full_subset_degenerate(self):
        assert es.pdm_pmf(24, 50, 50, 24) == pytest.approx(1.0, abs=1e-15)

    def test_normalised(self):
        r = np.arange(0, 9)
        assert es.pdm_pmf(r, 17, 100, 8).sum() == pytest.approx(1.0, abs=1e-12)

    def test_mean(self):
        r = np.arange(0, 5)
        assert (r * es.pdm_pmf(r, 10, 50, 4)).sum() == pytest.approx(36 / 49, abs=1e-12)

    def test_out_of_support_is_zero(self):
        assert es.pdm_pmf(5, 10, 50, 4) == 0.0
        assert es.pdm_pmf(-1, 10, 50, 4) == 0.0

    @pytest.mark.parametrize("n,k,ell", [(20, 4, 3), (50, 8, 30), (100, 24, 90), (4096, 24, 2048), (17632, 4, 9000)])
    def test_sweep_identities(self, n, k, ell):
        r = np.arange(0, k + 1)
        p = es.pdm_pmf(r, ell, n, k)
        assert abs(p.sum() - 1.0) < 1e-12
        assert abs((r * p).sum() - (ell - 1) * k / (n - 1)) < 1e-10

    def test_pe_normalised_and_mean(self):
        s = np.arange(0, 7)
        p = es.pe_pmf(s, 4, 10, 20)
        assert p.sum() == pytest.approx(1.0, abs=1e-12)
        assert (s * p).sum() == pytest.approx(6 * 20 / 45, abs=1e-12)

    def test_pe_variance_exceeds_subgraph_variance(self):
        # pe lives on s; the subgraph variance is for r = 2s
        n, k, ell = 100, 4, 10
        s = np.arange(0, 46)
        p = es.pe_pmf(s, ell, n, n * k // 2)
        var_s = (s * s * p).sum() - (s * p).sum() ** 2
        st = es.subgraph_stats(n, k, ell, 0.0)
        assert 4 * var_s > st.sigma2_ell * (1 - st.rho_ell)


@pytest.mark.invariant
class TestSmallGraphEnumeration:
    @pytest.mark.parametrize("n,offsets", CIRCULANTS)
    def test_exact_mean(self, n, offsets):
        for ell in range(2, n):
            k, _, deg = _subset_degrees(n, offsets, ell)
            r = deg.sum(axis=1)
            assert abs(r.mean() - es.subgraph_stats(n, k, ell, 0.0).mu_ell) < 1e-10

    @pytest.mark.parametrize("n,offsets", CIRCULANTS)
    def test_variance_within_15_percent(self, n, offsets):
        worst = 0.0
        for ell in range(3, n - 2):
            k, _, deg = _subset_degrees(n, offsets, ell)
            st = es.subgraph_stats(n, k, ell, 0.0)
            worst = max(worst, abs(deg.sum(axis=1).var() / (st.sigma2_ell * (1 - st.rho_ell)) - 1))
        assert worst <= 0.15

    @pytest.mark.parametrize("offsets", [[1], [1, 2]])
    def test_pair_covariance_negative_and_shrinking(self, offsets):
        for ell in (4, 6):
            covs = []
            for n in (10, 12, 14):
                k, x, deg = _subset_degrees(n, offsets, ell)
                c = _conditional_pair_cov(x, deg)
                assert n > 2 * k and c < 0
                # O(1/n): within a factor 3 of the closed form
                assert abs(c) <= 3 * abs(_cov_formula(n, k, ell))
                covs.append(abs(c))
            assert covs[0] > covs[1] > covs[2]


@pytest.mark.invariant
class TestNormalRegime:
    def test_pdm_close_to_normal(self):
        n, k, ell = 4096, 24, 2048
        st = es.subgraph_stats(n, k, ell, 0.0)
        r = np.arange(0, k + 1)
        near = r[np.abs(r - st.mu_ell1) < st.theta * math.sqrt(ell - 1)]
        assert near.size >= 1
        ratio = es.pdm_pmf(near, ell, n, k) / norm.pdf(near, st.mu_ell1, math.sqrt(st.sigma2_ell1))
        assert np.max(np.abs(ratio - 1)) <= 0.05


@pytest.mark.invariant
class TestMGF:
    def test_zero_at_origin(self):
        assert es.mgf_pdm(0.0, 10, 100, 4) == pytest.approx(0.0, abs=1e-15)

    def test_full_subset(self):
        assert es.mgf_pdm(0.7, 40, 40, 8) == pytest.approx(0.7 * 8, rel=1e-14)

    def test_against_high_precision(self):
        n, k, ell, b = 100, 4, 10, 0.3
        mpmath.mp.dps = 40
        tot = mpmath.mpf(0)
        for r in range(0, k + 1):
            tot += mpmath.binomial(k, r) * mpmath.binomial(n - 1 - k, ell - 1 - r) * mpmath.e ** (mpmath.mpf(b) * r)
        expected = float(mpmath.log(tot / mpmath.binomial(n - 1, ell - 1)))
        assert es.mgf_pdm(b, ell, n, k) == pytest.approx(expected, rel=1e-13)

    def test_nondecreasing_in_beta(self):
        vals = [es.mgf_pdm(b, 30, 200, 8) for b in np.linspace(0, 5, 40)]
        assert np.all(np.diff(vals) >= 0)


class TestEvenMGF:
    def test_beta_zero_formula(self):
        n, k, ell = 4096, 8, 3
        p_top = es.pdm_pmf(k, ell, n, k) ** ell
        p_zero = es.pdm_pmf(0, ell, n, k) ** ell
        assert es.mgf_even(0.0, ell, n, k) == pytest.approx(math.log(1 + p_top / 2 + p_zero / 2), rel=1e-12)

    def test_positive_argument_nonnegative(self):
        v = es.mgf_even(0.1, 2, 4096, 24)
        assert math.isfinite(v) and v >= 0

    def test_against_parity_restricted_convolution(self):
        n, k, ell, b = 400, 4, 3, 0.5
        p = es.pdm_pmf(np.arange(0, k + 1), ell, n, k)
        conv = np.array([1.0])
        for _ in range(ell):
            conv = np.convolve(conv, p)
        t = np.arange(conv.size)
        even = t % 2 == 0
        oracle = (np.exp(b * t[even]) * conv[even]).sum() / conv[even].sum()
        assert math.exp(es.mgf_even(b, ell, n, k)) == pytest.approx(oracle, rel=0.10)

    def test_outside_small_regime_asserts(self):
        with pytest.raises(AssertionError):
            es.mgf_even(0.1, 10, 100, 4)


@pytest.mark.invariant
class TestWindow:
    def test_beta_zero_gives_linear_g(self):
        st = es.subgraph_stats(4096, 8, 700, 0.0)
        assert es.window_terms(st, 1.3, 0.0).g_ell == 1.3 * 700

    @pytest.mark.parametrize("n,k,ell,a,b", [(4096, 8, 2, 0, 10), (4096, 8, 4000, 5, 0.005), (100, 4, 50, 1, 3), (17632, 24, 17000, 0.2, 10)])
    def test_mass_in_unit_interval(self, n, k, ell, a, b):
        w = es.window_terms(es.subgraph_stats(n, k, ell, b), a, b)
        assert 0.0 <= w.delta_Phi <= 1.0
        assert w.w_hi > w.w_lo

    @pytest.mark.filterwarnings("ignore::scipy.integrate.IntegrationWarning")
    def test_mass_matches_quadrature(self):
        n, k, ell, a, b = 4096, 8, 2048, 1.0, 0.25
        st = es.subgraph_stats(n, k, ell, b)
        w = es.window_terms(st, a, b)
        mean = 2 * st.ell2 * st.nu_ell
        sd = st.tilted_sd
        lo, hi = 2 * st.s_lo - 1, 2 * st.s_hi + 1
        val, _ = integrate.quad(lambda r: norm.pdf(r, mean, sd), lo, hi, points=[mean], epsabs=1e-15, epsrel=1e-14, limit=500)
        assert abs(w.delta_Phi - val) < 1e-12
        assert w.delta_phi == pytest.approx(norm.pdf(w.w_hi) - norm.pdf(w.w_lo), abs=1e-15)

    def test_degenerate_variance_raises(self):
        with pytest.raises(NumericalDomainError):
            es.window_arrays(50, 4, 50, 0.0, 0.1)

    def test_extreme_upper_tail_is_finite(self):
        a = es.window_arrays(4096, 8, np.array([2.0]), 0.0, 10.0)
        assert np.isfinite(a["log_dPhi"]).all()
