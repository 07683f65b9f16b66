import numpy as np
import pytest

from fastising import bench, exact, moments as mo, partition as pt

GRID = bench.GridSpec.default()
CONFIGS = [(4096, 4), (4096, 8), (4096, 24), (17632, 4), (17632, 8), (17632, 24)]


def _grid(fn, n, k, grid=GRID):
    return np.array([[fn((a, b), n, k) for b in grid.betas] for a in grid.alphas])


class TestActivation:
    def test_strong_field_saturates(self):
        n = 4096
        assert 0.99 * n <= mo.m_phi((5, 0.005), n, 8) <= n

    @pytest.mark.parametrize("fn", [mo.m_phi, mo.m_tilde_phi])
    def test_zero_field_weak_coupling(self, fn):
        assert fn((0, 0.005), 4096, 4) / 4096 == pytest.approx(0.5, abs=0.02)

    @pytest.mark.invariant
    def test_nondecreasing_in_field(self):
        vals = [mo.m_tilde_phi((a, 0.1), 4096, 8) for a in range(6)]
        assert np.all(np.diff(vals) >= 0)

    def test_negative_field_by_complement(self):
        n, k = 4096, 8
        assert mo.m_tilde_phi((-1.5, 0.3), n, k) == pytest.approx(n - mo.m_tilde_phi((1.5, 0.3), n, k), rel=1e-13)

    @pytest.mark.invariant
    def test_derivative_of_log_z(self):
        n, k, h = 4096, 8, 1e-4
        for a in (0.5, 1.5, 4.0):
            for b in (0.05, 0.3, 1.0):
                d = (pt.log_z_tilde_phi((a + h, b), n, k).log_z - pt.log_z_tilde_phi((a - h, b), n, k).log_z) / (2 * h)
                assert d == pytest.approx(mo.m_tilde_phi((a, b), n, k), rel=0.02)

    def test_small_torus_record(self, torus45):
        bf = exact.brute_force(torus45, 1.0, 0.3)
        assert mo.m_tilde_phi((1.0, 0.3), 20, 4) == pytest.approx(bf.m_active, rel=0.1)


class TestSpin:
    @pytest.mark.parametrize("fn", [mo.s_phi, mo.s_tilde_phi])
    def test_saturated(self, fn):
        n, k = 4096, 8
        assert fn((5, 10), n, k) == pytest.approx(n * k / 2, rel=0.01)

    @pytest.mark.parametrize("fn", [mo.s_phi, mo.s_tilde_phi])
    def test_independent_sites(self, fn):
        assert fn((0, 1e-9), 1000, 4) / 2000 == pytest.approx(0.25, abs=0.02)

    @pytest.mark.invariant
    def test_derivative_in_beta(self):
        n, k, h = 4096, 8, 1e-4
        for a in (0.5, 1.5, 4.0):
            for b in (0.05, 0.3, 1.0):
                d = (pt.log_z_tilde_phi((a, b + h), n, k).log_z - pt.log_z_tilde_phi((a, b - h), n, k).log_z) / (2 * h)
                coef = 2 * mo.s_tilde_phi((a, b), n, k) - k * mo.m_tilde_phi((a, b), n, k)
                assert d == pytest.approx(coef, rel=0.05)

    def test_negative_field_by_complement(self):
        n, k = 4096, 8
        m_pos = mo.m_phi((2.0, 0.2), n, k)
        s_pos = mo.s_phi((2.0, 0.2), n, k)
        assert mo.s_phi((-2.0, 0.2), n, k) == pytest.approx(n * k / 2 - k * m_pos + s_pos, rel=1e-12)

    def test_small_torus_record(self, torus45):
        bf = exact.brute_force(torus45, 1.0, 0.3)
        assert mo.s_phi((1.0, 0.3), 20, 4) == pytest.approx(bf.s_spin, rel=0.15)


class TestMatches:
    def test_strong_coupling(self):
        n, k = 4096, 8
        assert mo.expected_matches((0, 10), n, k) == pytest.approx(n * k / 2, rel=1e-9)

    def test_independent(self):
        assert mo.expected_matches((0, 0), 4096, 8) == pytest.approx(4096 * 8 / 4, rel=1e-8)

    def test_identity_with_exact_moments(self, torus45):
        bf = exact.brute_force(torus45, 1.0, 0.3)
        est = mo.MomentEstimate(bf.m_active, bf.s_spin, "brute", 20, 4)
        assert abs(est.matches - bf.matches) < 1e-12 * 40

    def test_method_dispatch(self):
        a = mo.moments((1, 0.3), 4096, 8, "phi")
        b = mo.moments((1, 0.3), 4096, 8, "tilde")
        assert a.method == "phi" and b.method == "tilde_phi"
        assert a.m_active == pytest.approx(b.m_active, rel=5e-3)


@pytest.mark.invariant
class TestGridInvariants:
    @pytest.mark.parametrize("n,k", CONFIGS)
    def test_ranges(self, n, k):
        sub = GRID.subgrid(10, 29)
        m = _grid(mo.m_tilde_phi, n, k, sub)
        s = _grid(mo.s_tilde_phi, n, k, sub)
        assert np.all((m >= 0) & (m <= n))
        assert np.all((s >= 0) & (s <= n * k / 2))

    def test_spin_bounded_full_grid(self):
        n, k = 4096, 8
        assert np.all(_grid(mo.s_tilde_phi, n, k) <= n * k / 2)

    @pytest.mark.parametrize("n,k", [(4096, 4), (4096, 8), (4096, 24)])
    def test_tilde_vs_sum_activation(self, n, k):
        mt = _grid(mo.m_tilde_phi, n, k)
        mp = _grid(mo.m_phi, n, k)
        assert np.max(np.abs(mt - mp) / mp) <= 1e-2

    @pytest.mark.parametrize("n,k", [(4096, 4), (4096, 8), (4096, 24)])
    def test_tilde_vs_sum_spin(self, n, k):
        st = _grid(mo.s_tilde_phi, n, k)
        sp = _grid(mo.s_phi, n, k)
        assert np.max(np.abs(st - sp) / sp) <= 5e-2

    @pytest.mark.parametrize("k", [4, 8, 24])
    def test_zero_field_symmetry(self, k):
        row = np.array([mo.m_tilde_phi((0.0, b), 4096, k) for b in GRID.betas])
        assert np.max(np.abs(row / 4096 - 0.5)) <= 0.02
