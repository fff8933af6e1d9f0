import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from conftest import brute_grid_sq_cost, random_mixture, random_orthogonal, random_spd
from gmquant import (Axes, CrossScheme, DiscreteDistribution, GaussianComponent, GaussianMixture, GridScheme,
                     discretize, discretize_gaussian_cross, discretize_gaussian_grid, discretize_mixture,
                     generate_scheme_gaussian, generate_scheme_mixture, weighted_kmeans)
from gmquant.errors import EmptySchemeSet, InvalidK, NotAligned, OffSupport
from gmquant.oracles import mc_cell_counts, mc_coupling_cost
from gmquant.schemes import SchemeEntry, SchemeSet


def aligned_pair(rng, d, table, n):
    """Component and an aligned (but not necessarily centered) grid."""
    q = random_orthogonal(rng, d)
    cov = (q * rng.uniform(0.2, 3.0, d)) @ q.T
    comp = GaussianComponent(rng.normal(size=d), 0.5 * (cov + cov.T))
    other = GaussianComponent(comp.mean + rng.normal(0, 0.5, d), (q * rng.uniform(0.2, 3.0, d)) @ q.T)
    return comp, generate_scheme_gaussian(other, n, "grid", table)


class TestGrid:
    def test_quadrants(self):
        comp = GaussianComponent([0, 0], np.eye(2))
        s = GridScheme((np.array([-1.0, 1.0]),) * 2, Axes.identity(2))
        res = discretize_gaussian_grid(comp, s)
        assert_allclose(res.discrete.probabilities, 0.25, atol=1e-16)

    def test_two_one_layout(self, table):
        comp = GaussianComponent([0, 0], np.diag([4.0, 1.0]))
        s = GridScheme((table[2].locations, table[1].locations), Axes(np.eye(2), [2.0, 1.0], [0, 0]))
        res = discretize_gaussian_grid(comp, s)
        assert res.certificate.kind == "exact"
        assert res.certificate.squared == pytest.approx(4 * (1 - 2 / math.pi) + 1.0, abs=1e-13)
        assert res.certificate.squared == pytest.approx(2.45352, abs=1e-5)

    def test_fully_degenerate(self):
        comp = GaussianComponent([1.0, -1.0], np.zeros((2, 2)))
        s = GridScheme((np.array([0.0]),) * 2, Axes(np.eye(2), [1, 1], [1.0, -1.0]))
        res = discretize_gaussian_grid(comp, s)
        assert_allclose(res.discrete.locations, [[1.0, -1.0]])
        assert res.certificate.value == 0.0 and res.certificate.kind == "exact"

    def test_off_support(self):
        comp = GaussianComponent([0.0, 0.0], np.diag([1.0, 0.0]))
        s = GridScheme((np.array([-1.0, 1.0]), np.array([0.0])), Axes(np.eye(2), [1, 1], [0.0, 0.5]))
        with pytest.raises(OffSupport):
            discretize_gaussian_grid(comp, s)
        res = discretize_gaussian_grid(comp, s, strict=False)
        base = discretize_gaussian_grid(comp, GridScheme(s.points_per_dim, Axes(np.eye(2), [1, 1], [0, 0])))
        assert res.certificate.squared == pytest.approx(base.certificate.squared + 0.25)

    def test_not_aligned(self):
        comp = GaussianComponent([0, 0], [[1.0, 0.5], [0.5, 1.0]])
        s = GridScheme((np.array([0.0]),) * 2, Axes.identity(2))
        with pytest.raises(NotAligned):
            discretize_gaussian_grid(comp, s)

    def test_certificate_vs_brute_quadrature(self, table):
        rng = np.random.default_rng(21)
        for _ in range(25):
            d = int(rng.integers(1, 4))
            comp, s = aligned_pair(rng, d, table, int(rng.integers(1, 65)))
            res = discretize_gaussian_grid(comp, s)
            assert abs(res.certificate.squared - brute_grid_sq_cost(comp, s)) < 1e-6

    def test_cell_probabilities_vs_monte_carlo(self, table):
        rng = np.random.default_rng(22)
        n = 200_000
        for t in range(10):
            d = int(rng.integers(1, 4))
            comp, s = aligned_pair(rng, d, table, int(rng.integers(2, 30)))
            p = discretize_gaussian_grid(comp, s).discrete.probabilities
            counts = mc_cell_counts(comp, s.region_index, s.size, n, seed=t)
            se = np.sqrt(np.maximum(p * (1 - p), 1e-300) / n)
            assert np.all(np.abs(counts / n - p) <= 4 * se + 1e-12)

    def test_grid_factored_encoding(self, table):
        comp = GaussianComponent([0.0, 1.0], np.diag([2.0, 0.5]))
        s = generate_scheme_gaussian(comp, 12, "grid", table)
        res = discretize_gaussian_grid(comp, s)
        flat = res.grid.to_discrete()
        assert_allclose(flat.locations, res.discrete.locations)
        assert_allclose(flat.probabilities, res.discrete.probabilities)


class TestCross:
    def test_single_shell_quarters(self):
        comp = GaussianComponent([0, 0], np.eye(2))
        res = discretize_gaussian_cross(comp, CrossScheme(Axes.identity(2), []), mc_samples=20_000)
        assert_allclose(res.discrete.probabilities, 0.25)
        assert res.certificate.kind == "upper_bound" and res.certificate.statistical

    def test_center_mass(self):
        comp = GaussianComponent([0, 0], np.eye(2))
        s = CrossScheme(Axes.identity(2), [2 * math.log(2)], include_center=True)
        res = discretize_gaussian_cross(comp, s, mc_samples=None)
        assert abs(res.discrete.probabilities[0] - 0.5) < 1e-15
        assert res.certificate.kind == "unavailable"

    @pytest.mark.parametrize("n,center", [(4, False), (3, True), (6, False), (5, True)])
    def test_one_dimensional_matches_grid(self, table, n, center):
        q = table[n]
        # cross edges at the optimal quantizer's positive Voronoi edges
        pos_edges = q.edges[1:-1][q.edges[1:-1] > 1e-12]
        comp = GaussianComponent([0.5], [[2.25]])
        ax = Axes(np.eye(1), [1.5], [0.5])
        cross = discretize_gaussian_cross(comp, CrossScheme(ax, pos_edges**2, include_center=center))
        grid = discretize_gaussian_grid(comp, GridScheme((q.locations,), ax))
        order = np.argsort(cross.discrete.locations[:, 0])
        assert_allclose(cross.discrete.locations[order], grid.discrete.locations, atol=1e-12)
        assert_allclose(cross.discrete.probabilities[order], grid.discrete.probabilities, atol=1e-12)
        assert abs(cross.certificate.value - grid.certificate.value) < 1e-12
        assert not cross.certificate.statistical

    def test_requires_whitening_frame(self):
        comp = GaussianComponent([0, 0], np.diag([2.0, 1.0]))
        with pytest.raises(NotAligned):
            discretize_gaussian_cross(comp, CrossScheme(Axes.identity(2), [1.0]))

    def test_generated_cross_bounds_voronoi_cost(self):
        rng = np.random.default_rng(23)
        comp = GaussianComponent([1.0, 0.0, -1.0], random_spd(rng, 3))
        s = generate_scheme_gaussian(comp, 13, "cross")
        res = discretize_gaussian_cross(comp, s, mc_samples=200_000, seed=1)
        est = mc_coupling_cost(comp, res.discrete.locations, 200_000, seed=2)
        se = math.hypot(res.certificate.std_error, est.std_error)
        assert est.value <= res.certificate.value + 4 * se
        assert abs(res.discrete.probabilities.sum() - 1) < 1e-12


class TestMixture:
    def test_single_component_reduces(self, table):
        comp = GaussianComponent([0.0, 1.0], [[2.0, 0.3], [0.3, 1.0]])
        s = generate_scheme_gaussian(comp, 9, "grid", table)
        a = discretize_gaussian_grid(comp, s)
        b = discretize_mixture(GaussianMixture.single(comp), s)
        assert_allclose(a.discrete.probabilities, b.discrete.probabilities, atol=1e-15)
        assert a.certificate == b.certificate

    def test_identical_components_share_scheme(self, table):
        comp = GaussianComponent([0.0, 1.0], [[2.0, 0.3], [0.3, 1.0]])
        s = generate_scheme_gaussian(comp, 9, "grid", table)
        mix = GaussianMixture(np.array([0.3, 0.7]), (comp, comp))
        a = discretize_gaussian_grid(comp, s)
        b = discretize_mixture(mix, s)
        assert_allclose(b.discrete.probabilities, a.discrete.probabilities, atol=1e-15)
        assert b.certificate.value == pytest.approx(a.certificate.value, abs=1e-14)
        assert b.certificate.kind == "exact"

    def test_homogeneous_shared_grid_exact(self, table):
        mix = GaussianMixture.from_arrays([0.4, 0.6], [[0, 0], [1, 0.5]], [np.diag([1.0, 2.0]), np.diag([0.5, 0.3])])
        s = GridScheme((np.linspace(-2, 2, 5), np.linspace(-2, 2, 4)), Axes.identity(2))
        res = discretize_mixture(mix, s)
        per = [discretize_gaussian_grid(c, s) for c in mix.components]
        assert_allclose(res.discrete.probabilities,
                        0.4 * per[0].discrete.probabilities + 0.6 * per[1].discrete.probabilities, atol=1e-15)
        assert res.certificate.squared == pytest.approx(0.4 * per[0].certificate.squared
                                                        + 0.6 * per[1].certificate.squared)
        assert res.certificate.kind == "exact"

    def test_fig3_numbers(self, fig3_mixture, table):
        pm = discretize_mixture(fig3_mixture, generate_scheme_mixture(fig3_mixture, 20, "grid", True, table))
        pc = discretize_mixture(fig3_mixture, generate_scheme_mixture(fig3_mixture, 20, "grid", False, table))
        assert pm.discrete.size == 19 and pc.discrete.size == 29
        assert pm.certificate.value == pytest.approx(0.4723, abs=1e-3)
        assert pc.certificate.value == pytest.approx(0.4673, abs=1e-3)
        assert pm.certificate.kind == pc.certificate.kind == "upper_bound"

    def test_empty_scheme_set(self, fig3_mixture):
        with pytest.raises(EmptySchemeSet):
            discretize_mixture(fig3_mixture, SchemeSet(()))

    def test_nearest_anchor_assignment(self, table):
        mix = GaussianMixture.from_arrays([0.5, 0.5], [[0, 0], [10, 0]], [np.eye(2)] * 2)
        g0 = generate_scheme_gaussian(mix.components[0], 4, "grid", table)
        g1 = generate_scheme_gaussian(mix.components[1], 4, "grid", table)
        ss = SchemeSet((SchemeEntry((g1,), [10.0, 0.0]), SchemeEntry((g0,), [0.0, 0.0])))
        res = discretize_mixture(mix, ss)
        direct = discretize_gaussian_grid(mix.components[0], g0).certificate.squared
        assert res.certificate.squared == pytest.approx(direct)

    def test_compression(self, fig3_mixture, table):
        ss = generate_scheme_mixture(fig3_mixture, 20, "grid", False, table)
        plain = discretize_mixture(fig3_mixture, ss)
        comp = discretize_mixture(fig3_mixture, ss, compress=True)
        assert comp.discrete.size <= 20 < plain.discrete.size
        assert comp.certificate.value >= plain.certificate.value
        assert comp.certificate.value == pytest.approx(plain.certificate.value + comp.compression_cost)
        assert abs(comp.discrete.probabilities.sum() - 1) < 1e-12
        assert comp.certificate.kind == "upper_bound"

    def test_compression_monotone_random(self, table):
        rng = np.random.default_rng(24)
        for _ in range(20):
            mix = random_mixture(rng, 2, int(rng.integers(2, 5)))
            ss = generate_scheme_mixture(mix, int(rng.integers(4, 60)), "grid", False, table)
            plain = discretize_mixture(mix, ss)
            comp = discretize_mixture(mix, ss, compress=True)
            assert comp.certificate.value >= plain.certificate.value - 1e-15
            assert abs(comp.discrete.probabilities.sum() - 1) < 1e-9

    def test_dispatch(self, table):
        comp = GaussianComponent([0.0], [[1.0]])
        s = generate_scheme_gaussian(comp, 3, "grid", table)
        assert discretize(comp, s).certificate.kind == "exact"


class TestRotationEquivariance:
    def test_grid_and_scheme_sets(self, table):
        rng = np.random.default_rng(25)
        for _ in range(20):
            d = int(rng.integers(2, 4))
            mix = random_mixture(rng, d, int(rng.integers(1, 4)), homogeneous=bool(rng.integers(0, 2)))
            ss = generate_scheme_mixture(mix, int(rng.integers(3, 80)), "grid", True, table)
            q = random_orthogonal(rng, d)
            mix_q = GaussianMixture(mix.weights, tuple(
                GaussianComponent(q @ c.mean, q @ c.covariance @ q.T) for c in mix.components))
            ss_q = SchemeSet(tuple(SchemeEntry(tuple(s.transformed(q) for s in e.schemes), q @ e.anchor,
                                               e.members, e.budget) for e in ss))
            a = discretize_mixture(mix, ss)
            b = discretize_mixture(mix_q, ss_q)
            assert_allclose(b.discrete.probabilities, a.discrete.probabilities, atol=1e-10)
            assert_allclose(b.discrete.locations, a.discrete.locations @ q.T, atol=1e-10)
            assert abs(b.certificate.value - a.certificate.value) < 1e-10


class TestCertificateDominatesOracle:
    def test_random_mixtures(self, table):
        rng = np.random.default_rng(26)
        for t in range(50):
            d = int(rng.integers(1, 4))
            mix = random_mixture(rng, d, int(rng.integers(1, 4)), homogeneous=bool(rng.integers(0, 2)))
            per_mode = bool(rng.integers(0, 2))
            ss = generate_scheme_mixture(mix, int(rng.integers(3, 100)), "grid", per_mode, table)
            res = discretize_mixture(mix, ss)
            est = mc_coupling_cost(mix, res.discrete.locations, 100_000, seed=t)
            assert est.value <= res.certificate.value + 4 * est.std_error
            assert abs(res.discrete.probabilities.sum() - 1) < 1e-9


class TestWeightedKMeans:
    def test_coincident(self):
        d, cost = weighted_kmeans(DiscreteDistribution(np.zeros((2, 1)), np.array([0.5, 0.5])), 1)
        assert d.size == 1 and d.probabilities[0] == 1.0 and cost == 0.0

    def test_identity(self):
        atoms = DiscreteDistribution(np.arange(4.0)[:, None], np.full(4, 0.25))
        d, cost = weighted_kmeans(atoms, 4)
        assert d is atoms and cost == 0.0

    def test_two_atoms(self):
        d, cost = weighted_kmeans(DiscreteDistribution(np.array([[0.0], [1.0]]), np.array([0.5, 0.5])), 1)
        assert_allclose(d.locations, [[0.5]])
        assert cost == pytest.approx(0.5)

    def test_invalid_k(self):
        atoms = DiscreteDistribution(np.zeros((2, 1)), np.array([0.5, 0.5]))
        with pytest.raises(InvalidK):
            weighted_kmeans(atoms, 0)
        with pytest.raises(InvalidK):
            weighted_kmeans(atoms, 3)
