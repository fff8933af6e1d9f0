import math

import numpy as np
import pytest

from gmquant import GaussianComponent, GaussianMixture
from gmquant.distributions import mixture_moments
from gmquant.errors import InvalidInterval
from gmquant.oracles import mc_coupling_cost, mc_region_prob, quadrature_cell_cost, sample_mixture


class TestQuadrature:
    def test_full_line(self):
        assert abs(quadrature_cell_cost(-np.inf, np.inf, 0.0) - 1.0) < 1e-10

    def test_half_line(self):
        assert abs(quadrature_cell_cost(0.0, np.inf, math.sqrt(2 / math.pi)) - 0.18169) < 1e-5

    def test_invalid(self):
        with pytest.raises(InvalidInterval):
            quadrature_cell_cost(1.0, 0.0, 0.0)


class TestMonteCarlo:
    def test_two_point_standard_normal(self):
        comp = GaussianComponent([0.0], [[1.0]])
        c = math.sqrt(2 / math.pi)
        est = mc_coupling_cost(comp, [[-c], [c]], 1_000_000, seed=0)
        assert abs(est.value - math.sqrt(1 - 2 / math.pi)) <= 3 * est.std_error

    def test_single_location_trace(self):
        comp = GaussianComponent([0.0, 0.0], np.eye(2))
        est = mc_coupling_cost(comp, [[0.0, 0.0]], 1_000_000, seed=1)
        assert abs(est.value - math.sqrt(2)) <= 3 * est.std_error

    def test_collapse(self):
        mix = GaussianMixture.from_arrays([0.5, 0.5], [[0.0], [5.0]], [np.array([[1e-12]])] * 2)
        est = mc_coupling_cost(mix, [[0.0], [5.0]], 10_000, seed=2)
        assert est.value < 1e-5

    def test_quadrant(self):
        comp = GaussianComponent([0.0, 0.0], np.eye(2))
        est = mc_region_prob(comp, lambda x: (x[:, 0] > 0) & (x[:, 1] > 0), 1_000_000, seed=3)
        assert est.within(0.25)

    def test_replay_is_bit_identical(self):
        comp = GaussianComponent([0.0, 0.0], [[2.0, 0.5], [0.5, 1.0]])
        a = mc_coupling_cost(comp, [[0.0, 0.0], [1.0, 1.0]], 450_000, seed=42)
        b = mc_coupling_cost(comp, [[0.0, 0.0], [1.0, 1.0]], 450_000, seed=42)
        assert a == b
        assert mc_coupling_cost(comp, [[0.0, 0.0]], 10_000, seed=43).value != \
            mc_coupling_cost(comp, [[0.0, 0.0]], 10_000, seed=44).value

    def test_sampler_moments(self, fig3_mixture):
        n = 1_000_000
        x = sample_mixture(fig3_mixture, n, seed=9)
        m, c = mixture_moments(fig3_mixture)
        assert np.all(np.abs(x.mean(axis=0) - m) <= 4 * np.sqrt(np.diag(c) / n))

    def test_minimum_samples(self):
        with pytest.raises(ValueError):
            mc_coupling_cost(GaussianComponent([0.0], [[1.0]]), [[0.0]], 10)
