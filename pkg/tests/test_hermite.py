"""Chaos basis bookkeeping: index sets, orthonormality, quadrature."""

import math

import numpy as np
import pytest

from spdelab import ModeSpectrum, sample_invariant
from spdelab.hermite import MultiIndexSet, basis_matrix, hermite_table, index_set, tensor_rule


class TestMultiIndexSet:
    def test_size_is_binomial(self):
        for m, p in [(1, 5), (2, 4), (3, 8), (4, 3)]:
            iset = MultiIndexSet.total_degree(m, p)
            assert iset.size == math.comb(m + p, p)

    def test_zero_first_and_closed_under_decrement(self):
        iset = MultiIndexSet.total_degree(3, 4)
        assert tuple(iset.indices[0]) == (0, 0, 0)
        positions = {tuple(map(int, a)) for a in iset.indices}
        for alpha in iset.indices:
            for k in range(3):
                if alpha[k] > 0:
                    beta = alpha.copy()
                    beta[k] -= 1
                    assert tuple(map(int, beta)) in positions

    def test_lowering_map_orders(self):
        iset = index_set(2, 3)
        src, dst, order = iset.lowering_map(0)
        for s, d, o in zip(src, dst, order):
            alpha = iset.indices[s]
            beta = iset.indices[d]
            assert alpha[0] == o
            assert beta[0] == alpha[0] - 1 and beta[1] == alpha[1]


class TestHermiteTable:
    def test_first_polynomials(self):
        u = np.array([0.0, 1.0, -2.0])
        t = hermite_table(u, 3)
        np.testing.assert_allclose(t[:, 0], 1.0)
        np.testing.assert_allclose(t[:, 1], u)
        np.testing.assert_allclose(t[:, 2], (u**2 - 1.0) / math.sqrt(2.0))
        np.testing.assert_allclose(t[:, 3], (u**3 - 3 * u) / math.sqrt(6.0))

    def test_orthonormal_under_quadrature(self):
        rule = tensor_rule(1, 12)
        t = hermite_table(rule.points[:, 0], 8)
        gram = t.T @ (rule.weights[:, None] * t)
        np.testing.assert_allclose(gram, np.eye(9), atol=1e-10)


class TestBasisMatrix:
    def test_discrete_gram_identity(self):
        iset = index_set(3, 5)
        rule = tensor_rule(3, 7)
        H = basis_matrix(iset, rule.points)
        gram = H.T @ (rule.weights[:, None] * H)
        np.testing.assert_allclose(gram, np.eye(iset.size), atol=1e-9)

    def test_monte_carlo_orthonormality(self):
        # sampled inner products match delta within 4 standard errors
        spec = ModeSpectrum.k_squared(3)
        iset = index_set(3, 6)
        n = 60_000
        pts = sample_invariant(spec, n, seed=13)
        H = basis_matrix(iset, pts / spec.invariant_std())
        picks = np.random.default_rng(7).choice(iset.size, size=(12, 2))
        for a, b in picks:
            prods = H[:, a] * H[:, b]
            mean = prods.mean()
            se = prods.std(ddof=1) / math.sqrt(n)
            target = 1.0 if a == b else 0.0
            assert abs(mean - target) <= 4.0 * se


class TestTensorRule:
    def test_weights_normalized(self):
        rule = tensor_rule(3, 6)
        assert rule.weights.sum() == pytest.approx(1.0, rel=1e-12)
        assert rule.points.shape == (216, 3)

    def test_integrates_gaussian_moments(self):
        rule = tensor_rule(2, 8)
        # E[u1^2] = 1, E[u1^4] = 3, E[u1^2 u2^2] = 1
        u = rule.points
        w = rule.weights
        assert w @ u[:, 0] ** 2 == pytest.approx(1.0, rel=1e-12)
        assert w @ u[:, 0] ** 4 == pytest.approx(3.0, rel=1e-12)
        assert w @ (u[:, 0] ** 2 * u[:, 1] ** 2) == pytest.approx(1.0, rel=1e-12)
