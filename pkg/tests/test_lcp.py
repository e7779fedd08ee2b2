"""
Testes dos solvers nodais: conjunto ativo, SOR projetado e Newton amortecido
"""
import unittest
import warnings

import numpy as np
import scipy.sparse as sp
from numpy.testing import assert_allclose

from obstacle_kit.exceptions import NewtonDivergence
from obstacle_kit.utils.lcp import (active_set_solve, complementarity_residual,
                                    initial_active_sets, psor_solve)
from obstacle_kit.utils.newton import damped_newton


def laplacian(n):
    h = 1.0 / (n + 1)
    return sp.diags([-np.ones(n - 1), 2.0 * np.ones(n), -np.ones(n - 1)], [-1, 0, 1],
                    format='csr') / h ** 2


class ComplementarityTests(unittest.TestCase):

    def setUp(self):
        self.n = 49
        self.K = laplacian(self.n)
        self.f = np.full(self.n, -20.0)
        self.lower = np.full(self.n, -0.5)
        self.upper = np.full(self.n, np.inf)

    def residual(self, u):
        return self.K @ u - self.f

    def jacobian(self, u):
        return self.K

    def test_active_set_matches_psor(self):
        """Testa o conjunto ativo contra o SOR projetado"""
        guess = np.zeros(self.n)
        exact = active_set_solve(self.residual, self.jacobian, self.lower, self.upper, guess,
                                 init='empty')
        psor = psor_solve(self.residual, self.jacobian, self.lower, self.upper, guess)
        self.assertEqual(exact.method, 'active-set')
        self.assertEqual(psor.method, 'psor')
        self.assertTrue(np.any(exact.active_lower))
        assert_allclose(exact.u, psor.u, atol=1e-7)
        self.assertTrue(np.all(exact.u >= self.lower))
        self.assertTrue(np.all(exact.multiplier >= 0.0))
        self.assertEqual(float(np.max(np.abs(exact.multiplier[~exact.active_lower]))), 0.0)

    def test_initialisations_agree(self):
        """Testa que as inicializações vazia e cheia convergem para a mesma solução"""
        guess = np.zeros(self.n)
        empty = active_set_solve(self.residual, self.jacobian, self.lower, self.upper, guess,
                                 init='empty')
        full = active_set_solve(self.residual, self.jacobian, self.lower, self.upper, guess,
                                init='full')
        assert_allclose(empty.u, full.u, atol=1e-10)

    def test_tie_stays_inactive(self):
        """Testa que um nó com u = barreira e λ = 0 fica inativo"""
        lower = np.array([1.0])
        for init in ('empty', 'full'):
            result = active_set_solve(lambda u: u - 1.0, lambda u: sp.identity(1, format='csr'),
                                      lower, np.array([np.inf]), np.array([3.0]), init=init)
            self.assertEqual(result.u[0], 1.0)
            self.assertFalse(result.active_lower[0])
            self.assertEqual(result.multiplier[0], 0.0)

    def test_previous_sets_respect_infinite_bounds(self):
        """Testa que conjuntos anteriores não ativam barreiras infinitas"""
        previous = (np.array([True, True]), np.array([False, True]))
        low, up = initial_active_sets('previous', np.array([0.0, -np.inf]),
                                      np.array([np.inf, 1.0]), previous)
        self.assertEqual(low.tolist(), [True, False])
        self.assertEqual(up.tolist(), [False, True])

    def test_residual_counts_both_sides(self):
        """Testa o resíduo de complementaridade nos dois lados da caixa"""
        lower, upper = np.zeros(4), np.ones(4)
        u = np.array([0.0, 1.0, 0.5, 0.5])
        self.assertEqual(complementarity_residual(np.array([2.0, -3.0, 0.0, 0.0]), u, lower, upper), 0.0)
        self.assertAlmostEqual(complementarity_residual(np.array([0.0, 0.0, 0.0, -0.3]), u, lower, upper),
                               0.3, delta=1e-15)
        self.assertAlmostEqual(complementarity_residual(np.array([0.0, 0.0, 0.2, 0.0]), u, lower, upper),
                               0.2, delta=1e-15)
        self.assertAlmostEqual(complementarity_residual(np.array([0.0, -0.7, 0.0, 0.0]), u - 0.25,
                                                        lower, upper), 0.7, delta=1e-15)
        self.assertEqual(complementarity_residual(np.array([]), np.array([]), np.array([]), np.array([])), 0.0)

    def test_psor_with_active_upper_bound(self):
        """Testa o SOR projetado com a barreira superior ativa e o resíduo dos dois lados"""
        f = np.full(self.n, 20.0)
        upper = np.full(self.n, 0.5)
        lower = np.full(self.n, -np.inf)
        residual = lambda u: self.K @ u - f
        guess = np.zeros(self.n)
        exact = active_set_solve(residual, self.jacobian, lower, upper, guess, init='empty')
        psor = psor_solve(residual, self.jacobian, lower, upper, guess)
        self.assertTrue(np.any(psor.active_upper))
        self.assertFalse(np.any(psor.active_lower))
        assert_allclose(exact.u, psor.u, atol=1e-7)
        self.assertTrue(np.all(psor.multiplier[psor.active_upper] < 0.0))
        self.assertEqual(psor.residual,
                         complementarity_residual(residual(psor.u), psor.u, lower, upper))
        self.assertLess(psor.residual, 1e-4)


class NewtonTests(unittest.TestCase):

    def test_linear_system_single_step(self):
        """Testa Newton num sistema linear: um passo"""
        K = laplacian(9)
        f = np.ones(9)
        result = damped_newton(lambda u: K @ u - f, lambda u: K, np.zeros(9), 1e-10)
        self.assertEqual(result.iterations, 1)
        self.assertEqual(result.method, 'newton')

    def test_damping_rescues_arctan(self):
        """Testa que arctan a partir de 10 precisa de amortecimento"""
        with warnings.catch_warnings(), np.errstate(all='ignore'):
            warnings.simplefilter('ignore')
            result = damped_newton(lambda u: np.arctan(u),
                                   lambda u: sp.diags(1.0 / (1.0 + u ** 2), format='csr'),
                                   np.array([10.0]), 1e-10)
        self.assertEqual(result.method, 'damped-newton')
        self.assertLess(abs(result.u[0]), 1e-9)

    def test_fixed_point_fallback(self):
        """Testa o recurso ao ponto fixo quando o jacobiano é enganador"""
        target = np.array([0.3, -0.2])
        with warnings.catch_warnings():
            warnings.simplefilter('ignore')
            result = damped_newton(lambda u: u - target,
                                   lambda u: -sp.identity(2, format='csr'),
                                   np.zeros(2), 1e-10, max_iter=3,
                                   fixed_point=lambda u: target)
        self.assertEqual(result.method, 'fixed-point')
        assert_allclose(result.u, target, atol=1e-10)

    def test_divergence_raises(self):
        """Testa NewtonDivergence para u² + 1 = 0 (sem raízes reais)"""
        with warnings.catch_warnings(), np.errstate(all='ignore'):
            warnings.simplefilter('ignore')
            with self.assertRaises(NewtonDivergence) as ctx:
                damped_newton(lambda u: u ** 2 + 1.0,
                              lambda u: sp.diags(2.0 * u, format='csr'),
                              np.array([0.5]), 1e-10)
        self.assertGreaterEqual(ctx.exception.details['residual'], 1.0)


if __name__ == '__main__':
    unittest.main()
