"""
Testes do sistema de comutação ótima
"""
import unittest

import numpy as np
from numpy.testing import assert_allclose

from obstacle_kit.exceptions import ConfigError, RegimeViolation
from obstacle_kit.services.forms import FormCoefficients, Grid, assemble
from obstacle_kit.services.pde import Reaction
from obstacle_kit.services.switching import (SwitchingMode, SwitchingProblem, SwitchingRule,
                                             SwitchingSolution, build_bounds, check_no_loop,
                                             extract_strategy, solve_switching_dp,
                                             solve_switching_penalized, solve_switching_picard)


def constant_cost(value):
    return lambda t, x: np.full(np.shape(x), value)


def two_mode_problem(cost=0.1):
    modes = (SwitchingMode(phi=0.0, reaction=Reaction.constant(1.0), adjacency=(1,), name='up'),
             SwitchingMode(phi=0.0, reaction=Reaction.constant(-1.0), adjacency=(0,), name='down'))
    costs = {(0, 1): constant_cost(cost), (1, 0): constant_cost(cost)}
    return SwitchingProblem(modes, costs, cost_floor=cost)


class TwoModeTests(unittest.TestCase):

    @classmethod
    def setUpClass(cls):
        cls.grid = Grid(0.0, 1.0, 49, 1.0, 100)
        cls.form = assemble(FormCoefficients.constant(1.0, 0.0), cls.grid)
        cls.problem = two_mode_problem()
        cls.picard = solve_switching_picard(cls.problem, cls.form, cls.grid)
        cls.dp = solve_switching_dp(cls.problem, cls.form, cls.grid)

    def test_picard_matches_dynamic_programming(self):
        """Testa a equivalência entre Picard e programação dinâmica na malha"""
        self.assertLess(float(np.max(np.abs(self.picard.u - self.dp.u))), 1e-6)
        self.assertEqual(self.dp.method, 'dp')

    def test_value_relations(self):
        """Testa u¹ ≥ H¹(u) e o valor do modo desfavorável"""
        u = self.picard.u
        self.assertTrue(np.all(u[0] >= u[1] - 0.1 - 1e-9))
        self.assertTrue(np.all(u[1] >= u[0] - 0.1 - 1e-9))
        k = self.grid.index_of(0.0)
        mid = self.grid.n_x // 2
        self.assertAlmostEqual(u[1, k, mid], u[0, k, mid] - 0.1, places=8)

    def test_bounds_bracket_solution(self):
        """Testa u_under ≤ u ≤ u_over"""
        under, over = build_bounds(self.problem, self.form, self.grid)
        self.assertTrue(np.all(under.u <= self.picard.u + 1e-9))
        self.assertTrue(np.all(self.picard.u <= over.u + 1e-9))

    def test_picard_iterates_increase(self):
        """Testa a monotonia das iterações de Picard a partir da subsolução"""
        for entry in self.picard.iterations:
            self.assertLessEqual(entry['monotone_violation'], 1e-9)
        self.assertLessEqual(self.picard.residuals['feasibility'], 1e-8)

    def test_penalized_system_increases(self):
        """Testa o sistema penalizado crescente em n e abaixo da solução"""
        previous = None
        for n in (1, 4, 16, 64):
            fields = solve_switching_penalized(self.problem, n, self.form, self.grid)
            self.assertTrue(np.all(fields.u <= self.picard.u + 1e-8))
            if previous is not None:
                self.assertTrue(np.all(fields.u >= previous.u - 1e-8))
            previous = fields

    def test_no_loop_certificate(self):
        """Testa o certificado de ausência de ciclos com custo positivo"""
        cert = check_no_loop(self.problem, self.grid)
        self.assertTrue(cert)
        self.assertEqual(cert.reason, 'cost floor')

    def test_stopping_regions(self):
        """Testa que o modo desfavorável comuta no meio do intervalo em t = 0"""
        regions = self.picard.stopping_regions(self.problem)
        self.assertTrue(regions[1, 0, self.grid.n_x // 2])
        self.assertFalse(regions[0, 0, self.grid.n_x // 2])

    def test_strategy_along_path(self):
        """Testa a estratégia extraída ao longo de uma trajetória constante"""
        path = np.full(self.grid.n_t + 1, 0.5)
        strategy = extract_strategy(self.picard, self.problem, (0.0, 0.5), path, j0=1)
        self.assertEqual(strategy.modes, (0,))
        self.assertEqual(strategy.switch_times, (0.0,))
        self.assertEqual(extract_strategy(self.picard, self.problem, (0.0, 0.5), path,
                                          j0=0).n_switches, 0)


class ProblemValidationTests(unittest.TestCase):

    @classmethod
    def setUpClass(cls):
        cls.grid = Grid(0.0, 1.0, 9, 0.5, 10)
        cls.form = assemble(FormCoefficients.constant(1.0, 0.0), cls.grid)

    def test_cost_below_floor(self):
        """Testa ConfigError com custo abaixo do piso declarado"""
        problem = two_mode_problem()
        problem = SwitchingProblem(problem.modes, problem.costs, cost_floor=0.2)
        with self.assertRaises(ConfigError):
            problem.validate(self.grid)

    def test_missing_cost(self):
        """Testa ConfigError quando falta o custo de uma aresta"""
        problem = two_mode_problem()
        problem = SwitchingProblem(problem.modes, {(0, 1): constant_cost(0.1)}, cost_floor=0.1)
        with self.assertRaises(ConfigError):
            problem.validate(self.grid)

    def test_zero_cost_cycle(self):
        """Testa o certificado negativo para um ciclo de custo nulo"""
        problem = two_mode_problem()
        problem = SwitchingProblem(problem.modes, {(0, 1): constant_cost(0.1),
                                                   (1, 0): constant_cost(-0.1)})
        cert = check_no_loop(problem, self.grid)
        self.assertFalse(cert)
        self.assertEqual(cert.reason, 'zero-cost cycle')
        self.assertEqual(cert.witness['cycle'], [0, 1])

    def test_dp_needs_cost_form(self):
        """Testa RegimeViolation do oráculo DP com acoplamento geral"""
        problem = two_mode_problem()
        coupling = {(0, 1): lambda t, x, y: y - 0.1, (1, 0): lambda t, x, y: y - 0.1}
        coupled = SwitchingProblem(problem.modes, coupling=coupling)
        with self.assertRaises(RegimeViolation):
            solve_switching_dp(coupled, self.form, self.grid)
        with self.assertRaises(ConfigError):
            build_bounds(coupled, self.form, self.grid)

    def test_general_coupling_with_user_bounds(self):
        """Testa o acoplamento geral com sub e supersolução fornecidas"""
        modes = two_mode_problem().modes
        coupling = {(0, 1): lambda t, x, y: y - 0.1, (1, 0): lambda t, x, y: y - 0.1}
        shape = (2, self.grid.n_t + 1, self.grid.n_x)
        low = np.full(shape, -1.0)
        low[:, -1] = 0.0
        coupled = SwitchingProblem(modes, coupling=coupling,
                                   user_bounds=(low, np.full(shape, 1.0)))
        cost_form = solve_switching_picard(two_mode_problem(), self.form, self.grid)
        general = solve_switching_picard(coupled, self.form, self.grid)
        assert_allclose(general.u, cost_form.u, atol=1e-7)


class TieBreakTests(unittest.TestCase):

    def test_maximal_index_wins(self):
        """Testa que, em empate, a regra escolhe o maior índice"""
        grid = Grid(0.0, 1.0, 9, 1.0, 10)
        modes = tuple(SwitchingMode(phi=0.0, reaction=Reaction.zero(),
                                    adjacency=tuple(i for i in range(3) if i != j))
                      for j in range(3))
        costs = {(j, i): constant_cost(0.1) for j in range(3) for i in range(3) if i != j}
        problem = SwitchingProblem(modes, costs, cost_floor=0.1)
        u = np.zeros((3, grid.n_t + 1, grid.n_x))
        u[1] = u[2] = 1.0
        solution = SwitchingSolution(grid, u, u.copy())
        rule = SwitchingRule(solution, problem)
        x = np.array([0.3, 0.5, 0.7])
        chosen = rule(0, 0.0, x, np.zeros(3, dtype=int))
        self.assertEqual(chosen.tolist(), [2, 2, 2])
        stay = rule(0, 0.0, x, np.full(3, 2, dtype=int))
        self.assertEqual(stay.tolist(), [2, 2, 2])


if __name__ == '__main__':
    unittest.main()
