"""
Testes dos oráculos probabilísticos (trajetórias, árvore, EDSR refletida, estratégias)
"""
import unittest

import numpy as np
from numpy.testing import assert_array_equal

from obstacle_kit.exceptions import CoefficientRoughness, RegimeViolation
from obstacle_kit.services.barriers import Barrier, ConstantProfile
from obstacle_kit.services.forms import FormCoefficients, Grid, assemble
from obstacle_kit.services.measures import MeasureData, SpaceAtom
from obstacle_kit.services.montecarlo import (evaluate_strategy, forward_estimate, paired_gap,
                                              perturbed_rules, rbsde_backward, simulate_paths,
                                              snell_oracle, strategy_payoffs)
from obstacle_kit.services.obstacle import solve_one_barrier
from obstacle_kit.services.pde import Reaction
from obstacle_kit.services.switching import (SwitchingMode, SwitchingProblem, SwitchingRule,
                                             solve_switching_picard)

HEAT_DECAY = np.exp(-0.1 * np.pi ** 2)


def survival_series(tau, x, terms=50):
    """P(τ > tau) para X' = √2 dW a partir de x em (0, 1)"""
    n = np.arange(1, 2 * terms, 2)
    return float(np.sum(4.0 / (n * np.pi) * np.sin(n * np.pi * x) * np.exp(-(n * np.pi) ** 2 * tau)))


def sine(x):
    return np.sin(np.pi * x)


class PathTests(unittest.TestCase):

    def test_increment_moments(self):
        """Testa média nula e variância dt do primeiro incremento com a = 1/2"""
        grid = Grid(-50.0, 50.0, 99, 1.0, 100)
        coeffs = FormCoefficients.constant(0.5, 0.0)
        paths = simulate_paths(coeffs, grid, (0.0, 0.0), 20000, seed=7)
        increments = paths.x[:, 1] - paths.x[:, 0]
        self.assertLess(abs(increments.mean()), 4.0 * np.sqrt(grid.dt / 20000))
        self.assertAlmostEqual(increments.var(ddof=1) / grid.dt, 1.0, delta=0.05)

    def test_drift_sign(self):
        """Testa que b = -1 produz deriva +1 (gerador (a u')' - b u')"""
        grid = Grid(-1.0, 3.0, 39, 1.0, 100)
        coeffs = FormCoefficients.constant(1e-6, -1.0)
        paths = simulate_paths(coeffs, grid, (0.0, 0.0), 2000, seed=3)
        self.assertTrue(np.all(paths.alive(paths.n_cols - 1)))
        self.assertAlmostEqual(float(paths.x[:, -1].mean()), 1.0, delta=1e-3)

    def test_exit_time_survival(self):
        """Testa a sobrevivência até T e até T/2 contra a série de Fourier"""
        grid = Grid(0.0, 1.0, 99, 0.1, 200)
        coeffs = FormCoefficients.constant(1.0, 0.0)
        n_paths = 20000
        for t0 in (0.0, 0.05):
            paths = simulate_paths(coeffs, grid, (t0, 0.5), n_paths, seed=11)
            survived = np.isinf(paths.exit_times())
            p = float(survived.mean())
            stderr = np.sqrt(p * (1.0 - p) / n_paths)
            self.assertLess(abs(p - survival_series(0.1 - t0, 0.5)), 4.0 * stderr + 5e-3)

    def test_independent_of_worker_count(self):
        """Testa trajetórias idênticas com 1 e 3 threads"""
        grid = Grid(0.0, 1.0, 49, 0.1, 50)
        coeffs = FormCoefficients.constant(1.0, 0.2)
        one = simulate_paths(coeffs, grid, (0.0, 0.5), 5000, seed=5, block_size=1000, workers=1)
        three = simulate_paths(coeffs, grid, (0.0, 0.5), 5000, seed=5, block_size=1000, workers=3)
        assert_array_equal(one.x, three.x)
        assert_array_equal(one.exit_col, three.exit_col)

    def test_rough_diffusion_rejected(self):
        """Testa CoefficientRoughness quando a' excede o limite"""
        grid = Grid(0.0, 1.0, 49, 0.1, 50)
        coeffs = FormCoefficients(a=lambda t, x: 1.0 + 1e4 * x ** 2,
                                  b=lambda t, x: np.zeros_like(x), a_floor=1.0)
        with self.assertRaises(CoefficientRoughness):
            simulate_paths(coeffs, grid, (0.0, 0.5), 100, seed=0)


class TreeOracleTests(unittest.TestCase):

    @classmethod
    def setUpClass(cls):
        cls.grid = Grid(0.0, 1.0, 99, 0.1, 200)
        cls.coeffs = FormCoefficients.constant(1.0, 0.0)

    def test_heat_value(self):
        """Testa a árvore no calor: e^{-π²T} sin(πx)"""
        est = snell_oracle(self.coeffs, self.grid, sine, Reaction.zero(), MeasureData.zero(),
                           None, (0.0, 0.5))
        self.assertEqual(est.method, 'tree')
        self.assertEqual(est.stderr, 0.0)
        self.assertAlmostEqual(est.value, HEAT_DECAY, delta=2e-3)

    def test_barrier_equal_to_terminal(self):
        """Testa φ = h = 0.3: o envelope de Snell é exatamente 0.3"""
        est = snell_oracle(self.coeffs, self.grid, 0.3, Reaction.zero(), MeasureData.zero(),
                           Barrier.constant(0.3), (0.0, 0.5))
        self.assertAlmostEqual(est.value, 0.3, delta=1e-12)

    def test_survival_probability(self):
        """Testa a árvore com φ ≡ 1 contra a série de sobrevivência"""
        est = snell_oracle(self.coeffs, self.grid, 1.0, Reaction.zero(), MeasureData.zero(),
                           None, (0.0, 0.5))
        self.assertAlmostEqual(est.value, survival_series(0.1, 0.5), delta=5e-3)

    def test_regime_violations(self):
        """Testa RegimeViolation para coeficientes variáveis e reações dependentes de y"""
        variable = FormCoefficients(a=lambda t, x: 1.0 + x, b=lambda t, x: np.zeros_like(x),
                                    a_floor=1.0)
        with self.assertRaises(RegimeViolation):
            snell_oracle(variable, self.grid, sine, Reaction.zero(), MeasureData.zero(), None,
                         (0.0, 0.5))
        with self.assertRaises(RegimeViolation):
            snell_oracle(self.coeffs, self.grid, sine, Reaction.linear(0.0, -1.0),
                         MeasureData.zero(), None, (0.0, 0.5))
        paths = simulate_paths(self.coeffs, self.grid, (0.0, 0.5), 10, seed=0)
        spatial = MeasureData(space_atoms=(SpaceAtom(0.5, lambda t: np.ones_like(t)),))
        with self.assertRaises(RegimeViolation):
            forward_estimate(paths, sine, Reaction.zero(), spatial)


class ForwardAndRegressionTests(unittest.TestCase):

    @classmethod
    def setUpClass(cls):
        cls.grid = Grid(0.0, 1.0, 49, 0.1, 100)
        cls.coeffs = FormCoefficients.constant(1.0, 0.0)
        cls.form = assemble(cls.coeffs, cls.grid)
        cls.paths = simulate_paths(cls.coeffs, cls.grid, (0.0, 0.5), 20000, seed=20240601)

    def test_forward_heat(self):
        """Testa Feynman-Kac direto no calor dentro da banda"""
        est = forward_estimate(self.paths, sine, Reaction.zero(), MeasureData.zero())
        self.assertLess(abs(est.value - HEAT_DECAY), est.band(1e-2, k=4.0))
        self.assertLessEqual(est.diagnostics['payoff_q01'], est.diagnostics['payoff_q99'])
        self.assertLessEqual(est.diagnostics['payoff_max_abs'], 1.0 + 1e-12)

    def test_rbsde_matches_obstacle(self):
        """Testa a EDSR refletida contra o solver de malha com uma barreira interior"""
        bump = lambda t, x: 0.5 * np.exp(-((x - 0.3) / 0.1) ** 2)
        phi = lambda x: np.maximum(np.sin(np.pi * x), bump(0.0, x))
        barrier = Barrier.piecewise(self.grid, [(0.0, bump)])
        sol = solve_one_barrier(phi, Reaction.zero(), MeasureData.zero(), barrier, self.form,
                                self.grid)
        est = rbsde_backward(self.paths, phi, Reaction.zero(), MeasureData.zero(), lower=barrier)
        self.assertLess(abs(est.value - sol.at(0.0, 0.5)), 3.0 * est.stderr + 1e-2)
        self.assertEqual(est.diagnostics['skorokhod_left'], 0.0)

    def test_rbsde_started_at_terminal_time(self):
        """Testa z0 = (T, x): sem passos, Y0 = φ(x) e stderr nulo"""
        paths = simulate_paths(self.coeffs, self.grid, (self.grid.T, 0.5), 500, seed=2)
        self.assertEqual(paths.n_cols, 1)
        est = rbsde_backward(paths, sine, Reaction.zero(), MeasureData.zero(),
                             lower=Barrier.constant(0.25))
        self.assertAlmostEqual(est.value, 1.0, delta=1e-12)
        self.assertEqual(est.stderr, 0.0)
        self.assertEqual(est.diagnostics['skorokhod_left'], 0.0)
        self.assertAlmostEqual(est.diagnostics['payoff_q99'], 1.0, delta=1e-12)

    def test_precise_skorokhod_at_barrier_jump(self):
        """Testa o resíduo de Skorokhod nulo com limites à esquerda e positivo sem eles"""
        barrier = Barrier.piecewise(self.grid, [(0.0, lambda t, x: 0.5 * np.sin(np.pi * x)),
                                                (0.05, ConstantProfile(0.0))])
        est = rbsde_backward(self.paths, lambda x: 0.5 * np.sin(np.pi * x), Reaction.zero(),
                             MeasureData.zero(), lower=barrier)
        self.assertEqual(est.diagnostics['skorokhod_left'], 0.0)
        self.assertGreater(est.diagnostics['skorokhod_right'],
                           3.0 * est.diagnostics['skorokhod_right_stderr'])
        self.assertGreater(est.diagnostics['mean_push'], 0.0)
        self.assertLess(abs(est.value - 0.5), 3.0 * est.stderr + 1e-2)


class StrategyTests(unittest.TestCase):

    @classmethod
    def setUpClass(cls):
        cls.grid = Grid(0.0, 1.0, 49, 1.0, 100)
        cls.coeffs = FormCoefficients.constant(1.0, 0.0)
        form = assemble(cls.coeffs, cls.grid)
        cost = lambda t, x: np.full(np.shape(x), 0.1)
        modes = (SwitchingMode(phi=0.0, reaction=Reaction.constant(1.0), adjacency=(1,)),
                 SwitchingMode(phi=0.0, reaction=Reaction.constant(-1.0), adjacency=(0,)))
        cls.problem = SwitchingProblem(modes, {(0, 1): cost, (1, 0): cost}, cost_floor=0.1)
        cls.solution = solve_switching_picard(cls.problem, form, cls.grid)
        cls.rule = SwitchingRule(cls.solution, cls.problem)
        cls.paths = simulate_paths(cls.coeffs, cls.grid, (0.0, 0.5), 4000, seed=17)

    def test_value_of_optimal_rule(self):
        """Testa o lucro da regra ótima a partir do modo desfavorável"""
        est = evaluate_strategy(self.paths, self.problem, self.rule, j0=1)
        self.assertEqual(est.diagnostics['mean_switches'], 1.0)
        self.assertLess(abs(est.value - self.solution.at(1, 0.0, 0.5)), est.band(2e-2, k=4.0))

    def test_perturbations_do_not_improve(self):
        """Testa que estratégias perturbadas não superam a regra ótima"""
        reference, _ = strategy_payoffs(self.paths, self.problem, self.rule, 1)
        candidates = perturbed_rules(self.rule, self.problem, 5, seed=3)
        self.assertEqual([name for name, _ in candidates][0], 'never-switch')
        for name, candidate in candidates:
            payoff, _ = strategy_payoffs(self.paths, self.problem, candidate, 1)
            mean, stderr = paired_gap(reference, payoff)
            self.assertLessEqual(mean, 3.0 * stderr + 1e-12, name)


if __name__ == '__main__':
    unittest.main()
