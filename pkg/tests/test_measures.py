"""
Testes dos dados de medida e da sua discretização
"""
import unittest

import numpy as np
from numpy.testing import assert_allclose

from obstacle_kit.exceptions import AtomOutOfDomain
from obstacle_kit.services.forms import FormCoefficients, Grid, assemble
from obstacle_kit.services.measures import (AbsolutelyContinuous, MeasureData, PointAtom,
                                            SpaceAtom, TimeAtom, discretize, potential,
                                            weighted_norm)
from obstacle_kit.services.pde import Reaction, solve_pde


def unit_density(t, x):
    return np.ones_like(x)


class DiscretizeTests(unittest.TestCase):

    @classmethod
    def setUpClass(cls):
        cls.grid = Grid(0.0, 1.0, 9, 1.0, 10)

    def test_absolutely_continuous_mass(self):
        """Testa a conservação da massa da parte absolutamente contínua"""
        load = discretize(MeasureData(ac=(AbsolutelyContinuous(unit_density),)), self.grid)
        self.assertEqual(load.continuous.shape, (10, 11))
        self.assertAlmostEqual(load.total_mass(), 1.0, places=12)
        self.assertEqual(load.atoms, {})

    def test_time_atom_on_grid(self):
        """Testa um átomo temporal num instante da malha"""
        mu = MeasureData(time_atoms=(TimeAtom(0.5, lambda x: 2.0 * np.ones_like(x)),))
        load = discretize(mu, self.grid)
        self.assertEqual(sorted(load.atoms), [5])
        self.assertAlmostEqual(load.atoms[5].sum(), 2.0, places=12)
        self.assertEqual(load.snaps[0].distance, 0.0)

    def test_time_atom_snapped(self):
        """Testa o ajuste de um átomo fora da malha e o respetivo aviso"""
        mu = MeasureData(time_atoms=(TimeAtom(0.34, np.ones_like),))
        with self.assertLogs('obstacle_kit.services.measures', level='WARNING'):
            load = discretize(mu, self.grid)
        self.assertEqual(sorted(load.atoms), [3])
        self.assertAlmostEqual(load.snaps[0].snapped, 0.3)
        self.assertAlmostEqual(load.snaps[0].distance, 0.04)

    def test_stacked_atoms_add(self):
        """Testa que átomos ajustados ao mesmo instante se somam"""
        mu = MeasureData(time_atoms=(TimeAtom(0.5, np.ones_like), TimeAtom(0.51, np.ones_like)))
        load = discretize(mu, self.grid)
        self.assertAlmostEqual(load.atoms[5].sum(), 2.0, places=12)

    def test_point_atom_split(self):
        """Testa a repartição linear de um átomo pontual entre nós vizinhos"""
        mu = MeasureData(point_atoms=(PointAtom(0.5, 0.25, 3.0),))
        load = discretize(mu, self.grid)
        atom = load.atoms[5]
        self.assertAlmostEqual(atom[2], 1.5)
        self.assertAlmostEqual(atom[3], 1.5)
        self.assertAlmostEqual(atom.sum(), 3.0)

    def test_space_atom_rate(self):
        """Testa um átomo espacial com taxa constante num nó"""
        mu = MeasureData(space_atoms=(SpaceAtom(0.3, lambda t: 2.0 * np.ones_like(t)),))
        load = discretize(mu, self.grid)
        assert_allclose(load.continuous[:, 3], 0.2)
        self.assertAlmostEqual(load.total_mass(), 2.0, places=12)

    def test_atom_outside_domain(self):
        """Testa AtomOutOfDomain para átomos em t = 0 ou na fronteira espacial"""
        with self.assertRaises(AtomOutOfDomain):
            discretize(MeasureData(time_atoms=(TimeAtom(0.0, np.ones_like),)), self.grid)
        with self.assertRaises(AtomOutOfDomain):
            discretize(MeasureData(space_atoms=(SpaceAtom(1.0, np.ones_like),)), self.grid)

    def test_load_frame(self):
        """Testa a tabela (k, i, continuous, atom)"""
        mu = MeasureData(time_atoms=(TimeAtom(1.0, np.ones_like),))
        frame = discretize(mu, self.grid).to_frame()
        self.assertEqual(list(frame.columns), ['k', 'i', 'continuous', 'atom'])
        self.assertEqual(len(frame), 11 * 11)
        self.assertAlmostEqual(frame.loc[frame['k'] == 10, 'atom'].sum(), 1.0)


class MeasureAlgebraTests(unittest.TestCase):

    @classmethod
    def setUpClass(cls):
        cls.grid = Grid(0.0, 1.0, 9, 1.0, 10)

    def test_weighted_norm_is_total_variation(self):
        """Testa que a norma com peso 1 é a variação total"""
        mu = MeasureData(ac=(AbsolutelyContinuous(unit_density, sign=-1.0),),
                         time_atoms=(TimeAtom(0.5, lambda x: 2.0 * np.ones_like(x)),))
        norm = weighted_norm(mu, lambda t, x: np.ones_like(x), self.grid)
        self.assertAlmostEqual(norm, 3.0, places=12)

    def test_positive_part(self):
        """Testa a parte positiva de uma medida negativa"""
        mu = MeasureData(ac=(AbsolutelyContinuous(unit_density, sign=-1.0),),
                         point_atoms=(PointAtom(0.5, 0.5, 1.0, sign=-1.0),))
        load = discretize(mu.positive_part(), self.grid)
        self.assertEqual(load.total_mass(), 0.0)

    def test_scaling_and_sum(self):
        """Testa μ + (-1)·μ = 0 após discretização"""
        mu = MeasureData(ac=(AbsolutelyContinuous(unit_density),),
                         time_atoms=(TimeAtom(0.5, np.ones_like),))
        load = discretize(mu + mu.scaled(-1.0), self.grid)
        self.assertAlmostEqual(float(np.abs(load.continuous).max()), 0.0)
        self.assertAlmostEqual(float(np.abs(load.atoms[5]).max()), 0.0)


class PotentialTests(unittest.TestCase):

    @classmethod
    def setUpClass(cls):
        cls.grid = Grid(0.0, 1.0, 19, 0.2, 20)
        cls.form = assemble(FormCoefficients.constant(1.0, 0.0), cls.grid)

    def test_terminal_atom_becomes_terminal_data(self):
        """Testa que o átomo em T passa a dado terminal do potencial"""
        profile = lambda x: np.sin(np.pi * x)
        mu = MeasureData(time_atoms=(TimeAtom(self.grid.T, profile),))
        pot = potential(mu, self.form, self.grid)
        free = solve_pde(profile(self.grid.nodes), Reaction.zero(), MeasureData.zero(),
                         self.form, self.grid)
        assert_allclose(pot.u, free.u, atol=1e-12)

    def test_potential_is_monotone(self):
        """Testa μ₁ ≤ μ₂ ⇒ potencial(μ₁) ≤ potencial(μ₂)"""
        mu1 = MeasureData(ac=(AbsolutelyContinuous(unit_density),))
        mu2 = mu1 + MeasureData(time_atoms=(TimeAtom(0.1, np.ones_like),),
                                point_atoms=(PointAtom(0.05, 0.3, 0.5),))
        p1 = potential(mu1, self.form, self.grid)
        p2 = potential(mu2, self.form, self.grid)
        self.assertTrue(np.all(p1.u <= p2.u + 1e-12))
        self.assertTrue(np.all(p1.u >= -1e-12))


if __name__ == '__main__':
    unittest.main()
