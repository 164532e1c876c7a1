"""
End-to-end checks of the shipped systems.
These run the full pipeline with the budgets stored in configs/ and take several minutes;
run them explicitly with `python -m pytest tests/integration_test_pipeline.py`.
"""

import math
import os
import unittest

import numpy as np

from clsi_lab.bound import full_pipeline
from clsi_lab.ccgeom import cc_diameter
from clsi_lab.config import Settings, load_system_config
from clsi_lab.liegroup import su2_system

CONFIGS = os.path.join(os.path.dirname(__file__), "..", "configs")


class TestShippedSystems(unittest.TestCase):
    """bound_proof <= lambda_est <= gap and no decay violations for every shipped system."""

    def setUp(self):
        self.settings = Settings(max_workers=4, ancilla_cap=4, seed=0)

    def _run(self, name):
        config = load_system_config(os.path.join(CONFIGS, name))
        config.pipeline.ancillas = [1, 2, 3, 4]
        return full_pipeline(config, self.settings, seed=1)

    def _check(self, report):
        self.assertLessEqual(report.bound_proof, report.lambda_est)
        self.assertLessEqual(report.bound_proof, report.gap)
        self.assertTrue(report.flags["decay_ok"])
        self.assertLessEqual(max(report.violations.values()), 1e-10)

    def test_torus_dephasing(self):
        """Test the circle-to-dephasing system: two-element design."""
        report = self._run("torus_dephasing.json")
        self._check(report)
        self.assertEqual(report.m, 2)

    def test_su2_half_xy(self):
        """Test spin 1/2 with two directions."""
        report = self._run("su2_half_xy.json")
        self._check(report)
        self.assertEqual(report.s, 2)

    def test_su2_one_xyz(self):
        """Test spin 1 with the full basis: diameter 2π."""
        report = self._run("su2_one_xyz.json")
        self._check(report)
        self.assertAlmostEqual(report.d_x, 2 * math.pi, delta=0.05)


class TestDiameterStability(unittest.TestCase):
    """Reproducibility of the {X,Y} diameter."""

    def test_seeds_agree_for_two_directions(self):
        """Test that five seeds give {X,Y} diameters within 5%."""
        h = su2_system(["X", "Y"])
        values = [cc_diameter(h, n_targets=8, K=8, opt_budget=100, seed=s, max_workers=4).d_x for s in range(5)]
        self.assertLess((max(values) - min(values)) / np.mean(values), 0.05)

    def test_more_directions_cannot_lengthen(self):
        """Test that adding Z never increases the diameter."""
        xy = cc_diameter(su2_system(["X", "Y"]), n_targets=8, K=8, opt_budget=100, seed=0, max_workers=4).d_x
        xyz = cc_diameter(su2_system(["X", "Y", "Z"]), n_targets=8, K=8, opt_budget=100, seed=0, max_workers=4).d_x
        self.assertLessEqual(xyz, xy * 1.01)


if __name__ == "__main__":
    unittest.main()
