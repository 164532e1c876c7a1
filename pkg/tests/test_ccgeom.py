import math
import unittest

import numpy as np

from clsi_lab.ccgeom import (
    HorizontalPath,
    cc_diameter,
    cc_distance_between,
    cc_distance_upper,
    lift_path,
    path_endpoint,
    squared_residual,
    structured_targets,
)
from clsi_lab.errors import DimensionMismatchError
from clsi_lab.liegroup import SU2, group_exp, group_inverse, su2_system, torus_system


class TestPaths(unittest.TestCase):
    """Piecewise-constant horizontal paths."""

    def test_torus_endpoint(self):
        """Test that torus segments add their phases."""
        h = torus_system(2, [[1.0, 0.0], [0.0, 1.0]])

        g = path_endpoint(h, [[0.5, 0.0], [0.0, 1.0], [0.25, 0.0]])

        np.testing.assert_allclose(g, np.diag(np.exp(1j * np.array([0.75, 1.0]))), atol=1e-12)

    def test_su2_segment_matches_group_exp(self):
        h = su2_system(["X", "Y", "Z"])
        v = [0.3, -1.2, 0.7]
        np.testing.assert_allclose(path_endpoint(h, [v]), group_exp(SU2, v), atol=1e-12)

    def test_reversed_path_reaches_inverse(self):
        """Test that running the controls backwards reaches g⁻¹ with the same length."""
        # Setup
        h = su2_system(["X", "Y"])
        path = HorizontalPath(np.random.default_rng(6).normal(size=(6, 2)))
        reverse = HorizontalPath(-path.controls[::-1])

        # Verify
        self.assertAlmostEqual(reverse.length, path.length, places=12)
        np.testing.assert_allclose(reverse.endpoint(h), group_inverse(path.endpoint(h)), atol=1e-12)

    def test_refine_keeps_endpoint_and_length(self):
        """Test that splitting segments changes neither endpoint nor length."""
        h = su2_system(["X", "Y"])
        path = HorizontalPath(np.random.default_rng(0).normal(size=(4, 2)))

        finer = path.refine()

        # Verify
        self.assertEqual(finer.K, 8)
        self.assertAlmostEqual(finer.length, path.length, places=12)
        np.testing.assert_allclose(finer.endpoint(h), path.endpoint(h), atol=1e-12)

    def test_lift_into_larger_system(self):
        """Test that a {X,Y} path lifts into {X,Y,Z} but not the other way round."""
        # Setup
        sub = su2_system(["X", "Y"])
        full = su2_system(["X", "Y", "Z"])
        path = HorizontalPath(np.random.default_rng(1).normal(size=(4, 2)))

        lifted = lift_path(path, sub, full)

        # Verify
        self.assertAlmostEqual(lifted.length, path.length, places=12)
        np.testing.assert_allclose(lifted.endpoint(full), path.endpoint(sub), atol=1e-12)
        with self.assertRaises(DimensionMismatchError):
            lift_path(HorizontalPath(np.array([[0.0, 0.0, 1.0]])), full, sub)


class TestDistance(unittest.TestCase):
    """Feasible path lengths, hence upper bounds on the CC distance."""

    def test_half_circle(self):
        """Test that −1 on the circle is reached with length π."""
        h = torus_system(1, [[1.0]])

        length, path = cc_distance_upper(h, np.array([[-1.0 + 0j]]), K=2, opt_budget=50)

        # Verify
        self.assertAlmostEqual(length, math.pi, delta=1e-3)
        self.assertLessEqual(squared_residual(h, path, np.array([[-1.0 + 0j]])), 1e-8)

    def test_quarter_circle(self):
        length, _ = cc_distance_upper(torus_system(1, [[1.0]]), np.array([[1j]]), K=2, opt_budget=50)
        self.assertAlmostEqual(length, math.pi / 2, delta=1e-3)

    def test_minus_identity_with_full_basis(self):
        """Test that −I is 2π away under the bi-invariant metric."""
        h = su2_system(["X", "Y", "Z"])

        length, _ = cc_distance_upper(h, -np.eye(2), K=4, opt_budget=50)

        self.assertAlmostEqual(length, 2 * math.pi, delta=1e-3)

    def test_symmetry(self):
        """Test that d(e, g) and d(e, g⁻¹) agree within 2%."""
        h = su2_system(["X", "Y", "Z"])
        for v in ([0.4, -0.3, 0.6], [1.5, 0.2, -0.9]):
            # Setup
            g = group_exp(SU2, v)

            forward, _ = cc_distance_upper(h, g, K=4, opt_budget=50, seed=0)
            backward, _ = cc_distance_upper(h, group_inverse(g), K=4, opt_budget=50, seed=0)

            # Verify
            self.assertAlmostEqual(backward / forward, 1.0, delta=0.02)

    def test_triangle_inequality(self):
        """Test that d(e, gk) ≤ d(e, g) + d(e, k) within 2% on sampled pairs."""
        rng = np.random.default_rng(13)
        for system in (su2_system(["X", "Y", "Z"]), torus_system(2, [[1.0, 0.0], [0.0, 1.0]])):
            for _ in range(3):
                # Setup
                if system.group == SU2:
                    g, k = (group_exp(SU2, rng.normal(size=3)) for _ in range(2))
                else:
                    g, k = (np.diag(np.exp(1j * rng.uniform(-math.pi, math.pi, size=2))) for _ in range(2))

                d_g, _ = cc_distance_upper(system, g, K=4, opt_budget=50)
                d_k, _ = cc_distance_upper(system, k, K=4, opt_budget=50)
                d_gk, _ = cc_distance_upper(system, g @ k, K=4, opt_budget=50)

                # Verify
                self.assertLessEqual(d_gk, 1.02 * (d_g + d_k))

    def test_left_invariance(self):
        """Test that d(g, k) = d(e, g⁻¹k) on the circle."""
        h = torus_system(1, [[1.0]])
        g = np.array([[np.exp(0.4j)]])
        k = np.array([[np.exp(1.4j)]])

        length, _ = cc_distance_between(h, g, k, K=2, opt_budget=50)

        self.assertAlmostEqual(length, 1.0, delta=1e-3)

    def test_warm_start_caps_length(self):
        """Test that a feasible warm start bounds the returned length."""
        h = torus_system(1, [[1.0]])
        target = np.array([[np.exp(0.5j)]])
        warm = HorizontalPath(np.array([[0.25], [0.25]]))

        length, _ = cc_distance_upper(h, target, K=2, opt_budget=20, warm_start=warm)

        self.assertLessEqual(length, warm.length + 1e-12)

    def test_not_bracket_generating(self):
        with self.assertRaises(ValueError):
            cc_distance_upper(torus_system(2, [[1.0, 0.0]]), np.eye(2))

    def test_too_few_segments(self):
        """Test that {X,Y} needs at least four segments."""
        with self.assertRaises(ValueError):
            cc_distance_upper(su2_system(["X", "Y"]), -np.eye(2), K=3)

    def test_target_shape(self):
        with self.assertRaises(DimensionMismatchError):
            cc_distance_upper(torus_system(1, [[1.0]]), np.eye(2), K=2)


class TestDiameter(unittest.TestCase):
    """Maxima over structured and Haar-sampled targets."""

    def test_circle(self):
        """Test that the circle has diameter π, attained at −1."""
        est = cc_diameter(torus_system(1, [[1.0]]), n_targets=4, K=2, opt_budget=50, seed=0, max_workers=2)

        # Verify
        self.assertAlmostEqual(est.d_x, math.pi, delta=1e-3)
        self.assertEqual(est.argmax.label, "diag(-1,)")
        self.assertTrue(est.to_dict()["upper_bound"])

    def test_flat_two_torus(self):
        """Test that the flat 2-torus has diameter π√2."""
        h = torus_system(2, [[1.0, 0.0], [0.0, 1.0]])

        est = cc_diameter(h, n_targets=4, K=2, opt_budget=50, seed=1, max_workers=2)

        self.assertAlmostEqual(est.d_x, math.pi * math.sqrt(2), delta=1e-2)

    def test_structured_targets(self):
        """Test that −I and the torus corners are injected as candidates."""
        labels = [label for label, _ in structured_targets(su2_system(["X", "Y"]))]

        # Verify
        self.assertIn("-I", labels)
        self.assertEqual(len(structured_targets(torus_system(2, [[1.0, 0.0], [0.0, 1.0]]))), 3)


if __name__ == "__main__":
    unittest.main()
