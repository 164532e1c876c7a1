import math
import os
import tempfile
import unittest
from unittest.mock import patch

from clsi_lab.bound import (
    IntervalConstant,
    TheoremBound,
    full_pipeline,
    interval_constant,
    theorem_bound,
)
from clsi_lab.config import PipelineConfig, Settings, SystemConfig
from clsi_lab.errors import InconsistencyError, PipelineStageError


def _dephasing(**overrides):
    pipeline = PipelineConfig(
        segments=2, n_targets=2, path_budget=30, mlsi_samples=10, mlsi_budget=2,
        ancillas=[1, 2], verify_states=4, t_points=11,
    )
    fields = dict(group="torus", d=1, weights=[[1], [-1]], directions=[[1.0]], interval_constant=math.pi ** 2,
                  pipeline=pipeline)
    fields.update(overrides)
    return SystemConfig(**fields)


class TestTheoremBound(unittest.TestCase):
    """C / (s·m·d·(1 + m·d)²) and the stated denominator."""

    def test_values(self):
        """Test both denominators for s = 2, m = 4, d = 1, C = 8."""
        bound = theorem_bound(s=2, m=4, d_x=1.0, c_interval=8.0)

        # Verify
        self.assertAlmostEqual(bound.stated, 8.0 / (2 * 4 * 1.0 * 4.0))
        self.assertAlmostEqual(bound.proof, 8.0 / (2 * 4 * 1.0 * 25.0))

    def test_proof_never_exceeds_stated(self):
        for m in (1, 2, 4, 12):
            for d_x in (0.5, math.pi, 2 * math.pi):
                bound = theorem_bound(2, m, d_x, 1.0)
                self.assertLessEqual(bound.proof, bound.stated)

    def test_non_positive_input(self):
        with self.assertRaises(ValueError):
            theorem_bound(0, 1, 1.0, 1.0)
        with self.assertRaises(ValueError):
            theorem_bound(1, 1, 1.0, -1.0)


class TestIntervalConstant(unittest.TestCase):
    """The constant C, from config or from the interval estimator."""

    def test_override(self):
        constant = interval_constant(2.5)
        self.assertEqual((constant.value, constant.source), (2.5, "config"))

    def test_invalid_override(self):
        with self.assertRaises(ValueError):
            interval_constant(-1.0)

    def test_numerical_is_quarter_of_closed_estimate(self):
        """Test that the numerical C is a quarter of the periodic estimate and carries cross-checks."""
        constant = interval_constant(grid=64, seed=0, max_workers=2)

        # Verify
        self.assertEqual(constant.source, "numerical")
        self.assertAlmostEqual(constant.value, constant.closed_estimate / 4)
        self.assertIn("relative_error", constant.cross_checks)


class TestPipeline(unittest.TestCase):
    """End-to-end run on the dephasing system with small budgets."""

    def setUp(self):
        self.settings = Settings(max_workers=2, ancilla_cap=4, seed=0, progress=False)

    def test_dephasing_report(self):
        """Test the report fields, ordering of bounds and flags."""
        report = full_pipeline(_dephasing(), self.settings, seed=5)

        # Verify
        self.assertEqual((report.s, report.m), (1, 2))
        self.assertAlmostEqual(report.d_x, math.pi, delta=1e-3)
        self.assertAlmostEqual(report.gap, 4.0, places=8)
        self.assertLessEqual(report.bound_proof, report.bound_stated)
        self.assertLessEqual(report.bound_proof, report.lambda_est)
        self.assertTrue(all(report.flags.values()))
        self.assertEqual(report.ancillas, [1, 2])

        # Verify the serialized report
        payload = report.to_dict()
        self.assertEqual(payload["schema"], "clsi-lab/report/v1")
        self.assertEqual(set(payload["violations"]), {"1", "2"})
        self.assertIn("verify", payload["timings"])

    def test_ancillas_above_cap_are_skipped(self):
        settings = Settings(max_workers=2, ancilla_cap=1)
        report = full_pipeline(_dephasing(), settings, seed=5)
        self.assertEqual(report.ancillas, [1])

    def test_emit_curves(self):
        """Test that one CSV per verification state is written."""
        with tempfile.TemporaryDirectory() as tmp:
            full_pipeline(_dephasing(), self.settings, seed=5, emit_curves=tmp)
            self.assertEqual(len(os.listdir(tmp)), 4)

    @patch("clsi_lab.bound.theorem_bound")
    def test_crossing_is_reported(self, mock_bound):
        """Test that a bound above the estimate fails the consistency stage."""
        # Setup
        mock_bound.return_value = TheoremBound(1e3, 1e3)

        with self.assertRaises(PipelineStageError) as ctx:
            full_pipeline(_dephasing(), self.settings, seed=5)

        # Verify
        self.assertEqual(ctx.exception.stage, "consistency")
        self.assertIsInstance(ctx.exception.cause, InconsistencyError)

    @patch("clsi_lab.bound.interval_constant")
    def test_stage_failure_is_wrapped(self, mock_constant):
        """Test that an error inside a stage is wrapped with the stage name."""
        mock_constant.side_effect = ValueError("boom")

        with self.assertRaises(PipelineStageError) as ctx:
            full_pipeline(_dephasing(), self.settings)

        self.assertEqual(ctx.exception.stage, "interval")

    @patch("clsi_lab.bound.interval_constant")
    def test_numerical_constant_is_used(self, mock_constant):
        """Test that without a configured C the numerical constant feeds the bound."""
        mock_constant.return_value = IntervalConstant(2.0, "numerical", 8.0, {"consistent": True})

        report = full_pipeline(_dephasing(interval_constant=None), self.settings, seed=5)

        # Verify
        self.assertEqual(report.c_interval, 2.0)
        mock_constant.assert_called_once()


if __name__ == "__main__":
    unittest.main()
