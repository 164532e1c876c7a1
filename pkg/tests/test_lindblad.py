import unittest

import numpy as np

from clsi_lab.errors import DegenerateGeneratorError, DimensionMismatchError, NotHermitianError
from clsi_lab.fixedpoint import commutant_basis, conditional_expectation
from clsi_lab.lindblad import (
    amplify,
    apply,
    build_generator,
    derivation,
    double_commutator,
    evolve,
    propagate,
    semigroup,
    spectral_gap,
    zero_multiplicity,
)
from clsi_lab.linalg import choi_matrix, random_density, random_hermitian

SX = np.array([[0, 1], [1, 0]], dtype=complex)
SY = np.array([[0, -1j], [1j, 0]], dtype=complex)
SZ = np.diag([1.0, -1.0]).astype(complex)


def _random_operator(n, rng):
    return random_hermitian(n, rng) + 1j * random_hermitian(n, rng)


class TestGenerator(unittest.TestCase):
    """Symmetric Lindbladians built from self-adjoint jumps."""

    def test_sandwich_and_double_commutator_agree(self):
        """Test that the sandwich superoperator matches the double-commutator form."""
        rng = np.random.default_rng(1)
        for _ in range(20):
            # Setup
            n = int(rng.integers(2, 6))
            s = int(rng.integers(1, 4))
            gen = build_generator([random_hermitian(n, rng) for _ in range(s)])
            x = _random_operator(n, rng)

            # Verify
            np.testing.assert_allclose(apply(gen, x), double_commutator(gen, x), atol=1e-10)
            np.testing.assert_allclose(gen.superop.apply(x), apply(gen, x), atol=1e-10)

    def test_dephasing_gap(self):
        """Test that σ_z dephasing has gap 4 and a two-dimensional kernel."""
        gen = build_generator([SZ])

        self.assertAlmostEqual(spectral_gap(gen), 4.0, places=10)
        self.assertEqual(zero_multiplicity(gen), 2)

    def test_depolarizing_gap(self):
        """Test that the three Paulis give gap 8 and a one-dimensional kernel."""
        gen = build_generator([SX, SY, SZ])

        self.assertAlmostEqual(spectral_gap(gen), 8.0, places=10)
        self.assertEqual(zero_multiplicity(gen), 1)

    def test_empty_generator(self):
        """Test that L = 0 has no spectral gap."""
        gen = build_generator([], dim=2)
        with self.assertRaises(DegenerateGeneratorError):
            spectral_gap(gen)

    def test_empty_generator_needs_dim(self):
        with self.assertRaises(DimensionMismatchError):
            build_generator([])

    def test_declared_dim_mismatch(self):
        with self.assertRaises(DimensionMismatchError):
            build_generator([SZ], dim=3)

    def test_non_hermitian_jump(self):
        with self.assertRaises(NotHermitianError):
            build_generator([np.array([[0, 1], [0, 0]])])


class TestDerivation(unittest.TestCase):
    """δ(x) = (i[a_k, x])_k and its relation to L."""

    def setUp(self):
        self.rng = np.random.default_rng(9)
        self.gen = build_generator([random_hermitian(3, self.rng) for _ in range(2)])

    def test_pauli_commutator(self):
        """Test that i[σ_z, σ_x] = −2σ_y."""
        out = derivation(build_generator([SZ]), SX)

        # Verify
        self.assertEqual(len(out), 1)
        np.testing.assert_allclose(out[0], -2 * SY, atol=1e-14)

    def test_leibniz_rule(self):
        """Test that δ(xy) = δ(x)y + xδ(y) component by component."""
        # Setup
        x = _random_operator(3, self.rng)
        y = _random_operator(3, self.rng)

        lhs = derivation(self.gen, x @ y)
        rhs = [dx @ y + x @ dy for dx, dy in zip(derivation(self.gen, x), derivation(self.gen, y))]

        # Verify
        for left, right in zip(lhs, rhs):
            np.testing.assert_allclose(left, right, atol=1e-10)

    def test_dirichlet_form(self):
        """Test that tr(x† L(x)) = Σ_k ‖i[a_k, x]‖²."""
        for _ in range(5):
            # Setup
            x = _random_operator(3, self.rng)

            form = np.trace(x.conj().T @ apply(self.gen, x))
            norms = sum(np.linalg.norm(d, "fro") ** 2 for d in derivation(self.gen, x))

            # Verify
            self.assertLess(abs(form - norms), 1e-10 * max(1.0, norms))


class TestSemigroup(unittest.TestCase):
    """T_t = e^{−tL} and the evolution of states."""

    def setUp(self):
        rng = np.random.default_rng(4)
        self.rng = rng
        self.gen = build_generator([random_hermitian(3, rng), random_hermitian(3, rng)])

    def test_quantum_markov_properties(self):
        """Test complete positivity, unitality, trace preservation and self-adjointness."""
        for t in (0.1, 1.0, 10.0):
            # Setup
            tt = semigroup(self.gen, t)
            x = random_hermitian(3, self.rng)

            # Verify
            self.assertGreaterEqual(np.linalg.eigvalsh(choi_matrix(tt))[0], -1e-9)
            np.testing.assert_allclose(tt.apply(np.eye(3)), np.eye(3), atol=1e-10)
            self.assertAlmostEqual(np.trace(tt.apply(x)), np.trace(x), places=10)
            self.assertTrue(tt.is_hermitian())

    def test_semigroup_law(self):
        """Test that T_0.4 ∘ T_0.3 = T_0.7."""
        x = random_hermitian(3, self.rng)
        np.testing.assert_allclose(
            propagate(self.gen, propagate(self.gen, x, 0.3), 0.4),
            propagate(self.gen, x, 0.7),
            atol=1e-10,
        )

    def test_dephasing_evolution(self):
        """Test that dephasing keeps the diagonal and damps coherences by e^{−4t}."""
        # Setup
        gen = build_generator([SZ])
        rho = np.full((2, 2), 0.5, dtype=complex)

        out = evolve(gen, rho, 0.25)

        # Verify
        self.assertAlmostEqual(out[0, 1].real, 0.5 * np.exp(-1.0), places=12)
        self.assertAlmostEqual(out[0, 0].real, 0.5, places=12)

    def test_long_time_limit_is_conditional_expectation(self):
        """Test that ρ evolved to t = 50/gap sits on E_N(ρ)."""
        for jumps in ([SZ], [random_hermitian(3, self.rng), random_hermitian(3, self.rng)]):
            # Setup
            gen = build_generator(jumps)
            rho = random_density(gen.dim, self.rng)
            target = conditional_expectation(commutant_basis(gen), rho)

            out = evolve(gen, rho, 50.0 / spectral_gap(gen))

            # Verify
            self.assertLess(np.linalg.norm(out - target, "fro"), 1e-8)

    def test_evolve_at_zero_returns_state(self):
        rho = random_density(3, self.rng)
        np.testing.assert_allclose(evolve(self.gen, rho, 0.0), rho)

    def test_negative_time(self):
        """Test that negative times are rejected by both entry points."""
        with self.assertRaises(ValueError):
            semigroup(self.gen, -1.0)
        with self.assertRaises(ValueError):
            evolve(self.gen, np.eye(3) / 3, -0.1)

    def test_state_of_wrong_size(self):
        with self.assertRaises(DimensionMismatchError):
            evolve(self.gen, np.eye(2) / 2, 1.0)


class TestAmplify(unittest.TestCase):
    """L ⊗ id_m on M_n ⊗ M_m."""

    def test_ancilla_keeps_gap(self):
        """Test that the ancilla lift has the same gap and m = 1 is a no-op."""
        gen = build_generator([SZ])

        lifted = amplify(gen, 2)

        # Verify
        self.assertEqual(lifted.dim, 4)
        self.assertAlmostEqual(spectral_gap(lifted), spectral_gap(gen), places=10)
        self.assertIs(amplify(gen, 1), gen)

    def test_invalid_ancilla(self):
        with self.assertRaises(ValueError):
            amplify(build_generator([SZ]), 0)


if __name__ == "__main__":
    unittest.main()
