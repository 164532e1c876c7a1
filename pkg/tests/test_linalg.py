import math
import unittest

import numpy as np
from scipy.integrate import quad_vec

from clsi_lab.errors import DimensionMismatchError, DomainError, NotHermitianError, RankDeficiencyError
from clsi_lab.linalg import (
    choi_matrix,
    density,
    divided_difference_transform,
    eigh,
    is_completely_positive,
    jacobi_eigh,
    matrix_from_json,
    matrix_function,
    matrix_to_json,
    random_density,
    random_hermitian,
    random_unitary,
    sandwich,
    unvec,
    vec,
    vectorize_map,
)

SIGMA_X = np.array([[0.0, 1.0], [1.0, 0.0]])


class TestValidation(unittest.TestCase):
    """Input checks on matrices and states."""

    def test_density_rejects_wrong_trace(self):
        """Test that a state with trace 1.2 is rejected."""
        with self.assertRaises(ValueError):
            density(np.diag([0.6, 0.6]))

    def test_density_rejects_negative_state(self):
        """Test that a clearly negative eigenvalue is rejected."""
        with self.assertRaises(ValueError):
            density(np.diag([1.2, -0.2]))

    def test_density_clamps_tiny_negative_eigenvalue(self):
        """Test that round-off negativity is clamped and the trace restored."""
        rho = density(np.diag([1.0 + 1e-11, -1e-11]))

        # Verify
        self.assertGreaterEqual(np.linalg.eigvalsh(rho)[0], 0.0)
        self.assertAlmostEqual(float(np.real(np.trace(rho))), 1.0, places=12)

    def test_non_hermitian_operator(self):
        with self.assertRaises(NotHermitianError):
            density([[0.5, 0.3], [0.0, 0.5]])

    def test_non_square_matrix(self):
        with self.assertRaises(DimensionMismatchError):
            density(np.ones((2, 3)))


class TestEigendecomposition(unittest.TestCase):
    """LAPACK and Jacobi eigensolvers and matrix functions."""

    def setUp(self):
        self.rng = np.random.default_rng(7)

    def test_jacobi_matches_lapack(self):
        """Test that the Jacobi sweep agrees with LAPACK on random Hermitian matrices."""
        for n in (2, 3, 5, 8):
            # Setup
            a = random_hermitian(n, self.rng)
            w_ref = np.linalg.eigvalsh(a)

            w, v = jacobi_eigh(a)

            # Verify eigenvalues, eigenvectors and orthonormality
            np.testing.assert_allclose(w, w_ref, atol=1e-10)
            np.testing.assert_allclose(a @ v, v * w, atol=1e-9)
            np.testing.assert_allclose(v.conj().T @ v, np.eye(n), atol=1e-10)

    def test_eigh_reconstructs(self):
        """Test that U diag(w) U† reproduces the input with ascending w."""
        a = random_hermitian(6, self.rng)

        w, u = eigh(a)

        # Verify
        np.testing.assert_allclose((u * w) @ u.conj().T, a, atol=1e-12)
        self.assertTrue(np.all(np.diff(w) >= 0))

    def test_diagonal_input(self):
        """Test that diag(3,1,2) gives eigenvalues 1,2,3 and permutation eigenvectors."""
        w, u = eigh(np.diag([3.0, 1.0, 2.0]))

        # Verify
        np.testing.assert_allclose(w, [1.0, 2.0, 3.0], atol=1e-14)
        np.testing.assert_allclose(np.abs(u), [[0, 0, 1], [1, 0, 0], [0, 1, 0]], atol=1e-14)

    def test_matrix_function_log_exp(self):
        """Test that exp(log(ρ)) returns ρ."""
        rho = random_density(4, self.rng)

        back = matrix_function(matrix_function(rho, np.log), np.exp)

        np.testing.assert_allclose(back, rho, atol=1e-10)

    def test_log_of_singular_state(self):
        """Test that log on a zero eigenvalue raises with the offending value."""
        with self.assertRaises(DomainError) as ctx:
            matrix_function(np.diag([1.0, 0.0]), np.log, "log")
        self.assertEqual(ctx.exception.eigenvalue, 0.0)


class TestDividedDifference(unittest.TestCase):
    """The transform J^f_σ in the eigenbasis of σ."""

    def setUp(self):
        self.rng = np.random.default_rng(3)

    def test_matches_derivative_of_log(self):
        """Test that J^log_σ(X) is the Fréchet derivative of log at σ in direction X."""
        # Setup
        sigma = random_density(3, self.rng)
        x = random_hermitian(3, self.rng)
        h = 1e-6

        numeric = (matrix_function(sigma + h * x, np.log) - matrix_function(sigma - h * x, np.log)) / (2 * h)

        np.testing.assert_allclose(divided_difference_transform(sigma, x), numeric, atol=1e-6)

    def test_degenerate_spectrum_uses_derivative(self):
        """Test that σ = I/2 multiplies X by log′(1/2) = 2."""
        np.testing.assert_allclose(divided_difference_transform(np.eye(2) / 2, SIGMA_X), 2 * SIGMA_X, atol=1e-12)

    def test_off_diagonal_factor(self):
        """Test that σ = diag(1/3, 2/3) scales σ_x by 3·log 2."""
        out = divided_difference_transform(np.diag([1 / 3, 2 / 3]), SIGMA_X)

        # Verify
        expected = 3 * math.log(2) * SIGMA_X
        np.testing.assert_allclose(out, expected, atol=1e-12)

    def test_identity_function_returns_input(self):
        """Test that f(λ) = λ has divided difference 1 and leaves X unchanged."""
        # Setup
        sigma = random_density(4, self.rng)
        x = random_hermitian(4, self.rng)

        out = divided_difference_transform(sigma, x, f=lambda w: w, fprime=np.ones_like)

        np.testing.assert_allclose(out, x, atol=1e-12)

    def test_self_adjoint(self):
        """Test that tr(Y·J(X)) = tr(J(Y)·X) for Hermitian X and Y."""
        # Setup
        sigma = random_density(4, self.rng)
        x = random_hermitian(4, self.rng)
        y = random_hermitian(4, self.rng)

        lhs = np.trace(y @ divided_difference_transform(sigma, x))
        rhs = np.trace(divided_difference_transform(sigma, y) @ x)

        self.assertLess(abs(lhs - rhs), 1e-10)

    def test_matches_resolvent_integral(self):
        """Test that J^log_σ(X) equals ∫₀^∞ (σ+r)⁻¹ X (σ+r)⁻¹ dr."""
        # Setup: real σ and X keep the integrand real
        a = self.rng.standard_normal((3, 3))
        sigma = a @ a.T + 0.1 * np.eye(3)
        sigma /= np.trace(sigma)
        b = self.rng.standard_normal((3, 3))
        x = (b + b.T) / 2

        def integrand(r):
            inv = np.linalg.inv(sigma + r * np.eye(3))
            return inv @ x @ inv

        integral, _ = quad_vec(integrand, 0.0, np.inf)

        np.testing.assert_allclose(divided_difference_transform(sigma, x).real, integral, atol=1e-4)

    def test_singular_sigma(self):
        with self.assertRaises(RankDeficiencyError):
            divided_difference_transform(np.diag([1.0, 0.0]), np.eye(2))


class TestSuperoperators(unittest.TestCase):
    """Column-stacking vectorization, Choi matrices and complete positivity."""

    def test_sandwich_is_column_stacked(self):
        """Test that sandwich(a, b)·vec(x) = vec(a x b)."""
        rng = np.random.default_rng(11)
        a, b, x = (random_hermitian(3, rng) for _ in range(3))

        # Verify
        np.testing.assert_allclose(sandwich(a, b) @ vec(x), vec(a @ x @ b), atol=1e-12)
        np.testing.assert_allclose(unvec(vec(x)), x)

    def test_unitary_conjugation_is_cp(self):
        u = random_unitary(3, np.random.default_rng(5))
        channel = vectorize_map(lambda x: u.conj().T @ x @ u, 3)
        self.assertTrue(is_completely_positive(channel))

    def test_transpose_is_not_cp(self):
        """Test that the transpose map fails the Choi positivity check."""
        transpose = vectorize_map(lambda x: x.T, 2)
        self.assertFalse(is_completely_positive(transpose))

    def test_choi_of_identity_is_maximally_entangled(self):
        choi = choi_matrix(vectorize_map(lambda x: x, 2))
        self.assertAlmostEqual(float(np.linalg.eigvalsh(choi)[-1]), 2.0, places=12)


class TestJson(unittest.TestCase):
    """Matrix (de)serialization."""

    def test_complex_entries(self):
        """Test that [re, im] pairs and plain reals can be mixed."""
        m = matrix_from_json([[[1, 0], [0, -1]], [[0, 1], 2]])

        # Verify
        np.testing.assert_allclose(m, [[1, -1j], [1j, 2]])
        self.assertEqual(matrix_to_json(m)[0][1], [0.0, -1.0])

    def test_bad_pair(self):
        with self.assertRaises(ValueError):
            matrix_from_json([[[1, 2, 3]]])

    def test_scalar_instead_of_rows(self):
        """Test that a bare number is rejected with the field name."""
        with self.assertRaises(ValueError) as ctx:
            matrix_from_json(5, "jumps[0]")
        self.assertIn("jumps[0]", str(ctx.exception))

    def test_scalar_row(self):
        with self.assertRaises(ValueError) as ctx:
            matrix_from_json([[1, 0], 3], "state")
        self.assertIn("state[1]", str(ctx.exception))

    def test_ragged_rows(self):
        with self.assertRaises(DimensionMismatchError):
            matrix_from_json([[1, 0], [0]])

    def test_non_numeric_entry(self):
        """Test that strings, None and booleans are not accepted as entries."""
        for entry in ("1", None, True):
            with self.assertRaises(ValueError):
                matrix_from_json([[entry, 0], [0, 1]])

    def test_random_density_is_state(self):
        rho = random_density(4, np.random.default_rng(0), rank=1)
        self.assertTrue(math.isclose(float(np.real(np.trace(rho @ rho))), 1.0, abs_tol=1e-12))


if __name__ == "__main__":
    unittest.main()
