"""Coupling vectors, operator algebra and the rational/elliptic dictionary."""
import cmath

import pytest

from difffield import FieldExpr, sample_points
from elliptic import wp
from errors import FuchsRelationError, HeunError, LatticeError
from operators import (CouplingVector, DiffOperator, HeunRationalParams, accessory_from_energy,
                       commutator, compose, couplings_from_rational, energy_from_accessory,
                       hamiltonian, heun_transplant_residual, lattice_t, potential_expr,
                       rational_from_couplings, reduce_derivative)


class TestCouplingVector:
    """Normalization l ~ -l - 1 and half-period relabelling."""

    def test_parse_and_label(self):
        l = CouplingVector.parse('2,0,0,0')
        assert l.l == (2.0, 0.0, 0.0, 0.0)
        assert l.label() == '2,0,0,0'

    def test_normalization(self):
        assert CouplingVector((-3, 0, -1, 0.5)).normalized().l == (2.0, 0.0, 0.0, 0.5)

    def test_weights_are_invariant_under_reflection(self):
        a = CouplingVector((2, 1, 0, 0.3))
        b = CouplingVector((-3, -2, -1, -1.3))
        assert all(abs(x - y) < 1e-12 for x, y in zip(a.weights, b.weights))

    def test_relabelled_equivalence(self):
        a = CouplingVector((2, 0, 0, 0))
        b = CouplingVector((0, 2, 0, 0))
        assert not a.equivalent(b)
        assert a.equivalent(b, allow_shift=True)

    def test_wrong_length(self):
        with pytest.raises(HeunError):
            CouplingVector((1, 2, 3))


class TestOperatorAlgebra:
    """Leibniz composition and canonical comparison."""

    def test_derivative_after_multiplication(self, generic):
        p = FieldExpr.wp(generic)
        left = compose(DiffOperator.derivative(generic), DiffOperator.multiplication(p))
        expected = DiffOperator(generic, [p, p.differentiate()])
        assert left.equals(expected)

    def test_hamiltonian_commutes_with_itself(self, generic):
        H = hamiltonian((2, 1, 0, 0), generic)
        assert commutator(H, H).is_zero

    def test_commutator_with_derivative_is_potential_derivative(self, generic):
        H = hamiltonian((2, 0, 0, 0), generic)
        D = DiffOperator.derivative(generic)
        V = potential_expr((2.0, 0.0, 0.0, 0.0), generic)
        # [D, H] = V'
        assert commutator(D, H).equals(DiffOperator.multiplication(V.differentiate()))

    def test_hamiltonian_shape(self, generic):
        H = hamiltonian((2, 0, 0, 0), generic)
        assert H.order == 2
        assert H.coeffs[0].equals(-1)
        assert H.coeffs[2].equals(FieldExpr.wp(generic) * 6)

    def test_second_derivative_reduction(self, generic):
        l = (2, 0, 0, 0)
        E = 1.5 + 0.2j
        a2, b2 = reduce_derivative(2, l, E, generic)
        V = potential_expr((2.0, 0.0, 0.0, 0.0), generic)
        assert a2.equals(V - E)
        assert b2.is_zero

    def test_apply_to_pair_of_hamiltonian(self, generic):
        E = 0.7 - 0.1j
        l = (2, 0, 0, 0)
        A, B = hamiltonian(l, generic).apply_to_pair(l, E)
        # H f = E f along solutions
        assert A.equals(E)
        assert B.is_zero


class TestHeunDictionary:
    """Heun parameters and coupling constants."""

    def test_fuchs_relation_is_enforced(self):
        with pytest.raises(FuchsRelationError):
            HeunRationalParams(gamma=0.3, delta=0.4, epsilon=0.6, alpha=0.7, beta=0.1, q=0, t=0.3 + 0.1j)

    def test_t_must_avoid_zero_and_one(self):
        with pytest.raises(HeunError):
            HeunRationalParams(gamma=0.5, delta=0.5, epsilon=0.5, alpha=0.25, beta=0.25, q=0, t=1.0)

    def test_couplings_roundtrip(self):
        l = CouplingVector((1.2, 0.3, -0.1, 0.4))
        p = rational_from_couplings(l, 0.3 + 0.1j, q=0.5)
        back, t = couplings_from_rational(p)
        assert t == 0.3 + 0.1j
        assert all(abs(a - b) < 1e-12 for a, b in zip(back.l, l.l))

    def test_couplings_of_transform_parameters(self):
        p = HeunRationalParams(gamma=0.3, delta=0.4, epsilon=0.6, alpha=0.7, beta=-0.4, q=0.2, t=0.3 + 0.1j)
        l, _ = couplings_from_rational(p)
        expected = (-1.6, 0.2, 0.1, -0.1)
        assert all(abs(a - b) < 1e-12 for a, b in zip(l.l, expected)), l.l

    def test_couplings_of_symmetric_parameters(self):
        p = HeunRationalParams(gamma=1, delta=1, epsilon=1, alpha=0.5, beta=1.5, q=0, t=0.3 + 0.1j)
        l, _ = couplings_from_rational(p)
        assert l.l == (0.5, -0.5, -0.5, -0.5)

    def test_complex_exponent_is_refused(self):
        p = HeunRationalParams(gamma=0.3 + 0.2j, delta=0.4, epsilon=0.6, alpha=0.7, beta=-0.4 + 0.2j, q=0.2,
                               t=0.3 + 0.1j)
        with pytest.raises(HeunError, match='l0|l1'):
            couplings_from_rational(p)


class TestAccessoryMap:
    """E = -4 (e2 - e1) q + b(l, lattice)."""

    def test_roundtrip(self, generic):
        l = CouplingVector((1, 0, 0, 0))
        p = rational_from_couplings(l, lattice_t(generic), q=0.3 - 0.1j)
        E = energy_from_accessory(p, generic)
        assert abs(accessory_from_energy(E, l, generic) - p.q) < 1e-10

    def test_affine_in_q(self, generic):
        l = CouplingVector((2, 1, 0, 1))
        t = lattice_t(generic)
        E1 = energy_from_accessory(rational_from_couplings(l, t, q=0.0), generic)
        E2 = energy_from_accessory(rational_from_couplings(l, t, q=1.0), generic)
        kappa = generic.e[1] - generic.e[0]
        assert abs((E2 - E1) + 4 * kappa) < 1e-9 * abs(kappa)

    def test_wrong_t(self, generic):
        p = rational_from_couplings((1, 0, 0, 0), 0.3 + 0.1j)
        with pytest.raises(LatticeError):
            energy_from_accessory(p, generic)

    def test_lame_eigenfunction_transplants(self, generic, rng):
        # f = s1 solves -f'' + 2 wp f = -e1 f; in the rational coordinate y = z^(1/2)
        l = CouplingVector((1, 0, 0, 0))
        e1, e2, _ = generic.e
        q = accessory_from_energy(-e1, l, generic)
        p = rational_from_couplings(l, lattice_t(generic), q=q)
        for x in sample_points(generic, rng, 5):
            z = (wp(generic, x) - e1) / (e2 - e1)
            y = cmath.sqrt(z)
            res = heun_transplant_residual(p, generic, z, y, 0.5 / y, -0.25 / (y * z), x)
            assert res <= 1e-8, f"transplant residual {res:.2e} at x={x}"


class TestOperatorInvariances:
    """Composition orders and the reflection l ~ -l - 1."""

    def test_order_of_composition(self, generic):
        H = hamiltonian((2, 0, 0, 0), generic)
        D3 = compose(DiffOperator.derivative(generic), compose(DiffOperator.derivative(generic),
                                                               DiffOperator.derivative(generic)))
        assert compose(H, D3).order == 5

    def test_reflected_couplings_give_same_hamiltonian(self, generic):
        assert hamiltonian((2, 0, 1, 0), generic).equals(hamiltonian((-3, -1, 1, 0), generic))
