"""Differential operators with field coefficients and the Heun/elliptic dictionary."""
import logging
from dataclasses import dataclass
from functools import lru_cache
from math import comb

import numpy as np

import config
from difffield import FieldExpr, RationalFunction, poly_from_roots
from elliptic import point_values
from errors import FuchsRelationError, HeunError, LatticeError, LatticeMismatchError

logger = logging.getLogger(__name__)

# x -> x + omega_i permutes the four terms of the potential
HALF_PERIOD_RELABEL = {
    0: (0, 1, 2, 3),
    1: (1, 0, 3, 2),
    2: (2, 3, 0, 1),
    3: (3, 2, 1, 0),
}


@dataclass(frozen=True)
class CouplingVector:
    l: tuple

    def __post_init__(self):
        if len(self.l) != 4:
            raise HeunError(f"coupling vector needs four entries, got {self.l}")
        object.__setattr__(self, 'l', tuple(float(v) for v in self.l))

    @classmethod
    def parse(cls, text):
        return cls(tuple(float(v) for v in str(text).split(',')))

    def __iter__(self):
        return iter(self.l)

    def __getitem__(self, i):
        return self.l[i]

    @property
    def weights(self):
        return tuple(v * (v + 1) for v in self.l)

    @property
    def is_integer(self):
        return all(abs(v - round(v)) < 1e-12 for v in self.l)

    def normalized(self):
        """Representative with every l_i >= -1/2 under l_i ~ -l_i - 1."""
        return CouplingVector(tuple(-v - 1 if v < -0.5 else v for v in self.l))

    def relabeled(self, i):
        perm = HALF_PERIOD_RELABEL[i]
        return CouplingVector(tuple(self.l[perm[j]] for j in range(4)))

    def equivalent(self, other, tol=1e-10, allow_shift=False):
        if not isinstance(other, CouplingVector):
            other = CouplingVector(tuple(other))
        a = self.normalized().l
        for i in (range(4) if allow_shift else (0,)):
            b = other.relabeled(i).normalized().l
            if all(abs(x - y) <= tol for x, y in zip(a, b)):
                return True
        return False

    def active_poles(self):
        """Indices i whose term l_i (l_i + 1) wp(x + omega_i) is present."""
        return tuple(i for i, w in enumerate(self.weights) if abs(w) > 1e-14)

    def label(self):
        return ','.join(f"{v:g}" for v in self.l)


@dataclass(frozen=True)
class HeunRationalParams:
    gamma: complex
    delta: complex
    epsilon: complex
    alpha: complex
    beta: complex
    q: complex
    t: complex

    def __post_init__(self):
        mismatch = abs(self.gamma + self.delta + self.epsilon - self.alpha - self.beta - 1)
        if mismatch > 1e-12 * (1 + abs(self.alpha) + abs(self.beta)):
            raise FuchsRelationError(
                f"gamma + delta + epsilon - alpha - beta - 1 = {mismatch:.3e} for {self}")
        if abs(self.t) < 1e-14 or abs(self.t - 1) < 1e-14:
            raise HeunError(f"t must avoid 0 and 1, got {self.t}")

    def coefficients(self, z):
        """(p(z), r(z)) of y'' + p y' + r y = 0."""
        p = self.gamma / z + self.delta / (z - 1) + self.epsilon / (z - self.t)
        r = (self.alpha * self.beta * z - self.q) / (z * (z - 1) * (z - self.t))
        return p, r

    def residual(self, z, y, dy, ddy):
        p, r = self.coefficients(z)
        return abs(ddy + p * dy + r * y) / (abs(ddy) + abs(p * dy) + abs(r * y) + 1e-300)


class DiffOperator:
    """sum_k coeffs[k] (d/dx)^(order - k) with FieldExpr coefficients."""

    def __init__(self, lattice, coeffs):
        self.lattice = lattice
        coeffs = [c if isinstance(c, FieldExpr) else FieldExpr.constant(lattice, c) for c in coeffs]
        while len(coeffs) > 1 and coeffs[0].is_zero:
            coeffs = coeffs[1:]
        self.coeffs = coeffs

    @classmethod
    def identity(cls, lat):
        return cls(lat, [1])

    @classmethod
    def derivative(cls, lat):
        return cls(lat, [1, 0])

    @classmethod
    def multiplication(cls, expr):
        return cls(expr.lattice, [expr])

    @classmethod
    def from_powers(cls, lat, powers):
        """Build from a list indexed by derivative order."""
        return cls(lat, list(reversed(powers)) or [0])

    @property
    def order(self):
        return len(self.coeffs) - 1

    def powers(self):
        """Coefficients indexed by derivative order."""
        return list(reversed(self.coeffs))

    def coefficient(self, power):
        p = self.powers()
        return p[power] if power < len(p) else FieldExpr.zero(self.lattice)

    @property
    def is_zero(self):
        return all(c.is_zero for c in self.coeffs)

    def is_monic(self):
        return self.coeffs[0].equals(1)

    def size(self):
        return sum(c.size() for c in self.coeffs)

    def _check(self, other):
        if other.lattice is not self.lattice and other.lattice != self.lattice:
            raise LatticeMismatchError("operators over different lattices were combined")

    def __add__(self, other):
        self._check(other)
        a, b = self.powers(), other.powers()
        n = max(len(a), len(b))
        zero = FieldExpr.zero(self.lattice)
        out = [(a[k] if k < len(a) else zero) + (b[k] if k < len(b) else zero) for k in range(n)]
        return DiffOperator.from_powers(self.lattice, out)

    def __neg__(self):
        return DiffOperator(self.lattice, [-c for c in self.coeffs])

    def __sub__(self, other):
        return self + (-other)

    def scaled(self, factor):
        return DiffOperator(self.lattice, [c * factor for c in self.coeffs])

    def equals(self, other, rtol=config.OPERATOR_EQUAL_RTOL):
        self._check(other)
        a, b = self.powers(), other.powers()
        zero = FieldExpr.zero(self.lattice)
        for k in range(max(len(a), len(b))):
            ca = a[k] if k < len(a) else zero
            cb = b[k] if k < len(b) else zero
            if not ca.equals(cb, rtol):
                return False
        return True

    def numeric_deviation(self, other, points):
        a, b = self.powers(), other.powers()
        zero = FieldExpr.zero(self.lattice)
        worst = 0.0
        for k in range(max(len(a), len(b))):
            ca = a[k] if k < len(a) else zero
            cb = b[k] if k < len(b) else zero
            worst = max(worst, ca.numeric_deviation(cb, points))
        return worst

    def apply_to_pair(self, l, E):
        """(A, B) with L f = A f + B f' for every solution of (H^(l) - E) f = 0."""
        A = FieldExpr.zero(self.lattice)
        B = FieldExpr.zero(self.lattice)
        for power, c in enumerate(self.powers()):
            if c.is_zero:
                continue
            a_n, b_n = reduce_derivative(power, l, E, self.lattice)
            A = A + c * a_n
            B = B + c * b_n
        return A, B

    def apply_numeric(self, x, derivatives, branch_hint=None):
        """sum_k c_k(x) f^(k)(x) from the values derivatives[k] = f^(k)(x)."""
        p, _, s = point_values(self.lattice, x, hint=branch_hint)
        return sum(c.evaluate_at(p, s) * derivatives[k] for k, c in enumerate(self.powers()))

    def to_dict(self):
        return {f"D^{k}": c.to_dict() for k, c in enumerate(self.powers()) if not c.is_zero}

    def pretty(self):
        lines = []
        for k, c in reversed(list(enumerate(self.powers()))):
            if not c.is_zero:
                lines.append(f"D^{k}: {c!r}")
        return '\n'.join(lines) or '0'

    def __repr__(self):
        return f"DiffOperator(order={self.order})"


def compose(A, B):
    """A o B through the Leibniz rule D^p o b = sum_r C(p, r) b^(r) D^(p - r)."""
    A._check(B)
    lat = A.lattice
    a, b = A.powers(), B.powers()
    max_p = len(a) - 1
    derivs = []
    for bq in b:
        chain = [bq]
        for _ in range(max_p):
            chain.append(chain[-1].differentiate())
        derivs.append(chain)
    out = [FieldExpr.zero(lat) for _ in range(len(a) + len(b) - 1)]
    for p, ap in enumerate(a):
        if ap.is_zero:
            continue
        for q in range(len(b)):
            for r in range(p + 1):
                term = derivs[q][r]
                if term.is_zero:
                    continue
                out[p - r + q] = out[p - r + q] + ap * term * comb(p, r)
    return DiffOperator.from_powers(lat, out)


def difference(A, B, rtol=config.OPERATOR_EQUAL_RTOL):
    """A - B with coefficients that agree in canonical form set to exact zero."""
    A._check(B)
    a, b = A.powers(), B.powers()
    zero = FieldExpr.zero(A.lattice)
    out = []
    for k in range(max(len(a), len(b))):
        ca = a[k] if k < len(a) else zero
        cb = b[k] if k < len(b) else zero
        out.append(zero if ca.equals(cb, rtol) else ca - cb)
    return DiffOperator.from_powers(A.lattice, out)


def commutator(A, B):
    return difference(compose(A, B), compose(B, A))


def apply_operator(L, f):
    """L f for a field element f."""
    out = FieldExpr.zero(L.lattice)
    deriv = f
    for power, c in enumerate(L.powers()):
        if power:
            deriv = deriv.differentiate()
        if not c.is_zero:
            out = out + c * deriv
    return out


@lru_cache(maxsize=256)
def potential_expr(l, lat):
    """sum_i l_i (l_i + 1) wp(x + omega_i) as a field element."""
    V = FieldExpr.zero(lat)
    wp = FieldExpr.wp(lat)
    for i, w in enumerate(CouplingVector(l).weights):
        if w != 0:
            V = V + wp.shift_half_period(i) * w
    return V


def hamiltonian(l, lat):
    """-d^2/dx^2 + sum_i l_i (l_i + 1) wp(x + omega_i)."""
    l = CouplingVector(tuple(l))
    return DiffOperator(lat, [-1, 0, potential_expr(l.l, lat)])


@lru_cache(maxsize=1024)
def _reduce_derivative(n, l, E, lat):
    if n == 0:
        return FieldExpr.constant(lat, 1), FieldExpr.zero(lat)
    a, b = _reduce_derivative(n - 1, l, E, lat)
    return pair_derivative(a, b, l, E)


def reduce_derivative(n, l, E, lat):
    """(a_n, b_n) with f^(n) = a_n f + b_n f' for solutions of (H^(l) - E) f = 0."""
    return _reduce_derivative(n, tuple(CouplingVector(tuple(l)).l), complex(E), lat)


def pair_derivative(A, B, l, E):
    """(A' + B (V - E), A + B'): derivative of g = A f + B f' along solutions."""
    V = potential_expr(tuple(CouplingVector(tuple(l)).l), A.lattice)
    return A.differentiate() + B * (V - E), A + B.differentiate()


def evaluate_pair(A, B, x, f, df, branch_hint=None):
    p, _, s = point_values(A.lattice, x, hint=branch_hint)
    return A.evaluate_at(p, s) * f + B.evaluate_at(p, s) * df


# Heun equation in rational form <-> elliptic form

def lattice_t(lat):
    e1, e2, e3 = lat.e
    return (e3 - e1) / (e2 - e1)


def check_t(t, lat, tol=1e-10):
    expected = lattice_t(lat)
    if abs(t - expected) > tol * (1 + abs(expected)):
        raise LatticeError(f"t = {t} does not match (e3 - e1)/(e2 - e1) = {expected} of the lattice")


def couplings_from_rational(p, tol=1e-9):
    """Couplings (l0, l1, l2, l3) and the constraint t = (e3 - e1)/(e2 - e1) on the lattice.

    Couplings are real; complex exponent differences are refused.
    """
    values = []
    for name, v in (('l0', p.beta - p.alpha - 0.5), ('l1', 0.5 - p.gamma),
                    ('l2', 0.5 - p.delta), ('l3', 0.5 - p.epsilon)):
        v = complex(v)
        if abs(v.imag) > tol * (1 + abs(v.real)):
            raise HeunError(f"coupling {name} = {v} is not real; the elliptic form needs real couplings")
        values.append(v.real)
    return CouplingVector(tuple(values)), p.t


def rational_from_couplings(l, t, q=0):
    l0, l1, l2, l3 = CouplingVector(tuple(l)).l
    gamma, delta, epsilon = 0.5 - l1, 0.5 - l2, 0.5 - l3
    alpha = (gamma + delta + epsilon - 1 - l0 - 0.5) / 2
    beta = alpha + l0 + 0.5
    return HeunRationalParams(gamma=gamma, delta=delta, epsilon=epsilon,
                              alpha=alpha, beta=beta, q=q, t=t)


def _gauge_log_derivative(l, t, anchors):
    """Phi'/Phi for Phi = z^(-l1/2) (z-1)^(-l2/2) (z-t)^(-l3/2)."""
    u = RationalFunction.constant(0, anchors)
    for li, root in zip(l[1:], (0, 1, t)):
        if li != 0:
            u = u + RationalFunction.pole(root, 1, anchors) * (-li / 2)
    return u


@lru_cache(maxsize=256)
def gauge_remainder(l, lat):
    """Linear polynomial W(z) = Q u' + Q u^2 + Q' u / 2 - V in the rational coordinate.

    With f = y(z) Phi(z) and z = (wp - e1)/(e2 - e1) the elliptic equation
    becomes Heun's equation exactly when W(z) + E = 4 kappa (alpha beta z - q);
    the returned pair is (W'(0), W(0)).
    """
    e1, e2, e3 = lat.e
    kappa = e2 - e1
    t = lattice_t(lat)
    anchors = (0, 1, t)
    Q = RationalFunction(4 * kappa * poly_from_roots(((0, 1), (1, 1), (t, 1))), (), anchors)
    u = _gauge_log_derivative(l, t, anchors)
    z = RationalFunction.variable(anchors)
    w0, w1, w2, w3 = CouplingVector(l).weights
    c = [(e1 - e2) * (e1 - e3), (e2 - e1) * (e2 - e3), (e3 - e1) * (e3 - e2)]
    V = (z * kappa + e1) * w0
    for w, ei, ci, root in zip((w1, w2, w3), (e1, e2, e3), c, (0, 1, t)):
        if w != 0:
            V = V + (RationalFunction.constant(ei, anchors)
                     + RationalFunction.pole(root, 1, anchors) * (ci / kappa)) * w
    W = Q * u.derivative() + Q * u * u + Q.derivative() * u * 0.5 - V
    quo, rem = W.polynomial_part()
    scale = max(float(np.max(np.abs(quo))), 1.0)
    excess = np.max(np.abs(quo[2:])) if len(quo) > 2 else 0.0
    if np.max(np.abs(rem)) > 1e-8 * scale or excess > 1e-8 * scale:
        raise HeunError(f"gauge transform of couplings {l} did not reduce to Heun form: {W!r}")
    quo = np.pad(quo, (0, max(0, 2 - len(quo))))
    return complex(quo[1]), complex(quo[0])


def energy_from_accessory(p, lat):
    """E = -4 (e2 - e1) q - W(0) for the lattice matching p.t."""
    check_t(p.t, lat)
    l, _ = couplings_from_rational(p)
    kappa = lat.e[1] - lat.e[0]
    slope, offset = gauge_remainder(l.l, lat)
    expected = 4 * kappa * p.alpha * p.beta
    if abs(slope - expected) > 1e-7 * (1 + abs(expected)):
        raise HeunError(f"linear part {slope} of the gauge remainder differs from 4 kappa alpha beta = {expected}")
    return -4 * kappa * p.q - offset


def accessory_from_energy(E, l, lat):
    kappa = lat.e[1] - lat.e[0]
    _, offset = gauge_remainder(CouplingVector(tuple(l)).l, lat)
    return -(E + offset) / (4 * kappa)


def heun_transplant_residual(p, lat, z, y, dy, ddy, x):
    """Relative residual of (H - E) f at x for f = y(z) Phi(z), z = (wp(x) - e1)/(e2 - e1)."""
    e1, e2, _ = lat.e
    kappa = e2 - e1
    t = p.t
    l, _ = couplings_from_rational(p)
    E = energy_from_accessory(p, lat)
    u = sum(-li / 2 / (z - root) for li, root in zip(l.l[1:], (0, 1, t)))
    du = sum(li / 2 / (z - root) ** 2 for li, root in zip(l.l[1:], (0, 1, t)))
    Q = 4 * kappa * z * (z - 1) * (z - t)
    dQ = 4 * kappa * ((z - 1) * (z - t) + z * (z - t) + z * (z - 1))
    # everything divided by Phi(z)
    f = y
    ddf = Q * (ddy + 2 * dy * u + y * (du + u * u)) + dQ / 2 * (dy + y * u)
    V = potential_expr(l.l, lat).evaluate(x)
    res = -ddf + (V - E) * f
    return abs(res) / (abs(ddf) + abs((V - E) * f) + 1e-300)


def random_energies(rng, count, scale=4.0):
    return [complex(v) for v in rng.uniform(-scale, scale, count) + 1j * rng.uniform(-1, 1, count)]
