"""Finite-dimensional H-invariant spaces spanned by Phi(wp) wp^n."""
import itertools
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

import config
from difffield import EVEN, FieldExpr, RationalFunction
from elliptic import PERIOD_PARITY, point_values
from errors import InvarianceViolationError, NonIntegerDimensionError, SignChoiceError
from operators import CouplingVector, apply_operator, hamiltonian

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SignChoice:
    """alpha_i in {-l_i, l_i + 1} for each i, with d = -sum(alpha)/2."""
    l: CouplingVector
    alpha: tuple

    def __post_init__(self):
        l = self.l if isinstance(self.l, CouplingVector) else CouplingVector(tuple(self.l))
        object.__setattr__(self, 'l', l)
        alpha = tuple(float(a) for a in self.alpha)
        if len(alpha) != 4:
            raise SignChoiceError(f"sign choice needs four entries, got {self.alpha}")
        for i, (a, li) in enumerate(zip(alpha, l.l)):
            if abs(a + li) > 1e-12 and abs(a - li - 1) > 1e-12:
                raise SignChoiceError(
                    f"alpha_{i} = {a:g} is neither -l_{i} = {-li:g} nor l_{i} + 1 = {li + 1:g}")
        object.__setattr__(self, 'alpha', alpha)

    @classmethod
    def all_for(cls, l):
        l = l if isinstance(l, CouplingVector) else CouplingVector(tuple(l))
        seen, out = set(), []
        for alpha in itertools.product(*[(-v, v + 1) for v in l.l]):
            if alpha not in seen:
                seen.add(alpha)
                out.append(cls(l, alpha))
        return out

    @property
    def d(self):
        return -sum(self.alpha) / 2

    @property
    def has_integer_dimension(self):
        return self.d > -1e-12 and abs(self.d - round(self.d)) < 1e-12

    def integer_dimension(self, allow_minus_one=False):
        d = self.d
        lowest = -1 if allow_minus_one else 0
        if abs(d - round(d)) > 1e-12 or round(d) < lowest:
            raise NonIntegerDimensionError(d)
        return int(round(d))

    def field_exponents(self):
        """(alpha_1, alpha_2, alpha_3) as integers; Phi = s1^a1 s2^a2 s3^a3."""
        exps = self.alpha[1:]
        if any(abs(a - round(a)) > 1e-12 for a in exps):
            raise SignChoiceError(
                f"alpha_1..3 = {exps} must be integers for Phi to lie in C(wp)(s1, s2, s3)")
        return tuple(int(round(a)) for a in exps)

    def target(self):
        """(alpha_0 + d, ..., alpha_3 + d) normalized under l ~ -l - 1."""
        d = self.d
        return CouplingVector(tuple(a + d for a in self.alpha)).normalized()

    def label(self):
        return ','.join(f"{a:g}" for a in self.alpha)


def as_sign(l, sign):
    if isinstance(sign, SignChoice):
        return sign
    return SignChoice(l if isinstance(l, CouplingVector) else CouplingVector(tuple(l)), tuple(sign))


@dataclass(frozen=True, eq=False)
class QesSpace:
    l: CouplingVector
    sign: SignChoice
    lattice: object
    basis: tuple
    images: tuple = field(repr=False)
    h_matrix: np.ndarray = field(repr=False)
    residual: float = 0.0

    @property
    def d(self):
        return len(self.basis) - 1

    @property
    def gauge(self):
        return self.basis[0]


def build_space(l, sign, lat):
    """Basis Phi wp^n (n = 0..d) and the matrix of H^(l) on it."""
    l = l if isinstance(l, CouplingVector) else CouplingVector(tuple(l))
    sign = as_sign(l, sign)
    d = sign.integer_dimension()
    exps = sign.field_exponents()
    H = hamiltonian(l, lat)
    phi_inv = FieldExpr.monomial(lat, [-a for a in exps])
    basis = tuple(FieldExpr.monomial(lat, exps, n) for n in range(d + 1))
    images = []
    M = np.zeros((d + 1, d + 1), dtype=complex)
    worst = 0.0
    for n, b in enumerate(basis):
        Hb = apply_operator(H, b)
        images.append(Hb)
        ratio = Hb * phi_inv
        rf = ratio.terms.get(EVEN, RationalFunction.constant(0, lat.e))
        quo, rem = rf.polynomial_part()
        scale = max(float(np.max(np.abs(quo))), float(np.max(np.abs(rf.num))), 1e-300)
        leak = float(np.max(np.abs(rem))) if rf.den else 0.0
        if len(quo) > d + 1:
            leak = max(leak, float(np.max(np.abs(quo[d + 1:]))))
        for eps, odd in ratio.terms.items():
            if eps != EVEN:
                leak = max(leak, odd.max_abs())
        leak /= scale
        if leak > config.QES_INVARIANCE_TOL:
            raise InvarianceViolationError(
                f"H b_{n} leaves span(Phi wp^m, m <= {d}) for l={l.label()}, alpha={sign.label()}: "
                f"relative leak {leak:.3e}")
        top = min(len(quo), d + 1)
        M[:top, n] = quo[:top]
        worst = max(worst, leak)
    logger.debug(f"QES space l={l.label()} alpha={sign.label()} d={d} leak={worst:.2e}")
    return QesSpace(l=l, sign=sign, lattice=lat, basis=basis, images=tuple(images),
                    h_matrix=M, residual=worst)


def pointwise_matrix(space, points):
    """h_matrix refitted by least squares from values at sample points."""
    lat = space.lattice
    B = np.zeros((len(points), space.d + 1), dtype=complex)
    R = np.zeros((len(points), space.d + 1), dtype=complex)
    for j, x in enumerate(points):
        p, _, s = point_values(lat, x)
        for n in range(space.d + 1):
            B[j, n] = space.basis[n].evaluate_at(p, s)
            R[j, n] = space.images[n].evaluate_at(p, s)
    M, *_ = linalg.lstsq(B, R)
    return M


def invariance_residual(space, points):
    """max_n,x |H b_n - sum_m M_mn b_m| / max |H b_n| at the points."""
    lat = space.lattice
    worst, scale = 0.0, 0.0
    for x in points:
        p, _, s = point_values(lat, x)
        values = np.array([b.evaluate_at(p, s) for b in space.basis])
        images = np.array([h.evaluate_at(p, s) for h in space.images])
        worst = max(worst, float(np.max(np.abs(images - values @ space.h_matrix))))
        scale = max(scale, float(np.max(np.abs(images))), float(np.max(np.abs(values))))
    return worst / scale if scale else worst


def qes_eigenvalues(space):
    w, v = linalg.eig(space.h_matrix)
    if space.d > 0 and np.linalg.cond(v) > 1e10:
        groups = _multiplicities(w)
        logger.warning(f"h_matrix of l={space.l.label()} alpha={space.sign.label()} is defective; "
                       f"eigenvalue multiplicities {groups}")
    return sorted((complex(x) for x in w), key=lambda z: (round(z.real, 10), round(z.imag, 10)))


def _multiplicities(values, tol=1e-8):
    groups = []
    for v in values:
        for g in groups:
            if abs(g[0] - v) <= tol * (1 + abs(v)):
                g[1] += 1
                break
        else:
            groups.append([complex(v), 1])
    return [(g[0], g[1]) for g in groups]


def qes_eigenfunctions(space):
    """(E, f) pairs with f = sum_m v_m Phi wp^m."""
    w, v = linalg.eig(space.h_matrix)
    out = []
    for idx in np.argsort(w.real, kind='stable'):
        f = FieldExpr.zero(space.lattice)
        for m, coeff in enumerate(v[:, idx]):
            f = f + space.basis[m] * complex(coeff)
        out.append((complex(w[idx]), f))
    return out


def eigen_residual(space, E, f, points):
    """max |(H - E) f| / max (|E f| + |f|) over the points."""
    Hf = apply_operator(hamiltonian(space.l, space.lattice), f)
    worst, scale = 0.0, 0.0
    for x in points:
        p, _, s = point_values(space.lattice, x)
        fv = f.evaluate_at(p, s)
        worst = max(worst, abs(Hf.evaluate_at(p, s) - E * fv))
        scale = max(scale, abs(E * fv) + abs(fv))
    return worst / scale if scale else worst


def qes_monodromy_multiplier(sign, k):
    """Factor picked up by Phi wp^n under x -> x + 2 omega_k."""
    exps = sign.field_exponents()
    flips = sum(a * f for a, f in zip(exps, PERIOD_PARITY[k]))
    return -1 if flips % 2 else 1


def describe_space(space):
    return {
        'l': list(space.l.l),
        'alpha': list(space.sign.alpha),
        'd': space.d,
        'basis': [b.to_dict() for b in space.basis],
        'h_matrix': [[[v.real, v.imag] for v in row] for row in space.h_matrix],
        'eigenvalues': [[v.real, v.imag] for v in qes_eigenvalues(space)],
        'invariance_leak': space.residual,
    }
