"""Darboux-Crum operators annihilating the invariant spaces of quasisolvable.py."""
import logging
from dataclasses import dataclass, field

import numpy as np

import config
from difffield import FieldExpr, sample_points
from elliptic import anchor_point, point_values
from errors import HeunError, SingularSystemError
from monodromy import fundamental_at
from operators import (CouplingVector, DiffOperator, compose, hamiltonian,
                       pair_derivative, potential_expr, random_energies)
from quasisolvable import as_sign, build_space

logger = logging.getLogger(__name__)


def _monic(L):
    lead = L.coeffs[0]
    if not lead.equals(1):
        L = DiffOperator(L.lattice, [c / lead for c in L.coeffs])
    return DiffOperator(L.lattice, [FieldExpr.constant(L.lattice, 1)] + L.coeffs[1:])


def closed_form_L(l, sign, lat):
    """wp'^(d+1) Phi o (wp'^-1 D)^(d+1) o Phi^-1 with Phi = s1^a1 s2^a2 s3^a3.

    d = -1 gives the identity.
    """
    l = l if isinstance(l, CouplingVector) else CouplingVector(tuple(l))
    sign = as_sign(l, sign)
    d = sign.integer_dimension(allow_minus_one=True)
    if d == -1:
        return DiffOperator.identity(lat)
    exps = sign.field_exponents()
    phi = FieldExpr.monomial(lat, exps)
    phi_inv = FieldExpr.monomial(lat, [-a for a in exps])
    wpp = FieldExpr.wp_prime(lat)
    step = DiffOperator(lat, [wpp.inverse(), 0])
    L = DiffOperator.multiplication(phi_inv)
    for _ in range(d + 1):
        L = compose(step, L)
    L = compose(DiffOperator.multiplication(phi * wpp ** (d + 1)), L)
    return _monic(L)


def _anchor_magnitude(expr, p, s):
    if expr.is_zero:
        return 0.0
    return abs(expr.evaluate_at(p, s))


def annihilator_L(space):
    """Monic L of order d+1 with L b = 0 on the basis, from the linear system in the field."""
    lat = space.lattice
    basis = space.basis
    n = len(basis)
    derivs = []
    for b in basis:
        chain = [b]
        for _ in range(n):
            chain.append(chain[-1].differentiate())
        derivs.append(chain)
    # row m: sum_j c_j b_m^(n-j) = -b_m^(n), j = 1..n
    rows = [[derivs[m][n - j] for j in range(1, n + 1)] + [-derivs[m][n]] for m in range(n)]
    p, _, s = point_values(lat, anchor_point(lat))
    scale = max(_anchor_magnitude(e, p, s) for row in rows for e in row[:-1]) or 1.0
    for col in range(n):
        pivot_row = max(range(col, n), key=lambda r: _anchor_magnitude(rows[r][col], p, s))
        pivot = rows[pivot_row][col]
        if pivot.is_zero or _anchor_magnitude(pivot, p, s) <= 1e-12 * scale:
            raise SingularSystemError(
                f"basis of l={space.l.label()} alpha={space.sign.label()} is dependent "
                f"(no pivot in column {col + 1})")
        rows[col], rows[pivot_row] = rows[pivot_row], rows[col]
        inv = pivot.inverse()
        rows[col] = [e * inv for e in rows[col]]
        for r in range(n):
            if r == col or rows[r][col].is_zero:
                continue
            factor = rows[r][col]
            rows[r] = [a - factor * b for a, b in zip(rows[r], rows[col])]
            rows[r][col] = FieldExpr.zero(lat)
    coeffs = [FieldExpr.constant(lat, 1)] + [rows[j][n] for j in range(n)]
    return DiffOperator(lat, coeffs)


def annihilates(L, f, rtol=config.FIELD_EQUAL_RTOL):
    """Canonical check of L f = 0: the top-order term cancels the rest."""
    powers = L.powers()
    deriv = f
    derivs = [f]
    for _ in range(len(powers) - 1):
        deriv = deriv.differentiate()
        derivs.append(deriv)
    top = powers[-1] * derivs[-1]
    rest = FieldExpr.zero(L.lattice)
    for c, g in zip(powers[:-1], derivs[:-1]):
        if not c.is_zero:
            rest = rest + c * g
    return top.equals(-rest, rtol)


def partner_hamiltonian(L, l, lat):
    """H + 2 c1' for monic L = D^n + c1 D^(n-1) + ..."""
    H = hamiltonian(l, lat)
    if L.order == 0:
        return H
    c1 = L.coeffs[1]
    V = H.coeffs[2] + c1.differentiate() * 2
    return DiffOperator(lat, [-1, 0, V])


def creation_operator(phi0):
    """-D - phi0'/phi0; composed with D - phi0'/phi0 it gives H - E0."""
    lat = phi0.lattice
    w = phi0.differentiate() / phi0
    return DiffOperator(lat, [-1, -w])


def darboux_shift_target(l, sign):
    l = l if isinstance(l, CouplingVector) else CouplingVector(tuple(l))
    return as_sign(l, sign).target()


def numeric_intertwine_residual(L, l_src, l_tgt, energies, lat, points, basepoint=None, cfg=None):
    """max relative |(H~ - E) L f| over solutions f of (H - E) f = 0 integrated to the points.

    L f is written as A f + B f' along solutions, so (H~ - E) L f = 0 holds
    exactly when the Darboux relation does.
    """
    l_src = l_src if isinstance(l_src, CouplingVector) else CouplingVector(tuple(l_src))
    l_tgt = l_tgt if isinstance(l_tgt, CouplingVector) else CouplingVector(tuple(l_tgt))
    V_tgt = potential_expr(l_tgt.l, lat)
    worst = 0.0
    for E in energies:
        A, B = L.apply_to_pair(l_src, E)
        A1, B1 = pair_derivative(A, B, l_src, E)
        A2, B2 = pair_derivative(A1, B1, l_src, E)
        for x in points:
            frame = fundamental_at(l_src, E, lat, x, basepoint, cfg)
            p, _, s = point_values(lat, x)
            coeffs = [e.evaluate_at(p, s) for e in (A, B, A2, B2)]
            v = V_tgt.evaluate_at(p, s) - E
            for col in range(2):
                f, df = frame.F[0, col], frame.F[1, col]
                g = coeffs[0] * f + coeffs[1] * df
                ddg = coeffs[2] * f + coeffs[3] * df
                res = abs(-ddg + v * g) / (abs(ddg) + abs(v * g) + 1e-300)
                worst = max(worst, res)
    return worst


@dataclass
class IntertwineReport:
    l: CouplingVector
    alpha: tuple
    target: CouplingVector
    order: int
    symbolic: bool | None
    numeric_residual: float
    energies: list = field(default_factory=list)
    method: str = ''

    @property
    def passed(self):
        if self.symbolic is False:
            return False
        return self.numeric_residual <= config.INTERTWINE_TOL

    def to_dict(self):
        return {
            'l': list(self.l.l),
            'alpha': list(self.alpha),
            'target': list(self.target.l),
            'order': self.order,
            'symbolic': self.symbolic,
            'numeric_residual': self.numeric_residual,
            'energies': [[E.real, E.imag] for E in self.energies],
            'method': self.method,
            'passed': self.passed,
        }


def symbolic_intertwines(L, l_src, l_tgt, lat):
    """compose(H~, L) == compose(L, H) coefficient by coefficient."""
    left = compose(hamiltonian(l_tgt, lat), L)
    right = compose(L, hamiltonian(l_src, lat))
    return left.equals(right)


def intertwine_residual(l, sign, lat, E=None, sample_count=3, rng=None, L=None):
    """Symbolic and numeric checks of H~ L = L H for the target of the sign choice."""
    l = l if isinstance(l, CouplingVector) else CouplingVector(tuple(l))
    sign = as_sign(l, sign)
    rng = rng if rng is not None else np.random.default_rng(config.DEFAULT_SEED)
    L = L if L is not None else closed_form_L(l, sign, lat)
    target = sign.target()
    symbolic = None
    method = 'numeric'
    if L.size() <= config.SYMBOLIC_SIZE_BUDGET:
        try:
            symbolic = symbolic_intertwines(L, l, target, lat)
            method = 'symbolic+numeric'
        except HeunError as e:
            logger.warning(f"Symbolic intertwining check failed for alpha=({sign.label()}): {e}")
    else:
        logger.info(f"L has size {L.size()} > {config.SYMBOLIC_SIZE_BUDGET}; numeric check only")
    energies = [complex(E)] if E is not None else random_energies(rng, 1)
    points = sample_points(lat, rng, sample_count, margin=0.15)
    residual = numeric_intertwine_residual(L, l, target, energies, lat, points)
    report = IntertwineReport(l=l, alpha=sign.alpha, target=target, order=L.order,
                              symbolic=symbolic, numeric_residual=residual,
                              energies=energies, method=method)
    marker = '✓' if report.passed else '✗'
    logger.info(f"{marker} H^({target.label()}) L = L H^({l.label()}) via alpha=({sign.label()}): "
                f"symbolic={symbolic} residual={residual:.3e}")
    return report


def describe_operator(L):
    return {'order': L.order, 'coefficients': L.to_dict(), 'pretty': L.pretty()}


def darboux_report(l, sign, lat, rng=None, E=None):
    """Closed form, annihilator cross-check and intertwining report for one sign choice."""
    l = l if isinstance(l, CouplingVector) else CouplingVector(tuple(l))
    sign = as_sign(l, sign)
    L = closed_form_L(l, sign, lat)
    space = build_space(l, sign, lat)
    L2 = annihilator_L(space)
    report = intertwine_residual(l, sign, lat, E=E, rng=rng, L=L)
    return {
        'l': list(l.l),
        'alpha': list(sign.alpha),
        'd': space.d,
        'target': list(sign.target().l),
        'operator': describe_operator(L),
        'annihilates_basis': all(annihilates(L, b) for b in space.basis),
        'matches_annihilator': L.equals(L2),
        'partner_matches_target': partner_hamiltonian(L, l, lat).equals(hamiltonian(sign.target(), lat)),
        'intertwining': report.to_dict(),
    }
