"""Integral transformation of Heun's equation over Pochhammer contours.

For a solution y(w) of Heun's equation the integral of y(w) (z - w)^(-mu)
over the commutator loop [gamma_z, gamma_p] solves the Heun equation with the
shifted parameters returned by ``transformed_params``. The solution y and the
branch of log(z - w) are continued along each arc of the contour by the ODE
integrator; the three z-derivatives of the kernel are integrated by adaptive
Gauss-Kronrod quadrature on the dense output of the same pass.
"""
import cmath
import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad_vec, solve_ivp

import config
from config import ContourConfig, IntegratorConfig
from darboux import closed_form_L
from difffield import RationalFunction
from errors import ContourCrowdingError, HeunError, IntegrationError, QuadratureError
from monodromy import solver_class
from operators import (CouplingVector, HeunRationalParams, couplings_from_rational,
                       evaluate_pair)
from quasisolvable import SignChoice, as_sign

logger = logging.getLogger(__name__)

INFINITY = 'inf'


@dataclass(frozen=True)
class TransformParams:
    mu: complex
    source: HeunRationalParams
    target: HeunRationalParams
    root_choice: int = 1


def transformed_params(p, root_choice=1):
    """mu = 2 - alpha (root 1) or 2 - beta (root 2) and the parameters of the transformed equation."""
    if root_choice not in (1, 2):
        raise HeunError(f"root_choice must be 1 or 2, got {root_choice}")
    mu = 2 - (p.alpha if root_choice == 1 else p.beta)
    target = HeunRationalParams(
        gamma=p.gamma + mu - 1,
        delta=p.delta + mu - 1,
        epsilon=p.epsilon + mu - 1,
        alpha=mu,
        beta=2 * mu + p.alpha + p.beta - 3,
        q=p.q + (1 - mu) * (p.epsilon + p.delta * p.t + (p.gamma - mu) * (p.t + 1)),
        t=p.t,
    )
    return TransformParams(mu=mu, source=p, target=target, root_choice=root_choice)


def coupling_map_sign(p, root_choice=1, tol=1e-9):
    """Sign choice of the source couplings whose shift target is the transformed coupling, d = mu - 2."""
    tp = transformed_params(p, root_choice)
    l_src, _ = couplings_from_rational(p)
    l_tgt, _ = couplings_from_rational(tp.target)
    d = complex(tp.mu).real - 2
    for sign in SignChoice.all_for(l_src):
        if abs(sign.d - d) > tol:
            continue
        if sign.target().equivalent(l_tgt, tol=1e-8, allow_shift=True):
            return sign
    raise HeunError(
        f"no sign choice of ({l_src.label()}) with d = {d:g} reaches ({l_tgt.label()})")


@dataclass(frozen=True)
class Arc:
    """Segment (start -> end) or circle arc center + radius exp(i theta), theta0 -> theta0 + sweep."""
    kind: str
    start: complex
    end: complex
    center: complex = 0j
    radius: float = 0.0
    theta0: float = 0.0
    sweep: float = 0.0

    @classmethod
    def segment(cls, a, b):
        return cls('segment', complex(a), complex(b))

    @classmethod
    def circle(cls, center, radius, theta0, sweep):
        start = center + radius * cmath.exp(1j * theta0)
        end = center + radius * cmath.exp(1j * (theta0 + sweep))
        return cls('circle', start, end, complex(center), radius, theta0, sweep)

    def point(self, s):
        if self.kind == 'segment':
            return self.start + (self.end - self.start) * s
        return self.center + self.radius * np.exp(1j * (self.theta0 + self.sweep * s))

    def velocity(self, s):
        if self.kind == 'segment':
            return self.end - self.start
        return 1j * self.sweep * self.radius * np.exp(1j * (self.theta0 + self.sweep * s))

    @property
    def length(self):
        if self.kind == 'segment':
            return abs(self.end - self.start)
        return abs(self.sweep) * self.radius

    def sample(self, n=64):
        return self.point(np.linspace(0.0, 1.0, n + 1))

    def reversed(self):
        if self.kind == 'segment':
            return Arc.segment(self.end, self.start)
        return Arc.circle(self.center, self.radius, self.theta0 + self.sweep, -self.sweep)


@dataclass(frozen=True)
class PochhammerContour:
    o: complex
    z: complex
    p: object
    legs: tuple = field(repr=False)
    clearance: float = 0.0

    @property
    def arcs(self):
        return [arc for leg in self.legs for arc in leg]

    @property
    def length(self):
        return sum(arc.length for arc in self.arcs)

    def polyline(self, n=64):
        pts = [self.o]
        for arc in self.arcs:
            pts.extend(arc.sample(n)[1:])
        return np.array(pts)


def _loop(o, center, radius, sweep_sign):
    u = (o - center) / abs(o - center)
    theta0 = cmath.phase(u)
    start = center + radius * u
    return (Arc.segment(o, start),
            Arc.circle(center, radius, theta0, sweep_sign * 2 * math.pi),
            Arc.segment(start, o))


def _infinity_loop(o, radius, sweep_sign):
    direction = o / abs(o) if abs(o) > 0 else 1 + 0j
    start = radius * direction
    theta0 = cmath.phase(direction)
    return (Arc.segment(o, start),
            Arc.circle(0j, radius, theta0, sweep_sign * 2 * math.pi),
            Arc.segment(start, o))


def _segment_distance(a, b, c):
    ab = b - a
    s = ((c - a) * ab.conjugate()).real / abs(ab) ** 2
    s = min(max(s, 0.0), 1.0)
    return abs(a + s * ab - c)


def default_base_point(t):
    return (0 + 1 + t) / 3 - 0.4j


def build_pochhammer(o, z, p, t, cfg=None):
    """Four-leg loop gamma_z gamma_p gamma_z^-1 gamma_p^-1 based at o.

    p is one of 0, 1, t (given as a complex number) or 'inf'.
    """
    cfg = cfg or ContourConfig()
    o, z, t = complex(o), complex(z), complex(t)
    rho = cfg.clearance
    singular = [0j, 1 + 0j, t]
    at_infinity = p == INFINITY or p is None
    if not at_infinity:
        p = complex(p)
        if min(abs(p - s) for s in singular) > 1e-12:
            raise ContourCrowdingError(f"p = {p} is not one of the singular points 0, 1, t = {t}")
    named = [('o', o), ('z', z)] + ([] if at_infinity else [('p', p)])
    for i, (na, a) in enumerate(named):
        for nb, b in named[i + 1:]:
            if abs(a - b) <= 3 * rho:
                raise ContourCrowdingError(
                    f"{na} = {a} and {nb} = {b} are closer than 3 x clearance {rho:g}; "
                    f"move the base point or use a smaller clearance")
    for s in singular:
        if abs(z - s) <= 3 * rho or abs(o - s) <= 3 * rho:
            raise ContourCrowdingError(f"singular point {s} is within 3 x clearance {rho:g} of z or o")
    obstacles = singular + [z]
    zloop = _loop(o, z, rho, +1)
    if at_infinity:
        R = cfg.infinity_radius or 2 * max(abs(v) for v in obstacles + [o]) + 1
        ploop = _infinity_loop(o, R, -1)
        centers = {'z': z}
    else:
        ploop = _loop(o, p, rho, +1)
        centers = {'z': z, 'p': p}
    for name, loop in (('z', zloop), ('p', ploop)):
        center = centers.get(name)
        seg = loop[0]
        for c in obstacles:
            if center is not None and abs(c - center) < 1e-12:
                continue
            if _segment_distance(seg.start, seg.end, c) <= rho:
                raise ContourCrowdingError(
                    f"the path from o = {o} to the loop around {name} passes within {rho:g} of {c}; "
                    f"choose another base point")
    legs = (zloop, ploop,
            tuple(a.reversed() for a in reversed(zloop)),
            tuple(a.reversed() for a in reversed(ploop)))
    contour = PochhammerContour(o=o, z=z, p=INFINITY if at_infinity else p, legs=legs, clearance=rho)
    logger.debug(f"Pochhammer contour o={o} z={z} p={contour.p} length={contour.length:.4g}")
    return contour


def winding_number(arcs, point, n=256):
    """Numeric winding number of the concatenated arcs around point (np.unwrap of the argument)."""
    pts = np.concatenate([arc.sample(n) for arc in arcs])
    phase = np.unwrap(np.angle(pts - point))
    return (phase[-1] - phase[0]) / (2 * math.pi)


def leg_windings(contour, point):
    return [round(winding_number(leg, point), 6) for leg in contour.legs]


def _heun_rhs(params, arc, z):
    def rhs(s, Y):
        w = arc.point(s)
        dw = arc.velocity(s)
        p, r = params.coefficients(w)
        out = [dw * Y[1], dw * (-p * Y[1] - r * Y[0])]
        if z is not None:
            out.append(-dw / (z - w))
        return np.array(out)
    return rhs


def continue_heun(params, state, arcs, z=None, cfg=None, dense=False):
    """Continue [y, y'] (and log(z - w) when z is given) along the arcs.

    Returns the final state and the per-arc solve_ivp results.
    """
    cfg = cfg or IntegratorConfig()
    Y = np.asarray(state, dtype=complex)
    sols = []
    for arc in arcs:
        method = cfg.method if dense else solver_class(cfg.method)
        sol = solve_ivp(_heun_rhs(params, arc, z), (0.0, 1.0), Y, method=method,
                        rtol=cfg.rtol, atol=cfg.atol, dense_output=dense)
        if sol.status < 0:
            raise IntegrationError(f"continuation failed on {arc.kind} {arc.start:.6g} -> {arc.end:.6g}: {sol.message}")
        sols.append(sol)
        Y = sol.y[:, -1]
    return Y, sols


def _kernel_integrand(sol, arc, mu):
    def integrand(s):
        Y = sol.sol(s)
        y, lam = Y[0], Y[2]
        k = np.exp(-mu * lam)
        inv = np.exp(-lam)
        vals = y * arc.velocity(s) * np.array([k, -mu * k * inv, mu * (mu + 1) * k * inv * inv])
        return np.concatenate([vals.real, vals.imag])
    return integrand


@dataclass
class TransformResult:
    z: complex
    cycle: object
    value: complex
    derivative: complex
    second: complex
    error: float
    closure_error: float

    @property
    def triple(self):
        return self.value, self.derivative, self.second

    def residual(self, target):
        return target.residual(self.z, self.value, self.derivative, self.second)

    def to_dict(self, target=None):
        out = {
            'z': [self.z.real, self.z.imag],
            'cycle': str(self.cycle),
            'value': [self.value.real, self.value.imag],
            'derivative': [self.derivative.real, self.derivative.imag],
            'second': [self.second.real, self.second.imag],
            'error': self.error,
            'closure_error': self.closure_error,
        }
        if target is not None:
            out['residual'] = self.residual(target)
        return out


def integral_transform(y0, p, tp, contour, cfg=None, contour_cfg=None):
    """(y~, y~', y~'') at contour.z from the solution with (y, y') = y0 at contour.o."""
    cfg = cfg or IntegratorConfig()
    contour_cfg = contour_cfg or ContourConfig()
    y0 = np.asarray(y0, dtype=complex)
    z, mu = contour.z, complex(tp.mu)
    if not np.any(y0):
        return TransformResult(z, contour.p, 0j, 0j, 0j, 0.0, 0.0)
    state = np.array([y0[0], y0[1], cmath.log(z - contour.o)], dtype=complex)
    total = np.zeros(6)
    error = 0.0
    for arc in contour.arcs:
        end, (sol,) = continue_heun(p, state, [arc], z=z, cfg=cfg, dense=True)
        integrand = _kernel_integrand(sol, arc, mu)
        limit = contour_cfg.limit
        for attempt in range(contour_cfg.refinements + 1):
            value, err = quad_vec(integrand, 0.0, 1.0, epsabs=1e-300, epsrel=contour_cfg.epsrel,
                                  limit=limit, norm='max')
            scale = float(np.max(np.abs(value))) or 1.0
            if err <= contour_cfg.max_relative_error * scale:
                break
            limit *= 4
            logger.debug(f"quadrature on {arc.kind} arc refined to limit={limit} (err={err:.2e})")
        else:
            raise QuadratureError(
                f"quadrature error {err:.2e} exceeds {contour_cfg.max_relative_error:g} x {scale:.3g} "
                f"on {arc.kind} arc {arc.start:.6g} -> {arc.end:.6g}")
        total += value
        error += err
        state = end
    closure = abs(state[0] - y0[0]) + abs(state[1] - y0[1])
    closure /= abs(y0[0]) + abs(y0[1])
    lam_drift = abs(state[2] - cmath.log(z - contour.o))
    if lam_drift > 1e-8:
        logger.warning(f"log(z - w) did not close around the contour: drift {lam_drift:.2e}")
    result = TransformResult(
        z=z, cycle=contour.p,
        value=complex(total[0], total[3]),
        derivative=complex(total[1], total[4]),
        second=complex(total[2], total[5]),
        error=error, closure_error=float(closure),
    )
    logger.debug(f"y~({z}) over [gamma_z, gamma_{contour.p}] = {result.value:.12g} "
                 f"(err {error:.2e}, closure {closure:.2e})")
    return result


def _heun_coefficients_rf(p):
    anchors = (0, 1, p.t)
    pole = lambda r: RationalFunction.pole(r, 1, anchors)
    P = pole(0) * p.gamma + pole(1) * p.delta + pole(p.t) * p.epsilon
    R = RationalFunction([-p.q, p.alpha * p.beta], (), anchors) * pole(0) * pole(1) * pole(p.t)
    return P, R


def derivative_pairs(p, n):
    """(a_k, b_k), k = 0..n, with y^(k) = a_k y + b_k y' for solutions of Heun's equation."""
    P, R = _heun_coefficients_rf(p)
    anchors = (0, 1, p.t)
    a, b = RationalFunction.constant(1, anchors), RationalFunction.constant(0, anchors)
    pairs = [(a, b)]
    for _ in range(n):
        a, b = a.derivative() - b * R, a + b.derivative() - b * P
        pairs.append((a, b))
    return pairs


def derivative_transform(p, mu, z, y, dy):
    """(y^(mu-1), y^(mu), y^(mu+1)) at z from (y, y') there, mu a positive integer."""
    if abs(mu - round(complex(mu).real)) > 1e-12 or round(complex(mu).real) < 1:
        raise HeunError(f"derivative transform needs a positive integer mu, got {mu}")
    z = complex(z)
    if min(abs(z), abs(z - 1), abs(z - p.t)) < 1e-12:
        raise HeunError(f"z = {z} is a singular point of Heun's equation")
    m = int(round(complex(mu).real))
    pairs = derivative_pairs(p, m + 1)
    return tuple(a.evaluate(z) * y + b.evaluate(z) * dy for a, b in pairs[m - 1:m + 2])


def solution_at_z(p, y0, o, z, cfg=None):
    """(y(z), y'(z)) continued along the straight segment o -> z."""
    end, _ = continue_heun(p, y0, [Arc.segment(o, z)], cfg=cfg)
    return complex(end[0]), complex(end[1])


def loop_difference(p, mu, y0, contour, cfg=None):
    """2 pi i (-1)^mu / (mu-1)! Y^(mu-1)(z), Y = y - (y continued around p).

    For integer mu this is the value of the Pochhammer integral.
    """
    m = int(round(complex(mu).real))
    o, z = contour.o, contour.z
    y_direct = solution_at_z(p, y0, o, z, cfg)
    looped, _ = continue_heun(p, y0, contour.legs[1], cfg=cfg)
    y_loop = solution_at_z(p, looped[:2], o, z, cfg)
    Y = (y_direct[0] - y_loop[0], y_direct[1] - y_loop[1])
    deriv = derivative_transform(p, m, z, *Y)
    factor = 2j * math.pi * (-1) ** m / math.factorial(m - 1)
    return tuple(factor * v for v in deriv)


def elliptic_derivative_transform(l, sign, E, lat, x, f, df):
    """L f at x for the Darboux-Crum operator of an integer-dimension sign choice (mu = d + 2)."""
    l = l if isinstance(l, CouplingVector) else CouplingVector(tuple(l))
    sign = as_sign(l, sign)
    L = closed_form_L(l, sign, lat)
    A, B = L.apply_to_pair(l, E)
    return evaluate_pair(A, B, x, f, df)


def transform_report(p, root_choice, z_values, cycles=(0, INFINITY), o=None, y0=(1.0, 0.0),
                     cfg=None, contour_cfg=None):
    """Rows of y~ values, residuals against the transformed equation and error estimates."""
    tp = transformed_params(p, root_choice)
    o = default_base_point(p.t) if o is None else complex(o)
    rows = []
    for cycle in cycles:
        label = INFINITY if cycle in (INFINITY, None) else complex(cycle)
        for z in z_values:
            try:
                contour = build_pochhammer(o, z, label, p.t, contour_cfg)
                result = integral_transform(y0, p, tp, contour, cfg, contour_cfg)
                row = result.to_dict(tp.target)
                row['status'] = 'ok' if row['residual'] <= config.TRANSFORM_RESIDUAL_TOL else 'violation'
            except HeunError as e:
                logger.error(f"✗ transform at z={z} over cycle {label}: {e}")
                row = {'z': [complex(z).real, complex(z).imag], 'cycle': str(label),
                       'status': 'error', 'error': str(e)}
            rows.append(row)
    return {
        'mu': [complex(tp.mu).real, complex(tp.mu).imag],
        'root_choice': root_choice,
        'base_point': [o.real, o.imag],
        'target': {k: [complex(v).real, complex(v).imag]
                   for k, v in vars(tp.target).items()},
        'rows': rows,
    }
