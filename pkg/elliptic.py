"""Weierstrass elliptic kernel.

Evaluation of wp, wp' and the half-branch values s_i = sqrt(wp - e_i) for a
lattice given by its half-periods. wp is computed from its Laurent series at
the origin after reducing the argument to the nearest lattice point and halving
it until the series converges fast; the duplication formulas bring the values
back. The s_i are carried through the same duplication steps, which makes them
the single-valued functions sigma_i/sigma up to the anchoring signs.
"""
import cmath
import hashlib
import json
import logging
from dataclasses import dataclass, field, replace

import mpmath
import numpy as np

import config
from errors import BranchConsistencyError, LatticeError, PoleProximityError

logger = logging.getLogger(__name__)

# s_i sign changes under x -> x + 2 omega1 and x -> x + 2 omega3
PERIOD_PARITY = {1: (0, 1, 1), 3: (1, 1, 0)}


@dataclass(frozen=True)
class Lattice:
    omega1: complex
    omega3: complex
    g2: complex
    g3: complex
    e: tuple
    tau: complex
    laurent: tuple = field(default=(), repr=False, compare=False)
    min_period: float = field(default=0.0, repr=False, compare=False)
    pole_radius: float = field(default=0.0, repr=False, compare=False)
    branch_signs: tuple = field(default=(1, 1, -1), repr=False, compare=False)

    @property
    def omega2(self):
        return -self.omega1 - self.omega3

    @property
    def half_periods(self):
        """(omega0, omega1, omega2, omega3) with omega0 = 0."""
        return (0j, self.omega1, self.omega2, self.omega3)

    @property
    def anchor(self):
        return anchor_point(self)

    def period(self, k):
        if k == 1:
            return 2 * self.omega1
        if k == 3:
            return 2 * self.omega3
        raise LatticeError(f"period index must be 1 or 3, got {k}")

    def to_json(self):
        return {
            'omega1': [self.omega1.real, self.omega1.imag],
            'omega3': [self.omega3.real, self.omega3.imag],
        }

    @classmethod
    def from_json(cls, data):
        if isinstance(data, str):
            data = json.loads(data)
        try:
            omega1 = complex(*data['omega1'])
            omega3 = complex(*data['omega3'])
        except (KeyError, TypeError) as e:
            raise LatticeError(f"lattice JSON needs omega1 and omega3 as [re, im]: {e}")
        return lattice_from_half_periods(omega1, omega3)

    def digest(self):
        payload = json.dumps(self.to_json(), sort_keys=True)
        return hashlib.sha256(payload.encode('utf-8')).hexdigest()[:16]

    def describe(self):
        return {
            **self.to_json(),
            'tau': [self.tau.real, self.tau.imag],
            'g2': [self.g2.real, self.g2.imag],
            'g3': [self.g3.real, self.g3.imag],
            'e': [[v.real, v.imag] for v in self.e],
            'digest': self.digest(),
        }


def laurent_coefficients(g2, g3, terms=config.LAURENT_TERMS):
    """c_k of wp(z) = z^-2 + sum_{k>=2} c_k z^(2k-2), returned as (c_2, ..., c_terms)."""
    c = {2: g2 / 20, 3: g3 / 28}
    for k in range(4, terms + 1):
        acc = sum(c[m] * c[k - m] for m in range(2, k - 1))
        c[k] = 3 * acc / ((2 * k + 1) * (k - 3))
    return tuple(c[k] for k in range(2, terms + 1))


def theta_branch_values(omega1, omega3):
    """e_1, e_2, e_3 from the theta constants at q = exp(i pi tau)."""
    with mpmath.workdps(30):
        tau = mpmath.mpc(omega3) / mpmath.mpc(omega1)
        q = mpmath.exp(1j * mpmath.pi * tau)
        t2 = mpmath.jtheta(2, 0, q) ** 4
        t4 = mpmath.jtheta(4, 0, q) ** 4
        c = mpmath.pi ** 2 / (12 * mpmath.mpc(omega1) ** 2)
        e1 = c * (t2 + 2 * t4)
        e2 = c * (t2 - t4)
        e3 = -c * (2 * t2 + t4)
    return complex(e1), complex(e2), complex(e3)


def branch_values_from_invariants(g2, g3):
    """Roots of 4 t^3 - g2 t - g3, unordered."""
    return tuple(complex(r) for r in np.roots([4, 0, -g2, -g3]))


def eisenstein_invariants(omega1, omega3, n_max=config.EISENSTEIN_N_MAX):
    """Truncated lattice sums g2 = 60 sum' w^-4, g3 = 140 sum' w^-6 over |m|,|n| <= n_max."""
    m, n = np.meshgrid(np.arange(-n_max, n_max + 1), np.arange(-n_max, n_max + 1))
    w = (2 * m * omega1 + 2 * n * omega3).ravel()
    w = w[(m.ravel() != 0) | (n.ravel() != 0)]
    g2 = 60 * np.sum(w ** -4)
    g3 = 140 * np.sum(w ** -6)
    return complex(g2), complex(g3)


def _shortest_period(omega1, omega3):
    best = np.inf
    for m in range(-3, 4):
        for n in range(-3, 4):
            if m == 0 and n == 0:
                continue
            best = min(best, abs(2 * m * omega1 + 2 * n * omega3))
    return float(best)


def lattice_from_half_periods(omega1, omega3, pole_radius=None):
    omega1, omega3 = complex(omega1), complex(omega3)
    if omega1 == 0 or omega3 == 0:
        raise LatticeError(f"half-periods must be nonzero, got {omega1}, {omega3}")
    tau = omega3 / omega1
    if abs(tau.imag) <= 1e-12 * abs(tau):
        raise LatticeError(f"degenerate lattice: tau = omega3/omega1 = {tau} is real")
    if tau.imag < 0:
        logger.info(f"Negating omega3 so that Im(tau) > 0 (tau was {tau})")
        omega3, tau = -omega3, -tau

    e = theta_branch_values(omega1, omega3)
    g2 = -4 * (e[0] * e[1] + e[1] * e[2] + e[2] * e[0])
    g3 = 4 * e[0] * e[1] * e[2]
    shortest = _shortest_period(omega1, omega3)
    if pole_radius is None:
        pole_radius = config.POLE_EXCLUSION_FACTOR * min(abs(2 * omega1), abs(2 * omega3))

    lat = Lattice(omega1=omega1, omega3=omega3, g2=g2, g3=g3, e=e, tau=tau,
                  laurent=laurent_coefficients(g2, g3), min_period=shortest,
                  pole_radius=float(pole_radius))
    lat = replace(lat, branch_signs=_anchor_signs(lat))
    logger.debug(f"Lattice tau={tau:.6g} e={tuple(f'{v:.6g}' for v in e)} signs={lat.branch_signs}")
    return lat


def half_period(lat, i):
    return lat.half_periods[i]


def anchor_point(lat):
    """Shared branch anchor x* = omega1/2 + omega3/3."""
    return lat.omega1 / 2 + lat.omega3 / 3


def lattice_point_reduce(lat, x):
    """Write x = u + 2 m omega1 + 2 n omega3 with 2 m omega1 + 2 n omega3 the nearest lattice point."""
    a1, a3 = 2 * lat.omega1, 2 * lat.omega3
    det = a1.real * a3.imag - a1.imag * a3.real
    x = complex(x)
    a = (x.real * a3.imag - x.imag * a3.real) / det
    b = (a1.real * x.imag - a1.imag * x.real) / det
    m0, n0 = int(np.floor(a + 0.5)), int(np.floor(b + 0.5))
    best = None
    for m in range(m0 - 2, m0 + 3):
        for n in range(n0 - 2, n0 + 3):
            u = x - m * a1 - n * a3
            if best is None or abs(u) < abs(best[0]):
                best = (u, m, n)
    return best


def _series(lat, z):
    """wp, wp' and the canonical s_i (~ 1/z) at small z."""
    z2 = z * z
    p = 1 / z2
    dp = -2 / (z2 * z)
    zpow = 1.0 + 0j        # z^(2k-4) for k = 2
    for k, c in enumerate(lat.laurent, start=2):
        p += c * zpow * z2
        dp += (2 * k - 2) * c * zpow * z
        zpow *= z2
    s = tuple(cmath.sqrt(z2 * (p - ei)) / z for ei in lat.e)
    return p, dp, s


def _duplicate(lat, p, dp, s):
    e = lat.e
    ddp = 6 * p * p - lat.g2 / 2
    slope = ddp / dp
    p2 = slope * slope / 4 - 2 * p
    dp2 = -dp - slope * (p2 - p)
    s2 = []
    for i in range(3):
        j, k = (i + 1) % 3, (i + 2) % 3
        t = p - e[i]
        s2.append(-(t * t - (e[i] - e[j]) * (e[i] - e[k])) / dp)
    return p2, dp2, tuple(s2)


def _evaluate(lat, x):
    u, m, n = lattice_point_reduce(lat, x)
    if abs(u) < lat.pole_radius:
        lattice_point = complex(x) - u
        raise PoleProximityError(complex(x), lattice_point, abs(u))
    halvings = 0
    limit = config.SERIES_RADIUS_FRACTION * lat.min_period
    while abs(u) / 2 ** halvings > limit:
        halvings += 1
    p, dp, s = _series(lat, u / 2 ** halvings)
    for _ in range(halvings):
        p, dp, s = _duplicate(lat, p, dp, s)
    s = (s[0] * (-1) ** (n % 2), s[1] * (-1) ** ((m + n) % 2), s[2] * (-1) ** (m % 2))
    return p, dp, s


def _anchor_signs(lat):
    x = anchor_point(lat)
    p, _, s = _evaluate(lat, x)
    signs = []
    for i in range(2):
        principal = cmath.sqrt(p - lat.e[i])
        signs.append(1 if abs(s[i] - principal) <= abs(s[i] + principal) else -1)
    # canonical s_i satisfy 2 s1 s2 s3 = -wp'
    signs.append(-signs[0] * signs[1])
    return tuple(signs)


def wp(lat, x):
    return _evaluate(lat, x)[0]


def wp_prime(lat, x):
    return _evaluate(lat, x)[1]


def wp_pair(lat, x):
    p, dp, _ = _evaluate(lat, x)
    return p, dp


def shifted_wp(lat, p, i):
    """wp(x + omega_i) from p = wp(x) through the half-period addition identity."""
    if i == 0:
        return p
    e = lat.e
    ei, ej, ek = e[i - 1], e[i % 3], e[(i + 1) % 3]
    return ei + (ei - ej) * (ei - ek) / (p - ei)


def potential(lat, l, x):
    """sum_i l_i (l_i + 1) wp(x + omega_i) with the shifted terms from the addition identity."""
    p = wp(lat, x)
    return potential_from_wp(lat, l, p)


def potential_from_wp(lat, l, p):
    total = 0j
    for i, li in enumerate(l):
        weight = li * (li + 1)
        if weight != 0:
            total += weight * shifted_wp(lat, p, i)
    return total


def half_branch_values(lat, x, branch=(1, 1, 1), hint=None):
    return point_values(lat, x, branch, hint)[2]


def point_values(lat, x, branch=(1, 1, 1), hint=None):
    """(wp, wp', (s1, s2, s3)) at x with s_i^2 = wp - e_i and 2 s1 s2 s3 = wp'.

    Without a hint the anchored global branch is returned (s1, s2 principal at
    the anchor, s3 fixed by the product rule) multiplied by ``branch``, whose
    product must be +1. With a hint, s1 and s2 are chosen closest to the hint
    and s3 follows from the product rule.
    """
    if branch[0] * branch[1] * branch[2] != 1:
        raise BranchConsistencyError(f"sign triple {branch} would break 2 s1 s2 s3 = wp'")
    p, dp, s = _evaluate(lat, x)
    s = tuple(sig * c * v for sig, c, v in zip(branch, lat.branch_signs, s))
    if hint is not None:
        s1 = s[0] if abs(s[0] - hint[0]) <= abs(s[0] + hint[0]) else -s[0]
        s2 = s[1] if abs(s[1] - hint[1]) <= abs(s[1] + hint[1]) else -s[1]
        s = (s1, s2, s[2] * (s1 / s[0]) * (s2 / s[1]) if s[0] != 0 and s[1] != 0 else s[2])
    _check_product(p, dp, s)
    return p, dp, s


def _check_product(p, dp, s):
    residual = abs(2 * s[0] * s[1] * s[2] - dp)
    if residual > 1e-8 * (1 + abs(dp)):
        raise BranchConsistencyError(f"2 s1 s2 s3 - wp' = {residual:.3e} at wp = {p}")


def track_half_branches(lat, points, start):
    """Continue principal square roots sqrt(wp - e_i) along a list of points by nearest-value matching."""
    values = [tuple(start)]
    prev = tuple(start)
    for x in points:
        p = wp(lat, x)
        cur = []
        for i in range(3):
            r = cmath.sqrt(p - lat.e[i])
            cur.append(r if abs(r - prev[i]) <= abs(r + prev[i]) else -r)
        prev = tuple(cur)
        values.append(prev)
    return values
