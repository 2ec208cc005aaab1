"""Arithmetic and differentiation in C(wp)(s1, s2, s3).

Relations: s_i^2 = wp - e_i, wp' = 2 s1 s2 s3, s_i' = s_j s_k. An element is
stored as a map from the s-exponent triple eps in {0, 1}^3 to a rational
function of wp. Rational functions keep a factored monic denominator so the
branch values e_i stay exact roots and cancel against the (wp - e_i) factors
produced by reducing s_i^2.
"""
import itertools
import logging

import numpy as np
from numpy.polynomial import polynomial as npoly

import config
from elliptic import lattice_point_reduce, point_values
from errors import FieldArithmeticError, LatticeMismatchError, UnsupportedShiftError

logger = logging.getLogger(__name__)

CANCEL_RTOL = 1e-9          # |num(r)| relative to sum |c_k| |r|^k before (P - r) is divided out
COEFF_CANCEL_RTOL = 1e-12   # coefficient of a sum zeroed below this fraction of its summands
TRIM_RTOL = 1e-13
ROOT_MERGE_RTOL = 1e-7
POLE_RTOL = 1e-13

EXPONENTS = tuple(itertools.product((0, 1), repeat=3))
EVEN = (0, 0, 0)


def _trim(c):
    c = np.atleast_1d(np.asarray(c, dtype=complex))
    if c.size == 0:
        return np.zeros(1, dtype=complex)
    top = np.max(np.abs(c))
    if top == 0:
        return np.zeros(1, dtype=complex)
    keep = np.nonzero(np.abs(c) > TRIM_RTOL * top)[0]
    return c[:keep[-1] + 1].copy()


def _snap(root, anchors):
    for a in anchors:
        if abs(root - a) <= ROOT_MERGE_RTOL * (1 + abs(a)):
            return a
    return root


def _merge(pairs, anchors):
    merged = []
    for root, mult in pairs:
        if mult == 0:
            continue
        root = _snap(complex(root), anchors)
        for item in merged:
            if abs(item[0] - root) <= ROOT_MERGE_RTOL * (1 + abs(root)):
                item[1] += mult
                break
        else:
            merged.append([root, mult])
    return tuple((r, m) for r, m in merged if m != 0)


def poly_from_roots(den):
    """Expanded prod (P - r)^m, ascending coefficients."""
    out = np.ones(1, dtype=complex)
    for r, m in den:
        for _ in range(m):
            out = npoly.polymul(out, [-r, 1])
    return out


def _weighted_scale(c, r):
    return float(np.sum(np.abs(c) * np.abs(r) ** np.arange(len(c))))


def _deflate(c, r):
    """Quotient of c(P) by (P - r) via synthetic division."""
    n = len(c) - 1
    q = np.zeros(n, dtype=complex)
    acc = 0j
    for k in range(n, 0, -1):
        acc = c[k] + acc * r
        q[k - 1] = acc
    return q


def _cancel(num, den):
    num = _trim(num)
    if not num.any():
        return num, ()
    kept = []
    for r, m in den:
        while m > 0 and len(num) > 1:
            if abs(npoly.polyval(r, num)) > CANCEL_RTOL * _weighted_scale(num, r):
                break
            num = _trim(_deflate(num, r))
            m -= 1
        if m:
            kept.append((r, m))
    return num, tuple(kept)


class RationalFunction:
    """num(P) / prod (P - r)^m with ascending complex numerator coefficients.

    ``anchors`` are values that roots snap to exactly (the e_i in the wp
    coordinate, {0, 1, t} in the rational Heun coordinate).
    """
    __slots__ = ('num', 'den', 'anchors')

    def __init__(self, num, den=(), anchors=()):
        self.anchors = tuple(anchors)
        self.num, self.den = _cancel(num, _merge(den, self.anchors))

    @classmethod
    def constant(cls, value, anchors=()):
        return cls([value], (), anchors)

    @classmethod
    def variable(cls, anchors=()):
        return cls([0, 1], (), anchors)

    @classmethod
    def monomial(cls, n, anchors=()):
        coeffs = np.zeros(n + 1, dtype=complex)
        coeffs[n] = 1
        return cls(coeffs, (), anchors)

    @classmethod
    def pole(cls, root, order=1, anchors=()):
        return cls([1], ((root, order),), anchors)

    @property
    def is_zero(self):
        return not np.any(self.num)

    @property
    def is_polynomial(self):
        return not self.den

    @property
    def num_degree(self):
        return len(self.num) - 1

    @property
    def den_degree(self):
        return sum(m for _, m in self.den)

    def size(self):
        return self.num_degree + self.den_degree

    def max_abs(self):
        return float(np.max(np.abs(self.num)))

    def _coerce(self, other):
        if isinstance(other, RationalFunction):
            return other
        return RationalFunction.constant(other, self.anchors)

    def _aligned(self, other):
        roots = [[r, m, 0] for r, m in self.den]
        for r, m in other.den:
            for item in roots:
                if abs(item[0] - r) <= ROOT_MERGE_RTOL * (1 + abs(r)):
                    item[2] += m
                    break
            else:
                roots.append([r, 0, m])
        na, nb = self.num, other.num
        den = []
        for r, ma, mb in roots:
            top = max(ma, mb)
            if top > ma:
                na = npoly.polymul(na, poly_from_roots(((r, top - ma),)))
            if top > mb:
                nb = npoly.polymul(nb, poly_from_roots(((r, top - mb),)))
            den.append((r, top))
        n = max(len(na), len(nb))
        na = np.pad(np.asarray(na, dtype=complex), (0, n - len(na)))
        nb = np.pad(np.asarray(nb, dtype=complex), (0, n - len(nb)))
        return na, nb, tuple(den)

    def __add__(self, other):
        other = self._coerce(other)
        if other.is_zero:
            return self
        if self.is_zero:
            return other
        na, nb, den = self._aligned(other)
        total = na + nb
        total[np.abs(total) <= COEFF_CANCEL_RTOL * np.maximum(np.abs(na), np.abs(nb))] = 0
        return RationalFunction(total, den, self.anchors)

    __radd__ = __add__

    def __neg__(self):
        return RationalFunction(-self.num, self.den, self.anchors)

    def __sub__(self, other):
        return self + (-self._coerce(other))

    def __rsub__(self, other):
        return self._coerce(other) - self

    def __mul__(self, other):
        if not isinstance(other, RationalFunction):
            if other == 0:
                return RationalFunction.constant(0, self.anchors)
            return RationalFunction(self.num * other, self.den, self.anchors)
        if self.is_zero or other.is_zero:
            return RationalFunction.constant(0, self.anchors)
        return RationalFunction(npoly.polymul(self.num, other.num), self.den + other.den, self.anchors)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if not isinstance(other, RationalFunction):
            if other == 0:
                raise FieldArithmeticError("division of a rational function by zero")
            return RationalFunction(self.num / other, self.den, self.anchors)
        return self * other.inverse()

    def __pow__(self, n):
        if n < 0:
            return self.inverse() ** (-n)
        out = RationalFunction.constant(1, self.anchors)
        for _ in range(n):
            out = out * self
        return out

    def derivative(self):
        d_num = npoly.polyder(self.num) if len(self.num) > 1 else np.zeros(1, dtype=complex)
        if not self.den:
            return RationalFunction(d_num, (), self.anchors)
        distinct = poly_from_roots(tuple((r, 1) for r, _ in self.den))
        acc = npoly.polymul(d_num, distinct)
        for j, (r, m) in enumerate(self.den):
            others = poly_from_roots(tuple((s, 1) for k, (s, _) in enumerate(self.den) if k != j))
            acc = npoly.polysub(acc, m * npoly.polymul(self.num, others))
        return RationalFunction(acc, tuple((r, m + 1) for r, m in self.den), self.anchors)

    def inverse(self):
        if self.is_zero:
            raise FieldArithmeticError("division by the zero rational function")
        num = self.num
        factors = []
        for a in self.anchors:
            k = 0
            while len(num) > 1 and abs(npoly.polyval(a, num)) <= CANCEL_RTOL * _weighted_scale(num, a):
                num = _trim(_deflate(num, a))
                k += 1
            if k:
                factors.append((a, k))
        lead = num[-1]
        if len(num) > 1:
            factors.extend((complex(r), 1) for r in npoly.polyroots(num))
        return RationalFunction(poly_from_roots(self.den) / lead, factors, self.anchors)

    def substitute(self, q):
        """self(q) for a rational function q of the same variable."""
        result = RationalFunction.constant(self.num[-1], q.anchors)
        for c in self.num[-2::-1]:
            result = result * q + c
        for r, m in self.den:
            result = result * ((q - r) ** (-m))
        return result

    def evaluate(self, p):
        value = npoly.polyval(p, self.num)
        for r, m in self.den:
            diff = p - r
            if abs(diff) <= POLE_RTOL * (1 + abs(r)):
                raise FieldArithmeticError(f"pole of the rational part at {p}")
            value = value / diff ** m
        return value

    def distance(self, other):
        """(max |num difference|, max |num|) over a common denominator."""
        other = self._coerce(other)
        na, nb, _ = self._aligned(other)
        scale = max(float(np.max(np.abs(na))), float(np.max(np.abs(nb))))
        return float(np.max(np.abs(na - nb))), scale

    def polynomial_part(self):
        """Quotient and remainder of num by the expanded denominator."""
        if not self.den:
            return self.num, np.zeros(1, dtype=complex)
        quo, rem = npoly.polydiv(self.num, poly_from_roots(self.den))
        return np.atleast_1d(quo), np.atleast_1d(rem)

    def to_dict(self):
        return {
            'num': [[c.real, c.imag] for c in self.num],
            'den': [[[r.real, r.imag], m] for r, m in self.den],
        }

    def __repr__(self):
        num = ' + '.join(f"({c:.6g})P^{k}" for k, c in enumerate(self.num) if c != 0) or '0'
        if not self.den:
            return num
        den = ' '.join(f"(P - ({r:.6g}))^{m}" for r, m in self.den)
        return f"[{num}] / [{den}]"


def _monomial_label(eps):
    return ' '.join(f"s{i + 1}" for i in range(3) if eps[i]) or '1'


class FieldExpr:
    """Element sum_eps s^eps R_eps(wp) of the differential field over one lattice."""
    __slots__ = ('lattice', 'terms')

    def __init__(self, lattice, terms=None):
        self.lattice = lattice
        self.terms = {}
        for eps, rf in (terms or {}).items():
            if not rf.is_zero:
                self.terms[tuple(eps)] = rf

    @property
    def anchors(self):
        return self.lattice.e

    @classmethod
    def zero(cls, lat):
        return cls(lat)

    @classmethod
    def constant(cls, lat, value):
        return cls(lat, {EVEN: RationalFunction.constant(value, lat.e)})

    @classmethod
    def rational(cls, lat, rf, eps=EVEN):
        return cls(lat, {tuple(eps): rf})

    @classmethod
    def wp(cls, lat):
        return cls(lat, {EVEN: RationalFunction.variable(lat.e)})

    @classmethod
    def s(cls, lat, i):
        eps = [0, 0, 0]
        eps[i - 1] = 1
        return cls(lat, {tuple(eps): RationalFunction.constant(1, lat.e)})

    @classmethod
    def wp_prime(cls, lat):
        return cls(lat, {(1, 1, 1): RationalFunction.constant(2, lat.e)})

    @classmethod
    def monomial(cls, lat, alpha, n=0):
        """prod s_i^alpha_i * wp^n for integers alpha_i, i.e. prod (wp - e_i)^(alpha_i/2) wp^n."""
        e = lat.e
        rf = RationalFunction.monomial(n, e)
        eps = []
        for i, a in enumerate(alpha):
            a = int(a)
            eps.append(a % 2)
            half = (a - a % 2) // 2
            if half > 0:
                rf = rf * RationalFunction(poly_from_roots(((e[i], half),)), (), e)
            elif half < 0:
                rf = rf * RationalFunction.pole(e[i], -half, e)
        return cls(lat, {tuple(eps): rf})

    @property
    def is_zero(self):
        return not self.terms

    @property
    def is_even(self):
        return all(eps == EVEN for eps in self.terms)

    def size(self):
        return sum(rf.size() for rf in self.terms.values())

    def _coerce(self, other):
        if isinstance(other, FieldExpr):
            if other.lattice is not self.lattice and other.lattice != self.lattice:
                raise LatticeMismatchError("field expressions over different lattices were combined")
            return other
        return FieldExpr.constant(self.lattice, other)

    def __add__(self, other):
        other = self._coerce(other)
        terms = dict(self.terms)
        for eps, rf in other.terms.items():
            terms[eps] = terms[eps] + rf if eps in terms else rf
        return FieldExpr(self.lattice, terms)

    __radd__ = __add__

    def __neg__(self):
        return FieldExpr(self.lattice, {eps: -rf for eps, rf in self.terms.items()})

    def __sub__(self, other):
        return self + (-self._coerce(other))

    def __rsub__(self, other):
        return self._coerce(other) - self

    def __mul__(self, other):
        if not isinstance(other, FieldExpr):
            return FieldExpr(self.lattice, {eps: rf * other for eps, rf in self.terms.items()})
        other = self._coerce(other)
        e = self.lattice.e
        linear = [RationalFunction([-ei, 1], (), e) for ei in e]
        out = {}
        for ea, ra in self.terms.items():
            for eb, rb in other.terms.items():
                rf = ra * rb
                for i in range(3):
                    if ea[i] and eb[i]:
                        rf = rf * linear[i]
                eps = tuple((a + b) % 2 for a, b in zip(ea, eb))
                out[eps] = out[eps] + rf if eps in out else rf
        return FieldExpr(self.lattice, out)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if not isinstance(other, FieldExpr):
            if other == 0:
                raise FieldArithmeticError("division of a field expression by zero")
            return self * (1 / other)
        return self * self._coerce(other).inverse()

    def __rtruediv__(self, other):
        return self._coerce(other) * self.inverse()

    def __pow__(self, n):
        if n < 0:
            return self.inverse() ** (-n)
        out = FieldExpr.constant(self.lattice, 1)
        for _ in range(n):
            out = out * self
        return out

    def conjugate(self, i):
        """Image under s_i -> -s_i (i = 0, 1, 2)."""
        return FieldExpr(self.lattice, {eps: (-rf if eps[i] else rf) for eps, rf in self.terms.items()})

    def _drop_odd(self, i):
        return FieldExpr(self.lattice, {eps: rf for eps, rf in self.terms.items() if not eps[i]})

    def inverse(self, _depth=0):
        if self.is_zero:
            raise FieldArithmeticError("division by the zero expression")
        if _depth > 3:
            raise FieldArithmeticError("inverse did not reduce to a rational function of wp")
        e = self.lattice.e
        if len(self.terms) == 1:
            (eps, rf), = self.terms.items()
            inv = rf.inverse()
            for i in range(3):
                if eps[i]:
                    inv = inv * RationalFunction.pole(e[i], 1, e)
            return FieldExpr(self.lattice, {eps: inv})
        for i in range(3):
            if any(eps[i] for eps in self.terms):
                conj = self.conjugate(i)
                norm = (self * conj)._drop_odd(i)
                return conj * norm.inverse(_depth + 1)
        raise FieldArithmeticError("inverse did not reduce to a rational function of wp")

    def differentiate(self):
        lat = self.lattice
        out = FieldExpr.zero(lat)
        wpp = FieldExpr.wp_prime(lat)
        for eps, rf in self.terms.items():
            dr = rf.derivative()
            if not dr.is_zero:
                out = out + FieldExpr(lat, {eps: dr}) * wpp
            for i in range(3):
                if eps[i]:
                    rest = list(eps)
                    rest[i] = 0
                    j, k = [m for m in range(3) if m != i]
                    out = out + FieldExpr(lat, {tuple(rest): rf}) * FieldExpr.s(lat, j + 1) * FieldExpr.s(lat, k + 1)
        return out

    def derivative(self, n=1):
        out = self
        for _ in range(n):
            out = out.differentiate()
        return out

    def shift_half_period(self, i):
        """Substitute wp -> e_i + (e_i - e_j)(e_i - e_k)/(wp - e_i), i.e. x -> x + omega_i."""
        if i == 0:
            return self
        if not self.is_even:
            raise UnsupportedShiftError(
                f"shift by omega_{i} needs a rational function of wp alone; "
                f"got s-monomials {[_monomial_label(eps) for eps in self.terms]}")
        if self.is_zero:
            return self
        e = self.lattice.e
        ei = e[i - 1]
        ej, ek = [e[m] for m in range(3) if m != i - 1]
        q = RationalFunction.constant(ei, e) + RationalFunction.pole(ei, 1, e) * ((ei - ej) * (ei - ek))
        return FieldExpr(self.lattice, {EVEN: self.terms[EVEN].substitute(q)})

    def evaluate_at(self, p, s):
        """Value from precomputed wp = p and (s1, s2, s3) = s."""
        total = 0j
        for eps, rf in self.terms.items():
            v = rf.evaluate(p)
            for i in range(3):
                if eps[i]:
                    v *= s[i]
            total += v
        return total

    def evaluate(self, x, branch_hint=None):
        p, _, s = point_values(self.lattice, x, hint=branch_hint)
        return self.evaluate_at(p, s)

    def equals(self, other, rtol=config.FIELD_EQUAL_RTOL):
        """Canonical-form equality: numerators over common denominators agree to rtol."""
        other = self._coerce(other)
        zero = RationalFunction.constant(0, self.anchors)
        worst, scale = 0.0, 0.0
        for eps in set(self.terms) | set(other.terms):
            diff, sc = self.terms.get(eps, zero).distance(other.terms.get(eps, zero))
            worst = max(worst, diff)
            scale = max(scale, sc)
        return worst <= rtol * scale

    def numeric_deviation(self, other, points):
        """max |a(x) - b(x)| / max(|a(x)|, |b(x)|) over the given points."""
        other = self._coerce(other)
        diff, scale = 0.0, 0.0
        for x in points:
            p, _, s = point_values(self.lattice, x)
            a, b = self.evaluate_at(p, s), other.evaluate_at(p, s)
            diff = max(diff, abs(a - b))
            scale = max(scale, abs(a), abs(b))
        return diff / scale if scale else diff

    def probably_equal(self, other, rng, count=20, rtol=config.FIELD_EQUAL_RTOL):
        return self.numeric_deviation(other, sample_points(self.lattice, rng, count)) <= rtol

    def to_dict(self):
        return {_monomial_label(eps): rf.to_dict() for eps, rf in sorted(self.terms.items())}

    def __repr__(self):
        if not self.terms:
            return '0'
        return ' + '.join(f"{_monomial_label(eps)} * {rf!r}" for eps, rf in sorted(self.terms.items()))


def sample_points(lat, rng, count, margin=0.1):
    """Random points of the period cell kept margin * shortest period away from every half-period."""
    points = []
    while len(points) < count:
        a, b = rng.uniform(0.0, 1.0, 2)
        x = 2 * a * lat.omega1 + 2 * b * lat.omega3
        u, _, _ = lattice_point_reduce(lat, 2 * x)
        if abs(u) / 2 >= margin * lat.min_period:
            points.append(complex(x))
    return points
