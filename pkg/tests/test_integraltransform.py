"""Pochhammer contours and the integral transformation of Heun's equation."""
import pytest

import config
from config import ContourConfig
from errors import ContourCrowdingError, HeunError
from integraltransform import (INFINITY, Arc, build_pochhammer, coupling_map_sign, default_base_point,
                               derivative_pairs, derivative_transform, integral_transform,
                               leg_windings, loop_difference, transform_report, transformed_params,
                               winding_number)
from operators import HeunRationalParams

PARAMS = dict(gamma=0.3, delta=0.4, epsilon=0.6, alpha=0.7, beta=-0.4, q=0.2, t=0.3 + 0.1j)
INTEGER_MU = dict(gamma=0.3, delta=0.4, epsilon=0.6, alpha=0.0, beta=0.3, q=0.2, t=0.3 + 0.1j)


@pytest.fixture
def params():
    return HeunRationalParams(**PARAMS)


class TestTransformedParameters:
    """Exponent shifts and the induced coupling map."""

    def test_first_root(self, params):
        tp = transformed_params(params, 1)
        assert abs(tp.mu - 1.3) < 1e-12
        target = tp.target
        assert abs(target.gamma - 0.6) < 1e-12
        assert abs(target.alpha - 1.3) < 1e-12
        assert abs(target.beta - (2 * 1.3 + 0.3 - 3)) < 1e-12

    def test_second_root(self, params):
        tp = transformed_params(params, 2)
        assert abs(tp.mu - 2.4) < 1e-12

    def test_invalid_root_choice(self, params):
        with pytest.raises(HeunError):
            transformed_params(params, 3)

    def test_coupling_map_sign(self, params):
        sign = coupling_map_sign(params, 1)
        assert abs(sign.d + 0.7) < 1e-9
        expected = (1.6, -0.2, -0.1, 0.1)
        assert all(abs(a - b) < 1e-12 for a, b in zip(sign.alpha, expected)), sign.alpha


class TestContours:
    """Geometry of the commutator loop."""

    def test_arc_reversal(self):
        arc = Arc.circle(1j, 0.5, 0.3, 2.0)
        back = arc.reversed()
        assert abs(back.start - arc.end) < 1e-14
        assert abs(back.end - arc.start) < 1e-14
        assert abs(back.length - arc.length) < 1e-14

    def test_leg_windings_for_finite_point(self, params):
        o = default_base_point(params.t)
        contour = build_pochhammer(o, 0.6, 0, params.t)
        assert leg_windings(contour, 0.6) == [1, 0, -1, 0]
        assert leg_windings(contour, 0) == [0, 1, 0, -1]
        assert abs(winding_number(contour.arcs, 0.6)) < 1e-9
        assert abs(contour.polyline()[-1] - o) < 1e-12

    def test_infinity_loop_surrounds_everything(self, params):
        o = default_base_point(params.t)
        contour = build_pochhammer(o, 0.6, INFINITY, params.t)
        for point in (0, 1, params.t):
            assert leg_windings(contour, point)[1] == -1

    def test_crowded_configuration(self, params):
        o = default_base_point(params.t)
        with pytest.raises(ContourCrowdingError):
            build_pochhammer(o, 0.7 - 0.15j, 1, params.t)

    def test_z_next_to_singular_point(self, params):
        with pytest.raises(ContourCrowdingError):
            build_pochhammer(default_base_point(params.t), 0.05, 0, params.t)

    def test_p_must_be_singular(self, params):
        with pytest.raises(ContourCrowdingError):
            build_pochhammer(default_base_point(params.t), 0.6, 0.5, params.t)


class TestDerivativeReduction:
    """y^(n) = a_n y + b_n y' along solutions of Heun's equation."""

    def test_second_derivative_pair(self, params):
        pairs = derivative_pairs(params, 2)
        z = 0.6 + 0.2j
        p, r = params.coefficients(z)
        a2, b2 = pairs[2]
        assert abs(a2.evaluate(z) + r) < 1e-12 * (1 + abs(r))
        assert abs(b2.evaluate(z) + p) < 1e-12 * (1 + abs(p))

    def test_non_integer_order_is_refused(self, params):
        with pytest.raises(HeunError):
            derivative_transform(params, 1.3, 0.6, 1.0, 0.0)

    @pytest.mark.parametrize('z', [0.6 + 0.2j, 0.45 - 0.3j])
    def test_first_derivative_solves_mu_two_equation(self, z):
        p = HeunRationalParams(**INTEGER_MU)
        tp = transformed_params(p, 1)
        values = derivative_transform(p, tp.mu, z, 1.0, 0.3 - 0.1j)
        residual = tp.target.residual(z, *values)
        assert residual <= config.DERIVATIVE_TRANSFORM_TOL, f"residual {residual:.2e} at z={z}"

    def test_singular_point_is_refused(self, params):
        with pytest.raises(HeunError):
            derivative_transform(params, 2, 1.0, 1.0, 0.0)


@pytest.mark.slow
class TestIntegralTransform:
    """The transformed function solves the transformed equation."""

    @pytest.mark.parametrize('z', [0.6, 0.55 + 0.2j])
    def test_residual_around_zero(self, params, z):
        tp = transformed_params(params, 1)
        contour = build_pochhammer(default_base_point(params.t), z, 0, params.t)
        result = integral_transform((1.0, 0.0), params, tp, contour)
        residual = result.residual(tp.target)
        assert residual <= config.TRANSFORM_RESIDUAL_TOL, f"residual {residual:.2e} at z={z}"
        assert result.closure_error < 1e-8

    def test_at_least_two_cycles_solve_target(self, params):
        tp = transformed_params(params, 1)
        o = default_base_point(params.t)
        passing = []
        for cycle in (0, 1, params.t, INFINITY):
            try:
                residuals = [integral_transform((1.0, 0.0), params, tp, build_pochhammer(o, z, cycle, params.t))
                             .residual(tp.target) for z in (0.6, 0.55 + 0.2j)]
            except HeunError:
                continue
            if max(residuals) <= config.TRANSFORM_RESIDUAL_TOL:
                passing.append(cycle)
        assert len(passing) >= 2, f"only cycles {passing} pass"

    def test_doubling_clearance_keeps_value(self, params):
        tp = transformed_params(params, 1)
        o = default_base_point(params.t)
        values = []
        for rho in (0.04, 0.08):
            cfg = ContourConfig(clearance=rho)
            contour = build_pochhammer(o, 0.6, 0, params.t, cfg=cfg)
            values.append(integral_transform((1.0, 0.0), params, tp, contour, contour_cfg=cfg).value)
        assert abs(values[0] - values[1]) <= 1e-7 * abs(values[1]), values

    def test_zero_initial_data(self, params):
        tp = transformed_params(params, 1)
        contour = build_pochhammer(default_base_point(params.t), 0.6, 0, params.t)
        result = integral_transform((0.0, 0.0), params, tp, contour)
        assert result.value == 0

    def test_integer_mu_reduces_to_derivative(self):
        p = HeunRationalParams(**INTEGER_MU)
        tp = transformed_params(p, 1)
        assert abs(tp.mu - 2) < 1e-12
        contour = build_pochhammer(default_base_point(p.t), 0.6, 0, p.t)
        value = integral_transform((1.0, 0.0), p, tp, contour).value
        expected = loop_difference(p, tp.mu, (1.0, 0.0), contour)[0]
        assert abs(value - expected) <= config.TRANSFORM_RESIDUAL_TOL * abs(expected)

    def test_report_rows(self, params):
        report = transform_report(params, 1, [0.6], cycles=(0,))
        assert len(report['rows']) == 1
        assert report['rows'][0]['status'] == 'ok'
