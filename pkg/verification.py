"""Acceptance suite run by ``cli.py verify-all``."""
import hashlib
import json
import logging
import os
import time

import numpy as np
import pandas as pd

import config
from darboux import annihilator_L, closed_form_L, intertwine_residual
from difffield import FieldExpr, RationalFunction, sample_points
from elliptic import lattice_from_half_periods, point_values, shifted_wp, wp
from errors import HeunError
from finitegap import chain_search, commutation_certificate, commuting_operator_chain, validate_chain
from integraltransform import (INFINITY, build_pochhammer, default_base_point, integral_transform,
                               loop_difference, transformed_params)
from monodromy import (TraceScanner, free_trace, parse_grid, period_monodromy,
                       periodicity_transfer_check, trace_comparison_table)
from operators import CouplingVector, DiffOperator, HeunRationalParams
from quasisolvable import build_space, eigen_residual, qes_eigenfunctions, qes_eigenvalues

logger = logging.getLogger(__name__)

ACCEPTANCE_LATTICES = {
    'lemniscatic': (0.5, 0.5j),
    'rectangular': (0.5, 0.3j),
    'generic': (0.5, 0.2 + 0.35j),
}

DARBOUX_CASES = [
    ((2, 0, 0, 0), (-2, 1, 1, 0)),
    ((2, 0, 0, 0), (-2, 0, 0, 0)),
    ((4, 0, 0, 0), (-4, 1, 1, 0)),
    ((3, 1, 0, 0), (-3, -1, 1, 1)),
    ((4, 0, 0, 0), (-4, 0, 0, 0)),
    ((6, 0, 0, 0), (-6, 0, 0, 0)),
]

TRACE_PAIRS = [
    ((2, 0, 0, 0), (1, 1, 1, 0)),
    ((4, 0, 0, 0), (2, 2, 2, 1)),
    ((0.6, 0, 0, 0), (0.3, 0.3, 0.3, -0.7)),
]

TRACE_GRID = 'lin:0:8:16'
TRANSFER_ENERGIES = (1 + 0.5j, 3 - 0.2j, 6 + 0.3j)

# gamma + delta + epsilon = alpha + beta + 1 in both sets
TRANSFORM_PARAMS = dict(gamma=0.3, delta=0.4, epsilon=0.6, alpha=0.7, beta=-0.4, q=0.2, t=0.3 + 0.1j)
INTEGER_MU_PARAMS = dict(gamma=0.3, delta=0.4, epsilon=0.6, alpha=0.0, beta=0.3, q=0.2, t=0.3 + 0.1j)
TRANSFORM_POINTS = (0.6, 0.55 + 0.2j, 0.7 - 0.15j)

FINITE_GAP_CHAIN = [(-2, 0, 0, 0), (0, 2, -1, -1), (1, -2, 1, 0), (2, -1, -1, 0)]

RESULT_COLUMNS = ['criterion', 'name', 'measured', 'tolerance', 'status', 'detail', 'seed', 'config_digest']


def config_digest(run_config):
    """Short hash of the resolved run configuration written next to every acceptance row."""
    payload = json.dumps(run_config or {}, sort_keys=True, default=str)
    return hashlib.sha256(payload.encode('utf-8')).hexdigest()[:16]


def elliptic_identity_deviation(lat, points):
    """Worst relative defect of the differential equation, periodicity, sum e_i and the addition identity."""
    worst = abs(sum(lat.e)) / max(abs(v) for v in lat.e)
    for x in points:
        p, dp, _ = point_values(lat, x)
        ode = dp * dp - (4 * p ** 3 - lat.g2 * p - lat.g3)
        worst = max(worst, abs(ode) / (abs(dp) ** 2 + abs(4 * p ** 3) + abs(lat.g2 * p) + abs(lat.g3)))
        for k in (1, 3):
            shifted = wp(lat, x + lat.period(k))
            worst = max(worst, abs(shifted - p) / max(abs(p), 1.0))
        for i in (1, 2, 3):
            direct = wp(lat, x + lat.half_periods[i])
            formula = shifted_wp(lat, p, i)
            worst = max(worst, abs(direct - formula) / max(abs(direct), 1.0))
    return worst


def printed_first_order_operator(lat):
    """D - wp'/(2(wp - e1)) - wp'/(2(wp - e2))."""
    e = lat.e
    poles = FieldExpr.rational(lat, RationalFunction.pole(e[0], 1, e) + RationalFunction.pole(e[1], 1, e))
    return DiffOperator(lat, [1, -FieldExpr.wp_prime(lat) * poles * 0.5])


class AcceptanceSuite:
    """Runs every acceptance check; each produces one row with a status."""

    def __init__(self, seed=config.DEFAULT_SEED, workers=1, output_dir=None, run_config=None):
        self.seed = seed
        self.run_config = run_config if run_config is not None else {'seed': seed}
        self.config_digest = config_digest(self.run_config)
        self.workers = workers
        self.output_dir = output_dir
        self.lattices = {name: lattice_from_half_periods(*w) for name, w in ACCEPTANCE_LATTICES.items()}
        self.results = []
        self.logger = logging.getLogger(__name__)

    def _rng(self, offset):
        return np.random.default_rng(self.seed + offset)

    def _record(self, criterion, name, fn):
        start = time.time()
        row = {'criterion': criterion, 'name': name, 'seed': self.seed, 'config_digest': self.config_digest}
        try:
            measured, tolerance, detail = fn()
            row.update({'measured': measured, 'tolerance': tolerance,
                        'status': 'passed' if measured <= tolerance else 'failed', 'detail': detail})
        except HeunError as e:
            self.logger.error(f"{name}: {e}")
            row.update({'measured': np.nan, 'tolerance': np.nan, 'status': 'error', 'detail': str(e)})
        marker = '✓' if row['status'] == 'passed' else '✗'
        self.logger.info(f"[{criterion}/10] {marker} {name}: measured={row['measured']:.3e} "
                         f"tol={row['tolerance']:.1e} ({time.time() - start:.1f}s)")
        self.results.append(row)
        return row

    def _artifact(self, filename):
        if not self.output_dir:
            return None
        os.makedirs(self.output_dir, exist_ok=True)
        return os.path.join(self.output_dir, filename)

    # 1
    def check_elliptic(self):
        rng = self._rng(1)
        worst = 0.0
        for lat in self.lattices.values():
            worst = max(worst, elliptic_identity_deviation(lat, sample_points(lat, rng, 100)))
        return worst, config.ELLIPTIC_RTOL, '3 lattices x 100 points'

    # 2
    def check_qes(self):
        rng = self._rng(2)
        worst, detail = 0.0, []
        for name, lat in self.lattices.items():
            space = build_space((2, 0, 0, 0), (-2, 1, 1, 0), lat)
            (E,) = qes_eigenvalues(space)
            dev = abs(E - 3 * lat.e[2]) / (1 + abs(lat.e[2]))
            worst = max(worst, dev / config.ELLIPTIC_RTOL)
            space4 = build_space((4, 0, 0, 0), (-4, 1, 1, 0), lat)
            points = sample_points(lat, rng, 10)
            for E4, f in qes_eigenfunctions(space4):
                worst = max(worst, eigen_residual(space4, E4, f, points) / config.QES_RESIDUAL_TOL)
            detail.append(f"{name}: |E-3e3|={dev:.1e}")
        # measured as the worst ratio to the eigenvalue and residual tolerances
        return worst, 1.0, "; ".join(detail)

    # 3
    def check_darboux_closed_form(self):
        lat = self.lattices['generic']
        L = closed_form_L((2, 0, 0, 0), (-2, 1, 1, 0), lat)
        mismatches = [] if L.equals(printed_first_order_operator(lat)) else ['printed operator']
        for l, alpha in DARBOUX_CASES:
            closed = closed_form_L(l, alpha, lat)
            annihilator = annihilator_L(build_space(l, alpha, lat))
            if not closed.equals(annihilator):
                mismatches.append(f"{l}/{alpha}")
        return float(len(mismatches)), 0.0, ', '.join(mismatches) or f"{len(DARBOUX_CASES)} cases agree"

    # 4
    def check_intertwining(self):
        lat = self.lattices['generic']
        rng = self._rng(4)
        symbolic = intertwine_residual((2, 0, 0, 0), (-2, 1, 1, 0), lat, rng=rng)
        worst = 0.0 if symbolic.symbolic else np.inf
        for l, alpha in (((4, 0, 0, 0), (-4, 1, 1, 0)), ((3, 1, 0, 0), (-3, -1, 1, 1))):
            report = intertwine_residual(l, alpha, lat, rng=rng)
            worst = max(worst, report.numeric_residual)
        return worst, config.INTERTWINE_TOL, f"symbolic (2,0,0,0)->(1,1,1,0): {symbolic.symbolic}"

    # 5
    def check_monodromy(self):
        lat = self.lattices['lemniscatic']
        scanner = TraceScanner(lat, workers=self.workers)
        grid = parse_grid('lin:0.5:8:16')
        worst_det, worst_free = 0.0, 0.0
        for k in (1, 3):
            free = scanner.scan((0, 0, 0, 0), k, grid)
            for _, row in free.iterrows():
                E = complex(row['E_re'], row['E_im'])
                tr = complex(row['trM_re'], row['trM_im'])
                worst_free = max(worst_free, abs(tr - free_trace(E, k, lat)) / max(1.0, abs(tr)))
            worst_det = max(worst_det, scanner.generate_summary_report(free)['max_det_deviation'])
            scan = scanner.scan((2, 0, 0, 0), k, grid)
            worst_det = max(worst_det, scanner.generate_summary_report(scan)['max_det_deviation'])
        m1 = period_monodromy((2, 0, 0, 0), 1.3, 1, lat)
        F0 = np.array([[1.0, 0.4], [-0.3, 2.0]])
        m2 = period_monodromy((2, 0, 0, 0), 1.3, 1, lat, basepoint=lat.anchor + (lat.omega1 + lat.omega3) / 5, F0=F0)
        basis = abs(m1.trace - m2.trace) / max(1.0, abs(m1.trace))
        measured = max(worst_det, worst_free, basis)
        return measured, config.DET_TOL, f"det {worst_det:.1e}, free {worst_free:.1e}, basis {basis:.1e}"

    # 6
    def check_trace_conservation(self):
        grid = parse_grid(TRACE_GRID)
        worst, parts = 0.0, []
        for lat_name in ('lemniscatic', 'generic'):
            lat = self.lattices[lat_name]
            for lA, lB in TRACE_PAIRS:
                for k in (1, 3):
                    table = trace_comparison_table(lA, lB, k, grid, lat, workers=self.workers)
                    if (table['status'] != 'ok').any():
                        raise HeunError(f"integration failed for {lA} vs {lB} on {lat_name}")
                    dtr = float(table['dtr'].max())
                    worst = max(worst, dtr)
                    path = self._artifact(
                        f"traces_{CouplingVector(lA).label()}_{CouplingVector(lB).label()}_k{k}_{lat_name}.csv")
                    if path:
                        table.to_csv(path, index=False, float_format=f"%.{config.OUTPUT_DIGITS}g")
            parts.append(lat_name)
        return worst, config.TRACE_TOL, f"{len(TRACE_PAIRS)} pairs x k=1,3 on {', '.join(parts)}"

    # 7
    def check_periodicity_transfer(self):
        lat = self.lattices['generic']
        worst = 0.0
        for lA, lB in TRACE_PAIRS:
            for E in TRANSFER_ENERGIES:
                for k in (1, 3):
                    worst = max(worst, periodicity_transfer_check(lA, lB, k, E, lat)['distance'])
        return worst, config.TRACE_TOL, f"{len(TRACE_PAIRS)} pairs x {len(TRANSFER_ENERGIES)} energies"

    # 8
    def check_integral_transform(self):
        p = HeunRationalParams(**TRANSFORM_PARAMS)
        tp = transformed_params(p, 1)
        o = default_base_point(p.t)
        passing, worst_cycle = 0, []
        for cycle in (0, 1, p.t, INFINITY):
            try:
                residuals = []
                for z in TRANSFORM_POINTS:
                    contour = build_pochhammer(o, z, cycle, p.t)
                    residuals.append(integral_transform((1.0, 0.0), p, tp, contour).residual(tp.target))
                worst = max(residuals)
            except HeunError as e:
                self.logger.warning(f"cycle {cycle}: {e}")
                worst = np.inf
            worst_cycle.append(worst)
            if worst <= config.TRANSFORM_RESIDUAL_TOL:
                passing += 1
        # integer mu: the contour integral is 2 pi i (y - y around p)'
        p2 = HeunRationalParams(**INTEGER_MU_PARAMS)
        tp2 = transformed_params(p2, 1)
        proportional = 0.0
        for z in TRANSFORM_POINTS:
            contour = build_pochhammer(o, z, 0, p2.t)
            value = integral_transform((1.0, 0.0), p2, tp2, contour).value
            expected = loop_difference(p2, tp2.mu, (1.0, 0.0), contour)[0]
            proportional = max(proportional, abs(value - expected) / abs(expected))
        sorted_cycles = sorted(worst_cycle)
        measured = max(sorted_cycles[1], proportional)
        return measured, config.TRANSFORM_RESIDUAL_TOL, f"{passing}/4 cycles pass; mu=2 deviation {proportional:.1e}"

    # 9
    def check_finite_gap(self):
        lat = self.lattices['generic']
        l = CouplingVector((2, 0, 0, 0))
        chain = validate_chain(l, FINITE_GAP_CHAIN)
        A = commuting_operator_chain(l, chain, lat)
        certificate = commutation_certificate(A, l, lat, self._rng(9))
        found = any(c.signs == chain.signs for c in chain_search(l, 4))
        measured = 0.0 if certificate['passed'] and found and A.order == 5 else 1.0
        return measured, 0.0, f"order {A.order}, {certificate['method']} certificate, chain found: {found}"

    # 10
    def check_determinism(self):
        lat = self.lattices['rectangular']
        grid = parse_grid('lin:1:4:4')
        texts = []
        for _ in range(2):
            scanner = TraceScanner(lat, workers=self.workers)
            df = scanner.scan((2, 0, 0, 0), 1, grid)
            texts.append(df.to_csv(index=False, float_format=f"%.{config.OUTPUT_DIGITS}g"))
        rng_a = sample_points(lat, self._rng(10), 5)
        rng_b = sample_points(lat, self._rng(10), 5)
        same = texts[0] == texts[1] and np.array_equal(rng_a, rng_b)
        return (0.0 if same else 1.0), 0.0, 'repeated seeded scan is byte-identical' if same else 'outputs differ'

    def process_all(self, only=None):
        checks = [
            (1, 'elliptic identities', self.check_elliptic),
            (2, 'QES spectrum', self.check_qes),
            (3, 'Darboux closed form', self.check_darboux_closed_form),
            (4, 'intertwining', self.check_intertwining),
            (5, 'monodromy contracts', self.check_monodromy),
            (6, 'trace conservation', self.check_trace_conservation),
            (7, 'periodicity transfer', self.check_periodicity_transfer),
            (8, 'integral transformation', self.check_integral_transform),
            (9, 'finite-gap operator', self.check_finite_gap),
            (10, 'determinism', self.check_determinism),
        ]
        self.results = []
        for criterion, name, fn in checks:
            if only and criterion not in only:
                continue
            self._record(criterion, name, fn)
        return self.results

    def to_frame(self):
        return pd.DataFrame(self.results, columns=RESULT_COLUMNS)

    def save_results_to_csv(self, filename='acceptance.csv'):
        if not self.results:
            self.logger.warning("No results to save")
            return None
        path = self._artifact(filename) or filename
        self.to_frame().to_csv(path, index=False, float_format=f"%.{config.OUTPUT_DIGITS}g")
        self.logger.info(f"Results saved to {path}")
        return path

    @property
    def all_passed(self):
        return bool(self.results) and all(r['status'] == 'passed' for r in self.results)

    def get_results_summary(self):
        if not self.results:
            return "No results available"
        total = len(self.results)
        passed = len([r for r in self.results if r['status'] == 'passed'])
        errors = len([r for r in self.results if r['status'] == 'error'])
        lines = [f"Checks run: {total}",
                 f"Passed: {passed} ({passed / total * 100:.1f}%)",
                 f"Errors: {errors}"]
        for r in self.results:
            lines.append(f"  [{r['criterion']}] {r['name']}: {r['status']} ({r['detail']})")
        return '\n'.join(lines)
