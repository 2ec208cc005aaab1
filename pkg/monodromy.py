"""Period monodromy of (H^(l) - E) f = 0 by numerical continuation along complex paths."""
import cmath
import logging
import math
import multiprocessing
import time
from dataclasses import dataclass, field, replace

import numpy as np
import pandas as pd
from scipy.integrate import solve_ivp
from scipy.integrate._ivp.rk import RungeKutta

import config
from config import IntegratorConfig
from elliptic import anchor_point, point_values, potential
from errors import HeunError, IntegrationError, InvalidPairError, PathPlanningError
from operators import CouplingVector
from quasisolvable import SignChoice

logger = logging.getLogger(__name__)


def _lower_triangular(rows, n):
    A = np.zeros((n, n))
    for i, row in enumerate(rows, start=1):
        A[i, :len(row)] = row
    return A


class RKV65(RungeKutta):
    """Verner 6(5) "most robust" pair for solve_ivp; works on complex states.

    Eight stages plus the FSAL evaluation used by the 5th order estimate.
    No dense output.
    """
    order = 6
    error_estimator_order = 5
    n_stages = 8
    C = np.array([0, 9/50, 1/6, 1/4, 53/100, 3/5, 4/5, 1])
    A = _lower_triangular([
        [9/50],
        [29/324, 25/324],
        [1/16, 0, 3/16],
        [79129/250000, 0, -261237/250000, 19663/15625],
        [1336883/4909125, 0, -25476/30875, 194159/185250, 8225/78546],
        [-2459386/14727375, 0, 19504/30875, 2377474/13615875, -6157250/5773131, 902/735],
        [2699/7410, 0, -252/1235, -1393253/3993990, 236875/72618, -135/49, 15/22],
    ], 8)
    B = np.array([11/144, 0, 0, 256/693, 0, 125/504, 125/528, 5/72])
    E = (np.array([11/144, 0, 0, 256/693, 0, 125/504, 125/528, 5/72, 0])
         - np.array([28/477, 0, 0, 212/441, -312500/366177, 2125/1764, 0, -2105/35532, 2995/17766]))


def solver_class(method):
    """solve_ivp method argument for a method name; RKV65 is the local Verner pair."""
    return RKV65 if method == 'RKV65' else method


@dataclass(frozen=True, eq=False)
class SolutionFrame:
    """Fundamental matrix F = [[f1, f2], [f1', f2']] at x."""
    x: complex
    F: np.ndarray
    E: complex
    l: CouplingVector
    lattice: object
    branch: tuple = None
    nfev: int = 0

    @property
    def wronskian(self):
        return complex(np.linalg.det(self.F))


@dataclass(frozen=True, eq=False)
class MonodromyMatrix:
    M: np.ndarray
    k: int
    E: complex
    basepoint: complex
    lattice_hash: str = ''
    path: tuple = field(default=(), repr=False)

    @property
    def trace(self):
        return complex(np.trace(self.M))

    @property
    def det(self):
        return complex(np.linalg.det(self.M))

    def eigenvalues(self):
        return np.linalg.eigvals(self.M)


def clearance_radius(lat, cfg=None):
    cfg = cfg or IntegratorConfig()
    return cfg.clearance_factor * lat.min_period


def _lattice_coords(lat, x):
    a1, a3 = 2 * lat.omega1, 2 * lat.omega3
    det = a1.real * a3.imag - a1.imag * a3.real
    return ((x.real * a3.imag - x.imag * a3.real) / det,
            (a1.real * x.imag - a1.imag * x.real) / det)


def pole_centers(lat, l, a, b, radius):
    """Translates of the active half-periods within radius of the segment a-b.

    Returns (center, offset along the segment, signed distance to the left).
    """
    l = l if isinstance(l, CouplingVector) else CouplingVector(tuple(l))
    length = abs(b - a)
    u = (b - a) / length
    found = []
    for i in l.active_poles():
        w = lat.half_periods[i]
        ca, cb = _lattice_coords(lat, a - w), _lattice_coords(lat, b - w)
        m_lo = math.floor(min(ca[0], cb[0])) - 1
        m_hi = math.ceil(max(ca[0], cb[0])) + 1
        n_lo = math.floor(min(ca[1], cb[1])) - 1
        n_hi = math.ceil(max(ca[1], cb[1])) + 1
        for m in range(m_lo, m_hi + 1):
            for n in range(n_lo, n_hi + 1):
                c = w + 2 * m * lat.omega1 + 2 * n * lat.omega3
                rel = (c - a) / u
                along, left = rel.real, rel.imag
                if -radius < along < length + radius and abs(left) < radius:
                    found.append((c, along, left))
    return sorted(found, key=lambda item: item[1])


def plan_path(lat, l, start, end, cfg=None):
    """Polyline from start to end homotopic to the straight segment.

    Poles within the clearance corridor are passed on an arc of twice the
    clearance radius on the far side from the pole; a pole exactly on the
    segment is passed on the left (clockwise around it).
    """
    cfg = cfg or IntegratorConfig()
    start, end = complex(start), complex(end)
    length = abs(end - start)
    if length == 0:
        return [start]
    c = clearance_radius(lat, cfg)
    R = 2 * c
    u = (end - start) / length
    direction = cmath.phase(u)
    points = [start]
    last_exit = 0.0
    for center, along, left in pole_centers(lat, l, start, end, c):
        h = math.sqrt(R * R - left * left)
        if along - h <= last_exit or along + h >= length:
            raise PathPlanningError(
                f"pole at {center:.6g} is within {R:.3g} of an endpoint or another detour "
                f"on segment {start:.6g} -> {end:.6g}")
        beta = math.atan2(abs(left), h)
        if left > 1e-12 * length:
            phi_in, phi_out = -math.pi + beta, -beta
        else:
            phi_in, phi_out = math.pi - beta, beta
        points.append(start + (along - h) * u)
        for phi in np.linspace(phi_in, phi_out, cfg.detour_segments + 1)[1:-1]:
            points.append(center + R * cmath.exp(1j * (direction + phi)))
        points.append(start + (along + h) * u)
        last_exit = along + h
    points.append(end)
    return points


def _segment_rhs(lat, l, E, a, u):
    def rhs(s, Y):
        x = a + s * u
        v = potential(lat, l.l, x) - E
        return np.array([u * Y[2], u * Y[3], u * v * Y[0], u * v * Y[1]])
    return rhs


def continue_along(frame, path, cfg=None):
    """Evolve the fundamental matrix of frame along the polyline path."""
    cfg = cfg or IntegratorConfig()
    lat, l, E = frame.lattice, frame.l, frame.E
    Y = np.array([frame.F[0, 0], frame.F[0, 1], frame.F[1, 0], frame.F[1, 1]], dtype=complex)
    w0 = frame.wronskian
    nfev = frame.nfev
    x = complex(path[0])
    for b in path[1:]:
        b = complex(b)
        length = abs(b - x)
        if length == 0:
            continue
        u = (b - x) / length
        sol = solve_ivp(_segment_rhs(lat, l, E, x, u), (0.0, length), Y,
                        method=solver_class(cfg.method), rtol=cfg.rtol, atol=cfg.atol,
                        max_step=cfg.max_step)
        if sol.status < 0:
            raise IntegrationError(f"{cfg.method} failed on segment {x:.6g} -> {b:.6g}: {sol.message}")
        Y = sol.y[:, -1]
        nfev += sol.nfev
        x = b
    F = np.array([[Y[0], Y[1]], [Y[2], Y[3]]])
    drift = abs(np.linalg.det(F) - w0) / max(abs(w0), 1e-300)
    if drift > 1e-9:
        logger.warning(f"Wronskian drift {drift:.2e} along path of {len(path)} points (E={E})")
    branch = point_values(lat, x)[2]
    return replace(frame, x=x, F=F, branch=branch, nfev=nfev)


def initial_frame(l, E, lat, basepoint=None, F0=None):
    l = l if isinstance(l, CouplingVector) else CouplingVector(tuple(l))
    x0 = anchor_point(lat) if basepoint is None else complex(basepoint)
    F = np.eye(2, dtype=complex) if F0 is None else np.asarray(F0, dtype=complex)
    branch = point_values(lat, x0)[2]
    return SolutionFrame(x=x0, F=F, E=complex(E), l=l, lattice=lat, branch=branch)


def period_monodromy(l, E, k, lat, basepoint=None, cfg=None, F0=None):
    """M with (f1 f2)(x + 2 omega_k) = (f1 f2)(x) M, along the straight-segment class."""
    cfg = cfg or IntegratorConfig()
    frame = initial_frame(l, E, lat, basepoint, F0)
    path = plan_path(lat, frame.l, frame.x, frame.x + lat.period(k), cfg)
    end = continue_along(frame, path, cfg)
    M = np.linalg.solve(frame.F, end.F)
    result = MonodromyMatrix(M=M, k=k, E=complex(E), basepoint=frame.x,
                             lattice_hash=lat.digest(), path=tuple(path))
    if abs(result.det - 1) > config.DET_TOL:
        logger.warning(f"det M_{k}(E={E}) = {result.det:.12g} deviates from 1")
    return result


def fundamental_at(l, E, lat, x, basepoint=None, cfg=None):
    """Frame at x of the basis normalized to the identity at the basepoint."""
    frame = initial_frame(l, E, lat, basepoint)
    path = plan_path(lat, frame.l, frame.x, x, cfg)
    return continue_along(frame, path, cfg)


def solution_at(l, E, lat, x, initial=(1.0, 0.0), basepoint=None, cfg=None):
    """(f(x), f'(x)) for the solution with (f, f') = initial at the basepoint."""
    end = fundamental_at(l, E, lat, x, basepoint, cfg)
    v = end.F @ np.asarray(initial, dtype=complex)
    return complex(v[0]), complex(v[1])


def free_trace(E, k, lat):
    """2 cos(2 omega_k sqrt(E)) for the free operator -d^2/dx^2."""
    return 2 * cmath.cos(lat.period(k) * cmath.sqrt(E))


def parse_grid(text):
    """'lin:a:b:n' (real), 'clin:a:b:n:im' (shifted off the axis) or comma-separated values."""
    text = str(text).strip()
    if text.startswith('lin:'):
        _, a, b, n = text.split(':')
        return [complex(v) for v in np.linspace(float(a), float(b), int(n))]
    if text.startswith('clin:'):
        _, a, b, n, im = text.split(':')
        return [complex(v, float(im)) for v in np.linspace(float(a), float(b), int(n))]
    if not text:
        return []
    return [complex(v.replace(' ', '')) for v in text.split(',')]


def _format_point(z):
    return f"{z.real:.15g}{z.imag:+.15g}j"


def _scan_row(task):
    l, k, E, lat, basepoint, cfg = task
    row = {'E_re': E.real, 'E_im': E.imag, 'k': k, 'lattice_hash': lat.digest()}
    try:
        result = period_monodromy(l, E, k, lat, basepoint, cfg)
        row.update({
            'trM_re': result.trace.real, 'trM_im': result.trace.imag,
            'detM_re': result.det.real, 'detM_im': result.det.imag,
            'basepoint': _format_point(result.basepoint), 'status': 'ok', 'error': '',
        })
    except HeunError as e:
        row.update({
            'trM_re': np.nan, 'trM_im': np.nan, 'detM_re': np.nan, 'detM_im': np.nan,
            'basepoint': _format_point(anchor_point(lat) if basepoint is None else basepoint),
            'status': 'error', 'error': str(e),
        })
    return row


SCAN_COLUMNS = ['E_re', 'E_im', 'trM_re', 'trM_im', 'detM_re', 'detM_im',
                'k', 'basepoint', 'lattice_hash', 'status', 'error']


class TraceScanner:
    """Batch driver for trace scans over an energy grid."""

    def __init__(self, lattice, cfg=None, workers=None, basepoint=None):
        self.lattice = lattice
        self.cfg = cfg or IntegratorConfig()
        self.workers = workers or config.DEFAULT_WORKERS
        self.basepoint = basepoint
        self.logger = logging.getLogger(__name__)

    def scan(self, l, k, E_grid, progress_callback=None):
        l = l if isinstance(l, CouplingVector) else CouplingVector(tuple(l))
        grid = [complex(E) for E in E_grid]
        if not grid:
            return pd.DataFrame(columns=SCAN_COLUMNS)
        tasks = [(l, k, E, self.lattice, self.basepoint, self.cfg) for E in grid]
        self.logger.info(f"Scanning tr M_{k} for l=({l.label()}) over {len(grid)} energies "
                         f"with {min(self.workers, len(grid))} worker(s)")
        start = time.time()
        if self.workers > 1 and len(grid) > 1:
            with multiprocessing.Pool(min(self.workers, len(grid))) as pool:
                rows = pool.map(_scan_row, tasks)
        else:
            rows = []
            for task in tasks:
                rows.append(_scan_row(task))
                if progress_callback:
                    progress_callback(len(rows), len(tasks))
        for i, row in enumerate(rows, 1):
            if row['status'] == 'ok':
                self.logger.debug(f"[{i}/{len(rows)}] ✓ E={row['E_re']:.6g}{row['E_im']:+.6g}j "
                                  f"tr={row['trM_re']:.10g}{row['trM_im']:+.10g}j")
            else:
                self.logger.error(f"[{i}/{len(rows)}] ✗ E={row['E_re']:.6g}{row['E_im']:+.6g}j: {row['error']}")
        self.logger.info(f"Scan finished in {time.time() - start:.1f}s")
        return pd.DataFrame(rows, columns=SCAN_COLUMNS)

    def save_results_to_csv(self, df, path):
        df.to_csv(path, index=False, float_format=f"%.{config.OUTPUT_DIGITS}g")
        self.logger.info(f"Results saved to {path}")

    def save_results_to_excel(self, df, path):
        df.to_excel(path, index=False, engine='openpyxl')
        self.logger.info(f"Results saved to {path}")

    def generate_summary_report(self, df):
        ok = df[df['status'] == 'ok']
        det_dev = float(np.max(np.abs((ok['detM_re'] + 1j * ok['detM_im']) - 1))) if len(ok) else 0.0
        return {
            'rows': int(len(df)),
            'ok': int(len(ok)),
            'errors': int(len(df) - len(ok)),
            'max_det_deviation': det_dev,
        }


def trace_scan(l, k, E_grid, lat, workers=1, basepoint=None, cfg=None):
    """Table of (E, tr M, det M) rows; failing rows carry status 'error'."""
    return TraceScanner(lat, cfg, workers, basepoint).scan(l, k, E_grid)


def find_pair_sign(lA, lB):
    """Sign choice of lA whose shift target is equivalent to lB, or None."""
    lA = lA if isinstance(lA, CouplingVector) else CouplingVector(tuple(lA))
    lB = lB if isinstance(lB, CouplingVector) else CouplingVector(tuple(lB))
    for sign in SignChoice.all_for(lA):
        if sign.target().equivalent(lB, tol=1e-9):
            return sign
    for sign in SignChoice.all_for(lA):
        if sign.target().equivalent(lB, tol=1e-9, allow_shift=True):
            logger.info(f"({lB.label()}) matches target of alpha=({sign.label()}) after a half-period relabelling")
            return sign
    return None


def _validated_pair(lA, lB):
    lA = lA if isinstance(lA, CouplingVector) else CouplingVector(tuple(lA))
    lB = lB if isinstance(lB, CouplingVector) else CouplingVector(tuple(lB))
    if lA.equivalent(lB):
        return lA, lB, None
    sign = find_pair_sign(lA, lB)
    if sign is None:
        targets = sorted({s.target().label() for s in SignChoice.all_for(lA)})
        raise InvalidPairError(
            f"({lB.label()}) is not (alpha_0 + d, ..., alpha_3 + d) for any alpha_i in "
            f"{{-l_i, l_i + 1}} of ({lA.label()}); reachable targets: {targets}")
    return lA, lB, sign


def trace_comparison_table(lA, lB, k, E_grid, lat, workers=1, basepoint=None, cfg=None):
    lA, lB, sign = _validated_pair(lA, lB)
    if sign is not None:
        logger.info(f"Pair ({lA.label()}) -> ({lB.label()}) via alpha=({sign.label()}), d={sign.d:g}")
    scanner = TraceScanner(lat, cfg, workers, basepoint)
    a = scanner.scan(lA, k, E_grid)
    b = scanner.scan(lB, k, E_grid)
    table = pd.DataFrame({
        'E_re': a['E_re'], 'E_im': a['E_im'],
        'trA_re': a['trM_re'], 'trA_im': a['trM_im'],
        'trB_re': b['trM_re'], 'trB_im': b['trM_im'],
        'detA_re': a['detM_re'], 'detA_im': a['detM_im'],
        'detB_re': b['detM_re'], 'detB_im': b['detM_im'],
        'k': k, 'lattice_hash': lat.digest(),
    })
    table['dtr'] = np.abs((table['trA_re'] - table['trB_re']) + 1j * (table['trA_im'] - table['trB_im']))
    table['status'] = np.where((a['status'] == 'ok') & (b['status'] == 'ok'), 'ok', 'error')
    return table


def compare_traces(lA, lB, k, E_grid, lat, workers=1, basepoint=None, cfg=None):
    """max |tr M^A - tr M^B| over the grid."""
    table = trace_comparison_table(lA, lB, k, E_grid, lat, workers, basepoint, cfg)
    if table.empty:
        return 0.0
    if (table['status'] != 'ok').any():
        raise IntegrationError(f"{int((table['status'] != 'ok').sum())} grid points failed to integrate")
    return float(table['dtr'].max())


def _pair_distance(a, b):
    direct = max(abs(a[0] - b[0]), abs(a[1] - b[1]))
    swapped = max(abs(a[0] - b[1]), abs(a[1] - b[0]))
    return min(direct, swapped)


def periodicity_transfer_check(lA, lB, k, E, lat, basepoint=None, cfg=None, tol=config.TRACE_TOL):
    """Eigenvalues C_k(E) of both period monodromies and their distance after optimal pairing."""
    lA, lB, _ = _validated_pair(lA, lB)
    mA = period_monodromy(lA, E, k, lat, basepoint, cfg)
    mB = period_monodromy(lB, E, k, lat, basepoint, cfg)
    eigA, eigB = mA.eigenvalues(), mB.eigenvalues()
    distance = _pair_distance(eigA, eigB)
    return {
        'E': complex(E), 'k': k,
        'eigenvalues_A': [complex(v) for v in eigA],
        'eigenvalues_B': [complex(v) for v in eigB],
        'distance': float(distance),
        'passed': bool(distance <= tol),
    }
