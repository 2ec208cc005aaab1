"""Period monodromy along complex paths and trace comparisons."""
import cmath

import numpy as np
import pandas as pd
import pytest

import config
from config import IntegratorConfig
from errors import InvalidPairError
from monodromy import (SCAN_COLUMNS, TraceScanner, compare_traces, continue_along, find_pair_sign,
                       free_trace, initial_frame, parse_grid, period_monodromy, periodicity_transfer_check, plan_path,
                       solution_at, trace_scan)


class TestGridParsing:
    """Energy grid syntax."""

    def test_linear_grid(self):
        grid = parse_grid('lin:0:8:5')
        assert grid == [0j, 2 + 0j, 4 + 0j, 6 + 0j, 8 + 0j]

    def test_shifted_grid(self):
        grid = parse_grid('clin:1:2:2:0.5')
        assert grid == [1 + 0.5j, 2 + 0.5j]

    def test_explicit_list(self):
        assert parse_grid('1, 2+1j') == [1 + 0j, 2 + 1j]

    def test_empty(self):
        assert parse_grid('') == []


class TestPathPlanning:
    """Detours around the active poles."""

    def test_straight_when_clear(self, lemniscatic):
        start = lemniscatic.anchor
        path = plan_path(lemniscatic, (2, 0, 0, 0), start, start + lemniscatic.period(1))
        assert path == [start, start + lemniscatic.period(1)]

    def test_detour_keeps_clearance(self, lemniscatic):
        start = 0.5 + 0.02j
        end = 1.5 + 0.02j
        path = plan_path(lemniscatic, (2, 0, 0, 0), start, end)
        assert len(path) > 2
        radius = IntegratorConfig().clearance_factor * lemniscatic.min_period
        # the pole at 1 is passed on the far side, outside the clearance disc
        assert min(abs(complex(x) - 1) for x in path) >= radius
        assert all(complex(x).imag > 0.02 for x in path[2:-2])

    def test_inactive_poles_are_ignored(self, lemniscatic):
        start = 0.7 + 0.02j
        path = plan_path(lemniscatic, (0, 2, 0, 0), start, start + 0.6)
        assert len(path) == 2


class TestFreeMonodromy:
    """l = 0: the trace is 2 cos(2 omega_k sqrt(E))."""

    @pytest.mark.parametrize('k', [1, 3])
    def test_free_trace(self, lemniscatic, k):
        for E in (0.5, 3.0 + 0.2j, 7.0):
            m = period_monodromy((0, 0, 0, 0), E, k, lemniscatic)
            expected = free_trace(E, k, lemniscatic)
            assert abs(m.trace - expected) <= 1e-8 * max(1.0, abs(expected)), f"E={E}, k={k}"
            assert abs(m.det - 1) <= config.DET_TOL


class TestPathContinuation:
    """Continuation of the fundamental matrix along explicit polylines."""

    @pytest.mark.slow
    def test_free_solutions(self, lemniscatic):
        E = 2.5 + 0.4j
        x0 = lemniscatic.anchor
        end = continue_along(initial_frame((0, 0, 0, 0), E, lemniscatic, x0), [x0, x0 + 0.3, x0 + 0.3 + 0.2j])
        k, dx = cmath.sqrt(E), end.x - x0
        expected = np.array([[cmath.cos(k * dx), cmath.sin(k * dx) / k],
                             [-k * cmath.sin(k * dx), cmath.cos(k * dx)]])
        assert np.max(np.abs(end.F - expected)) <= 1e-9

    @pytest.mark.slow
    def test_contractible_loop_is_identity(self, lemniscatic):
        x0 = lemniscatic.anchor
        loop = [x0, x0 + 0.15, x0 + 0.15 + 0.15j, x0 + 0.15j, x0]
        end = continue_along(initial_frame((2, 0, 0, 0), 1.3 - 0.2j, lemniscatic, x0), loop)
        assert np.max(np.abs(end.F - np.eye(2))) <= 1e-9

    @pytest.mark.slow
    def test_loop_around_integer_pole_is_identity(self, lemniscatic):
        # integer couplings have meromorphic solutions, so the pole at 0 is apparent
        loop = [0.2 * cmath.exp(2j * np.pi * j / 32) for j in range(33)]
        end = continue_along(initial_frame((2, 0, 0, 0), 1.3, lemniscatic, loop[0]), loop)
        assert np.max(np.abs(end.F - np.eye(2))) <= 1e-8

    @pytest.mark.slow
    def test_homotopic_paths_agree(self, lemniscatic):
        x0 = lemniscatic.anchor
        x1 = x0 + 0.3 + 0.1j
        frame = initial_frame((2, 0, 0, 0), 1.3 - 0.2j, lemniscatic, x0)
        a = continue_along(frame, [x0, x1])
        b = continue_along(frame, [x0, x0 + 0.2j, x1])
        assert np.max(np.abs(a.F - b.F)) <= 1e-9 * max(1.0, np.max(np.abs(a.F)))


class TestMonodromyContracts:
    """det M = 1, basis independence and the QES multipliers."""

    def test_ground_state_multiplier(self, lemniscatic):
        E = 3 * lemniscatic.e[2]
        m1 = period_monodromy((2, 0, 0, 0), E, 1, lemniscatic)
        m3 = period_monodromy((2, 0, 0, 0), E, 3, lemniscatic)
        assert abs(m1.trace + 2) <= 1e-6
        assert abs(m3.trace - 2) <= 1e-6

    def test_determinant(self, generic):
        m = period_monodromy((2, 0, 0, 0), 1.3 - 0.4j, 3, generic)
        assert abs(m.det - 1) <= config.DET_TOL

    def test_trace_is_basis_independent(self, lemniscatic):
        m1 = period_monodromy((2, 0, 0, 0), 1.3, 1, lemniscatic)
        F0 = np.array([[1.0, 0.4], [-0.3, 2.0]])
        m2 = period_monodromy((2, 0, 0, 0), 1.3, 1, lemniscatic, F0=F0)
        assert abs(m1.trace - m2.trace) <= 1e-8 * max(1.0, abs(m1.trace))

    @pytest.mark.slow
    @pytest.mark.parametrize('k', [1, 3])
    def test_trace_is_basepoint_independent(self, generic, k):
        E = 2.0 + 0.5j
        a = period_monodromy((2, 0, 0, 0), E, k, generic)
        b = period_monodromy((2, 0, 0, 0), E, k, generic, basepoint=generic.anchor + (generic.omega1 + generic.omega3) / 5)
        assert abs(a.trace - b.trace) <= 1e-8 * max(1.0, abs(a.trace)), f"k={k}"

    def test_verner_pair_agrees(self, generic):
        E = 2.0 + 0.5j
        a = period_monodromy((2, 0, 0, 0), E, 1, generic)
        b = period_monodromy((2, 0, 0, 0), E, 1, generic, cfg=IntegratorConfig(method='RKV65'))
        assert abs(a.trace - b.trace) <= 1e-8 * max(1.0, abs(a.trace))

    def test_solution_at_basepoint_is_initial_data(self, generic):
        f, df = solution_at((2, 0, 0, 0), 1.0, generic, generic.anchor, initial=(0.3, 0.7))
        assert (f, df) == (0.3, 0.7)


class TestTraceScanner:
    """Batch scans and their tables."""

    def test_scan_table(self, lemniscatic, tmp_path):
        scanner = TraceScanner(lemniscatic, workers=1)
        df = scanner.scan((0, 0, 0, 0), 1, parse_grid('lin:1:2:3'))
        assert list(df.columns) == SCAN_COLUMNS
        assert (df['status'] == 'ok').all()
        path = tmp_path / 'scan.csv'
        scanner.save_results_to_csv(df, path)
        again = pd.read_csv(path)
        assert len(again) == 3
        summary = scanner.generate_summary_report(df)
        assert summary['rows'] == 3 and summary['errors'] == 0
        assert summary['max_det_deviation'] <= config.DET_TOL

    def test_empty_grid(self, lemniscatic):
        df = trace_scan((2, 0, 0, 0), 1, [], lemniscatic)
        assert df.empty
        assert list(df.columns) == SCAN_COLUMNS

    def test_seeded_scan_is_reproducible(self, rectangular):
        grid = parse_grid('lin:1:2:2')
        a = trace_scan((2, 0, 0, 0), 1, grid, rectangular).to_csv(index=False)
        b = trace_scan((2, 0, 0, 0), 1, grid, rectangular).to_csv(index=False)
        assert a == b


class TestTraceComparison:
    """Isospectral pairs related by a sign choice."""

    def test_pair_sign(self):
        sign = find_pair_sign((2, 0, 0, 0), (1, 1, 1, 0))
        assert sign is not None
        assert sign.alpha == (-2.0, 1.0, 1.0, 0.0)

    def test_unrelated_pair(self, lemniscatic):
        with pytest.raises(InvalidPairError):
            compare_traces((2, 0, 0, 0), (0.3, 0, 0, 0), 1, [1.0], lemniscatic)

    @pytest.mark.slow
    @pytest.mark.parametrize('k', [1, 3])
    def test_lame_pair_traces_agree(self, generic, k):
        dtr = compare_traces((2, 0, 0, 0), (1, 1, 1, 0), k, parse_grid('lin:0:8:5'), generic)
        assert dtr <= config.TRACE_TOL, f"max |dtr| = {dtr:.2e}"

    @pytest.mark.slow
    @pytest.mark.parametrize('k', [1, 3])
    def test_non_integer_pair_traces_agree(self, generic, k):
        dtr = compare_traces((0.6, 0, 0, 0), (0.3, 0.3, 0.3, -0.7), k, parse_grid('lin:0:8:5'), generic)
        assert dtr <= config.TRACE_TOL, f"max |dtr| = {dtr:.2e}"

    @pytest.mark.slow
    def test_periodicity_transfer(self, generic):
        result = periodicity_transfer_check((2, 0, 0, 0), (1, 1, 1, 0), 3, 3 - 0.2j, generic)
        assert result['passed'], f"eigenvalue distance {result['distance']:.2e}"
