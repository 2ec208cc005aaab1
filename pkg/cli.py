#!/usr/bin/env python3
"""Batch front-end: one subcommand per verification family, JSON descriptors via ``run``.

Exit codes: 0 success, 1 a contract tolerance was violated, 2 schema or usage
error, 3 unexpected library error.
"""
import argparse
import json
import logging
import os
import re
import sys
from typing import Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, ValidationError, field_validator

import config
from darboux import closed_form_L, darboux_report, describe_operator
from difffield import sample_points
from elliptic import lattice_from_half_periods
from errors import DescriptorError, HeunError, IntegrationError, ToleranceViolation
from finitegap import finite_gap_report
from integraltransform import INFINITY, transform_report
from monodromy import TraceScanner, parse_grid, trace_comparison_table
from operators import CouplingVector, HeunRationalParams, hamiltonian
from quasisolvable import build_space, describe_space, eigen_residual, qes_eigenfunctions
from verification import ACCEPTANCE_LATTICES, AcceptanceSuite

logger = logging.getLogger(__name__)

COMMANDS = ('lattice', 'show-operator', 'qes', 'darboux', 'scan', 'compare',
            'transform', 'finite-gap', 'verify-all')


# Experiment descriptors

class LatticeSpec(BaseModel):
    model_config = ConfigDict(extra='forbid')
    omega1: tuple[float, float]
    omega3: tuple[float, float]


class HeunParamsSpec(BaseModel):
    model_config = ConfigDict(extra='forbid')
    gamma: float
    delta: float
    epsilon: float
    alpha: float
    beta: float
    q: float
    t: tuple[float, float]


class ExperimentDescriptor(BaseModel):
    """Schema of the JSON files accepted by ``run``."""
    model_config = ConfigDict(extra='forbid')
    command: Literal['lattice', 'show-operator', 'qes', 'darboux', 'scan', 'compare',
                     'transform', 'finite-gap', 'verify-all']
    lattice: LatticeSpec | Literal['lemniscatic', 'rectangular', 'generic'] = 'lemniscatic'
    l: list[float] | None = None
    alpha: list[float] | None = None
    lA: list[float] | None = None
    lB: list[float] | None = None
    k: Literal[1, 3] = 1
    grid: str | None = None
    E: tuple[float, float] | None = None
    params: HeunParamsSpec | None = None
    root_choice: Literal[1, 2] = 1
    z: list[tuple[float, float]] | None = None
    cycles: list[str] | None = None
    max_steps: int = 4
    certify: int = 1
    seed: int = config.DEFAULT_SEED
    workers: int | None = None
    output_dir: str | None = None
    xlsx: bool = False
    only: list[int] | None = None

    @field_validator('l', 'alpha', 'lA', 'lB')
    @classmethod
    def four_entries(cls, v):
        if v is not None and len(v) != 4:
            raise ValueError(f"expected four entries, got {len(v)}")
        return v

    @field_validator('max_steps')
    @classmethod
    def positive_steps(cls, v):
        if not 1 <= v <= 6:
            raise ValueError("max_steps must be between 1 and 6")
        return v


def _join(values):
    return ','.join(f"{v:.15g}" for v in values)


def descriptor_to_args(parser, descriptor):
    """Namespace equivalent to the direct subcommand invocation."""
    args = parser.parse_args([descriptor.command])
    lat = descriptor.lattice
    if isinstance(lat, str):
        args.lattice = lat
    else:
        args.lattice = None
        args.omega1 = complex(*lat.omega1)
        args.omega3 = complex(*lat.omega3)
    for name in ('l', 'alpha', 'lA', 'lB'):
        value = getattr(descriptor, name)
        if value is not None:
            setattr(args, name, _join(value))
    if descriptor.grid is not None:
        args.grid = descriptor.grid
    if descriptor.E is not None:
        args.E = complex(*descriptor.E)
    if descriptor.params is not None:
        args.params = descriptor.params.model_dump()
    if descriptor.z is not None:
        args.z = ','.join(f"{a:.15g}{b:+.15g}j" for a, b in descriptor.z)
    if descriptor.cycles is not None:
        args.cycles = ','.join(descriptor.cycles)
    if descriptor.only is not None:
        args.only = ','.join(str(c) for c in descriptor.only)
    for name in ('k', 'root_choice', 'max_steps', 'certify', 'seed', 'xlsx'):
        if hasattr(args, name):
            setattr(args, name, getattr(descriptor, name))
    if descriptor.workers is not None:
        args.workers = descriptor.workers
    if descriptor.output_dir is not None:
        args.output_dir = descriptor.output_dir
    return args


def load_descriptor(path):
    try:
        with open(path, encoding='utf-8') as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as e:
        raise DescriptorError(f"cannot read descriptor {path}: {e}")
    try:
        return ExperimentDescriptor.model_validate(data)
    except ValidationError as e:
        raise DescriptorError(f"descriptor {path} does not match the schema:\n{e}")


# Helpers

def _round(obj):
    """Floats rounded to the output precision so reruns are byte-identical."""
    if isinstance(obj, float):
        return float(f"{obj:.{config.OUTPUT_DIGITS}g}") if np.isfinite(obj) else None
    if isinstance(obj, complex):
        return [_round(obj.real), _round(obj.imag)]
    if isinstance(obj, (np.floating,)):
        return _round(float(obj))
    if isinstance(obj, (np.complexfloating,)):
        return _round(complex(obj))
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, dict):
        return {str(k): _round(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_round(v) for v in obj]
    return obj


def resolved_config(args):
    return _round({k: (str(v) if isinstance(v, complex) else v)
                   for k, v in sorted(vars(args).items()) if k not in ('func', 'output_dir')})


def write_json(args, name, payload):
    os.makedirs(args.output_dir, exist_ok=True)
    path = os.path.join(args.output_dir, name)
    document = {'config': resolved_config(args), 'result': payload}
    with open(path, 'w', encoding='utf-8') as fh:
        json.dump(_round(document), fh, indent=2, sort_keys=True)
        fh.write('\n')
    logger.info(f"Results saved to {path}")
    return path


def _lattice(args):
    if getattr(args, 'lattice', None):
        return lattice_from_half_periods(*ACCEPTANCE_LATTICES[args.lattice])
    return lattice_from_half_periods(complex(args.omega1), complex(args.omega3))


def _coupling(value, name):
    if value is None:
        raise DescriptorError(f"--{name} is required for this command")
    try:
        return CouplingVector.parse(value)
    except (ValueError, HeunError) as e:
        raise DescriptorError(f"--{name} {value!r}: {e}")


def _alpha(value):
    if value is None:
        raise DescriptorError("--alpha is required for this command")
    return tuple(float(v) for v in str(value).split(','))


def _grid(args):
    if not args.grid:
        raise DescriptorError("--grid is required for this command")
    try:
        return parse_grid(args.grid)
    except ValueError as e:
        raise DescriptorError(f"cannot parse grid {args.grid!r}: {e}")


def _violation(condition, message):
    if condition:
        raise ToleranceViolation(message)


# Subcommands

def cmd_lattice(args):
    lat = _lattice(args)
    payload = lat.describe()
    write_json(args, 'lattice.json', payload)
    print(json.dumps(_round(payload), indent=2))


def cmd_show_operator(args):
    lat = _lattice(args)
    l = _coupling(args.l, 'l')
    if args.alpha is None:
        op = hamiltonian(l, lat)
        name = f"hamiltonian_{l.label()}.json"
    else:
        op = closed_form_L(l, _alpha(args.alpha), lat)
        name = f"operator_{l.label()}_{args.alpha}.json"
    payload = describe_operator(op)
    write_json(args, name, payload)
    print(payload['pretty'])


def cmd_qes(args):
    lat = _lattice(args)
    l = _coupling(args.l, 'l')
    space = build_space(l, _alpha(args.alpha), lat)
    rng = np.random.default_rng(args.seed)
    points = sample_points(lat, rng, 10)
    pairs = qes_eigenfunctions(space)
    residuals = [eigen_residual(space, E, f, points) for E, f in pairs]
    payload = describe_space(space)
    payload['eigen_residuals'] = [[E.real, E.imag, res] for (E, _), res in zip(pairs, residuals)]
    write_json(args, f"qes_{l.label()}_{args.alpha}.json", payload)
    for (E, _), res in zip(pairs, residuals):
        print(f"E = {E.real:.15g}{E.imag:+.15g}j   residual {res:.2e}")
    _violation(max(residuals, default=0.0) > config.QES_RESIDUAL_TOL,
               f"eigenfunction residual {max(residuals):.2e} > {config.QES_RESIDUAL_TOL:g}")


def cmd_darboux(args):
    lat = _lattice(args)
    l = _coupling(args.l, 'l')
    rng = np.random.default_rng(args.seed)
    report = darboux_report(l, _alpha(args.alpha), lat, rng=rng, E=args.E)
    write_json(args, f"darboux_{l.label()}_{args.alpha}.json", report)
    print(f"target ({','.join(f'{v:g}' for v in report['target'])}), order {report['operator']['order']}, "
          f"residual {report['intertwining']['numeric_residual']:.2e}")
    ok = (report['annihilates_basis'] and report['matches_annihilator']
          and report['partner_matches_target'] and report['intertwining']['passed'])
    _violation(not ok, "Darboux-Crum checks failed; see the JSON report")


def _save_table(args, scanner, df, stem):
    os.makedirs(args.output_dir, exist_ok=True)
    path = os.path.join(args.output_dir, f"{stem}.csv")
    scanner.save_results_to_csv(df, path)
    if args.xlsx:
        scanner.save_results_to_excel(df, os.path.join(args.output_dir, f"{stem}.xlsx"))
    return path


def cmd_scan(args):
    lat = _lattice(args)
    l = _coupling(args.l, 'l')
    scanner = TraceScanner(lat, workers=args.workers)
    df = scanner.scan(l, args.k, _grid(args))
    _save_table(args, scanner, df, f"scan_{l.label()}_k{args.k}")
    summary = scanner.generate_summary_report(df)
    write_json(args, f"scan_{l.label()}_k{args.k}.json", summary)
    print(f"rows {summary['rows']}, ok {summary['ok']}, errors {summary['errors']}, "
          f"max |det M - 1| {summary['max_det_deviation']:.2e}")
    _violation(summary['max_det_deviation'] > config.DET_TOL,
               f"|det M - 1| = {summary['max_det_deviation']:.2e} > {config.DET_TOL:g}")


def cmd_compare(args):
    lat = _lattice(args)
    lA, lB = _coupling(args.lA, 'lA'), _coupling(args.lB, 'lB')
    table = trace_comparison_table(lA, lB, args.k, _grid(args), lat, workers=args.workers)
    scanner = TraceScanner(lat, workers=args.workers)
    _save_table(args, scanner, table, f"compare_{lA.label()}_{lB.label()}_k{args.k}")
    errors = int((table['status'] != 'ok').sum())
    ok = table[table['status'] == 'ok']
    max_dtr = float(ok['dtr'].max()) if len(ok) else 0.0
    write_json(args, f"compare_{lA.label()}_{lB.label()}_k{args.k}.json",
               {'max_dtr': max_dtr, 'rows': len(table), 'errors': errors})
    print(f"max |tr M_A - tr M_B| = {max_dtr:.3e} over {len(ok)} of {len(table)} energies")
    if errors:
        raise IntegrationError(f"{errors} grid point(s) failed to integrate")
    _violation(max_dtr > config.TRACE_TOL, f"max |dtr| = {max_dtr:.2e} > {config.TRACE_TOL:g}")


def _heun_params(value):
    if value is None:
        raise DescriptorError("--params is required for this command")
    if isinstance(value, str):
        try:
            if os.path.exists(value):
                with open(value, encoding='utf-8') as fh:
                    value = json.load(fh)
            else:
                value = json.loads(value)
        except json.JSONDecodeError as e:
            raise DescriptorError(f"--params is neither a JSON file nor a JSON object: {e}")
    try:
        validated = HeunParamsSpec.model_validate(value)
    except ValidationError as e:
        raise DescriptorError(f"Heun parameters do not match the schema:\n{e}")
    data = validated.model_dump()
    data['t'] = complex(*data['t'])
    return HeunRationalParams(**data)


def _cycles(text, t):
    out = []
    for item in str(text).split(','):
        item = item.strip()
        if item in ('inf', 'infinity'):
            out.append(INFINITY)
        elif item == 't':
            out.append(t)
        else:
            out.append(complex(item))
    return out


def cmd_transform(args):
    p = _heun_params(args.params)
    if not args.z:
        raise DescriptorError("--z is required for this command")
    z_values = [complex(v) for v in args.z.split(',')]
    report = transform_report(p, args.root_choice, z_values, cycles=_cycles(args.cycles, p.t))
    write_json(args, 'transform.json', report)
    bad = [r for r in report['rows'] if r['status'] != 'ok']
    for r in report['rows']:
        print(f"z={r['z']} cycle={r['cycle']}: {r['status']} {r.get('residual', r.get('error', ''))}")
    _violation(bool(bad), f"{len(bad)} transform value(s) failed the residual test")


def cmd_finite_gap(args):
    lat = _lattice(args)
    l = _coupling(args.l, 'l')
    rng = np.random.default_rng(args.seed)
    report = finite_gap_report(l, lat, args.max_steps, args.certify, rng)
    write_json(args, f"finite_gap_{l.label()}.json", report)
    for chain in report['chains'][:10]:
        cert = chain.get('certificate')
        status = '' if cert is None else (' certified' if cert['passed'] else ' NOT certified')
        print(f"order {chain['order']}: {chain['alphas']}{status}")
    certified = [c['certificate']['passed'] for c in report['chains'] if 'certificate' in c]
    _violation(not report['chains'], f"no closing chain of length <= {args.max_steps}")
    _violation(not all(certified), "commutation certificate failed")


def _criteria(text):
    if not text:
        return None
    try:
        only = {int(c) for c in text.split(',') if c.strip()}
    except ValueError:
        raise DescriptorError(f"--only expects comma-separated criterion numbers, got {text!r}")
    if not only <= set(range(1, 11)):
        raise DescriptorError(f"acceptance criteria are numbered 1 to 10, got {sorted(only)}")
    return only


def cmd_verify_all(args):
    suite = AcceptanceSuite(seed=args.seed, workers=args.workers, output_dir=args.output_dir,
                            run_config=resolved_config(args))
    suite.process_all(only=_criteria(args.only))
    suite.save_results_to_csv()
    write_json(args, 'acceptance.json', {'config_digest': suite.config_digest,
                                           'checks': suite.results})
    print(suite.get_results_summary())
    _violation(not suite.all_passed, "acceptance suite reported failures")


HANDLERS = {
    'lattice': cmd_lattice,
    'show-operator': cmd_show_operator,
    'qes': cmd_qes,
    'darboux': cmd_darboux,
    'scan': cmd_scan,
    'compare': cmd_compare,
    'transform': cmd_transform,
    'finite-gap': cmd_finite_gap,
    'verify-all': cmd_verify_all,
}


def build_parser():
    parser = argparse.ArgumentParser(description='Darboux-Crum and integral transformations of Heun equations')
    parser.add_argument('--verbose', '-v', action='store_true', help='debug logging')
    sub = parser.add_subparsers(dest='command', required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--lattice', choices=sorted(ACCEPTANCE_LATTICES), default='lemniscatic')
    common.add_argument('--omega1', type=complex, default=None,
                        help='half-period omega1 (overrides --lattice together with --omega3)')
    common.add_argument('--omega3', type=complex, default=None)
    common.add_argument('--seed', type=int, default=config.DEFAULT_SEED)
    common.add_argument('--workers', type=int, default=config.DEFAULT_WORKERS)
    common.add_argument('--output-dir', default=config.DEFAULT_OUTPUT_DIR)

    sub.add_parser('lattice', parents=[common], help='invariants and branch values of a lattice')
    p = sub.add_parser('show-operator', parents=[common], help='Hamiltonian or Darboux-Crum operator')
    p.add_argument('--l')
    p.add_argument('--alpha')
    p = sub.add_parser('qes', parents=[common], help='invariant space and its eigenvalues')
    p.add_argument('--l')
    p.add_argument('--alpha')
    p = sub.add_parser('darboux', parents=[common], help='closed form, annihilator and intertwining checks')
    p.add_argument('--l')
    p.add_argument('--alpha')
    p.add_argument('--E', type=complex, default=None)
    for name, help_text in (('scan', 'monodromy trace scan'), ('compare', 'trace comparison of two couplings')):
        p = sub.add_parser(name, parents=[common], help=help_text)
        if name == 'scan':
            p.add_argument('--l')
        else:
            p.add_argument('--lA')
            p.add_argument('--lB')
        p.add_argument('--k', type=int, choices=(1, 3), default=1)
        p.add_argument('--grid', help="'lin:a:b:n', 'clin:a:b:n:im' or comma-separated energies")
        p.add_argument('--xlsx', action='store_true', help='also write an Excel table')
    p = sub.add_parser('transform', parents=[common], help='Pochhammer-contour integral transformation')
    p.add_argument('--params', help='JSON object or file with gamma, delta, epsilon, alpha, beta, q, t=[re, im]')
    p.add_argument('--root-choice', dest='root_choice', type=int, choices=(1, 2), default=1)
    p.add_argument('--z', help='comma-separated evaluation points')
    p.add_argument('--cycles', default='0,t', help="subset of 0,1,t,inf")
    p = sub.add_parser('finite-gap', parents=[common], help='commuting operator chains')
    p.add_argument('--l')
    p.add_argument('--max-steps', dest='max_steps', type=int, default=4)
    p.add_argument('--certify', type=int, default=1, help='number of chains to certify')
    p = sub.add_parser('verify-all', parents=[common], help='run the acceptance suite')
    p.add_argument('--only', help='comma-separated criteria to run (default: all)')
    p = sub.add_parser('run', help='run a JSON experiment descriptor')
    p.add_argument('descriptor')
    return parser


def _dispatch(parser, args):
    if args.command == 'run':
        descriptor = load_descriptor(args.descriptor)
        verbose = args.verbose
        args = descriptor_to_args(parser, descriptor)
        args.verbose = verbose
    if args.omega1 is not None or args.omega3 is not None:
        if args.omega1 is None or args.omega3 is None:
            raise DescriptorError("--omega1 and --omega3 must be given together")
        args.lattice = None
    HANDLERS[args.command](args)


VALUE_FLAGS = frozenset({'--l', '--alpha', '--lA', '--lB', '--E', '--z', '--grid', '--omega1', '--omega3'})
NEGATIVE_VALUE = re.compile(r'^-\.?\d')


def join_negative_values(argv):
    """Rewrite `--alpha -2,1,1,0` as `--alpha=-2,1,1,0`; argparse reads the former as an option."""
    out, i = [], 0
    while i < len(argv):
        token = argv[i]
        if token in VALUE_FLAGS and i + 1 < len(argv) and NEGATIVE_VALUE.match(argv[i + 1]):
            out.append(f"{token}={argv[i + 1]}")
            i += 2
            continue
        out.append(token)
        i += 1
    return out


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(join_negative_values(sys.argv[1:] if argv is None else list(argv)))
    level = logging.DEBUG if args.verbose else getattr(logging, config.LOG_LEVEL.upper(), logging.INFO)
    logging.basicConfig(level=level, format=config.LOG_FORMAT)
    try:
        _dispatch(parser, args)
    except ToleranceViolation as e:
        logger.error(f"✗ {e}")
        return 1
    except DescriptorError as e:
        logger.error(f"✗ {e}")
        return 2
    except HeunError as e:
        logger.error(f"✗ {type(e).__name__}: {e}")
        return 3
    except Exception as e:
        logger.exception(f"✗ unexpected error: {e}")
        return 3
    return 0


if __name__ == '__main__':
    sys.exit(main())
