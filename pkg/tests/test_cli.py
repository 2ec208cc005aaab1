"""Command-line front-end and experiment descriptors."""
import json

import pandas as pd
import pytest

from cli import ExperimentDescriptor, build_parser, descriptor_to_args, join_negative_values, main


def _read(path):
    with open(path, encoding='utf-8') as fh:
        return json.load(fh)


class TestSubcommands:
    """Exit codes and artifacts."""

    def test_lattice(self, tmp_path):
        assert main(['lattice', '--lattice', 'generic', '--output-dir', str(tmp_path)]) == 0
        doc = _read(tmp_path / 'lattice.json')
        assert doc['config']['lattice'] == 'generic'
        assert doc['config']['seed'] == 42
        assert len(doc['result']['e']) == 3

    def test_explicit_half_periods(self, tmp_path):
        code = main(['lattice', '--omega1', '0.5', '--omega3', '0.3j', '--output-dir', str(tmp_path)])
        assert code == 0
        doc = _read(tmp_path / 'lattice.json')
        assert doc['result']['omega3'] == [0.0, 0.3]

    def test_single_half_period_is_a_usage_error(self, tmp_path):
        assert main(['lattice', '--omega1', '0.5', '--output-dir', str(tmp_path)]) == 2

    def test_degenerate_lattice(self, tmp_path):
        assert main(['lattice', '--omega1', '0.5', '--omega3', '0.7', '--output-dir', str(tmp_path)]) == 3

    def test_qes(self, tmp_path, capsys):
        code = main(['qes', '--l', '2,0,0,0', '--alpha=-2,0,0,0', '--output-dir', str(tmp_path)])
        assert code == 0
        assert 'residual' in capsys.readouterr().out
        doc = _read(tmp_path / 'qes_2,0,0,0_-2,0,0,0.json')
        assert doc['result']['d'] == 1

    def test_negative_values_in_space_form(self, tmp_path):
        code = main(['qes', '--l', '2,0,0,0', '--alpha', '-2,1,1,0', '--output-dir', str(tmp_path)])
        assert code == 0
        doc = _read(tmp_path / 'qes_2,0,0,0_-2,1,1,0.json')
        assert doc['config']['alpha'] == '-2,1,1,0'

    def test_join_negative_values(self):
        argv = ['darboux', '--alpha', '-4,1,1,0', '--E', '-.5+1j', '--lattice', 'generic']
        assert join_negative_values(argv) == ['darboux', '--alpha=-4,1,1,0', '--E=-.5+1j',
                                              '--lattice', 'generic']
        # a following option is left alone
        assert join_negative_values(['qes', '--l', '--verbose']) == ['qes', '--l', '--verbose']

    def test_missing_coupling(self, tmp_path):
        assert main(['qes', '--alpha=-2,0,0,0', '--output-dir', str(tmp_path)]) == 2

    def test_show_operator(self, tmp_path, capsys):
        code = main(['show-operator', '--l', '2,0,0,0', '--alpha=-2,1,1,0', '--output-dir', str(tmp_path)])
        assert code == 0
        assert capsys.readouterr().out.startswith('D^1')

    def test_scan_writes_table(self, tmp_path):
        code = main(['scan', '--l', '0,0,0,0', '--k', '1', '--grid', 'lin:1:2:2',
                     '--workers', '1', '--output-dir', str(tmp_path)])
        assert code == 0
        df = pd.read_csv(tmp_path / 'scan_0,0,0,0_k1.csv')
        assert len(df) == 2
        assert (df['status'] == 'ok').all()

    def test_scan_excel_export(self, tmp_path):
        code = main(['scan', '--l', '0,0,0,0', '--k', '3', '--grid', '1', '--workers', '1',
                     '--xlsx', '--output-dir', str(tmp_path)])
        assert code == 0
        df = pd.read_excel(tmp_path / 'scan_0,0,0,0_k3.xlsx')
        assert list(df['status']) == ['ok']

    def test_bad_grid(self, tmp_path):
        code = main(['scan', '--l', '0,0,0,0', '--grid', 'lin:1:2', '--workers', '1',
                     '--output-dir', str(tmp_path)])
        assert code == 2

    def test_unrelated_pair(self, tmp_path):
        code = main(['compare', '--lA', '2,0,0,0', '--lB', '0.3,0,0,0', '--grid', '1',
                     '--workers', '1', '--output-dir', str(tmp_path)])
        assert code == 3

    def test_unknown_subcommand(self):
        with pytest.raises(SystemExit) as exc:
            main(['frobnicate'])
        assert exc.value.code == 2


class TestDescriptors:
    """JSON experiment descriptors validated by pydantic."""

    def test_run_lattice_descriptor(self, tmp_path):
        path = tmp_path / 'exp.json'
        path.write_text(json.dumps({
            'command': 'lattice',
            'lattice': {'omega1': [0.5, 0.0], 'omega3': [0.2, 0.35]},
            'output_dir': str(tmp_path / 'out'),
        }))
        assert main(['run', str(path)]) == 0
        doc = _read(tmp_path / 'out' / 'lattice.json')
        assert doc['result']['omega3'] == [0.2, 0.35]

    def test_unknown_key_is_rejected(self, tmp_path):
        path = tmp_path / 'exp.json'
        path.write_text(json.dumps({'command': 'lattice', 'colour': 'red'}))
        assert main(['run', str(path)]) == 2

    def test_wrong_coupling_length(self, tmp_path):
        path = tmp_path / 'exp.json'
        path.write_text(json.dumps({'command': 'qes', 'l': [2, 0, 0], 'alpha': [-2, 0, 0, 0]}))
        assert main(['run', str(path)]) == 2

    def test_unreadable_descriptor(self, tmp_path):
        path = tmp_path / 'exp.json'
        path.write_text('{not json')
        assert main(['run', str(path)]) == 2

    def test_descriptor_matches_direct_invocation(self):
        parser = build_parser()
        descriptor = ExperimentDescriptor.model_validate(
            {'command': 'scan', 'l': [2, 0, 0, 0], 'k': 3, 'grid': 'lin:0:8:16', 'workers': 1})
        args = descriptor_to_args(parser, descriptor)
        direct = parser.parse_args(['scan', '--l', '2,0,0,0', '--k', '3', '--grid', 'lin:0:8:16',
                                    '--workers', '1'])
        assert args.l == direct.l
        assert args.k == direct.k
        assert args.grid == direct.grid
        assert args.workers == direct.workers


class TestReproducibility:
    """Two runs with the same configuration write byte-identical artifacts."""

    def test_verify_all_twice(self, tmp_path):
        for name in ('a', 'b'):
            code = main(['verify-all', '--only', '1,2', '--workers', '1', '--output-dir', str(tmp_path / name)])
            assert code == 0
        for artifact in ('acceptance.csv', 'acceptance.json'):
            first = (tmp_path / 'a' / artifact).read_bytes()
            assert first == (tmp_path / 'b' / artifact).read_bytes(), f"{artifact} differs between runs"
        df = pd.read_csv(tmp_path / 'a' / 'acceptance.csv', dtype={'config_digest': str})
        doc = _read(tmp_path / 'a' / 'acceptance.json')
        assert list(df['criterion']) == [1, 2]
        assert (df['seed'] == 42).all()
        assert (df['config_digest'] == doc['result']['config_digest']).all()
        assert doc['config']['only'] == '1,2'
        assert 'output_dir' not in doc['config']

    def test_descriptor_run_twice(self, tmp_path):
        for name in ('a', 'b'):
            path = tmp_path / f"{name}.json"
            path.write_text(json.dumps({
                'command': 'scan', 'l': [2, 0, 0, 0], 'k': 1, 'grid': 'lin:1:3:3',
                'lattice': 'rectangular', 'workers': 1, 'output_dir': str(tmp_path / name),
            }))
            assert main(['run', str(path)]) == 0
        for artifact in ('scan_2,0,0,0_k1.csv', 'scan_2,0,0,0_k1.json'):
            first = (tmp_path / 'a' / artifact).read_bytes()
            assert first == (tmp_path / 'b' / artifact).read_bytes(), f"{artifact} differs between runs"

    def test_unknown_criterion(self, tmp_path):
        assert main(['verify-all', '--only', '11', '--output-dir', str(tmp_path)]) == 2
