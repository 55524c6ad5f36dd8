import hashlib
import json
import os
import shutil

import numpy as np
import pytest
import yaml

from edpmoe.cli import main
from edpmoe.io import read_csv

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))


def _config(tmp, data='sim/data.csv', test='sim/test.csv', ordinal=False, **sampler):
    cfg = {'data': {'path': data}, 'sampler': dict({'iters': 30, 'burn_in': 10, 'seed': 0}, **sampler),
           'output': {'dir': 'run'}, 'prediction': {'test_path': test, 'n_grid': 256, 'R': 20},
           'priors': {'S': 50}}
    if ordinal:
        cfg['data'].update(output='ordinal', cutoffs=[0, 1, 2, 3, 4, 5])
    p = tmp / 'cfg.yaml'
    p.write_text(yaml.safe_dump(cfg))
    return str(p)


def _sim(tmp, *extra, N=25, D=1, n_test=8, sub='sim'):
    assert main(['simulate', '--N', str(N), '--D', str(D), '--seed', '3', '--n-test', str(n_test),
                 '--out', str(tmp / sub), *extra]) == 0


@pytest.fixture(scope='module')
def fitted(tmp_path_factory):
    tmp = tmp_path_factory.mktemp('fit')
    _sim(tmp)
    cfg = _config(tmp)
    assert main(['fit', '--config', cfg]) == 0
    return tmp, cfg


def test_simulate_outputs(tmp_path):
    _sim(tmp_path, D=5)
    h, M = read_csv(tmp_path / 'sim' / 'data.csv')
    assert h == ['x1', 'x2', 'x3', 'x4', 'x5', 'y'] and M.shape == (25, 6)
    truth = json.loads((tmp_path / 'sim' / 'truth.json').read_text())
    assert set(truth['labels']) == {0, 1} and len(truth['labels']) == 25
    assert truth['seed'] == 3


def test_simulate_reproducible(tmp_path):
    _sim(tmp_path, sub='a')
    _sim(tmp_path, sub='b')
    dig = lambda s: hashlib.sha256((tmp_path / s / 'data.csv').read_bytes()).hexdigest()
    assert dig('a') == dig('b')


def test_simulate_env_output(tmp_path, monkeypatch):
    monkeypatch.setenv('EDPMOE_OUTPUT', str(tmp_path / 'env'))
    assert main(['simulate', '--N', '10']) == 0
    assert (tmp_path / 'env' / 'data.csv').exists()
    monkeypatch.delenv('EDPMOE_OUTPUT')
    assert main(['simulate', '--N', '10']) == 2


def test_fit_layout_and_determinism(fitted, tmp_path):
    tmp, cfg = fitted
    man = json.loads((tmp / 'run' / 'manifest.json').read_text())
    assert man['mode'] == 'edp' and len(man['chains']) == 1
    lines = (tmp / 'run' / 'chain_0' / 'draws.jsonl').read_text().splitlines()
    assert len(lines) >= 20
    assert main(['fit', '--config', cfg, '--out', str(tmp_path / 'again')]) == 0
    a = (tmp / 'run' / 'chain_0' / 'draws.jsonl').read_text()
    b = (tmp_path / 'again' / 'chain_0' / 'draws.jsonl').read_text()
    assert a == b


def test_predict_intervals_contain_prediction(fitted):
    tmp, _ = fitted
    assert main(['predict', '--run', str(tmp / 'run')]) == 0
    h, M = read_csv(tmp / 'run' / 'predictions.csv')
    assert h[:4] == ['index', 'prediction', 'lower', 'upper'] and 'covered' in h
    assert M.shape[0] == 8
    assert np.all(M[:, 2] <= M[:, 1]) and np.all(M[:, 1] <= M[:, 3])
    assert set(np.unique(M[:, -1])) <= {0.0, 1.0}


def test_predict_grid_and_subset(fitted):
    tmp, _ = fitted
    out = tmp / 'grid.csv'
    assert main(['predict', '--run', str(tmp / 'run'), '--grid', '0:0:8:5', '--subset-dim', '0',
                 '--out', str(out)]) == 0
    assert read_csv(out)[1].shape == (5, 4)


def test_predict_empty_test_file(fitted):
    tmp, _ = fitted
    (tmp / 'empty.csv').write_text('x1\n')
    out = tmp / 'empty_pred.csv'
    assert main(['predict', '--run', str(tmp / 'run'), '--test', str(tmp / 'empty.csv'), '--out', str(out)]) == 0
    lines = [l for l in out.read_text().splitlines() if not l.startswith('#')]
    assert lines == ['index,prediction,lower,upper']


def test_predict_dimension_mismatch(fitted, tmp_path):
    tmp, _ = fitted
    (tmp_path / 'bad.csv').write_text('z1\n0.5\n')
    assert main(['predict', '--run', str(tmp / 'run'), '--test', str(tmp_path / 'bad.csv')]) == 2
    assert main(['predict', '--run', str(tmp_path)]) == 2


def test_summarise_outputs(fitted):
    tmp, _ = fitted
    out = tmp / 'summary'
    assert main(['summarise', '--run', str(tmp / 'run'), '--out', str(out), '--refine']) == 0
    h, P = read_csv(out / 'psm_y.csv')
    assert P.shape == (25, 25) and np.allclose(P, P.T) and np.all(np.diag(P) == 1)
    _, V = read_csv(out / 'vi_estimate.csv')
    assert V.shape == (25, 3)
    js = json.loads((out / 'vi_summary.json').read_text())
    assert len(js['zy']) == 25 and js['k'] == len(js['kj'])
    for j in range(js['k']):
        assert (out / f'psm_x_{j}.csv').exists()
    assert main(['summarize', '--run', str(tmp / 'run'), '--out', str(tmp / 's2')]) == 0


def test_single_draw_psm_is_binary(tmp_path):
    _sim(tmp_path, N=12)
    cfg = _config(tmp_path, iters=2, burn_in=1)
    assert main(['fit', '--config', cfg]) == 0
    assert main(['summarise', '--run', str(tmp_path / 'run')]) == 0
    _, P = read_csv(tmp_path / 'run' / 'psm_y.csv')
    assert set(np.unique(P)) <= {0.0, 1.0}


def test_config_errors(tmp_path):
    _sim(tmp_path, N=10)
    assert main(['fit', '--config', _config(tmp_path, data='nowhere.csv')]) == 2
    assert main(['fit', '--config', _config(tmp_path, iters=10, burn_in=10)]) == 2
    p = _config(tmp_path)
    cfg = yaml.safe_load(open(p))
    cfg['sampler']['bogus'] = 1
    open(p, 'w').write(yaml.safe_dump(cfg))
    assert main(['fit', '--config', p]) == 2
    assert main(['fit', '--config', str(tmp_path / 'missing.yaml')]) == 2


def test_dp_mode_and_chains(tmp_path):
    _sim(tmp_path, N=15)
    cfg = _config(tmp_path, chains=2)
    assert main(['fit', '--config', cfg, '--mode', 'dp', '--iters', '12', '--burn-in', '4']) == 0
    man = json.loads((tmp_path / 'run' / 'manifest.json').read_text())
    assert man['mode'] == 'dp' and [c['seed'] for c in man['chains']] == [0, 1]
    for c in man['chains']:
        recs = [json.loads(l) for l in (tmp_path / 'run' / c['draws']).read_text().splitlines()]
        recs = [r for r in recs if 'kj' in r]
        assert len(recs) == 8 and all(r['kj'] == [1] * r['k'] for r in recs)


def test_ordinal_probabilities(tmp_path):
    _sim(tmp_path, '--ordinal', N=20)
    cfg = _config(tmp_path, ordinal=True, iters=20, burn_in=5)
    assert main(['fit', '--config', cfg]) == 0
    assert main(['predict', '--run', str(tmp_path / 'run')]) == 0
    h, M = read_csv(tmp_path / 'run' / 'predictions.csv')
    pc = [i for i, c in enumerate(h) if c.startswith('p') and c[1:].isdigit()]
    assert len(pc) == 7
    assert np.allclose(M[:, pc].sum(axis=1), 1.0, atol=1e-10)
    assert np.all(M[:, 2] <= M[:, 1]) and np.all(M[:, 1] <= M[:, 3])


def test_example_config_smoke(tmp_path):
    cfgdir = tmp_path / 'configs'
    cfgdir.mkdir()
    shutil.copy(os.path.join(ROOT, 'configs', 'simulated.yaml'), cfgdir / 'simulated.yaml')
    assert main(['simulate', '--N', '20', '--n-test', '5', '--out', str(tmp_path / 'sim')]) == 0
    cfg = str(cfgdir / 'simulated.yaml')
    assert main(['fit', '--config', cfg, '--iters', '6', '--burn-in', '2']) == 0
    assert main(['predict', '--run', str(tmp_path / 'runs' / 'simulated')]) == 0
    assert main(['summarise', '--run', str(tmp_path / 'runs' / 'simulated')]) == 0
