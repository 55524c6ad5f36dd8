"""CSV datasets, YAML run configuration and on-disk posterior draws."""
import csv
import json
import os
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
import yaml

from edpmoe.model import (BinomialBeta, CategoricalDirichlet, Dataset, GaussianNIG, GaussianOutput,
                          HMCSettings, OrdinalProbit, PosteriorDraws, PriorConfig, SamplerState)
from edpmoe.priors import prior_from_dict

__all__ = ['ConfigError', 'RunConfig', 'read_csv', 'write_csv', 'load_config', 'parse_config',
           'build_dataset', 'read_test_inputs', 'save_draws', 'load_draws', 'OUTPUT_ENV']

OUTPUT_ENV = 'EDPMOE_OUTPUT'


class ConfigError(ValueError):
    """Invalid run configuration; ``key`` names the offending entry."""

    def __init__(self, key, msg):
        super().__init__(f'{key}: {msg}')
        self.key = key


# -- CSV --------------------------------------------------------------------

def read_csv(path):
    """Header and float matrix of a CSV file with one header row ('#' lines skipped)."""
    with open(path, newline='') as fh:
        rows = [r for r in csv.reader(fh) if r and not r[0].startswith('#')]
    if not rows:
        raise ValueError(f'{path}: missing header row')
    header = [h.strip() for h in rows[0]]
    body = rows[1:]
    if not body:
        return header, np.empty((0, len(header)))
    try:
        data = np.array([[float(v) for v in r] for r in body])
    except ValueError as e:
        raise ValueError(f'{path}: non-numeric entry ({e})') from None
    if data.shape[1] != len(header):
        raise ValueError(f'{path}: rows do not match the header width')
    return header, data


def write_csv(path, header, rows, comments=()):
    with open(path, 'w', newline='') as fh:
        for c in comments:
            fh.write(f'# {c}\n')
        w = csv.writer(fh, lineterminator='\n')
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) for v in r])


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (np.integer,)):
        return str(int(v))
    return v


# -- configuration ----------------------------------------------------------

@dataclass
class DataConfig:
    path: str
    output_column: Optional[str] = None
    output: str = 'gaussian'
    cutoffs: Optional[List[float]] = None
    inputs: dict = field(default_factory=dict)
    default_input: dict = field(default_factory=lambda: {'c': 0.25, 'a': 2.0, 'b': 1.0})


@dataclass
class SamplerSettings:
    iters: int = 5000
    burn_in: int = 1000
    thin: int = 1
    seed: int = 0
    chains: int = 1
    workers: int = 1
    mode: str = 'edp'
    init: str = 'one'


@dataclass
class PredictionSettings:
    test_path: Optional[str] = None
    grid: Optional[dict] = None
    level: float = 0.95
    n_grid: int = 1024
    subset_dim: Optional[int] = None
    R: int = 200
    probabilities: bool = True
    segments: bool = False


@dataclass
class SummarySettings:
    psm: bool = True
    vi: bool = True
    refine: bool = False
    traces: bool = True


@dataclass
class RunConfig:
    data: DataConfig
    priors: PriorConfig
    sampler: SamplerSettings
    output_dir: Optional[str] = None
    prediction: PredictionSettings = field(default_factory=PredictionSettings)
    summary: SummarySettings = field(default_factory=SummarySettings)
    gamma_convention: str = 'shape-rate'
    source: Optional[str] = None

    def resolve_output(self, override=None):
        out = override or self.output_dir or os.environ.get(OUTPUT_ENV)
        if not out:
            raise ConfigError('output.dir', f'no output directory (set it, pass --out or define {OUTPUT_ENV})')
        return out


def load_config(path):
    if not os.path.exists(path):
        raise ConfigError('config', f'file not found: {path}')
    with open(path) as fh:
        try:
            raw = yaml.safe_load(fh) or {}
        except yaml.YAMLError as e:
            raise ConfigError('config', f'cannot parse {path}: {e}') from None
    return parse_config(raw, base_dir=os.path.dirname(os.path.abspath(path)), source=path)


def _section(raw, key):
    v = raw.get(key, {})
    if v is None:
        return {}
    if not isinstance(v, dict):
        raise ConfigError(key, 'must be a mapping')
    return v


def _check_keys(d, allowed, where):
    for k in d:
        if k not in allowed:
            raise ConfigError(f'{where}.{k}', 'unknown key')


def _fill(cls, d, where):
    allowed = set(cls.__dataclass_fields__)
    _check_keys(d, allowed, where)
    try:
        return cls(**d)
    except TypeError as e:
        raise ConfigError(where, str(e)) from None


def _path(p, base_dir):
    if p is None or os.path.isabs(p) or base_dir is None:
        return p
    return os.path.join(base_dir, p)


def _prior(d, key, convention):
    if not isinstance(d, dict):
        raise ConfigError(key, 'prior must be a mapping with a "dist" entry')
    try:
        return prior_from_dict(d, convention)
    except (KeyError, ValueError, TypeError) as e:
        raise ConfigError(key, f'invalid prior ({e})') from None


def _priors(raw, convention):
    _check_keys(raw, {'sigma2', 'beta0', 'magnitude', 'lengthscales', 'alpha_theta', 'alpha_psi',
                      'm', 'S', 'hmc', 'gamma_convention'}, 'priors')
    kw = {}
    for k in ('sigma2', 'beta0', 'magnitude', 'alpha_theta', 'alpha_psi'):
        if k in raw:
            kw[k] = _prior(raw[k], f'priors.{k}', convention)
    if 'lengthscales' in raw:
        ls = raw['lengthscales']
        if isinstance(ls, dict):
            ls = [ls]
        if not isinstance(ls, list) or not ls:
            raise ConfigError('priors.lengthscales', 'must be a prior or a non-empty list of priors')
        kw['lengthscales'] = tuple(_prior(p, f'priors.lengthscales[{i}]', convention)
                                   for i, p in enumerate(ls))
    for k in ('m', 'S'):
        if k in raw:
            if not isinstance(raw[k], int) or raw[k] < 1:
                raise ConfigError(f'priors.{k}', 'must be an integer >= 1')
            kw[k] = raw[k]
    if 'hmc' in raw:
        h = _fill(HMCSettings, raw['hmc'] or {}, 'priors.hmc')
        if h.n_leapfrog < 0 or not h.step_size > 0 or not 0 < h.target_accept < 1:
            raise ConfigError('priors.hmc', 'need n_leapfrog >= 0, step_size > 0, 0 < target_accept < 1')
        kw['hmc'] = h
    try:
        return PriorConfig(**kw)
    except ValueError as e:
        raise ConfigError('priors', str(e)) from None


def parse_config(raw, base_dir=None, source=None, check_paths=True):
    """Validate a configuration mapping and return a ``RunConfig``."""
    if not isinstance(raw, dict):
        raise ConfigError('config', 'top level must be a mapping')
    _check_keys(raw, {'data', 'priors', 'sampler', 'output', 'prediction', 'summary'}, 'config')
    pri = _section(raw, 'priors')
    convention = pri.get('gamma_convention', 'shape-rate')
    if convention not in ('shape-rate', 'shape-scale'):
        raise ConfigError('priors.gamma_convention', "must be 'shape-rate' or 'shape-scale'")
    data = _section(raw, 'data')
    if 'path' not in data:
        raise ConfigError('data.path', 'missing')
    data = _fill(DataConfig, data, 'data')
    data.path = _path(data.path, base_dir)
    if check_paths and not os.path.exists(data.path):
        raise ConfigError('data.path', f'file not found: {data.path}')
    if data.output not in ('gaussian', 'ordinal'):
        raise ConfigError('data.output', "must be 'gaussian' or 'ordinal'")
    smp = _fill(SamplerSettings, _section(raw, 'sampler'), 'sampler')
    if not (isinstance(smp.iters, int) and isinstance(smp.burn_in, int)) or not smp.iters > smp.burn_in >= 0:
        raise ConfigError('sampler.iters', 'need iters > burn_in >= 0')
    if smp.thin < 1:
        raise ConfigError('sampler.thin', 'must be >= 1')
    if smp.chains < 1:
        raise ConfigError('sampler.chains', 'must be >= 1')
    if smp.workers < 1:
        raise ConfigError('sampler.workers', 'must be >= 1')
    if smp.mode not in ('edp', 'dp'):
        raise ConfigError('sampler.mode', "must be 'edp' or 'dp'")
    if smp.init not in ('one', 'singletons'):
        raise ConfigError('sampler.init', "must be 'one' or 'singletons'")
    out = _section(raw, 'output')
    _check_keys(out, {'dir'}, 'output')
    pred = _fill(PredictionSettings, _section(raw, 'prediction'), 'prediction')
    pred.test_path = _path(pred.test_path, base_dir)
    if check_paths and pred.test_path is not None and not os.path.exists(pred.test_path):
        raise ConfigError('prediction.test_path', f'file not found: {pred.test_path}')
    if not 0 < pred.level < 1:
        raise ConfigError('prediction.level', 'must lie in (0, 1)')
    summ = _fill(SummarySettings, _section(raw, 'summary'), 'summary')
    return RunConfig(data, _priors(pri, convention), smp, _path(out.get('dir'), base_dir), pred, summ,
                     convention, source)


# -- datasets ---------------------------------------------------------------

def _input_spec(kind_cfg, column, X_col, default, key):
    kind = kind_cfg.get('kind', 'normal')
    try:
        if kind == 'normal':
            p = dict(default)
            p.update({k: v for k, v in kind_cfg.items() if k != 'kind'})
            u0 = p.get('u0', 'mean')
            if u0 == 'mean':
                u0 = float(X_col.mean()) if X_col.size else 0.0
            return GaussianNIG(u0=float(u0), c=float(p['c']), a=float(p['a']), b=float(p['b']))
        if kind == 'categorical':
            if 'gamma' in kind_cfg:
                return CategoricalDirichlet(tuple(kind_cfg['gamma']))
            return CategoricalDirichlet((1.0,) * int(kind_cfg['n_categories']))
        if kind == 'binomial':
            return BinomialBeta(int(kind_cfg['G']), float(kind_cfg.get('gamma0', 1.0)),
                                float(kind_cfg.get('gamma1', 1.0)))
    except (KeyError, ValueError, TypeError) as e:
        raise ConfigError(key, f'invalid input model ({e})') from None
    raise ConfigError(key, f'unknown input kind {kind!r}')


def build_dataset(dc):
    """Read the training CSV described by a ``DataConfig``."""
    try:
        header, M = read_csv(dc.path)
    except (OSError, ValueError) as e:
        raise ConfigError('data.path', str(e)) from None
    ycol = dc.output_column if dc.output_column is not None else header[-1]
    if ycol not in header:
        raise ConfigError('data.output_column', f'column {ycol!r} not in {dc.path}')
    j = header.index(ycol)
    xcols = [h for h in header if h != ycol]
    if not xcols:
        raise ConfigError('data.path', 'no input columns')
    for k in dc.inputs:
        if k not in xcols:
            raise ConfigError(f'data.inputs.{k}', 'not an input column')
    X = np.delete(M, j, axis=1)
    y = M[:, j]
    spec = [_input_spec(dc.inputs.get(h, {}) or {}, h, X[:, d], dc.default_input, f'data.inputs.{h}')
            for d, h in enumerate(xcols)]
    if dc.output == 'ordinal':
        if dc.cutoffs is not None:
            output = OrdinalProbit(tuple(dc.cutoffs))
        else:
            output = OrdinalProbit.unit_spaced(int(y.max()) if y.size else 1)
    else:
        output = GaussianOutput()
    try:
        return Dataset(X, y, output, spec), xcols, ycol
    except ValueError as e:
        raise ConfigError('data', str(e)) from None


def read_test_inputs(path, xcols):
    """Test inputs in training-column order; an output column, if present, is returned too."""
    header, M = read_csv(path)
    missing = [c for c in xcols if c not in header]
    if missing:
        raise ValueError(f'{path}: missing input columns {missing}')
    extra = [h for h in header if h not in xcols]
    if len(extra) > 1:
        raise ValueError(f'{path}: unexpected columns {extra}')
    X = M[:, [header.index(c) for c in xcols]] if M.size else np.empty((0, len(xcols)))
    y = M[:, header.index(extra[0])] if extra and M.size else None
    return X, y


# -- draws ------------------------------------------------------------------

def save_draws(path, draws):
    """One JSON record per retained draw, preceded by a metadata line."""
    with open(path, 'w') as fh:
        fh.write(json.dumps({'meta': {'seed': draws.seed, 'mode': draws.mode, 'n': len(draws),
                                      'move_stats': draws.move_stats}}) + '\n')
        for st in draws.states:
            fh.write(json.dumps(st.to_record()) + '\n')


def load_draws(paths):
    """Read and pool one or more draw files."""
    if isinstance(paths, (str, os.PathLike)):
        paths = [paths]
    states, stats, seeds, modes = [], {}, [], set()
    for p in paths:
        with open(p) as fh:
            meta = json.loads(fh.readline())['meta']
            seeds.append(meta['seed'])
            modes.add(meta['mode'])
            stats[str(p)] = meta.get('move_stats')
            for line in fh:
                if line.strip():
                    states.append(SamplerState.from_record(json.loads(line)))
    if len(modes) > 1:
        raise ValueError('cannot pool draws from different modes')
    seed = seeds[0] if len(seeds) == 1 else seeds
    return PosteriorDraws(states, stats if len(paths) > 1 else stats[str(paths[0])], seed,
                          modes.pop() if modes else 'edp')
