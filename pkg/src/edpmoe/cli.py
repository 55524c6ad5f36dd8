"""Command-line workflow: simulate, fit, predict, summarise.

Runs are directories holding a ``manifest.json`` that cross-references the
configuration, the training data and one subdirectory per chain, so the later
subcommands only need ``--run``. Configuration problems exit with status 2.
"""
import argparse
import json
import logging
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict

import numpy as np

from edpmoe import __version__
from edpmoe.io import (OUTPUT_ENV, ConfigError, build_dataset, load_config, load_draws,
                       read_test_inputs, save_draws, write_csv)
from edpmoe.prediction import Predictor, ordinal_summary
from edpmoe.sampler import Sampler, SamplerConfig
from edpmoe.summary import psm_x, psm_y, vi_point_estimate
from edpmoe.synthetic import DampedCosineConfig, generate, ordinalise

logger = logging.getLogger('edpmoe')

MANIFEST = 'manifest.json'


def _fail(msg):
    print(f'error: {msg}', file=sys.stderr)
    return 2


def _json_dump(obj, path):
    with open(path, 'w') as fh:
        json.dump(obj, fh, indent=1, sort_keys=True)
        fh.write('\n')


# -- simulate ---------------------------------------------------------------

def cmd_simulate(args):
    try:
        cfg = DampedCosineConfig(N=args.N, D=args.D, seed=args.seed)
    except ValueError as e:
        return _fail(str(e))
    out = args.out or os.environ.get(OUTPUT_ENV)
    if not out:
        return _fail(f'--out: no output directory (or set {OUTPUT_ENV})')
    os.makedirs(out, exist_ok=True)
    data, comp, truth, (Xt, yt) = generate(cfg, n_test=max(args.n_test, 1))
    header = [f'x{d + 1}' for d in range(cfg.D)] + ['y']
    y = data.y
    side = {'seed': cfg.seed, 'config': asdict(cfg), 'labels': comp.tolist(),
            'components': [{'beta': list(cfg.beta1), 'sigma': cfg.sigma1, 'tau': cfg.tau1, 'mu': cfg.mu1},
                           {'beta': list(cfg.beta2), 'sigma': cfg.sigma2, 'tau': cfg.tau2, 'mu': cfg.mu2}]}
    if args.ordinal:
        y, output = ordinalise(y, args.scale, args.shift, args.levels)
        yt = ordinalise(yt, args.scale, args.shift, args.levels)[0]
        side['ordinal'] = {'scale': args.scale, 'shift': args.shift, 'cutoffs': list(output.cutoffs)}
    write_csv(os.path.join(out, 'data.csv'), header, np.column_stack([data.X, y]))
    if args.n_test > 0:
        write_csv(os.path.join(out, 'test.csv'), header, np.column_stack([Xt, yt]))
    _json_dump(side, os.path.join(out, 'truth.json'))
    print(os.path.join(out, 'data.csv'))
    return 0


# -- fit --------------------------------------------------------------------

def _run_chain(job):
    data, priors, scfg, chain_dir = job
    os.makedirs(chain_dir, exist_ok=True)
    trace = []

    def record(s, it):
        ch = s.chain
        trace.append((it, len(ch.clusters), sum(len(c.xcl) for c in ch.clusters), ch.alpha_theta, s.step_size))

    t0 = time.time()
    draws = Sampler(data, priors, scfg).run(callback=record)
    elapsed = time.time() - t0
    save_draws(os.path.join(chain_dir, 'draws.jsonl'), draws)
    write_csv(os.path.join(chain_dir, 'trace.csv'), ['iteration', 'k', 'kx', 'alpha_theta', 'step_size'], trace)
    _json_dump(draws.move_stats, os.path.join(chain_dir, 'move_stats.json'))
    return elapsed


def _apply_overrides(cfg, args):
    s = cfg.sampler
    for key in ('seed', 'iters', 'burn_in', 'thin', 'chains', 'workers', 'mode'):
        v = getattr(args, key, None)
        if v is not None:
            setattr(s, key, v)
    if not s.iters > s.burn_in >= 0:
        raise ConfigError('sampler.iters', 'need iters > burn_in >= 0')
    if s.chains < 1:
        raise ConfigError('sampler.chains', 'must be >= 1')
    if s.mode not in ('edp', 'dp'):
        raise ConfigError('sampler.mode', "must be 'edp' or 'dp'")


def cmd_fit(args):
    try:
        cfg = load_config(args.config)
        _apply_overrides(cfg, args)
        out = cfg.resolve_output(args.out)
        data, xcols, ycol = build_dataset(cfg.data)
    except ConfigError as e:
        return _fail(str(e))
    s = cfg.sampler
    os.makedirs(out, exist_ok=True)
    jobs, chains = [], []
    for c in range(s.chains):
        seed = s.seed + c
        scfg = SamplerConfig(n_iter=s.iters, burn_in=s.burn_in, thin=s.thin, seed=seed, mode=s.mode, init=s.init)
        d = f'chain_{c}'
        jobs.append((data, cfg.priors, scfg, os.path.join(out, d)))
        chains.append({'dir': d, 'seed': seed, 'draws': f'{d}/draws.jsonl', 'trace': f'{d}/trace.csv',
                       'move_stats': f'{d}/move_stats.json'})
    if s.workers > 1 and s.chains > 1:
        with ProcessPoolExecutor(max_workers=min(s.workers, s.chains)) as ex:
            times = list(ex.map(_run_chain, jobs))
    else:
        times = [_run_chain(j) for j in jobs]
    manifest = {
        'version': __version__,
        'config': os.path.abspath(args.config),
        'data': os.path.abspath(cfg.data.path),
        'input_columns': xcols,
        'output_column': ycol,
        'mode': s.mode,
        'sampler': asdict(s),
        'chains': chains,
        'meta': {'created': time.strftime('%Y-%m-%dT%H:%M:%S'), 'seconds': times},
    }
    _json_dump(manifest, os.path.join(out, MANIFEST))
    print(os.path.join(out, MANIFEST))
    return 0


# -- run loading ------------------------------------------------------------

def _load_run(run_dir):
    mpath = os.path.join(run_dir, MANIFEST)
    if not os.path.exists(mpath):
        raise ConfigError('--run', f'no {MANIFEST} in {run_dir}')
    with open(mpath) as fh:
        man = json.load(fh)
    cfg = load_config(man['config'])
    cfg.data.path = man['data']
    data, xcols, ycol = build_dataset(cfg.data)
    draws = load_draws([os.path.join(run_dir, c['draws']) for c in man['chains']])
    return man, cfg, data, xcols, draws


# -- predict ----------------------------------------------------------------

def _grid_inputs(spec, data):
    """Test inputs from 'dim:start:stop:num'; other dimensions held at their training means."""
    try:
        d, a, b, n = spec.split(':')
        d, a, b, n = int(d), float(a), float(b), int(n)
    except ValueError:
        raise ConfigError('--grid', "expected 'dim:start:stop:num'") from None
    if not 0 <= d < data.D:
        raise ConfigError('--grid', f'dimension {d} out of range for D={data.D}')
    X = np.tile(data.X.mean(axis=0), (n, 1))
    X[:, d] = np.linspace(a, b, n)
    return X


def cmd_predict(args):
    try:
        man, cfg, data, xcols, draws = _load_run(args.run)
        ps = cfg.prediction
        test = args.test or ps.test_path
        ytest = None
        if args.grid:
            Xs = _grid_inputs(args.grid, data)
        elif test:
            if not os.path.exists(test):
                raise ConfigError('prediction.test_path', f'file not found: {test}')
            try:
                Xs, ytest = read_test_inputs(test, xcols)
            except ValueError as e:
                raise ConfigError('prediction.test_path', str(e)) from None
        else:
            raise ConfigError('prediction.test_path', 'no test inputs (use --test or --grid)')
    except ConfigError as e:
        return _fail(str(e))
    out = args.out or os.path.join(args.run, 'predictions.csv')
    pr = Predictor(data, draws, cfg.priors, seed=args.seed)
    level = ps.level
    subset = args.subset_dim if args.subset_dim is not None else ps.subset_dim
    header = ['index', 'prediction', 'lower', 'upper']
    rows = []
    if data.is_ordinal:
        L = data.output.L
        if ps.probabilities:
            header += [f'p{l}' for l in range(L + 1)]
    elif ps.segments:
        header += ['segments']
    if ytest is not None:
        header += ['y', 'covered']
    for s in range(0, Xs.shape[0], args.batch):
        Xb = Xs[s:s + args.batch]
        mix = pr.mixture(Xb)
        if data.is_ordinal:
            pmf = mix.ordinal_pmf(data.output.cutoffs)
            med, lo, hi = ordinal_summary(pmf, level)
            for t in range(Xb.shape[0]):
                r = [s + t, int(med[t]), int(lo[t]), int(hi[t])]
                if ps.probabilities:
                    r += list(pmf[t])
                if ytest is not None:
                    yv = int(ytest[s + t])
                    r += [yv, int(lo[t] <= yv <= hi[t])]
                rows.append(r)
        else:
            mean = mix.point_mean() if subset is None else pr.subset(Xb[:, subset], subset, ps.R)
            for t in range(Xb.shape[0]):
                h = mix.hpd(t, level, ps.n_grid)
                r = [s + t, mean[t], h.lower, h.upper]
                if ps.segments:
                    r.append(';'.join(f'{a!r}:{b!r}' for a, b in h.segments))
                if ytest is not None:
                    r += [ytest[s + t], int(h.contains(ytest[s + t]))]
                rows.append(r)
    comments = [f'run={os.path.abspath(args.run)} draws={len(draws)} seed={args.seed} level={level}']
    if subset is not None:
        comments.append(f'prediction uses input dimension {subset} only')
    write_csv(out, header, rows, comments)
    if ytest is not None and rows:
        cov = float(np.mean([r[-1] for r in rows]))
        print(f'coverage {cov:.4f} over {len(rows)} test points')
    print(out)
    return 0


# -- summarise --------------------------------------------------------------

def cmd_summarise(args):
    try:
        man, cfg, data, xcols, draws = _load_run(args.run)
    except ConfigError as e:
        return _fail(str(e))
    out = args.out or args.run
    os.makedirs(out, exist_ok=True)
    ss = cfg.summary
    N = data.N
    seeds = [c['seed'] for c in man['chains']]
    prov = f'seeds={seeds} draws={len(draws)} mode={draws.mode}'
    names = [f'n{i}' for i in range(N)]
    if ss.psm:
        P = psm_y(draws)
        write_csv(os.path.join(out, 'psm_y.csv'), names, P, [prov])
    if ss.vi:
        est = vi_point_estimate(draws, refine=args.refine or ss.refine)
        part = est.partition
        write_csv(os.path.join(out, 'vi_estimate.csv'), ['index', 'zy', 'zx'],
                  [(i, int(part.zy[i]), int(part.zx[i])) for i in range(N)], [prov])
        _json_dump(dict(est.to_dict(), provenance=prov), os.path.join(out, 'vi_summary.json'))
        if ss.psm:
            for j in range(part.k):
                idx = np.flatnonzero(part.zy == j)
                write_csv(os.path.join(out, f'psm_x_{j}.csv'), [f'n{i}' for i in idx],
                          psm_x(draws, idx), [prov, f'members of estimated y-cluster {j}'])
        print(f'y-clusters {part.k}  x-clusters per y-cluster {part.kj().tolist()}  '
              f'expected VI {est.expected_vi:.4f}  ball {est.ball_size:.4f}')
    if ss.traces:
        ks = draws.k_trace()
        kx = np.array([int(np.sum(s.partition.kj())) for s in draws.states])
        write_csv(os.path.join(out, 'k_retained.csv'), ['draw', 'k', 'kx'],
                  [(i, int(a), int(b)) for i, (a, b) in enumerate(zip(ks, kx))], [prov])
    return 0


# -- entry point ------------------------------------------------------------

def build_parser():
    p = argparse.ArgumentParser(prog='edpmoe', description='Enriched Dirichlet process mixtures of GP experts.')
    p.add_argument('--version', action='version', version=__version__)
    p.add_argument('--log-level', default='WARNING')
    sub = p.add_subparsers(dest='command', required=True)

    s = sub.add_parser('simulate', help='write a damped-cosine benchmark dataset')
    s.add_argument('--N', type=int, default=200)
    s.add_argument('--D', type=int, default=1)
    s.add_argument('--seed', type=int, default=0)
    s.add_argument('--n-test', type=int, default=0, help='also write test.csv with this many rows')
    s.add_argument('--ordinal', action='store_true', help='discretise the outputs')
    s.add_argument('--levels', type=int, default=6, help='number of unit-spaced cutoffs')
    s.add_argument('--scale', type=float, default=2.0)
    s.add_argument('--shift', type=float, default=2.0)
    s.add_argument('--out', help=f'output directory (default ${OUTPUT_ENV})')
    s.set_defaults(func=cmd_simulate)

    f = sub.add_parser('fit', help='run the sampler')
    f.add_argument('--config', required=True)
    f.add_argument('--out', help=f'run directory (default: output.dir, then ${OUTPUT_ENV})')
    f.add_argument('--seed', type=int)
    f.add_argument('--iters', type=int)
    f.add_argument('--burn-in', dest='burn_in', type=int)
    f.add_argument('--thin', type=int)
    f.add_argument('--chains', type=int)
    f.add_argument('--workers', type=int)
    f.add_argument('--mode', choices=['edp', 'dp'])
    f.set_defaults(func=cmd_fit)

    q = sub.add_parser('predict', help='predict at test inputs from a fitted run')
    q.add_argument('--run', required=True)
    q.add_argument('--test', help='CSV with the training input columns (and optionally the output)')
    q.add_argument('--grid', help="'dim:start:stop:num', other inputs at their training means")
    q.add_argument('--subset-dim', type=int, help='predict from this input dimension only')
    q.add_argument('--out')
    q.add_argument('--seed', type=int, default=0)
    q.add_argument('--batch', type=int, default=100)
    q.set_defaults(func=cmd_predict)

    m = sub.add_parser('summarise', aliases=['summarize'], help='similarity matrices and VI estimates')
    m.add_argument('--run', required=True)
    m.add_argument('--out')
    m.add_argument('--refine', action='store_true', help='greedy refinement of the VI estimate')
    m.set_defaults(func=cmd_summarise)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=getattr(logging, str(args.log_level).upper(), logging.WARNING),
                        format='%(asctime)s %(name)s %(message)s')
    return args.func(args)


if __name__ == '__main__':
    sys.exit(main())
