import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from edpmoe import (BinomialBeta, CategoricalDirichlet, ConcentrationParams, Dataset, ExpertParams,
                    GaussianNIG, NestedPartition, OrdinalProbit, PriorConfig, SamplerState, recount)
from edpmoe.priors import Fixed, Gamma, LogNormal, Normal, prior_from_dict


def test_recount_two_clusters():
    p = recount(NestedPartition([1, 1, 2], [1, 2, 1]))
    assert p.k == 2
    assert p.sizes().tolist() == [2, 1]
    assert p.kj().tolist() == [2, 1]
    assert [c.tolist() for c in p.xsizes()] == [[1, 1], [1]]


def test_recount_single_cluster():
    p = recount(NestedPartition([1, 1, 1], [1, 1, 1]))
    assert p.k == 1 and p.kj().tolist() == [1]
    assert p.kx1 == 1 and p.kx2plus == 0


def test_recount_relabels_in_order_of_appearance():
    p = recount(NestedPartition([2, 2, 1], [5, 3, 7]))
    assert p.zy.tolist() == [0, 0, 1]
    assert p.zx.tolist() == [0, 1, 0]


nested = st.integers(1, 12).flatmap(
    lambda n: st.tuples(st.lists(st.integers(0, 4), min_size=n, max_size=n),
                        st.lists(st.integers(0, 3), min_size=n, max_size=n)))


@given(nested)
def test_recount_idempotent_and_counts(zz):
    p = recount(NestedPartition(*zz))
    q = recount(p)
    assert np.array_equal(p.zy, q.zy) and np.array_equal(p.zx, q.zx)
    assert p.sizes().sum() == p.N
    for nj, xs in zip(p.sizes(), p.xsizes()):
        assert xs.sum() == nj
    kj = p.kj()
    assert p.kx2plus == int(np.sum(kj * (kj > 1)))
    assert p.kx1 == int(np.sum(kj == 1))
    assert p.kx1plus == sum(int(np.sum(c > 1)) for c in p.xsizes())
    # contiguous labels
    assert set(p.zy.tolist()) == set(range(p.k))


def test_partition_equality_is_label_invariant():
    assert NestedPartition([3, 3, 0], [1, 1, 2]) == NestedPartition([0, 0, 1], [0, 0, 0])
    assert NestedPartition([0, 0, 1], [0, 1, 0]) != NestedPartition([0, 0, 1], [0, 0, 0])


def test_dataset_validation():
    X = np.zeros((3, 1))
    with pytest.raises(ValueError):
        Dataset(X, np.zeros(2))
    with pytest.raises(ValueError):
        Dataset(np.array([[0.0], [1.0], [3.0]]), np.zeros(3), input_spec=[CategoricalDirichlet((1, 1, 1))])
    with pytest.raises(ValueError):
        Dataset(X, np.array([0, 1, 3]), OrdinalProbit((0.0, 1.0)))
    d = Dataset(X, np.array([0, 1, 2]), OrdinalProbit((0.0, 1.0)))
    assert d.is_ordinal and d.N == 3 and d.D == 1


def test_default_input_spec_uses_column_means():
    X = np.array([[1.0, 2.0], [3.0, 6.0]])
    d = Dataset(X, np.zeros(2))
    assert [s.u0 for s in d.input_spec] == [2.0, 4.0]
    assert all(s.c == 0.25 and s.a == 2.0 and s.b == 1.0 for s in d.input_spec)


def test_input_family_validation():
    with pytest.raises(ValueError):
        GaussianNIG(c=0.0)
    with pytest.raises(ValueError):
        CategoricalDirichlet((1.0,))
    with pytest.raises(ValueError):
        BinomialBeta(G=0)
    with pytest.raises(ValueError):
        BinomialBeta(G=2, gamma0=-1.0)


def test_ordinal_cutoffs():
    with pytest.raises(ValueError):
        OrdinalProbit((0.5, 1.0))
    with pytest.raises(ValueError):
        OrdinalProbit((0.0, 0.0))
    o = OrdinalProbit.unit_spaced(3)
    assert o.cutoffs == (0.0, 1.0, 2.0) and o.L == 3
    lo, hi = o.interval(np.array([0, 1, 3]))
    assert lo.tolist() == [-np.inf, 0.0, 2.0]
    assert hi.tolist() == [0.0, 1.0, np.inf]
    # boundary values belong to the lower category: (eps_{l-1}, eps_l]
    assert o.categorise(np.array([-1.0, 0.0, 0.5, 1.0, 2.0, 7.0])).tolist() == [0, 0, 1, 1, 2, 3]


@given(st.floats(-20, 20, allow_nan=False))
def test_ordinal_categorise_consistent_with_interval(z):
    o = OrdinalProbit((0.0, 0.7, 1.5, 4.0))
    c = int(o.categorise(z))
    lo, hi = o.interval(c)
    assert lo < z <= hi


def test_expert_params_roundtrip_and_validation():
    p = ExpertParams(0.1, -0.3, 2.0, [0.5, 3.0])
    q = ExpertParams.from_unconstrained(p.to_unconstrained())
    assert np.allclose(q.to_unconstrained(), p.to_unconstrained(), rtol=0, atol=1e-14)
    assert ExpertParams.from_dict(json.loads(json.dumps(p.to_dict()))).to_dict() == p.to_dict()
    for bad in [(0.0, 0, 1, [1]), (1, np.nan, 1, [1]), (1, 0, -1, [1]), (1, 0, 1, [0.0])]:
        with pytest.raises(ValueError):
            ExpertParams(*bad)


def test_state_record_roundtrip():
    s = SamplerState(NestedPartition([0, 0, 1], [0, 1, 0]),
                     [ExpertParams(0.1, 0, 1, [1]), ExpertParams(0.2, 1, 2, [3])],
                     ConcentrationParams(1.5, [0.5, 2.0]), np.array([0.1, 0.2, 0.3]), 7)
    r = SamplerState.from_record(json.loads(json.dumps(s.to_record())))
    assert r.partition == s.partition and r.iteration == 7
    assert r.to_record() == s.to_record()
    with pytest.raises(ValueError):
        SamplerState(s.partition, s.experts[:1], s.conc, s.latent)
    with pytest.raises(ValueError):
        ConcentrationParams(0.0, [1.0])


def test_prior_config_defaults():
    pc = PriorConfig()
    assert pc.m == 3 and pc.S == 1000
    assert isinstance(pc.lengthscale_prior(0), Gamma) and pc.lengthscale_prior(0).shape == 3.0
    assert pc.lengthscale_prior(4).shape == 10.0 and pc.lengthscale_prior(4).rate == 0.5
    assert pc.mu_beta == 0.0
    with pytest.raises(ValueError):
        PriorConfig(m=0)
    rng = np.random.default_rng(0)
    ps = pc.sample_experts(rng, 3, 50)
    assert len(ps) == 50 and all(p.D == 3 and p.sigma2 > 0 for p in ps)


def test_gamma_convention_shape_rate():
    g = Gamma(10.0, 0.5)
    assert g.mean == pytest.approx(20.0)
    s = Gamma.from_convention(10.0, 2.0, 'shape-scale')
    assert s.rate == pytest.approx(0.5)
    x = Gamma(3.0, 2.0).sample(np.random.default_rng(1), size=200000)
    assert x.mean() == pytest.approx(1.5, rel=0.01)


def test_prior_log_densities():
    from scipy import stats
    assert Gamma(3.0, 2.0).logpdf(0.7) == pytest.approx(stats.gamma.logpdf(0.7, 3.0, scale=0.5), abs=1e-12)
    assert LogNormal(-1.0, 0.5).logpdf(0.4) == pytest.approx(
        stats.lognorm.logpdf(0.4, 0.5, scale=np.exp(-1.0)), abs=1e-12)
    assert Normal(1.0, 2.0).logpdf(0.3) == pytest.approx(stats.norm.logpdf(0.3, 1.0, 2.0), abs=1e-12)
    # density of u = log x includes the Jacobian x
    g = Gamma(3.0, 2.0)
    assert g.logpdf_log(np.log(0.7)) == pytest.approx(g.logpdf(0.7) + np.log(0.7), abs=1e-12)
    for d in [Gamma(2, 3).to_dict(), LogNormal(0, 1).to_dict(), Normal(0, 1).to_dict(), Fixed(2.0).to_dict()]:
        assert prior_from_dict(d).to_dict() == d
