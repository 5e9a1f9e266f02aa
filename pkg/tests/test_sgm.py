import math
import warnings

import numpy as np
import pytest

from nysgm import (
    Dataset,
    InputError,
    KernelSpec,
    ModelState,
    Predictor,
    RegimeParams,
    TrainConfig,
    batch_sample_iteration,
    build_factor,
    gen_toy,
    gram,
    pass_count,
    predict,
    regime_schedule,
    step,
    train,
)
from nysgm.sgm import PrecomputedCrossGram

from oracles import functional_nysgm, plain_sgm

G = KernelSpec.gaussian(0.2)


@pytest.fixture
def single():
    data = Dataset([[0.0]], [1.0])
    return data, build_factor(G, data.X, 1)


def test_zero_step_is_identity(single):
    data, fac = single
    cfg = TrainConfig(eta1=0.0, iterations=1)
    state = ModelState(np.array([0.3]), 4)
    out = step(state, cfg, data, fac, PrecomputedCrossGram(fac, data.X), [0])
    np.testing.assert_array_equal(out.coef, state.coef)
    assert out.t == 5


def test_step_by_hand(single):
    data, fac = single
    cfg = TrainConfig(eta1=0.5, iterations=2)
    prov = PrecomputedCrossGram(fac, data.X)
    s2 = step(ModelState.zero(1), cfg, data, fac, prov, [0])
    assert s2.coef[0] == pytest.approx(0.5, abs=1e-15)
    assert predict(Predictor(fac, s2.coef), 0.0) == pytest.approx(0.5, abs=1e-15)
    s3 = step(s2, cfg, data, fac, prov, [0])
    assert predict(Predictor(fac, s3.coef), 0.0) == pytest.approx(0.75, abs=1e-15)


def test_step_index_out_of_range(single):
    data, fac = single
    with pytest.raises(InputError):
        step(ModelState.zero(1), TrainConfig(0.5, 1), data, fac, PrecomputedCrossGram(fac, data.X), [1])


def test_train_one_step_matches_step(single):
    data, fac = single
    traj = train(TrainConfig(eta1=0.5, iterations=1), data, fac)
    assert traj.iterations == [1]
    assert predict(traj.final, 0.0) == pytest.approx(0.5, abs=1e-15)


def test_train_deterministic():
    data = gen_toy(40, 3)
    fac = build_factor(G, data.X, 8)
    cfg = TrainConfig(eta1=0.05, iterations=200, batch_size=3, seed=11)
    a, b = train(cfg, data, fac), train(cfg, data, fac)
    np.testing.assert_array_equal(a.coefs, b.coefs)
    assert a.iterations == b.iterations


def test_snapshot_schedule():
    data = gen_toy(10, 0)
    fac = build_factor(G, data.X, 4)
    traj = train(TrainConfig(eta1=0.1, iterations=23, batch_size=2), data, fac)
    # default stride ceil(n / b) = 5, plus the final step
    assert traj.iterations == [5, 10, 15, 20, 23]
    traj = train(TrainConfig(eta1=0.1, iterations=6, snapshot_stride=3), data, fac)
    assert traj.iterations == [3, 6]


def test_zero_step_predicts_zero():
    data = gen_toy(20, 1)
    fac = build_factor(G, data.X, 5)
    traj = train(TrainConfig(eta1=0.0, iterations=40), data, fac)
    assert np.all(traj.predict_all(np.linspace(0, 1, 11)) == 0.0)


def test_storage_strategies_bitwise_equal():
    data = gen_toy(60, 9)
    fac = build_factor(G, data.X, 12)
    base = dict(eta1=0.02, iterations=300, batch_size=4, seed=5, snapshot_stride=7)
    a = train(TrainConfig(**base), data, fac)
    b = train(TrainConfig(**base, storage="on_the_fly"), data, fac)
    assert np.array_equal(a.coefs, b.coefs)


def test_reduces_to_classic_sgm():
    rng = np.random.default_rng(0)
    x = np.linspace(0, 1, 10) + 0.01 * rng.standard_normal(10)
    y = rng.standard_normal(10)
    data = Dataset(x, y)
    fac = build_factor(G, data.X, 10)
    assert fac.rank == 10
    cfg = TrainConfig(eta1=0.5, iterations=50, batch_size=2, seed=1, snapshot_stride=1)
    traj = train(cfg, data, fac, keep_indices=True)
    probe = np.linspace(-0.1, 1.1, 9)
    ref = plain_sgm(x, y, 0.2, [0.5] * 50, traj.indices, probe)
    assert np.max(np.abs(traj.predict_all(probe) - ref)) <= 1e-8


def test_functional_equivalence_small():
    rng = np.random.default_rng(2)
    x = rng.uniform(size=15)
    y = rng.standard_normal(15)
    data = Dataset(x, y)
    fac = build_factor(KernelSpec.gaussian(0.1), data.X, 5)
    assert np.linalg.cond(gram(fac.kernel, fac.landmarks)) < 1e6
    cfg = TrainConfig(eta1=0.5, iterations=50, batch_size=3, seed=4, snapshot_stride=1)
    traj = train(cfg, data, fac, keep_indices=True)
    probe = np.linspace(0, 1, 13)
    ref = functional_nysgm(x, y, 5, 0.1, [0.5] * 50, traj.indices, probe)
    assert np.max(np.abs(traj.predict_all(probe) - ref)) <= 1e-10


def test_decaying_schedule_matches_oracle():
    rng = np.random.default_rng(8)
    x, y = rng.uniform(size=12), rng.standard_normal(12)
    data = Dataset(x, y)
    fac = build_factor(KernelSpec.gaussian(0.1), data.X, 4)
    cfg = TrainConfig(eta1=0.45, theta=0.5, iterations=30, batch_size=2, seed=0, snapshot_stride=1)
    traj = train(cfg, data, fac, keep_indices=True)
    etas = [0.45 * t**-0.5 for t in range(1, 31)]
    probe = np.linspace(0, 1, 5)
    ref = functional_nysgm(x, y, 4, 0.1, etas, traj.indices, probe)
    assert np.max(np.abs(traj.predict_all(probe) - ref)) <= 1e-10


def test_full_batch_stream_reproduces_batch_iteration():
    data = gen_toy(9, 2)
    fac = build_factor(G, data.X, 4)
    T = 12
    cfg = TrainConfig(eta1=0.3, iterations=T, batch_size=data.n, snapshot_stride=1)
    J = np.tile(np.arange(data.n), (T, 1))
    sgd = train(cfg, data, fac, index_stream=J)
    g = batch_sample_iteration(data, fac, cfg)
    np.testing.assert_allclose(sgd.coefs, g.coefs, rtol=0, atol=1e-12)


def test_unbiasedness_light():
    data = gen_toy(8, 21)
    fac = build_factor(G, data.X, 4)
    cfg = TrainConfig(eta1=0.1, iterations=10, snapshot_stride=10)
    x0 = np.array([0.1, 0.5, 0.9])
    g = batch_sample_iteration(data, fac, cfg).predict_all(x0)[-1]
    runs = np.array(
        [train(TrainConfig(0.1, 10, seed=s, snapshot_stride=10), data, fac).predict_all(x0)[-1] for s in range(2000)]
    )
    se = runs.std(axis=0, ddof=1) / math.sqrt(len(runs))
    assert np.all(np.abs(runs.mean(axis=0) - g) <= 3 * se)


def test_prediction_linear_in_coefficients():
    data = gen_toy(20, 0)
    fac = build_factor(G, data.X, 6)
    c = np.random.default_rng(1).standard_normal(fac.rank)
    x = np.linspace(0, 1, 7)
    p = Predictor(fac, c)
    np.testing.assert_allclose(Predictor(fac, 2.5 * c)(x), 2.5 * p(x), rtol=1e-14, atol=1e-14)
    assert predict(Predictor(fac, np.zeros(fac.rank)), 0.3) == 0.0


def test_predict_dimension_mismatch():
    data = gen_toy(5, 0)
    fac = build_factor(G, data.X, 2)
    with pytest.raises(InputError):
        predict(Predictor(fac, np.zeros(2)), [0.1, 0.2])


def test_train_config_validation():
    with pytest.raises(InputError):
        TrainConfig(eta1=0.1, iterations=0)
    with pytest.raises(InputError):
        TrainConfig(eta1=0.1, iterations=5, theta=1.0)
    with pytest.raises(InputError):
        TrainConfig(eta1=-0.1, iterations=5)
    with pytest.raises(InputError):
        TrainConfig(eta1=0.1, iterations=5, batch_size=0)


def test_step_size_guard():
    data = gen_toy(5, 0)
    fac = build_factor(G, data.X, 2)
    with pytest.raises(InputError):
        train(TrainConfig(eta1=1.5, iterations=3), data, fac)
    with pytest.warns(RuntimeWarning):
        train(TrainConfig(eta1=0.8, iterations=3), data, fac)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        train(TrainConfig(eta1=0.5, iterations=3), data, fac)


def test_step_size_schedule():
    cfg = TrainConfig(eta1=0.4, iterations=10, theta=0.5)
    assert cfg.step_size(1) == 0.4
    assert cfg.step_size(4) == pytest.approx(0.2)
    assert TrainConfig(eta1=0.4, iterations=1).step_size(100) == 0.4


def test_regime_thm1_I():
    s = regime_schedule(RegimeParams("thm1_I"), 100)
    assert s.batch_size == 10 and s.iterations == 10
    assert s.eta == pytest.approx(1 / math.log(100))
    assert s.eta == pytest.approx(0.2171, abs=1e-4)
    assert s.m == 47
    assert s.theta == 0.0


def test_regime_thm1_II():
    s = regime_schedule(RegimeParams("thm1_II"), 100)
    assert s.eta == pytest.approx(0.1)
    assert (s.batch_size, s.iterations, s.m) == (1, 100, 47)


def test_regime_cor1_IV():
    s = regime_schedule(RegimeParams("cor1_IV", zeta=0.0, gamma=1.0), 100)
    assert s.eta == pytest.approx(0.1)
    assert (s.batch_size, s.iterations) == (10, 100)


@pytest.mark.parametrize(
    "regime,eta,b,T",
    [
        # zeta=0.5, gamma=0.5, n=256: denom = 2.5, n^(2/2.5) = 256^0.8, n^(1/2.5) = 256^0.4
        ("cor1_I", 256**-0.8, 1, math.ceil(256 ** (3 / 2.5))),
        ("cor1_II", 1 / math.log(256), math.ceil(256**0.8), math.ceil(256**0.4 * math.log(256))),
        ("cor1_III", 1 / 256, 1, math.ceil(256**0.4 * 256)),
        ("cor1_IV", 1 / 16, 16, math.ceil(256**0.4 * 16)),
    ],
)
def test_cor1_regimes(regime, eta, b, T):
    s = regime_schedule(RegimeParams(regime, zeta=0.5, gamma=0.5), 256)
    assert s.eta == pytest.approx(eta)
    assert (s.batch_size, s.iterations) == (b, T)
    assert s.m == math.ceil(256**0.4 * math.log(256))


def test_regime_multipliers():
    s = regime_schedule(RegimeParams("cor1_IV", c_eta=2.0, c_b=0.5, c_T=3.0, c_m=0.5), 100)
    assert s.eta == pytest.approx(0.2)
    assert (s.batch_size, s.iterations, s.m) == (5, 300, math.ceil(0.5 * 10 * math.log(100)))


def test_regime_caps_m_at_n():
    assert regime_schedule(RegimeParams("thm1_I", c_m=10.0), 5).m == 5


@pytest.mark.parametrize("kw", [dict(zeta=0.6), dict(gamma=1.5), dict(gamma=-0.1), dict(regime="x")])
def test_regime_errors(kw):
    with pytest.raises(InputError):
        RegimeParams(**kw)


def test_regime_small_n():
    with pytest.raises(InputError):
        regime_schedule(RegimeParams(), 2)


@pytest.mark.parametrize(
    "args,expected",
    [((100, 1, 100, 10), (1.0, 10)), ((1, 50, 50, 7), (1.0, 8)), ((10, 10, 100, 10), (1.0, 10))],
)
def test_pass_count(args, expected):
    assert pass_count(*args) == expected
