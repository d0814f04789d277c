import numpy as np
import pytest

from qrmexec.benchmarks import Popv, Twap
from qrmexec.env import EnvConfig
from qrmexec.evaluation import (
    EpisodeRecord,
    compare,
    episode_analytics,
    evaluate,
    execution_gaps,
    feature_importance,
    robustness_sweep,
)
from qrmexec.intensities import default_intensities
from qrmexec.nn import QNetwork
from qrmexec.qrm import QrmParams
from qrmexec.stats import significance_stars, welch_one_sided

from oracles import numeric_input_grad, welch_mpmath


@pytest.fixture(scope="module")
def params():
    return QrmParams(default_intensities())


def test_welch_matches_mpmath_on_random_pairs():
    rng = np.random.default_rng(0)
    for _ in range(100):
        nx, ny = rng.integers(2, 60, size=2)
        x = rng.normal(rng.normal(), rng.uniform(0.1, 3), nx)
        y = rng.normal(rng.normal(), rng.uniform(0.1, 3), ny)
        got = welch_one_sided(x, y)
        t, df, p = welch_mpmath(x, y)
        assert got.t == pytest.approx(t, rel=1e-10)
        assert got.df == pytest.approx(df, rel=1e-10)
        assert got.p == pytest.approx(p, rel=1e-8, abs=1e-300)


def test_welch_edge_cases():
    assert welch_one_sided([1.0, 1.0], [1.0, 1.0]).p == 0.5
    assert welch_one_sided([2.0, 2.0], [1.0, 1.0]).p == 0.0
    assert welch_one_sided([0.0, 0.0], [1.0, 1.0]).p == 1.0
    with pytest.raises(ValueError):
        welch_one_sided([1.0], [1.0, 2.0])
    with pytest.raises(ValueError):
        welch_one_sided([1.0, np.nan], [1.0, 2.0])


def test_stars():
    assert [significance_stars(p) for p in (0.0005, 0.005, 0.03, 0.2)] == ["***", "**", "*", ""]


def test_feature_importance_matches_finite_differences():
    net = QNetwork.create(5, 3, rng=1)
    X = np.random.default_rng(1).normal(size=(4, 5))
    imp = feature_importance(net, X)
    assert imp.shape == (3, 5)
    for a in range(3):
        g = np.array([numeric_input_grad(lambda v: net(v)[a], x, 1e-6) for x in X])
        np.testing.assert_allclose(imp[a], np.abs(g).mean(axis=0), rtol=1e-6)


def rec(shares, residual=0, reward=0.0):
    return EpisodeRecord(0, reward, shares, [0.0] * len(shares), residual, residual, 0.0)


def test_gaps_and_analytics():
    assert execution_gaps([5, 0, 0, 5, 5]) == [2, 0]
    assert execution_gaps([0, 3]) == []
    recs = [rec([5, 0, 0, 5, 5]), rec([5, 5, 0, 5]), rec([0, 0, 2], residual=3)]
    an = episode_analytics(recs, n_intervals=5)
    assert an.length_hist == {3: 1, 4: 1, 5: 1}
    # failures are excluded from the gap buckets
    assert set(an.gaps) == {4, 5}
    assert an.gaps[5].mean == 1.0 and an.gaps[4].mean == 0.5
    np.testing.assert_allclose(an.mean_trajectory, [10 / 3, 15 / 3, 17 / 3, 27 / 3, 32 / 3])


def test_failure_accounting(params):
    rep = evaluate(Popv(4, 1.0), EnvConfig(), params, 30, seed=1)
    res = rep.residuals
    assert rep.failure_rate == pytest.approx(100 * np.mean(res > 0))
    for r in rep.records:
        assert sum(r.shares) + r.forced_shares == 25
        assert r.forced_shares == r.residual


def test_common_random_numbers_across_policies(params):
    a = evaluate(Twap(), EnvConfig(), params, 5, seed=2)
    b = evaluate(Popv(2, 0.5), EnvConfig(), params, 5, seed=2)
    # identical starting books: the first ask price seen is the same
    assert [r.prices[0] for r in a.records] == [r.prices[0] for r in b.records] or \
        all(r.shares[0] == 0 for r in a.records + b.records)
    again = evaluate(Twap(), EnvConfig(), params, 5, seed=2)
    assert np.array_equal(a.rewards, again.rewards)


def test_compare_picks_best_and_tests_others(params):
    reps = [evaluate(p, EnvConfig(), params, 40, seed=3) for p in (Twap(), Popv(4, 1.0))]
    cmp = compare(reps)
    assert cmp.best == max(reps, key=lambda r: r.mean).name
    other = [r for r in reps if r.name != cmp.best][0]
    assert cmp.tests[other.name].t > 0
    assert "best" in cmp.text()


def test_sweep_shape_and_relative_definition(params):
    sw = robustness_sweep(Twap(), [0.7], [0.85, 0.95], EnvConfig(), params, 6, seed=4,
                          benchmarks=[Popv(2, 0.5), Popv(3, 1.0)])
    assert sw.relative.shape == (1, 2)
    for j in range(2):
        b = sw.best_benchmark[0, j]
        expect = (sw.means["TWAP"][0, j] - sw.means[b][0, j]) / abs(sw.means[b][0, j])
        assert sw.relative[0, j] == pytest.approx(expect)
    with pytest.raises(ValueError):
        robustness_sweep(Twap(), [0.4], [0.85], EnvConfig(), params, 2)


def test_welch_worked_examples():
    x, y = [1, 2, 3, 4, 5], [0, 1, 2, 3, 4]
    got = welch_one_sided(x, y)
    t, df, p = welch_mpmath(x, y)
    assert got.t == pytest.approx(t, abs=1e-6) and got.p == pytest.approx(p, abs=1e-6)
    same = np.random.default_rng(5).normal(size=20)
    assert welch_one_sided(same, same).p == pytest.approx(0.5)
    noise = 1e-6 * np.random.default_rng(6).normal(size=10)
    assert welch_one_sided(noise + 10, noise[::-1]).p < 0.001


def test_welch_p_decreases_with_separation():
    base = np.random.default_rng(7).normal(size=30)
    ps = [welch_one_sided(base + d, base[::-1]).p for d in np.linspace(0, 2, 9)]
    assert all(a > b for a, b in zip(ps, ps[1:]))


def test_feature_importance_reference_nets():
    const = QNetwork([np.zeros((5, 3))], [np.ones(3)])
    X = np.random.default_rng(8).normal(size=(6, 5))
    assert np.all(feature_importance(const, X) == 0)
    w = np.array([0.5, -1.0, 2.0, 0.0, -0.25])
    lin = QNetwork([np.tile(w[:, None], (1, 3))], [np.zeros(3)])
    np.testing.assert_allclose(feature_importance(lin, X), np.tile(np.abs(w), (3, 1)))
    net = QNetwork.create(5, 3, rng=9)
    np.testing.assert_allclose(feature_importance(net, X), feature_importance(net, np.vstack([X, X])))
    assert np.all(feature_importance(net, X) >= 0)


def test_benchmark_analytics_with_ample_liquidity():
    from qrmexec.benchmarks import popv_action, twap_action
    # deep best queue: every order fills in full
    twap, popv = [], []
    for _ in range(3):
        inv, sh = 25, []
        for k in range(25):
            dx = twap_action(k, 25, 25, inv, best_ask_volume=50)
            sh.append(dx)
            inv -= dx
        twap.append(rec(sh))
        inv, sh = 25, []
        for k in range(25):
            dx = popv_action(k, 2, 0.5, 4, inv)
            sh.append(dx)
            inv -= dx
            if inv == 0:
                break
        popv.append(rec(sh))
    an = episode_analytics(twap, 25)
    assert an.length_hist == {25: 3} and an.gaps[25].mean == 0.0 and an.gaps[25].var == 0.0
    assert an.mean_trajectory[-1] == 25
    ap = episode_analytics(popv, 25)
    assert all(g.mean == 1.0 and g.var == 0.0 for g in ap.gaps.values())
    assert ap.mean_trajectory[-1] == 25


def test_sweep_1x1_reduces_to_evaluate_and_is_reproducible(params):
    from dataclasses import replace
    from qrmexec.rng import stream
    kw = dict(benchmarks=[Popv(3, 1.0)], seed=10)
    sw = robustness_sweep(Twap(), [0.7], [0.85], EnvConfig(), params, 5, **kw)
    again = robustness_sweep(Twap(), [0.7], [0.85], EnvConfig(), params, 5, **kw)
    assert np.array_equal(sw.relative, again.relative)
    cell_seed = int(stream(10, "sweep-cell", 0).integers(2**63))
    p = replace(params, theta=0.7, theta_reinit=0.85)
    assert sw.means["TWAP"][0, 0] == evaluate(Twap(), EnvConfig(), p, 5, cell_seed).mean
    # a policy compared with itself sits at zero
    self_sw = robustness_sweep(Twap(), [0.7], [0.85], EnvConfig(), params, 5,
                               benchmarks=[Twap()], seed=10)
    assert self_sw.relative[0, 0] == 0.0
