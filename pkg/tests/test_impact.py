import numpy as np
import pytest

from qrmexec.intensities import default_intensities
from qrmexec.impact import (
    ImpactExperimentSpec,
    depletion_response,
    impact_heatmap,
    repeated_depletion_path,
    theoretical_jump,
    theoretical_next_drift,
)
from qrmexec.qrm import QrmParams
from qrmexec.rng import BufferedUniform


@pytest.fixture(scope="module")
def params():
    return QrmParams(default_intensities())


def test_closed_forms():
    assert theoretical_jump(0.7, 0.85, 0.01) == pytest.approx(0.007975)
    assert theoretical_jump(0.0, 0.3, 0.01) == pytest.approx(0.005)
    assert theoretical_jump(1.0, 1.0, 0.01) == pytest.approx(0.01)
    assert theoretical_next_drift(0.7, 0.85, 0.01) == pytest.approx(-0.000975)
    assert theoretical_next_drift(0.9, 0.6, 0.01) == pytest.approx(0.0013)
    assert theoretical_next_drift(0.8, 0.75, 0.01) == pytest.approx(0.0, abs=1e-15)


def test_spec_validation():
    with pytest.raises(ValueError):
        ImpactExperimentSpec(thetas=(0.4,))
    with pytest.raises(ValueError):
        ImpactExperimentSpec(mo_fraction=0.3)
    with pytest.raises(ValueError):
        ImpactExperimentSpec(n_sims=0)
    with pytest.raises(ValueError):
        ImpactExperimentSpec(conditioning="sideways")


def test_path_starts_at_pre_trade_mid(params):
    res = depletion_response(ImpactExperimentSpec(n_sims=200, horizon=10), params, BufferedUniform(1))
    assert res.mean[0] == 0.0 and res.se[0] == 0.0
    assert res.grid[0] == -1 and len(res.mean) == 12
    # SE is the sample std over sqrt(n)
    assert np.all(res.se[1:] > 0)


def test_jump_estimate_converges(params):
    # error shrinks like 1/sqrt(n): check the estimate sits within 3 SE at two sizes
    target = theoretical_jump(params.theta, params.theta_reinit, params.tick)
    for n, seed in ((2000, 3), (8000, 4)):
        res = depletion_response(ImpactExperimentSpec(n_sims=n, horizon=1), params, BufferedUniform(seed))
        assert abs(res.jump_mean - target) < 3 * res.jump_se
    assert res.jump_se < 0.6 * depletion_response(
        ImpactExperimentSpec(n_sims=2000, horizon=1), params, BufferedUniform(3)).jump_se


def test_next_move_signs(params):
    spec = ImpactExperimentSpec(n_sims=4000, horizon=1)
    from dataclasses import replace
    rev = depletion_response(spec, replace(params, theta=0.7, theta_reinit=0.85), BufferedUniform(5))
    cont = depletion_response(spec, replace(params, theta=0.9, theta_reinit=0.6), BufferedUniform(6))
    assert rev.next_mean < 0 < cont.next_mean


def test_conditioned_paths_bracket_unconditional(params):
    base = ImpactExperimentSpec(n_sims=3000, horizon=20)
    allp = depletion_response(base, params, BufferedUniform(7))
    from dataclasses import replace
    bid = depletion_response(replace(base, conditioning="bid-refill"), params, BufferedUniform(7))
    ask = depletion_response(replace(base, conditioning="ask-refill"), params, BufferedUniform(7))
    # same seed: the conditioned runs are subsets of the unconditional ones
    assert bid.n_used == allp.scenario_counts["bid-refill"]
    assert ask.n_used == allp.scenario_counts["ask-refill"]
    # the path grid counts events, so compare at the next mid move
    assert bid.next_mean > 0 > ask.next_mean
    assert bid.next_mean > allp.next_mean > ask.next_mean
    assert allp.n_used - bid.n_used - ask.n_used == allp.scenario_counts["other"]


def test_conditioning_without_matches_raises(params):
    spec = ImpactExperimentSpec(n_sims=1, horizon=1, conditioning="bid-refill")
    with pytest.raises(ValueError, match="no simulation matched"):
        for seed in range(50):
            res = depletion_response(spec, params, BufferedUniform(seed))
            if res.n_used == 0:
                break


def test_theta_zero_reference(params):
    spec = ImpactExperimentSpec(n_sims=3000, horizon=75, theta_override=0.0)
    res = depletion_response(spec, params, BufferedUniform(8))
    assert res.jump_mean == pytest.approx(0.005, abs=1e-12)
    assert res.meta["theta"] == 0.0
    # the reference never moves, so the price falls back below the immediate jump
    assert res.mean[-1] < res.mean[1]


def test_heatmap_1x1_matches_depletion_response(params):
    spec = ImpactExperimentSpec(thetas=(0.7,), theta_reinits=(0.85,), n_sims=300, lag=5)
    hm = impact_heatmap(spec, params, seed=9)
    from dataclasses import replace
    from qrmexec.rng import stream
    res = depletion_response(replace(spec, horizon=5, lag=5), params,
                             BufferedUniform(stream(9, "impact-cell", 0)))
    assert hm.short_mean[0, 0] == res.next_mean
    assert hm.long_mean[0, 0] == res.lagged(5)[0]


def test_repeated_depletion_no_trades_is_flat(params):
    res = repeated_depletion_path(10.0, 0, params, BufferedUniform(10), n_sims=400)
    assert np.all(np.abs(res.mean) <= 3 * res.se + 1e-12)


def test_repeated_depletion_reproducible(params):
    a = repeated_depletion_path(5.0, 2, params, BufferedUniform(11), n_sims=50)
    b = repeated_depletion_path(5.0, 2, params, BufferedUniform(11), n_sims=50)
    np.testing.assert_array_equal(a.mean, b.mean)


@pytest.mark.slow
def test_repeated_depletion_monotone_in_reinit(params):
    from dataclasses import replace
    ends = []
    for tr in (0.6, 0.85, 1.0):
        p = replace(params, theta=0.7, theta_reinit=tr)
        res = repeated_depletion_path(10.0, 5, p, BufferedUniform(12), n_sims=6000)
        ends.append((res.mean[-1], res.se[-1]))
    assert ends[0][0] < ends[1][0] < ends[2][0]
