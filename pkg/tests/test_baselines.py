import numpy as np
import pytest

from mfrl.adaptive import AdaptiveConfig
from mfrl.baselines import (
    HIERARCHICAL_1, HIERARCHICAL_2, HierarchicalSchedule, run_hierarchical_training,
    run_single_fidelity_training, scaled_schedule,
)
from mfrl.core import FidelityId
from mfrl.env import DesignEnv
from mfrl.policy import PpoConfig

LF1, LF2, HF = FidelityId.LF1, FidelityId.LF2, FidelityId.HF


def cfg(**kw):
    base = dict(episode_count=8, episode_length=20, batch_size=60, hidden=(8,))
    base.update(kw)
    return AdaptiveConfig(**base)


def test_step_map():
    steps = HIERARCHICAL_1.step_models()
    assert steps[:7] == [LF1] * 7 and steps[7:14] == [LF2] * 7 and steps[14:] == [HF] * 6
    assert HIERARCHICAL_2.step_models()[:7] == [LF2] * 7


def test_invalid_schedule_raises():
    bad = HierarchicalSchedule(((LF1, 7), (LF2, 7), (HF, 7)))
    with pytest.raises(ValueError):
        run_hierarchical_training(DesignEnv(), bad, cfg(), PpoConfig(), np.random.default_rng(0))


def test_scaled_schedule():
    sched = scaled_schedule((LF1, LF2), 20)
    assert sched == HIERARCHICAL_1
    scaled_schedule((LF2, LF1), 13).validate(13)


def test_hierarchical_shares_exact():
    for sched in (HIERARCHICAL_1, HIERARCHICAL_2):
        _, m = run_hierarchical_training(DesignEnv(), sched, cfg(), PpoConfig(), np.random.default_rng(1))
        np.testing.assert_array_equal(m.usage_shares(), [7 / 20, 7 / 20, 6 / 20])


def test_orders_share_totals():
    runs = [run_hierarchical_training(DesignEnv(), s, cfg(), PpoConfig(), np.random.default_rng(2))[1]
            for s in (HIERARCHICAL_1, HIERARCHICAL_2)]
    np.testing.assert_array_equal(runs[0].step_matrix().sum(axis=0), runs[1].step_matrix().sum(axis=0))


def test_degenerate_schedule_equals_single_hf():
    a, m1 = run_hierarchical_training(DesignEnv(), HierarchicalSchedule(((HF, 20),)), cfg(), PpoConfig(),
                                      np.random.default_rng(3))
    b, m2 = run_single_fidelity_training(DesignEnv(), HF, cfg(), PpoConfig(), np.random.default_rng(3))
    assert m1.episode_return == m2.episode_return and m1.cumulative_cost == m2.cumulative_cost
    assert a[HF].policy.mean_net.flat().tobytes() == b.policy.mean_net.flat().tobytes()


def test_single_hf_usage():
    _, m = run_single_fidelity_training(DesignEnv(), HF, cfg(), PpoConfig(), np.random.default_rng(4))
    np.testing.assert_array_equal(m.usage_shares(), [0.0, 0.0, 1.0])
    assert all(np.isnan(m.theta))


def test_single_lf_cost_exact():
    E = 8
    _, m = run_single_fidelity_training(DesignEnv(), LF1, cfg(episode_count=E), PpoConfig(),
                                        np.random.default_rng(5))
    assert m.total_cost == E * 20 * 2.08e-4
    assert m.cumulative_evals[-1] == {LF1: E * 20, LF2: 0, HF: 0}


def test_single_zero_episodes():
    agent, m = run_single_fidelity_training(DesignEnv(), LF2, cfg(episode_count=0), PpoConfig(),
                                            np.random.default_rng(6))
    assert agent.n_updates == 0 and m.n_episodes == 0
