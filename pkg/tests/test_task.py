import json
import math
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fatigue_layout._validation import ConfigError, InputDomainError
from fatigue_layout.task import (
    ButtonTaskEnv,
    Canvas,
    EpisodeConfig,
    SequenceSpec,
    cell_center,
    draw_sequences,
    motion_reward,
    normalized_coords,
    run_episode,
    validate_layout,
)

GOLDEN = Path(__file__).parent / "data" / "golden_episode_8_9_10.json"


def test_grid_indexing():
    c = Canvas()
    # middle row straddles y = 0, row 0 is the top
    for idx in (8, 9, 10):
        assert cell_center(c, idx)[1] == pytest.approx(0.0)
    assert cell_center(c, 0)[1] > 0 > cell_center(c, 15)[1]
    assert cell_center(c, 0)[0] < cell_center(c, 5)[0]
    np.testing.assert_allclose(cell_center(c, 17), [0.64 / 2 - 0.64 / 12, -0.12, 0.0])
    coords = normalized_coords(c, range(18))
    assert coords.min() > 0 and coords.max() < 1
    with pytest.raises(InputDomainError):
        cell_center(c, 18)


def test_validate_layout():
    assert validate_layout((8, 9, 10)) == (True, frozenset())
    assert validate_layout((5, 5, 12)) == (False, frozenset({5}))
    with pytest.raises(InputDomainError):
        validate_layout((0, 1, 99))
    with pytest.raises(InputDomainError):
        validate_layout(())


def test_motion_reward_cases():
    assert motion_reward(True, 0.0, 0.0) == 5.0
    assert motion_reward(False, 0.0, 0.0) == 0.0
    assert motion_reward(False, 1.0, 0.0) == pytest.approx(math.exp(-1) - 1, abs=1e-12)
    assert motion_reward(False, 0.0, 50.0) == pytest.approx(-0.5, abs=1e-12)
    assert motion_reward(True, 0.0, 0.0, sequence_done=True) == 20.0
    with pytest.raises(InputDomainError):
        motion_reward(False, -0.1, 0.0)


@settings(max_examples=100, deadline=None)
@given(st.floats(0, 30))
def test_distance_shaping_range(d):
    # beyond d ~ 37 the shaping term is within one ulp of -1 and rounds to it
    r = motion_reward(False, d, 0.0)
    assert -1.0 < r <= 0.0
    assert motion_reward(False, d + 1.0, 0.0) <= r


def test_golden_episode():
    golden = json.loads(GOLDEN.read_text())
    res = ButtonTaskEnv().run(tuple(golden["layout"]))
    assert list(res.per_button_effort) == golden["per_button_effort"]
    assert res.press_times == golden["press_times"]
    assert res.total_effort == golden["total_effort"]
    assert res.reward == -res.total_effort


def test_episode_decomposes_into_reaches():
    env = ButtonTaskEnv()
    res = env.run((8, 9, 10))
    assert res.completed and not res.penalties
    # the first press starts from rest with fresh muscles
    assert res.per_button_effort[0] == pytest.approx(env.reach_effort(None, 8), rel=1e-12)
    # later presses carry fatigue, so they cost at least the fresh reach
    assert res.per_button_effort[1] >= env.reach_effort(8, 9) - 1e-9


def test_overlap_penalty_without_simulation():
    env = ButtonTaskEnv()
    res = env.run((5, 5, 12))
    assert res.penalties == [("overlap", 150.0)]
    assert res.total_effort == 0.0 and res.reward == -150.0
    custom = ButtonTaskEnv(config=EpisodeConfig(overlap_penalty=77.0))
    assert custom.run((3, 3, 3)).penalty_total == 77.0


def test_timeout_penalty_unreachable_cell():
    env = ButtonTaskEnv()
    res = env.run((8, 0, 10))
    assert res.penalties == [("timeout", 100.0)]
    assert res.press_buttons == [0]


def test_timeout_penalty_slow_reach():
    env = ButtonTaskEnv(config=EpisodeConfig(timeout_s=0.5))
    res = env.run((8, 9, 10))
    assert res.penalties == [("timeout", 150.0)]
    assert not res.press_buttons


def test_run_episode_validation():
    env = ButtonTaskEnv()
    with pytest.raises(ConfigError):
        run_episode((8, 9), SequenceSpec((0, 1, 2)), env.arm, env.bank, env.config)
    with pytest.raises(ConfigError):
        SequenceSpec(())
    with pytest.raises(ConfigError):
        EpisodeConfig(dt=0.0)
    with pytest.raises(InputDomainError):
        env.run((8, 9))


def test_noise_requires_seed_and_is_reproducible():
    env = ButtonTaskEnv().with_noise(0.2)
    with pytest.raises(ConfigError):
        env.run((8, 9, 10))
    a, b = env.run((8, 9, 10), seed=4), env.run((8, 9, 10), seed=4)
    assert list(a.per_button_effort) == list(b.per_button_effort)
    assert env.run((8, 9, 10), seed=5).total_effort != a.total_effort


def test_deterministic_runs_are_identical():
    env = ButtonTaskEnv()
    a = run_episode((17, 16, 15), env.fixed_sequence(), env.arm, env.bank, env.config)
    b = run_episode((17, 16, 15), env.fixed_sequence(), env.arm, env.bank, env.config)
    assert list(a.per_button_effort) == list(b.per_button_effort)


def test_trace_rows():
    res = ButtonTaskEnv().run((8, 9, 10), record_trace=True)
    assert len(res.trace[0]) == 8
    groups = {row[1] for row in res.trace}
    assert groups == {"shoulder", "elbow"}
    for t, _, ma, mr, mf, tl, c, b in res.trace:
        assert abs(ma + mr + mf - 100) <= 1e-6
        assert 0 <= tl <= 100 and c >= 0 and b in (0, 1, 2)
    total = sum(row[6] for row in res.trace)
    assert total == pytest.approx(res.total_effort, rel=1e-12)


def test_draw_sequences_follow_usage():
    rng = np.random.default_rng(0)
    counts = np.zeros(5)
    for _ in range(2000):
        seq = draw_sequences(rng, (0.6, 0.1, 0.1, 0.1, 0.1))
        assert len(seq.button_order) == 9 and len(seq.sequences()) == 3
        counts += np.bincount(seq.button_order, minlength=5)
    np.testing.assert_allclose(counts / counts.sum(), [0.6, 0.1, 0.1, 0.1, 0.1], atol=0.01)


def test_frequency_env_assembly_matches_full_simulation():
    env = ButtonTaskEnv(n_buttons=5, usage=(0.6, 0.1, 0.1, 0.1, 0.1))
    rng = np.random.default_rng(2)
    for _ in range(10):
        layout = tuple(int(c) for c in rng.choice(np.arange(2, 18), 5, replace=False))
        seq = env.sequence_for(np.random.default_rng(int(rng.integers(1 << 30))))
        fast = env.run(layout, seq=seq)
        full = run_episode(layout, seq, env.arm, env.bank, env.config)
        np.testing.assert_allclose(fast.per_button_effort, full.per_button_effort, rtol=1e-12)
        np.testing.assert_allclose(fast.press_times, full.press_times, rtol=1e-12)
        assert fast.penalties == full.penalties
    assert env.run((16, 0, 10, 11, 15), seed=1).penalty_total > 0


def test_frequency_env_validation():
    with pytest.raises(ConfigError):
        ButtonTaskEnv(n_buttons=5, usage=(0.5, 0.5))
    with pytest.raises(InputDomainError):
        ButtonTaskEnv(n_buttons=5, usage=(0.5, 0.5, 0.5, 0.0, 0.0))
