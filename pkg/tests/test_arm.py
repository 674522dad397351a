import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fatigue_layout._validation import InputDomainError, ReachabilityError
from fatigue_layout.arm import (
    ArmModel,
    FittsParams,
    Posture,
    forward_kinematics,
    gravity_loads,
    gravity_torques,
    inverse_kinematics,
    min_jerk,
    min_jerk_profile,
    movement_time,
    plan_reach,
    reach_duration,
)
from fatigue_layout.task import Canvas, cell_center

ARM = ArmModel()
FITTS = FittsParams()


def test_fitts_movement_time():
    assert movement_time(0.0, 0.1, FITTS) == pytest.approx(0.2)
    assert movement_time(0.1, 0.1, FITTS) == pytest.approx(0.2 + 0.3)
    assert movement_time(0.3, 0.1, FITTS) == pytest.approx(0.2 + 0.3 * 2)
    assert reach_duration(0.3, 0.1, FITTS) == pytest.approx(1.0)
    with pytest.raises(InputDomainError):
        movement_time(0.3, 0.0, FITTS)


def test_min_jerk_profile_boundary_conditions():
    assert min_jerk_profile(0.0) == 0.0
    assert min_jerk_profile(1.0) == 1.0
    assert min_jerk_profile(0.5) == pytest.approx(0.5)
    # zero velocity at both ends (finite difference)
    h = 1e-6
    assert min_jerk_profile(h) / h < 1e-9
    assert (1 - min_jerk_profile(1 - h)) / h < 1e-9


def test_min_jerk_path_endpoints_and_length():
    a, b = np.zeros(3), np.array([0.3, -0.1, 0.2])
    pts = min_jerk(a, b, 0.5, 0.01)
    assert pts.shape == (51, 3)
    assert np.array_equal(pts[0], a) and np.array_equal(pts[-1], b)
    # straight line: every point is a convex combination of the endpoints
    s = pts @ b / (b @ b)
    np.testing.assert_allclose(pts, s[:, None] * b, atol=1e-15)
    assert np.all(np.diff(s) >= 0)


def test_rest_pose_below_shoulder():
    np.testing.assert_allclose(ARM.rest_pose, np.array(ARM.shoulder_pos) - [0, 0.55, 0])


def test_fk_ik_round_trip_on_cells():
    canvas = Canvas()
    for idx in range(18):
        target = cell_center(canvas, idx)
        dist = np.linalg.norm(target - np.array(ARM.shoulder_pos))
        if dist > ARM.reach:
            with pytest.raises(ReachabilityError):
                inverse_kinematics(ARM, target)
            continue
        pose = inverse_kinematics(ARM, target)
        np.testing.assert_allclose(forward_kinematics(ARM, pose), target, atol=1e-12)
        assert -math.pi < pose.shoulder_elevation <= math.pi


def test_default_arm_cannot_reach_far_left_cells():
    canvas = Canvas()
    for idx in (0, 1, 6):
        with pytest.raises(ReachabilityError):
            inverse_kinematics(ARM, cell_center(canvas, idx))


@settings(max_examples=200, deadline=None)
@given(
    st.floats(0.06, 0.999),
    st.floats(-math.pi, math.pi),
    st.floats(-math.pi / 2 + 1e-3, math.pi / 2 - 1e-3),
)
def test_fk_ik_round_trip_property(frac, az, polar):
    lo, hi = ARM.min_reach, ARM.reach
    r = lo + frac * (hi - lo)
    d = np.array([math.cos(polar) * math.sin(az), math.sin(polar), math.cos(polar) * math.cos(az)])
    target = np.array(ARM.shoulder_pos) + r * d
    pose = inverse_kinematics(ARM, target)
    assert np.linalg.norm(forward_kinematics(ARM, pose) - target) <= 1e-9


def test_unreachable_raises():
    far = np.array(ARM.shoulder_pos) + [0, 0, ARM.reach + 1e-6]
    with pytest.raises(ReachabilityError):
        inverse_kinematics(ARM, far)
    with pytest.raises(ReachabilityError):
        inverse_kinematics(ARM, np.array(ARM.shoulder_pos))


def test_gravity_loads_horizontal_arm_maximal():
    horizontal = Posture(0.0, 0.0, 0.0)
    hanging = Posture(0.0, -math.pi / 2, 0.0)
    tau = gravity_torques(ARM, horizontal)
    l1, l2 = ARM.upper_len, ARM.fore_len
    expected_sh = 9.81 * (2.0 * 0.5 * l1 + 1.7 * (l1 + 0.5 * l2))
    assert tau[0] == pytest.approx(expected_sh)
    assert tau[1] == pytest.approx(9.81 * 1.7 * 0.5 * l2)
    np.testing.assert_allclose(gravity_loads(ARM, hanging), [0.0, 0.0], atol=1e-12)
    loads = gravity_loads(ARM, horizontal)
    assert np.all((loads >= 0) & (loads <= 100))


def test_plan_reach_to_cell_17():
    target = cell_center(Canvas(), 17)
    traj = plan_reach(ARM, ARM.rest_pose, target, FITTS, 0.01)
    assert np.linalg.norm(traj.hand_pos[-1] - target) <= 1e-9
    assert np.all((traj.loads >= 0) & (traj.loads <= 100))
    d = np.linalg.norm(target - ARM.rest_pose)
    assert traj.move_samples == round(movement_time(d, 0.10, FITTS) / 0.01)
    assert len(traj) == traj.move_samples + 1 + 20
    # the dwell holds the hand on target
    assert np.array_equal(traj.hand_pos[traj.move_samples:], np.tile(target, (21, 1)))


def test_plan_reach_noise_is_seeded():
    target = cell_center(Canvas(), 16)
    a = plan_reach(ARM, ARM.rest_pose, target, FITTS, 0.01, rng=np.random.default_rng(1), noise=0.2)
    b = plan_reach(ARM, ARM.rest_pose, target, FITTS, 0.01, rng=np.random.default_rng(1), noise=0.2)
    c = plan_reach(ARM, ARM.rest_pose, target, FITTS, 0.01)
    assert np.array_equal(a.loads, b.loads)
    assert not np.array_equal(a.loads[: len(c)], c.loads[: len(a)]) or len(a) != len(c)
