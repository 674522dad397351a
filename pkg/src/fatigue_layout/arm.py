"""Deterministic reach surrogate: Fitts timing, min-jerk paths, IK and gravity loads.

Frame: origin at the canvas centre, x to the user's right, y up, z from the
user towards the canvas (the canvas is the plane z = 0).  The arm is a
right-handed two-link chain (upper arm, forearm) with a rigid controller
extension on the forearm.  Both links move in the vertical plane through the
shoulder at ``shoulder_azimuth``; elevations are measured from the horizontal
within that plane.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ._validation import InputDomainError, ReachabilityError

GRAVITY = 9.81
GROUPS = ("shoulder", "elbow")


@dataclass(frozen=True)
class ArmModel:
    shoulder_pos: tuple[float, float, float] = (0.18, -0.25, -0.58)
    upper_len: float = 0.30
    fore_len: float = 0.35
    tool_len: float = 0.10
    upper_mass: float = 2.0
    fore_mass: float = 1.7
    com_frac: float = 0.5
    tau_max: tuple[float, float] = (40.0, 20.0)
    rest_drop: float = 0.55

    def __post_init__(self):
        for name in ("upper_len", "fore_len", "tool_len", "upper_mass", "fore_mass"):
            if not getattr(self, name) > 0:
                raise InputDomainError(f"{name} must be positive")
        if not 0 < self.com_frac < 1:
            raise InputDomainError("com_frac must lie in (0, 1)")
        if len(self.tau_max) != 2 or min(self.tau_max) <= 0:
            raise InputDomainError("tau_max needs two positive entries (shoulder, elbow)")
        object.__setattr__(self, "shoulder_pos", tuple(float(v) for v in self.shoulder_pos))
        object.__setattr__(self, "tau_max", tuple(float(v) for v in self.tau_max))

    @property
    def reach(self) -> float:
        return self.upper_len + self.fore_len + self.tool_len

    @property
    def min_reach(self) -> float:
        return abs(self.upper_len - (self.fore_len + self.tool_len))

    @property
    def rest_pose(self) -> np.ndarray:
        """Hand position at rest: ``rest_drop`` metres straight below the shoulder."""
        s = np.asarray(self.shoulder_pos)
        return s - np.array([0.0, self.rest_drop, 0.0])


@dataclass(frozen=True)
class Posture:
    shoulder_azimuth: float
    shoulder_elevation: float
    elbow_flexion: float

    @property
    def forearm_elevation(self) -> float:
        return self.shoulder_elevation + self.elbow_flexion


@dataclass(frozen=True)
class FittsParams:
    a: float = 0.2
    b: float = 0.3
    dwell: float = 0.2

    def __post_init__(self):
        if self.a < 0 or not self.b > 0 or self.dwell < 0:
            raise InputDomainError("Fitts parameters need a >= 0, b > 0, dwell >= 0")


@dataclass
class Trajectory:
    """Uniformly sampled reach.  ``loads`` is ``(n_samples, 2)`` in %MVC."""

    t: np.ndarray
    hand_pos: np.ndarray
    postures: np.ndarray  # columns: azimuth, elevation, flexion
    loads: np.ndarray
    dt: float
    move_samples: int = 0

    @property
    def duration(self) -> float:
        return float(self.t[-1] - self.t[0])

    def __len__(self):
        return len(self.t)


def movement_time(distance: float, width: float, fitts: FittsParams) -> float:
    if width <= 0:
        raise InputDomainError(f"target width must be positive, got {width!r}")
    if distance < 0:
        raise InputDomainError(f"distance must be non-negative, got {distance!r}")
    return fitts.a + fitts.b * math.log2(distance / width + 1.0)


def reach_duration(distance: float, width: float, fitts: FittsParams) -> float:
    """Fitts movement time plus the press dwell, in seconds."""
    return movement_time(distance, width, fitts) + fitts.dwell


def min_jerk_profile(tau):
    tau = np.asarray(tau, dtype=float)
    return tau**3 * (10.0 - 15.0 * tau + 6.0 * tau**2)


def min_jerk(start, end, duration: float, dt: float) -> np.ndarray:
    """Points along the straight segment ``start -> end`` at spacing ``dt`` in time.

    The returned array has ``round(duration / dt) + 1`` rows with both
    endpoints exact.
    """
    if not duration > 0:
        raise InputDomainError(f"duration must be positive, got {duration!r}")
    if not dt > 0:
        raise InputDomainError(f"dt must be positive, got {dt!r}")
    start = np.asarray(start, dtype=float)
    end = np.asarray(end, dtype=float)
    n = max(1, int(round(duration / dt)))
    s = min_jerk_profile(np.arange(n + 1) / n)
    pts = start + s[:, None] * (end - start)
    pts[-1] = end
    return pts


def _ik_arrays(arm: ArmModel, targets: np.ndarray):
    rel = np.atleast_2d(targets) - np.asarray(arm.shoulder_pos)
    dist = np.linalg.norm(rel, axis=1)
    l1, l2 = arm.upper_len, arm.fore_len + arm.tool_len
    bad = (dist > l1 + l2 + 1e-12) | (dist <= arm.min_reach)
    if np.any(bad):
        raise ReachabilityError(
            f"target at {dist[bad][0]:.4f} m from the shoulder is outside "
            f"({arm.min_reach:.4f}, {arm.reach:.4f}] m"
        )
    dist = np.minimum(dist, l1 + l2)
    rho = np.hypot(rel[:, 0], rel[:, 2])
    # directly above/below the shoulder the arm plane defaults to straight ahead
    azimuth = np.where(rho > 1e-12, np.arctan2(rel[:, 0], rel[:, 2]), 0.0)
    line = np.arctan2(rel[:, 1], rho)
    cos_b = np.clip((l1**2 + dist**2 - l2**2) / (2 * l1 * dist), -1.0, 1.0)
    cos_g = np.clip((l1**2 + l2**2 - dist**2) / (2 * l1 * l2), -1.0, 1.0)
    # elbow-down: upper arm below the shoulder-target line, forearm bends upward
    elevation = line - np.arccos(cos_b)
    elevation = np.where(elevation <= -math.pi, elevation + 2 * math.pi, elevation)
    flexion = math.pi - np.arccos(cos_g)
    return azimuth, elevation, flexion


def inverse_kinematics(arm: ArmModel, target) -> Posture:
    az, el, fl = _ik_arrays(arm, np.asarray(target, dtype=float))
    return Posture(float(az[0]), float(el[0]), float(fl[0]))


def _fk_arrays(arm: ArmModel, az, el, fl):
    l1, l2 = arm.upper_len, arm.fore_len + arm.tool_len
    fe = el + fl
    rho = l1 * np.cos(el) + l2 * np.cos(fe)
    h = l1 * np.sin(el) + l2 * np.sin(fe)
    s = np.asarray(arm.shoulder_pos)
    return np.stack([s[0] + rho * np.sin(az), s[1] + h, s[2] + rho * np.cos(az)], axis=-1)


def forward_kinematics(arm: ArmModel, posture: Posture) -> np.ndarray:
    """Tool-tip position of ``posture``."""
    return _fk_arrays(
        arm, posture.shoulder_azimuth, posture.shoulder_elevation, posture.elbow_flexion
    )


def _gravity_arrays(arm: ArmModel, el, fl):
    l1, l2, c = arm.upper_len, arm.fore_len, arm.com_frac
    cos_u, cos_f = np.cos(el), np.cos(el + fl)
    # horizontal moment arms about the shoulder and the elbow
    tau_sh = GRAVITY * (
        arm.upper_mass * c * l1 * cos_u + arm.fore_mass * (l1 * cos_u + c * l2 * cos_f)
    )
    tau_el = GRAVITY * arm.fore_mass * c * l2 * cos_f
    loads = np.stack(
        [100.0 * np.abs(tau_sh) / arm.tau_max[0], 100.0 * np.abs(tau_el) / arm.tau_max[1]],
        axis=-1,
    )
    return np.clip(loads, 0.0, 100.0)


def gravity_torques(arm: ArmModel, posture: Posture) -> np.ndarray:
    l1, l2, c = arm.upper_len, arm.fore_len, arm.com_frac
    cos_u = math.cos(posture.shoulder_elevation)
    cos_f = math.cos(posture.forearm_elevation)
    return np.array(
        [
            GRAVITY * (arm.upper_mass * c * l1 * cos_u + arm.fore_mass * (l1 * cos_u + c * l2 * cos_f)),
            GRAVITY * arm.fore_mass * c * l2 * cos_f,
        ]
    )


def gravity_loads(arm: ArmModel, posture: Posture) -> np.ndarray:
    """Static holding demand per group (shoulder, elbow) in %MVC."""
    return _gravity_arrays(arm, posture.shoulder_elevation, posture.elbow_flexion)


def plan_reach(
    arm: ArmModel,
    start: Sequence[float],
    end: Sequence[float],
    fitts: FittsParams,
    dt: float,
    width: float = 0.10,
    rng: np.random.Generator | None = None,
    noise: float = 0.0,
) -> Trajectory:
    """Min-jerk reach timed by Fitts' law, followed by a dwell at ``end``.

    With ``noise > 0`` the movement time and every sampled load are scaled by
    independent factors ``1 + noise * N(0, 1)`` drawn from ``rng``.
    """
    start = np.asarray(start, dtype=float)
    end = np.asarray(end, dtype=float)
    if not dt > 0:
        raise InputDomainError(f"dt must be positive, got {dt!r}")
    mt = movement_time(float(np.linalg.norm(end - start)), width, fitts)
    if noise > 0:
        mt *= max(0.0, 1.0 + noise * rng.standard_normal())
    n_move = max(1, int(round(mt / dt)))
    n_dwell = int(round(fitts.dwell / dt))
    path = min_jerk(start, end, n_move * dt, dt)
    hand = np.vstack([path, np.repeat(end[None, :], n_dwell, axis=0)])
    az, el, fl = _ik_arrays(arm, hand)
    loads = _gravity_arrays(arm, el, fl)
    if noise > 0:
        loads = np.clip(loads * (1.0 + noise * rng.standard_normal(loads.shape)), 0.0, 100.0)
    t = np.arange(len(hand)) * dt
    return Trajectory(
        t=t,
        hand_pos=hand,
        postures=np.stack([az, el, fl], axis=1),
        loads=loads,
        dt=dt,
        move_samples=n_move,
    )
