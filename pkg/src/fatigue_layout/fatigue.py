"""Three-compartment muscle fatigue dynamics with rest recovery (3CC-r).

Each muscle group carries three compartments, all in %MVC and summing to 100:
active (M_A), resting (M_R) and fatigued (M_F).  A controller moves capacity
between resting and active so that M_A tracks the target load TL, while
fatigue drains M_A into M_F and recovery returns M_F to M_R.  Recovery is
multiplied by ``rest_multiplier`` whenever the group is unloaded (TL = 0).

The scalar effort rate used as the optimisation signal is::

    C_eff = w * (alpha * TL + beta * max(0, TL - (100 - M_F)))

i.e. a demand term plus a heavier penalty on demand that exceeds the
currently available (non-fatigued) capacity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
from numba import njit
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from ._validation import (
    InputDomainError,
    NumericError,
    check_dt,
    check_finite,
    check_load,
)

TOTAL = 100.0


@dataclass(frozen=True)
class FatigueParams:
    """Rate constants of one muscle group (all rates in 1/s)."""

    fatigue_rate: float = 0.0146
    recovery_rate: float = 0.0022
    rest_multiplier: float = 15.0
    develop_rate: float = 10.0
    relax_rate: float = 10.0
    effort_base_weight: float = 1.0
    effort_deficit_weight: float = 5.0

    def __post_init__(self):
        for name in ("fatigue_rate", "recovery_rate", "develop_rate", "relax_rate"):
            v = getattr(self, name)
            if not (v > 0 and math.isfinite(v)):
                raise InputDomainError(f"{name} must be positive, got {v!r}")
        if not self.rest_multiplier >= 1:
            raise InputDomainError(f"rest_multiplier must be >= 1, got {self.rest_multiplier!r}")
        if self.effort_base_weight < 0 or self.effort_deficit_weight < 0:
            raise InputDomainError("effort weights must be non-negative")


SHOULDER_PARAMS = FatigueParams(fatigue_rate=0.0146, recovery_rate=0.0022)
ELBOW_PARAMS = FatigueParams(fatigue_rate=0.0100, recovery_rate=0.0050)


@dataclass(frozen=True)
class MuscleState:
    m_active: float = 0.0
    m_rest: float = TOTAL
    m_fatigued: float = 0.0

    def __post_init__(self):
        check_finite(self.m_active, self.m_rest, self.m_fatigued)
        for v in (self.m_active, self.m_rest, self.m_fatigued):
            if not (-1e-9 <= v <= TOTAL + 1e-9):
                raise InputDomainError(f"compartments must lie in [0, 100], got {self!r}")
        if abs(self.m_active + self.m_rest + self.m_fatigued - TOTAL) > 1e-6:
            raise InputDomainError(f"compartments must sum to 100, got {self!r}")

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.m_active, self.m_rest, self.m_fatigued)


def controller(state: MuscleState, target_load: float, params: FatigueParams) -> float:
    """Activation flow C(t) from resting to active capacity, in %MVC/s.

    Negative values mean active capacity is being released back to rest.
    """
    tl = check_load(target_load)
    return _controller(state.m_active, state.m_rest, tl, params.develop_rate, params.relax_rate)


def _controller(ma, mr, tl, ld, lr):
    gap = tl - ma
    if gap > 0:
        return ld * gap if mr > gap else ld * mr
    return lr * gap


def _rk4(ma, mr, mf, tl, dt, p: FatigueParams):
    ld, lr, f = p.develop_rate, p.relax_rate, p.fatigue_rate
    r = p.recovery_rate * p.rest_multiplier if tl == 0 else p.recovery_rate

    def deriv(a, s, z):
        c = _controller(a, s, tl, ld, lr)
        return c - f * a, -c + r * z, f * a - r * z

    k1a, k1r, k1f = deriv(ma, mr, mf)
    h = 0.5 * dt
    k2a, k2r, k2f = deriv(ma + h * k1a, mr + h * k1r, mf + h * k1f)
    k3a, k3r, k3f = deriv(ma + h * k2a, mr + h * k2r, mf + h * k2f)
    k4a, k4r, k4f = deriv(ma + dt * k3a, mr + dt * k3r, mf + dt * k3f)
    s = dt / 6.0
    ma = ma + s * (k1a + 2 * k2a + 2 * k3a + k4a)
    mr = mr + s * (k1r + 2 * k2r + 2 * k3r + k4r)
    mf = mf + s * (k1f + 2 * k2f + 2 * k3f + k4f)
    return _renormalize(ma, mr, mf)


def _renormalize(ma, mr, mf):
    ma = min(max(ma, 0.0), TOTAL)
    mr = min(max(mr, 0.0), TOTAL)
    mf = min(max(mf, 0.0), TOTAL)
    total = ma + mr + mf
    if not (total > 0 and math.isfinite(total)):
        raise NumericError(f"compartments collapsed: {(ma, mr, mf)!r}")
    k = TOTAL / total
    return ma * k, mr * k, mf * k


def effort_rate(target_load, m_fatigued, params: FatigueParams, weight: float = 1.0):
    """Instantaneous C_eff of one group (effort units per second)."""
    deficit = np.maximum(0.0, target_load - (TOTAL - m_fatigued))
    return weight * (params.effort_base_weight * target_load + params.effort_deficit_weight * deficit)


def step(
    state: MuscleState,
    target_load: float,
    dt: float,
    params: FatigueParams,
    weight: float = 1.0,
) -> tuple[MuscleState, float]:
    """Advance one group by ``dt`` seconds with fixed-step RK4.

    Returns the new state and the group's effort contribution ``C_eff * dt``
    evaluated at the state at the start of the step.
    """
    tl = check_load(target_load)
    dt = check_dt(dt)
    ma, mr, mf = state.as_tuple()
    check_finite(ma, mr, mf)
    contribution = float(effort_rate(tl, mf, params, weight)) * dt
    ma, mr, mf = _rk4(ma, mr, mf, tl, dt, params)
    return MuscleState(ma, mr, mf), contribution


def simulate_group(
    loads: Sequence[float],
    dt: float,
    params: FatigueParams,
    weight: float = 1.0,
    state: MuscleState | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Run one group through a zero-order-hold load schedule.

    Returns ``(states, contributions)`` where ``states`` has shape
    ``(len(loads) + 1, 3)`` (initial state first) and ``contributions[k]`` is
    the effort accrued over step ``k``.
    """
    dt = check_dt(dt)
    loads = np.asarray(loads, dtype=float)
    if loads.ndim != 1:
        raise InputDomainError("loads must be one-dimensional")
    if loads.size and (loads.min() < 0 or loads.max() > TOTAL):
        raise InputDomainError("loads must lie in [0, 100] %MVC")
    state = state or MuscleState()
    ma, mr, mf = state.as_tuple()
    check_finite(ma, mr, mf)
    states, contrib = _simulate_loop(
        loads, dt, params.fatigue_rate, params.recovery_rate, params.rest_multiplier,
        params.develop_rate, params.relax_rate, params.effort_base_weight,
        params.effort_deficit_weight, weight, ma, mr, mf,
    )
    if not np.all(np.isfinite(states)) or np.any(states.sum(axis=1) <= 0):
        raise NumericError("non-finite muscle state during simulation")
    return states, contrib


@njit(cache=True)
def _simulate_loop(loads, dt, f, rec, mult, ld, lr, alpha, beta, weight, ma, mr, mf):
    # compiled twin of repeated _rk4 calls; kept in lockstep with _rk4
    n = loads.shape[0]
    states = np.empty((n + 1, 3))
    contrib = np.empty(n)
    states[0, 0], states[0, 1], states[0, 2] = ma, mr, mf
    ka = np.empty(4)
    kr = np.empty(4)
    kf = np.empty(4)
    for k in range(n):
        tl = loads[k]
        deficit = tl - (TOTAL - mf)
        contrib[k] = weight * (alpha * tl + (beta * deficit if deficit > 0 else 0.0)) * dt
        r = rec * mult if tl == 0 else rec
        for stage in range(4):
            if stage == 0:
                a, s, z = ma, mr, mf
            elif stage < 3:
                h = 0.5 * dt
                a, s, z = ma + h * ka[stage - 1], mr + h * kr[stage - 1], mf + h * kf[stage - 1]
            else:
                a, s, z = ma + dt * ka[2], mr + dt * kr[2], mf + dt * kf[2]
            gap = tl - a
            if gap > 0:
                c = ld * gap if s > gap else ld * s
            else:
                c = lr * gap
            ka[stage] = c - f * a
            kr[stage] = -c + r * z
            kf[stage] = f * a - r * z
        w6 = dt / 6.0
        ma = min(max(ma + w6 * (ka[0] + 2 * ka[1] + 2 * ka[2] + ka[3]), 0.0), TOTAL)
        mr = min(max(mr + w6 * (kr[0] + 2 * kr[1] + 2 * kr[2] + kr[3]), 0.0), TOTAL)
        mf = min(max(mf + w6 * (kf[0] + 2 * kf[1] + 2 * kf[2] + kf[3]), 0.0), TOTAL)
        total = ma + mr + mf
        if not total > 0:
            states[k + 1:] = np.nan
            return states, contrib
        scale = TOTAL / total
        ma, mr, mf = ma * scale, mr * scale, mf * scale
        states[k + 1, 0], states[k + 1, 1], states[k + 1, 2] = ma, mr, mf
    return states, contrib


def _rk4_batch(ma, mr, mf, tl, dt, p: FatigueParams):
    ld, lr, f = p.develop_rate, p.relax_rate, p.fatigue_rate
    r = np.where(tl == 0, p.recovery_rate * p.rest_multiplier, p.recovery_rate)

    def deriv(a, s, z):
        gap = tl - a
        c = np.where(gap > 0, np.where(s > gap, ld * gap, ld * s), lr * gap)
        return c - f * a, -c + r * z, f * a - r * z

    k1 = deriv(ma, mr, mf)
    h = 0.5 * dt
    k2 = deriv(ma + h * k1[0], mr + h * k1[1], mf + h * k1[2])
    k3 = deriv(ma + h * k2[0], mr + h * k2[1], mf + h * k2[2])
    k4 = deriv(ma + dt * k3[0], mr + dt * k3[1], mf + dt * k3[2])
    s = dt / 6.0
    out = [
        np.clip(x + s * (a + 2 * b + 2 * c + d), 0.0, TOTAL)
        for x, a, b, c, d in zip((ma, mr, mf), k1, k2, k3, k4)
    ]
    total = out[0] + out[1] + out[2]
    if not np.all(np.isfinite(total)) or np.any(total <= 0):
        raise NumericError("compartments collapsed during batch integration")
    k = TOTAL / total
    return out[0] * k, out[1] * k, out[2] * k


def simulate_batch(
    loads: np.ndarray,
    dt: float,
    params: FatigueParams,
    weight: float = 1.0,
    state: MuscleState | None = None,
    callback=None,
) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised :func:`simulate_group` over independent schedules.

    ``loads`` has shape ``(n_steps, n_schedules)``.  Only the final states
    ``(3, n_schedules)`` and total effort per schedule are returned; pass
    ``callback(k, ma, mr, mf)`` to observe every intermediate step.
    """
    dt = check_dt(dt)
    loads = np.asarray(loads, dtype=float)
    if loads.ndim != 2:
        raise InputDomainError("loads must have shape (n_steps, n_schedules)")
    if loads.size and (loads.min() < 0 or loads.max() > TOTAL):
        raise InputDomainError("loads must lie in [0, 100] %MVC")
    state = state or MuscleState()
    m = loads.shape[1]
    ma, mr, mf = (np.full(m, v) for v in state.as_tuple())
    effort = np.zeros(m)
    for k in range(loads.shape[0]):
        tl = loads[k]
        effort += effort_rate(tl, mf, params, weight) * dt
        ma, mr, mf = _rk4_batch(ma, mr, mf, tl, dt, params)
        if callback is not None:
            callback(k, ma, mr, mf)
    return np.stack([ma, mr, mf]), effort


@dataclass(frozen=True)
class MuscleGroup:
    name: str
    state: MuscleState = field(default_factory=MuscleState)
    params: FatigueParams = field(default_factory=FatigueParams)
    weight: float = 1.0

    def __post_init__(self):
        if not self.weight > 0:
            raise InputDomainError(f"group weight must be positive, got {self.weight!r}")


@dataclass(frozen=True)
class MuscleBank:
    """Ordered collection of muscle groups stepped together."""

    groups: tuple[MuscleGroup, ...]

    def __post_init__(self):
        if not self.groups:
            raise InputDomainError("a muscle bank needs at least one group")
        object.__setattr__(self, "groups", tuple(self.groups))

    @property
    def names(self) -> list[str]:
        return [g.name for g in self.groups]

    def __len__(self):
        return len(self.groups)

    def reset(self) -> "MuscleBank":
        return MuscleBank(tuple(replace(g, state=MuscleState()) for g in self.groups))


def default_bank() -> MuscleBank:
    return MuscleBank(
        (
            MuscleGroup("shoulder", params=SHOULDER_PARAMS),
            MuscleGroup("elbow", params=ELBOW_PARAMS),
        )
    )


def effort_cost(bank: MuscleBank, loads: Sequence[float], dt: float) -> tuple[MuscleBank, float]:
    """Step every group of ``bank`` under its load; return the new bank and C_eff*dt."""
    loads = list(loads)
    if len(loads) != len(bank):
        raise InputDomainError(f"expected {len(bank)} loads, got {len(loads)}")
    total = 0.0
    groups = []
    for g, tl in zip(bank.groups, loads):
        new_state, c = step(g.state, tl, dt, g.params, g.weight)
        groups.append(replace(g, state=new_state))
        total += c
    return MuscleBank(tuple(groups)), total


class MuscleFatigueTransformer(TransformerMixin, BaseEstimator):
    """Map a load schedule to per-step effort, sklearn style.

    ``X`` has one row per time step and one column per muscle group (%MVC).
    ``transform`` returns ``C_eff * dt`` per step and group, shape
    ``(n_steps, n_groups)``; the compartment history of the last call is
    kept in ``states_``.
    """

    def __init__(self, dt=0.01, params=None, weights=None):
        self.dt = dt
        self.params = params
        self.weights = weights

    def _group_params(self, n):
        params = self.params
        if params is None:
            params = [SHOULDER_PARAMS, ELBOW_PARAMS][:n] if n <= 2 else [FatigueParams()] * n
        elif isinstance(params, FatigueParams):
            params = [params] * n
        weights = self.weights if self.weights is not None else [1.0] * n
        if len(params) != n or len(weights) != n:
            raise InputDomainError(f"need parameters and weights for {n} groups")
        return list(params), list(weights)

    def fit(self, X, y=None):
        X = check_array(X, ensure_min_samples=1)
        check_dt(self.dt)
        self.n_features_in_ = X.shape[1]
        self.group_params_, self.group_weights_ = self._group_params(X.shape[1])
        return self

    def transform(self, X):
        check_is_fitted(self, "n_features_in_")
        X = check_array(X, ensure_min_samples=1)
        if X.shape[1] != self.n_features_in_:
            raise InputDomainError(f"expected {self.n_features_in_} groups, got {X.shape[1]}")
        out = np.zeros(X.shape)
        states = []
        for j in range(X.shape[1]):
            s, c = simulate_group(X[:, j], self.dt, self.group_params_[j], self.group_weights_[j])
            out[:, j] = c
            states.append(s)
        self.states_ = np.stack(states, axis=1)
        return out
