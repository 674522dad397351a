"""Canvas geometry, layouts, reward formulas and episode execution."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import arm as armmod
from ._validation import (
    N_CELLS,
    ConfigError,
    InputDomainError,
    ReachabilityError,
    check_cells,
    check_probabilities,
)
from .fatigue import MuscleBank, default_bank, simulate_group

BUTTON_REWARD = 5.0
SEQUENCE_BONUS = 15.0
MOTION_EFFORT_SCALE = 0.01
STATIC_LAYOUT = (8, 9, 10)
DEFAULT_USAGE = (0.4, 0.25, 0.15, 0.1, 0.1)
TRACE_HEADER = ("t", "group", "m_active", "m_rest", "m_fatigued", "TL", "c_eff_dt", "button_index")


@dataclass(frozen=True)
class Canvas:
    width: float = 0.64
    height: float = 0.36
    depth_from_head: float = 0.58
    rows: int = 3
    cols: int = 6
    button_w: float = 0.10

    def __post_init__(self):
        if self.rows * self.cols != N_CELLS:
            raise ConfigError(f"grid must have {N_CELLS} cells, got {self.rows}x{self.cols}")
        if self.button_w > min(self.width / self.cols, self.height / self.rows) + 0.02:
            raise ConfigError("buttons do not fit in their grid cells")
        if min(self.width, self.height, self.button_w) <= 0:
            raise ConfigError("canvas dimensions must be positive")


def cell_center(canvas: Canvas, idx: int) -> np.ndarray:
    """Centre of grid cell ``idx`` (row-major, row 0 at the top) on the canvas plane."""
    (idx,) = check_cells([idx], canvas.rows * canvas.cols)
    row, col = divmod(idx, canvas.cols)
    x = -canvas.width / 2 + (col + 0.5) * canvas.width / canvas.cols
    y = canvas.height / 2 - (row + 0.5) * canvas.height / canvas.rows
    return np.array([x, y, 0.0])


def normalized_coords(canvas: Canvas, cells: Sequence[int]) -> np.ndarray:
    """``(n, 2)`` button centres scaled to [0, 1] over the canvas extent."""
    pts = np.array([cell_center(canvas, c)[:2] for c in cells])
    return np.column_stack(
        [(pts[:, 0] + canvas.width / 2) / canvas.width, (pts[:, 1] + canvas.height / 2) / canvas.height]
    )


def validate_layout(cells: Sequence[int]) -> tuple[bool, frozenset[int]]:
    """Return ``(ok, shared_cells)``; a layout is ok when no two buttons share a cell."""
    cells = check_cells(cells)
    seen: set[int] = set()
    dup: set[int] = set()
    for c in cells:
        (dup if c in seen else seen).add(c)
    return not dup, frozenset(dup)


def motion_reward(pressed: bool, d: float, c_eff: float, sequence_done: bool = False) -> float:
    """Per-timestep reward of the low-level reaching agent.

    Button press bonus, exponential distance shaping and a scaled effort
    penalty; ``sequence_done`` adds the bonus used in the five-button task.
    """
    if d < 0:
        raise InputDomainError(f"distance must be non-negative, got {d!r}")
    r_task = BUTTON_REWARD if pressed else 0.0
    if sequence_done:
        r_task += SEQUENCE_BONUS
    return r_task + math.expm1(-d) - MOTION_EFFORT_SCALE * c_eff


@dataclass(frozen=True)
class SequenceSpec:
    """Order in which buttons are pressed, split into sequences of ``sequence_length``."""

    button_order: tuple[int, ...] = (0, 1, 2)
    sequence_length: int = 3
    reset_between_sequences: bool = True

    def __post_init__(self):
        object.__setattr__(self, "button_order", tuple(int(b) for b in self.button_order))
        if not self.button_order:
            raise ConfigError("sequence is empty")
        if self.sequence_length < 1:
            raise ConfigError("sequence_length must be positive")

    def sequences(self) -> list[tuple[int, ...]]:
        n = self.sequence_length
        return [self.button_order[i : i + n] for i in range(0, len(self.button_order), n)]


def sequence_as_layout(cells: Sequence[int]) -> tuple[tuple[int, ...], SequenceSpec]:
    """Pseudo-layout and press order visiting ``cells`` in turn; repeats are allowed."""
    uniq: list[int] = []
    for c in cells:
        if c not in uniq:
            uniq.append(c)
    return tuple(uniq), SequenceSpec(tuple(uniq.index(c) for c in cells), len(cells))


def draw_sequences(
    rng: np.random.Generator,
    usage: Sequence[float],
    n_sequences: int = 3,
    length: int = 3,
    reset_between_sequences: bool = True,
) -> SequenceSpec:
    """Sample ``n_sequences`` button sequences i.i.d. from the usage distribution."""
    p = check_probabilities(usage, len(usage))
    order = rng.choice(len(p), size=n_sequences * length, p=p)
    return SequenceSpec(tuple(int(b) for b in order), length, reset_between_sequences)


@dataclass(frozen=True)
class EpisodeConfig:
    canvas: Canvas = field(default_factory=Canvas)
    fitts: armmod.FittsParams = field(default_factory=armmod.FittsParams)
    dt: float = 0.01
    timeout_s: float = 15.0
    timeout_penalty: float = 50.0
    overlap_penalty: float = 150.0
    noise: float = 0.0

    def __post_init__(self):
        if not 0 < self.dt <= 0.1:
            raise ConfigError(f"dt must lie in (0, 0.1], got {self.dt!r}")
        if not self.timeout_s > 0:
            raise ConfigError("timeout_s must be positive")
        if self.timeout_penalty < 0 or self.overlap_penalty < 0:
            raise ConfigError("penalties must be non-negative")
        if self.noise < 0:
            raise ConfigError("noise must be non-negative")


@dataclass
class EpisodeResult:
    layout: tuple[int, ...]
    per_button_effort: np.ndarray
    press_effort: list[float]
    press_buttons: list[int]
    press_times: list[float]
    penalties: list[tuple[str, float]]
    trace: list[tuple] | None = None

    @property
    def total_effort(self) -> float:
        return float(sum(self.press_effort))

    @property
    def penalty_total(self) -> float:
        return float(sum(v for _, v in self.penalties))

    @property
    def reward(self) -> float:
        return -self.total_effort - self.penalty_total

    @property
    def cost(self) -> float:
        """Quantity the layout optimisers minimise: effort plus penalties."""
        return self.total_effort + self.penalty_total

    @property
    def completed(self) -> bool:
        return not self.penalties

    @property
    def press_counts(self) -> np.ndarray:
        return np.bincount(self.press_buttons, minlength=len(self.layout)).astype(float)

    def summary(self) -> dict:
        return {
            "layout": list(self.layout),
            "per_button_effort": [float(v) for v in self.per_button_effort],
            "total_effort": self.total_effort,
            "reward": self.reward,
            "penalties": [[k, v] for k, v in self.penalties],
            "press_buttons": list(self.press_buttons),
            "press_times": [float(t) for t in self.press_times],
        }


def run_episode(
    layout: Sequence[int],
    seq: SequenceSpec,
    arm: armmod.ArmModel,
    bank: MuscleBank,
    config: EpisodeConfig,
    rng: np.random.Generator | None = None,
    record_trace: bool = False,
) -> EpisodeResult:
    """Simulate the surrogate user pressing ``seq`` on ``layout``.

    Muscles start fresh; every sequence starts from the rest pose.  A press
    that cannot be reached, or whose reach exceeds ``timeout_s`` of simulated
    time, ends the episode with ``timeout_penalty`` for it and for every press
    still pending.  Layouts with shared cells are never simulated.
    """
    layout = check_cells(layout, config.canvas.rows * config.canvas.cols)
    if any(not 0 <= b < len(layout) for b in seq.button_order):
        raise ConfigError(f"sequence references buttons outside 0..{len(layout) - 1}")
    n = len(layout)
    result = EpisodeResult(layout, np.zeros(n), [], [], [], [], [] if record_trace else None)

    ok, dup = validate_layout(layout)
    if not ok:
        result.penalties.append(("overlap", config.overlap_penalty))
        return result
    if config.noise > 0 and rng is None:
        raise ConfigError("a random generator is required when noise is enabled")

    groups = bank.reset().groups
    states = [g.state for g in groups]
    n_presses = len(seq.button_order)
    t_now = 0.0
    press_no = 0
    for s_idx, sequence in enumerate(seq.sequences()):
        if s_idx and seq.reset_between_sequences:
            states = [g.state for g in groups]
        hand = arm.rest_pose
        for button in sequence:
            target = cell_center(config.canvas, layout[button])
            try:
                traj = armmod.plan_reach(
                    arm, hand, target, config.fitts, config.dt,
                    width=config.canvas.button_w, rng=rng, noise=config.noise,
                )
            except ReachabilityError:
                traj = None
            steps = 0 if traj is None else len(traj) - 1
            if traj is None or steps * config.dt > config.timeout_s:
                pending = n_presses - press_no
                result.penalties.append(("timeout", config.timeout_penalty * pending))
                return result
            effort = 0.0
            new_states = []
            for j, g in enumerate(groups):
                hist, contrib = simulate_group(
                    traj.loads[:-1, j], config.dt, g.params, g.weight, states[j]
                )
                effort += float(contrib.sum())
                new_states.append(type(states[j])(*hist[-1]))
                if record_trace:
                    for k in range(steps):
                        result.trace.append(
                            (t_now + k * config.dt, g.name, *hist[k], float(traj.loads[k, j]),
                             float(contrib[k]), button)
                        )
            states = new_states
            t_now += steps * config.dt
            hand = target
            result.per_button_effort[button] += effort
            result.press_effort.append(effort)
            result.press_buttons.append(button)
            result.press_times.append(t_now)
            press_no += 1
    return result


@dataclass
class ButtonTaskEnv:
    """Layout evaluator used by every optimiser.

    ``n_buttons == 3`` is the fixed sequential task; larger button counts run
    ``n_sequences`` sequences drawn from ``usage``.  Deterministic evaluations
    (noise 0, fixed sequences) are memoised.
    """

    arm: armmod.ArmModel = field(default_factory=armmod.ArmModel)
    bank: MuscleBank = field(default_factory=default_bank)
    config: EpisodeConfig = field(default_factory=EpisodeConfig)
    n_buttons: int = 3
    usage: tuple[float, ...] = DEFAULT_USAGE
    n_sequences: int = 3
    sequence_length: int = 3
    reset_between_sequences: bool = True

    def __post_init__(self):
        if self.n_buttons < 1:
            raise ConfigError("n_buttons must be positive")
        self.usage = tuple(float(u) for u in self.usage)
        if self.is_frequency_task:
            if len(self.usage) != self.n_buttons:
                raise ConfigError(f"usage needs {self.n_buttons} entries, got {len(self.usage)}")
            check_probabilities(self.usage, self.n_buttons)
        self._cache: dict = {}

    @property
    def is_frequency_task(self) -> bool:
        return self.n_buttons > 3

    @property
    def deterministic(self) -> bool:
        return self.config.noise == 0

    def with_noise(self, sigma: float) -> "ButtonTaskEnv":
        cfg = EpisodeConfig(**{**self.config.__dict__, "noise": float(sigma)})
        return ButtonTaskEnv(
            self.arm, self.bank, cfg, self.n_buttons, self.usage,
            self.n_sequences, self.sequence_length, self.reset_between_sequences,
        )

    def fixed_sequence(self) -> SequenceSpec:
        return SequenceSpec(tuple(range(self.n_buttons)), self.n_buttons, self.reset_between_sequences)

    def sequence_for(self, rng: np.random.Generator) -> SequenceSpec:
        if not self.is_frequency_task:
            return self.fixed_sequence()
        return draw_sequences(
            rng, self.usage, self.n_sequences, self.sequence_length, self.reset_between_sequences
        )

    def run(
        self,
        layout: Sequence[int],
        seed: int | None = None,
        seq: SequenceSpec | None = None,
        record_trace: bool = False,
    ) -> EpisodeResult:
        """Run one episode; ``seed`` drives both motor noise and sequence sampling."""
        layout = check_cells(layout, N_CELLS)
        if len(layout) != self.n_buttons:
            raise InputDomainError(f"layout needs {self.n_buttons} cells, got {len(layout)}")
        seq_rng, noise_rng = (
            np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(2)
        ) if seed is not None else (np.random.default_rng(0), None)
        if seq is None:
            seq = self.sequence_for(seq_rng)
        if self.deterministic and not record_trace:
            key = (layout, seq.button_order)
            hit = self._cache.get(key)
            if hit is None:
                if seq.reset_between_sequences and len(seq.sequences()) > 1:
                    hit = self._assemble(layout, seq)
                else:
                    hit = run_episode(layout, seq, self.arm, self.bank, self.config)
                self._cache[key] = hit
            return hit
        if not self.deterministic and noise_rng is None:
            raise ConfigError("a seed is required when noise is enabled")
        return run_episode(
            layout, seq, self.arm, self.bank, self.config, rng=noise_rng, record_trace=record_trace
        )

    def _assemble(self, layout: tuple[int, ...], seq: SequenceSpec) -> EpisodeResult:
        # With fresh muscles and the hand at rest at every sequence start, the
        # sequences are independent; simulate each distinct cell sequence once.
        ok, _ = validate_layout(layout)
        if not ok:
            return run_episode(layout, seq, self.arm, self.bank, self.config)
        out = EpisodeResult(layout, np.zeros(len(layout)), [], [], [], [])
        done = 0
        t0 = 0.0
        for sub in seq.sequences():
            cells = tuple(layout[b] for b in sub)
            part = self._cache.get(("seq", cells))
            if part is None:
                pseudo, spec = sequence_as_layout(cells)
                part = self._cache[("seq", cells)] = run_episode(
                    pseudo, spec, self.arm, self.bank, self.config
                )
            for b, e, t in zip(sub, part.press_effort, part.press_times):
                out.per_button_effort[b] += e
                out.press_effort.append(e)
                out.press_buttons.append(b)
                out.press_times.append(t0 + t)
            done += len(part.press_effort)
            if part.penalties:
                pending = len(seq.button_order) - done
                out.penalties.append(("timeout", self.config.timeout_penalty * pending))
                return out
            t0 += part.press_times[-1]
        return out

    def evaluate(self, layout: Sequence[int], seed: int | None = None) -> float:
        return self.run(layout, seed).cost

    def reach_effort(self, start_cell: int | None, end_cell: int) -> float:
        """Noise-free effort of one reach with fresh muscles (``None`` = rest pose).

        Unreachable targets cost ``inf``.
        """
        key = ("pair", start_cell, end_cell)
        if key in self._cache:
            return self._cache[key]
        cfg = self.config
        start = self.arm.rest_pose if start_cell is None else cell_center(cfg.canvas, start_cell)
        try:
            traj = armmod.plan_reach(
                self.arm, start, cell_center(cfg.canvas, end_cell), cfg.fitts, cfg.dt,
                width=cfg.canvas.button_w,
            )
        except ReachabilityError:
            self._cache[key] = math.inf
            return math.inf
        effort = 0.0
        for j, g in enumerate(self.bank.reset().groups):
            effort += float(simulate_group(traj.loads[:-1, j], cfg.dt, g.params, g.weight)[1].sum())
        self._cache[key] = effort
        return effort
