"""Acceptance checks, one test per criterion.

Each test prints a single ``criterion N: PASS|FAIL`` line (collected again in
the terminal summary by ``conftest.py``) and then asserts.  The long-running
ones train ten agents each and are marked ``slow``.

Run standalone with ``pytest tests/test_acceptance.py -v``.
"""

from __future__ import annotations

import math
import statistics
import time
from collections import Counter
from dataclasses import replace

import numpy as np
import pytest

from fatigue_layout import io
from fatigue_layout._validation import ReachabilityError
from fatigue_layout.arm import ArmModel, forward_kinematics, inverse_kinematics
from fatigue_layout.baselines import bayes_opt, compare, enumerate_exhaustive, static_layout
from fatigue_layout.cli import canonical_layout, main
from fatigue_layout.config import RunConfig
from fatigue_layout.fatigue import (
    ELBOW_PARAMS,
    SHOULDER_PARAMS,
    MuscleState,
    simulate_group,
)
from fatigue_layout.rl import episode_reward_freq, train
from fatigue_layout.task import ButtonTaskEnv, EpisodeConfig, motion_reward, validate_layout

N_SEEDS = 10
SKEWED_USAGE = (0.6, 0.1, 0.1, 0.1, 0.1)

RESULTS: list[str] = []
FINAL_LAYOUTS: list[tuple[str, tuple[int, ...]]] = []


def report(n: int, ok: bool, detail: str) -> None:
    line = f"criterion {n:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
    RESULTS.append(line)
    print(line)
    assert ok, line


# ---- shared fixtures -------------------------------------------------------


@pytest.fixture(scope="module")
def cfg():
    return RunConfig()


@pytest.fixture(scope="module")
def oracle3(cfg):
    return enumerate_exhaustive(cfg.environment(noise=0.0))


@pytest.fixture(scope="module")
def rl_noise_free(cfg):
    env = cfg.environment(noise=0.0)
    t0 = time.perf_counter()
    layouts = [train(env, cfg.train_config(seed=s)).layout for s in range(N_SEEDS)]
    FINAL_LAYOUTS.extend(("rl sigma=0", c) for c in layouts)
    return layouts, time.perf_counter() - t0


# ---- fatigue model ----------------------------------------------------------


def test_criterion_01_conservation():
    rng = np.random.default_rng(0)
    n_steps, n_sched, block = 100_000, 100, 250
    worst = 0.0
    t0 = time.perf_counter()
    for i in range(n_sched):
        # piecewise-constant schedule with idle stretches and abrupt jumps
        levels = rng.uniform(0, 100, size=n_steps // block)
        levels[rng.random(levels.size) < 0.25] = 0.0
        params = SHOULDER_PARAMS if i % 2 == 0 else ELBOW_PARAMS
        states, _ = simulate_group(np.repeat(levels, block), 0.01, params)
        worst = max(worst, float(np.max(np.abs(states.sum(axis=1) - 100.0))))
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-6 and elapsed < 30
    report(1, ok, f"max |sum-100| = {worst:.2e} over {n_sched} schedules x {n_steps} steps in {elapsed:.1f} s")


def test_criterion_02_recovery_multiplier():
    start = MuscleState(0.0, 60.0, 40.0)
    rest = np.zeros(6000)
    fast, _ = simulate_group(rest, 0.01, replace(SHOULDER_PARAMS, rest_multiplier=15.0), state=start)
    slow, _ = simulate_group(rest, 0.01, replace(SHOULDER_PARAMS, rest_multiplier=1.0), state=start)
    idx = [1000, 3000, 6000]
    pairs = [(fast[i, 2], slow[i, 2]) for i in idx]
    ok = all(a < b for a, b in pairs)
    detail = ", ".join(f"t={i // 100}s {a:.3f}<{b:.3f}" for i, (a, b) in zip(idx, pairs))
    report(2, ok, f"M_F r=15 vs r=1: {detail}")


def test_criterion_03_integrator_accuracy():
    worst = 0.0
    for params in (SHOULDER_PARAMS, ELBOW_PARAMS):
        coarse, _ = simulate_group(np.full(6000, 80.0), 0.01, params)
        fine, _ = simulate_group(np.full(60000, 80.0), 0.001, params)
        worst = max(worst, float(np.max(np.abs(coarse - fine[::10]))))
    report(3, worst <= 1e-3, f"max compartment difference dt=0.01 vs 0.001 over 60 s: {worst:.2e} %MVC")


def test_criterion_04_reward_algebra():
    e = math.e
    cases = [
        (motion_reward(True, 0.0, 0.0), 5.0),
        (motion_reward(False, 0.0, 0.0), 0.0),
        (motion_reward(False, 1.0, 0.0), 1 / e - 1),
        (motion_reward(False, 2.0, 0.0), 1 / e**2 - 1),
        (motion_reward(False, 0.0, 30.0), -0.3),
        (motion_reward(True, 0.5, 12.5), 5.0 + 1 / math.sqrt(e) - 1 - 0.125),
        (motion_reward(True, 0.0, 0.0, sequence_done=True), 20.0),
        (motion_reward(False, 0.0, 7.0, sequence_done=True), 15.0 - 0.07),
    ]
    err = max(abs(a - b) for a, b in cases)
    shaping = [motion_reward(False, d, 0.0) for d in np.linspace(0, 30, 301)]
    in_range = all(-1.0 < r <= 0.0 for r in shaping)
    freq = [episode_reward_freq(f, pi) for f, pi in [
        ([0] * 5, [0.2] * 5), ([500] * 5, [0.2] * 5), ([3, 1, 4, 1, 5], [0.6, 0.1, 0.1, 0.1, 0.1])]]
    ok = err <= 1e-12 and in_range and all(0 < r <= 1 for r in freq)
    report(4, ok, f"max error {err:.1e} on {len(cases)} hand cases; shaping in (-1,0]: {in_range}")


# ---- arm -------------------------------------------------------------------


def test_criterion_05_kinematics_round_trip():
    arm = ArmModel()
    rng = np.random.default_rng(5)
    shoulder = np.array(arm.shoulder_pos)
    n = 10_000
    d = rng.normal(size=(n, 3))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    r = rng.uniform(arm.min_reach + 1e-3, arm.reach - 1e-9, size=n)
    worst = 0.0
    for di, ri in zip(d, r):
        target = shoulder + ri * di
        worst = max(worst, float(np.linalg.norm(forward_kinematics(arm, inverse_kinematics(arm, target)) - target)))
    raised = 0
    far = rng.uniform(arm.reach + 1e-9, 2 * arm.reach, size=1000)
    for di, ri in zip(d[:1000], far):
        try:
            inverse_kinematics(arm, shoulder + ri * di)
        except ReachabilityError:
            raised += 1
    ok = worst <= 1e-9 and raised == 1000
    report(5, ok, f"max FK(IK) error {worst:.1e} m on {n} targets; {raised}/1000 unreachable raised")


# ---- oracle ------------------------------------------------------------------


@pytest.mark.slow
def test_criterion_06_exhaustive_oracle(tmp_path):
    out = tmp_path / "enum"
    t0 = time.perf_counter()
    code = main(["enumerate", "--buttons", "3", "--out", str(out)])
    elapsed = time.perf_counter() - t0
    _, rows = io.read_csv(out / "oracle.csv")
    best = tuple(int(c) for c in rows[0][:3])
    bottom = set(range(12, 18))
    ok = code == 0 and len(rows) == 4896 and set(best) <= bottom and elapsed < 300
    report(6, ok, f"{len(rows)} rows in {elapsed:.0f} s; optimum {best} cost {float(rows[0][3]):.3f}")


# ---- optimisers ----------------------------------------------------------------


@pytest.mark.slow
def test_criterion_07_rl_regret(oracle3, rl_noise_free):
    layouts, elapsed = rl_noise_free
    env = ButtonTaskEnv()
    pct = [100 * (env.evaluate(c) - oracle3.minimum) / oracle3.minimum for c in layouts]
    within = sum(p <= 5.0 for p in pct)
    ok = within >= 8 and elapsed < 900
    report(7, ok, f"{within}/{N_SEEDS} seeds within 5% (regret % {[round(p, 2) for p in pct]}) in {elapsed:.0f} s")


@pytest.mark.slow
def test_criterion_08_compare_direction(cfg, rl_noise_free):
    rl_layout = rl_noise_free[0][0]
    rows = compare(cfg.environment(noise=0.0), {"static": static_layout(), "rl": rl_layout},
                   trials=30, noise=0.1, seed=cfg.seed)
    static, rl = rows
    pooled = math.sqrt((static.std**2 + rl.std**2) / 2)
    margin = static.mean - rl.mean
    ok = margin > pooled
    report(8, ok, f"static {static.mean:.3f}±{static.std:.3f} vs rl {rl_layout} "
                  f"{rl.mean:.3f}±{rl.std:.3f}; margin {margin:.3f} > pooled sd {pooled:.3f}")


@pytest.mark.slow
def test_criterion_09_bo_sanity_and_noise(cfg, oracle3):
    env1 = cfg.environment(noise=0.0, n_buttons=1)
    table1 = enumerate_exhaustive(env1)
    res1 = bayes_opt(env1, replace(cfg.bo, n_sobol=15, n_iterations=100), seed=cfg.seed)
    sane = res1.layout == table1.best[0]

    sigma = 0.3
    noisy = cfg.environment(noise=sigma)
    clean = ButtonTaskEnv()
    bo_reg, rl_reg = [], []
    for s in range(N_SEEDS):
        b = bayes_opt(noisy, cfg.bo, seed=s).layout
        r = train(noisy, cfg.train_config(seed=s)).layout
        FINAL_LAYOUTS.extend([("bo sigma=0.3", b), ("rl sigma=0.3", r)])
        bo_reg.append(oracle3.regret(clean.evaluate(b)))
        rl_reg.append(oracle3.regret(clean.evaluate(r)))
    med_bo, med_rl = statistics.median(bo_reg), statistics.median(rl_reg)
    ok = sane and med_bo >= med_rl
    report(9, ok, f"1-button BO {res1.layout} vs oracle {table1.best[0]}; sigma={sigma} median regret "
                  f"BO {med_bo:.3f} vs RL {med_rl:.3f}")


@pytest.mark.slow
def test_criterion_10_frequency_extension():
    cfg = RunConfig(task="5-button-freq")
    cfg.frequency = replace(cfg.frequency, usage=SKEWED_USAGE)
    env = cfg.environment(noise=0.0)
    table = enumerate_exhaustive(env, top_k=cfg.top_k)
    best = table.best[0]
    top = int(np.argmax(SKEWED_USAGE))
    runs = [train(env, cfg.train_config(seed=s)) for s in range(N_SEEDS)]
    layouts = [r.layout for r in runs]
    FINAL_LAYOUTS.extend(("freq rl", c) for c in layouts)
    hits = sum(c[top] == best[top] for c in layouts)
    keys = Counter(canonical_layout(c, SKEWED_USAGE) for c in layouts)
    modal_share = keys.most_common(1)[0][1] / N_SEEDS
    # batch mean and best rewards seen during training
    rewards = [v for r in runs for row in r.curve for v in row[1:3]]
    bounded = all(0 < r <= 1 for r in rewards)
    ok = bounded and hits >= 7 and modal_share >= 0.7
    report(10, ok, f"rewards in (0,1]: {bounded}; top button on oracle cell {best[top]} in "
                   f"{hits}/{N_SEEDS}; modal layout share {modal_share:.0%}; layouts {layouts}")


def test_criterion_11_penalty_discipline():
    rng = np.random.default_rng(11)
    checks = 0
    for n, penalty in ((3, 150.0), (3, 77.0), (5, 450.0)):
        env = ButtonTaskEnv(n_buttons=n, config=EpisodeConfig(overlap_penalty=penalty))
        for _ in range(20):
            cells = list(rng.choice(18, n, replace=False))
            cells[int(rng.integers(1, n))] = cells[0]
            res = env.run(tuple(int(c) for c in cells), seed=0)
            assert res.penalties == [("overlap", penalty)], res.penalties
            checks += 1
    env = ButtonTaskEnv()
    assert env.run((8, 0, 10)).penalties == [("timeout", 100.0)]
    assert env.run((6, 9, 10)).penalties == [("timeout", 150.0)]
    assert ButtonTaskEnv(config=EpisodeConfig(timeout_s=0.5, timeout_penalty=20.0)).run(
        (8, 9, 10)).penalties == [("timeout", 60.0)]
    assert env.run((17, 16, 15)).penalties == []
    invalid = [(who, c) for who, c in FINAL_LAYOUTS if not validate_layout(c)[0]]
    ok = not invalid
    report(11, ok, f"{checks} overlap and 4 timeout cases exact; {len(FINAL_LAYOUTS)} optimiser "
                   f"layouts checked, invalid: {invalid}")


def test_criterion_12_reproducibility(tmp_path):
    cfg_path = tmp_path / "small.json"
    cfg_path.write_text(
        '{"rl": {"episodes": 512, "batch": 64}, "bo": {"n_iterations": 5},'
        ' "frequency": {"rl": {"episodes": 512, "batch": 64}}, "oracle": {"top_k": 20}}'
    )
    commands = {
        "simulate": ["simulate", "--layout", "8,9,10", "--noise", "0.2"],
        "enumerate": ["enumerate", "--buttons", "2"],
        "optimize-rl": ["optimize", "rl", "--seeds", "2", "--noise", "0.2"],
        "optimize-bo": ["optimize", "bo", "--seeds", "2", "--noise", "0.2"],
        "compare": ["compare", "--trials", "4", "--noise", "0.1"],
        "freq-task": ["freq-task", "--seeds", "2"],
    }
    mismatched, n_files = [], 0
    for name, args in commands.items():
        outs = [tmp_path / f"{name}-{i}" for i in (1, 2)]
        for out in outs:
            assert main(args + ["--config", str(cfg_path), "--seed", "3", "--jobs", "1",
                                "--out", str(out)]) == 0, name
        files = sorted(p.name for p in outs[0].iterdir() if p.suffix in (".csv", ".txt"))
        assert files, name
        n_files += len(files)
        mismatched += [f"{name}/{f}" for f in files
                       if (outs[0] / f).read_bytes() != (outs[1] / f).read_bytes()]
    report(12, not mismatched, f"{n_files} CSV and policy files over {len(commands)} subcommands; "
                                f"mismatched: {mismatched}")
