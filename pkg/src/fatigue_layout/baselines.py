"""Reference layouts and search baselines: static, exhaustive oracle and Bayesian optimisation."""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy.stats import norm, qmc
from sklearn.base import BaseEstimator
from sklearn.utils import check_random_state
from sklearn.utils.validation import check_is_fitted

from ._validation import N_CELLS, ConfigError, InputDomainError, NumericError
from .task import STATIC_LAYOUT, ButtonTaskEnv, run_episode, sequence_as_layout

log = logging.getLogger(__name__)

# fixed BO-found layout kept as an extra comparison point
REFERENCE_BO_LAYOUT = (9, 3, 17)


def static_layout() -> tuple[int, ...]:
    """Centred horizontal row used as the naive default."""
    return STATIC_LAYOUT


@dataclass
class OracleTable:
    """Layouts sorted by ascending cost, plus the zero-fatigue reach-cost matrix.

    ``pairwise[0]`` holds reaches from the rest pose, ``pairwise[1 + s]``
    reaches starting at cell ``s``.
    """

    ranking: list[tuple[tuple[int, ...], float]]
    pairwise: np.ndarray
    approx_ranking: list[tuple[tuple[int, ...], float]] = field(default_factory=list)

    @property
    def best(self) -> tuple[tuple[int, ...], float]:
        return self.ranking[0]

    @property
    def minimum(self) -> float:
        return self.ranking[0][1]

    def cost_of(self, layout: Sequence[int]) -> float:
        layout = tuple(layout)
        for cells, cost in self.ranking:
            if cells == layout:
                return cost
        raise KeyError(layout)

    def regret(self, cost: float) -> float:
        return cost - self.minimum


def pairwise_costs(env: ButtonTaskEnv) -> np.ndarray:
    out = np.empty((N_CELLS + 1, N_CELLS))
    for c in range(N_CELLS):
        out[0, c] = env.reach_effort(None, c)
        for s in range(N_CELLS):
            out[1 + s, c] = env.reach_effort(s, c)
    return out


def _approx_frequency_costs(perms: np.ndarray, pairwise: np.ndarray, usage, n_seq: int, length: int):
    """Expected frequency-weighted effort of each layout from independent reach costs."""
    p = np.asarray(usage, dtype=float)
    n = perms.shape[1]
    first = pairwise[0]
    trans = pairwise[1:]
    with np.errstate(invalid="ignore"):
        total = np.zeros(len(perms))
        for i in range(n):
            total += n_seq * p[i] * p[i] * first[perms[:, i]]
            if length > 1:
                for j in range(n):
                    total += n_seq * (length - 1) * p[i] * p[j] * p[i] * trans[perms[:, j], perms[:, i]]
    return np.where(np.isnan(total), np.inf, total)


def _exact_frequency_cost(env: ButtonTaskEnv, layout, cache: dict) -> float:
    """Exact expectation over all button sequences of the frequency-weighted effort.

    Sequences are i.i.d. and each starts fresh from rest, so one sequence's
    expectation times the sequence count gives the episode's.
    """
    p = np.asarray(env.usage)
    n = len(layout)
    L = env.sequence_length
    expected = 0.0
    for seq in itertools.product(range(n), repeat=L):
        prob = float(np.prod(p[list(seq)]))
        if prob == 0:
            continue
        cells = tuple(layout[b] for b in seq)
        res = cache.get(cells)
        if res is None:
            pseudo, spec = sequence_as_layout(cells)
            res = cache[cells] = run_episode(pseudo, spec, env.arm, env.bank, env.config)
        weighted = sum(p[b] * e for b, e in zip(seq, res.press_effort)) + res.penalty_total
        expected += prob * weighted
    return env.n_sequences * expected


def _rank_key(item):
    # costs equal to ~12 significant digits are ties, broken by the cell tuple
    cells, cost = item
    return (float(f"{cost:.12g}"), cells)


def enumerate_exhaustive(
    env: ButtonTaskEnv,
    n_buttons: int | None = None,
    top_k: int = 500,
    n_jobs: int = 1,
) -> OracleTable:
    """Rank every assignment of buttons to distinct cells by simulated cost.

    Up to three buttons every ordered layout is simulated.  Larger button
    counts (the frequency task) are pre-ranked by the zero-fatigue pairwise
    approximation, and only the best ``top_k`` are evaluated exactly.
    """
    n = env.n_buttons if n_buttons is None else n_buttons
    if n != env.n_buttons:
        raise InputDomainError(f"environment is set up for {env.n_buttons} buttons, not {n}")
    if not env.deterministic:
        raise ConfigError("exhaustive enumeration requires noise sigma = 0")
    pairwise = pairwise_costs(env)
    if not env.is_frequency_task:
        layouts = list(itertools.permutations(range(N_CELLS), n))
        if n_jobs == 1:
            costs = [env.run(l).cost for l in layouts]
        else:
            from joblib import Parallel, delayed

            costs = Parallel(n_jobs=n_jobs)(delayed(env.evaluate)(l) for l in layouts)
        ranking = sorted(zip(layouts, (float(c) for c in costs)), key=_rank_key)
        return OracleTable(ranking, pairwise)

    if not env.reset_between_sequences:
        raise ConfigError("the frequency-task oracle assumes muscles reset between sequences")
    perms = np.array(list(itertools.permutations(range(N_CELLS), n)), dtype=np.int64)
    approx = _approx_frequency_costs(perms, pairwise, env.usage, env.n_sequences, env.sequence_length)
    order = np.argsort(approx, kind="stable")[: max(top_k * 4, top_k + 100)]
    approx_ranking = sorted(
        ((tuple(int(c) for c in perms[i]), float(approx[i])) for i in order), key=_rank_key
    )[:top_k]
    cache: dict = {}
    exact = [(cells, float(_exact_frequency_cost(env, cells, cache))) for cells, _ in approx_ranking]
    ranking = sorted(exact, key=_rank_key)
    return OracleTable(ranking, pairwise, approx_ranking)


class ExhaustiveOracle(BaseEstimator):
    def __init__(self, top_k=500, n_jobs=1):
        self.top_k = top_k
        self.n_jobs = n_jobs

    def fit(self, env: ButtonTaskEnv, y=None):
        self.table_ = enumerate_exhaustive(env, top_k=self.top_k, n_jobs=self.n_jobs)
        self.layout_ = self.table_.best[0]
        return self

    def predict(self, X=None):
        check_is_fitted(self, "table_")
        return self.layout_


# -- Bayesian optimisation ---------------------------------------------------


@dataclass
class BOConfig:
    n_sobol: int = 15
    n_iterations: int = 250
    length_scale: float = 0.15
    observation_noise: float = 0.05
    n_candidates: int = 2048
    n_reeval: int = 3
    n_finalists: int = 5
    xi: float = 0.0

    def __post_init__(self):
        if self.n_sobol < 1 or self.n_iterations < 0 or self.n_candidates < 1:
            raise ConfigError("BO counts must be positive")
        if not self.length_scale > 0 or self.observation_noise < 0:
            raise ConfigError("length_scale must be positive and observation_noise non-negative")
        if self.n_reeval < 1 or self.n_finalists < 1:
            raise ConfigError("re-evaluation counts must be positive")


JITTERS = (0.0, 1e-10, 1e-8, 1e-6, 1e-4, 1e-2)


class GaussianProcess:
    """Zero-mean GP with a squared-exponential kernel on standardised targets."""

    def __init__(self, length_scale: float, noise: float):
        self.length_scale = length_scale
        self.noise = noise

    def kernel(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        d2 = ((a[:, None, :] - b[None, :, :]) ** 2).sum(axis=-1)
        return np.exp(-0.5 * d2 / self.length_scale**2)

    def fit(self, X: np.ndarray, y: np.ndarray) -> "GaussianProcess":
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=float)
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
            raise NumericError("GP training data contains non-finite values")
        self.X = X
        self.y_mean = y.mean()
        self.y_std = y.std() if y.std() > 0 else 1.0
        ys = (y - self.y_mean) / self.y_std
        K = self.kernel(X, X) + self.noise * np.eye(len(X))
        for jitter in JITTERS:
            try:
                self.L = np.linalg.cholesky(K + jitter * np.eye(len(X)))
                break
            except np.linalg.LinAlgError:
                log.debug("cholesky failed with jitter %g", jitter)
        else:
            raise NumericError(f"kernel matrix of {len(X)} points is not positive definite")
        self.alpha = np.linalg.solve(self.L.T, np.linalg.solve(self.L, ys))
        self.y_best = ys.min()
        return self

    def predict(self, Xc: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Standardised posterior mean and standard deviation."""
        Ks = self.kernel(Xc, self.X)
        mu = Ks @ self.alpha
        v = np.linalg.solve(self.L, Ks.T)
        var = np.maximum(1.0 - (v * v).sum(axis=0), 1e-12)
        return mu, np.sqrt(var)


def expected_improvement(mu, sd, best, xi: float = 0.0):
    """EI for minimisation over standardised values."""
    imp = best - mu - xi
    z = imp / sd
    return imp * norm.cdf(z) + sd * norm.pdf(z)


def sobol_points(n: int, dim: int, seed: int) -> np.ndarray:
    """First ``n`` points of a scrambled Sobol sequence in ``[0, 1)^dim``."""
    m = max(0, math.ceil(math.log2(max(n, 1))))
    return qmc.Sobol(d=dim, scramble=True, seed=seed).random_base2(m)[:n]


def decode(x: np.ndarray) -> tuple[int, ...]:
    """Unit-cube point to cell indices by flooring ``18 * x``."""
    return tuple(int(c) for c in np.minimum(np.floor(np.asarray(x) * N_CELLS), N_CELLS - 1))


@dataclass
class BOResult:
    layout: tuple[int, ...]
    history: list[tuple[int, tuple[int, ...], float, float]]
    finalists: list[tuple[tuple[int, ...], float]]


def bayes_opt(env: ButtonTaskEnv, config: BOConfig | None = None, seed: int = 0) -> BOResult:
    """Minimise episode cost over layouts with a GP surrogate and expected improvement.

    Layouts are points of ``[0, 18)^n`` floored to cell indices; duplicates
    are evaluated (and penalised) like any other layout.  The returned layout
    is the best of the top observed layouts after ``n_reeval`` fresh
    evaluations each.
    """
    config = config or BOConfig()
    rng = np.random.default_rng(seed)
    dim = env.n_buttons
    gp = GaussianProcess(config.length_scale, config.observation_noise)
    X: list[np.ndarray] = []
    y: list[float] = []
    history = []
    incumbent = math.inf

    def observe(x):
        nonlocal incumbent
        cells = decode(x)
        cost = env.evaluate(cells, seed=int(rng.integers(0, 2**32 - 1)))
        X.append(np.asarray(x, dtype=float))
        y.append(cost)
        incumbent = min(incumbent, cost)
        history.append((len(history), cells, cost, incumbent))

    for x in sobol_points(config.n_sobol, dim, seed):
        observe(x)
    for _ in range(config.n_iterations):
        gp.fit(np.array(X), np.array(y))
        cand = rng.random((config.n_candidates, dim))
        mu, sd = gp.predict(cand)
        ei = expected_improvement(mu, sd, gp.y_best, config.xi)
        observe(cand[int(np.argmax(ei))])

    observed: dict[tuple[int, ...], list[float]] = {}
    for _, cells, cost, _ in history:
        observed.setdefault(cells, []).append(cost)
    ranked = sorted(observed, key=lambda c: (float(np.mean(observed[c])), c))[: config.n_finalists]
    finalists = []
    for cells in ranked:
        vals = [env.evaluate(cells, seed=int(rng.integers(0, 2**32 - 1))) for _ in range(config.n_reeval)]
        finalists.append((cells, float(np.mean(vals))))
    best = min(finalists, key=lambda t: (t[1], t[0]))[0]
    return BOResult(best, history, finalists)


class BayesOptLayoutOptimizer(BaseEstimator):
    def __init__(self, n_sobol=15, n_iterations=250, length_scale=0.15, observation_noise=0.05,
                 n_candidates=2048, n_reeval=3, random_state=None):
        self.n_sobol = n_sobol
        self.n_iterations = n_iterations
        self.length_scale = length_scale
        self.observation_noise = observation_noise
        self.n_candidates = n_candidates
        self.n_reeval = n_reeval
        self.random_state = random_state

    def fit(self, env: ButtonTaskEnv, y=None):
        seed = self.random_state
        if not isinstance(seed, (int, np.integer)):
            seed = int(check_random_state(seed).randint(0, 2**31 - 1))
        cfg = BOConfig(
            n_sobol=self.n_sobol, n_iterations=self.n_iterations, length_scale=self.length_scale,
            observation_noise=self.observation_noise, n_candidates=self.n_candidates,
            n_reeval=self.n_reeval,
        )
        res = bayes_opt(env, cfg, int(seed))
        self.layout_ = res.layout
        self.history_ = res.history
        self.finalists_ = res.finalists
        return self

    def predict(self, X=None):
        check_is_fitted(self, "layout_")
        return self.layout_


# -- comparison ----------------------------------------------------------------


@dataclass
class CompareRow:
    label: str
    layout: tuple[int, ...]
    mean: float
    std: float
    trials: int
    values: list[float]
    penalty_mean: float = 0.0


def compare(
    env: ButtonTaskEnv,
    layouts: Mapping[str, Sequence[int]],
    trials: int = 30,
    noise: float | None = None,
    seed: int = 0,
) -> list[CompareRow]:
    """Evaluate each layout over ``trials`` episodes that share per-trial seeds.

    Muscles are fresh in every trial.  Reported statistics are the mean and
    sample standard deviation of total effort; penalties are averaged separately.
    """
    if trials < 1:
        raise InputDomainError("trials must be at least 1")
    if noise is not None:
        env = env.with_noise(noise)
    seeds = [seed + t for t in range(trials)]
    rows = []
    for label, cells in layouts.items():
        cells = tuple(int(c) for c in cells)
        results = [env.run(cells, seed=s) for s in seeds]
        vals = [r.total_effort for r in results]
        std = float(np.std(vals, ddof=1)) if trials > 1 else 0.0
        pen = float(np.mean([r.penalty_total for r in results]))
        rows.append(CompareRow(label, cells, float(np.mean(vals)), std, trials, vals, pen))
    return rows
