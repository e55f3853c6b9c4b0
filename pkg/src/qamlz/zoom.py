"""Iterative zoomed training loop.

Each iteration solves the effective Ising problem centred on the running
weight vector mu with search width sigma(t) = base**t, optionally randomizes
the returned spins to fight zoom-in overfitting, and updates
mu <- mu + s * sigma(t). The weights collected at the final iteration define
the strong classifier. The loop is fully deterministic for a fixed seed: all
randomness is drawn from streams keyed by (seed, iteration, candidate, gauge).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .dataset import Dataset
from .errors import ConfigError
from .features import FeaturePipeline
from .ising import (
    CouplingMatrices,
    augment,
    apply_gauge,
    build_couplings_from_signs,
    effective_problem,
    expand_solution,
    fix_variables,
    prune,
    random_gauge,
    ungauge,
)
from .solver import (
    AnnealSchedule,
    ChainConfig,
    select_states,
    solve_chain_emulated,
    solve_exact,
    solve_external,
    solve_sa,
)

# rng purpose codes inside the (seed, purpose, ...) keys
_K_SOLVE, _K_GAUGE, _K_FLIP = 3, 4, 5


def default_p_flip(iterations: int) -> tuple[float, ...]:
    """Halving per iteration from 0.16, applied to locally-worsening spins."""
    return tuple(0.16 * 2.0 ** -t for t in range(iterations))


def default_q_flip(iterations: int) -> tuple[float, ...]:
    """Uniform flip probability, a quarter of the worsening-flip schedule."""
    return tuple(p / 4.0 for p in default_p_flip(iterations))


def _at(schedule: float | Sequence[float], t: int) -> float:
    if isinstance(schedule, (int, float)):
        return float(schedule)
    return float(schedule[min(t, len(schedule) - 1)])


@dataclass(frozen=True)
class ZoomConfig:
    """Training-loop settings. Flip schedules default to the halving series
    above; `p_flip` and `q_flip` are deliberately explicit configuration, and
    q must not exceed p anywhere (both may be zero)."""

    iterations: int = 8
    base: float = 0.5
    delta: float = 0.025
    offset_range: int = 3
    p_flip: tuple[float, ...] | None = None
    q_flip: tuple[float, ...] | None = None
    schedule: AnnealSchedule = field(default_factory=AnnealSchedule)
    cutoff_pct: float = 0.0
    fixing: bool = False
    solver: str = "sa"
    chain: ChainConfig | None = None
    external_command: tuple[str, ...] | None = None
    lam: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.iterations < 1:
            raise ConfigError("iterations must be >= 1")
        if not 0.0 < self.base < 1.0:
            raise ConfigError("zoom base must be in (0, 1)")
        if self.p_flip is None:
            object.__setattr__(self, "p_flip", default_p_flip(self.iterations))
        if self.q_flip is None:
            object.__setattr__(self, "q_flip", tuple(p / 4.0 for p in self.p_flip))
        for name in ("p_flip", "q_flip"):
            probs = getattr(self, name)
            if not probs or any(not 0.0 <= x < 1.0 for x in probs):
                raise ConfigError(f"{name} entries must lie in [0, 1)")
        for t in range(self.iterations):
            if _at(self.q_flip, t) > _at(self.p_flip, t):
                raise ConfigError("q_flip must not exceed p_flip")
        if self.solver not in ("exact", "sa", "chain", "external"):
            raise ConfigError(f"unknown solver {self.solver!r}")
        if self.solver == "external" and not self.external_command:
            raise ConfigError("solver 'external' needs an external_command")
        if not 0.0 <= self.cutoff_pct <= 100.0:
            raise ConfigError("cutoff_pct must be in [0, 100]")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must be a non-negative 64-bit integer")

    def settings_dict(self) -> dict:
        return {
            "iterations": self.iterations,
            "base": self.base,
            "delta": self.delta,
            "offset_range": self.offset_range,
            "cutoff_pct": self.cutoff_pct,
            "fixing": self.fixing,
            "solver": self.solver,
            "lambda": self.lam,
            "seed": self.seed,
        }


@dataclass(frozen=True)
class ZoomState:
    """Snapshot entering iteration t: search width sigma = base**t and the
    surviving candidate centres with their training objectives, best first."""

    t: int
    sigma: float
    candidates: tuple[tuple[np.ndarray, float], ...]

    @property
    def mu(self) -> np.ndarray:
        return self.candidates[0][0]


@dataclass(frozen=True)
class IterationRecord:
    t: int
    sigma: float
    train_distance: float
    test_distance: float
    n_candidates: int
    broken_chain_fraction: float

    def to_dict(self) -> dict:
        return {
            "t": self.t,
            "sigma": self.sigma,
            "train_distance": self.train_distance,
            "test_distance": self.test_distance,
            "n_candidates": self.n_candidates,
            "broken_chain_fraction": self.broken_chain_fraction,
        }


@dataclass(frozen=True)
class TrainedModel:
    """Final classifier weights plus everything needed to score new events."""

    mu: np.ndarray
    delta: float
    offset_range: int
    pipeline: FeaturePipeline
    trajectory: tuple[IterationRecord, ...]
    settings: Mapping[str, object]

    def __post_init__(self):
        self.mu.setflags(write=False)

    @property
    def n_var(self) -> int:
        return self.pipeline.n_var

    @property
    def n_spins(self) -> int:
        return self.n_var * (2 * self.offset_range + 1)

    def augmented_set(self):
        return augment(self.pipeline.weak, self.delta, self.offset_range)

    def to_dict(self) -> dict:
        return {
            "mu": [float(v) for v in self.mu],
            "delta": self.delta,
            "offset_range": self.offset_range,
            "pipeline": self.pipeline.to_dict(),
            "trajectory": [r.to_dict() for r in self.trajectory],
            "settings": dict(self.settings),
        }

    @classmethod
    def from_dict(cls, doc: Mapping) -> "TrainedModel":
        return cls(
            mu=np.asarray(doc["mu"], dtype=np.float64),
            delta=float(doc["delta"]),
            offset_range=int(doc["offset_range"]),
            pipeline=FeaturePipeline.from_dict(doc["pipeline"]),
            trajectory=tuple(
                IterationRecord(
                    t=int(r["t"]), sigma=float(r["sigma"]),
                    train_distance=float(r["train_distance"]),
                    test_distance=float(r["test_distance"]),
                    n_candidates=int(r["n_candidates"]),
                    broken_chain_fraction=float(r["broken_chain_fraction"]),
                )
                for r in doc.get("trajectory", [])
            ),
            settings=dict(doc.get("settings", {})),
        )


# ---------------------------------------------------------------------------
# Elementary steps
# ---------------------------------------------------------------------------


def zoom_update(mu: np.ndarray, spins: np.ndarray, sigma: float) -> np.ndarray:
    """mu_i <- mu_i + s_i * sigma, elementwise and exact."""
    mu = np.asarray(mu, dtype=np.float64)
    s = np.asarray(spins)
    if mu.shape != s.shape:
        raise ConfigError("mu and spin vector lengths differ")
    return mu + s * sigma


def flip_step(
    mu_prev: np.ndarray,
    mu_cand: np.ndarray,
    spins: np.ndarray,
    couplings: CouplingMatrices,
    sigma: float,
    t: int,
    p_flip: float | Sequence[float],
    q_flip: float | Sequence[float],
    rng: np.random.Generator,
    lam: float = 0.0,
) -> np.ndarray:
    """Two-stage spin randomization applied to a solver state.

    Stage 1 walks the spins in index order; whenever flipping spin i would
    lower the unpruned iteration energy at the current working state (the spin
    "worsens" the objective as returned), the flip is applied with probability
    p_flip(t). Stage 2 flips every spin independently with probability
    q_flip(t). Exactly one uniform per spin and stage is drawn, in index
    order, so the stream does not depend on the data. `mu_cand` is unused by
    this rule but kept in the signature for alternative strategies.
    """
    del mu_cand
    p = _at(p_flip, t)
    q = _at(q_flip, t)
    mu_prev = np.asarray(mu_prev, dtype=np.float64)
    s = np.asarray(spins).astype(np.float64).copy()
    n = len(s)
    if mu_prev.shape != (n,) or couplings.n_spins != n:
        raise ConfigError("shape mismatch between mu, spins and couplings")
    h_eff = lam + sigma * (-couplings.tag_sums + couplings.pair_sums @ mu_prev)
    j_sym = couplings.pair_sums * (sigma * sigma)
    np.fill_diagonal(j_sym, 0.0)
    u_worsen = rng.random(n)
    for i in range(n):
        delta_flip = -2.0 * s[i] * (h_eff[i] + j_sym[i] @ s)
        if delta_flip < 0.0 and u_worsen[i] < p:
            s[i] = -s[i]
    u_uniform = rng.random(n)
    s[u_uniform < q] *= -1.0
    return s.astype(np.int8)


# ---------------------------------------------------------------------------
# Training loop
# ---------------------------------------------------------------------------


def _solve_backend(problem, cfg: ZoomConfig, t: int, seed: tuple):
    if cfg.solver == "exact":
        return solve_exact(problem)
    if cfg.solver == "sa":
        return solve_sa(problem, cfg.schedule, seed=seed)
    if cfg.solver == "external":
        return solve_external(problem, cfg.external_command)
    cc = cfg.chain if cfg.chain is not None else ChainConfig()
    return solve_chain_emulated(problem, cc, cfg.schedule, seed=seed,
                                strength=cc.strength_at(t))


def weighted_distance(
    signs: np.ndarray, tags: np.ndarray, weights: np.ndarray, mu: np.ndarray, n_var: int
) -> float:
    """Weighted mean squared residual between tags and the classifier output."""
    scores = signs @ (np.asarray(mu, dtype=np.float64) / n_var)
    r = np.asarray(tags, dtype=np.float64) - scores
    w = np.asarray(weights, dtype=np.float64)
    return float((w * r * r).sum() / w.sum())


def run_qamlz(
    train: Dataset,
    test: Dataset,
    features: FeaturePipeline,
    cfg: ZoomConfig,
) -> TrainedModel:
    """Train the zoomed annealing classifier.

    Per iteration and per surviving candidate centre: build the effective
    problem, prune, optionally fix provably-optimal spins, solve under
    n_g(t) random gauges, randomize each selected state, and form the updated
    centres. Candidates are pooled across gauges, deduplicated, ranked by the
    weighted training distance, and capped at n_e(t) within the energy window.
    The test-sample distance is recorded for monitoring only.
    """
    if train.schema != test.schema:
        raise ConfigError("train and test samples must share a schema")
    if len(train) == 0 or len(test) == 0:
        raise ConfigError("train and test samples must be non-empty")
    aug = augment(features.weak, cfg.delta, cfg.offset_range)
    signs_train = aug.signs_from_h(features.transform(train))
    signs_test = aug.signs_from_h(features.transform(test))
    cm = build_couplings_from_signs(signs_train, train.tags, train.weights, aug.n_var)
    gf_train = signs_train.astype(np.float64)
    gf_test = signs_test.astype(np.float64)

    def d_train(mu):
        return weighted_distance(gf_train, train.tags, train.weights, mu, aug.n_var)

    def d_test(mu):
        return weighted_distance(gf_test, test.tags, test.weights, mu, aug.n_var)

    sched = cfg.schedule
    mu0 = np.zeros(aug.n_spins)
    state = ZoomState(t=0, sigma=1.0, candidates=((mu0, d_train(mu0)),))
    trajectory: list[IterationRecord] = []
    for t in range(cfg.iterations):
        sigma = cfg.base**t
        pooled: dict[bytes, np.ndarray] = {}
        broken: list[float] = []
        for ci, (mu, _) in enumerate(state.candidates):
            problem = prune(effective_problem(cm, mu, sigma, lam=cfg.lam), cfg.cutoff_pct)
            if cfg.fixing:
                fixed, reduced = fix_variables(problem)
            else:
                fixed, reduced = {}, problem
            for k in range(sched.n_g_at(t)):
                if reduced.n_spins == 0:
                    states = [expand_solution(fixed, np.empty(0, dtype=np.int8),
                                              problem.n_spins)]
                    broken.append(0.0)
                else:
                    gauge = random_gauge(
                        reduced.n_spins, np.random.default_rng((cfg.seed, _K_GAUGE, t, ci, k))
                    )
                    res = _solve_backend(apply_gauge(reduced, gauge), cfg, t,
                                         seed=(cfg.seed, _K_SOLVE, t, ci, k))
                    broken.append(res.broken_chain_fraction)
                    d_win = sched.d_at(t)
                    if d_win is None:
                        d_win = 0.05 * abs(float(res.energies[0]))
                    states = [
                        expand_solution(fixed, ungauge(s, gauge), problem.n_spins)
                        for s in select_states(res, sched.n_e_at(t), d_win)
                    ]
                for si, s_full in enumerate(states):
                    rng_flip = np.random.default_rng((cfg.seed, _K_FLIP, t, ci, k, si))
                    s_rand = flip_step(
                        mu, zoom_update(mu, s_full, sigma), s_full, cm, sigma, t,
                        cfg.p_flip, cfg.q_flip, rng_flip, lam=cfg.lam,
                    )
                    mu_new = zoom_update(mu, s_rand, sigma)
                    pooled.setdefault(mu_new.tobytes(), mu_new)
        scored = sorted(
            ((d_train(mu_new), order, mu_new)
             for order, mu_new in enumerate(pooled.values())),
            key=lambda item: (item[0], item[1]),
        )
        best_d = scored[0][0]
        d_win = sched.d_at(t)
        if d_win is None:
            d_win = 0.05 * abs(best_d)
        retained = [(mu_new, d) for d, _, mu_new in scored if d <= best_d + d_win]
        retained = retained[: sched.n_e_at(t)]
        state = ZoomState(t=t + 1, sigma=cfg.base ** (t + 1), candidates=tuple(retained))
        trajectory.append(
            IterationRecord(
                t=t,
                sigma=sigma,
                train_distance=best_d,
                test_distance=d_test(state.mu),
                n_candidates=len(retained),
                broken_chain_fraction=float(np.mean(broken)) if broken else 0.0,
            )
        )
    return TrainedModel(
        mu=state.mu,
        delta=cfg.delta,
        offset_range=cfg.offset_range,
        pipeline=features,
        trajectory=tuple(trajectory),
        settings=cfg.settings_dict(),
    )
