"""Shared test helpers: independent oracles and random-instance builders."""

from __future__ import annotations

import itertools

import numpy as np
import pytest

from qamlz import IsingProblem


def random_problem(rng: np.random.Generator, n: int, coupler_density: float = 1.0,
                   scale: float = 1.0) -> IsingProblem:
    """Random fields and couplers, uniform in [-scale, scale]."""
    h = rng.uniform(-scale, scale, size=n)
    j = {}
    for a in range(n):
        for b in range(a + 1, n):
            if rng.random() < coupler_density:
                j[(a, b)] = float(rng.uniform(-scale, scale))
    return IsingProblem(h=h, j=j, n_spins=n)


def brute_force_energy(problem: IsingProblem, spins) -> float:
    """Independent scalar evaluation of sum h_i s_i + sum_{i<j} J_ij s_i s_j."""
    total = 0.0
    for i in range(problem.n_spins):
        total += float(problem.h[i]) * spins[i]
    for (a, b), v in problem.j.items():
        total += v * spins[a] * spins[b]
    return total


def brute_force_ground_states(problem: IsingProblem, tol: float = 1e-9):
    """All minimizing configurations, by exhaustive itertools enumeration."""
    best = None
    states = []
    for cfg in itertools.product((-1, 1), repeat=problem.n_spins):
        e = brute_force_energy(problem, cfg)
        if best is None or e < best - tol:
            best, states = e, [cfg]
        elif abs(e - best) <= tol:
            states.append(cfg)
    return best, states


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
