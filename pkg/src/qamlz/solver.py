"""Ground-state search backends.

`solve_exact` enumerates small problems and is the oracle; `solve_sa` runs
independent Metropolis anneals down a geometric temperature ladder (the
classical stand-in for hardware annealing, with the anneal time mapped to a
sweep count); `solve_chain_emulated` stretches each logical spin into a
ferromagnetic chain and decodes by majority vote, reproducing the breakage
phenomenology of hardware embeddings.

All solvers are pure functions of (problem, schedule, seed): repeated calls
give identical results, and the read batch advances on one seed-keyed stream
so replay does not depend on execution order.
"""

from __future__ import annotations

import json
import subprocess
import time
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .errors import ConfigError, DataError
from .ising import IsingProblem, energies_batch

EXACT_SPIN_LIMIT = 24
_ENUM_CHUNK = 1 << 20


@dataclass(frozen=True)
class AnnealSchedule:
    """Sampling protocol: read count, sweep ladder, and the per-iteration
    gauge counts n_g, excited-state caps n_e and energy windows d used by the
    training loop. Schedules shorter than the iteration count extend with
    their last entry; a window of None means 5% of the best energy magnitude.
    """

    n_reads: int = 200
    sweeps: int = 1000
    t_hot: float | None = None
    t_cold: float = 1e-2
    n_g: tuple[int, ...] = (50, 10, 10, 10, 10, 10, 10, 10)
    n_e: tuple[int, ...] = (1, 1, 1, 1, 1, 1, 1, 1)
    d: tuple[float | None, ...] = (None,) * 8
    seed: int = 0

    def __post_init__(self):
        if self.n_reads < 1:
            raise ConfigError("n_reads must be >= 1")
        if self.sweeps < 2:
            raise ConfigError("sweeps must be >= 2 for a decreasing ladder")
        if not self.t_cold > 0:
            raise ConfigError("t_cold must be positive")
        if self.t_hot is not None and not self.t_hot > self.t_cold:
            raise ConfigError("t_hot must exceed t_cold")
        if not self.n_g or any(g < 1 for g in self.n_g):
            raise ConfigError("gauge counts must be >= 1")
        if not self.n_e or any(e < 1 for e in self.n_e):
            raise ConfigError("excited-state caps must be >= 1")

    def n_g_at(self, t: int) -> int:
        return self.n_g[min(t, len(self.n_g) - 1)]

    def n_e_at(self, t: int) -> int:
        return self.n_e[min(t, len(self.n_e) - 1)]

    def d_at(self, t: int) -> float | None:
        if not self.d:
            return None
        return self.d[min(t, len(self.d) - 1)]

    def ladder(self, p: IsingProblem) -> np.ndarray:
        """Strictly decreasing geometric temperature ladder, hot end derived
        from the problem scale when not set explicitly."""
        hot = self.t_hot
        if hot is None:
            scale = float(np.abs(p.h).max(initial=0.0))
            row = np.zeros(p.n_spins)
            for (a, b), v in p.j.items():
                row[a] += abs(v)
                row[b] += abs(v)
            scale = float(max(scale, (np.abs(p.h) + row).max(initial=0.0)))
            hot = 2.0 * scale if scale > 0 else 1.0
            hot = max(hot, self.t_cold * 10.0)
        ratio = (self.t_cold / hot) ** (1.0 / (self.sweeps - 1))
        return hot * ratio ** np.arange(self.sweeps)


@dataclass(frozen=True)
class SolverResult:
    """Energy-sorted samples plus chain-breakage bookkeeping."""

    spins: np.ndarray     # (n_samples, n_spins), entries +-1
    energies: np.ndarray  # ascending
    broken_chain_fraction: float = 0.0
    solver: str = ""
    elapsed_seconds: float = 0.0

    def __post_init__(self):
        self.spins.setflags(write=False)
        self.energies.setflags(write=False)

    @property
    def samples(self) -> list[tuple[np.ndarray, float]]:
        return [(self.spins[i], float(self.energies[i])) for i in range(len(self.energies))]

    @property
    def ground(self) -> tuple[np.ndarray, float]:
        return self.spins[0], float(self.energies[0])


def _sorted_result(spins: np.ndarray, energies: np.ndarray, **kw) -> SolverResult:
    order = np.argsort(energies, kind="stable")
    return SolverResult(spins=np.ascontiguousarray(spins[order]),
                        energies=energies[order], **kw)


# ---------------------------------------------------------------------------
# Exact enumeration
# ---------------------------------------------------------------------------


def solve_exact(p: IsingProblem, keep: int = 32) -> SolverResult:
    """Enumerate all 2**n configurations (n <= 24) and return the lowest
    `keep` states of the spectrum, energy-ascending with index-order ties."""
    n = p.n_spins
    if n > EXACT_SPIN_LIMIT:
        raise ConfigError(
            f"exact solver supports at most {EXACT_SPIN_LIMIT} spins, got {n}"
        )
    t0 = time.perf_counter()
    total = 1 << n
    keep = min(keep, total)
    bits = np.arange(n, dtype=np.uint32)
    best_e = np.empty(0)
    best_idx = np.empty(0, dtype=np.int64)
    for start in range(0, total, _ENUM_CHUNK):
        idx = np.arange(start, min(start + _ENUM_CHUNK, total), dtype=np.int64)
        spins = (((idx[:, None] >> bits) & 1) * 2 - 1).astype(np.int8)
        e = energies_batch(p, spins)
        cat_e = np.concatenate([best_e, e])
        cat_i = np.concatenate([best_idx, idx])
        if len(cat_e) > keep:
            part = np.argpartition(cat_e, keep - 1)[:keep]
            part = part[np.lexsort((cat_i[part], cat_e[part]))]
        else:
            part = np.lexsort((cat_i, cat_e))
        best_e, best_idx = cat_e[part], cat_i[part]
    spins = (((best_idx[:, None] >> bits) & 1) * 2 - 1).astype(np.int8)
    return SolverResult(
        spins=spins, energies=best_e, broken_chain_fraction=0.0,
        solver="exact", elapsed_seconds=time.perf_counter() - t0,
    )


# ---------------------------------------------------------------------------
# Simulated annealing
# ---------------------------------------------------------------------------


def solve_sa(
    p: IsingProblem,
    sched: AnnealSchedule,
    seed: int | tuple | None = None,
    init: np.ndarray | None = None,
) -> SolverResult:
    """Metropolis single-spin-flip annealing, `n_reads` independent restarts.

    Spins are visited in index order within each sweep; one uniform per
    (spin, read) is drawn per sweep regardless of acceptance so the stream is
    state-independent. `init` overrides the seeded +-1 starting states (shape
    (n_reads, n_spins)); acceptance draws are unaffected, which lets callers
    pair runs across a gauge relabeling.
    """
    if seed is None:
        seed = sched.seed
    t0 = time.perf_counter()
    n = p.n_spins
    rng_init = np.random.default_rng((0, *_as_key(seed)))
    rng_sweep = np.random.default_rng((1, *_as_key(seed)))
    if init is None:
        state = (rng_init.integers(0, 2, size=(sched.n_reads, n)) * 2 - 1).astype(np.float64)
    else:
        init = np.asarray(init)
        if init.shape != (sched.n_reads, n) or not np.isin(init, (-1, 1)).all():
            raise ConfigError("init must be a +-1 array of shape (n_reads, n_spins)")
        state = init.astype(np.float64)
    j_sym = p.dense_couplers()
    h = p.h
    # local coupling fields, maintained incrementally: a flip of spin i in a
    # read only shifts that read's fields by -2*s_i*J[i,:], so cold sweeps
    # (few accepted flips) cost O(n_reads) per spin instead of a full matvec
    fields = state @ j_sym
    for temp in sched.ladder(p):
        uniforms = rng_sweep.random((n, sched.n_reads))
        for i in range(n):
            delta = -2.0 * state[:, i] * (fields[:, i] + h[i])
            accept = (delta <= 0.0) | (uniforms[i] < np.exp(-np.maximum(delta, 0.0) / temp))
            if accept.any():
                fields[accept] -= (2.0 * state[accept, i])[:, None] * j_sym[i]
                state[accept, i] *= -1.0
    spins = state.astype(np.int8)
    energies = energies_batch(p, spins)
    return _sorted_result(spins, energies, broken_chain_fraction=0.0, solver="sa",
                          elapsed_seconds=time.perf_counter() - t0)


def _as_key(seed: int | tuple) -> tuple:
    return tuple(seed) if isinstance(seed, tuple) else (seed,)


# ---------------------------------------------------------------------------
# Chain emulation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ChainConfig:
    """Chain emulation knobs: physical spins per logical spin and the
    intra-chain coupling strength relative to the largest problem coupler.
    An optional per-iteration strength schedule overrides `strength`."""

    length: int = 4
    strength: float = 1.0
    strength_schedule: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.length < 1:
            raise ConfigError("chain length must be >= 1")
        if not self.strength > 0:
            raise ConfigError("chain strength must be positive")
        if self.strength_schedule is not None and any(
            not r > 0 for r in self.strength_schedule
        ):
            raise ConfigError("chain strength schedule entries must be positive")

    def strength_at(self, t: int) -> float:
        if self.strength_schedule:
            return self.strength_schedule[min(t, len(self.strength_schedule) - 1)]
        return self.strength


def expand_chains(p: IsingProblem, cc: ChainConfig, strength: float | None = None) -> IsingProblem:
    """Physical problem: each logical spin becomes a ferromagnetic chain of
    `length` spins sharing the field evenly; logical couplers attach between
    the last spin of the lower chain and the first spin of the upper chain."""
    length = cc.length
    r = strength if strength is not None else cc.strength
    max_j = max((abs(v) for v in p.j.values()), default=0.0)
    chain_coupling = -r * max_j  # negative = ferromagnetic, aligned spins favoured
    n_phys = p.n_spins * length
    h = np.repeat(p.h / length, length)
    j: dict[tuple[int, int], float] = {}
    if length > 1 and chain_coupling != 0.0:
        for i in range(p.n_spins):
            base = i * length
            for k in range(length - 1):
                j[(base + k, base + k + 1)] = chain_coupling
    for (a, b), v in p.j.items():
        j[(a * length + length - 1, b * length)] = v
    return IsingProblem(h=h, j=j, lam=p.lam, n_spins=n_phys)


def decode_chains(
    physical: np.ndarray, n_logical: int, length: int, rng: np.random.Generator
) -> tuple[np.ndarray, float]:
    """Majority-vote each chain of a (n_samples, n_logical*length) readout.

    Even splits are broken by one coin per tie, drawn in row-major (sample,
    chain) order. Returns the logical spins and the fraction of chains whose
    physical spins disagree.
    """
    blocks = np.asarray(physical).reshape(-1, n_logical, length)
    sums = blocks.sum(axis=2, dtype=np.int64)
    logical = np.where(sums > 0, 1, -1).astype(np.int8)
    for a, b in np.argwhere(sums == 0):
        logical[a, b] = 1 if rng.random() < 0.5 else -1
    return logical, float((np.abs(sums) < length).mean())


def solve_chain_emulated(
    p: IsingProblem,
    cc: ChainConfig,
    sched: AnnealSchedule,
    seed: int | tuple | None = None,
    strength: float | None = None,
) -> SolverResult:
    """Anneal the chain-expanded problem and decode each chain by majority
    vote; even splits are broken by a seeded coin. Reported energies are those
    of the decoded logical configurations under the logical problem, and
    broken_chain_fraction counts chains whose physical spins disagree, over
    all reads. With length 1 this is sample-for-sample identical to solve_sa.
    """
    if seed is None:
        seed = sched.seed
    t0 = time.perf_counter()
    phys = expand_chains(p, cc, strength)
    res = solve_sa(phys, sched, seed=seed)
    if cc.length == 1:
        return SolverResult(
            spins=res.spins, energies=res.energies, broken_chain_fraction=0.0,
            solver="chain", elapsed_seconds=time.perf_counter() - t0,
        )
    rng_tie = np.random.default_rng((2, *_as_key(seed)))
    logical, broken_fraction = decode_chains(res.spins, p.n_spins, cc.length, rng_tie)
    energies = energies_batch(p, logical)
    return _sorted_result(
        logical, energies,
        broken_chain_fraction=broken_fraction,
        solver="chain", elapsed_seconds=time.perf_counter() - t0,
    )


# ---------------------------------------------------------------------------
# External solver escape hatch
# ---------------------------------------------------------------------------


def parse_solver_reply(p: IsingProblem, doc: Mapping) -> SolverResult:
    """Validate a reply of the form {"samples": [{"spins": [+-1...], "energy": f}]}.

    Reported energies must match the problem's own evaluation to 1e-9. This is
    the wire format a hardware- or service-backed solver must speak.
    """
    samples = doc.get("samples")
    if not isinstance(samples, list) or not samples:
        raise DataError("solver reply must carry a non-empty `samples` list")
    spins = np.empty((len(samples), p.n_spins), dtype=np.int8)
    for k, rec in enumerate(samples):
        s = np.asarray(rec.get("spins", ()), dtype=np.int64)
        if s.shape != (p.n_spins,) or not np.isin(s, (-1, 1)).all():
            raise DataError(f"sample {k}: spins must be a +-1 vector of length {p.n_spins}")
        spins[k] = s
        reported = float(rec["energy"])
        actual = float(energies_batch(p, s[None, :])[0])
        if abs(reported - actual) > 1e-9:
            raise DataError(
                f"sample {k}: reported energy {reported} is not the problem energy {actual}"
            )
    energies = energies_batch(p, spins)
    return _sorted_result(spins, energies,
                          broken_chain_fraction=float(doc.get("broken_chain_fraction", 0.0)),
                          solver="external")


def solve_external(p: IsingProblem, command: Sequence[str],
                   timeout: float | None = None) -> SolverResult:
    """Hand the problem JSON to an external command on stdin and parse its reply.

    The command receives {n, h, J, lambda} and must print the sample reply
    documented in `parse_solver_reply`; this is the extension point for a real
    annealer client.
    """
    t0 = time.perf_counter()
    try:
        proc = subprocess.run(
            list(command), input=json.dumps(p.to_dict()), capture_output=True,
            text=True, timeout=timeout, check=True,
        )
    except (OSError, subprocess.SubprocessError) as exc:
        raise DataError(f"external solver failed: {exc}") from exc
    try:
        doc = json.loads(proc.stdout)
    except json.JSONDecodeError as exc:
        raise DataError(f"external solver reply is not valid JSON: {exc}") from exc
    res = parse_solver_reply(p, doc)
    return SolverResult(
        spins=res.spins, energies=res.energies,
        broken_chain_fraction=res.broken_chain_fraction,
        solver="external", elapsed_seconds=time.perf_counter() - t0,
    )


# ---------------------------------------------------------------------------
# State selection
# ---------------------------------------------------------------------------


def select_states(res: SolverResult, n_e: int, d: float) -> list[np.ndarray]:
    """At most n_e distinct configurations within d of the best energy, best first."""
    if len(res.energies) == 0:
        raise ConfigError("solver result has no samples")
    if n_e < 1:
        raise ConfigError("n_e must be >= 1")
    cutoff = float(res.energies[0]) + max(d, 0.0)
    out: list[np.ndarray] = []
    seen: set[bytes] = set()
    for i in range(len(res.energies)):
        if res.energies[i] > cutoff:
            break
        key = res.spins[i].tobytes()
        if key in seen:
            continue
        seen.add(key)
        out.append(res.spins[i])
        if len(out) == n_e:
            break
    return out
