"""Augmented classifier bank and the Ising problems it induces.

Every weak classifier is replaced by 2A+1 offset copies, so each variable
contributes a block of spins; the training sample then defines linear and
quadratic coupling sums from which the per-iteration problem fields and
couplers follow. Pruning, provably-sound variable fixing and gauge
relabelings operate on the resulting problems.

Sign convention: sgn(0) = +1 everywhere.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .errors import ConfigError, DataError
from .dataset import Dataset
from .features import WeakClassifierSet


def sign_pm1(x: np.ndarray) -> np.ndarray:
    """Elementwise sign with sgn(0) = +1, as int8 in {-1, +1}."""
    return np.where(np.asarray(x) >= 0, 1, -1).astype(np.int8)


# ---------------------------------------------------------------------------
# Augmentation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AugmentedClassifierSet:
    """Offset copies sgn(h_i + delta*l)/N of each weak classifier.

    Spins are laid out variable-major with the offset index l ascending from
    -offset_range to +offset_range, so spin I maps to (i, l) via
    I = i*(2A+1) + (l+A). Each copy takes values +-1/N with N the number of
    base variables.
    """

    base: WeakClassifierSet
    delta: float
    offset_range: int

    def __post_init__(self):
        if self.offset_range < 0:
            raise ConfigError("offset_range must be >= 0")
        if self.offset_range > 0 and not self.delta > 0:
            raise ConfigError("delta must be > 0 when offset_range > 0")

    @property
    def n_var(self) -> int:
        return self.base.n_classifiers

    @property
    def n_outcomes(self) -> int:
        return 2 * self.offset_range + 1

    @property
    def n_spins(self) -> int:
        return self.n_var * self.n_outcomes

    @property
    def offsets(self) -> np.ndarray:
        """delta*l for every spin index, layout-aligned."""
        ls = np.arange(-self.offset_range, self.offset_range + 1, dtype=np.float64)
        return np.tile(self.delta * ls, self.n_var)

    @property
    def var_index(self) -> np.ndarray:
        return np.repeat(np.arange(self.n_var), self.n_outcomes)

    def index_of(self, i: int, l: int) -> int:
        if not (0 <= i < self.n_var and -self.offset_range <= l <= self.offset_range):
            raise ConfigError("classifier index out of range")
        return i * self.n_outcomes + (l + self.offset_range)

    def pair_of(self, spin: int) -> tuple[int, int]:
        return divmod(spin, self.n_outcomes)[0], spin % self.n_outcomes - self.offset_range

    def signs_from_h(self, h_matrix: np.ndarray) -> np.ndarray:
        """(n_events, n_spins) matrix of sgn(h_i + delta*l) as int8."""
        h = np.asarray(h_matrix, dtype=np.float64)
        if h.ndim != 2 or h.shape[1] != self.n_var:
            raise DataError(f"expected (n, {self.n_var}) h matrix, got {h.shape}")
        return sign_pm1(h[:, self.var_index] + self.offsets[None, :])

    def classifier_values(self, h_matrix: np.ndarray) -> np.ndarray:
        return self.signs_from_h(h_matrix).astype(np.float64) / self.n_var

    def to_dict(self) -> dict:
        return {"delta": self.delta, "offset_range": self.offset_range,
                "base": self.base.to_dict()}

    @classmethod
    def from_dict(cls, doc: Mapping) -> "AugmentedClassifierSet":
        return cls(base=WeakClassifierSet.from_dict(doc["base"]),
                   delta=float(doc["delta"]), offset_range=int(doc["offset_range"]))


def augment(base: WeakClassifierSet, delta: float, offset_range: int) -> AugmentedClassifierSet:
    return AugmentedClassifierSet(base=base, delta=delta, offset_range=offset_range)


# ---------------------------------------------------------------------------
# Coupling sums
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CouplingMatrices:
    """Weighted training sums: tag_sums_I = sum_ev w*c_I*y and
    pair_sums_IJ = sum_ev w*c_I*c_J (symmetric, diagonal included)."""

    tag_sums: np.ndarray
    pair_sums: np.ndarray
    n_events: int
    sum_weights: float

    def __post_init__(self):
        self.tag_sums.setflags(write=False)
        self.pair_sums.setflags(write=False)

    @property
    def n_spins(self) -> int:
        return len(self.tag_sums)


def build_couplings_from_signs(
    signs: np.ndarray, tags: np.ndarray, weights: np.ndarray, n_var: int
) -> CouplingMatrices:
    """Coupling sums from a (n_events, n_spins) sign matrix."""
    c = signs.astype(np.float64) / n_var
    w = np.asarray(weights, dtype=np.float64)
    y = np.asarray(tags, dtype=np.float64)
    tag_sums = c.T @ (w * y)
    pair_sums = c.T @ (c * w[:, None])
    pair_sums = 0.5 * (pair_sums + pair_sums.T)  # exact symmetric fill
    return CouplingMatrices(
        tag_sums=tag_sums, pair_sums=pair_sums,
        n_events=len(w), sum_weights=float(w.sum()),
    )


def build_couplings(aug: AugmentedClassifierSet, train: Dataset) -> CouplingMatrices:
    """Coupling sums for a training sample, evaluating the base classifiers directly.

    When the classifier bank was fitted through a larger pipeline (derived
    columns, PCA), transform the sample first and use
    `build_couplings_from_signs` on the resulting h matrix.
    """
    if len(train) == 0:
        raise DataError("cannot build couplings from an empty sample")
    h = aug.base.evaluate_matrix(train.matrix(aug.base.var_names))
    return build_couplings_from_signs(aug.signs_from_h(h), train.tags, train.weights, aug.n_var)


# ---------------------------------------------------------------------------
# Ising problems
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class IsingProblem:
    """Fields h and upper-triangular couplers J of sum h_i s_i + sum_{i<j} J_ij s_i s_j."""

    h: np.ndarray
    j: Mapping[tuple[int, int], float]
    lam: float = 0.0
    n_spins: int = 0

    def __post_init__(self):
        h = np.asarray(self.h, dtype=np.float64)
        h.setflags(write=False)
        object.__setattr__(self, "h", h)
        n = self.n_spins or len(h)
        object.__setattr__(self, "n_spins", n)
        if len(h) != n:
            raise ConfigError("field vector length does not match n_spins")
        if not np.isfinite(h).all():
            raise ConfigError("fields must be finite")
        for (a, b), v in self.j.items():
            if not (0 <= a < b < n):
                raise ConfigError(f"coupler key ({a},{b}) must satisfy 0 <= i < j < n")
            if not math.isfinite(v):
                raise ConfigError(f"coupler ({a},{b}) is not finite")

    @property
    def n_couplers(self) -> int:
        return len(self.j)

    def dense_couplers(self) -> np.ndarray:
        """Symmetric coupler matrix with zero diagonal."""
        m = np.zeros((self.n_spins, self.n_spins))
        for (a, b), v in self.j.items():
            m[a, b] = m[b, a] = v
        return m

    def to_dict(self) -> dict:
        return {
            "n": self.n_spins,
            "h": [float(v) for v in self.h],
            "J": [[int(a), int(b), float(v)] for (a, b), v in sorted(self.j.items())],
            "lambda": self.lam,
        }

    @classmethod
    def from_dict(cls, doc: Mapping) -> "IsingProblem":
        return cls(
            h=np.asarray(doc["h"], dtype=np.float64),
            j={(int(a), int(b)): float(v) for a, b, v in doc.get("J", [])},
            lam=float(doc.get("lambda", 0.0)),
            n_spins=int(doc["n"]),
        )


def effective_problem(
    cm: CouplingMatrices,
    mu: np.ndarray,
    sigma: float,
    lam: float = 0.0,
    include_self_coupling: bool = True,
) -> IsingProblem:
    """Per-iteration problem at search center mu and width sigma.

    Fields are lam + sigma*(-tag_sums_I + sum_J mu_J pair_sums_IJ); the sum
    runs over all J including J = I unless `include_self_coupling` is False.
    The coupler of each unordered pair {I, J} is pair_sums_IJ * sigma**2, so
    the triangular energy matches the ordered double-sum form in which each
    pair appears twice with half this coefficient.
    """
    mu = np.asarray(mu, dtype=np.float64)
    if mu.shape != (cm.n_spins,):
        raise ConfigError(f"mu must have length {cm.n_spins}, got {mu.shape}")
    if not sigma > 0:
        raise ConfigError("sigma must be positive")
    pair = cm.pair_sums
    if not include_self_coupling:
        pair = pair - np.diag(np.diag(pair))
    h = lam + sigma * (-cm.tag_sums + pair @ mu)
    n = cm.n_spins
    iu, ju = np.triu_indices(n, k=1)
    vals = cm.pair_sums[iu, ju] * sigma * sigma
    j = {(int(a), int(b)): float(v) for a, b, v in zip(iu, ju, vals)}
    return IsingProblem(h=h, j=j, lam=lam, n_spins=n)


def energy(p: IsingProblem, spins: Sequence[int] | np.ndarray) -> float:
    """Exact double-precision energy of one spin configuration."""
    s = np.asarray(spins)
    if s.shape != (p.n_spins,):
        raise ConfigError(f"spin vector must have length {p.n_spins}")
    if not np.isin(s, (-1, 1)).all():
        raise ConfigError("spins must be +1 or -1")
    s = s.astype(np.float64)
    e = float(p.h @ s)
    for (a, b), v in p.j.items():
        e += v * s[a] * s[b]
    return e


def energies_batch(p: IsingProblem, spins: np.ndarray) -> np.ndarray:
    """Energies of a (n_configs, n_spins) batch of +-1 configurations."""
    s = np.asarray(spins, dtype=np.float64)
    e = s @ p.h
    if p.j:
        keys = np.array(sorted(p.j), dtype=np.int64)
        vals = np.array([p.j[(a, b)] for a, b in map(tuple, keys)])
        e = e + (s[:, keys[:, 0]] * s[:, keys[:, 1]]) @ vals
    return e


# ---------------------------------------------------------------------------
# Pruning
# ---------------------------------------------------------------------------


def prune(p: IsingProblem, cutoff_pct: float) -> IsingProblem:
    """Keep the ceil((1 - cutoff/100)*M) largest-magnitude couplers.

    Ties are broken by ascending (i, j) so nested cutoffs retain nested
    coupler sets. Fields are untouched.
    """
    if not 0.0 <= cutoff_pct <= 100.0:
        raise ConfigError("cutoff percentage must be in [0, 100]")
    m = p.n_couplers
    keep = math.ceil((1.0 - cutoff_pct / 100.0) * m)
    if keep >= m:
        return p
    ranked = sorted(p.j.items(), key=lambda kv: (-abs(kv[1]), kv[0]))
    kept = dict(sorted(ranked[:keep]))
    return IsingProblem(h=p.h, j=kept, lam=p.lam, n_spins=p.n_spins)


# ---------------------------------------------------------------------------
# Variable fixing
# ---------------------------------------------------------------------------


def fix_variables(p: IsingProblem) -> tuple[dict[int, int], IsingProblem]:
    """Iterated field-dominance fixing: any spin with |h_i| > sum_j |J_ij| is
    pinned to -sgn(h_i), folded into its neighbours' fields, and the rule is
    re-applied to a fixpoint. Every assignment holds in all ground states.

    The reduced problem re-indexes the surviving spins in ascending original
    order; `expand_solution` maps a reduced solution back.
    """
    n = p.n_spins
    h = p.h.astype(np.float64).copy()
    adj: dict[int, dict[int, float]] = {i: {} for i in range(n)}
    for (a, b), v in p.j.items():
        adj[a][b] = v
        adj[b][a] = v
    alive = set(range(n))
    assignments: dict[int, int] = {}
    frontier = set(alive)
    while frontier:
        next_frontier = set()
        for i in sorted(frontier):
            if i not in alive:
                continue
            strength = sum(abs(v) for v in adj[i].values())
            if abs(h[i]) > strength:
                s = -1 if h[i] >= 0 else 1  # -sgn(h_i), sgn(0) = +1
                assignments[i] = s
                alive.discard(i)
                for nb, v in adj[i].items():
                    h[nb] += v * s
                    del adj[nb][i]
                    next_frontier.add(nb)
                adj[i] = {}
        frontier = next_frontier
    keep = sorted(alive)
    remap = {old: new for new, old in enumerate(keep)}
    reduced = IsingProblem(
        h=h[keep],
        j={(remap[a], remap[b]): v
           for (a, b), v in p.j.items() if a in alive and b in alive},
        lam=p.lam,
        n_spins=len(keep),
    )
    return assignments, reduced


def expand_solution(
    assignments: Mapping[int, int], reduced_spins: np.ndarray, n_spins: int
) -> np.ndarray:
    """Merge fixed assignments with a reduced-problem solution into a full vector."""
    out = np.zeros(n_spins, dtype=np.int8)
    for i, s in assignments.items():
        out[i] = s
    free = [i for i in range(n_spins) if i not in assignments]
    if len(free) != len(reduced_spins):
        raise ConfigError("reduced solution length does not match the fixing")
    out[free] = reduced_spins
    return out


# ---------------------------------------------------------------------------
# Gauges
# ---------------------------------------------------------------------------


def random_gauge(n_spins: int, rng: np.random.Generator) -> np.ndarray:
    return (rng.integers(0, 2, size=n_spins) * 2 - 1).astype(np.int8)


def apply_gauge(p: IsingProblem, gauge: np.ndarray) -> IsingProblem:
    """Relabeled problem with h'_i = g_i h_i and J'_ij = g_i g_j J_ij."""
    g = np.asarray(gauge)
    if g.shape != (p.n_spins,) or not np.isin(g, (-1, 1)).all():
        raise ConfigError("gauge must be a +-1 vector matching the problem size")
    gf = g.astype(np.float64)
    return IsingProblem(
        h=p.h * gf,
        j={(a, b): float(v * gf[a] * gf[b]) for (a, b), v in p.j.items()},
        lam=p.lam,
        n_spins=p.n_spins,
    )


def ungauge(spins: np.ndarray, gauge: np.ndarray) -> np.ndarray:
    """Map a gauged-problem solution back: s_i -> g_i s_i."""
    g = np.asarray(gauge)
    s = np.asarray(spins)
    if g.shape != s.shape:
        raise ConfigError("gauge and spin vector lengths differ")
    return (s * g).astype(s.dtype)
