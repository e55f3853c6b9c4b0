"""Event data model, synthetic generation, CSV ingestion, preselection and sample splitting.

Events are weighted, tagged feature vectors. Datasets are stored column-wise
(numpy arrays) for speed but iterate as `Event` objects. All containers are
immutable after construction; generation derives one RNG stream per event from
(seed, event index) so results are independent of evaluation order.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Iterator, Mapping, Sequence

import numpy as np

from .errors import ConfigError, DataError

PROCESSES = ("signal", "wjets", "ttbar", "other")

#: Discriminating variables of the reference search, in canonical order.
BASE_VARIABLES = (
    "pt_lep", "eta_lep", "q_lep", "met", "mt", "n_jets",
    "pt_jet1", "ht", "disc_b", "n_b", "pt_b", "dr_lb",
)

#: Extra columns consumed only by the default preselection.
PRESELECTION_VARIABLES = ("eta_jet1", "is_muon", "pt_lep2", "pt_jet2", "dphi_j1j2")

_COMPARATORS: dict[str, Callable[[np.ndarray, float], np.ndarray]] = {
    "<": lambda v, t: v < t,
    ">": lambda v, t: v > t,
    "<=": lambda v, t: v <= t,
    ">=": lambda v, t: v >= t,
    "abs<": lambda v, t: np.abs(v) < t,
}


@dataclass(frozen=True)
class Event:
    """One weighted, tagged event. tag is +1 (signal) or -1 (background)."""

    values: Mapping[str, float]
    tag: int
    weight: float
    process: str

    def __post_init__(self):
        if self.tag not in (-1, 1):
            raise DataError(f"event tag must be +1 or -1, got {self.tag}")
        if not self.weight >= 0.0:
            raise DataError(f"event weight must be >= 0, got {self.weight}")
        if self.process not in PROCESSES:
            raise DataError(f"unknown process {self.process!r}; expected one of {PROCESSES}")


class Dataset:
    """Ordered, immutable collection of events over a fixed variable schema."""

    __slots__ = ("schema", "values", "tags", "weights", "processes")

    def __init__(
        self,
        schema: Sequence[str],
        values: np.ndarray,
        tags: np.ndarray,
        weights: np.ndarray,
        processes: Sequence[str],
    ):
        values = np.ascontiguousarray(np.asarray(values, dtype=np.float64))
        tags = np.asarray(tags, dtype=np.int8)
        weights = np.asarray(weights, dtype=np.float64)
        processes_arr = np.asarray(processes, dtype=object)
        n = values.shape[0] if values.ndim == 2 else 0
        if values.ndim != 2 or values.shape[1] != len(schema):
            raise DataError(
                f"values must be (n, {len(schema)}) for schema of size {len(schema)}"
            )
        if not (len(tags) == len(weights) == len(processes_arr) == n):
            raise DataError("tags/weights/processes length mismatch")
        if n and not np.isin(tags, (-1, 1)).all():
            raise DataError("tags must be +1 or -1")
        if n and not (weights >= 0).all():
            raise DataError("weights must be non-negative")
        if n and not np.isfinite(values).all():
            raise DataError("event values must be finite")
        bad = set(processes_arr) - set(PROCESSES)
        if bad:
            raise DataError(f"unknown processes {sorted(bad)}; expected subset of {PROCESSES}")
        for arr in (values, tags, weights, processes_arr):
            arr.setflags(write=False)
        object.__setattr__(self, "schema", tuple(schema))
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "tags", tags)
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "processes", processes_arr)

    def __setattr__(self, name, value):  # immutable
        raise AttributeError("Dataset is immutable")

    def __reduce__(self):
        return (
            Dataset,
            (self.schema, np.asarray(self.values), np.asarray(self.tags),
             np.asarray(self.weights), list(self.processes)),
        )

    def __len__(self) -> int:
        return self.values.shape[0]

    def __iter__(self) -> Iterator[Event]:
        for i in range(len(self)):
            yield self[i]

    def __getitem__(self, i: int) -> Event:
        return Event(
            values=dict(zip(self.schema, self.values[i])),
            tag=int(self.tags[i]),
            weight=float(self.weights[i]),
            process=str(self.processes[i]),
        )

    def column(self, name: str) -> np.ndarray:
        try:
            j = self.schema.index(name)
        except ValueError:
            raise DataError(f"variable {name!r} not in schema") from None
        return self.values[:, j]

    def matrix(self, names: Sequence[str]) -> np.ndarray:
        """Column-ordered value matrix for the requested variables."""
        idx = []
        for name in names:
            if name not in self.schema:
                raise DataError(f"variable {name!r} not in schema")
            idx.append(self.schema.index(name))
        return self.values[:, idx]

    def select(self, mask_or_indices) -> "Dataset":
        sel = np.asarray(mask_or_indices)
        return Dataset(
            self.schema,
            self.values[sel],
            self.tags[sel],
            self.weights[sel],
            self.processes[sel],
        )

    def with_columns(self, names: Sequence[str], columns: np.ndarray) -> "Dataset":
        """Extend the schema with new columns (shape (n, len(names)))."""
        columns = np.asarray(columns, dtype=np.float64)
        if columns.shape != (len(self), len(names)):
            raise DataError("new column block has wrong shape")
        dup = set(names) & set(self.schema)
        if dup:
            raise DataError(f"columns already present: {sorted(dup)}")
        return Dataset(
            self.schema + tuple(names),
            np.hstack([self.values, columns]),
            self.tags,
            self.weights,
            self.processes,
        )

    @classmethod
    def from_events(cls, schema: Sequence[str], events: Iterable[Event]) -> "Dataset":
        events = list(events)
        values = np.empty((len(events), len(schema)), dtype=np.float64)
        tags = np.empty(len(events), dtype=np.int8)
        weights = np.empty(len(events), dtype=np.float64)
        processes = []
        for i, ev in enumerate(events):
            missing = [v for v in schema if v not in ev.values]
            if missing:
                raise DataError(f"event {i} missing variables {missing}")
            values[i] = [ev.values[v] for v in schema]
            tags[i] = ev.tag
            weights[i] = ev.weight
            processes.append(ev.process)
        return cls(schema, values, tags, weights, processes)

    # -- CSV round trip ------------------------------------------------

    def to_csv(self, path: str | Path | None = None) -> str | None:
        """Write `tag,weight,process,<schema...>` rows; returns the text when path is None."""
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(("tag", "weight", "process") + self.schema)
        for i in range(len(self)):
            writer.writerow(
                [int(self.tags[i]), repr(float(self.weights[i])), str(self.processes[i])]
                + [repr(float(v)) for v in self.values[i]]
            )
        text = buf.getvalue()
        if path is None:
            return text
        Path(path).write_text(text, encoding="utf-8")
        return None


def load_events(path: str | Path, schema: Sequence[str]) -> Dataset:
    """Parse a CSV event file.

    The header must name a superset of `schema` plus `tag`, `weight` and
    `process`; unknown columns are ignored. Rows are kept in file order.
    Parse failures name the offending 1-based data row and column.
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"event file not found: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file, expected a header row") from None
        header = [h.strip() for h in header]
        missing = [c for c in ("tag", "weight", "process", *schema) if c not in header]
        if missing:
            raise DataError(f"{path}: missing required columns {missing}")
        col = {name: header.index(name) for name in header}
        rows_v, rows_t, rows_w, rows_p = [], [], [], []
        for r, row in enumerate(reader, start=1):
            if not row:
                continue
            if len(row) < len(header):
                raise DataError(
                    f"{path}: row {r} has {len(row)} cells, header has {len(header)}"
                )

            def _num(name: str) -> float:
                cell = row[col[name]]
                try:
                    return float(cell)
                except ValueError:
                    raise DataError(
                        f"{path}: non-numeric value {cell!r} at row {r}, column {name!r}"
                    ) from None

            tag = _num("tag")
            if tag not in (-1.0, 1.0):
                raise DataError(f"{path}: tag must be +1 or -1 at row {r}, got {row[col['tag']]!r}")
            weight = _num("weight")
            if weight < 0:
                raise DataError(f"{path}: negative weight at row {r}")
            process = row[col["process"]].strip()
            if process not in PROCESSES:
                raise DataError(
                    f"{path}: unknown process {process!r} at row {r}; expected one of {PROCESSES}"
                )
            rows_v.append([_num(v) for v in schema])
            rows_t.append(int(tag))
            rows_w.append(weight)
            rows_p.append(process)
    values = np.array(rows_v, dtype=np.float64).reshape(len(rows_t), len(schema))
    return Dataset(schema, values, rows_t, rows_w, rows_p)


# ---------------------------------------------------------------------------
# Synthetic generation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ProcessModel:
    """Truncated multivariate Gaussian for one process, over the spec schema."""

    mean: tuple[float, ...]
    cov: tuple[tuple[float, ...], ...]

    def factor(self) -> np.ndarray:
        """PSD square root of the covariance (eigen factor, deterministic)."""
        cov = np.asarray(self.cov, dtype=np.float64)
        w, v = np.linalg.eigh(cov)
        return v * np.sqrt(np.clip(w, 0.0, None))


@dataclass(frozen=True)
class GeneratorSpec:
    """Configuration of the synthetic event generator.

    `processes` must contain 'signal'; every other entry is a background
    process drawn with probability (1 - signal_fraction) * background_fractions[name].
    Total yields s_tot / b_tot are spread uniformly over the generated events
    of each class. `bounds` truncates listed variables (rejection with a
    capped retry count, then clipping); `integer_variables` are rounded after
    truncation.
    """

    schema: tuple[str, ...]
    processes: Mapping[str, ProcessModel]
    signal_fraction: float
    background_fractions: Mapping[str, float]
    s_tot: float
    b_tot: float
    bounds: Mapping[str, tuple[float | None, float | None]] = field(default_factory=dict)
    integer_variables: tuple[str, ...] = ()

    def __post_init__(self):
        k = len(self.schema)
        if "signal" not in self.processes:
            raise ConfigError("generator spec needs a 'signal' process")
        for name, pm in self.processes.items():
            if name not in PROCESSES:
                raise ConfigError(f"unknown process {name!r}")
            mean = np.asarray(pm.mean, dtype=np.float64)
            cov = np.asarray(pm.cov, dtype=np.float64)
            if mean.shape != (k,) or cov.shape != (k, k):
                raise ConfigError(f"process {name!r}: mean/cov shape does not match schema")
            if not np.allclose(cov, cov.T, atol=1e-12):
                raise ConfigError(f"process {name!r}: covariance not symmetric")
            eigmin = float(np.linalg.eigvalsh(cov).min())
            if eigmin < -1e-9 * max(1.0, float(np.abs(cov).max())):
                raise ConfigError(f"process {name!r}: covariance not positive semi-definite")
        if not 0.0 < self.signal_fraction < 1.0:
            raise ConfigError("signal_fraction must be in (0, 1); a zero-probability class is not generable")
        bg = {n: f for n, f in self.background_fractions.items()}
        if set(bg) - (set(self.processes) - {"signal"}):
            raise ConfigError("background_fractions names an unknown process")
        if any(f < 0 for f in bg.values()) or abs(sum(bg.values()) - 1.0) > 1e-9:
            raise ConfigError("background_fractions must be non-negative and sum to 1")
        for v in self.bounds:
            if v not in self.schema:
                raise ConfigError(f"bound on unknown variable {v!r}")
        for v in self.integer_variables:
            if v not in self.schema:
                raise ConfigError(f"integer variable {v!r} not in schema")

    # -- JSON mirror ----------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "schema": list(self.schema),
            "processes": {
                n: {"mean": list(pm.mean), "cov": [list(r) for r in pm.cov]}
                for n, pm in self.processes.items()
            },
            "signal_fraction": self.signal_fraction,
            "background_fractions": dict(self.background_fractions),
            "s_tot": self.s_tot,
            "b_tot": self.b_tot,
            "bounds": {v: list(b) for v, b in self.bounds.items()},
            "integer_variables": list(self.integer_variables),
        }

    @classmethod
    def from_dict(cls, doc: Mapping) -> "GeneratorSpec":
        try:
            return cls(
                schema=tuple(doc["schema"]),
                processes={
                    n: ProcessModel(tuple(p["mean"]), tuple(map(tuple, p["cov"])))
                    for n, p in doc["processes"].items()
                },
                signal_fraction=float(doc["signal_fraction"]),
                background_fractions={n: float(f) for n, f in doc["background_fractions"].items()},
                s_tot=float(doc["s_tot"]),
                b_tot=float(doc["b_tot"]),
                bounds={v: (b[0], b[1]) for v, b in doc.get("bounds", {}).items()},
                integer_variables=tuple(doc.get("integer_variables", ())),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"bad generator spec: {exc}") from exc

    @classmethod
    def from_json(cls, path: str | Path) -> "GeneratorSpec":
        try:
            doc = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise DataError(f"cannot read generator spec {path}: {exc}") from exc
        return cls.from_dict(doc)


_MAX_TRUNCATION_TRIES = 100


def generate_synthetic(spec: GeneratorSpec, n_events: int, seed: int) -> Dataset:
    """Draw `n_events` events; deterministic and schedule-independent for a fixed seed.

    Class and process are sampled per event; per-class weights are set after
    the fact so signal weights sum to s_tot and background weights to b_tot.
    """
    if n_events <= 0:
        raise ConfigError("n_events must be positive")
    names = list(spec.processes)
    means = {n: np.asarray(pm.mean, dtype=np.float64) for n, pm in spec.processes.items()}
    factors = {n: pm.factor() for n, pm in spec.processes.items()}
    bg_names = [n for n in names if n != "signal"]
    bg_cum = np.cumsum([spec.background_fractions.get(n, 0.0) for n in bg_names])
    bounded = [
        (spec.schema.index(v), lo if lo is not None else -np.inf, hi if hi is not None else np.inf)
        for v, (lo, hi) in spec.bounds.items()
    ]
    int_idx = [spec.schema.index(v) for v in spec.integer_variables]
    k = len(spec.schema)

    values = np.empty((n_events, k), dtype=np.float64)
    tags = np.empty(n_events, dtype=np.int8)
    processes = []
    for i in range(n_events):
        rng = np.random.default_rng((seed, i))
        if rng.random() < spec.signal_fraction:
            proc = "signal"
            tags[i] = 1
        else:
            proc = bg_names[int(np.searchsorted(bg_cum, rng.random(), side="right"))]
            tags[i] = -1
        mean, fac = means[proc], factors[proc]
        x = mean + fac @ rng.standard_normal(k)
        for _ in range(_MAX_TRUNCATION_TRIES):
            if all(lo <= x[j] <= hi for j, lo, hi in bounded):
                break
            x = mean + fac @ rng.standard_normal(k)
        for j, lo, hi in bounded:
            x[j] = min(max(x[j], lo), hi)
        for j in int_idx:
            x[j] = np.rint(x[j])
        for j, lo, hi in bounded:  # rounding may step outside a tight bound
            x[j] = min(max(x[j], lo), hi)
        values[i] = x
        processes.append(proc)

    n_sig = int((tags == 1).sum())
    n_bg = n_events - n_sig
    if n_sig == 0 or n_bg == 0:
        raise DataError(
            f"generated sample has an empty class (signal={n_sig}, background={n_bg}); "
            "increase n_events"
        )
    weights = np.where(tags == 1, spec.s_tot / n_sig, spec.b_tot / n_bg)
    return Dataset(spec.schema, values, tags, weights, processes)


# ---------------------------------------------------------------------------
# Preselection
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Cut:
    variable: str
    comparator: str
    threshold: float

    def __post_init__(self):
        if self.comparator not in _COMPARATORS:
            raise ConfigError(f"unknown comparator {self.comparator!r}")
        if not np.isfinite(self.threshold):
            raise ConfigError("cut threshold must be finite")

    def mask(self, d: Dataset) -> np.ndarray:
        return _COMPARATORS[self.comparator](d.column(self.variable), self.threshold)


@dataclass(frozen=True)
class ConditionalCut:
    """Apply `then` only to events passing `condition`; others pass unconditionally."""

    condition: Cut
    then: Cut

    def mask(self, d: Dataset) -> np.ndarray:
        return ~self.condition.mask(d) | self.then.mask(d)


@dataclass(frozen=True)
class CutSet:
    cuts: tuple[Cut, ...] = ()
    conditional_cuts: tuple[ConditionalCut, ...] = ()

    def variables(self) -> tuple[str, ...]:
        out = [c.variable for c in self.cuts]
        for cc in self.conditional_cuts:
            out += [cc.condition.variable, cc.then.variable]
        return tuple(dict.fromkeys(out))

    def mask(self, d: Dataset) -> np.ndarray:
        keep = np.ones(len(d), dtype=bool)
        for c in self.cuts:
            keep &= c.mask(d)
        for cc in self.conditional_cuts:
            keep &= cc.mask(d)
        return keep


def default_preselection() -> CutSet:
    """Kinematic preselection favouring a hard-MET, single-lepton topology.

    Muon/electron thresholds differ, so the lepton requirements are expressed
    as cuts conditional on the `is_muon` flag; the dijet-angle veto applies
    only when a second hard jet is present.
    """
    return CutSet(
        cuts=(
            Cut("met", ">", 280.0),
            Cut("pt_jet1", ">", 110.0),
            Cut("eta_jet1", "abs<", 2.4),
            Cut("ht", ">", 200.0),
            Cut("pt_lep2", "<=", 20.0),  # veto additional lepton above 20 GeV
        ),
        conditional_cuts=(
            ConditionalCut(Cut("is_muon", ">=", 0.5), Cut("pt_lep", ">", 3.5)),
            ConditionalCut(Cut("is_muon", "<", 0.5), Cut("pt_lep", ">", 5.0)),
            ConditionalCut(Cut("is_muon", ">=", 0.5), Cut("eta_lep", "abs<", 2.4)),
            ConditionalCut(Cut("is_muon", "<", 0.5), Cut("eta_lep", "abs<", 2.5)),
            ConditionalCut(Cut("pt_jet2", ">", 60.0), Cut("dphi_j1j2", "<", 2.5)),
        ),
    )


def apply_preselection(d: Dataset, cuts: CutSet) -> Dataset:
    """Keep exactly the events passing every cut; event order is preserved."""
    for v in cuts.variables():
        if v not in d.schema:
            raise DataError(f"cut variable {v!r} absent from schema")
    return d.select(cuts.mask(d))


# ---------------------------------------------------------------------------
# Sample splitting
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SampleSplit:
    """Disjoint train/test/assess partition; train and test sizes differ by at most 1."""

    train: Dataset
    test: Dataset
    assess: Dataset
    seed: int


def split_samples(
    d: Dataset,
    seed: int,
    qa_fraction: float = 0.5,
    assess_processes: Sequence[str] = (),
) -> SampleSplit:
    """Split into assess and an annealing half, itself halved into train and test.

    A seeded uniform shuffle is followed by contiguous slicing, so the split
    is reproducible and independent of input order statistics. Events whose
    process is listed in `assess_processes` bypass the shuffle and are routed
    entirely to the assess sample.
    """
    if len(d) < 4:
        raise DataError("need at least 4 events to split")
    if not 0.0 < qa_fraction < 1.0:
        raise ConfigError("qa_fraction must be in (0, 1)")
    forced = np.isin(d.processes.astype(str), list(assess_processes))
    pool = np.flatnonzero(~forced)
    rng = np.random.default_rng(seed)
    perm = pool[rng.permutation(len(pool))]
    n_qa = int(round(qa_fraction * len(perm)))
    qa, assess_idx = perm[:n_qa], perm[n_qa:]
    train_idx, test_idx = qa[: n_qa // 2], qa[n_qa // 2:]
    assess_idx = np.concatenate([assess_idx, np.flatnonzero(forced)])
    return SampleSplit(
        train=d.select(train_idx),
        test=d.select(test_idx),
        assess=d.select(assess_idx),
        seed=seed,
    )


# ---------------------------------------------------------------------------
# Ready-made generator specs
# ---------------------------------------------------------------------------


def two_gaussian_spec(
    variables: Sequence[str],
    signal_means: Sequence[float],
    background_means: Sequence[float],
    sigmas: Sequence[float] | float = 1.0,
    signal_fraction: float = 0.4,
    s_tot: float = 7_000.0,
    b_tot: float = 200_000.0,
) -> GeneratorSpec:
    """Minimal two-class spec: independent Gaussians per variable, one background process."""
    k = len(variables)
    sig = np.broadcast_to(np.asarray(sigmas, dtype=float), (k,))
    cov = tuple(map(tuple, np.diag(sig**2)))
    return GeneratorSpec(
        schema=tuple(variables),
        processes={
            "signal": ProcessModel(tuple(float(m) for m in signal_means), cov),
            "wjets": ProcessModel(tuple(float(m) for m in background_means), cov),
        },
        signal_fraction=signal_fraction,
        background_fractions={"wjets": 1.0},
        s_tot=s_tot,
        b_tot=b_tot,
    )


def default_generator_spec(
    s_tot: float = 7_000.0,
    b_tot: float = 200_000.0,
    signal_fraction: float = 0.4,
    wjets_fraction: float = 0.5,
) -> GeneratorSpec:
    """Stand-in for the simulated search samples: 12 discriminating variables
    plus the preselection-only columns, with a dialed signal/background
    separation and mild kinematic correlations.

    The numbers below are artifact defaults chosen so that most events pass
    the default preselection and no single variable separates perfectly.
    """
    schema = BASE_VARIABLES + PRESELECTION_VARIABLES
    #               ptl  etal  ql   met   mt   njet ptj1  ht  discb  nb  ptb  drlb | etaj1 ismu ptl2 ptj2 dphi
    mean_sig = [45.0, 0.0, 0.1, 430.0, 150.0, 3.6, 310.0, 560.0, 0.62, 1.3, 150.0, 1.7,
                0.0, 0.55, 4.0, 95.0, 1.45]
    mean_wj = [38.0, 0.0, 0.2, 345.0, 95.0, 3.0, 280.0, 470.0, 0.38, 0.7, 110.0, 2.1,
               0.0, 0.55, 5.0, 85.0, 1.65]
    mean_tt = [42.0, 0.0, 0.0, 330.0, 110.0, 4.4, 265.0, 520.0, 0.72, 1.7, 135.0, 1.5,
               0.0, 0.55, 9.0, 100.0, 1.60]
    sigma = [18.0, 1.2, 0.9, 80.0, 55.0, 1.3, 95.0, 150.0, 0.22, 0.9, 60.0, 0.8,
             1.1, 0.6, 7.0, 45.0, 0.75]

    corr = np.eye(len(schema))

    def couple(a: str, b: str, rho: float):
        i, j = schema.index(a), schema.index(b)
        corr[i, j] = corr[j, i] = rho

    couple("ht", "pt_jet1", 0.55)
    couple("ht", "n_jets", 0.45)
    couple("met", "mt", 0.35)
    couple("disc_b", "n_b", 0.50)
    couple("pt_b", "ht", 0.30)
    couple("pt_jet2", "ht", 0.35)
    sig_arr = np.asarray(sigma)
    cov = corr * np.outer(sig_arr, sig_arr)
    # guarantee PSD after the hand-set correlations
    eigmin = float(np.linalg.eigvalsh(cov).min())
    if eigmin < 1e-9:
        cov = cov + (1e-9 - eigmin) * np.diag(sig_arr**2)
    cov_t = tuple(map(tuple, cov))

    bounds = {
        "pt_lep": (3.0, None), "met": (0.0, None), "mt": (0.0, None),
        "n_jets": (1.0, 10.0), "pt_jet1": (20.0, None), "ht": (30.0, None),
        "disc_b": (0.0, 1.0), "n_b": (0.0, 6.0), "pt_b": (0.0, None),
        "dr_lb": (0.0, None), "q_lep": (-1.0, 1.0), "is_muon": (0.0, 1.0),
        "pt_lep2": (0.0, None), "pt_jet2": (0.0, None), "dphi_j1j2": (0.0, np.pi),
    }
    return GeneratorSpec(
        schema=schema,
        processes={
            "signal": ProcessModel(tuple(mean_sig), cov_t),
            "wjets": ProcessModel(tuple(mean_wj), cov_t),
            "ttbar": ProcessModel(tuple(mean_tt), cov_t),
        },
        signal_fraction=signal_fraction,
        background_fractions={"wjets": wjets_fraction, "ttbar": 1.0 - wjets_fraction},
        s_tot=s_tot,
        b_tot=b_tot,
        bounds=bounds,
        integer_variables=("n_jets", "n_b", "q_lep", "is_muon"),
    )
