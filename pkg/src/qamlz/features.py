"""Variable transforms feeding the annealing classifier.

Two weak-classifier flavours are supported: a plain affine normalization to
[-1, 1] and a density-ratio transform that rescales each variable by the
per-bin weighted signal/background contrast, so each output retains the
discriminating shape of its input. Derived two-variable combinations and an
optional PCA rotation complete the feature pipeline.
"""

from __future__ import annotations

import collections
from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np

from .dataset import BASE_VARIABLES, Dataset
from .errors import ConfigError, DataError

#: denominator magnitudes below this yield 0 instead of dividing
DIVISION_GUARD = 1e-9

#: per-formula count of guarded divisions (diagnostic, resettable)
division_guard_counts: collections.Counter = collections.Counter()


def reset_division_guards() -> None:
    division_guard_counts.clear()


# ---------------------------------------------------------------------------
# Weak classifiers
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class WeakClassifierSet:
    """Per-variable transforms h_i with |h_i(x)| <= 1.

    mode "normalized": affine map of the training range onto [-1, 1], clamped.
    mode "density": the normalized value is looked up in a binned response
    (p_sig - p_bkg) / (p_sig + p_bkg) built from weighted training densities.
    Bins are half-open [lo, hi) with the last bin closed; a value on a shared
    edge belongs to the bin opening at that edge.
    """

    mode: str
    var_names: tuple[str, ...]
    lo: np.ndarray
    hi: np.ndarray
    edges: np.ndarray | None = None
    responses: np.ndarray | None = None
    constant_variables: tuple[str, ...] = ()

    def __post_init__(self):
        if self.mode not in ("normalized", "density"):
            raise ConfigError(f"unknown weak-classifier mode {self.mode!r}")
        for arr in ("lo", "hi", "edges", "responses"):
            a = getattr(self, arr)
            if a is not None:
                a.setflags(write=False)
        if self.mode == "density":
            if self.edges is None or self.responses is None:
                raise ConfigError("density mode requires edges and responses")
            if not (np.diff(self.edges) > 0).all():
                raise ConfigError("bin edges must be strictly increasing")
            if np.abs(self.responses).max(initial=0.0) > 1.0 + 1e-12:
                raise ConfigError("bin responses must lie in [-1, 1]")

    @property
    def n_classifiers(self) -> int:
        return len(self.var_names)

    def _normalize(self, x: np.ndarray) -> np.ndarray:
        span = self.hi - self.lo
        with np.errstate(divide="ignore", invalid="ignore"):
            scaled = np.where(span > 0, 2.0 * (x - self.lo) / span - 1.0, 0.0)
        return np.clip(scaled, -1.0, 1.0)

    def evaluate_matrix(self, x: np.ndarray) -> np.ndarray:
        """h values for a (n_events, n_var) raw-value matrix."""
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.n_classifiers:
            raise DataError(f"expected (n, {self.n_classifiers}) matrix, got {x.shape}")
        z = self._normalize(x)
        if self.mode == "normalized":
            return z
        n_bins = self.responses.shape[1]
        bins = np.clip(np.searchsorted(self.edges, z, side="right") - 1, 0, n_bins - 1)
        return self.responses[np.arange(self.n_classifiers)[None, :], bins]

    def evaluate_event(self, values: Mapping[str, float]) -> np.ndarray:
        missing = [v for v in self.var_names if v not in values]
        if missing:
            raise DataError(f"event missing fitted variables {missing}")
        row = np.array([[values[v] for v in self.var_names]], dtype=np.float64)
        return self.evaluate_matrix(row)[0]

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "var_names": list(self.var_names),
            "lo": [float(v) for v in self.lo],
            "hi": [float(v) for v in self.hi],
            "edges": None if self.edges is None else [float(v) for v in self.edges],
            "responses": None if self.responses is None
            else [[float(v) for v in row] for row in self.responses],
            "constant_variables": list(self.constant_variables),
        }

    @classmethod
    def from_dict(cls, doc: Mapping) -> "WeakClassifierSet":
        return cls(
            mode=doc["mode"],
            var_names=tuple(doc["var_names"]),
            lo=np.asarray(doc["lo"], dtype=np.float64),
            hi=np.asarray(doc["hi"], dtype=np.float64),
            edges=None if doc.get("edges") is None else np.asarray(doc["edges"], dtype=np.float64),
            responses=None if doc.get("responses") is None
            else np.asarray(doc["responses"], dtype=np.float64),
            constant_variables=tuple(doc.get("constant_variables", ())),
        )


def _ranges(train: Dataset, variables: Sequence[str]) -> tuple[np.ndarray, np.ndarray, list[str]]:
    x = train.matrix(variables)
    lo, hi = x.min(axis=0), x.max(axis=0)
    constant = [v for v, l, h in zip(variables, lo, hi) if l == h]
    return lo, hi, constant


def normalize_fit(train: Dataset, variables: Sequence[str] | None = None) -> WeakClassifierSet:
    """Affine [-1, 1] normalization fitted on training ranges; clamps outside."""
    if len(train) == 0:
        raise DataError("cannot fit on an empty dataset")
    variables = tuple(variables if variables is not None else train.schema)
    lo, hi, constant = _ranges(train, variables)
    return WeakClassifierSet(
        mode="normalized", var_names=variables, lo=lo, hi=hi,
        constant_variables=tuple(constant),
    )


def weak_fit(
    train: Dataset,
    n_bins: int = 50,
    variables: Sequence[str] | None = None,
) -> WeakClassifierSet:
    """Density-ratio weak classifiers fitted on weighted training histograms.

    Each variable is normalized to [-1, 1], then binned; the response of bin b
    is (p_sig(b) - p_bkg(b)) / (p_sig(b) + p_bkg(b)) with the class densities
    normalized to unit sum. Empty bins respond 0.
    """
    if len(train) == 0:
        raise DataError("cannot fit on an empty dataset")
    if n_bins < 2:
        raise ConfigError("n_bins must be >= 2")
    sig = train.tags == 1
    if not sig.any() or sig.all():
        raise DataError("density-ratio fit needs both signal and background events")
    variables = tuple(variables if variables is not None else train.schema)
    lo, hi, constant = _ranges(train, variables)
    base = WeakClassifierSet(mode="normalized", var_names=variables, lo=lo, hi=hi)
    z = base._normalize(train.matrix(variables))
    edges = np.linspace(-1.0, 1.0, n_bins + 1)
    responses = np.zeros((len(variables), n_bins))
    w = train.weights
    for j in range(len(variables)):
        hs, _ = np.histogram(z[sig, j], bins=edges, weights=w[sig])
        hb, _ = np.histogram(z[~sig, j], bins=edges, weights=w[~sig])
        ps = hs / hs.sum() if hs.sum() > 0 else hs
        pb = hb / hb.sum() if hb.sum() > 0 else hb
        tot = ps + pb
        with np.errstate(divide="ignore", invalid="ignore"):
            responses[j] = np.where(tot > 0, (ps - pb) / np.where(tot > 0, tot, 1.0), 0.0)
    return WeakClassifierSet(
        mode="density", var_names=variables, lo=lo, hi=hi,
        edges=edges, responses=responses, constant_variables=tuple(constant),
    )


def evaluate_h(ws: WeakClassifierSet, event) -> np.ndarray:
    """Vector of h_i values for one event (an Event or a name->value mapping)."""
    values = event.values if hasattr(event, "values") and not isinstance(event, Mapping) else event
    return ws.evaluate_event(values)


# ---------------------------------------------------------------------------
# Derived variables
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DerivedFormula:
    """Closed-form combination of two base variables."""

    name: str
    inputs: tuple[str, str]
    fn: Callable[[np.ndarray, np.ndarray], np.ndarray]

    def evaluate(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        return self.fn(np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64))


def _guarded_ratio(name: str):
    def fn(num: np.ndarray, den: np.ndarray) -> np.ndarray:
        guarded = np.abs(den) < DIVISION_GUARD
        if guarded.any():
            division_guard_counts[name] += int(guarded.sum())
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(guarded, 0.0, num / np.where(guarded, 1.0, den))
    return fn


_ratio_pt_met = _guarded_ratio("pt_lep_over_met")
_ratio_pt_jet = _guarded_ratio("pt_lep_over_pt_jet1")
_ratio_ht2 = _guarded_ratio("ht_sq_over_n_jets")
_ratio_pt_ht = _guarded_ratio("pt_lep_over_ht")

#: The nine published two-variable combinations, keyed by preset name.
DERIVED_PRESETS: dict[str, DerivedFormula] = {
    f.name: f
    for f in (
        DerivedFormula("pt_lep_over_met", ("pt_lep", "met"), _ratio_pt_met),
        DerivedFormula("pt_lep_over_pt_jet1", ("pt_lep", "pt_jet1"), _ratio_pt_jet),
        DerivedFormula("discb_shift_times_pt_b", ("disc_b", "pt_b"),
                       lambda a, b: (a - 1.0) * b),
        DerivedFormula("met_mt_window", ("met", "mt"),
                       lambda a, b: np.abs((a - 280.0) * (b - 80.0))),
        DerivedFormula("met_ht_window", ("met", "ht"),
                       lambda a, b: np.abs((a - 280.0) * (b - 400.0))),
        DerivedFormula("dr_lb_minus_mt_scaled", ("dr_lb", "mt"),
                       lambda a, b: a - b / 40.0),
        DerivedFormula("ht_sq_over_n_jets", ("ht", "n_jets"),
                       lambda a, b: _ratio_ht2(a * a, b)),
        # Which transverse momentum enters here is ambiguous in the source
        # material; the lepton pT is the most plausible reading.
        DerivedFormula("pt_lep_plus_eta_sq", ("pt_lep", "eta_lep"),
                       lambda a, b: a + 3.5 * b * b),
        DerivedFormula("pt_lep_over_ht", ("pt_lep", "ht"), _ratio_pt_ht),
    )
}

#: high-contrast presets (variable set "A" adds these to the base list)
SET_A_DERIVED = (
    "pt_lep_over_met",
    "pt_lep_over_pt_jet1",
    "discb_shift_times_pt_b",
    "met_mt_window",
    "met_ht_window",
)

#: lower-contrast presets (set "B" adds these on top of set "A")
SET_B_DERIVED = (
    "dr_lb_minus_mt_scaled",
    "ht_sq_over_n_jets",
    "pt_lep_plus_eta_sq",
    "pt_lep_over_ht",
)


def variable_set(selector: str | Sequence[str]) -> tuple[tuple[str, ...], tuple[str, ...], str]:
    """Resolve a named variable set to (variables, derived-presets, weak mode).

    "alpha" uses the base variables only normalized; "beta" the same variables
    through the density-ratio transform; "A" and "B" extend "beta" with derived
    combinations. A custom list selects those variables with density mode.
    """
    if not isinstance(selector, str):
        return tuple(selector), (), "density"
    key = selector.lower() if selector.lower() in ("alpha", "beta") else selector
    if key == "alpha":
        return BASE_VARIABLES, (), "normalized"
    if key == "beta":
        return BASE_VARIABLES, (), "density"
    if key == "A":
        return BASE_VARIABLES + SET_A_DERIVED, SET_A_DERIVED, "density"
    if key == "B":
        return (BASE_VARIABLES + SET_A_DERIVED + SET_B_DERIVED,
                SET_A_DERIVED + SET_B_DERIVED, "density")
    raise ConfigError(f"unknown variable set {selector!r} (expected alpha|beta|A|B or a list)")


def compute_derived(d: Dataset, formulas: Sequence[DerivedFormula | str]) -> Dataset:
    """Extend the dataset schema with derived columns, one per formula."""
    resolved: list[DerivedFormula] = []
    for f in formulas:
        if isinstance(f, str):
            if f not in DERIVED_PRESETS:
                raise ConfigError(f"unknown derived preset {f!r}")
            f = DERIVED_PRESETS[f]
        resolved.append(f)
    if not resolved:
        return d
    cols = np.empty((len(d), len(resolved)))
    for j, f in enumerate(resolved):
        a, b = f.inputs
        cols[:, j] = f.evaluate(d.column(a), d.column(b))
    return d.with_columns([f.name for f in resolved], cols)


# ---------------------------------------------------------------------------
# PCA
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PcaTransform:
    """Mean-centering plus rotation onto covariance eigenvectors (no truncation)."""

    mean: np.ndarray
    components: np.ndarray  # rows, descending eigenvalue order
    eigenvalues: np.ndarray

    def __post_init__(self):
        for a in (self.mean, self.components, self.eigenvalues):
            a.setflags(write=False)

    def to_dict(self) -> dict:
        return {
            "mean": [float(v) for v in self.mean],
            "components": [[float(v) for v in row] for row in self.components],
            "eigenvalues": [float(v) for v in self.eigenvalues],
        }

    @classmethod
    def from_dict(cls, doc: Mapping) -> "PcaTransform":
        return cls(
            mean=np.asarray(doc["mean"], dtype=np.float64),
            components=np.asarray(doc["components"], dtype=np.float64),
            eigenvalues=np.asarray(doc["eigenvalues"], dtype=np.float64),
        )


def fit_pca(matrix: np.ndarray) -> PcaTransform:
    """Eigendecomposition of the sample covariance (ddof=1), all components kept.

    Component signs are fixed so each row's largest-magnitude entry is
    positive, making the fit deterministic.
    """
    x = np.asarray(matrix, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 2:
        raise DataError("PCA needs a 2-D matrix with at least 2 rows")
    if not np.isfinite(x).all():
        raise DataError("PCA input must be finite")
    mean = x.mean(axis=0)
    cov = np.atleast_2d(np.cov(x, rowvar=False, ddof=1))
    w, v = np.linalg.eigh(cov)
    order = np.argsort(w)[::-1]
    w, v = w[order], v[:, order]
    comps = v.T.copy()
    for row in comps:
        if row[np.argmax(np.abs(row))] < 0:
            row *= -1.0
    return PcaTransform(mean=mean, components=comps, eigenvalues=np.clip(w, 0.0, None))


def apply_pca(t: PcaTransform, matrix: np.ndarray) -> np.ndarray:
    x = np.asarray(matrix, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != t.components.shape[1]:
        raise DataError("matrix width does not match the fitted PCA")
    return (x - t.mean) @ t.components.T


# ---------------------------------------------------------------------------
# Pipeline
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FeaturePipeline:
    """Derived columns -> variable selection -> optional PCA -> weak classifiers.

    `transform` produces the h-value matrix the annealing classifier consumes.
    The weak stage is fitted in the (possibly rotated) feature basis; its
    variable names are `pc_<k>` when PCA is active.
    """

    variables: tuple[str, ...]
    derived: tuple[str, ...]
    pca: PcaTransform | None
    weak: WeakClassifierSet

    @property
    def n_var(self) -> int:
        return self.weak.n_classifiers

    def _feature_matrix(self, d: Dataset) -> np.ndarray:
        needed = [f for f in self.derived if f not in d.schema]
        if needed:
            d = compute_derived(d, needed)
        return d.matrix(self.variables)

    def transform(self, d: Dataset) -> np.ndarray:
        x = self._feature_matrix(d)
        if self.pca is not None:
            x = apply_pca(self.pca, x)
        return self.weak.evaluate_matrix(x)

    def transform_values(self, values: Mapping[str, float]) -> np.ndarray:
        vals = dict(values)
        for name in self.derived:
            if name not in vals:
                f = DERIVED_PRESETS[name]
                vals[name] = float(f.evaluate(np.array([vals[f.inputs[0]]]),
                                              np.array([vals[f.inputs[1]]]))[0])
        missing = [v for v in self.variables if v not in vals]
        if missing:
            raise DataError(f"event missing variables {missing}")
        x = np.array([[vals[v] for v in self.variables]], dtype=np.float64)
        if self.pca is not None:
            x = apply_pca(self.pca, x)
        return self.weak.evaluate_matrix(x)[0]

    def to_dict(self) -> dict:
        return {
            "variables": list(self.variables),
            "derived": list(self.derived),
            "pca": None if self.pca is None else self.pca.to_dict(),
            "weak": self.weak.to_dict(),
        }

    @classmethod
    def from_dict(cls, doc: Mapping) -> "FeaturePipeline":
        return cls(
            variables=tuple(doc["variables"]),
            derived=tuple(doc["derived"]),
            pca=None if doc.get("pca") is None else PcaTransform.from_dict(doc["pca"]),
            weak=WeakClassifierSet.from_dict(doc["weak"]),
        )


def fit_feature_pipeline(
    train: Dataset,
    variables: Sequence[str],
    derived: Sequence[str] = (),
    weak_mode: str = "density",
    n_bins: int = 50,
    use_pca: bool = False,
) -> FeaturePipeline:
    """Fit every pipeline stage on the training sample only."""
    needed = [f for f in derived if f not in train.schema]
    fitted_train = compute_derived(train, needed) if needed else train
    x = fitted_train.matrix(variables)
    pca = fit_pca(x) if use_pca else None
    if pca is not None:
        x = apply_pca(pca, x)
        names = tuple(f"pc_{k:02d}" for k in range(x.shape[1]))
    else:
        names = tuple(variables)
    feat = Dataset(names, x, fitted_train.tags, fitted_train.weights, fitted_train.processes)
    if weak_mode == "normalized":
        weak = normalize_fit(feat, names)
    elif weak_mode == "density":
        weak = weak_fit(feat, n_bins=n_bins, variables=names)
    else:
        raise ConfigError(f"unknown weak mode {weak_mode!r}")
    return FeaturePipeline(
        variables=tuple(variables), derived=tuple(derived), pca=pca, weak=weak,
    )
