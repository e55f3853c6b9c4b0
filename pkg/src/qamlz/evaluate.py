"""Strong-classifier scoring and significance-based evaluation.

The selection metric is an expected-significance figure of merit that folds a
relative background systematic f into sigma_B = f*B; classifiers are compared
through the maximum of that figure over a cut scan on their output. Repeated
trainings differing only in seed quantify the run-to-run spread, and a
two-sample KS test per process guards against overtraining.
"""

from __future__ import annotations

import dataclasses
import math
import warnings
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
from scipy import stats

from .dataset import Dataset, SampleSplit
from .errors import ConfigError, DataError
from .zoom import TrainedModel, ZoomConfig, run_qamlz

#: Published maximal figures of merit of the derived-variable ranking,
#: recorded as reference metadata only (they depend on the original search
#: samples and are not reproduced on synthetic data).
REFERENCE_DERIVED_FOM: dict[str, float] = {
    "pt_lep_over_met": 0.35,
    "pt_lep_over_pt_jet1": 0.22,
    "discb_shift_times_pt_b": 0.20,
    "met_mt_window": 0.20,
    "met_ht_window": 0.18,
    "dr_lb_minus_mt_scaled": 0.12,
    "ht_sq_over_n_jets": 0.09,
    "pt_lep_plus_eta_sq": 0.08,
    "pt_lep_over_ht": 0.03,
}

#: Best published figure of merit of the reference boosted-decision-tree
#: selection, kept as a comparison constant.
REFERENCE_BDT_FOM = (1.44, 0.06)


@dataclass(frozen=True)
class FomParams:
    """f is the relative background systematic; the luminosity tag is metadata."""

    f: float = 0.20
    luminosity: str = "35.9 fb^-1"

    def __post_init__(self):
        if self.f < 0:
            raise ConfigError("relative background uncertainty f must be >= 0")


def asimov_significance(s: float, b: float) -> float:
    """Systematics-free limit sqrt(2((S+B)ln(1+S/B) - S))."""
    if b <= 0:
        raise ConfigError("background yield must be positive")
    if s < 0:
        raise ConfigError("signal yield must be non-negative")
    if s == 0:
        return 0.0
    return math.sqrt(2.0 * ((s + b) * math.log1p(s / b) - s))


def fom(s: float, b: float, params: FomParams | float = FomParams()) -> float:
    """Expected-significance figure of merit with background systematic f*B.

    The f -> 0 limit is returned analytically. A numerically negative radicand
    (possible only through cancellation) is clamped to 0 with a warning.
    """
    f = params.f if isinstance(params, FomParams) else float(params)
    if b <= 0:
        raise ConfigError("background yield must be positive")
    if s < 0:
        raise ConfigError("signal yield must be non-negative")
    if s == 0:
        return 0.0
    if f == 0:
        return asimov_significance(s, b)
    s2 = (f * b) ** 2
    t1 = (s + b) * math.log((s + b) * (b + s2) / (b * b + (s + b) * s2))
    t2 = (b * b / s2) * math.log1p(s2 * s / (b * (b + s2)))
    radicand = 2.0 * (t1 - t2)
    if radicand < 0:
        warnings.warn("negative figure-of-merit radicand clamped to 0", RuntimeWarning)
        return 0.0
    return math.sqrt(radicand)


def _fom_or_limit(s: float, b: float, f: float) -> float:
    """Curve value allowing the zero-background edge: +inf when only signal survives."""
    if s == 0.0:
        return 0.0
    if b <= 0.0:
        return math.inf
    return fom(s, b, f)


# ---------------------------------------------------------------------------
# Scoring
# ---------------------------------------------------------------------------


def strong_score(model: TrainedModel, event) -> float:
    """R(x) = sum_I mu_I c_I(x); bounded by sum|mu| / n_var."""
    values = event.values if hasattr(event, "values") and not isinstance(event, Mapping) else event
    h = model.pipeline.transform_values(values)
    signs = model.augmented_set().signs_from_h(h[None, :])[0]
    return float(signs @ (model.mu / model.n_var))


def score_events(model: TrainedModel, d: Dataset) -> np.ndarray:
    """Strong-classifier output for every event in the dataset."""
    h = model.pipeline.transform(d)
    signs = model.augmented_set().signs_from_h(h)
    return signs @ (model.mu / model.n_var)


# ---------------------------------------------------------------------------
# Cut scan
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FomCurve:
    """Figure of merit versus lower cut on the classifier output.

    Events strictly above the cut are kept. Cuts whose surviving unweighted
    counts fall below the validity floor are flagged invalid and excluded from
    the maximum; `best_cut` is None when no cut is valid.
    """

    cuts: np.ndarray
    fom_values: np.ndarray
    s_yields: np.ndarray
    b_yields: np.ndarray
    n_signal: np.ndarray
    n_background: np.ndarray
    valid: np.ndarray
    best_cut: float | None
    best_fom: float
    s_at_best: float
    b_at_best: float

    def __post_init__(self):
        for name in ("cuts", "fom_values", "s_yields", "b_yields",
                     "n_signal", "n_background", "valid"):
            getattr(self, name).setflags(write=False)

    @property
    def no_valid_cut(self) -> bool:
        return self.best_cut is None

    def rows(self) -> list[dict]:
        return [
            {
                "cut": float(self.cuts[i]),
                "fom": float(self.fom_values[i]),
                "s_yield": float(self.s_yields[i]),
                "b_yield": float(self.b_yields[i]),
                "n_signal": int(self.n_signal[i]),
                "n_background": int(self.n_background[i]),
                "valid": bool(self.valid[i]),
            }
            for i in range(len(self.cuts))
        ]

    def to_dict(self) -> dict:
        return {
            "best_cut": self.best_cut,
            "best_fom": self.best_fom,
            "s_at_best": self.s_at_best,
            "b_at_best": self.b_at_best,
            "no_valid_cut": self.no_valid_cut,
            "points": self.rows(),
        }

    def to_csv(self, path) -> None:
        """cut,fom,s_yield,b_yield,n_signal,n_background,valid rows."""
        import csv
        from pathlib import Path

        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(("cut", "fom", "s_yield", "b_yield",
                             "n_signal", "n_background", "valid"))
            for r in self.rows():
                writer.writerow([repr(r["cut"]), repr(r["fom"]), repr(r["s_yield"]),
                                 repr(r["b_yield"]), r["n_signal"],
                                 r["n_background"], int(r["valid"])])


def fom_scan(
    signal_scores: np.ndarray,
    signal_weights: np.ndarray,
    background_scores: np.ndarray,
    background_weights: np.ndarray,
    params: FomParams = FomParams(),
    grid: np.ndarray | None = None,
    grid_points: int = 201,
    min_counts: int = 20,
) -> FomCurve:
    """Scan the figure of merit over cuts on a score.

    The default grid is `grid_points` even steps across the pooled score
    range. S(c) and B(c) are the weighted yields with score > c; cuts keeping
    fewer than `min_counts` raw events in either class are marked invalid.
    """
    ss = np.asarray(signal_scores, dtype=np.float64)
    bs = np.asarray(background_scores, dtype=np.float64)
    sw = np.asarray(signal_weights, dtype=np.float64)
    bw = np.asarray(background_weights, dtype=np.float64)
    if len(ss) == 0 or len(bs) == 0:
        raise DataError("both signal and background samples must be non-empty")
    if grid is None:
        lo = float(min(ss.min(), bs.min()))
        hi = float(max(ss.max(), bs.max()))
        if lo == hi:
            lo, hi = lo - 1.0, hi + 1.0
        grid = np.linspace(lo, hi, grid_points)
    else:
        grid = np.sort(np.asarray(grid, dtype=np.float64))

    def survivors(scores, weights, cuts):
        order = np.argsort(scores, kind="stable")
        sorted_scores = scores[order]
        tail_w = np.concatenate([np.cumsum(weights[order][::-1])[::-1], [0.0]])
        pos = np.searchsorted(sorted_scores, cuts, side="right")
        return tail_w[pos], len(scores) - pos

    s_yields, n_sig = survivors(ss, sw, grid)
    b_yields, n_bkg = survivors(bs, bw, grid)
    values = np.array(
        [_fom_or_limit(s, b, params.f) for s, b in zip(s_yields, b_yields)]
    )
    valid = (n_sig >= min_counts) & (n_bkg >= min_counts)
    if valid.any():
        vi = np.flatnonzero(valid)
        best_i = vi[int(np.argmax(values[vi]))]
        best_cut = float(grid[best_i])
        best_fom = float(values[best_i])
        s_best, b_best = float(s_yields[best_i]), float(b_yields[best_i])
    else:
        best_cut, best_fom, s_best, b_best = None, math.nan, 0.0, 0.0
    return FomCurve(
        cuts=grid, fom_values=values, s_yields=s_yields, b_yields=b_yields,
        n_signal=n_sig.astype(np.int64), n_background=n_bkg.astype(np.int64),
        valid=valid, best_cut=best_cut, best_fom=best_fom,
        s_at_best=s_best, b_at_best=b_best,
    )


def fom_scan_dataset(
    model: TrainedModel,
    d: Dataset,
    params: FomParams = FomParams(),
    **kwargs,
) -> FomCurve:
    """Score a dataset with the model and scan the tags' weighted yields."""
    scores = score_events(model, d)
    sig = d.tags == 1
    if not sig.any() or sig.all():
        raise DataError("dataset must contain both signal and background events")
    return fom_scan(
        scores[sig], d.weights[sig], scores[~sig], d.weights[~sig], params, **kwargs
    )


# ---------------------------------------------------------------------------
# Run-to-run uncertainty
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class UncertaintyReport:
    max_foms: tuple[float, ...]
    mean: float
    std: float

    @classmethod
    def from_foms(cls, foms: Sequence[float]) -> "UncertaintyReport":
        arr = np.asarray(foms, dtype=np.float64)
        return cls(max_foms=tuple(float(v) for v in arr),
                   mean=float(arr.mean()), std=float(arr.std(ddof=1)))

    def to_dict(self) -> dict:
        return {"max_foms": list(self.max_foms), "mean": self.mean, "std": self.std}


def run_uncertainty(
    cfg: ZoomConfig,
    data: SampleSplit,
    pipeline,
    n_runs: int = 10,
    params: FomParams = FomParams(),
    min_counts: int = 20,
    grid_points: int = 201,
) -> UncertaintyReport:
    """Train `n_runs` models differing only in seed and report the sample mean
    and standard deviation of their maximal figures of merit on the assess sample."""
    if n_runs < 2:
        raise ConfigError("n_runs must be >= 2 for a defined standard deviation")
    foms = []
    for k in range(n_runs):
        run_cfg = dataclasses.replace(cfg, seed=cfg.seed + k)
        model = run_qamlz(data.train, data.test, pipeline, run_cfg)
        curve = fom_scan_dataset(model, data.assess, params,
                                 min_counts=min_counts, grid_points=grid_points)
        if curve.no_valid_cut:
            raise DataError("no valid cut on the assess sample; lower min_counts")
        foms.append(curve.best_fom)
    return UncertaintyReport.from_foms(foms)


# ---------------------------------------------------------------------------
# Overtraining check
# ---------------------------------------------------------------------------


def overtraining_check(
    train_scores: Mapping[str, np.ndarray],
    test_scores: Mapping[str, np.ndarray],
) -> dict[str, tuple[float, float]]:
    """Two-sample KS statistic and asymptotic p-value per class.

    Classes are compared wherever both samples are non-empty; a statistic near
    0 with a large p-value means the classifier responds alike to events it
    was and was not trained on.
    """
    out: dict[str, tuple[float, float]] = {}
    for name in train_scores:
        a = np.asarray(train_scores[name], dtype=np.float64)
        b = np.asarray(test_scores.get(name, ()), dtype=np.float64)
        if len(a) == 0 or len(b) == 0:
            continue
        r = stats.ks_2samp(a, b, method="asymp")
        out[name] = (float(r.statistic), float(r.pvalue))
    return out


def scores_by_process(model: TrainedModel, d: Dataset) -> dict[str, np.ndarray]:
    scores = score_events(model, d)
    procs = d.processes.astype(str)
    return {name: scores[procs == name] for name in np.unique(procs)}


# ---------------------------------------------------------------------------
# Auxiliary diagnostic
# ---------------------------------------------------------------------------


def auc(signal_scores: np.ndarray, background_scores: np.ndarray) -> float:
    """Unweighted area under the ROC curve, as a secondary diagnostic only;
    classifier selection goes through the figure of merit."""
    s = np.asarray(signal_scores, dtype=np.float64)
    b = np.asarray(background_scores, dtype=np.float64)
    if len(s) == 0 or len(b) == 0:
        raise DataError("both samples must be non-empty")
    pooled = np.concatenate([s, b])
    ranks = stats.rankdata(pooled)
    r_s = ranks[: len(s)].sum()
    return float((r_s - len(s) * (len(s) + 1) / 2.0) / (len(s) * len(b)))


# ---------------------------------------------------------------------------
# Raw-variable ranking
# ---------------------------------------------------------------------------


def rank_variables(
    d: Dataset,
    variables: Sequence[str],
    params: FomParams = FomParams(),
    min_counts: int = 20,
    grid_points: int = 201,
) -> list[tuple[str, float]]:
    """Rank variables by the best figure of merit a one-sided cut achieves.

    Both cut orientations are tried (a raw variable may prefer either tail)
    and the better one kept; the result is sorted by descending maximum.
    """
    sig = d.tags == 1
    if not sig.any() or sig.all():
        raise DataError("dataset must contain both signal and background events")
    ranked = []
    for name in variables:
        v = d.column(name)
        best = -math.inf
        for direction in (1.0, -1.0):
            curve = fom_scan(
                direction * v[sig], d.weights[sig],
                direction * v[~sig], d.weights[~sig],
                params, grid_points=grid_points, min_counts=min_counts,
            )
            if not curve.no_valid_cut and curve.best_fom > best:
                best = curve.best_fom
        ranked.append((name, best))
    ranked.sort(key=lambda kv: (-kv[1], kv[0]))
    return ranked
