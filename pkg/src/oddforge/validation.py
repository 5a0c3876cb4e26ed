"""Monte-Carlo validation of a derived ODD against known ground truth.

A synthetic ground truth (box plus polynomial inequalities) provides anchors
by rejection sampling. The derived ODD is then scored on uniform samples
from the box doubled about its centre. Precision and recall over a sweep of
affinity thresholds are computed twice: once against the ground truth and
once against the convex hull of the anchors. Close agreement between the two
(measured by R^2) supports using the hull as a proxy when no ground truth
exists.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import linprog

from .derivation import DerivationConfig, derive
from .errors import ConfigError, InfeasibleRegionError, UndefinedRSquaredError
from .geometry import ConvexPolytope, GroundTruthOdd, OddPolytope, PolynomialInequality, build_convex_hull
from .kernel import Dataset
from .rng import Pcg64Stream

log = logging.getLogger(__name__)

__all__ = [
    "DEFAULT_GRID",
    "McConfig",
    "ConfusionCounts",
    "PrCurve",
    "CountResult",
    "McResult",
    "sample_anchors",
    "sample_validation",
    "doubled_box",
    "confusion_at",
    "pr_sweep",
    "r_squared",
    "run_monte_carlo",
    "VCAS_NAMES",
    "VCAS_LOWER",
    "VCAS_UPPER",
]

DEFAULT_GRID = tuple(k / 100 for k in range(101))

# Taxonomy of the vertical collision-avoidance use case:
# relative altitude [m], ownship and intruder vertical rate [m/s],
# time to closest approach [s], previous advisory index.
VCAS_NAMES = ("h", "hdot_own", "hdot_int", "tau", "s_adv")
VCAS_LOWER = (-1500.0, -26.0, 0.0, 0.0, 0.0)
VCAS_UPPER = (1500.0, 26.0, 0.0, 40.0, 8.0)

_MIN_ACCEPTANCE = 1e-4


def doubled_box(lower, upper) -> tuple[np.ndarray, np.ndarray]:
    lo = np.asarray(lower, dtype=np.float64)
    hi = np.asarray(upper, dtype=np.float64)
    center = (lo + hi) / 2
    width = hi - lo
    return center - width, center + width


@dataclass(frozen=True)
class McConfig:
    """One Monte-Carlo experiment.

    ``integer_axes`` lists coordinates whose anchors are drawn from the
    integers inside the box (categorical parameters). Validation samples are
    always continuous.
    """

    ground_truth: GroundTruthOdd
    lower: tuple
    upper: tuple
    anchor_counts: tuple
    n_validation: int
    seed: int
    derivation: DerivationConfig
    threshold_grid: tuple = DEFAULT_GRID
    integer_axes: tuple = ()

    def __post_init__(self):
        lo = tuple(float(v) for v in self.lower)
        hi = tuple(float(v) for v in self.upper)
        n = self.ground_truth.dimension
        if len(lo) != n or len(hi) != n:
            raise ConfigError(f"box bounds must have length {n}")
        if any(a > b for a, b in zip(lo, hi)):
            raise ConfigError("box lower bound exceeds upper bound")
        counts = tuple(int(c) for c in self.anchor_counts)
        if not counts:
            raise ConfigError("anchor_counts must not be empty")
        for c in counts:
            if c < n + 1:
                raise ConfigError(
                    f"anchor count {c} is too small: the hull needs at least {n + 1} points in {n}-D"
                )
        if int(self.n_validation) < 1:
            raise ConfigError("n_validation must be >= 1")
        grid = tuple(float(z) for z in self.threshold_grid)
        if not grid or any(not 0.0 <= z <= 1.0 for z in grid) or any(
            b <= a for a, b in zip(grid, grid[1:])
        ):
            raise ConfigError("threshold grid must be strictly increasing within [0, 1]")
        for k in self.integer_axes:
            if not 0 <= int(k) < n:
                raise ConfigError(f"integer axis {k} out of range")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)
        object.__setattr__(self, "anchor_counts", counts)
        object.__setattr__(self, "n_validation", int(self.n_validation))
        object.__setattr__(self, "threshold_grid", grid)
        object.__setattr__(self, "integer_axes", tuple(int(k) for k in self.integer_axes))

    @classmethod
    def from_box(cls, lower, upper, relationships: Sequence[PolynomialInequality] = (), **kw):
        gt = GroundTruthOdd(OddPolytope((ConvexPolytope.box(lower, upper),)), tuple(relationships))
        return cls(ground_truth=gt, lower=tuple(lower), upper=tuple(upper), **kw)

    @property
    def dimension(self) -> int:
        return self.ground_truth.dimension

    @property
    def validation_box(self) -> tuple[np.ndarray, np.ndarray]:
        return doubled_box(self.lower, self.upper)


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    @property
    def precision(self) -> Optional[float]:
        return self.tp / (self.tp + self.fp) if self.tp + self.fp else None

    @property
    def recall(self) -> float:
        return self.tp / (self.tp + self.fn) if self.tp + self.fn else 0.0


@dataclass(frozen=True)
class PrCurve:
    thresholds: tuple
    precision: tuple  # None where nothing is predicted positive
    recall: tuple
    counts: tuple
    reference: str = "ground_truth"
    degenerate_truth: bool = False


def _bounding_box(gt: GroundTruthOdd) -> tuple[np.ndarray, np.ndarray]:
    n = gt.dimension
    lo = np.full(n, np.inf)
    hi = np.full(n, -np.inf)
    for part in gt.taxonomy.parts:
        for k in range(n):
            c = np.zeros(n)
            c[k] = 1.0
            for sign in (1.0, -1.0):
                res = linprog(sign * c, A_ub=part.A, b_ub=part.b, bounds=[(None, None)] * n, method="highs")
                if res.status != 0:
                    raise InfeasibleRegionError(
                        f"taxonomy part is empty or unbounded along axis {k}: {res.message}"
                    )
                v = res.x[k]
                lo[k] = min(lo[k], v)
                hi[k] = max(hi[k], v)
    return lo, hi


def sample_anchors(
    gt: GroundTruthOdd,
    count: int,
    rng: Pcg64Stream,
    box: Optional[tuple] = None,
    integer_axes: Sequence[int] = (),
) -> np.ndarray:
    """``count`` points uniform over the feasible region of ``gt``.

    Candidates come uniformly from ``box`` (the taxonomy's bounding box when
    omitted) and are kept when ``gt`` contains them.

    Raises
    ------
    InfeasibleRegionError
        When fewer than 1 in 10^4 candidates of a probe batch are accepted.
    """
    lo, hi = (np.asarray(b, dtype=np.float64) for b in box) if box is not None else _bounding_box(gt)
    n = gt.dimension
    batch = max(4096, 2 * int(count))
    kept: list[np.ndarray] = []
    have = 0
    while have < count:
        cand = rng.uniform_box(lo, hi, batch)
        for k in integer_axes:
            cand[:, k] = rng.integers(int(np.ceil(lo[k])), int(np.floor(hi[k])), batch)
        ok = gt.contains_many(cand)
        accepted = int(ok.sum())
        if accepted < _MIN_ACCEPTANCE * batch:
            raise InfeasibleRegionError(
                f"only {accepted} of {batch} candidates satisfy the ground truth; "
                "the feasible region is empty or too thin to sample"
            )
        kept.append(cand[ok])
        have += accepted
    out = np.concatenate(kept)[:count]
    return out.reshape(count, n)


def sample_validation(cfg: McConfig, rng: Pcg64Stream) -> np.ndarray:
    lo, hi = cfg.validation_box
    return rng.uniform_box(lo, hi, cfg.n_validation)


def confusion_at(affinities, truth, zeta: float) -> ConfusionCounts:
    a = np.asarray(affinities, dtype=np.float64).reshape(-1)
    t = np.asarray(truth, dtype=bool).reshape(-1)
    if a.shape != t.shape:
        raise ConfigError(f"length mismatch: {a.shape[0]} affinities vs {t.shape[0]} labels")
    pred = a >= zeta
    tp = int(np.count_nonzero(pred & t))
    fp = int(np.count_nonzero(pred & ~t))
    fn = int(np.count_nonzero(~pred & t))
    return ConfusionCounts(tp, fp, a.shape[0] - tp - fp - fn, fn)


def pr_sweep(affinities, truth, grid: Sequence[float] = DEFAULT_GRID, reference: str = "ground_truth") -> PrCurve:
    """Precision and recall at each threshold of ``grid``.

    Precision is ``None`` where no sample is predicted positive. When the
    truth has no positives, recall is reported as 0 and the curve is flagged
    ``degenerate_truth``; a truth with no negatives is flagged as well.
    """
    a = np.asarray(affinities, dtype=np.float64).reshape(-1)
    t = np.asarray(truth, dtype=bool).reshape(-1)
    if a.shape != t.shape:
        raise ConfigError(f"length mismatch: {a.shape[0]} affinities vs {t.shape[0]} labels")
    if t.size == 0:
        raise ConfigError("cannot sweep an empty truth vector")
    pos = np.sort(a[t])
    neg = np.sort(a[~t])
    z = np.asarray(grid, dtype=np.float64)
    tp = pos.size - np.searchsorted(pos, z, side="left")
    fp = neg.size - np.searchsorted(neg, z, side="left")
    counts = tuple(
        ConfusionCounts(int(p), int(f), int(neg.size - f), int(pos.size - p)) for p, f in zip(tp, fp)
    )
    degenerate = pos.size == 0 or neg.size == 0
    if pos.size == 0:
        log.warning("truth has no positive samples; recall reported as 0")
    return PrCurve(
        thresholds=tuple(float(v) for v in z),
        precision=tuple(c.precision for c in counts),
        recall=tuple(c.recall for c in counts),
        counts=counts,
        reference=reference,
        degenerate_truth=degenerate,
    )


def r_squared(reference_curve, other_curve) -> float:
    """Coefficient of determination of ``other_curve`` against ``reference_curve``.

    Grid points where either curve is ``None`` are dropped from both.
    """
    if len(reference_curve) != len(other_curve):
        raise ConfigError("curves must have equal length")
    pairs = [(y, f) for y, f in zip(reference_curve, other_curve) if y is not None and f is not None]
    if len(pairs) < 2:
        raise UndefinedRSquaredError("need at least two grid points where both curves are defined")
    y = np.array([p[0] for p in pairs], dtype=np.float64)
    f = np.array([p[1] for p in pairs], dtype=np.float64)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    if ss_tot == 0.0:
        raise UndefinedRSquaredError("reference curve is constant; R^2 is undefined")
    ss_res = float(np.sum((y - f) ** 2))
    return 1.0 - ss_res / ss_tot


def _r2_or_none(y, f) -> Optional[float]:
    try:
        return r_squared(y, f)
    except UndefinedRSquaredError as exc:
        log.warning("R^2 undefined: %s", exc)
        return None


@dataclass
class CountResult:
    anchor_count: int
    curve_odd: PrCurve
    curve_hull: PrCurve
    r2_precision: Optional[float]
    r2_recall: Optional[float]
    runtime_s: float
    hull_minus_truth: int = 0


@dataclass
class McResult:
    thresholds: tuple
    per_count: list = field(default_factory=list)
    mean: dict = field(default_factory=dict)
    std: dict = field(default_factory=dict)
    r2_precision: Optional[float] = None
    r2_recall: Optional[float] = None
    runtime_s: float = 0.0

    SERIES = ("precision_odd", "recall_odd", "precision_hull", "recall_hull")

    def results_rows(self) -> list[list]:
        rows = []
        for cr in self.per_count:
            for i, z in enumerate(self.thresholds):
                rows.append([
                    cr.anchor_count, z,
                    cr.curve_odd.precision[i], cr.curve_odd.recall[i],
                    cr.curve_hull.precision[i], cr.curve_hull.recall[i],
                    None, None, None, None,
                ])
        for i, z in enumerate(self.thresholds):
            rows.append(
                ["mean", z]
                + [self.mean[s][i] for s in self.SERIES]
                + [self.std[s][i] for s in self.SERIES]
            )
        return rows

    RESULT_COLUMNS = (
        "anchor_count", "zeta",
        "precision_odd", "recall_odd", "precision_hull", "recall_hull",
        "precision_odd_std", "recall_odd_std", "precision_hull_std", "recall_hull_std",
    )
    SUMMARY_COLUMNS = ("anchor_count", "r2_precision", "r2_recall")

    def summary_rows(self) -> list[list]:
        rows = [[cr.anchor_count, cr.r2_precision, cr.r2_recall] for cr in self.per_count]
        rows.append(["mean", self.r2_precision, self.r2_recall])
        return rows


def _mean_std(curves: list[tuple]) -> tuple[list, list]:
    means, stds = [], []
    for col in zip(*curves):
        vals = [v for v in col if v is not None]
        if vals:
            arr = np.array(vals)
            means.append(float(arr.mean()))
            stds.append(float(arr.std()))
        else:
            means.append(None)
            stds.append(None)
    return means, stds


def run_monte_carlo(cfg: McConfig) -> McResult:
    """Full pipeline for every anchor count in ``cfg``.

    All random draws happen up front from one seeded stream: validation
    samples first, then one anchor set per count in schedule order.
    """
    t_start = time.perf_counter()
    rng = Pcg64Stream(cfg.seed)
    gt = cfg.ground_truth
    probes = sample_validation(cfg, rng)
    anchor_sets = [
        sample_anchors(gt, c, rng, box=(cfg.lower, cfg.upper), integer_axes=cfg.integer_axes)
        for c in cfg.anchor_counts
    ]
    truth = gt.contains_many(probes)
    grid = cfg.threshold_grid

    result = McResult(thresholds=grid)
    for count, anchors in zip(cfg.anchor_counts, anchor_sets):
        t0 = time.perf_counter()
        model, _ = derive(Dataset(cfg.dimension, anchors), cfg.derivation)
        hull = build_convex_hull(anchors, flat_axes="equality")
        aff = model.affinities(probes)
        in_hull = hull.contains_many(probes)
        c_odd = pr_sweep(aff, truth, grid, reference="ground_truth")
        c_hull = pr_sweep(aff, in_hull, grid, reference="hull")
        cr = CountResult(
            anchor_count=count,
            curve_odd=c_odd,
            curve_hull=c_hull,
            r2_precision=_r2_or_none(c_odd.precision, c_hull.precision),
            r2_recall=_r2_or_none(c_odd.recall, c_hull.recall),
            runtime_s=time.perf_counter() - t0,
            hull_minus_truth=int(np.count_nonzero(in_hull & ~truth)),
        )
        log.info("anchors=%d r2_precision=%s r2_recall=%s (%.2fs)",
                 count, cr.r2_precision, cr.r2_recall, cr.runtime_s)
        result.per_count.append(cr)

    for name, pick in (
        ("precision_odd", lambda cr: cr.curve_odd.precision),
        ("recall_odd", lambda cr: cr.curve_odd.recall),
        ("precision_hull", lambda cr: cr.curve_hull.precision),
        ("recall_hull", lambda cr: cr.curve_hull.recall),
    ):
        result.mean[name], result.std[name] = _mean_std([pick(cr) for cr in result.per_count])
    result.r2_precision = _r2_or_none(result.mean["precision_odd"], result.mean["precision_hull"])
    result.r2_recall = _r2_or_none(result.mean["recall_odd"], result.mean["recall_hull"])
    result.runtime_s = time.perf_counter() - t_start
    return result


def vcas_config(n_anchors: int, n_validation: int, seed: int, derivation: DerivationConfig) -> McConfig:
    """Surrogate of the collision-avoidance use case: uniform anchors over its taxonomy."""
    return McConfig.from_box(
        VCAS_LOWER,
        VCAS_UPPER,
        (),
        anchor_counts=(n_anchors,),
        n_validation=n_validation,
        seed=seed,
        derivation=derivation,
        integer_axes=(4,),
    )
