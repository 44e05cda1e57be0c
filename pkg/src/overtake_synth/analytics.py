"""Summary statistics, rank correlation, association matrix and SBS ranking."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Callable, Mapping, Optional, Sequence

import numpy as np
from scipy import stats
from scipy.cluster import hierarchy
from scipy.spatial.distance import squareform

from .domain import ClassLabel, encode_categorical
from .errors import DegenerateColumn, EmptyDataset, EvaluatorFailure
from .features import FEATURE_COLUMNS, FeatureRow

OUTLIER_FENCE = 1.5


@dataclass(frozen=True)
class ClassSummary:
    feature: str
    label: ClassLabel
    min: float
    mean: float
    max: float
    sigma: float


@dataclass(frozen=True)
class BoxStats:
    q1: float
    median: float
    q3: float
    whisker_lo: float
    whisker_hi: float
    outliers: tuple[float, ...]


class Method(str, enum.Enum):
    SPEARMAN = "SPEARMAN"
    CORR_RATIO = "CORR_RATIO"
    CRAMERS_V = "CRAMERS_V"
    IDENTITY = "IDENTITY"


@dataclass(frozen=True)
class AssociationMatrix:
    columns: tuple[str, ...]
    entries: tuple[tuple[Optional[float], ...], ...]
    p_values: tuple[tuple[Optional[float], ...], ...]
    methods: tuple[tuple[Method, ...], ...]

    def cell(self, a: str, b: str) -> Optional[float]:
        return self.entries[self.columns.index(a)][self.columns.index(b)]

    def p(self, a: str, b: str) -> Optional[float]:
        return self.p_values[self.columns.index(a)][self.columns.index(b)]


def numeric_table(rows: Sequence[FeatureRow | Mapping]) -> list[dict]:
    """Rows as dicts with the categorical feature columns integer-encoded."""
    out = []
    for row in rows:
        d = row.as_dict() if isinstance(row, FeatureRow) else dict(row)
        if not isinstance(d.get("DN"), (int, np.integer)):
            d = encode_categorical(d)
        d["CLASS"] = ClassLabel(d["CLASS"])
        out.append(d)
    return out


# ---------------------------------------------------------------------------
# descriptive statistics

def class_stats(rows: Sequence[FeatureRow | Mapping], features: Sequence[str] = FEATURE_COLUMNS[:-1]) -> list[ClassSummary]:
    """Min / mean / max / population sigma of each feature within each class present."""
    if not rows:
        raise EmptyDataset("class_stats needs at least one row")
    table = numeric_table(rows)
    out = []
    for feature in features:
        for label in ClassLabel:
            values = [float(r[feature]) for r in table if r["CLASS"] is label]
            if not values:
                continue
            mean = math.fsum(values) / len(values)
            var = math.fsum((v - mean) ** 2 for v in values) / len(values)
            out.append(ClassSummary(feature, label, min(values), mean, max(values), math.sqrt(var)))
    return out


def minmax_scale(column: Sequence[float]) -> list[float]:
    x = np.asarray(column, dtype=float)
    lo, hi = x.min(), x.max()
    if hi == lo:
        return [0.0] * len(x)
    return ((x - lo) / (hi - lo)).tolist()


def histogram(column: Sequence[float], n_bins: int) -> tuple[list[float], list[int]]:
    """Equal-width bins over [min, max]; the last bin is closed on the right."""
    if n_bins < 1:
        raise ValueError("n_bins must be >= 1")
    counts, edges = np.histogram(np.asarray(column, dtype=float), bins=n_bins)
    return edges.tolist(), counts.tolist()


def boxplot_stats(column: Sequence[float]) -> BoxStats:
    x = np.sort(np.asarray(column, dtype=float))
    if x.size == 0:
        raise EmptyDataset("boxplot_stats needs at least one value")
    q1, med, q3 = np.percentile(x, [25, 50, 75])
    iqr = q3 - q1
    lo_fence, hi_fence = q1 - OUTLIER_FENCE * iqr, q3 + OUTLIER_FENCE * iqr
    inside = x[(x >= lo_fence) & (x <= hi_fence)]
    outliers = x[(x < lo_fence) | (x > hi_fence)]
    return BoxStats(float(q1), float(med), float(q3), float(inside.min()), float(inside.max()),
                    tuple(float(v) for v in outliers))


# ---------------------------------------------------------------------------
# rank correlation

def midranks(values: Sequence[float]) -> np.ndarray:
    """1-based ranks with tied values sharing the average of their positions."""
    x = np.asarray(values, dtype=float)
    order = np.argsort(x, kind="mergesort")
    ranks = np.empty(len(x), dtype=float)
    sx = x[order]
    i = 0
    while i < len(x):
        j = i
        while j + 1 < len(x) and sx[j + 1] == sx[i]:
            j += 1
        ranks[order[i:j + 1]] = (i + j) / 2 + 1
        i = j + 1
    return ranks


def spearman(x: Sequence[float], y: Sequence[float]) -> float:
    if len(x) != len(y):
        raise ValueError("spearman inputs differ in length")
    if len(x) < 3:
        raise ValueError("spearman needs at least 3 observations")
    rx, ry = midranks(x), midranks(y)
    dx, dy = rx - rx.mean(), ry - ry.mean()
    sxx, syy = float(dx @ dx), float(dy @ dy)
    if sxx == 0 or syy == 0:
        raise DegenerateColumn("constant input, rank correlation undefined")
    if np.array_equal(rx, ry):
        return 1.0
    if np.array_equal(rx, len(rx) + 1 - ry):
        return -1.0
    rho = float(dx @ dy) / math.sqrt(sxx * syy)
    return min(1.0, max(-1.0, rho))


def p_value_spearman(rho: float, n: int) -> float:
    """Two-sided p-value from the t approximation with n - 2 degrees of freedom."""
    if abs(rho) >= 1.0:
        return 0.0
    if n < 3:
        raise ValueError("need n >= 3")
    t = rho * math.sqrt((n - 2) / (1.0 - rho * rho))
    return float(min(1.0, 2.0 * stats.t.sf(abs(t), n - 2)))


def permutation_p_value(x: Sequence[float], y: Sequence[float], n_perm: int = 100_000,
                        rng: np.random.Generator | None = None, mid_p: bool = True) -> float:
    """Monte-Carlo two-sided p-value of the rank correlation under shuffling of ``y``.

    With ``mid_p`` the draws tying the observed statistic count half, which
    is the estimate a continuous approximation should be compared with.
    """
    rng = rng or np.random.default_rng(0)
    rx, ry = midranks(x), midranks(y)
    rx = rx - rx.mean()
    ry = ry - ry.mean()
    observed = abs(float(rx @ ry))
    perms = rng.permuted(np.tile(ry, (n_perm, 1)), axis=1)
    null = np.abs(perms @ rx)
    tol = 1e-9 * max(1.0, observed)
    above = np.count_nonzero(null > observed + tol)
    tied = np.count_nonzero(np.abs(null - observed) <= tol)
    return float((above + (0.5 if mid_p else 1.0) * tied) / n_perm)


# ---------------------------------------------------------------------------
# nominal associations

def correlation_ratio(categories: Sequence, values: Sequence[float]) -> float:
    """Eta: square root of between-group over total sum of squares."""
    y = np.asarray(values, dtype=float)
    cats = np.asarray(categories)
    levels = np.unique(cats)
    if len(levels) < 2:
        raise DegenerateColumn("single-level categorical")
    total = float(((y - y.mean()) ** 2).sum())
    if total == 0:
        raise DegenerateColumn("constant numeric column")
    between = sum(float((cats == lv).sum()) * (float(y[cats == lv].mean()) - float(y.mean())) ** 2 for lv in levels)
    return min(1.0, math.sqrt(between / total))


def _anova_p(categories: Sequence, values: Sequence[float]) -> float:
    y = np.asarray(values, dtype=float)
    cats = np.asarray(categories)
    levels = np.unique(cats)
    k, n = len(levels), len(y)
    between = sum(float((cats == lv).sum()) * (float(y[cats == lv].mean()) - float(y.mean())) ** 2 for lv in levels)
    within = sum(float(((y[cats == lv] - y[cats == lv].mean()) ** 2).sum()) for lv in levels)
    if n <= k:
        return 1.0
    if within == 0:
        return 0.0 if between > 0 else 1.0
    f = (between / (k - 1)) / (within / (n - k))
    return float(stats.f.sf(f, k - 1, n - k))


def _contingency(a: Sequence, b: Sequence) -> np.ndarray:
    la, ia = np.unique(np.asarray(a), return_inverse=True)
    lb, ib = np.unique(np.asarray(b), return_inverse=True)
    table = np.zeros((len(la), len(lb)))
    np.add.at(table, (ia, ib), 1)
    return table


def cramers_v(a: Sequence, b: Sequence) -> float:
    """Bias-uncorrected Cramér's V."""
    table = _contingency(a, b)
    r, c = table.shape
    if r < 2 or c < 2:
        raise DegenerateColumn("single-level categorical")
    chi2 = stats.chi2_contingency(table, correction=False)[0]
    return min(1.0, math.sqrt(chi2 / (table.sum() * (min(r, c) - 1))))


def _chi2_p(a: Sequence, b: Sequence) -> float:
    return float(stats.chi2_contingency(_contingency(a, b), correction=False)[1])


def associations(rows: Sequence[FeatureRow | Mapping], kinds: Mapping[str, str] | None = None,
                 cluster: bool = False) -> AssociationMatrix:
    """Pairwise association matrix mixing Spearman, eta and Cramér's V.

    ``kinds`` maps column name to ``"numeric"`` or ``"categorical"``; the
    default covers the feature table with DN/HL/TE/TP/CLASS categorical.
    Undefined cells (constant or single-level columns) are ``None``.
    """
    if not rows:
        raise EmptyDataset("associations needs rows")
    table = numeric_table(rows)
    if kinds is None:
        kinds = {c: ("categorical" if c in ("DN", "HL", "TE", "TP", "CLASS") else "numeric") for c in FEATURE_COLUMNS}
    cols = list(kinds)
    data = {c: [r[c].value if isinstance(r[c], enum.Enum) else r[c] for r in table] for c in cols}
    n = len(cols)
    entries = [[None] * n for _ in range(n)]
    pvals = [[None] * n for _ in range(n)]
    methods = [[Method.IDENTITY] * n for _ in range(n)]
    for i, a in enumerate(cols):
        entries[i][i], pvals[i][i] = 1.0, 0.0
        for j in range(i + 1, n):
            b = cols[j]
            ka, kb = kinds[a], kinds[b]
            try:
                if ka == kb == "numeric":
                    method = Method.SPEARMAN
                    rho = spearman(data[a], data[b])
                    e_ij = e_ji = rho
                    p = p_value_spearman(rho, len(table))
                elif ka == kb == "categorical":
                    method = Method.CRAMERS_V
                    e_ij = e_ji = cramers_v(data[a], data[b])
                    p = _chi2_p(data[a], data[b])
                else:
                    method = Method.CORR_RATIO
                    cat, num = (a, b) if ka == "categorical" else (b, a)
                    e_ij = e_ji = correlation_ratio(data[cat], data[num])
                    p = _anova_p(data[cat], data[num])
            except DegenerateColumn:
                e_ij = e_ji = p = None
            entries[i][j], entries[j][i] = e_ij, e_ji
            pvals[i][j] = pvals[j][i] = p
            methods[i][j] = methods[j][i] = method
    order = list(range(n))
    if cluster and n > 2:
        order = similarity_order(entries)
    return AssociationMatrix(
        columns=tuple(cols[k] for k in order),
        entries=tuple(tuple(entries[i][j] for j in order) for i in order),
        p_values=tuple(tuple(pvals[i][j] for j in order) for i in order),
        methods=tuple(tuple(methods[i][j] for j in order) for i in order),
    )


def similarity_order(entries: Sequence[Sequence[Optional[float]]]) -> list[int]:
    """Leaf order of an average-linkage clustering on 1 - |association|."""
    m = np.array([[0.0 if v is None else abs(v) for v in row] for row in entries])
    dist = np.clip(1.0 - m, 0.0, None)
    np.fill_diagonal(dist, 0.0)
    dist = (dist + dist.T) / 2
    link = hierarchy.linkage(squareform(dist, checks=False), method="average")
    return [int(i) for i in hierarchy.leaves_list(hierarchy.optimal_leaf_ordering(link, squareform(dist, checks=False)))]


# ---------------------------------------------------------------------------
# sequential backward selection

Evaluator = Callable[[tuple[str, ...]], float]


@dataclass(frozen=True)
class SBSResult:
    ranking: tuple[str, ...]
    """Features from most to least important."""
    removals: tuple[tuple[str, float], ...]
    """(feature removed, accuracy with the remaining set) in removal order."""
    calls: int


def nearest_centroid_evaluator(rows: Sequence[FeatureRow | Mapping]) -> Evaluator:
    """Leave-one-out nearest-centroid accuracy on min-max scaled columns."""
    table = numeric_table(rows)
    labels = np.array([r["CLASS"].value for r in table])
    scaled: dict[str, np.ndarray] = {}

    def column(name: str) -> np.ndarray:
        if name not in scaled:
            scaled[name] = np.asarray(minmax_scale([float(r[name]) for r in table]))
        return scaled[name]

    classes = np.unique(labels)
    onehot = (labels[:, None] == classes[None, :]).astype(float)
    counts = onehot.sum(axis=0)

    def evaluate(subset: tuple[str, ...]) -> float:
        x = np.column_stack([column(c) for c in subset])
        sums = onehot.T @ x
        own = np.argmax(onehot, axis=1)
        # remove each sample from its own class centroid
        loo_counts = np.repeat(counts[None, :], len(x), axis=0)
        loo_counts[np.arange(len(x)), own] -= 1
        loo_sums = np.repeat(sums[None, :, :], len(x), axis=0)
        loo_sums[np.arange(len(x)), own] -= x
        with np.errstate(invalid="ignore", divide="ignore"):
            centroids = loo_sums / loo_counts[:, :, None]
        d = ((centroids - x[:, None, :]) ** 2).sum(axis=2)
        d[loo_counts == 0] = np.inf
        pred = np.argmin(d, axis=1)
        return float(np.mean(pred == own))

    return evaluate


def sbs_rank(rows: Sequence[FeatureRow | Mapping] | None, evaluator: Evaluator | None = None,
             features: Sequence[str] | None = None) -> SBSResult:
    """Greedy backward elimination: drop the feature whose loss hurts accuracy least.

    Ties are broken toward the earlier feature in ``features`` order.
    """
    if features is None:
        features = [c for c in FEATURE_COLUMNS if c != "CLASS"]
    current = list(features)
    if len(current) < 2:
        raise ValueError("sbs_rank needs at least two features")
    if evaluator is None:
        evaluator = nearest_centroid_evaluator(rows)
    calls = 0
    removals = []
    while len(current) > 1:
        best = None
        for f in current:
            subset = tuple(c for c in current if c != f)
            try:
                acc = float(evaluator(subset))
            except Exception as exc:  # surfaced with the subset that broke
                raise EvaluatorFailure(subset, exc) from exc
            calls += 1
            if not 0.0 <= acc <= 1.0:
                raise EvaluatorFailure(subset, f"accuracy {acc} outside [0, 1]")
            if best is None or acc > best[1]:
                best = (f, acc)
        current.remove(best[0])
        removals.append(best)
    ranking = tuple([current[0]] + [f for f, _ in reversed(removals)])
    return SBSResult(ranking, tuple(removals), calls)
