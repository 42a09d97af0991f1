"""Verification-error metrics over quality scores.

The core protocol is the error-versus-discard curve: fix an acceptance
threshold ONCE from all impostor similarities at a target false match rate,
then progressively discard the lowest-quality fraction r of comparison
pairs (genuine and impostor ranked together) and report the false non-match
rate among the retained genuine pairs. The threshold never moves across r;
only FNMR is re-evaluated. Summary numbers are the trapezoidal area under
that curve, either over the full grid or over [0, 0.25] normalized by the
range.

File formats (line-oriented text, `#` comments ignored):
  pairs:     id_a<TAB>id_b<TAB>similarity<TAB>is_genuine(0|1)
  qualities: id<TAB>score
  curve out: header comments carrying threshold/fmr_target/auc/pauc25,
             then one `reject_fraction<TAB>fnmr` row per grid point.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, replace
from math import floor, isnan

import numpy as np
from scipy.stats import rankdata

from .errors import ContractError, FormatError

PAUC_DELTA = 0.25


# --- domain types -----------------------------------------------------------

@dataclass(frozen=True)
class VerificationPair:
    """One comparison: two sample ids, a similarity, and a genuine flag."""

    id_a: str
    id_b: str
    similarity: float
    is_genuine: bool
    quality_a: float = float("nan")
    quality_b: float = float("nan")

    def __post_init__(self):
        if not -1.0 <= self.similarity <= 1.0:
            raise ContractError(
                f"pair ({self.id_a}, {self.id_b}): similarity {self.similarity} outside [-1, 1]"
            )

    def pair_quality(self, rule: str = "min") -> float:
        if isnan(self.quality_a) or isnan(self.quality_b):
            raise ContractError(f"pair ({self.id_a}, {self.id_b}) has no quality attached")
        if rule == "min":
            return min(self.quality_a, self.quality_b)
        if rule == "mean":
            return 0.5 * (self.quality_a + self.quality_b)
        raise ContractError(f"unknown pair-quality rule {rule!r}")


@dataclass(frozen=True)
class EdcCurve:
    fmr_target: float
    threshold: float
    samples: tuple  # ((reject_fraction, fnmr), ...) with strictly increasing fractions
    auc: float
    pauc25: float
    # fractions where no genuine pair survived; their fnmr carries the previous value
    degenerate_fractions: tuple = ()


@dataclass(frozen=True)
class GroupStats:
    """Boxplot statistics of per-image mean cross-block distance at one level."""

    level: int
    q1: float
    median: float
    q3: float
    whisker_lo: float
    whisker_hi: float
    mean: float


# --- similarity and thresholds ----------------------------------------------

def cosine_similarity(a, b) -> np.float32:
    """a.b / (|a||b|), clamped to [-1, 1]. Zero vectors are rejected."""
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.shape != b.shape:
        raise ContractError(f"cosine_similarity shape mismatch: {a.shape} vs {b.shape}")
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        raise ContractError("cosine_similarity is undefined for zero vectors")
    return np.float32(np.clip(float(a @ b) / (na * nb), -1.0, 1.0))


def threshold_at_fmr(impostor_similarities, fmr_target: float) -> float:
    """Smallest threshold whose false match rate does not exceed the target.

    With scores sorted descending and k = floor(fmr_target * M), the
    threshold is the midpoint between scores[k] and the next distinct score
    above it, so exactly the scores strictly above scores[k] are accepted
    (at most k of them). If scores[k] already is the maximum, the threshold
    is one ulp above the maximum and the achieved rate is zero; the same
    happens, with a warning, when the target is below 1/M and therefore
    unreachable by any accepting threshold.
    """
    scores = sorted((float(s) for s in impostor_similarities), reverse=True)
    m = len(scores)
    if m == 0:
        raise ContractError("threshold_at_fmr needs at least one impostor similarity")
    if not 0.0 < fmr_target < 1.0:
        raise ContractError(f"fmr_target must be in (0, 1), got {fmr_target}")

    k = floor(fmr_target * m + 1e-12)
    if k < 1:
        warnings.warn(
            f"fmr_target {fmr_target} is below 1/{m}; returning a threshold above the "
            "maximum impostor similarity (achieved FMR 0)",
            RuntimeWarning,
            stacklevel=2,
        )
        return float(np.nextafter(scores[0], np.inf))
    boundary = scores[k]
    if boundary == scores[0]:
        return float(np.nextafter(scores[0], np.inf))
    # closest distinct score above the boundary
    above = min(s for s in scores[:k] if s > boundary)
    return 0.5 * (boundary + above)


# --- error-versus-discard ---------------------------------------------------

def default_reject_grid(n: int = 101):
    """n evenly spaced reject fractions covering [0, 1]."""
    if n < 2:
        raise ContractError(f"reject grid needs at least 2 points, got {n}")
    return [float(x) for x in np.linspace(0.0, 1.0, n)]


def _trapezoid(rs, fs) -> float:
    return float(np.trapezoid(np.asarray(fs, dtype=np.float64), np.asarray(rs, dtype=np.float64)))


def _pauc_from_samples(rs, fs, delta: float, normalized: bool) -> float:
    if delta <= 0.0:
        raise ContractError(f"pauc delta must be positive, got {delta}")
    if rs[-1] < delta:
        raise ContractError(f"curve ends at r={rs[-1]}, cannot integrate to delta={delta}")
    rs = np.asarray(rs, dtype=np.float64)
    fs = np.asarray(fs, dtype=np.float64)
    keep = rs < delta
    xs = np.concatenate([rs[keep], [delta]])
    ys = np.concatenate([fs[keep], [np.interp(delta, rs, fs)]])
    area = _trapezoid(xs, ys)
    return area / delta if normalized else area


def edc_curve(pairs, fmr_target: float, reject_grid=None, pair_quality: str = "min") -> EdcCurve:
    """Error-versus-discard curve at a fixed FMR-anchored threshold.

    At each grid fraction r the floor(r * total_pairs) lowest-quality pairs
    are discarded; genuine and impostor pairs are ranked together by pair
    quality with ties broken by (id_a, id_b). The floor gets a 1e-9 nudge so
    decimal grid fractions like 0.15 hit their intended integer counts
    despite binary representation. Fractions where no genuine pair survives
    carry the previous FNMR forward and are listed in degenerate_fractions.
    """
    pairs = list(pairs)
    genuine = [p for p in pairs if p.is_genuine]
    impostor = [p for p in pairs if not p.is_genuine]
    if not genuine or not impostor:
        raise ContractError(
            f"edc_curve needs both genuine and impostor pairs, got {len(genuine)} genuine "
            f"and {len(impostor)} impostor"
        )
    if reject_grid is None:
        reject_grid = default_reject_grid()
    grid = sorted({float(r) for r in reject_grid})
    if grid[0] < 0.0 or grid[-1] > 1.0:
        raise ContractError("reject fractions must lie in [0, 1]")

    threshold = threshold_at_fmr([p.similarity for p in impostor], fmr_target)

    total = len(pairs)
    order = sorted(
        range(total),
        key=lambda i: (pairs[i].pair_quality(pair_quality), pairs[i].id_a, pairs[i].id_b),
    )
    # genuine-error indicators in discard order, cumulative from the keep side
    is_gen = np.array([pairs[i].is_genuine for i in order])
    is_err = np.array([pairs[i].is_genuine and pairs[i].similarity < threshold for i in order])
    gen_left = np.concatenate([np.cumsum(is_gen[::-1])[::-1], [0]])   # genuine among order[k:]
    err_left = np.concatenate([np.cumsum(is_err[::-1])[::-1], [0]])

    samples = []
    degenerate = []
    prev_fnmr = float(err_left[0]) / float(gen_left[0])  # no-discard anchor
    for r in grid:
        k = int(floor(r * total + 1e-9))
        retained_genuine = int(gen_left[k])
        if retained_genuine == 0:
            degenerate.append(r)
            fnmr = prev_fnmr
        else:
            fnmr = float(err_left[k]) / float(retained_genuine)
            prev_fnmr = fnmr
        samples.append((r, fnmr))

    rs = [s[0] for s in samples]
    fs = [s[1] for s in samples]
    # a grid that stops before 0.25 has no pauc25; recorded as nan, not an error
    pauc25 = (_pauc_from_samples(rs, fs, PAUC_DELTA, normalized=True)
              if rs[-1] >= PAUC_DELTA else float("nan"))
    return EdcCurve(
        fmr_target=float(fmr_target),
        threshold=float(threshold),
        samples=tuple(samples),
        auc=_trapezoid(rs, fs),
        pauc25=pauc25,
        degenerate_fractions=tuple(degenerate),
    )


def auc(curve: EdcCurve) -> float:
    """Trapezoidal area under the curve over its full grid."""
    if len(curve.samples) < 2:
        raise ContractError("auc needs at least 2 curve samples")
    return _trapezoid([s[0] for s in curve.samples], [s[1] for s in curve.samples])


def pauc(curve: EdcCurve, delta: float = PAUC_DELTA, normalized: bool = True) -> float:
    """Trapezoidal area over [0, delta], divided by delta when normalized."""
    if len(curve.samples) < 2:
        raise ContractError("pauc needs at least 2 curve samples")
    return _pauc_from_samples(
        [s[0] for s in curve.samples], [s[1] for s in curve.samples], delta, normalized
    )


# --- statistics ---------------------------------------------------------------

def spearman(x, y) -> float:
    """Rank correlation with average ranks for ties."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ContractError(f"spearman needs two equal-length 1-D inputs, got {x.shape} and {y.shape}")
    if len(x) < 3:
        raise ContractError(f"spearman needs at least 3 points, got {len(x)}")
    if np.all(x == x[0]) or np.all(y == y[0]):
        raise ContractError("spearman is undefined for constant input")
    rx = rankdata(x)
    ry = rankdata(y)
    rx = rx - rx.mean()
    ry = ry - ry.mean()
    return float((rx @ ry) / np.sqrt((rx @ rx) * (ry @ ry)))


def group_distance_stats(groups) -> list:
    """Boxplot stats per level from (level, value) observations.

    Quartiles use linear interpolation between order statistics (the numpy
    default); whiskers sit at 1.5 IQR beyond the quartile box, clipped to
    the observed data range.
    """
    by_level = {}
    for level, value in groups:
        by_level.setdefault(int(level), []).append(float(value))
    if not by_level:
        raise ContractError("group_distance_stats needs at least one observation")
    out = []
    for level in sorted(by_level):
        values = np.asarray(by_level[level], dtype=np.float64)
        q1, median, q3 = np.quantile(values, [0.25, 0.5, 0.75])
        iqr = q3 - q1
        out.append(GroupStats(
            level=level,
            q1=float(q1),
            median=float(median),
            q3=float(q3),
            whisker_lo=float(max(values.min(), q1 - 1.5 * iqr)),
            whisker_hi=float(min(values.max(), q3 + 1.5 * iqr)),
            mean=float(values.mean()),
        ))
    return out


# --- file formats -------------------------------------------------------------

def _data_lines(path):
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n").rstrip("\r")
            if not line or line.startswith("#"):
                continue
            yield lineno, line


def read_pairs(path) -> list:
    """Parse `id_a<TAB>id_b<TAB>similarity<TAB>is_genuine(0|1)` rows."""
    pairs = []
    for lineno, line in _data_lines(path):
        fields = line.split("\t")
        if len(fields) != 4:
            raise FormatError(f"{path}:{lineno}: expected 4 tab-separated fields, got {len(fields)}")
        id_a, id_b, sim_s, flag_s = fields
        try:
            similarity = float(sim_s)
        except ValueError:
            raise FormatError(f"{path}:{lineno}: bad similarity {sim_s!r}") from None
        if flag_s not in ("0", "1"):
            raise FormatError(f"{path}:{lineno}: is_genuine must be 0 or 1, got {flag_s!r}")
        try:
            pairs.append(VerificationPair(id_a, id_b, similarity, flag_s == "1"))
        except ContractError as exc:
            raise FormatError(f"{path}:{lineno}: {exc}") from None
    if not pairs:
        raise FormatError(f"{path}: no pair rows found")
    return pairs


def read_qualities(path) -> dict:
    """Parse `id<TAB>score` rows into a dict; duplicate ids are rejected."""
    scores = {}
    for lineno, line in _data_lines(path):
        fields = line.split("\t")
        if len(fields) != 2:
            raise FormatError(f"{path}:{lineno}: expected 2 tab-separated fields, got {len(fields)}")
        sample_id, score_s = fields
        if sample_id in scores:
            raise FormatError(f"{path}:{lineno}: duplicate quality entry for id {sample_id!r}")
        try:
            scores[sample_id] = float(score_s)
        except ValueError:
            raise FormatError(f"{path}:{lineno}: bad score {score_s!r}") from None
    if not scores:
        raise FormatError(f"{path}: no quality rows found")
    return scores


def join_qualities(pairs, qualities: dict) -> list:
    """Attach per-id quality scores to pairs; missing ids are a hard error."""
    missing = sorted({
        sample_id
        for p in pairs
        for sample_id in (p.id_a, p.id_b)
        if sample_id not in qualities
    })
    if missing:
        raise ContractError(
            "pairs reference ids with no quality score: " + ", ".join(missing)
        )
    return [
        replace(p, quality_a=qualities[p.id_a], quality_b=qualities[p.id_b])
        for p in pairs
    ]


def write_edc_curve(curve: EdcCurve, path) -> None:
    """Write header comments plus `reject_fraction<TAB>fnmr` rows."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# fmr_target={curve.fmr_target!r}\n")
        fh.write(f"# threshold={curve.threshold!r}\n")
        fh.write(f"# auc={curve.auc!r}\n")
        fh.write(f"# pauc25={curve.pauc25!r}\n")
        if curve.degenerate_fractions:
            joined = ", ".join(repr(r) for r in curve.degenerate_fractions)
            fh.write(f"# degenerate_fractions={joined}\n")
        fh.write("# columns: reject_fraction\tfnmr\n")
        for r, fnmr in curve.samples:
            fh.write(f"{r!r}\t{fnmr!r}\n")
